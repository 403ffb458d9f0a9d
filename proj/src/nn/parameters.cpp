#include "refgame/nn/parameters.hpp"

#include "refgame/error.hpp"

namespace refgame::nn {

std::size_t ParameterSet::add(const std::string& name, Eigen::Index rows, Eigen::Index cols, bool trainable) {
  if (!index_.emplace(name, values_.size()).second) {
    throw Error(ErrorCode::InvalidArgument, "duplicate parameter " + name);
  }
  names_.push_back(name);
  values_.push_back(Matrix::Zero(rows, cols));
  trainable_.push_back(trainable);
  return values_.size() - 1;
}

std::size_t ParameterSet::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::InvalidArgument, "no parameter named " + name);
  return it->second;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (std::size_t i = 0; i < values_.size(); ++i) out.add(names_[i], values_[i].rows(), values_[i].cols(), trainable_[i]);
  return out;
}

void ParameterSet::set_zero() {
  for (auto& v : values_) v.setZero();
}

bool ParameterSet::all_finite() const {
  for (const auto& v : values_) {
    if (!v.allFinite()) return false;
  }
  return true;
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i].rows() != other.values_[i].rows() || values_[i].cols() != other.values_[i].cols()) return false;
  }
  return true;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

void ParameterSet::round_to_float() {
  for (auto& v : values_) v = v.unaryExpr([](double x) { return static_cast<double>(static_cast<float>(x)); });
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  if (!same_layout(other)) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i] != other.values_[i]) return false;
  }
  return true;
}

}  // namespace refgame::nn
