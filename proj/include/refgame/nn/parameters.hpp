#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace refgame::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline Vector to_vector(std::span<const float> row) {
  Vector v(static_cast<Eigen::Index>(row.size()));
  for (std::size_t i = 0; i < row.size(); ++i) v(static_cast<Eigen::Index>(i)) = row[i];
  return v;
}

/// Ordered named tensors. Non-trainable entries (batch-norm running
/// statistics) travel with checkpoints but are skipped by optimizers and
/// gradient checks.
class ParameterSet {
 public:
  std::size_t add(const std::string& name, Eigen::Index rows, Eigen::Index cols, bool trainable = true);

  std::size_t size() const { return values_.size(); }
  std::size_t index(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Matrix& operator[](std::size_t i) { return values_[i]; }
  const Matrix& operator[](std::size_t i) const { return values_[i]; }
  Matrix& at(const std::string& name) { return values_[index(name)]; }
  const Matrix& at(const std::string& name) const { return values_[index(name)]; }

  const std::string& name(std::size_t i) const { return names_[i]; }
  bool trainable(std::size_t i) const { return trainable_[i]; }

  /// Same names and shapes, all zeros.
  ParameterSet zeros_like() const;
  void set_zero();
  bool all_finite() const;
  bool same_layout(const ParameterSet& other) const;
  std::size_t scalar_count() const;

  /// Rounds every entry to the nearest float32 so float32 checkpoints are exact.
  void round_to_float();

  bool operator==(const ParameterSet& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::vector<bool> trainable_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace refgame::nn
