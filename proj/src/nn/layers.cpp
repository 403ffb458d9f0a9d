#include "refgame/nn/layers.hpp"

#include <cmath>
#include <limits>

#include "refgame/error.hpp"

namespace refgame::nn {

namespace {

Matrix sigmoid(const Matrix& a) {
  return a.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

void check_rows(const Matrix& x, Eigen::Index rows, const char* what) {
  if (x.rows() != rows) {
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": got " + std::to_string(x.rows()) +
                                              " rows, expected " + std::to_string(rows));
  }
}

}  // namespace

void init_scaled_normal(Matrix& m, double scale, Eigen::Index fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, scale / std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, fan_in))));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = normal(rng);
  }
}

Matrix log_softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double mx = logits.col(j).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) sum += std::exp(logits(i, j) - mx);
    const double lse = mx + std::log(sum);
    out.col(j) = logits.col(j).array() - lse;
  }
  return out;
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

// ------------------------------------------------------------------ Dense

Dense Dense::create(ParameterSet& p, const std::string& name, Eigen::Index in, Eigen::Index out) {
  Dense d;
  d.weight = p.add(name + ".weight", out, in);
  d.bias = p.add(name + ".bias", out, 1);
  return d;
}

void Dense::init(ParameterSet& p, std::mt19937_64& rng) const {
  init_scaled_normal(p[weight], std::sqrt(2.0), p[weight].cols(), rng);
  p[bias].setZero();
}

Matrix Dense::forward(const ParameterSet& p, const Matrix& x) const {
  check_rows(x, p[weight].cols(), "dense input");
  return (p[weight] * x).colwise() + p[bias].col(0);
}

Matrix Dense::backward(const ParameterSet& p, ParameterSet& g, const Matrix& x, const Matrix& dy) const {
  g[weight].noalias() += dy * x.transpose();
  g[bias].col(0) += dy.rowwise().sum();
  return p[weight].transpose() * dy;
}

// ------------------------------------------------------------------ BatchNorm

BatchNorm BatchNorm::create(ParameterSet& p, const std::string& name, Eigen::Index features) {
  BatchNorm bn;
  bn.gamma = p.add(name + ".gamma", features, 1);
  bn.beta = p.add(name + ".beta", features, 1);
  bn.running_mean = p.add(name + ".running_mean", features, 1, false);
  bn.running_var = p.add(name + ".running_var", features, 1, false);
  p[bn.gamma].setOnes();
  p[bn.running_var].setOnes();
  return bn;
}

Matrix BatchNorm::forward(const ParameterSet& p, const Matrix& x, bool training, BatchNormCache* cache) const {
  Vector mean, inv_std;
  if (training) {
    const double n = static_cast<double>(x.cols());
    mean = x.rowwise().sum() / n;
    const Matrix centered = x.colwise() - mean;
    const Vector var = centered.array().square().rowwise().sum() / n;
    inv_std = (var.array() + kEpsilon).rsqrt();
  } else {
    mean = p[running_mean].col(0);
    inv_std = (p[running_var].col(0).array() + kEpsilon).rsqrt();
  }
  Matrix normalized = (x.colwise() - mean).array().colwise() * inv_std.array();
  Matrix y = (normalized.array().colwise() * p[gamma].col(0).array()).colwise() + p[beta].col(0).array();
  if (cache) *cache = {std::move(normalized), std::move(mean), std::move(inv_std)};
  return y;
}

Matrix BatchNorm::backward(const ParameterSet& p, ParameterSet& g, const BatchNormCache& cache, const Matrix& dy) const {
  const double n = static_cast<double>(dy.cols());
  g[gamma].col(0) += (dy.array() * cache.normalized.array()).rowwise().sum().matrix();
  g[beta].col(0) += dy.rowwise().sum();
  const Matrix dnorm = dy.array().colwise() * p[gamma].col(0).array();
  const Vector sum_d = dnorm.rowwise().sum();
  const Vector sum_dx = (dnorm.array() * cache.normalized.array()).rowwise().sum();
  Matrix dx = (n * dnorm).colwise() - sum_d;
  dx -= (cache.normalized.array().colwise() * sum_dx.array()).matrix();
  return (dx.array().colwise() * (cache.inv_std.array() / n)).matrix();
}

void BatchNorm::update_running(ParameterSet& p, const BatchNormCache& cache, double momentum) const {
  const Vector var = (cache.inv_std.array().square().inverse() - kEpsilon).matrix();
  p[running_mean].col(0) = momentum * p[running_mean].col(0) + (1.0 - momentum) * cache.mean;
  p[running_var].col(0) = momentum * p[running_var].col(0) + (1.0 - momentum) * var;
}

// ------------------------------------------------------------------ ProjectionHead

ProjectionHead ProjectionHead::create(ParameterSet& p, const std::string& name, const std::vector<Eigen::Index>& dims,
                                      bool batch_norm) {
  ProjectionHead head;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const std::string layer = name + ".fc" + std::to_string(k + 1);
    head.layers.push_back(Dense::create(p, layer, dims[k], dims[k + 1]));
    if (batch_norm) head.norms.push_back(BatchNorm::create(p, layer + ".bn", dims[k + 1]));
  }
  return head;
}

void ProjectionHead::init(ParameterSet& p, std::mt19937_64& rng) const {
  for (const auto& d : layers) d.init(p, rng);
}

Matrix ProjectionHead::forward(const ParameterSet& p, const Matrix& x, bool training, HeadCache* cache) const {
  if (cache) *cache = {};
  Matrix h = x;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (cache) cache->inputs.push_back(h);
    Matrix a = layers[k].forward(p, h);
    if (!norms.empty()) {
      BatchNormCache bn;
      a = norms[k].forward(p, a, training, &bn);
      if (cache) cache->norms.push_back(std::move(bn));
    }
    h = relu(a);
    if (cache) cache->pre_relu.push_back(std::move(a));
  }
  return h;
}

Matrix ProjectionHead::backward(const ParameterSet& p, ParameterSet& g, const HeadCache& cache, const Matrix& dy) const {
  Matrix d = dy;
  for (std::size_t k = layers.size(); k-- > 0;) {
    d = d.cwiseProduct((cache.pre_relu[k].array() > 0.0).cast<double>().matrix());
    if (!norms.empty()) d = norms[k].backward(p, g, cache.norms[k], d);
    d = layers[k].backward(p, g, cache.inputs[k], d);
  }
  return d;
}

void ProjectionHead::update_running(ParameterSet& p, const HeadCache& cache, double momentum) const {
  for (std::size_t k = 0; k < norms.size(); ++k) norms[k].update_running(p, cache.norms[k], momentum);
}

// ------------------------------------------------------------------ Lstm

Lstm Lstm::create(ParameterSet& p, const std::string& name, Eigen::Index input, Eigen::Index hidden) {
  Lstm l;
  l.input_dim = input;
  l.hidden = hidden;
  l.w = p.add(name + ".w", 4 * hidden, input);
  l.u = p.add(name + ".u", 4 * hidden, hidden);
  l.b = p.add(name + ".b", 4 * hidden, 1);
  return l;
}

void Lstm::init(ParameterSet& p, std::mt19937_64& rng) const {
  init_scaled_normal(p[w], 1.0, input_dim, rng);
  init_scaled_normal(p[u], 1.0, hidden, rng);
  p[b].setZero();
  p[b].block(hidden, 0, hidden, 1).setOnes();
}

LstmState Lstm::zero_state(Eigen::Index batch) const {
  return {Matrix::Zero(hidden, batch), Matrix::Zero(hidden, batch)};
}

LstmState Lstm::step(const ParameterSet& p, const Matrix& x, const LstmState& prev, const RowVector* mask,
                     LstmStepCache* cache) const {
  check_rows(x, input_dim, "lstm input");
  check_rows(prev.h, hidden, "lstm state");
  Matrix a = p[w] * x;
  a.noalias() += p[u] * prev.h;
  a.colwise() += p[b].col(0);
  const Eigen::Index H = hidden;
  Matrix i = sigmoid(a.topRows(H));
  Matrix f = sigmoid(a.middleRows(H, H));
  Matrix g = a.middleRows(2 * H, H).array().tanh().matrix();
  Matrix o = sigmoid(a.bottomRows(H));
  Matrix c = f.cwiseProduct(prev.c) + i.cwiseProduct(g);
  Matrix tanh_c = c.array().tanh().matrix();
  Matrix h = o.cwiseProduct(tanh_c);
  if (mask) {
    for (Eigen::Index col = 0; col < h.cols(); ++col) {
      if ((*mask)(col) == 0.0) {
        h.col(col) = prev.h.col(col);
        c.col(col) = prev.c.col(col);
      }
    }
  }
  if (cache) {
    cache->x = x;
    cache->h_prev = prev.h;
    cache->c_prev = prev.c;
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->g = std::move(g);
    cache->o = std::move(o);
    cache->tanh_c = std::move(tanh_c);
    cache->mask = mask ? *mask : RowVector::Ones(x.cols());
  }
  return {std::move(h), std::move(c)};
}

Matrix Lstm::step_backward(const ParameterSet& p, ParameterSet& grads, const LstmStepCache& k, Matrix& dh,
                           Matrix& dc) const {
  const Eigen::Index H = hidden;
  const auto m = k.mask.replicate(H, 1).array();
  const Matrix dh_new = (dh.array() * m).matrix();
  Matrix dc_new = (dc.array() * m).matrix();
  const Matrix dh_carry = (dh.array() * (1.0 - m)).matrix();
  const Matrix dc_carry = (dc.array() * (1.0 - m)).matrix();

  const Matrix d_o = dh_new.cwiseProduct(k.tanh_c);
  dc_new += (dh_new.array() * k.o.array() * (1.0 - k.tanh_c.array().square())).matrix();
  const Matrix d_i = dc_new.cwiseProduct(k.g);
  const Matrix d_g = dc_new.cwiseProduct(k.i);
  const Matrix d_f = dc_new.cwiseProduct(k.c_prev);

  Matrix da(4 * H, dh.cols());
  da.topRows(H) = (d_i.array() * k.i.array() * (1.0 - k.i.array())).matrix();
  da.middleRows(H, H) = (d_f.array() * k.f.array() * (1.0 - k.f.array())).matrix();
  da.middleRows(2 * H, H) = (d_g.array() * (1.0 - k.g.array().square())).matrix();
  da.bottomRows(H) = (d_o.array() * k.o.array() * (1.0 - k.o.array())).matrix();

  grads[w].noalias() += da * k.x.transpose();
  grads[u].noalias() += da * k.h_prev.transpose();
  grads[b].col(0) += da.rowwise().sum();

  dc = dc_new.cwiseProduct(k.f) + dc_carry;
  dh = p[u].transpose() * da + dh_carry;
  return p[w].transpose() * da;
}

}  // namespace refgame::nn
