#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "refgame/nn/parameters.hpp"

namespace refgame::nn {

/// Gaussian init with standard deviation `scale / sqrt(fan_in)`.
void init_scaled_normal(Matrix& m, double scale, Eigen::Index fan_in, std::mt19937_64& rng);

/// Column-wise log-softmax. Entries equal to -inf stay -inf.
Matrix log_softmax_columns(const Matrix& logits);

Matrix relu(const Matrix& x);

/// y = W x + b, columns are batch items.
struct Dense {
  std::size_t weight = 0;
  std::size_t bias = 0;

  static Dense create(ParameterSet& p, const std::string& name, Eigen::Index in, Eigen::Index out);
  void init(ParameterSet& p, std::mt19937_64& rng) const;
  Matrix forward(const ParameterSet& p, const Matrix& x) const;
  /// Accumulates dW, db into `g`; returns dL/dx.
  Matrix backward(const ParameterSet& p, ParameterSet& g, const Matrix& x, const Matrix& dy) const;
};

struct BatchNormCache {
  Matrix normalized;
  Vector mean;
  Vector inv_std;
};

/// Per-feature normalization over the batch (training) or running statistics (inference).
struct BatchNorm {
  std::size_t gamma = 0;
  std::size_t beta = 0;
  std::size_t running_mean = 0;
  std::size_t running_var = 0;
  static constexpr double kEpsilon = 1e-5;

  static BatchNorm create(ParameterSet& p, const std::string& name, Eigen::Index features);
  Matrix forward(const ParameterSet& p, const Matrix& x, bool training, BatchNormCache* cache) const;
  Matrix backward(const ParameterSet& p, ParameterSet& g, const BatchNormCache& cache, const Matrix& dy) const;
  void update_running(ParameterSet& p, const BatchNormCache& cache, double momentum) const;
};

struct HeadCache {
  std::vector<Matrix> inputs;       // input of each dense layer
  std::vector<Matrix> pre_relu;     // after dense (+ norm), before ReLU
  std::vector<BatchNormCache> norms;
};

/// Stack of Dense [-> BatchNorm] -> ReLU layers mapping image features into a model space.
struct ProjectionHead {
  std::vector<Dense> layers;
  std::vector<BatchNorm> norms;  // empty when batch norm is off

  static ProjectionHead create(ParameterSet& p, const std::string& name, const std::vector<Eigen::Index>& dims,
                               bool batch_norm);
  void init(ParameterSet& p, std::mt19937_64& rng) const;
  Matrix forward(const ParameterSet& p, const Matrix& x, bool training, HeadCache* cache) const;
  Matrix backward(const ParameterSet& p, ParameterSet& g, const HeadCache& cache, const Matrix& dy) const;
  void update_running(ParameterSet& p, const HeadCache& cache, double momentum = 0.9) const;
};

struct LstmState {
  Matrix h;
  Matrix c;
};

struct LstmStepCache {
  Matrix x, h_prev, c_prev;
  Matrix i, f, g, o, tanh_c;
  RowVector mask;
};

/// Long short-term memory cell, gate order (input, forget, candidate, output):
///   a = W x + U h' + b
///   i = sigmoid(a_i), f = sigmoid(a_f), g = tanh(a_g), o = sigmoid(a_o)
///   c = f * c' + i * g,  h = o * tanh(c)
/// Columns whose mask is 0 carry (h', c') through unchanged.
struct Lstm {
  std::size_t w = 0;
  std::size_t u = 0;
  std::size_t b = 0;
  Eigen::Index input_dim = 0;
  Eigen::Index hidden = 0;

  static Lstm create(ParameterSet& p, const std::string& name, Eigen::Index input, Eigen::Index hidden);
  /// Forget-gate bias starts at 1.
  void init(ParameterSet& p, std::mt19937_64& rng) const;

  LstmState zero_state(Eigen::Index batch) const;
  LstmState step(const ParameterSet& p, const Matrix& x, const LstmState& prev, const RowVector* mask = nullptr,
                 LstmStepCache* cache = nullptr) const;
  /// Backprop through one step. `dh`, `dc` are gradients w.r.t. the step's
  /// outputs; on return they hold gradients w.r.t. the previous state.
  Matrix step_backward(const ParameterSet& p, ParameterSet& g, const LstmStepCache& cache, Matrix& dh,
                       Matrix& dc) const;
};

}  // namespace refgame::nn
