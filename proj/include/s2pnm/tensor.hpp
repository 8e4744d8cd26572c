#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "s2pnm/rng.hpp"

namespace s2pnm {

/// Dense row-major array of doubles. Rank-1 tensors are vectors, rank-2 are
/// matrices indexed (row, col).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  void fill(double v);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Softmax with max-subtraction.
std::vector<double> softmax(std::span<const double> x);

double sigmoid(double x);
double relu(double x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);

enum class Activation : std::uint8_t { kRelu = 0, kSigmoid = 1, kTanh = 2 };

double activate(Activation a, double x);
/// Derivative expressed through the pre-activation x.
double activate_grad(Activation a, double x);
Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);

/// Entries i.i.d. uniform in [-L, L], L = sqrt(6 / (rows + cols)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Q factor of a QR decomposition of a square matrix, with R's diagonal
/// positive. Columns of the result are orthonormal.
Tensor orthogonalize(const Tensor& w);
/// orthogonalize(glorot_uniform(n, n)).
Tensor orthogonal_init(std::size_t n, Rng& rng);

enum class Mode { kTrain, kEval };

struct DropoutResult {
  Tensor output;
  /// Per-entry multiplier: 0 for dropped entries, 1/(1-p) for survivors.
  Tensor mask;
};

/// Inverted dropout; identity in eval mode or when p == 0.
DropoutResult dropout(const Tensor& x, double p_drop, Mode mode, Rng& rng);
std::vector<double> dropout_mask(std::size_t n, double p_drop, Mode mode, Rng& rng);

// ---------------------------------------------------------------------------
// Row-vector times matrix kernels. The model stores every weight as
// [in x out] and computes y = x^T W; these are the forward and vector-Jacobian
// products for that convention.

/// y += x^T W
void vec_mat_acc(std::span<const double> x, const Tensor& w, std::span<double> y);
/// dW += x dy^T ; dx += W dy
void vec_mat_backward(std::span<const double> x, const Tensor& w,
                      std::span<const double> dy, Tensor& dw, std::span<double> dx);

double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

/// One learnable tensor with its gradient and Adam moments.
struct ParamSlot {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  std::int64_t adam_t = 0;

  ParamSlot(std::string n, Tensor v);
};

/// Bias-corrected Adam update over raw spans; `step` is the 1-based count
/// after this update.
void adam_update(std::span<double> value, std::span<const double> grad,
                 std::span<double> m, std::span<double> v, std::int64_t step,
                 const AdamConfig& cfg);

/// Applies one Adam step to the slot and increments its counter. The caller
/// zeroes the gradient before the next accumulation.
void adam_step(ParamSlot& slot, const AdamConfig& cfg);

}  // namespace s2pnm
