#include "s2pnm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "s2pnm/error.hpp"

namespace s2pnm {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    throw DataError("tensor data length " + std::to_string(data_.size()) +
                    " does not match shape " + shape_string());
  }
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DataError("matmul shape mismatch: " + a.shape_string() + " x " + b.shape_string());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a.at(i, p);
      if (aip == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * b.at(p, j);
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DataError("transpose needs a matrix, got " + a.shape_string());
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

namespace {

Tensor map(const Tensor& x, double (*f)(double)) {
  Tensor out = x;
  for (double& v : out.values()) v = f(v);
  return out;
}

}  // namespace

Tensor tanh(const Tensor& x) { return map(x, [](double v) { return std::tanh(v); }); }
Tensor sigmoid(const Tensor& x) { return map(x, [](double v) { return sigmoid(v); }); }
Tensor relu(const Tensor& x) { return map(x, [](double v) { return relu(v); }); }

double activate(Activation a, double x) {
  switch (a) {
    case Activation::kRelu: return relu(x);
    case Activation::kSigmoid: return sigmoid(x);
    case Activation::kTanh: return std::tanh(x);
  }
  return x;
}

double activate_grad(Activation a, double x) {
  switch (a) {
    case Activation::kRelu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::kSigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::kTanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "' (expected relu, sigmoid or tanh)");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kTanh: return "tanh";
  }
  return "?";
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor out({fan_in, fan_out});
  for (double& v : out.values()) v = rng.uniform(-limit, limit);
  return out;
}

Tensor orthogonalize(const Tensor& w) {
  if (w.rank() != 2 || w.rows() != w.cols()) {
    throw DataError("orthogonalize needs a square matrix, got " + w.shape_string());
  }
  const std::size_t n = w.rows();
  // Modified Gram-Schmidt over columns, applied twice for full working
  // precision. Each column keeps its component along the original direction,
  // so R's diagonal is positive.
  std::vector<std::vector<double>> q(n, std::vector<double>(n));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) q[j][i] = w.at(i, j);

  for (std::size_t j = 0; j < n; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        const double r = dot(q[k], q[j]);
        axpy(-r, q[k], q[j]);
      }
    }
    double norm = std::sqrt(dot(q[j], q[j]));
    if (norm < 1e-300) {
      // Rank-deficient input: substitute the first unit vector that is
      // independent of the columns so far.
      for (std::size_t e = 0; e < n && norm < 1e-8; ++e) {
        std::fill(q[j].begin(), q[j].end(), 0.0);
        q[j][e] = 1.0;
        for (int pass = 0; pass < 2; ++pass)
          for (std::size_t k = 0; k < j; ++k) axpy(-dot(q[k], q[j]), q[k], q[j]);
        norm = std::sqrt(dot(q[j], q[j]));
      }
    }
    for (double& v : q[j]) v /= norm;
  }

  Tensor out({n, n});
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < n; ++i) out.at(i, j) = q[j][i];
  return out;
}

Tensor orthogonal_init(std::size_t n, Rng& rng) {
  return orthogonalize(glorot_uniform(n, n, rng));
}

std::vector<double> dropout_mask(std::size_t n, double p_drop, Mode mode, Rng& rng) {
  std::vector<double> mask(n, 1.0);
  if (mode == Mode::kEval || p_drop <= 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - p_drop);
  for (double& m : mask) m = rng.uniform() < p_drop ? 0.0 : keep_scale;
  return mask;
}

DropoutResult dropout(const Tensor& x, double p_drop, Mode mode, Rng& rng) {
  if (p_drop < 0.0 || p_drop >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  std::vector<double> mask = dropout_mask(x.size(), p_drop, mode, rng);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return {std::move(out), Tensor(x.shape(), std::move(mask))};
}

void vec_mat_acc(std::span<const double> x, const Tensor& w, std::span<double> y) {
  const std::size_t out = w.cols();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* wr = w.values().data() + i * out;
    for (std::size_t j = 0; j < out; ++j) y[j] += xi * wr[j];
  }
}

void vec_mat_backward(std::span<const double> x, const Tensor& w,
                      std::span<const double> dy, Tensor& dw, std::span<double> dx) {
  const std::size_t out = w.cols();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double* wr = w.values().data() + i * out;
    double* dwr = dw.values().data() + i * out;
    const double xi = x[i];
    double acc = 0.0;
    for (std::size_t j = 0; j < out; ++j) {
      dwr[j] += xi * dy[j];
      acc += wr[j] * dy[j];
    }
    if (!dx.empty()) dx[i] += acc;
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

ParamSlot::ParamSlot(std::string n, Tensor v)
    : name(std::move(n)),
      value(std::move(v)),
      grad(value.shape()),
      adam_m(value.shape()),
      adam_v(value.shape()) {}

void adam_update(std::span<double> value, std::span<const double> grad,
                 std::span<double> m, std::span<double> v, std::int64_t step,
                 const AdamConfig& cfg) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = grad[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    value[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

void adam_step(ParamSlot& slot, const AdamConfig& cfg) {
  ++slot.adam_t;
  adam_update(slot.value.values(), slot.grad.values(), slot.adam_m.values(),
              slot.adam_v.values(), slot.adam_t, cfg);
}

}  // namespace s2pnm
