#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "s2pnm/corpus.hpp"
#include "s2pnm/estimator.hpp"
#include "s2pnm/tensor.hpp"

namespace s2pnm {

/// Static preferences: b_g + b_i + b_j + u_i . v_j
struct MfParams {
  Tensor user_factors;  // [m x d_user]
  Tensor item_factors;  // [n x d_user]
  Tensor user_bias;     // [m]
  Tensor item_bias;     // [n]
  double global_mean = 0.0;

  std::size_t num_users() const { return user_factors.rows(); }
  std::size_t num_items() const { return item_factors.rows(); }
  std::size_t d_user() const { return user_factors.cols(); }
};

/// Glorot-initialized factors, zero biases. Rows of users/items flagged
/// unseen start (and, receiving no gradient, stay) at zero, which is the
/// cold-start fallback to b_g plus whatever bias is known.
MfParams init_mf(std::size_t m, std::size_t n, std::size_t d_user, double global_mean,
                 const std::vector<bool>& seen_users, const std::vector<bool>& seen_items,
                 Rng& rng);

double predict_static(const MfParams& p, std::size_t user, std::size_t item);

struct MfConfig {
  std::size_t d_user = 50;
  double lr = 0.005;
  double l2 = 0.01;
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  std::uint64_t seed = 1;
  AdamConfig adam{};  // lr is taken from `lr`
  double lr_decay = 1.0;
  std::size_t decay_every_epochs = 5;
  Task task = Task::kRating;
  NegativeSampling negatives{};
};

struct MfEpoch {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;  // full objective after the epoch
  double train_rmse = 0.0;  // on the positive training events
  std::optional<double> val_metric;
  double lr = 0.0;
};

struct MfTrainResult {
  MfParams params;
  std::vector<MfEpoch> log;
  std::size_t best_epoch = 0;  // 0 = initialization
};

/// Optional validation hook: returns the metric of a candidate model and
/// whether larger is better is given by `higher_is_better`.
struct MfValidation {
  std::function<double(const MfParams&)> metric;
  bool higher_is_better = false;
};

/// Global mean used for b_g: the mean train rating, or for ranking the
/// weighted mean target Σw·r / Σw implied by the negative-sampling ratio.
double task_global_mean(const Corpus& corpus, std::span<const std::size_t> train, Task task,
                        const NegativeSampling& neg);

/// Mini-batch Adam on Σ w (r - r̂)² + λ(‖U‖² + ‖V‖²). Each batch carries the
/// share |batch| / N of the penalty so one epoch sums to the full objective.
/// With a validation hook the best epoch's parameters are returned.
MfTrainResult train_mf(const Corpus& corpus, std::span<const std::size_t> train,
                       const MfConfig& cfg, const MfValidation* validation = nullptr);

/// Σ w (r - r̂)² over the positive train events plus the full penalty.
double mf_objective(const MfParams& p, const Corpus& corpus, std::span<const std::size_t> train,
                    double l2);

}  // namespace s2pnm
