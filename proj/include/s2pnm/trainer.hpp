#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s2pnm/biasedmf.hpp"
#include "s2pnm/config.hpp"
#include "s2pnm/corpus.hpp"
#include "s2pnm/model.hpp"

namespace s2pnm {

// ---------------------------------------------------------------------------
// Session-parallel batching

/// A window of one sequence assigned to a batch slot. `fresh` marks the
/// first window of a sequence, where the slot's recurrent state resets.
struct ScheduledFragment {
  std::size_t slot = 0;
  std::size_t sequence = 0;  // index into the sequence list
  std::size_t begin = 0;
  std::size_t end = 0;
  bool fresh = false;
};

using ScheduledBatch = std::vector<ScheduledFragment>;

/// Slots advance through their sequences in lockstep, `window` events at a
/// time; a slot whose sequence is exhausted is refilled with the next one
/// in a seeded shuffle order. Empty sequences are skipped.
std::vector<ScheduledBatch> make_batches(std::span<const UserSequence> seqs, std::size_t batch_size,
                                         std::size_t window, std::uint64_t seed);

// ---------------------------------------------------------------------------

/// Splits train positions into a fitting part and a validation slice: the
/// chronologically last `fraction` of each user's train events under the
/// per-user protocol, else the globally last `fraction` of train events.
struct ValidationSplit {
  std::vector<std::size_t> fit;
  std::vector<std::size_t> validation;
};

ValidationSplit validation_split(const SplitResult& split, double fraction);

/// lr used during 1-based epoch e: lr * decay^floor((e - 1) / every).
double scheduled_lr(const TrainConfig& cfg, std::size_t epoch);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t batches = 0;
};

struct TrainResult {
  S2pnmParams params;       // validation-selected
  S2pnmParams initial;      // before the first update
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  std::size_t fit_events = 0;
};

/// Builds the initial model: static part from `pretrained` when given (its
/// shapes must match), otherwise Glorot; network Glorot with orthogonal
/// recurrent weights.
S2pnmParams init_model(const Corpus& corpus, std::span<const std::size_t> fit,
                       const TrainConfig& cfg, const MfParams* pretrained);

/// Trains on the fit slice of `split`, selecting the epoch with the best
/// validation metric (RMSE for rating, HR@val_k for ranking). `on_epoch`
/// is called after every epoch.
TrainResult train(const SplitResult& split, const TrainConfig& cfg, const MfParams* pretrained,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// Validation metric of a model on a slice.
double validation_metric(const S2pnmParams& params, const Corpus& corpus,
                         std::span<const std::size_t> history, std::span<const std::size_t> targets,
                         Task task, std::size_t k);

/// Tab-separated `epoch train_loss val_metric lr wall_seconds`, one line per epoch.
void write_epoch_log(const std::filesystem::path& path, std::span<const EpochLog> log);
std::string format_epoch_line(const EpochLog& e);

// ---------------------------------------------------------------------------
// Gradient check

struct GradcheckEntry {
  Task task = Task::kRating;
  std::string tensor;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbations that crossed a ReLU/masking kink
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double tolerance = 1e-4;
  bool passed = true;
};

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Test hook applied to the analytic gradient before comparison.
  std::function<void(S2pnmParams& grad)> corrupt;
};

/// Compares analytic gradients with central differences for every tensor on
/// a 3-user, 5-item toy corpus under both losses.
GradcheckReport gradcheck(std::uint64_t seed, const GradcheckOptions& options = {});

}  // namespace s2pnm
