#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "s2pnm/biasedmf.hpp"
#include "s2pnm/corpus.hpp"
#include "s2pnm/estimator.hpp"
#include "s2pnm/seq2pref.hpp"

namespace s2pnm {

/// Which preference terms enter the estimator.
enum class Variant : std::uint8_t {
  kFull = 0,         // u* + u_bar
  kStaticOnly = 1,   // u* only; the network is unused
  kDynamicOnly = 2,  // u_bar only; u* is held at zero
};

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

struct S2pnmParams {
  MfParams mf;
  Seq2PrefParams net;
  Variant variant = Variant::kFull;
};

/// Every tensor with its checkpoint name, in a fixed order.
std::vector<std::pair<std::string, Tensor*>> named_tensors(S2pnmParams& p);
std::vector<std::pair<std::string, const Tensor*>> named_tensors(const S2pnmParams& p);

/// Same shapes, all zeros.
S2pnmParams zeros_like(const S2pnmParams& p);

/// Whether a named tensor is trained under the variant.
bool is_trainable(const std::string& name, Variant v);

struct LossConfig {
  Task task = Task::kRating;
  double l2 = 0.01;
  NegativeSampling negatives{};
  double p_drop = 0.0;
  Mode mode = Mode::kTrain;
  /// Share of the full penalty λ(‖U‖² + ‖V‖² + ‖E‖²) charged to this batch.
  double penalty_share = 1.0;
  /// Record which decoder units are active (for kink filtering in checks).
  bool record_pattern = false;
};

/// One window of one user's sequence: events [begin, end) are scored, each
/// with the dynamic preference after the events before it, and then
/// consumed.
struct FragmentJob {
  const UserSequence* sequence = nullptr;
  std::size_t begin = 0;
  std::size_t end = 0;
  SeqCarry carry;
};

struct BatchResult {
  double loss = 0.0;       // data term plus penalty share
  double data_loss = 0.0;  // Σ w (r - r̂)²
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::vector<SeqCarry> carries;  // per job, state after its fragment
  std::vector<std::uint8_t> decoder_pattern;  // psi(a) != 0 per step and unit
};

/// Loss of a batch of fragments and, when `grad` is non-null, its gradient
/// accumulated into `grad`. A pure function of (params, jobs, cfg, rng):
/// negatives and dropout masks are drawn from streams keyed by user and
/// position, so re-evaluating with perturbed parameters reuses them.
BatchResult batch_loss(const S2pnmParams& params, std::span<const FragmentJob> jobs,
                       const LossConfig& cfg, const Rng& rng, S2pnmParams* grad);

/// Evaluation-mode inference over a whole sequence: the dynamic preference
/// used to score each event (zero for the first), plus the preference after
/// the final event for scoring what comes next.
struct SequenceScores {
  std::vector<std::vector<double>> u_bar_before;  // size T
  std::vector<double> u_bar_after;
};

SequenceScores infer_sequence(const S2pnmParams& params, const UserSequence& seq);

/// Score with the variant's combination of static and dynamic terms.
double score(const S2pnmParams& params, std::size_t user, std::size_t item,
             std::span<const double> u_bar);

}  // namespace s2pnm
