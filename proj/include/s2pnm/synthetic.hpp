#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "s2pnm/corpus.hpp"
#include "s2pnm/tensor.hpp"

namespace s2pnm {

// Generated corpora use ids "u<i>" and "i<j>"; user and item indices equal
// the generator's i and j, including items that drew no events.

/// Ratings clip(3 + u_i . v_j + noise) to [1, 5] with factor entries
/// uniform in ±sqrt(1.5 / d), so noiseless ratings never clip. Each
/// (user, item) cell is observed with probability `density`.
Corpus gen_static(std::size_t m, std::size_t n, std::size_t d, double noise_std, double density,
                  std::uint64_t seed);

struct DriftSpec {
  std::size_t m = 500;
  std::size_t n = 300;
  std::size_t d = 8;
  std::size_t regimes_per_user = 2;
  std::size_t events_per_user = 40;
  double noise_std = 0.25;
  std::uint64_t seed = 1;
  std::size_t topics = 6;
  double explore = 0.2;   // share of events drawn from all items
  double strength = 2.0;  // weight of the regime taste in the user vector
  double selectivity = 8.0;  // softmax sharpness of s . v when picking items

  void validate() const;
};

/// Ground truth retained next to a drift corpus.
struct DriftTruth {
  std::vector<std::size_t> item_topic;                 // per item
  Tensor item_factors;                                 // [n x d]
  std::vector<std::vector<std::size_t>> user_topics;   // per user, per regime
  std::vector<std::vector<std::size_t>> change_points; // per user, event offsets
  Tensor static_factors;                               // [m x d], drives item choice
  std::vector<Tensor> user_factors;                    // per user, [regimes x d], drives ratings
  std::vector<std::size_t> event_regime;               // per corpus event
};

struct DriftData {
  Corpus corpus;
  DriftTruth truth;
};

/// Users switch between regimes at random change points in the middle of
/// their sequence. Each regime favors one item topic: events pick an unseen
/// item of that topic, or with probability `explore` any unseen item, with
/// probability proportional to exp(selectivity * s . v) for the user's static
/// vector s. Ratings use the regime vector.
/// Item factors are independent of topics; a regime's user vector adds
/// `strength` times its topic's taste vector. Timestamps strictly increase
/// per user; user start times are staggered.
DriftData gen_drift(const DriftSpec& spec);

/// Sidecar with one `row user item regime topic` line per event.
void write_drift_truth(const std::filesystem::path& path, const DriftData& data);

struct OracleComparison {
  double oracle_hr = 0.0;      // active-regime topic first, then static utility
  double popularity_hr = 0.0;  // ranks by train popularity
  std::size_t users = 0;
};

/// HR@k on the per-user suffixes of a prefix split, for a ranker that knows
/// each user's final regime versus a popularity ranker. Candidates exclude
/// the user's prefix items.
OracleComparison drift_oracle(const DriftData& data, double prefix_fraction, std::size_t k);

}  // namespace s2pnm
