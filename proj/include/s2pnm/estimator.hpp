#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "s2pnm/rng.hpp"

namespace s2pnm {

struct MfParams;

enum class Task { kRating, kRanking };

Task parse_task(const std::string& name);
std::string task_name(Task t);

struct NegativeSampling {
  std::size_t n_neg = 4;
  double w_pos = 1.0;
  double w_neg = 0.2;
};

struct TrainingExample {
  std::size_t user = 0;
  std::size_t item = 0;
  double target = 0.0;
  double weight = 1.0;
  /// Sequence position whose preceding state supplies the dynamic preference.
  std::size_t position = 0;
};

/// b_g + b_i + b_j + (u_i + u_bar)^T v_j. An empty u_bar means zero.
double predict(const MfParams& mf, std::size_t user, std::size_t item,
               std::span<const double> u_bar);

/// λ (‖U‖² + ‖V‖²)
double l2_penalty(const MfParams& mf, double l2);

/// Σ (r - r̂)² + λ(‖U‖² + ‖V‖²). Example weights are ignored.
double rating_loss(std::span<const TrainingExample> batch, std::span<const double> predictions,
                   const MfParams& mf, double l2);

/// Σ w (r - r̂)² + λ(‖U‖² + ‖V‖²).
double ranking_loss(std::span<const TrainingExample> batch, std::span<const double> predictions,
                    const MfParams& mf, double l2);

/// Draws up to n_neg distinct items uniformly from [0, universe) minus
/// `history`. When fewer candidates exist, all of them are returned in
/// ascending order.
std::vector<std::size_t> sample_negatives(std::span<const std::size_t> history, std::size_t n_neg,
                                          std::size_t universe, Rng& rng);

}  // namespace s2pnm
