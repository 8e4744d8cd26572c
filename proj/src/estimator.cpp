#include "s2pnm/estimator.hpp"

#include <algorithm>

#include "s2pnm/biasedmf.hpp"
#include "s2pnm/error.hpp"

namespace s2pnm {

Task parse_task(const std::string& name) {
  if (name == "rating") return Task::kRating;
  if (name == "ranking") return Task::kRanking;
  throw ConfigError("unknown task '" + name + "' (expected rating or ranking)");
}

std::string task_name(Task t) { return t == Task::kRating ? "rating" : "ranking"; }

double predict(const MfParams& mf, std::size_t user, std::size_t item,
               std::span<const double> u_bar) {
  if (user >= mf.num_users() || item >= mf.num_items()) {
    throw DataError("prediction index out of range (user " + std::to_string(user) + ", item " +
                    std::to_string(item) + ")");
  }
  const auto u = mf.user_factors.row(user);
  const auto v = mf.item_factors.row(item);
  const double s = mf.global_mean + mf.user_bias[user] + mf.item_bias[item];
  // Same summation order with and without u_bar, so u_bar = 0 reproduces MF exactly.
  double inter = 0.0;
  if (u_bar.empty()) {
    for (std::size_t k = 0; k < v.size(); ++k) inter += u[k] * v[k];
  } else {
    if (u_bar.size() != v.size()) throw DataError("dynamic preference has the wrong dimension");
    for (std::size_t k = 0; k < v.size(); ++k) inter += (u[k] + u_bar[k]) * v[k];
  }
  return s + inter;
}

double l2_penalty(const MfParams& mf, double l2) {
  const auto u = mf.user_factors.values();
  const auto v = mf.item_factors.values();
  return l2 * (dot(u, u) + dot(v, v));
}

namespace {

double weighted_sse(std::span<const TrainingExample> batch, std::span<const double> predictions,
                    bool use_weights) {
  if (batch.size() != predictions.size()) {
    throw DataError("loss: batch and prediction lengths differ");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const double r = batch[k].target - predictions[k];
    s += (use_weights ? batch[k].weight : 1.0) * r * r;
  }
  return s;
}

}  // namespace

double rating_loss(std::span<const TrainingExample> batch, std::span<const double> predictions,
                   const MfParams& mf, double l2) {
  return weighted_sse(batch, predictions, false) + l2_penalty(mf, l2);
}

double ranking_loss(std::span<const TrainingExample> batch, std::span<const double> predictions,
                    const MfParams& mf, double l2) {
  return weighted_sse(batch, predictions, true) + l2_penalty(mf, l2);
}

std::vector<std::size_t> sample_negatives(std::span<const std::size_t> history, std::size_t n_neg,
                                          std::size_t universe, Rng& rng) {
  std::vector<std::size_t> excluded(history.begin(), history.end());
  std::sort(excluded.begin(), excluded.end());
  excluded.erase(std::unique(excluded.begin(), excluded.end()), excluded.end());
  const auto in_history = [&](std::size_t j) {
    return std::binary_search(excluded.begin(), excluded.end(), j);
  };
  std::size_t n_excluded = 0;
  for (std::size_t j : excluded) n_excluded += j < universe;
  const std::size_t n_candidates = universe - n_excluded;

  std::vector<std::size_t> out;
  if (n_neg == 0 || n_candidates == 0) return out;
  if (n_neg >= n_candidates) {
    for (std::size_t j = 0; j < universe; ++j)
      if (!in_history(j)) out.push_back(j);
    return out;
  }
  if (n_candidates < 4 * n_neg) {
    // Dense case: partial Fisher-Yates over the explicit candidate list.
    std::vector<std::size_t> cand;
    cand.reserve(n_candidates);
    for (std::size_t j = 0; j < universe; ++j)
      if (!in_history(j)) cand.push_back(j);
    for (std::size_t i = 0; i < n_neg; ++i) {
      std::swap(cand[i], cand[i + rng.below(cand.size() - i)]);
      out.push_back(cand[i]);
    }
    return out;
  }
  while (out.size() < n_neg) {
    const std::size_t j = rng.below(universe);
    if (in_history(j) || std::find(out.begin(), out.end(), j) != out.end()) continue;
    out.push_back(j);
  }
  return out;
}

}  // namespace s2pnm
