#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "s2pnm/corpus.hpp"
#include "s2pnm/estimator.hpp"
#include "s2pnm/model.hpp"

namespace s2pnm {

struct TruthPrediction {
  double truth = 0.0;
  double prediction = 0.0;
};

/// Root mean squared residual. With `clip`, predictions are first clamped
/// to [clip->first, clip->second].
double rmse(std::span<const TruthPrediction> pairs,
            std::optional<std::pair<double, double>> clip = std::nullopt);

/// Top-k candidates by descending score; ties go to the smaller item index.
/// `scores` is indexed by item.
std::vector<std::size_t> rank_items(std::span<const double> scores,
                                    std::span<const std::size_t> candidates, std::size_t k);

// Per-user metrics over the first k entries of a ranked list.
double precision_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                      std::size_t k);
double hit_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                std::size_t k);
double ndcg_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                 std::size_t k);

struct RankingMetrics {
  double precision = 0.0;
  double hr = 0.0;
  double ndcg = 0.0;
  std::size_t users = 0;  // users with a non-empty truth set
};

/// Means over users with non-empty truth. Throws DataError if there are none.
RankingMetrics ranking_metrics(std::span<const std::vector<std::size_t>> ranked,
                               std::span<const std::vector<std::size_t>> truth, std::size_t k);

struct Bucket {
  std::string label;
  double metric = 0.0;
  double fraction = 0.0;
  std::size_t users = 0;
};

/// Groups users by train-event count at ascending `edges`: the buckets are
/// [0, e0), [e0, e1), ..., [e_last, inf). Empty buckets are reported with a
/// zero metric.
std::vector<Bucket> bucket_report(std::span<const double> metric_per_user,
                                  std::span<const std::size_t> train_counts,
                                  std::span<const std::size_t> edges);

struct EvalReport {
  std::optional<double> rmse;
  std::map<std::size_t, double> precision_at_k;
  std::map<std::size_t, double> hr_at_k;
  std::map<std::size_t, double> ndcg_at_k;
  std::vector<Bucket> user_buckets;
  std::string bucket_metric;
  std::size_t test_events = 0;
  std::size_t users = 0;
};

struct EvalOptions {
  Task task = Task::kRating;
  std::vector<std::size_t> ks = {5, 10};
  std::vector<std::size_t> bucket_edges = {5, 10, 50};
  bool clip_predictions = true;
};

/// Rating: each target event is scored with the dynamic preference after
/// all of the user's earlier events in history and targets. Ranking: each
/// user's list is built from the state after the history events, over all
/// items the user has no history event for; the truth set is the user's
/// target items.
EvalReport evaluate(const S2pnmParams& params, const Corpus& corpus,
                    std::span<const std::size_t> history, std::span<const std::size_t> targets,
                    const EvalOptions& options);

/// Writes `metric<TAB>value` lines followed by the bucket table.
void write_report_tsv(const std::filesystem::path& path, const EvalReport& report);
/// One JSON document with the config echo, metrics and buckets.
void write_report_json(const std::filesystem::path& path, const EvalReport& report,
                       const std::map<std::string, std::string>& config_echo);

}  // namespace s2pnm
