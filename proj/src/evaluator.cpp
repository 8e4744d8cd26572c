#include "s2pnm/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "s2pnm/error.hpp"
#include "s2pnm/parallel.hpp"

namespace s2pnm {

double rmse(std::span<const TruthPrediction> pairs, std::optional<std::pair<double, double>> clip) {
  if (pairs.empty()) throw DataError("RMSE of an empty set");
  double sse = 0.0;
  for (const auto& tp : pairs) {
    double pred = tp.prediction;
    if (clip) pred = std::clamp(pred, clip->first, clip->second);
    const double r = tp.truth - pred;
    sse += r * r;
  }
  return std::sqrt(sse / static_cast<double>(pairs.size()));
}

std::vector<std::size_t> rank_items(std::span<const double> scores,
                                    std::span<const std::size_t> candidates, std::size_t k) {
  std::vector<std::size_t> items(candidates.begin(), candidates.end());
  const auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  const std::size_t take = std::min(k, items.size());
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(take), items.end(), better);
  items.resize(take);
  return items;
}

namespace {

std::vector<std::size_t> unique_sorted(std::span<const std::size_t> v) {
  std::vector<std::size_t> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t list_length(std::span<const std::size_t> ranked, std::size_t k) {
  return std::min(k, ranked.size());
}

}  // namespace

double precision_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                      std::size_t k) {
  const auto t = unique_sorted(truth);
  const std::size_t len = list_length(ranked, k);
  if (len == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t j = 0; j < len; ++j) hits += std::binary_search(t.begin(), t.end(), ranked[j]);
  return static_cast<double>(hits) / static_cast<double>(len);
}

double hit_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                std::size_t k) {
  const auto t = unique_sorted(truth);
  const std::size_t len = list_length(ranked, k);
  for (std::size_t j = 0; j < len; ++j)
    if (std::binary_search(t.begin(), t.end(), ranked[j])) return 1.0;
  return 0.0;
}

double ndcg_at_k(std::span<const std::size_t> ranked, std::span<const std::size_t> truth,
                 std::size_t k) {
  const auto t = unique_sorted(truth);
  if (t.empty()) return 0.0;
  const std::size_t len = list_length(ranked, k);
  double dcg = 0.0;
  for (std::size_t j = 0; j < len; ++j)
    if (std::binary_search(t.begin(), t.end(), ranked[j])) dcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
  double idcg = 0.0;
  for (std::size_t j = 0; j < std::min(k, t.size()); ++j) idcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
  return dcg / idcg;
}

RankingMetrics ranking_metrics(std::span<const std::vector<std::size_t>> ranked,
                               std::span<const std::vector<std::size_t>> truth, std::size_t k) {
  if (ranked.size() != truth.size()) throw DataError("ranking metrics: list counts differ");
  RankingMetrics m;
  for (std::size_t u = 0; u < ranked.size(); ++u) {
    if (truth[u].empty()) continue;
    ++m.users;
    m.precision += precision_at_k(ranked[u], truth[u], k);
    m.hr += hit_at_k(ranked[u], truth[u], k);
    m.ndcg += ndcg_at_k(ranked[u], truth[u], k);
  }
  if (m.users == 0) throw DataError("no user has a non-empty truth set");
  const double n = static_cast<double>(m.users);
  m.precision /= n;
  m.hr /= n;
  m.ndcg /= n;
  return m;
}

std::vector<Bucket> bucket_report(std::span<const double> metric_per_user,
                                  std::span<const std::size_t> train_counts,
                                  std::span<const std::size_t> edges) {
  if (metric_per_user.size() != train_counts.size()) {
    throw DataError("bucket report: metric and count lengths differ");
  }
  if (!std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end()) {
    throw ConfigError("bucket edges must be strictly ascending");
  }
  std::vector<Bucket> out(edges.size() + 1);
  for (std::size_t b = 0; b < out.size(); ++b) {
    const std::size_t lo = b == 0 ? 0 : edges[b - 1];
    out[b].label = b < edges.size() ? "[" + std::to_string(lo) + "," + std::to_string(edges[b]) + ")"
                                     : "[" + std::to_string(lo) + ",inf)";
  }
  for (std::size_t u = 0; u < train_counts.size(); ++u) {
    const auto b = static_cast<std::size_t>(
        std::upper_bound(edges.begin(), edges.end(), train_counts[u]) - edges.begin());
    out[b].metric += metric_per_user[u];
    ++out[b].users;
  }
  const double total = static_cast<double>(train_counts.size());
  for (Bucket& b : out) {
    if (b.users) b.metric /= static_cast<double>(b.users);
    b.fraction = total > 0 ? static_cast<double>(b.users) / total : 0.0;
  }
  return out;
}

EvalReport evaluate(const S2pnmParams& params, const Corpus& corpus,
                    std::span<const std::size_t> history, std::span<const std::size_t> targets,
                    const EvalOptions& options) {
  EvalReport report;
  report.test_events = targets.size();
  const std::size_t m = corpus.num_users();
  const std::size_t n = corpus.num_items();

  std::vector<std::size_t> train_counts(m, 0);
  for (std::size_t p : history) ++train_counts[corpus.events[p].user];
  std::vector<bool> is_target(corpus.events.size(), false);
  for (std::size_t p : targets) is_target[p] = true;

  std::vector<std::size_t> bucket_users, bucket_counts;
  std::vector<double> bucket_values;

  if (options.task == Task::kRating) {
    std::optional<std::pair<double, double>> clip;
    if (options.clip_predictions && !history.empty()) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t p : history) {
        lo = std::min(lo, corpus.events[p].rating);
        hi = std::max(hi, corpus.events[p].rating);
      }
      clip = std::make_pair(lo, hi);
    }
    std::vector<std::size_t> both(history.begin(), history.end());
    both.insert(both.end(), targets.begin(), targets.end());
    const auto seqs = sequences(corpus, both);
    std::vector<std::vector<TruthPrediction>> per_user(seqs.size());
    parallel_for(seqs.size(), [&](std::size_t u) {
      const UserSequence& seq = seqs[u];
      bool any = false;
      for (const auto& e : seq.events) any |= is_target[e.position];
      if (!any) return;
      const SequenceScores sc = infer_sequence(params, seq);
      for (std::size_t t = 0; t < seq.events.size(); ++t) {
        const SeqEvent& e = seq.events[t];
        if (is_target[e.position]) per_user[u].push_back({e.rating, score(params, seq.user, e.item, sc.u_bar_before[t])});
      }
    });
    std::vector<TruthPrediction> all;
    all.reserve(targets.size());
    for (std::size_t u = 0; u < seqs.size(); ++u) {
      if (per_user[u].empty()) continue;
      all.insert(all.end(), per_user[u].begin(), per_user[u].end());
      bucket_users.push_back(u);
      bucket_counts.push_back(train_counts[u]);
      bucket_values.push_back(rmse(per_user[u], clip));
    }
    report.rmse = rmse(all, clip);
    report.bucket_metric = "rmse";
  } else {
    if (options.ks.empty()) throw ConfigError("ranking evaluation needs at least one k");
    const std::size_t kmax = *std::max_element(options.ks.begin(), options.ks.end());
    const auto hist_seqs = sequences(corpus, history);
    std::vector<std::vector<std::size_t>> truth(m);
    for (std::size_t p : targets) truth[corpus.events[p].user].push_back(corpus.events[p].item);

    std::vector<std::size_t> users;
    for (std::size_t u = 0; u < m; ++u)
      if (!truth[u].empty()) users.push_back(u);
    std::vector<std::vector<std::size_t>> ranked(users.size());
    parallel_for(users.size(), [&](std::size_t q) {
      const std::size_t u = users[q];
      const UserSequence& seq = hist_seqs[u];
      const SequenceScores sc = infer_sequence(params, seq);
      std::vector<bool> seen(n, false);
      for (const auto& e : seq.events) seen[e.item] = true;
      std::vector<double> scores(n, 0.0);
      std::vector<std::size_t> candidates;
      candidates.reserve(n);
      for (std::size_t j = 0; j < n; ++j) {
        if (seen[j]) continue;
        candidates.push_back(j);
        scores[j] = score(params, u, j, sc.u_bar_after);
      }
      ranked[q] = rank_items(scores, candidates, kmax);
    });
    std::vector<std::vector<std::size_t>> truths;
    for (std::size_t u : users) {
      truths.push_back(std::move(truth[u]));
      bucket_users.push_back(u);
      bucket_counts.push_back(train_counts[u]);
    }
    for (std::size_t k : options.ks) {
      const RankingMetrics rm = ranking_metrics(ranked, truths, k);
      report.precision_at_k[k] = rm.precision;
      report.hr_at_k[k] = rm.hr;
      report.ndcg_at_k[k] = rm.ndcg;
    }
    const std::size_t kb = options.ks.front();
    for (std::size_t i = 0; i < ranked.size(); ++i) bucket_values.push_back(hit_at_k(ranked[i], truths[i], kb));
    report.bucket_metric = "hr@" + std::to_string(kb);
  }

  report.users = bucket_users.size();
  report.user_buckets = bucket_report(bucket_values, bucket_counts, options.bucket_edges);
  return report;
}

void write_report_tsv(const std::filesystem::path& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report '" + path.string() + "'");
  out.precision(10);
  out << "metric\tvalue\n";
  if (r.rmse) out << "rmse\t" << *r.rmse << '\n';
  for (auto [k, v] : r.precision_at_k) out << "precision@" << k << '\t' << v << '\n';
  for (auto [k, v] : r.hr_at_k) out << "hr@" << k << '\t' << v << '\n';
  for (auto [k, v] : r.ndcg_at_k) out << "ndcg@" << k << '\t' << v << '\n';
  out << "test_events\t" << r.test_events << "\nusers\t" << r.users << '\n';
  out << "\nbucket\t" << r.bucket_metric << "\tuser_fraction\tusers\n";
  for (const Bucket& b : r.user_buckets)
    out << b.label << '\t' << b.metric << '\t' << b.fraction << '\t' << b.users << '\n';
}

void write_report_json(const std::filesystem::path& path, const EvalReport& r,
                       const std::map<std::string, std::string>& config_echo) {
  nlohmann::json doc;
  doc["config"] = config_echo;
  nlohmann::json metrics = nlohmann::json::object();
  if (r.rmse) metrics["rmse"] = *r.rmse;
  for (auto [k, v] : r.precision_at_k) metrics["precision@" + std::to_string(k)] = v;
  for (auto [k, v] : r.hr_at_k) metrics["hr@" + std::to_string(k)] = v;
  for (auto [k, v] : r.ndcg_at_k) metrics["ndcg@" + std::to_string(k)] = v;
  doc["metrics"] = metrics;
  doc["test_events"] = r.test_events;
  doc["users"] = r.users;
  doc["bucket_metric"] = r.bucket_metric;
  doc["buckets"] = nlohmann::json::array();
  for (const Bucket& b : r.user_buckets) {
    doc["buckets"].push_back({{"label", b.label}, {"metric", b.metric}, {"fraction", b.fraction}, {"users", b.users}});
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

}  // namespace s2pnm
