#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "s2pnm/error.hpp"
#include "s2pnm/evaluator.hpp"
#include "s2pnm/synthetic.hpp"
#include "s2pnm/trainer.hpp"
#include "test_util.hpp"

using namespace s2pnm;

namespace {

// Reference top-k: sort all candidates by (score desc, index asc).
std::vector<std::size_t> brute_rank(const std::vector<double>& scores, std::vector<std::size_t> cand,
                                    std::size_t k) {
  std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  });
  cand.resize(std::min(k, cand.size()));
  return cand;
}

struct BruteMetrics {
  double p, hr, ndcg;
};

BruteMetrics brute_metrics(const std::vector<std::size_t>& ranked, const std::vector<std::size_t>& truth,
                           std::size_t k) {
  const std::set<std::size_t> t(truth.begin(), truth.end());
  double hits = 0, dcg = 0, idcg = 0;
  for (std::size_t r = 0; r < k; ++r) {
    if (r < ranked.size() && t.count(ranked[r])) {
      hits += 1;
      dcg += 1.0 / std::log2(r + 2.0);
    }
    if (r < t.size()) idcg += 1.0 / std::log2(r + 2.0);
  }
  return {hits / k, hits > 0 ? 1.0 : 0.0, dcg / idcg};
}

}  // namespace

TEST_CASE("rmse") {
  const std::vector<TruthPrediction> pairs = {{1, 2}, {3, 3}, {5, 2}};
  CHECK(rmse(pairs) == doctest::Approx(std::sqrt(10.0 / 3.0)));
  CHECK(rmse(pairs, std::make_pair(1.0, 4.0)) == doctest::Approx(std::sqrt(10.0 / 3.0)));
  const std::vector<TruthPrediction> over = {{5, 7}, {1, -2}};
  CHECK(rmse(over, std::make_pair(1.0, 5.0)) == 0.0);
}

TEST_CASE("rank_items: descending score, ties to the smaller index") {
  const std::vector<double> s = {0.5, 0.9, 0.5, 0.1, 0.9};
  const std::vector<std::size_t> all = {0, 1, 2, 3, 4};
  CHECK(rank_items(s, all, 3) == std::vector<std::size_t>{1, 4, 0});
  CHECK(rank_items(s, all, 10) == std::vector<std::size_t>{1, 4, 0, 2, 3});
  const std::vector<std::size_t> some = {3, 2, 0};
  CHECK(rank_items(s, some, 2) == std::vector<std::size_t>{0, 2});
}

TEST_CASE("metric examples") {
  const std::vector<std::size_t> ranked = {7, 3};
  const std::vector<std::size_t> truth = {3};
  CHECK(ndcg_at_k(ranked, truth, 2) == doctest::Approx(0.63093).epsilon(1e-5));
  CHECK(hit_at_k(ranked, truth, 2) == 1.0);
  CHECK(hit_at_k(ranked, truth, 1) == 0.0);
  CHECK(precision_at_k(ranked, truth, 2) == 0.5);
  const std::vector<std::size_t> perfect = {3, 7};
  CHECK(ndcg_at_k(perfect, truth, 2) == 1.0);
  const std::vector<std::vector<std::size_t>> lists = {{1}, {2}};
  const std::vector<std::vector<std::size_t>> empty = {{}, {}};
  CHECK_THROWS_AS(ranking_metrics(lists, empty, 1), DataError);
}

TEST_CASE("metrics agree with brute force on small random cases") {
  Rng rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    const std::size_t users = 1 + rng.below(4);
    std::vector<std::vector<std::size_t>> ranked(users), truth(users);
    for (std::size_t u = 0; u < users; ++u) {
      std::vector<double> scores(n);
      for (double& s : scores) s = static_cast<double>(rng.below(4));  // frequent ties
      std::vector<std::size_t> cand(n);
      std::iota(cand.begin(), cand.end(), 0);
      ranked[u] = rank_items(scores, cand, n);
      CHECK(ranked[u] == brute_rank(scores, cand, n));
      for (std::size_t j = 0; j < n; ++j)
        if (rng.uniform() < 0.3) truth[u].push_back(j);
    }
    bool any = false;
    for (const auto& t : truth) any |= !t.empty();
    if (!any) continue;
    double prev_hr = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
      double p = 0, hr = 0, nd = 0;
      std::size_t counted = 0;
      for (std::size_t u = 0; u < users; ++u) {
        if (truth[u].empty()) continue;
        const auto b = brute_metrics(ranked[u], truth[u], k);
        p += b.p, hr += b.hr, nd += b.ndcg, ++counted;
      }
      const RankingMetrics got = ranking_metrics(ranked, truth, k);
      CHECK(got.users == counted);
      CHECK(got.precision == doctest::Approx(p / counted).epsilon(1e-12));
      CHECK(got.hr == doctest::Approx(hr / counted).epsilon(1e-12));
      CHECK(got.ndcg == doctest::Approx(nd / counted).epsilon(1e-12));
      CHECK(got.hr >= prev_hr);
      CHECK(got.ndcg <= 1.0 + 1e-12);
      prev_hr = got.hr;
    }
  }
}

TEST_CASE("ranking is invariant to a common score shift") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(12);
    for (double& v : s) v = rng.normal();
    std::vector<double> shifted = s;
    const double c = 4.0 * rng.normal();
    for (double& v : shifted) v += c;
    std::vector<std::size_t> cand(12);
    std::iota(cand.begin(), cand.end(), 0);
    CHECK(rank_items(s, cand, 5) == rank_items(shifted, cand, 5));
  }
}

TEST_CASE("bucket report") {
  const std::vector<double> metric = {1, 2, 3, 4, 5};
  const std::vector<std::size_t> counts = {0, 4, 5, 12, 80};
  const std::vector<std::size_t> edges = {5, 10, 50};
  const auto b = bucket_report(metric, counts, edges);
  REQUIRE(b.size() == 4);
  CHECK(b[0].label == "[0,5)");
  CHECK(b[3].label == "[50,inf)");
  CHECK(b[0].users == 2);
  CHECK(b[0].metric == 1.5);
  CHECK(b[1].users == 1);
  CHECK(b[1].metric == 3.0);
  CHECK(b[2].metric == 4.0);
  CHECK(b[3].fraction == doctest::Approx(0.2));
  double total = 0;
  for (const Bucket& x : b) total += x.fraction;
  CHECK(total == doctest::Approx(1.0));
  const std::vector<std::size_t> bad = {5, 5};
  CHECK_THROWS_AS(bucket_report(metric, counts, bad), ConfigError);
}

TEST_CASE("evaluate a static-only model against direct scoring") {
  DriftSpec spec{.m = 20, .n = 40, .d = 4, .events_per_user = 12, .seed = 3};
  auto c = std::make_shared<const Corpus>(gen_drift(spec).corpus);
  const SplitResult s = split_per_user_prefix(c, 0.75);
  TrainConfig cfg;
  cfg.d_user = 4;
  cfg.d_gru = 4;
  cfg.d_dict = 6;
  cfg.variant = Variant::kStaticOnly;
  S2pnmParams p = init_model(*c, s.train, cfg, nullptr);
  Rng rng(2);
  for (double& v : p.mf.user_bias.values()) v = 0.5 * rng.normal();
  for (double& v : p.mf.item_bias.values()) v = 0.5 * rng.normal();

  SUBCASE("rating") {
    double lo = 5, hi = 1;
    for (std::size_t q : s.train) lo = std::min(lo, c->events[q].rating), hi = std::max(hi, c->events[q].rating);
    double sq = 0;
    for (std::size_t q : s.test) {
      const Event& e = c->events[q];
      const double pred = std::clamp(predict_static(p.mf, e.user, e.item), lo, hi);
      sq += (pred - e.rating) * (pred - e.rating);
    }
    const EvalReport r = evaluate(p, *c, s.train, s.test, {.task = Task::kRating});
    REQUIRE(r.rmse);
    CHECK(*r.rmse == doctest::Approx(std::sqrt(sq / s.test.size())).epsilon(1e-12));
    CHECK(r.test_events == s.test.size());
    double frac = 0;
    for (const Bucket& b : r.user_buckets) frac += b.fraction;
    CHECK(frac == doctest::Approx(1.0));

    ScratchDir dir;
    write_report_tsv(dir.file("r.tsv"), r);
    write_report_json(dir.file("r.json"), r, {{"task", "rating"}});
    CHECK(slurp(dir.file("r.tsv")).find("rmse\t") != std::string::npos);
    const auto doc = nlohmann::json::parse(slurp(dir.file("r.json")));
    CHECK(doc["metrics"]["rmse"].get<double>() == doctest::Approx(*r.rmse));
    CHECK(doc["config"]["task"] == "rating");
  }

  SUBCASE("ranking") {
    std::vector<std::set<std::size_t>> seen(c->num_users()), truth(c->num_users());
    for (std::size_t q : s.train) seen[c->events[q].user].insert(c->events[q].item);
    for (std::size_t q : s.test) truth[c->events[q].user].insert(c->events[q].item);
    double hr = 0;
    std::size_t users = 0;
    for (std::size_t u = 0; u < c->num_users(); ++u) {
      if (truth[u].empty()) continue;
      std::vector<double> sc(c->num_items());
      std::vector<std::size_t> cand;
      for (std::size_t j = 0; j < c->num_items(); ++j) {
        sc[j] = predict_static(p.mf, u, j);
        if (!seen[u].count(j)) cand.push_back(j);
      }
      const auto top = brute_rank(sc, cand, 5);
      const std::vector<std::size_t> t(truth[u].begin(), truth[u].end());
      hr += brute_metrics(top, t, 5).hr;
      ++users;
    }
    const EvalReport r = evaluate(p, *c, s.train, s.test, {.task = Task::kRanking, .ks = {5}});
    CHECK(r.users == users);
    CHECK(r.hr_at_k.at(5) == doctest::Approx(hr / users).epsilon(1e-12));
  }
}
