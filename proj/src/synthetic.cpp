#include "s2pnm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "s2pnm/error.hpp"
#include "s2pnm/evaluator.hpp"

namespace s2pnm {

namespace {

Corpus indexed_corpus(std::size_t m, std::size_t n) {
  Corpus c;
  for (std::size_t i = 0; i < m; ++i) c.users.intern("u" + std::to_string(i));
  for (std::size_t j = 0; j < n; ++j) c.items.intern("i" + std::to_string(j));
  return c;
}

Tensor uniform_matrix(std::size_t rows, std::size_t cols, double a, Rng& rng) {
  Tensor t({rows, cols});
  for (double& v : t.values()) v = rng.uniform(-a, a);
  return t;
}

}  // namespace

Corpus gen_static(std::size_t m, std::size_t n, std::size_t d, double noise_std, double density,
                  std::uint64_t seed) {
  if (d == 0) throw ConfigError("d must be at least 1");
  if (!(density > 0.0 && density <= 1.0)) throw ConfigError("density must be in (0, 1]");
  if (noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
  const Rng root = Rng(seed).split("static");
  Rng fr = root.split("factors");
  const double a = std::sqrt(1.5 / static_cast<double>(d));
  const Tensor u = uniform_matrix(m, d, a, fr);
  const Tensor v = uniform_matrix(n, d, a, fr);
  Rng obs = root.split("observe");
  Rng noise = root.split("noise");
  Rng clock = root.split("time");

  Corpus c = indexed_corpus(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!(obs.uniform() < density)) continue;
      double r = 3.0 + dot(u.row(i), v.row(j));
      if (noise_std > 0.0) r += noise_std * noise.normal();
      r = std::clamp(r, 1.0, 5.0);
      const auto ts = static_cast<std::int64_t>(clock.below(1'000'000));
      c.events.push_back({i, j, r, ts, c.events.size()});
    }
  }
  return c;
}

void DriftSpec::validate() const {
  if (m == 0 || n == 0 || d == 0) throw ConfigError("m, n and d must be at least 1");
  if (regimes_per_user == 0) throw ConfigError("regimes_per_user must be at least 1");
  if (events_per_user < regimes_per_user) throw ConfigError("events_per_user must be >= regimes_per_user");
  if (events_per_user > n) throw ConfigError("events_per_user must not exceed n (items are unique per user)");
  if (topics == 0 || topics > n) throw ConfigError("topics must be in [1, n]");
  if (explore < 0.0 || explore > 1.0) throw ConfigError("explore must be in [0, 1]");
  if (noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
}

DriftData gen_drift(const DriftSpec& spec) {
  spec.validate();
  const std::size_t m = spec.m, n = spec.n, K = spec.topics, T = spec.events_per_user;
  const std::size_t R = spec.regimes_per_user;
  const std::size_t width = spec.d;
  const Rng root = Rng(spec.seed).split("drift");

  DriftData out;
  DriftTruth& truth = out.truth;

  // Item factors do not depend on the topic; a topic shifts the taste of
  // users whose regime favors it, so regimes disagree on the same items.
  Rng tr = root.split("topics");
  const double a = std::sqrt(1.5 / static_cast<double>(spec.d));
  const Tensor tastes = uniform_matrix(K, width, a, tr);

  Rng ir = tr.split("items");
  truth.item_topic.resize(n);
  truth.item_factors = uniform_matrix(n, width, a, ir);
  std::vector<std::vector<std::size_t>> topic_items(K);
  for (std::size_t j = 0; j < n; ++j) {
    truth.item_topic[j] = j % K;
    topic_items[j % K].push_back(j);
  }

  out.corpus = indexed_corpus(m, n);
  truth.user_topics.resize(m);
  truth.change_points.resize(m);
  truth.user_factors.resize(m);
  truth.static_factors = Tensor({m, width});

  for (std::size_t i = 0; i < m; ++i) {
    Rng ur = root.split("user").split(i);
    std::vector<double> s(width);
    for (double& x : s) x = ur.uniform(-a, a);
    std::ranges::copy(s, truth.static_factors.row(i).begin());

    auto& topics = truth.user_topics[i];
    topics.push_back(ur.below(K));
    for (std::size_t r = 1; r < R; ++r)
      topics.push_back(K == 1 ? topics.back() : (topics.back() + 1 + ur.below(K - 1)) % K);

    Tensor uf({R, width});
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t c = 0; c < width; ++c) uf.at(r, c) = s[c] + spec.strength * tastes.at(topics[r], c);

    // Distinct change points from the middle band, else from [1, T).
    std::size_t lo = std::max<std::size_t>(1, T / 4);
    std::size_t hi = std::max<std::size_t>(lo, (T * 13) / 20);
    if (hi - lo + 1 < R - 1) {
      lo = 1;
      hi = T - 1;
    }
    std::vector<std::size_t> band(hi - lo + 1);
    std::iota(band.begin(), band.end(), lo);
    for (std::size_t k = 0; k + 1 < R; ++k) std::swap(band[k], band[k + ur.below(band.size() - k)]);
    std::vector<std::size_t> cps(band.begin(), band.begin() + static_cast<std::ptrdiff_t>(R - 1));
    std::sort(cps.begin(), cps.end());
    truth.change_points[i] = cps;

    std::vector<bool> used(n, false);
    std::int64_t ts = static_cast<std::int64_t>(ur.below(T * 50));
    std::size_t regime = 0;
    for (std::size_t t = 0; t < T; ++t) {
      while (regime < cps.size() && t >= cps[regime]) ++regime;
      std::vector<std::size_t> pool;
      if (!(ur.uniform() < spec.explore))
        for (std::size_t j : topic_items[topics[regime]])
          if (!used[j]) pool.push_back(j);
      if (pool.empty())
        for (std::size_t j = 0; j < n; ++j)
          if (!used[j]) pool.push_back(j);
      // Softmax over the static utility picks among the pool.
      std::vector<double> w(pool.size());
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t q = 0; q < pool.size(); ++q) {
        w[q] = spec.selectivity * dot(s, truth.item_factors.row(pool[q]));
        top = std::max(top, w[q]);
      }
      double total = 0.0;
      for (double& x : w) total += (x = std::exp(x - top));
      double pick = ur.uniform() * total;
      std::size_t q = 0;
      while (q + 1 < pool.size() && pick >= w[q]) pick -= w[q++];
      const std::size_t j = pool[q];
      used[j] = true;
      double r = 3.0 + dot(uf.row(regime), truth.item_factors.row(j));
      if (spec.noise_std > 0.0) r += spec.noise_std * ur.normal();
      r = std::clamp(r, 1.0, 5.0);
      ts += 1 + static_cast<std::int64_t>(ur.below(99));
      out.corpus.events.push_back({i, j, r, ts, out.corpus.events.size()});
      truth.event_regime.push_back(regime);
    }
    truth.user_factors[i] = std::move(uf);
  }
  return out;
}

void write_drift_truth(const std::filesystem::path& path, const DriftData& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "row\tuser\titem\tregime\ttopic\n";
  const Corpus& c = data.corpus;
  for (std::size_t k = 0; k < c.events.size(); ++k) {
    const Event& e = c.events[k];
    const std::size_t regime = data.truth.event_regime[k];
    out << e.row << '\t' << c.users.id(e.user) << '\t' << c.items.id(e.item) << '\t' << regime << '\t'
        << data.truth.user_topics[e.user][regime] << '\n';
  }
}

OracleComparison drift_oracle(const DriftData& data, double prefix_fraction, std::size_t k) {
  const Corpus& c = data.corpus;
  const DriftTruth& truth = data.truth;
  auto shared = std::make_shared<const Corpus>(c);
  const SplitResult split = split_per_user_prefix(shared, prefix_fraction);
  const std::size_t n = c.num_items();

  std::vector<double> popularity(n, 0.0);
  for (std::size_t p : split.train) popularity[c.events[p].item] += 1.0;

  const auto hist = sequences(c, split.train);
  const auto test = sequences(c, split.test);
  std::vector<std::vector<std::size_t>> oracle_lists, pop_lists, truths;
  std::vector<double> utility(n);
  std::vector<bool> seen(n);
  for (std::size_t u = 0; u < c.num_users(); ++u) {
    if (test[u].events.empty()) continue;
    std::fill(seen.begin(), seen.end(), false);
    for (const auto& e : hist[u].events) seen[e.item] = true;
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < n; ++j)
      if (!seen[j]) candidates.push_back(j);
    const std::size_t regime = truth.event_regime[test[u].events.front().position];
    const std::size_t topic = truth.user_topics[u][regime];
    for (std::size_t j : candidates) {
      utility[j] = dot(truth.static_factors.row(u), truth.item_factors.row(j));
      if (truth.item_topic[j] == topic) utility[j] += 100.0;
    }
    oracle_lists.push_back(rank_items(utility, candidates, k));
    pop_lists.push_back(rank_items(popularity, candidates, k));
    std::vector<std::size_t> t;
    for (const auto& e : test[u].events) t.push_back(e.item);
    truths.push_back(std::move(t));
  }
  OracleComparison r;
  r.oracle_hr = ranking_metrics(oracle_lists, truths, k).hr;
  r.popularity_hr = ranking_metrics(pop_lists, truths, k).hr;
  r.users = truths.size();
  return r;
}

}  // namespace s2pnm
