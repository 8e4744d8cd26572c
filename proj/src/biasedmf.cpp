#include "s2pnm/biasedmf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "s2pnm/error.hpp"

namespace s2pnm {

MfParams init_mf(std::size_t m, std::size_t n, std::size_t d_user, double global_mean,
                 const std::vector<bool>& seen_users, const std::vector<bool>& seen_items,
                 Rng& rng) {
  if (d_user == 0) throw ConfigError("d_user must be at least 1");
  MfParams p;
  Rng user_rng = rng.split("user_factors");
  Rng item_rng = rng.split("item_factors");
  p.user_factors = glorot_uniform(m, d_user, user_rng);
  p.item_factors = glorot_uniform(n, d_user, item_rng);
  p.user_bias = Tensor({m});
  p.item_bias = Tensor({n});
  p.global_mean = global_mean;
  for (std::size_t u = 0; u < m; ++u)
    if (u < seen_users.size() && !seen_users[u]) std::ranges::fill(p.user_factors.row(u), 0.0);
  for (std::size_t j = 0; j < n; ++j)
    if (j < seen_items.size() && !seen_items[j]) std::ranges::fill(p.item_factors.row(j), 0.0);
  return p;
}

double predict_static(const MfParams& p, std::size_t user, std::size_t item) {
  return predict(p, user, item, {});
}

double task_global_mean(const Corpus& corpus, std::span<const std::size_t> train, Task task,
                        const NegativeSampling& neg) {
  if (train.empty()) throw DataError("empty train split");
  if (task == Task::kRanking) {
    const double pos = neg.w_pos;
    const double negw = neg.w_neg * static_cast<double>(neg.n_neg);
    return pos / (pos + negw);
  }
  double s = 0.0;
  for (std::size_t p : train) s += corpus.events[p].rating;
  return s / static_cast<double>(train.size());
}

double mf_objective(const MfParams& p, const Corpus& corpus, std::span<const std::size_t> train,
                    double l2) {
  double s = 0.0;
  for (std::size_t pos : train) {
    const Event& e = corpus.events[pos];
    const double r = e.rating - predict_static(p, e.user, e.item);
    s += r * r;
  }
  return s + l2_penalty(p, l2);
}

namespace {

struct MfGrad {
  Tensor u, v, bu, bi;
};

struct MfAdam {
  Tensor mu, vu, mv, vv, mbu, vbu, mbi, vbi;
  std::int64_t t = 0;
};

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

}  // namespace

MfTrainResult train_mf(const Corpus& corpus, std::span<const std::size_t> train,
                       const MfConfig& cfg, const MfValidation* validation) {
  if (train.empty()) throw DataError("cannot train on an empty split");
  const std::size_t m = corpus.num_users();
  const std::size_t n = corpus.num_items();

  std::vector<bool> seen_u(m, false), seen_i(n, false);
  std::vector<std::vector<std::size_t>> user_items(m);
  for (std::size_t p : train) {
    const Event& e = corpus.events[p];
    seen_u[e.user] = true;
    seen_i[e.item] = true;
    user_items[e.user].push_back(e.item);
  }

  Rng root(cfg.seed);
  Rng init_rng = root.split("init");
  MfTrainResult result;
  result.params = init_mf(m, n, cfg.d_user, task_global_mean(corpus, train, cfg.task, cfg.negatives),
                          seen_u, seen_i, init_rng);
  MfParams& p = result.params;

  MfGrad g{zeros_like(p.user_factors), zeros_like(p.item_factors), zeros_like(p.user_bias),
           zeros_like(p.item_bias)};
  MfAdam st{zeros_like(p.user_factors), zeros_like(p.user_factors), zeros_like(p.item_factors),
            zeros_like(p.item_factors), zeros_like(p.user_bias),   zeros_like(p.user_bias),
            zeros_like(p.item_bias),    zeros_like(p.item_bias)};

  std::optional<double> best_metric;
  MfParams best = p;
  if (validation && validation->metric) best_metric = validation->metric(p);

  const double n_train = static_cast<double>(train.size());
  const std::size_t batch_size = std::max<std::size_t>(1, cfg.batch_size);
  std::vector<std::size_t> order(train.begin(), train.end());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    AdamConfig adam = cfg.adam;
    adam.lr = cfg.lr * std::pow(cfg.lr_decay, static_cast<double>((epoch - 1) /
                                                                  std::max<std::size_t>(1, cfg.decay_every_epochs)));
    Rng shuffle = root.split("shuffle").split(epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    Rng neg_root = root.split("negatives").split(epoch);

    double epoch_loss = 0.0;
    for (std::size_t b0 = 0, batch_id = 0; b0 < order.size(); b0 += batch_size, ++batch_id) {
      const std::size_t b1 = std::min(order.size(), b0 + batch_size);
      g.u.fill(0.0);
      g.v.fill(0.0);
      g.bu.fill(0.0);
      g.bi.fill(0.0);
      double batch_loss = 0.0;

      auto accumulate = [&](std::size_t user, std::size_t item, double target, double weight) {
        const double pred = predict_static(p, user, item);
        const double r = target - pred;
        batch_loss += weight * r * r;
        const double d = -2.0 * weight * r;
        g.bu[user] += d;
        g.bi[item] += d;
        auto u = p.user_factors.row(user);
        auto v = p.item_factors.row(item);
        axpy(d, v, g.u.row(user));
        axpy(d, u, g.v.row(item));
      };

      for (std::size_t k = b0; k < b1; ++k) {
        const Event& e = corpus.events[order[k]];
        if (cfg.task == Task::kRating) {
          accumulate(e.user, e.item, e.rating, 1.0);
        } else {
          accumulate(e.user, e.item, 1.0, cfg.negatives.w_pos);
          Rng r = neg_root.split(order[k]);
          for (std::size_t j : sample_negatives(user_items[e.user], cfg.negatives.n_neg, n, r))
            accumulate(e.user, j, 0.0, cfg.negatives.w_neg);
        }
      }
      // Penalty share for this batch; unseen rows are zero and stay zero.
      const double share = static_cast<double>(b1 - b0) / n_train;
      batch_loss += share * l2_penalty(p, cfg.l2);
      axpy(2.0 * cfg.l2 * share, p.user_factors.values(), g.u.values());
      axpy(2.0 * cfg.l2 * share, p.item_factors.values(), g.v.values());

      if (!std::isfinite(batch_loss)) {
        throw DataError("matrix factorization diverged at epoch " + std::to_string(epoch) +
                        ", batch " + std::to_string(batch_id));
      }
      epoch_loss += batch_loss;

      ++st.t;
      adam_update(p.user_factors.values(), g.u.values(), st.mu.values(), st.vu.values(), st.t, adam);
      adam_update(p.item_factors.values(), g.v.values(), st.mv.values(), st.vv.values(), st.t, adam);
      adam_update(p.user_bias.values(), g.bu.values(), st.mbu.values(), st.vbu.values(), st.t, adam);
      adam_update(p.item_bias.values(), g.bi.values(), st.mbi.values(), st.vbi.values(), st.t, adam);
      // Unseen rows get zero gradient but Adam moments are zero as well, so
      // they remain exactly zero.
    }

    MfEpoch log;
    log.epoch = epoch;
    log.lr = adam.lr;
    log.train_loss = cfg.task == Task::kRating ? mf_objective(p, corpus, train, cfg.l2) : epoch_loss;
    double sse = 0.0;
    for (std::size_t pos : train) {
      const Event& e = corpus.events[pos];
      const double target = cfg.task == Task::kRating ? e.rating : 1.0;
      const double r = target - predict_static(p, e.user, e.item);
      sse += r * r;
    }
    log.train_rmse = std::sqrt(sse / n_train);
    if (!std::isfinite(log.train_loss)) {
      throw DataError("matrix factorization diverged at epoch " + std::to_string(epoch));
    }
    if (validation && validation->metric) {
      const double metric = validation->metric(p);
      log.val_metric = metric;
      const bool better = validation->higher_is_better ? metric > *best_metric : metric < *best_metric;
      if (better) {
        best_metric = metric;
        best = p;
        result.best_epoch = epoch;
      }
    }
    result.log.push_back(log);
  }

  if (validation && validation->metric) {
    result.params = std::move(best);
  } else {
    result.best_epoch = cfg.epochs;
  }
  return result;
}

}  // namespace s2pnm
