#include "s2pnm/model.hpp"

#include <cmath>
#include <optional>

#include "s2pnm/error.hpp"

namespace s2pnm {

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::kFull;
  if (name == "static") return Variant::kStaticOnly;
  if (name == "dynamic") return Variant::kDynamicOnly;
  throw ConfigError("unknown variant '" + name + "' (expected full, static or dynamic)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kStaticOnly: return "static";
    case Variant::kDynamicOnly: return "dynamic";
  }
  return "?";
}

namespace {

template <class P, class T>
std::vector<std::pair<std::string, T*>> collect(P& p) {
  return {
      {"user_factors", &p.mf.user_factors},
      {"item_factors", &p.mf.item_factors},
      {"user_bias", &p.mf.user_bias},
      {"item_bias", &p.mf.item_bias},
      {"item_embed", &p.net.item_embed},
      {"gru.w_update", &p.net.w_update},
      {"gru.w_reset", &p.net.w_reset},
      {"gru.w_cand", &p.net.w_cand},
      {"gru.u_update", &p.net.u_update},
      {"gru.u_reset", &p.net.u_reset},
      {"gru.u_cand", &p.net.u_cand},
      {"gru.b_update", &p.net.b_update},
      {"gru.b_reset", &p.net.b_reset},
      {"gru.b_cand", &p.net.b_cand},
      {"attn.w", &p.net.attn_w},
      {"attn.b", &p.net.attn_b},
      {"decoder.w", &p.net.dec_w},
      {"decoder.b", &p.net.dec_b},
      {"dictionary", &p.net.dictionary},
  };
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> named_tensors(S2pnmParams& p) {
  return collect<S2pnmParams, Tensor>(p);
}

std::vector<std::pair<std::string, const Tensor*>> named_tensors(const S2pnmParams& p) {
  return collect<const S2pnmParams, const Tensor>(p);
}

S2pnmParams zeros_like(const S2pnmParams& p) {
  S2pnmParams z = p;
  for (auto& [name, t] : named_tensors(z)) t->fill(0.0);
  z.mf.global_mean = 0.0;
  return z;
}

bool is_trainable(const std::string& name, Variant v) {
  const bool is_mf = name == "user_factors" || name == "item_factors" || name == "user_bias" ||
                     name == "item_bias";
  if (v == Variant::kStaticOnly) return is_mf;
  if (v == Variant::kDynamicOnly) return name != "user_factors";
  return true;
}

double score(const S2pnmParams& params, std::size_t user, std::size_t item,
             std::span<const double> u_bar) {
  const MfParams& mf = params.mf;
  switch (params.variant) {
    case Variant::kFull:
      return predict(mf, user, item, u_bar);
    case Variant::kStaticOnly:
      return predict(mf, user, item, {});
    case Variant::kDynamicOnly: {
      if (user >= mf.num_users() || item >= mf.num_items()) {
        throw DataError("prediction index out of range");
      }
      double s = mf.global_mean + mf.user_bias[user] + mf.item_bias[item];
      if (!u_bar.empty()) s += dot(u_bar, mf.item_factors.row(item));
      return s;
    }
  }
  return 0.0;
}

BatchResult batch_loss(const S2pnmParams& params, std::span<const FragmentJob> jobs,
                       const LossConfig& cfg, const Rng& rng, S2pnmParams* grad) {
  const MfParams& mf = params.mf;
  const Seq2PrefParams& net = params.net;
  const bool dynamic = params.variant != Variant::kStaticOnly;
  const bool use_static = params.variant != Variant::kDynamicOnly;
  const std::size_t d_user = mf.d_user();
  const std::size_t n_items = mf.num_items();

  BatchResult out;
  out.carries.reserve(jobs.size());

  for (const FragmentJob& job : jobs) {
    const UserSequence& seq = *job.sequence;
    const std::size_t user = seq.user;
    if (job.begin >= job.end || job.end > seq.events.size()) {
      throw DataError("fragment [" + std::to_string(job.begin) + ", " + std::to_string(job.end) +
                      ") outside a sequence of length " + std::to_string(seq.events.size()));
    }
    const std::size_t len = job.end - job.begin;
    const Rng user_rng = rng.split(user);

    std::optional<SeqFragment> frag;
    if (dynamic) frag.emplace(net, job.carry, cfg.p_drop, cfg.mode);

    // dL/du_bar for each scored event; slot s is event begin + s, whose
    // dynamic preference comes from the posterior before it.
    std::vector<std::vector<double>> du(len);
    std::vector<std::vector<double>> u_bar_used(len);

    std::vector<std::size_t> history;
    history.reserve(job.end);
    for (std::size_t k = 0; k < job.begin; ++k) history.push_back(seq.events[k].item);

    for (std::size_t s = 0; s < len; ++s) {
      const std::size_t k = job.begin + s;
      const SeqEvent& ev = seq.events[k];
      history.push_back(ev.item);
      Rng step_rng = user_rng.split(k);
      Rng neg_rng = step_rng.split("negatives");
      Rng drop_rng = step_rng.split("dropout");

      const std::vector<double>* post = nullptr;
      if (dynamic) {
        if (s > 0) post = &frag->posterior(s - 1);
        else if (!job.carry.posterior.empty()) post = &job.carry.posterior;
      }
      if (post) u_bar_used[s] = dynamic_preference(*post, net.dictionary);

      auto add_example = [&](std::size_t item, double target, double weight) {
        const double pred = score(params, user, item, u_bar_used[s]);
        const double r = target - pred;
        out.data_loss += weight * r * r;
        if (!grad) return;
        const double dpred = -2.0 * weight * r;
        grad->mf.user_bias[user] += dpred;
        grad->mf.item_bias[item] += dpred;
        const auto v = mf.item_factors.row(item);
        const auto u = mf.user_factors.row(user);
        auto gv = grad->mf.item_factors.row(item);
        if (use_static) {
          axpy(dpred, v, grad->mf.user_factors.row(user));
          axpy(dpred, u, gv);
        }
        if (!u_bar_used[s].empty()) {
          axpy(dpred, u_bar_used[s], gv);
          if (du[s].empty()) du[s].assign(d_user, 0.0);
          axpy(dpred, v, du[s]);
        }
      };

      if (cfg.task == Task::kRating) {
        add_example(ev.item, ev.rating, 1.0);
        ++out.positives;
      } else {
        add_example(ev.item, 1.0, cfg.negatives.w_pos);
        ++out.positives;
        for (std::size_t j : sample_negatives(history, cfg.negatives.n_neg, n_items, neg_rng)) {
          add_example(j, 0.0, cfg.negatives.w_neg);
          ++out.negatives;
        }
      }

      if (dynamic) frag->consume(ev.item, drop_rng);
    }

    if (grad && dynamic) {
      // u_bar = p^T D
      std::vector<std::vector<double>> dpost(len);
      for (std::size_t s = 0; s < len; ++s) {
        if (du[s].empty()) continue;
        const std::vector<double>& p = s > 0 ? frag->posterior(s - 1) : job.carry.posterior;
        std::vector<double> dp(p.size(), 0.0);
        vec_mat_backward(p, net.dictionary, du[s], grad->net.dictionary, dp);
        if (s > 0) dpost[s - 1] = std::move(dp);
      }
      frag->backward(dpost, grad->net);
    }

    if (dynamic && cfg.record_pattern) {
      for (std::size_t s = 0; s < frag->length(); ++s)
        for (double a : frag->decoder_input(s)) out.decoder_pattern.push_back(activate(net.psi, a) != 0.0);
    }

    if (dynamic) {
      out.carries.push_back(frag->carry_out());
    } else {
      out.carries.emplace_back();
    }
  }

  // Penalty on user/item factors and the item embedding.
  const double lam = cfg.l2 * cfg.penalty_share;
  double penalty = 0.0;
  auto penalize = [&](const Tensor& x, Tensor* gx) {
    const auto v = x.values();
    penalty += lam * dot(v, v);
    if (gx) axpy(2.0 * lam, v, gx->values());
  };
  if (lam != 0.0) {
    if (use_static) penalize(mf.user_factors, grad ? &grad->mf.user_factors : nullptr);
    penalize(mf.item_factors, grad ? &grad->mf.item_factors : nullptr);
    if (dynamic) penalize(net.item_embed, grad ? &grad->net.item_embed : nullptr);
  }
  out.loss = out.data_loss + penalty;

  if (grad) {
    for (auto& [name, t] : named_tensors(*grad))
      if (!is_trainable(name, params.variant)) t->fill(0.0);
  }
  return out;
}

SequenceScores infer_sequence(const S2pnmParams& params, const UserSequence& seq) {
  SequenceScores out;
  const std::size_t t_len = seq.events.size();
  out.u_bar_before.resize(t_len);
  if (params.variant == Variant::kStaticOnly || t_len == 0) return out;
  SeqFragment frag(params.net, SeqCarry{}, 0.0, Mode::kEval);
  Rng unused(0);
  for (std::size_t t = 0; t < t_len; ++t) {
    if (t > 0) out.u_bar_before[t] = dynamic_preference(frag.posterior(t - 1), params.net.dictionary);
    frag.consume(seq.events[t].item, unused);
  }
  out.u_bar_after = dynamic_preference(frag.posterior(t_len - 1), params.net.dictionary);
  return out;
}

}  // namespace s2pnm
