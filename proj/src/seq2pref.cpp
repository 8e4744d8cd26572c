#include "s2pnm/seq2pref.hpp"

#include <algorithm>
#include <cmath>

#include "s2pnm/error.hpp"

namespace s2pnm {

Seq2PrefDims Seq2PrefParams::dims() const {
  return {item_embed.rows(), item_embed.cols(), u_update.rows(), dec_b.size(), dictionary.cols()};
}

Seq2PrefParams zero_seq2pref(const Seq2PrefDims& d, Activation psi) {
  if (d.d_embed == 0 || d.d_gru == 0 || d.d_dict == 0 || d.d_user == 0) {
    throw ConfigError("all network dimensions must be at least 1");
  }
  Seq2PrefParams p;
  p.item_embed = Tensor({d.n_items, d.d_embed});
  for (Tensor* w : {&p.w_update, &p.w_reset, &p.w_cand}) *w = Tensor({d.d_embed, d.d_gru});
  for (Tensor* u : {&p.u_update, &p.u_reset, &p.u_cand}) *u = Tensor({d.d_gru, d.d_gru});
  for (Tensor* b : {&p.b_update, &p.b_reset, &p.b_cand}) *b = Tensor({d.d_gru});
  p.attn_w = Tensor({d.d_gru, d.d_gru});
  p.attn_b = Tensor({d.d_gru});
  p.dec_w = Tensor({4 * d.d_gru, d.d_dict});
  p.dec_b = Tensor({d.d_dict});
  p.dictionary = Tensor({d.d_dict, d.d_user});
  p.psi = psi;
  return p;
}

Seq2PrefParams init_seq2pref(const Seq2PrefDims& d, Activation psi,
                             const std::vector<bool>& seen_items, Rng& rng) {
  Seq2PrefParams p = zero_seq2pref(d, psi);
  Rng r = rng.split("embed");
  p.item_embed = glorot_uniform(d.n_items, d.d_embed, r);
  for (std::size_t j = 0; j < d.n_items; ++j)
    if (j < seen_items.size() && !seen_items[j]) std::ranges::fill(p.item_embed.row(j), 0.0);
  std::uint64_t stream = 0;
  for (Tensor* w : {&p.w_update, &p.w_reset, &p.w_cand}) {
    Rng wr = rng.split("gru_input").split(stream++);
    *w = glorot_uniform(d.d_embed, d.d_gru, wr);
  }
  for (Tensor* u : {&p.u_update, &p.u_reset, &p.u_cand}) {
    Rng ur = rng.split("gru_recurrent").split(stream++);
    *u = orthogonal_init(d.d_gru, ur);
  }
  Rng ar = rng.split("attention");
  p.attn_w = glorot_uniform(d.d_gru, d.d_gru, ar);
  Rng dr = rng.split("decoder");
  p.dec_w = glorot_uniform(4 * d.d_gru, d.d_dict, dr);
  Rng kr = rng.split("dictionary");
  p.dictionary = glorot_uniform(d.d_dict, d.d_user, kr);
  return p;
}

namespace {

struct GruOut {
  std::vector<double> r, u, n, rh, h;
};

GruOut gru_forward(std::span<const double> e, std::span<const double> h_prev,
                   const Seq2PrefParams& p) {
  const std::size_t d = p.b_update.size();
  GruOut o;
  o.r.assign(p.b_reset.values().begin(), p.b_reset.values().end());
  o.u.assign(p.b_update.values().begin(), p.b_update.values().end());
  o.n.assign(p.b_cand.values().begin(), p.b_cand.values().end());
  vec_mat_acc(e, p.w_reset, o.r);
  vec_mat_acc(h_prev, p.u_reset, o.r);
  vec_mat_acc(e, p.w_update, o.u);
  vec_mat_acc(h_prev, p.u_update, o.u);
  for (std::size_t k = 0; k < d; ++k) {
    o.r[k] = sigmoid(o.r[k]);
    o.u[k] = sigmoid(o.u[k]);
  }
  o.rh.resize(d);
  for (std::size_t k = 0; k < d; ++k) o.rh[k] = o.r[k] * h_prev[k];
  vec_mat_acc(e, p.w_cand, o.n);
  vec_mat_acc(o.rh, p.u_cand, o.n);
  o.h.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    o.n[k] = std::tanh(o.n[k]);
    o.h[k] = (1.0 - o.u[k]) * h_prev[k] + o.u[k] * o.n[k];
  }
  return o;
}

struct AttnOut {
  std::vector<double> hp, alpha, g;
};

AttnOut attention_forward(std::span<const std::vector<double>> hidden, std::size_t t,
                          const Seq2PrefParams& p) {
  const std::size_t d = p.attn_b.size();
  AttnOut o;
  o.hp.assign(p.attn_b.values().begin(), p.attn_b.values().end());
  vec_mat_acc(hidden[t], p.attn_w, o.hp);
  for (double& v : o.hp) v = std::tanh(v);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> scores(t + 1);
  for (std::size_t j = 0; j <= t; ++j) scores[j] = dot(hidden[j], o.hp) * scale;
  o.alpha = softmax(scores);
  o.g.assign(d, 0.0);
  for (std::size_t j = 0; j <= t; ++j) axpy(o.alpha[j], hidden[j], o.g);
  return o;
}

std::vector<double> fuse(std::span<const double> h, std::span<const double> g) {
  const std::size_t d = h.size();
  std::vector<double> z(4 * d);
  for (std::size_t k = 0; k < d; ++k) {
    z[k] = h[k];
    z[d + k] = g[k];
    z[2 * d + k] = h[k] - g[k];
    z[3 * d + k] = h[k] * g[k];
  }
  return z;
}

}  // namespace

bool masked_exp_normalize(std::span<const double> c, std::span<double> p) {
  const std::size_t n = c.size();
  double cmax = -INFINITY;
  for (double v : c)
    if (v != 0.0) cmax = std::max(cmax, v);
  if (cmax == -INFINITY) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(n));
    return false;
  }
  // sign(|c|) * exp(c), shifted by the largest unmasked entry.
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    p[k] = c[k] != 0.0 ? std::exp(c[k] - cmax) : 0.0;
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return true;
}

std::vector<double> gru_step(std::span<const double> h_prev, std::size_t item,
                             const Seq2PrefParams& p) {
  if (item >= p.item_embed.rows()) throw DataError("item index out of range in GRU step");
  if (h_prev.size() != p.b_update.size()) throw DataError("hidden state has the wrong size");
  return gru_forward(p.item_embed.row(item), h_prev, p).h;
}

AttentionResult attention(std::span<const std::vector<double>> hidden, std::size_t t,
                          const Seq2PrefParams& p) {
  if (hidden.empty()) throw DataError("attention over an empty hidden-state list");
  if (t >= hidden.size()) throw DataError("attention position out of range");
  AttnOut o = attention_forward(hidden, t, p);
  return {std::move(o.alpha), std::move(o.g)};
}

std::vector<double> decode_posterior(std::span<const double> h, std::span<const double> g,
                                     const Seq2PrefParams& p, std::span<const double> z_mask) {
  const std::size_t d = p.b_update.size();
  if (h.size() != d || g.size() != d) throw DataError("decoder input has the wrong size");
  std::vector<double> z = fuse(h, g);
  if (!z_mask.empty())
    for (std::size_t k = 0; k < z.size(); ++k) z[k] *= z_mask[k];
  std::vector<double> c(p.dec_b.values().begin(), p.dec_b.values().end());
  vec_mat_acc(z, p.dec_w, c);
  for (double& v : c) v = activate(p.psi, v);
  std::vector<double> out(c.size());
  masked_exp_normalize(c, out);
  return out;
}

std::vector<double> dynamic_preference(std::span<const double> posterior, const Tensor& dictionary) {
  if (posterior.size() != dictionary.rows()) {
    throw DataError("posterior length " + std::to_string(posterior.size()) +
                    " does not match dictionary " + dictionary.shape_string());
  }
  std::vector<double> u(dictionary.cols(), 0.0);
  vec_mat_acc(posterior, dictionary, u);
  return u;
}

SeqState forward_sequence(const UserSequence& seq, const Seq2PrefParams& p) {
  if (seq.events.empty()) throw DataError("forward pass over an empty sequence");
  SeqFragment frag(p, SeqCarry{}, 0.0, Mode::kEval);
  Rng unused(0);
  SeqState s;
  for (const SeqEvent& e : seq.events) frag.consume(e.item, unused);
  for (std::size_t t = 0; t < frag.length(); ++t) {
    s.hidden.push_back(frag.hidden(t));
    s.alpha.push_back(frag.alpha(t));
    s.context.push_back(frag.context(t));
    s.posterior.push_back(frag.posterior(t));
    s.u_bar.push_back(dynamic_preference(frag.posterior(t), p.dictionary));
  }
  return s;
}

// ---------------------------------------------------------------------------

SeqFragment::SeqFragment(const Seq2PrefParams& params, const SeqCarry& carry, double p_drop,
                         Mode mode)
    : params_(params),
      p_drop_(p_drop),
      mode_(mode),
      n_past_(carry.past_hidden.size()),
      hidden_(carry.past_hidden),
      carried_posterior_(carry.posterior) {}

const std::vector<double>& SeqFragment::hidden(std::size_t s) const { return hidden_[n_past_ + s]; }

void SeqFragment::consume(std::size_t item, Rng& drop_rng) {
  const Seq2PrefParams& p = params_;
  if (item >= p.item_embed.rows()) throw DataError("item index out of range in GRU step");
  const std::size_t d = p.b_update.size();
  const std::size_t de = p.item_embed.cols();

  Step st;
  st.item = item;
  st.embed_mask = dropout_mask(de, p_drop_, mode_, drop_rng);
  st.e.resize(de);
  const auto emb = p.item_embed.row(item);
  for (std::size_t k = 0; k < de; ++k) st.e[k] = emb[k] * st.embed_mask[k];
  st.h_prev = hidden_.empty() ? std::vector<double>(d, 0.0) : hidden_.back();

  GruOut gru = gru_forward(st.e, st.h_prev, p);
  st.r = std::move(gru.r);
  st.u = std::move(gru.u);
  st.n = std::move(gru.n);
  st.rh = std::move(gru.rh);
  hidden_.push_back(std::move(gru.h));

  const std::size_t t = hidden_.size() - 1;
  AttnOut att = attention_forward(hidden_, t, p);
  st.hp = std::move(att.hp);
  st.alpha = std::move(att.alpha);
  st.g = std::move(att.g);

  st.z = fuse(hidden_[t], st.g);
  st.z_mask = dropout_mask(st.z.size(), p_drop_, mode_, drop_rng);
  for (std::size_t k = 0; k < st.z.size(); ++k) st.z[k] *= st.z_mask[k];
  st.a.assign(p.dec_b.values().begin(), p.dec_b.values().end());
  vec_mat_acc(st.z, p.dec_w, st.a);
  std::vector<double> c(st.a.size());
  for (std::size_t k = 0; k < c.size(); ++k) c[k] = activate(p.psi, st.a[k]);
  st.p.resize(c.size());
  st.uniform = !masked_exp_normalize(c, st.p);
  steps_.push_back(std::move(st));
}

SeqCarry SeqFragment::carry_out() const {
  SeqCarry c;
  c.past_hidden = hidden_;
  c.posterior = steps_.empty() ? carried_posterior_ : steps_.back().p;
  return c;
}

void SeqFragment::backward(std::span<const std::vector<double>> d_posterior,
                           Seq2PrefParams& grad) const {
  const Seq2PrefParams& p = params_;
  const std::size_t d = p.b_update.size();
  const std::size_t len = steps_.size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  // dL/dh for every new hidden state, filled by the decoder, attention and
  // the recurrence as the loop walks backwards.
  std::vector<std::vector<double>> dh(len, std::vector<double>(d, 0.0));
  std::vector<double> dz, dhp, dpre, da;

  for (std::size_t s = len; s-- > 0;) {
    const Step& st = steps_[s];
    const std::size_t t = n_past_ + s;
    const std::vector<double>& h = hidden_[t];
    std::vector<double> dg(d, 0.0);

    // Decoder: p = normalize(mask * exp(psi(z W + b))).
    const bool has_dp = s < d_posterior.size() && !d_posterior[s].empty();
    if (has_dp && !st.uniform) {
      const auto& dp = d_posterior[s];
      const double sdot = dot(st.p, dp);
      da.assign(st.p.size(), 0.0);
      for (std::size_t k = 0; k < da.size(); ++k) {
        const double dc = st.p[k] * (dp[k] - sdot);
        da[k] = dc * activate_grad(p.psi, st.a[k]);
      }
      dz.assign(st.z.size(), 0.0);
      vec_mat_backward(st.z, p.dec_w, da, grad.dec_w, dz);
      axpy(1.0, da, grad.dec_b.values());
      for (std::size_t k = 0; k < dz.size(); ++k) dz[k] *= st.z_mask[k];
      for (std::size_t k = 0; k < d; ++k) {
        dh[s][k] += dz[k] + dz[2 * d + k] + dz[3 * d + k] * st.g[k];
        dg[k] += dz[d + k] - dz[2 * d + k] + dz[3 * d + k] * h[k];
      }
    }

    // Attention: g = sum_j alpha_j h_j, alpha = softmax(h_j . hp / sqrt(d)).
    bool any_dg = false;
    for (double v : dg) any_dg |= v != 0.0;
    if (any_dg) {
      std::vector<double> dalpha(t + 1);
      for (std::size_t j = 0; j <= t; ++j) dalpha[j] = dot(dg, hidden_[j]);
      const double adot = dot(st.alpha, dalpha);
      dhp.assign(d, 0.0);
      for (std::size_t j = 0; j <= t; ++j) {
        const double de = st.alpha[j] * (dalpha[j] - adot);
        axpy(de * scale, hidden_[j], dhp);
        if (j >= n_past_) {
          auto& dhj = dh[j - n_past_];
          axpy(st.alpha[j], dg, dhj);
          axpy(de * scale, st.hp, dhj);
        }
      }
      dpre.resize(d);
      for (std::size_t k = 0; k < d; ++k) dpre[k] = dhp[k] * (1.0 - st.hp[k] * st.hp[k]);
      vec_mat_backward(h, p.attn_w, dpre, grad.attn_w, dh[s]);
      axpy(1.0, dpre, grad.attn_b.values());
    }

    // GRU: h = (1 - u) h_prev + u n.
    const auto& dht = dh[s];
    std::vector<double> dh_prev(d, 0.0), dn(d), du(d), dr(d), drh(d, 0.0);
    std::vector<double> de(st.e.size(), 0.0);
    for (std::size_t k = 0; k < d; ++k) {
      du[k] = dht[k] * (st.n[k] - st.h_prev[k]) * st.u[k] * (1.0 - st.u[k]);
      dn[k] = dht[k] * st.u[k] * (1.0 - st.n[k] * st.n[k]);
      dh_prev[k] = dht[k] * (1.0 - st.u[k]);
    }
    vec_mat_backward(st.e, p.w_cand, dn, grad.w_cand, de);
    vec_mat_backward(st.rh, p.u_cand, dn, grad.u_cand, drh);
    axpy(1.0, dn, grad.b_cand.values());
    for (std::size_t k = 0; k < d; ++k) {
      dr[k] = drh[k] * st.h_prev[k] * st.r[k] * (1.0 - st.r[k]);
      dh_prev[k] += drh[k] * st.r[k];
    }
    vec_mat_backward(st.e, p.w_update, du, grad.w_update, de);
    vec_mat_backward(st.h_prev, p.u_update, du, grad.u_update, dh_prev);
    axpy(1.0, du, grad.b_update.values());
    vec_mat_backward(st.e, p.w_reset, dr, grad.w_reset, de);
    vec_mat_backward(st.h_prev, p.u_reset, dr, grad.u_reset, dh_prev);
    axpy(1.0, dr, grad.b_reset.values());

    auto demb = grad.item_embed.row(st.item);
    for (std::size_t k = 0; k < de.size(); ++k) demb[k] += de[k] * st.embed_mask[k];

    if (s > 0) axpy(1.0, dh_prev, dh[s - 1]);
  }
}

}  // namespace s2pnm
