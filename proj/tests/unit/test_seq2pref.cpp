#include <doctest.h>

#include <cmath>

#include "s2pnm/error.hpp"
#include "s2pnm/seq2pref.hpp"

using namespace s2pnm;

namespace {

std::vector<bool> all_seen(std::size_t n) { return std::vector<bool>(n, true); }

Seq2PrefParams random_params(const Seq2PrefDims& d, Activation psi, Rng& rng, double bias_scale = 0.5) {
  Seq2PrefParams p = init_seq2pref(d, psi, all_seen(d.n_items), rng);
  for (Tensor* t : {&p.b_update, &p.b_reset, &p.b_cand, &p.attn_b, &p.dec_b})
    for (double& v : t->values()) v = rng.uniform(-bias_scale, bias_scale);
  return p;
}

UserSequence make_seq(std::vector<std::size_t> items) {
  UserSequence s;
  for (std::size_t k = 0; k < items.size(); ++k) s.events.push_back({items[k], 1.0, static_cast<std::int64_t>(k), k});
  return s;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Written out from the model definition, independent of the library code paths.
// Weights are [in x out]: (x^T W)_j = sum_i x_i W_ij.
std::vector<double> ref_affine(const std::vector<double>& x, const Tensor& w) {
  std::vector<double> y(w.cols(), 0.0);
  for (std::size_t j = 0; j < w.cols(); ++j)
    for (std::size_t i = 0; i < x.size(); ++i) y[j] += x[i] * w.at(i, j);
  return y;
}

std::vector<double> ref_gru(const std::vector<double>& h, std::size_t item, const Seq2PrefParams& p) {
  const std::vector<double> e(p.item_embed.row(item).begin(), p.item_embed.row(item).end());
  const auto wr = ref_affine(e, p.w_reset), ur = ref_affine(h, p.u_reset);
  const auto wz = ref_affine(e, p.w_update), uz = ref_affine(h, p.u_update);
  const std::size_t d = h.size();
  std::vector<double> r(d), z(d), rh(d), out(d);
  for (std::size_t k = 0; k < d; ++k) {
    r[k] = sig(wr[k] + ur[k] + p.b_reset[k]);
    z[k] = sig(wz[k] + uz[k] + p.b_update[k]);
    rh[k] = r[k] * h[k];
  }
  const auto wc = ref_affine(e, p.w_cand), uc = ref_affine(rh, p.u_cand);
  for (std::size_t k = 0; k < d; ++k) out[k] = (1 - z[k]) * h[k] + z[k] * std::tanh(wc[k] + uc[k] + p.b_cand[k]);
  return out;
}

std::vector<double> ref_u_bar(const std::vector<std::size_t>& items, const Seq2PrefParams& p) {
  const std::size_t d = p.u_update.rows();
  std::vector<std::vector<double>> hs;
  std::vector<double> h(d, 0.0);
  for (std::size_t it : items) hs.push_back(h = ref_gru(h, it, p));
  auto hp = ref_affine(h, p.attn_w);
  for (std::size_t k = 0; k < d; ++k) hp[k] = std::tanh(hp[k] + p.attn_b[k]);
  std::vector<double> e(hs.size());
  double mx = -1e300;
  for (std::size_t j = 0; j < hs.size(); ++j) {
    e[j] = 0;
    for (std::size_t k = 0; k < d; ++k) e[j] += hs[j][k] * hp[k];
    e[j] /= std::sqrt(static_cast<double>(d));
    mx = std::max(mx, e[j]);
  }
  double zsum = 0;
  for (double& v : e) zsum += (v = std::exp(v - mx));
  std::vector<double> g(d, 0.0);
  for (std::size_t j = 0; j < hs.size(); ++j)
    for (std::size_t k = 0; k < d; ++k) g[k] += e[j] / zsum * hs[j][k];
  std::vector<double> z;
  for (double v : h) z.push_back(v);
  for (double v : g) z.push_back(v);
  for (std::size_t k = 0; k < d; ++k) z.push_back(h[k] - g[k]);
  for (std::size_t k = 0; k < d; ++k) z.push_back(h[k] * g[k]);
  auto a = ref_affine(z, p.dec_w);
  std::vector<double> c(a.size()), w(a.size());
  double cmax = -1e300, wsum = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    c[k] = activate(p.psi, a[k] + p.dec_b[k]);
    if (c[k] != 0) cmax = std::max(cmax, c[k]);
  }
  for (std::size_t k = 0; k < a.size(); ++k) wsum += (w[k] = c[k] != 0 ? std::exp(c[k] - cmax) : 0.0);
  std::vector<double> post(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) post[k] = wsum > 0 ? w[k] / wsum : 1.0 / a.size();
  std::vector<double> u(p.dictionary.cols(), 0.0);
  for (std::size_t k = 0; k < post.size(); ++k)
    for (std::size_t c2 = 0; c2 < u.size(); ++c2) u[c2] += post[k] * p.dictionary.at(k, c2);
  return u;
}

}  // namespace

TEST_CASE("gru_step fixed points") {
  const Seq2PrefDims d{4, 3, 3, 2, 2};
  Seq2PrefParams z = zero_seq2pref(d, Activation::kRelu);
  const auto h0 = gru_step(std::vector<double>(3, 0.0), 1, z);
  for (double v : h0) CHECK(v == 0.0);
  const std::vector<double> v = {0.4, -0.8, 1.0};
  const auto h1 = gru_step(v, 2, z);
  for (std::size_t k = 0; k < 3; ++k) CHECK(h1[k] == doctest::Approx(0.5 * v[k]).epsilon(1e-15));
  CHECK_THROWS_AS(gru_step(v, 4, z), DataError);

  // Bounded state for arbitrary weights.
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    Seq2PrefParams p = random_params(d, Activation::kRelu, rng, 3.0);
    for (double& w : p.u_cand.values()) w *= 5;
    std::vector<double> h(3);
    for (double& x : h) x = rng.uniform(-1, 1);
    for (int s = 0; s < 10; ++s) {
      h = gru_step(h, rng.below(4), p);
      for (double x : h) CHECK(std::abs(x) <= 1.0);
    }
  }
}

TEST_CASE("attention") {
  const Seq2PrefDims d{2, 2, 2, 2, 2};
  Seq2PrefParams p = zero_seq2pref(d, Activation::kRelu);
  p.attn_w = Tensor::matrix(2, 2, {1, 0, 0, 1});

  const std::vector<std::vector<double>> one = {{0.3, -0.2}};
  const auto r1 = attention(one, 0, p);
  CHECK(r1.alpha == std::vector<double>{1.0});
  CHECK(r1.context == one[0]);

  const std::vector<std::vector<double>> same = {{0.3, 0.1}, {0.3, 0.1}, {0.3, 0.1}};
  const auto r2 = attention(same, 2, p);
  for (double a : r2.alpha) CHECK(a == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(r2.context[0] == doctest::Approx(0.3).epsilon(1e-15));

  const std::vector<std::vector<double>> hs = {{1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5}};
  const auto r3 = attention(hs, 2, p);
  const double q0 = std::tanh(0.5), q1 = std::tanh(0.5);
  const double e[3] = {q0 / std::sqrt(2.0), q1 / std::sqrt(2.0), (0.5 * q0 + 0.5 * q1) / std::sqrt(2.0)};
  const double zsum = std::exp(e[0]) + std::exp(e[1]) + std::exp(e[2]);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(r3.alpha[j] - std::exp(e[j]) / zsum) < 1e-9);

  // Causal: position 0 sees only itself.
  CHECK(attention(hs, 0, p).alpha.size() == 1);
}

TEST_CASE("masked exponential normalization") {
  const std::vector<double> c = {std::log(2.0), 0.0, std::log(3.0)};
  std::vector<double> p(3);
  CHECK(masked_exp_normalize(c, p));
  CHECK(p[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(p[1] == 0.0);
  CHECK(p[2] == doctest::Approx(0.6).epsilon(1e-12));

  std::vector<double> q(4);
  CHECK_FALSE(masked_exp_normalize(std::vector<double>(4, 0.0), q));
  for (double v : q) CHECK(v == 0.25);

  // Large activations stay finite.
  std::vector<double> r(2);
  masked_exp_normalize(std::vector<double>{800, 801}, r);
  CHECK(r[0] + r[1] == doctest::Approx(1.0));
}

TEST_CASE("dynamic_preference") {
  const Tensor dict = Tensor::matrix(3, 2, {1, 0, 9, 9, 0, 1});
  const auto u = dynamic_preference(std::vector<double>{0.4, 0, 0.6}, dict);
  CHECK(u[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(u[1] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(dynamic_preference(std::vector<double>{0, 1, 0}, dict) == std::vector<double>{9, 9});
  for (double v : dynamic_preference(std::vector<double>{0.2, 0.3, 0.5}, Tensor({3, 2}))) CHECK(v == 0.0);
  CHECK_THROWS_AS(dynamic_preference(std::vector<double>{1, 0}, dict), DataError);
}

TEST_CASE("forward_sequence matches a reference implementation") {
  Rng rng(21);
  for (Activation psi : {Activation::kRelu, Activation::kSigmoid, Activation::kTanh}) {
    const Seq2PrefDims d{6, 3, 4, 5, 2};
    const Seq2PrefParams p = random_params(d, psi, rng);
    const std::vector<std::size_t> items = {3, 0, 5, 2};
    const SeqState s = forward_sequence(make_seq(items), p);
    CHECK(s.hidden.size() == 4);
    CHECK(s.posterior.size() == 4);
    CHECK(s.u_bar.size() == 4);
    for (std::size_t t = 0; t < items.size(); ++t) {
      const auto ref = ref_u_bar(std::vector<std::size_t>(items.begin(), items.begin() + t + 1), p);
      for (std::size_t k = 0; k < ref.size(); ++k) CHECK(std::abs(s.u_bar[t][k] - ref[k]) < 1e-9);
    }
  }
  CHECK_THROWS_AS(forward_sequence(make_seq({}), zero_seq2pref({2, 1, 1, 1, 1}, Activation::kRelu)), DataError);
}

TEST_CASE("posterior and attention stay on the simplex; relu units are masked") {
  Rng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const Seq2PrefDims d{5, 1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(8), 2};
    const Activation psi = static_cast<Activation>(rng.below(3));
    const Seq2PrefParams p = random_params(d, psi, rng, 2.0);
    std::vector<std::size_t> items(1 + rng.below(6));
    for (auto& it : items) it = rng.below(5);
    const SeqState s = forward_sequence(make_seq(items), p);
    for (std::size_t t = 0; t < items.size(); ++t) {
      double sa = 0, sp = 0;
      for (double a : s.alpha[t]) {
        CHECK(a >= 0.0);
        sa += a;
      }
      for (double v : s.posterior[t]) {
        CHECK(v >= 0.0);
        sp += v;
      }
      CHECK(std::abs(sa - 1) < 1e-9);
      CHECK(std::abs(sp - 1) < 1e-9);
    }
  }
}

TEST_CASE("order matters") {
  Rng rng(25);
  const Seq2PrefDims d{6, 3, 3, 4, 2};
  const Seq2PrefParams p = random_params(d, Activation::kTanh, rng);
  const auto a = forward_sequence(make_seq({1, 2, 3}), p).u_bar.back();
  const auto b = forward_sequence(make_seq({3, 2, 1}), p).u_bar.back();
  CHECK(a != b);
}

TEST_CASE("fragments with carried state reproduce the whole-sequence forward pass") {
  Rng rng(27);
  const Seq2PrefDims d{7, 3, 4, 5, 2};
  const Seq2PrefParams p = random_params(d, Activation::kRelu, rng);
  const std::vector<std::size_t> items = {1, 4, 6, 0, 2, 5, 3};
  const SeqState whole = forward_sequence(make_seq(items), p);

  SeqCarry carry;
  std::size_t t = 0;
  for (std::size_t len : {3u, 3u, 1u}) {
    SeqFragment frag(p, carry, 0.0, Mode::kEval);
    for (std::size_t k = 0; k < len; ++k, ++t) {
      Rng r(0);
      frag.consume(items[t], r);
      CHECK(frag.posterior(k) == whole.posterior[t]);
      CHECK(frag.alpha(k).size() == t + 1);
    }
    carry = frag.carry_out();
  }
  CHECK(carry.posterior == whole.posterior.back());
}

TEST_CASE("unseen items have zero embeddings") {
  Rng rng(29);
  std::vector<bool> seen = {true, false, true};
  const Seq2PrefParams p = init_seq2pref({3, 2, 2, 2, 2}, Activation::kRelu, seen, rng);
  for (double v : p.item_embed.row(1)) CHECK(v == 0.0);
  CHECK(p.item_embed.row(0)[0] != 0.0);
  const Tensor uu = matmul(transpose(p.u_update), p.u_update);
  CHECK(uu.at(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(uu.at(0, 1)) < 1e-9);
}
