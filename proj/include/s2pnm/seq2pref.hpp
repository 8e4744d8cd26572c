#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "s2pnm/corpus.hpp"
#include "s2pnm/tensor.hpp"

namespace s2pnm {

struct Seq2PrefDims {
  std::size_t n_items = 0;
  std::size_t d_embed = 0;
  std::size_t d_gru = 0;
  std::size_t d_dict = 0;
  std::size_t d_user = 0;
};

/// Sequence-to-preference network: item embedding, GRU, multiplicative
/// attention, posterior decoder and dictionary. All weights are stored
/// [in x out] and applied as x^T W.
struct Seq2PrefParams {
  Tensor item_embed;  // [n x d_embed]

  // GRU. "update" is the interpolation gate, "cand" the candidate state.
  Tensor w_update, w_reset, w_cand;  // [d_embed x d_gru]
  Tensor u_update, u_reset, u_cand;  // [d_gru x d_gru]
  Tensor b_update, b_reset, b_cand;  // [d_gru]

  Tensor attn_w;  // [d_gru x d_gru]
  Tensor attn_b;  // [d_gru]

  Tensor dec_w;  // [4 d_gru x d_dict]
  Tensor dec_b;  // [d_dict]

  Tensor dictionary;  // [d_dict x d_user]

  Activation psi = Activation::kRelu;

  Seq2PrefDims dims() const;
};

/// Zero-valued parameters of the given dimensions.
Seq2PrefParams zero_seq2pref(const Seq2PrefDims& dims, Activation psi);

/// Glorot-uniform weights, orthogonal recurrent matrices, zero biases. Rows
/// of item_embed for items flagged unseen are zero.
Seq2PrefParams init_seq2pref(const Seq2PrefDims& dims, Activation psi,
                             const std::vector<bool>& seen_items, Rng& rng);

/// One GRU transition on item `item` with no dropout.
std::vector<double> gru_step(std::span<const double> h_prev, std::size_t item,
                             const Seq2PrefParams& p);

struct AttentionResult {
  std::vector<double> alpha;
  std::vector<double> context;
};

/// Attention of position `t` (0-based) over hidden states [0, t]: scores are
/// h_j . tanh(W_h h_t + b_h) / sqrt(d_gru).
AttentionResult attention(std::span<const std::vector<double>> hidden, std::size_t t,
                          const Seq2PrefParams& p);

/// Posterior over dictionary rows from (h_t, g_t). `z_mask` multiplies the
/// fused feature vector (dropout); empty means no dropout.
std::vector<double> decode_posterior(std::span<const double> h, std::span<const double> g,
                                     const Seq2PrefParams& p,
                                     std::span<const double> z_mask = {});

/// p^T D
std::vector<double> dynamic_preference(std::span<const double> posterior, const Tensor& dictionary);

/// Normalizes masked exponentials of `c` into `p`; returns false (and a
/// uniform p) when every entry of c is exactly zero.
bool masked_exp_normalize(std::span<const double> c, std::span<double> p);

struct SeqState {
  std::vector<std::vector<double>> hidden;
  std::vector<std::vector<double>> alpha;
  std::vector<std::vector<double>> context;
  std::vector<std::vector<double>> posterior;
  std::vector<std::vector<double>> u_bar;
};

/// Runs the network over a whole sequence from h_0 = 0 with causal attention.
/// Entry t of every list is the state after consuming events 0..t; the event
/// at t + 1 is scored with u_bar[t], and the first event with zero.
SeqState forward_sequence(const UserSequence& seq, const Seq2PrefParams& p);

/// Recurrent state carried between windowed fragments of one sequence.
/// Earlier hidden states stay visible to attention but pass no gradient.
struct SeqCarry {
  std::vector<std::vector<double>> past_hidden;
  std::vector<double> posterior;  // after the last consumed event; empty if none

  bool fresh() const { return past_hidden.empty(); }
};

/// Forward pass over one fragment with the caches needed for backward.
class SeqFragment {
 public:
  SeqFragment(const Seq2PrefParams& params, const SeqCarry& carry, double p_drop, Mode mode);

  /// Consumes one item; `drop_rng` supplies this step's dropout masks.
  void consume(std::size_t item, Rng& drop_rng);

  std::size_t length() const { return steps_.size(); }
  const std::vector<double>& posterior(std::size_t s) const { return steps_[s].p; }
  const std::vector<double>& hidden(std::size_t s) const;
  const std::vector<double>& alpha(std::size_t s) const { return steps_[s].alpha; }
  const std::vector<double>& context(std::size_t s) const { return steps_[s].g; }
  /// Decoder pre-activations at step s.
  const std::vector<double>& decoder_input(std::size_t s) const { return steps_[s].a; }

  /// Backpropagates dL/dp for each step into `grad`. Gradients do not flow
  /// into the carried state.
  void backward(std::span<const std::vector<double>> d_posterior, Seq2PrefParams& grad) const;

  SeqCarry carry_out() const;

 private:
  struct Step {
    std::size_t item = 0;
    std::vector<double> embed_mask, e, h_prev, r, u, n, rh, hp, alpha, g, z, z_mask, a, p;
    bool uniform = false;
  };

  const Seq2PrefParams& params_;
  double p_drop_;
  Mode mode_;
  std::size_t n_past_;
  std::vector<std::vector<double>> hidden_;  // carried past followed by new states
  std::vector<double> carried_posterior_;
  std::vector<Step> steps_;
};

}  // namespace s2pnm
