#include "s2pnm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>

#include "s2pnm/checkpoint.hpp"
#include "s2pnm/error.hpp"
#include "s2pnm/evaluator.hpp"

namespace s2pnm {

std::vector<ScheduledBatch> make_batches(std::span<const UserSequence> seqs, std::size_t batch_size,
                                         std::size_t window, std::uint64_t seed) {
  if (window == 0) throw ConfigError("window must be at least 1");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < seqs.size(); ++i)
    if (!seqs[i].events.empty()) order.push_back(i);
  Rng rng = Rng(seed).split("batches");
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  struct Slot {
    std::optional<std::size_t> seq;
    std::size_t offset = 0;
  };
  std::vector<Slot> slots(batch_size);
  std::size_t next = 0;
  auto refill = [&](Slot& s) {
    s.seq.reset();
    s.offset = 0;
    if (next < order.size()) s.seq = order[next++];
  };
  for (Slot& s : slots) refill(s);

  std::vector<ScheduledBatch> batches;
  for (;;) {
    ScheduledBatch batch;
    for (std::size_t k = 0; k < slots.size(); ++k) {
      Slot& s = slots[k];
      if (!s.seq) continue;
      const std::size_t len = seqs[*s.seq].events.size();
      const std::size_t end = std::min(len, s.offset + window);
      batch.push_back({k, *s.seq, s.offset, end, s.offset == 0});
      s.offset = end;
      if (s.offset == len) refill(s);
    }
    if (batch.empty()) break;
    batches.push_back(std::move(batch));
  }
  return batches;
}

ValidationSplit validation_split(const SplitResult& split, double fraction) {
  ValidationSplit out;
  const Corpus& c = *split.corpus;
  if (fraction <= 0.0) {
    out.fit = split.train;
    return out;
  }
  if (split.protocol == SplitProtocol::kPerUserPrefix) {
    for (const UserSequence& seq : sequences(c, split.train)) {
      const std::size_t t = seq.events.size();
      std::size_t n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(t) + 1e-9));
      if (n_val >= t) n_val = t - 1;
      for (std::size_t k = 0; k < t; ++k) (k + n_val < t ? out.fit : out.validation).push_back(seq.events[k].position);
    }
  } else {
    std::vector<std::size_t> order = split.train;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return c.events[a].timestamp < c.events[b].timestamp;
    });
    const std::size_t n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(order.size()) + 1e-9));
    const std::size_t n_fit = order.size() - n_val;
    out.fit.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_fit));
    out.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_fit), order.end());
  }
  std::sort(out.fit.begin(), out.fit.end());
  std::sort(out.validation.begin(), out.validation.end());
  return out;
}

double scheduled_lr(const TrainConfig& cfg, std::size_t epoch) {
  const std::size_t steps = (epoch - 1) / cfg.decay_every_epochs;
  return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(steps));
}

S2pnmParams init_model(const Corpus& corpus, std::span<const std::size_t> fit,
                       const TrainConfig& cfg, const MfParams* pretrained) {
  const std::size_t m = corpus.num_users();
  const std::size_t n = corpus.num_items();
  std::vector<bool> seen_u(m, false), seen_i(n, false);
  for (std::size_t p : fit) {
    seen_u[corpus.events[p].user] = true;
    seen_i[corpus.events[p].item] = true;
  }
  Rng root = Rng(cfg.seed).split("init");
  S2pnmParams params;
  params.variant = cfg.variant;
  if (pretrained) {
    check_mf_shapes(m, n, cfg.d_user, *pretrained);
    params.mf = *pretrained;
  } else {
    Rng r = root.split("mf");
    params.mf = init_mf(m, n, cfg.d_user, task_global_mean(corpus, fit, cfg.task, cfg.negatives()),
                        seen_u, seen_i, r);
  }
  if (cfg.variant == Variant::kDynamicOnly) params.mf.user_factors.fill(0.0);
  Rng r = root.split("net");
  params.net = init_seq2pref({n, cfg.embed_dim(), cfg.d_gru, cfg.d_dict, cfg.d_user}, cfg.psi, seen_i, r);
  return params;
}

double validation_metric(const S2pnmParams& params, const Corpus& corpus,
                         std::span<const std::size_t> history, std::span<const std::size_t> targets,
                         Task task, std::size_t k) {
  EvalOptions opt;
  opt.task = task;
  opt.ks = {k};
  opt.bucket_edges = {};
  opt.clip_predictions = true;
  const EvalReport r = evaluate(params, corpus, history, targets, opt);
  return task == Task::kRating ? *r.rmse : r.hr_at_k.at(k);
}

namespace {

void round_to_f32(S2pnmParams& p) {
  for (auto& [name, t] : named_tensors(p))
    for (double& v : t->values()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace

TrainResult train(const SplitResult& split, const TrainConfig& cfg, const MfParams* pretrained,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  const Corpus& corpus = *split.corpus;
  const ValidationSplit vs = validation_split(split, cfg.val_fraction);
  if (vs.fit.empty()) throw DataError("no training events left after the validation slice");
  const bool has_val = !vs.validation.empty();

  TrainResult result;
  result.fit_events = vs.fit.size();
  S2pnmParams params = init_model(corpus, vs.fit, cfg, pretrained);
  if (cfg.precision == Precision::kF32) round_to_f32(params);
  result.initial = params;

  const auto seqs = sequences(corpus, vs.fit);
  const Rng root = Rng(cfg.seed).split("train");
  S2pnmParams grad = zeros_like(params);
  S2pnmParams adam_m = zeros_like(params);
  S2pnmParams adam_v = zeros_like(params);
  std::int64_t step = 0;

  auto params_t = named_tensors(params);
  auto grad_t = named_tensors(grad);
  auto m_t = named_tensors(adam_m);
  auto v_t = named_tensors(adam_v);
  std::vector<bool> trainable;
  for (auto& [name, t] : params_t) trainable.push_back(is_trainable(name, cfg.variant));

  LossConfig loss_cfg;
  loss_cfg.task = cfg.task;
  loss_cfg.l2 = cfg.lambda;
  loss_cfg.negatives = cfg.negatives();
  loss_cfg.p_drop = cfg.p_drop;
  loss_cfg.mode = Mode::kTrain;

  const bool higher_better = cfg.task == Task::kRanking;
  std::optional<double> best_metric;
  result.params = params;
  const double n_fit = static_cast<double>(vs.fit.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    AdamConfig adam = cfg.adam();
    adam.lr = scheduled_lr(cfg, epoch);
    const Rng epoch_rng = root.split(epoch);
    const auto schedule = make_batches(seqs, cfg.batch_size, cfg.window, epoch_rng.split("schedule").key());
    std::vector<SeqCarry> slots(cfg.batch_size);

    EpochLog log;
    log.epoch = epoch;
    log.lr = adam.lr;
    for (std::size_t b = 0; b < schedule.size(); ++b) {
      const ScheduledBatch& batch = schedule[b];
      std::vector<FragmentJob> jobs;
      jobs.reserve(batch.size());
      std::size_t events = 0;
      for (const ScheduledFragment& f : batch) {
        if (f.fresh) slots[f.slot] = SeqCarry{};
        jobs.push_back({&seqs[f.sequence], f.begin, f.end, std::move(slots[f.slot])});
        events += f.end - f.begin;
      }
      loss_cfg.penalty_share = static_cast<double>(events) / n_fit;
      for (auto& [name, t] : grad_t) t->fill(0.0);
      BatchResult br = batch_loss(params, jobs, loss_cfg, epoch_rng.split("batch"), &grad);
      if (!std::isfinite(br.loss)) {
        throw DataError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      for (std::size_t k = 0; k < batch.size(); ++k) slots[batch[k].slot] = std::move(br.carries[k]);

      ++step;
      for (std::size_t k = 0; k < params_t.size(); ++k) {
        if (!trainable[k]) continue;
        adam_update(params_t[k].second->values(), grad_t[k].second->values(), m_t[k].second->values(),
                    v_t[k].second->values(), step, adam);
      }
      if (cfg.precision == Precision::kF32) round_to_f32(params);

      log.train_loss += br.loss;
      log.positives += br.positives;
      log.negatives += br.negatives;
      ++log.batches;
    }

    double metric = 0.0;
    if (has_val) metric = validation_metric(params, corpus, vs.fit, vs.validation, cfg.task, cfg.val_k);
    log.val_metric = metric;
    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const bool better = !best_metric || (higher_better ? metric > *best_metric : metric < *best_metric);
    if (better) {
      best_metric = metric;
      result.params = params;
      result.best_epoch = epoch;
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

std::string format_epoch_line(const EpochLog& e) {
  std::ostringstream os;
  os.precision(17);
  os << e.epoch << '\t' << e.train_loss << '\t' << e.val_metric << '\t' << e.lr << '\t' << e.wall_seconds;
  return os.str();
}

void write_epoch_log(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write log '" + path.string() + "'");
  for (const EpochLog& e : log) out << format_epoch_line(e) << '\n';
}

// ---------------------------------------------------------------------------

namespace {

struct Toy {
  std::shared_ptr<Corpus> corpus;
  std::vector<UserSequence> seqs;
  S2pnmParams params;
};

Toy make_toy(std::uint64_t seed) {
  Rng rng = Rng(seed).split("gradcheck");
  const std::vector<std::vector<std::size_t>> items = {{0, 2, 1, 4}, {3, 1, 0}, {2, 4, 3, 0}};
  std::vector<Interaction> recs;
  std::int64_t ts = 0;
  for (std::size_t u = 0; u < items.size(); ++u)
    for (std::size_t j : items[u])
      recs.push_back({"u" + std::to_string(u), "i" + std::to_string(j), 1.0 + std::floor(rng.uniform() * 5.0), ++ts});
  // Make item indices follow the item names.
  std::vector<Interaction> ordered;
  for (std::size_t j = 0; j < 5; ++j) ordered.push_back({"u0", "i" + std::to_string(j), 0.0, 0});
  Corpus names = make_corpus(ordered);

  Toy toy;
  toy.corpus = std::make_shared<Corpus>();
  Corpus& c = *toy.corpus;
  for (std::size_t u = 0; u < items.size(); ++u) c.users.intern("u" + std::to_string(u));
  for (std::size_t j = 0; j < 5; ++j) c.items.intern(names.items.id(j));
  for (std::size_t r = 0; r < recs.size(); ++r) {
    c.events.push_back({*c.users.find(recs[r].user_id), *c.items.find(recs[r].item_id), recs[r].rating,
                        recs[r].timestamp, r});
  }
  toy.seqs = sequences(c);

  std::vector<bool> seen_u(3, true), seen_i(5, true);
  Rng init = rng.split("init");
  toy.params.variant = Variant::kFull;
  toy.params.mf = init_mf(3, 5, 2, 3.0, seen_u, seen_i, init);
  toy.params.net = init_seq2pref({5, 3, 3, 4, 2}, Activation::kRelu, seen_i, init);
  // Non-zero biases and larger factors so every path carries gradient.
  Rng jitter = rng.split("jitter");
  for (auto& [name, t] : named_tensors(toy.params))
    for (double& v : t->values()) v += jitter.uniform(-0.4, 0.4);
  return toy;
}

}  // namespace

GradcheckReport gradcheck(std::uint64_t seed, const GradcheckOptions& options) {
  Toy toy = make_toy(seed);
  S2pnmParams& params = toy.params;
  const Rng rng = Rng(seed).split("gradcheck-loss");

  GradcheckReport report;
  report.tolerance = options.tolerance;

  for (Task task : {Task::kRating, Task::kRanking}) {
    LossConfig cfg;
    cfg.task = task;
    cfg.l2 = 0.05;
    cfg.negatives = {2, 1.0, 0.3};
    cfg.p_drop = 0.25;
    cfg.mode = Mode::kTrain;
    cfg.penalty_share = 0.7;
    cfg.record_pattern = true;

    // User 2 is checked as a continuation fragment with carried state.
    std::vector<FragmentJob> head = {{&toy.seqs[2], 0, 2, {}}};
    const BatchResult warm = batch_loss(params, head, cfg, rng, nullptr);
    const std::vector<FragmentJob> jobs = {
        {&toy.seqs[0], 0, 4, {}},
        {&toy.seqs[1], 0, 3, {}},
        {&toy.seqs[2], 2, 4, warm.carries[0]},
    };

    S2pnmParams grad = zeros_like(params);
    const BatchResult base = batch_loss(params, jobs, cfg, rng, &grad);
    if (options.corrupt) options.corrupt(grad);

    auto p_t = named_tensors(params);
    auto g_t = named_tensors(grad);
    for (std::size_t k = 0; k < p_t.size(); ++k) {
      GradcheckEntry entry;
      entry.task = task;
      entry.tensor = p_t[k].first;
      Tensor& value = *p_t[k].second;
      const Tensor& analytic = *g_t[k].second;
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double orig = value[i];
        value[i] = orig + options.step;
        const BatchResult plus = batch_loss(params, jobs, cfg, rng, nullptr);
        value[i] = orig - options.step;
        const BatchResult minus = batch_loss(params, jobs, cfg, rng, nullptr);
        value[i] = orig;
        if (plus.decoder_pattern != base.decoder_pattern || minus.decoder_pattern != base.decoder_pattern) {
          ++entry.skipped;
          continue;
        }
        const double numeric = (plus.loss - minus.loss) / (2.0 * options.step);
        const double a = analytic[i];
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        entry.max_rel_error = std::max(entry.max_rel_error, rel);
        ++entry.checked;
      }
      if (entry.max_rel_error >= options.tolerance) report.passed = false;
      report.entries.push_back(entry);
    }
  }
  return report;
}

}  // namespace s2pnm
