// Command-line front end: split, pretrain, train, evaluate, gradcheck, synth.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "s2pnm/checkpoint.hpp"
#include "s2pnm/config.hpp"
#include "s2pnm/error.hpp"
#include "s2pnm/evaluator.hpp"
#include "s2pnm/synthetic.hpp"
#include "s2pnm/trainer.hpp"

using namespace s2pnm;

namespace {

std::vector<std::size_t> parse_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string("invalid ") + what + " list '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError(std::string("empty ") + what + " list");
  return out;
}

struct SplitArgs {
  std::string input, protocol = "time", out_manifest, schema = "user,item,rating,timestamp";
  std::string delimiter = ",";
  double fraction = 0.9;
  std::uint64_t seed = 1;
  std::size_t min_history = 1;
};

int run_split(const SplitArgs& a) {
  if (a.delimiter.size() != 1) throw ConfigError("delimiter must be a single character");
  if (!(a.fraction > 0.0 && a.fraction < 1.0)) throw ConfigError("fraction must lie in (0, 1)");
  const SplitProtocol protocol = parse_protocol(a.protocol);
  const CsvSchema schema = CsvSchema::parse(a.schema, a.delimiter[0]);
  LoadReport report;
  Corpus raw = load_csv(a.input, schema, &report);
  auto corpus = std::make_shared<const Corpus>(filter_min_history(raw, a.min_history));
  if (corpus->events.empty()) throw DataError("no events left after the min-history filter");
  SplitResult split = protocol == SplitProtocol::kByTime     ? split_by_time(corpus, a.fraction)
                      : protocol == SplitProtocol::kByRandom ? split_by_random(corpus, a.fraction, a.seed)
                                                             : split_per_user_prefix(corpus, a.fraction);
  ManifestHeader h;
  h.input = a.input;
  h.schema = schema;
  h.protocol = protocol_name(protocol);
  h.fraction = a.fraction;
  h.seed = a.seed;
  h.min_history = a.min_history;
  write_manifest(a.out_manifest, h, split);
  std::cout << "rows read " << report.rows_read << ", skipped " << report.rows_skipped
            << ", duplicate triples " << report.duplicate_triples << '\n'
            << "users " << corpus->num_users() << ", items " << corpus->num_items() << '\n'
            << "train " << split.train.size() << ", test " << split.test.size() << '\n';
  return 0;
}

struct PretrainArgs {
  std::string manifest, out_checkpoint, log, task = "rating";
  std::size_t d_user = 300, epochs = 20, batch_size = 128;
  double lr = 0.005, l2 = 0.01;
  std::uint64_t seed = 1;
};

int run_pretrain(const PretrainArgs& a) {
  MfConfig cfg;
  cfg.d_user = a.d_user;
  cfg.lr = a.lr;
  cfg.l2 = a.l2;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.seed = a.seed;
  cfg.task = parse_task(a.task);
  const SplitResult split = load_split(a.manifest);
  const MfTrainResult r = train_mf(*split.corpus, split.train, cfg);
  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log);
    if (!log) throw DataError("cannot write log '" + a.log + "'");
    log.precision(17);
  }
  for (const MfEpoch& e : r.log) {
    std::printf("epoch %zu  loss %.6f  train_rmse %.6f  lr %.6g\n", e.epoch, e.train_loss, e.train_rmse, e.lr);
    if (log) log << e.epoch << '\t' << e.train_loss << '\t' << e.train_rmse << '\t' << e.lr << '\n';
  }
  save_mf_checkpoint(r.params, a.out_checkpoint);
  return 0;
}

struct TrainArgs {
  std::string manifest, config, pretrained, task, out_checkpoint, log;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg = a.config.empty() ? TrainConfig{} : TrainConfig::load(a.config);
  if (!a.task.empty()) cfg.task = parse_task(a.task);
  cfg.validate();
  const SplitResult split = load_split(a.manifest);
  MfParams pre;
  if (!a.pretrained.empty()) pre = load_mf_checkpoint(a.pretrained);
  const TrainResult r = train(split, cfg, a.pretrained.empty() ? nullptr : &pre, [&](const EpochLog& e) {
    std::printf("epoch %zu  loss %.6f  val %.6f  lr %.6g  %.1fs\n", e.epoch, e.train_loss, e.val_metric, e.lr,
                e.wall_seconds);
    if (cfg.task == Task::kRanking) {
      std::printf("  batches %zu  positives %zu  negatives %zu  (%.2f negatives per positive)\n", e.batches,
                  e.positives, e.negatives,
                  e.positives ? static_cast<double>(e.negatives) / static_cast<double>(e.positives) : 0.0);
    } else {
      std::printf("  batches %zu  positives %zu\n", e.batches, e.positives);
    }
    std::fflush(stdout);
  });
  if (!a.log.empty()) write_epoch_log(a.log, r.log);
  std::printf("best epoch %zu\n", r.best_epoch);
  save_checkpoint(r.params, a.out_checkpoint, cfg.precision == Precision::kF32 ? DType::kF32 : DType::kF64);
  return 0;
}

struct EvalArgs {
  std::string manifest, checkpoint, config, task = "rating", ks = "5,10", buckets = "5,10,50", out_report;
};

int run_evaluate(const EvalArgs& a) {
  EvalOptions opt;
  opt.task = parse_task(a.task);
  opt.ks = parse_list(a.ks, "k");
  opt.bucket_edges = parse_list(a.buckets, "bucket");
  const SplitResult split = load_split(a.manifest);
  const S2pnmParams params = load_checkpoint(a.checkpoint);
  const Corpus& c = *split.corpus;
  std::map<std::string, std::string> echo = {{"manifest", a.manifest}, {"checkpoint", a.checkpoint},
                                             {"task", a.task}, {"k", a.ks}, {"buckets", a.buckets}};
  if (!a.config.empty()) {
    const TrainConfig cfg = TrainConfig::load(a.config);
    opt.clip_predictions = cfg.clip_predictions;
    const S2pnmParams expected = init_model(c, split.train, cfg, nullptr);
    check_shapes(expected, params);
    echo["config"] = a.config;
  } else {
    check_mf_shapes(c.num_users(), c.num_items(), params.mf.d_user(), params.mf);
  }
  const EvalReport r = evaluate(params, c, split.train, split.test, opt);
  if (r.rmse) std::printf("rmse\t%.6f\n", *r.rmse);
  for (auto [k, v] : r.precision_at_k) std::printf("precision@%zu\t%.6f\n", k, v);
  for (auto [k, v] : r.hr_at_k) std::printf("hr@%zu\t%.6f\n", k, v);
  for (auto [k, v] : r.ndcg_at_k) std::printf("ndcg@%zu\t%.6f\n", k, v);
  for (const Bucket& b : r.user_buckets)
    std::printf("bucket %s\t%s %.6f\tusers %zu (%.4f)\n", b.label.c_str(), r.bucket_metric.c_str(), b.metric,
                b.users, b.fraction);
  if (!a.out_report.empty()) {
    write_report_tsv(a.out_report, r);
    write_report_json(a.out_report + ".json", r, echo);
  }
  return 0;
}

int run_gradcheck(std::uint64_t seed) {
  const GradcheckReport r = gradcheck(seed);
  for (const GradcheckEntry& e : r.entries) {
    std::printf("%-8s %-18s max_rel_err %.3e  checked %zu  skipped %zu%s\n", task_name(e.task).c_str(),
                e.tensor.c_str(), e.max_rel_error, e.checked, e.skipped,
                e.max_rel_error < r.tolerance ? "" : "  FAIL");
  }
  std::printf("%s (tolerance %.0e)\n", r.passed ? "gradcheck passed" : "gradcheck FAILED", r.tolerance);
  return r.passed ? 0 : 1;
}

struct SynthArgs {
  std::string kind = "static", out, truth;
  std::size_t m = 100, n = 50, d = 8, regimes = 2, events = 40, topics = 6;
  double noise = 0.25, density = 0.1, explore = 0.2, strength = 2.0, selectivity = 8.0;
  std::uint64_t seed = 1;
};

int run_synth(const SynthArgs& a) {
  if (a.kind == "static") {
    write_csv(a.out, gen_static(a.m, a.n, a.d, a.noise, a.density, a.seed));
  } else if (a.kind == "drift") {
    DriftSpec spec;
    spec.m = a.m;
    spec.n = a.n;
    spec.d = a.d;
    spec.regimes_per_user = a.regimes;
    spec.events_per_user = a.events;
    spec.noise_std = a.noise;
    spec.seed = a.seed;
    spec.topics = a.topics;
    spec.explore = a.explore;
    spec.strength = a.strength;
    spec.selectivity = a.selectivity;
    const DriftData data = gen_drift(spec);
    write_csv(a.out, data.corpus);
    write_drift_truth(a.truth.empty() ? a.out + ".truth.tsv" : a.truth, data);
  } else {
    throw ConfigError("unknown synth kind '" + a.kind + "' (expected static or drift)");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"S2PNM sequential recommender"};
  app.require_subcommand(1);

  SplitArgs sa;
  auto* split = app.add_subcommand("split", "Split a rating file and write a manifest");
  split->add_option("--input", sa.input, "CSV rating file")->required();
  split->add_option("--protocol", sa.protocol, "time, random or prefix")->check(CLI::IsMember({"time", "random", "prefix"}));
  split->add_option("--fraction", sa.fraction, "Train fraction");
  split->add_option("--seed", sa.seed);
  split->add_option("--min-history", sa.min_history, "Drop users with fewer events");
  split->add_option("--schema", sa.schema, "Columns for user,item,rating,timestamp (names or positions)");
  split->add_option("--delimiter", sa.delimiter);
  split->add_option("--out-manifest", sa.out_manifest)->required();

  PretrainArgs pa;
  auto* pretrain = app.add_subcommand("pretrain", "Train the static matrix factorization");
  pretrain->add_option("--manifest", pa.manifest)->required();
  pretrain->add_option("--d-user", pa.d_user);
  pretrain->add_option("--lr", pa.lr);
  pretrain->add_option("--l2", pa.l2);
  pretrain->add_option("--epochs", pa.epochs);
  pretrain->add_option("--batch-size", pa.batch_size);
  pretrain->add_option("--task", pa.task)->check(CLI::IsMember({"rating", "ranking"}));
  pretrain->add_option("--seed", pa.seed);
  pretrain->add_option("--log", pa.log, "Per-epoch metrics log");
  pretrain->add_option("--out-checkpoint", pa.out_checkpoint)->required();

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Train the full model");
  trainc->add_option("--manifest", ta.manifest)->required();
  trainc->add_option("--config", ta.config, "key = value file");
  trainc->add_option("--pretrained", ta.pretrained, "Static checkpoint from pretrain");
  trainc->add_option("--task", ta.task, "Overrides the config task")->check(CLI::IsMember({"rating", "ranking"}));
  trainc->add_option("--out-checkpoint", ta.out_checkpoint)->required();
  trainc->add_option("--log", ta.log, "Per-epoch metrics log");

  EvalArgs ea;
  auto* evalc = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test split");
  evalc->add_option("--manifest", ea.manifest)->required();
  evalc->add_option("--checkpoint", ea.checkpoint)->required();
  evalc->add_option("--config", ea.config, "Config the checkpoint must match");
  evalc->add_option("--task", ea.task)->check(CLI::IsMember({"rating", "ranking"}));
  evalc->add_option("--k", ea.ks, "Comma-separated cutoffs");
  evalc->add_option("--buckets", ea.buckets, "Comma-separated train-count edges");
  evalc->add_option("--out-report", ea.out_report, "TSV report; JSON goes to <path>.json");

  std::uint64_t gc_seed = 1;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gc->add_option("--seed", gc_seed);

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--kind", ya.kind)->check(CLI::IsMember({"static", "drift"}));
  synth->add_option("--m", ya.m);
  synth->add_option("--n", ya.n);
  synth->add_option("--d", ya.d);
  synth->add_option("--noise", ya.noise);
  synth->add_option("--density", ya.density);
  synth->add_option("--regimes", ya.regimes);
  synth->add_option("--events", ya.events);
  synth->add_option("--topics", ya.topics);
  synth->add_option("--explore", ya.explore);
  synth->add_option("--strength", ya.strength);
  synth->add_option("--selectivity", ya.selectivity);
  synth->add_option("--seed", ya.seed);
  synth->add_option("--out", ya.out)->required();
  synth->add_option("--truth", ya.truth, "Drift ground-truth sidecar (default <out>.truth.tsv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*split) return run_split(sa);
    if (*pretrain) return run_pretrain(pa);
    if (*trainc) return run_train(ta);
    if (*evalc) return run_evaluate(ea);
    if (*gc) return run_gradcheck(gc_seed);
    if (*synth) return run_synth(ya);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
