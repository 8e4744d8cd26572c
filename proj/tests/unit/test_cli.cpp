#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

#include "test_util.hpp"

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run(const std::string& args, const ScratchDir& dir) {
  const auto out = dir.file("stdout.txt");
  const std::string cmd = std::string(S2PNM_CLI) + " " + args + " > " + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
}

std::size_t count_lines_starting(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) n += line.rfind(prefix, 0) == 0;
  return n;
}

std::string last_line(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  return last;
}

}  // namespace

TEST_CASE("cli split") {
  ScratchDir dir;
  std::string csv = "user,item,rating,timestamp\n";
  for (int r = 0; r < 100; ++r)
    csv += "u" + std::to_string(r % 7) + ",i" + std::to_string(r) + "," + std::to_string(1 + r % 5) + "," +
           std::to_string(1000 + r) + "\n";
  dir.write("in.csv", csv);
  const std::string in = dir.file("in.csv").string();

  const auto r = run("split --input " + in + " --protocol time --fraction 0.9 --out-manifest " +
                         dir.file("a.man").string(), dir);
  CHECK(r.code == 0);
  const std::string man = slurp(dir.file("a.man"));
  CHECK(count_lines_starting(man, "train\t") == 90);
  CHECK(count_lines_starting(man, "test\t") == 10);

  run("split --input " + in + " --protocol random --seed 4 --out-manifest " + dir.file("b.man").string(), dir);
  run("split --input " + in + " --protocol random --seed 4 --out-manifest " + dir.file("c.man").string(), dir);
  CHECK(slurp(dir.file("b.man")) == slurp(dir.file("c.man")));

  const auto missing = run("split --out-manifest " + dir.file("d.man").string(), dir);
  CHECK(missing.code == 2);
  CHECK(missing.out.find("--input") != std::string::npos);
  CHECK(run("split --input " + dir.file("nope.csv").string() + " --out-manifest x", dir).code == 3);
  CHECK(run("split --input " + in + " --fraction 1.5 --out-manifest x", dir).code == 2);
}

TEST_CASE("cli pretrain, train, evaluate") {
  ScratchDir dir;
  const std::string csv = dir.file("s.csv").string(), man = dir.file("s.man").string();
  REQUIRE(run("synth --kind static --m 30 --n 20 --d 2 --noise 0 --density 1 --seed 3 --out " + csv, dir).code == 0);
  REQUIRE(run("split --input " + csv + " --protocol random --out-manifest " + man, dir).code == 0);

  SUBCASE("pretrain fits noiseless data and is deterministic") {
    const std::string flags = "pretrain --manifest " + man + " --d-user 2 --lr 0.002 --l2 0 --epochs 300 --batch-size 32";
    const auto r = run(flags + " --log " + dir.file("p.log").string() + " --out-checkpoint " + dir.file("a.ckpt").string(), dir);
    REQUIRE(r.code == 0);
    std::istringstream last(last_line(slurp(dir.file("p.log"))));
    double epoch, loss, rmse;
    last >> epoch >> loss >> rmse;
    CHECK(epoch == 300);
    CHECK(rmse < 0.01);
    run(flags + " --out-checkpoint " + dir.file("b.ckpt").string(), dir);
    CHECK(slurp(dir.file("a.ckpt")) == slurp(dir.file("b.ckpt")));
    const auto zero = run("pretrain --manifest " + man + " --d-user 2 --epochs 0 --out-checkpoint " +
                              dir.file("z.ckpt").string(), dir);
    CHECK(zero.code == 0);
    CHECK(count_lines_starting(zero.out, "epoch") == 0);
  }

  SUBCASE("train and evaluate") {
    dir.write("bad.cfg", "d_usr = 4\n");
    const auto bad = run("train --manifest " + man + " --config " + dir.file("bad.cfg").string() +
                             " --out-checkpoint " + dir.file("x.ckpt").string(), dir);
    CHECK(bad.code == 2);
    CHECK(bad.out.find("d_usr") != std::string::npos);

    dir.write("ok.cfg", "d_user = 4\nd_gru = 4\nd_dict = 8\nepochs = 2\nbatch_size = 4\nn_neg = 4\n");
    const std::string cfg = dir.file("ok.cfg").string();
    // Sparse data so every positive has unseen items to draw negatives from.
    const std::string sparse = dir.file("sp.csv").string(), sman = dir.file("sp.man").string();
    REQUIRE(run("synth --kind static --m 30 --n 40 --density 0.3 --out " + sparse, dir).code == 0);
    REQUIRE(run("split --input " + sparse + " --protocol random --out-manifest " + sman, dir).code == 0);
    const auto ranking = run("train --manifest " + sman + " --config " + cfg + " --task ranking --out-checkpoint " +
                                 dir.file("rk.ckpt").string(), dir);
    REQUIRE(ranking.code == 0);
    CHECK(ranking.out.find("(4.00 negatives per positive)") != std::string::npos);

    const auto rating = run("train --manifest " + man + " --config " + cfg + " --log " + dir.file("t.log").string() +
                                " --out-checkpoint " + dir.file("rt.ckpt").string(), dir);
    REQUIRE(rating.code == 0);
    CHECK(count_lines_starting(slurp(dir.file("t.log")), "") == 2);

    const auto ev = run("evaluate --manifest " + man + " --checkpoint " + dir.file("rt.ckpt").string() +
                            " --config " + cfg + " --out-report " + dir.file("r.tsv").string(), dir);
    REQUIRE(ev.code == 0);
    const std::string report = slurp(dir.file("r.tsv"));
    CHECK(report.find("rmse\t") != std::string::npos);
    CHECK(report.find("[0,5)") != std::string::npos);
    CHECK(slurp(dir.file("r.tsv.json")).find("\"rmse\"") != std::string::npos);

    const auto evr = run("evaluate --manifest " + sman + " --checkpoint " + dir.file("rk.ckpt").string() +
                             " --task ranking --k 5", dir);
    REQUIRE(evr.code == 0);
    for (const char* m : {"precision@5\t", "hr@5\t", "ndcg@5\t"}) CHECK(evr.out.find(m) != std::string::npos);

    dir.write("other.cfg", "d_user = 4\nd_gru = 4\nd_dict = 9\n");
    const auto mismatch = run("evaluate --manifest " + man + " --checkpoint " + dir.file("rt.ckpt").string() +
                                  " --config " + dir.file("other.cfg").string(), dir);
    CHECK(mismatch.code == 3);
    CHECK(mismatch.out.find("decoder.w") != std::string::npos);
  }
}

TEST_CASE("cli gradcheck") {
  ScratchDir dir;
  const auto r = run("gradcheck --seed 1", dir);
  CHECK(r.code == 0);
  CHECK(r.out.find("gradcheck passed") != std::string::npos);
  CHECK(r.out.find("dictionary") != std::string::npos);
}

TEST_CASE("cli synth") {
  ScratchDir dir;
  run("synth --kind drift --m 20 --n 30 --events 10 --seed 7 --out " + dir.file("a.csv").string(), dir);
  run("synth --kind drift --m 20 --n 30 --events 10 --seed 7 --out " + dir.file("b.csv").string(), dir);
  CHECK(slurp(dir.file("a.csv")) == slurp(dir.file("b.csv")));
  CHECK(slurp(dir.file("a.csv.truth.tsv")) == slurp(dir.file("b.csv.truth.tsv")));
  run("synth --kind static --density 1 --m 3 --n 4 --out " + dir.file("s.csv").string(), dir);
  const std::string s = slurp(dir.file("s.csv"));
  CHECK(count_lines_starting(s, "u") - count_lines_starting(s, "user,") == 12);
  CHECK(run("synth --kind drift --m 2 --n 5 --events 9 --out " + dir.file("c.csv").string(), dir).code == 2);
}
