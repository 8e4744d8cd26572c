#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "s2pnm/error.hpp"
#include "s2pnm/corpus.hpp"
#include "s2pnm/synthetic.hpp"
#include "test_util.hpp"

using namespace s2pnm;

namespace {

std::shared_ptr<const Corpus> random_corpus(std::size_t users, std::size_t events, std::uint64_t seed,
                                            std::int64_t time_range = 1'000'000) {
  Rng rng(seed);
  std::vector<Interaction> recs;
  for (std::size_t k = 0; k < events; ++k) {
    recs.push_back({"u" + std::to_string(rng.below(users)), "i" + std::to_string(rng.below(40)),
                    1.0 + static_cast<double>(rng.below(5)), static_cast<std::int64_t>(rng.below(time_range))});
  }
  return std::make_shared<const Corpus>(make_corpus(recs));
}

// Multiset of (user id, item id, rating, timestamp).
std::multiset<std::tuple<std::string, std::string, double, std::int64_t>> rows(const Corpus& c,
                                                                             std::span<const std::size_t> pos) {
  std::multiset<std::tuple<std::string, std::string, double, std::int64_t>> out;
  for (std::size_t p : pos) {
    const Event& e = c.events[p];
    out.emplace(c.users.id(e.user), c.items.id(e.item), e.rating, e.timestamp);
  }
  return out;
}

void check_partition(const SplitResult& s) {
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.test.begin(), s.test.end());
  std::sort(all.begin(), all.end());
  REQUIRE(all.size() == s.corpus->events.size());
  for (std::size_t k = 0; k < all.size(); ++k) CHECK(all[k] == k);
}

}  // namespace

TEST_CASE("load_csv counts users, items and skipped rows") {
  ScratchDir dir;
  const auto f = dir.write("a.csv", "user,item,rating,timestamp\nu1,i1,4,10\nu2,i2,3,11\nu1,i3,5,12\nu2,i1,2,13\n");
  LoadReport rep;
  const Corpus c = load_csv(f, CsvSchema::parse("user,item,rating,timestamp"), &rep);
  CHECK(c.num_users() == 2);
  CHECK(c.num_items() == 3);
  CHECK(c.size() == 4);
  CHECK(c.users.id(0) == "u1");
  CHECK(c.items.id(2) == "i3");
  CHECK(rep.rows_skipped == 0);

  const auto g = dir.write("b.csv", "u1,i1,4,10\nu1,i2,abc,11\nu2,i1,3,12\n");
  const Corpus d = load_csv(g, CsvSchema{}, &rep);
  CHECK(d.size() == 2);
  CHECK(rep.rows_skipped == 1);

  const auto dup = dir.write("c.csv", "u1,i1,4,10\nu1,i1,5,10\n");
  const Corpus e = load_csv(dup, CsvSchema{}, &rep);
  CHECK(e.size() == 2);
  CHECK(rep.duplicate_triples == 1);

  const auto tabs = dir.write("d.tsv", "5\tx\ty\t3.5\n6\tz\tw\t4\n");
  const Corpus t = load_csv(tabs, CsvSchema::parse("1,2,3,0", '\t'));
  CHECK(t.size() == 2);
  CHECK(t.events[0].rating == 3.5);
  CHECK(t.events[1].timestamp == 6);

  CHECK_THROWS_AS(load_csv(dir.file("missing.csv"), CsvSchema{}), DataError);
  CHECK_THROWS_AS(load_csv(dir.write("e.csv", "u,i,x,y\n"), CsvSchema{}), DataError);
}

TEST_CASE("filter_min_history") {
  std::vector<Interaction> recs;
  const std::map<std::string, int> counts = {{"a", 12}, {"b", 9}, {"c", 10}};
  std::int64_t ts = 0;
  for (const auto& [u, n] : counts)
    for (int k = 0; k < n; ++k) recs.push_back({u, "i" + std::to_string(k), 1, ts++});
  const Corpus c = make_corpus(recs);
  const Corpus f = filter_min_history(c, 10);
  CHECK(f.num_users() == 2);
  CHECK(f.size() == 22);
  CHECK(f.users.find("b") == std::nullopt);

  const Corpus same = filter_min_history(c, 1);
  CHECK(same.size() == c.size());
  CHECK(same.users.ids() == c.users.ids());
  CHECK_THROWS_AS(filter_min_history(c, 100), DataError);

  // Brute-force count over a generated corpus.
  const auto r = random_corpus(50, 900, 3);
  std::vector<std::size_t> per(r->num_users(), 0);
  for (const Event& e : r->events) ++per[e.user];
  const auto expected = std::count_if(per.begin(), per.end(), [](std::size_t n) { return n >= 18; });
  CHECK(filter_min_history(*r, 18).num_users() == static_cast<std::size_t>(expected));
}

TEST_CASE("split_by_time") {
  auto c = random_corpus(20, 100, 5);
  const SplitResult s = split_by_time(c, 0.9);
  CHECK(s.train.size() == 90);
  CHECK(s.test.size() == 10);
  check_partition(s);

  auto two = std::make_shared<const Corpus>(make_corpus(std::vector<Interaction>{{"u", "a", 1, 2}, {"u", "b", 1, 1}}));
  const SplitResult t = split_by_time(two, 0.5);
  CHECK(two->events[t.train[0]].timestamp == 1);
  CHECK(two->events[t.test[0]].timestamp == 2);

  auto big = random_corpus(30, 1000, 7);
  const SplitResult b = split_by_time(big, 0.8);
  std::int64_t max_train = INT64_MIN, min_test = INT64_MAX;
  for (std::size_t p : b.train) max_train = std::max(max_train, big->events[p].timestamp);
  for (std::size_t p : b.test) min_test = std::min(min_test, big->events[p].timestamp);
  CHECK(max_train <= min_test);
  check_partition(b);
  CHECK(rows(*big, b.train).size() + rows(*big, b.test).size() == big->size());
}

TEST_CASE("split_by_random") {
  auto c = random_corpus(20, 100, 9);
  const SplitResult a = split_by_random(c, 0.9, 1);
  const SplitResult b = split_by_random(c, 0.9, 1);
  CHECK(a.train == b.train);
  CHECK(a.train.size() == 90);
  check_partition(a);

  auto big = random_corpus(40, 1000, 11);
  CHECK(split_by_random(big, 0.9, 1).train != split_by_random(big, 0.9, 2).train);
  CHECK_THROWS_AS(split_by_random(c, 1.0, 1), ConfigError);
}

TEST_CASE("split_per_user_prefix") {
  std::vector<Interaction> recs;
  for (int k = 0; k < 10; ++k) recs.push_back({"long", "i" + std::to_string(k), 1, 100 - k});
  recs.push_back({"short", "a", 1, 5});
  recs.push_back({"short", "b", 1, 6});
  auto c = std::make_shared<const Corpus>(make_corpus(recs));
  const SplitResult s = split_per_user_prefix(c, 0.7);
  std::size_t long_train = 0, short_train = 0;
  for (std::size_t p : s.train) (c->events[p].user == 0 ? long_train : short_train) += 1;
  CHECK(long_train == 7);
  CHECK(short_train == 2);
  CHECK(s.test.size() == 3);
  CHECK(s.users_without_test == 1);
  // The earliest events are train.
  for (std::size_t p : s.test) CHECK(c->events[p].timestamp >= 98);

  const DriftData d = gen_drift({.m = 100, .n = 60, .d = 4, .events_per_user = 12});
  auto g = std::make_shared<const Corpus>(d.corpus);
  const SplitResult gs = split_per_user_prefix(g, 0.7);
  check_partition(gs);
  std::vector<std::int64_t> max_train(g->num_users(), INT64_MIN), min_test(g->num_users(), INT64_MAX);
  for (std::size_t p : gs.train) max_train[g->events[p].user] = std::max(max_train[g->events[p].user], g->events[p].timestamp);
  for (std::size_t p : gs.test) min_test[g->events[p].user] = std::min(min_test[g->events[p].user], g->events[p].timestamp);
  for (std::size_t u = 0; u < g->num_users(); ++u) CHECK(max_train[u] <= min_test[u]);
}

TEST_CASE("sequences sort by time with stable ties") {
  const Corpus c = make_corpus(std::vector<Interaction>{
      {"u", "a", 1, 5}, {"u", "b", 1, 3}, {"u", "c", 1, 4}, {"v", "x", 1, 7}, {"v", "y", 1, 7}});
  const auto seqs = sequences(c);
  REQUIRE(seqs.size() == 2);
  std::vector<std::string> order;
  for (const auto& e : seqs[0].events) order.push_back(c.items.id(e.item));
  CHECK(order == std::vector<std::string>{"b", "c", "a"});
  CHECK(c.items.id(seqs[1].events[0].item) == "x");
  CHECK(c.items.id(seqs[1].events[1].item) == "y");

  const auto r = random_corpus(25, 700, 13, 50);
  std::size_t total = 0;
  for (const auto& s : sequences(*r)) {
    total += s.events.size();
    for (std::size_t k = 1; k < s.events.size(); ++k) {
      CHECK(s.events[k - 1].timestamp <= s.events[k].timestamp);
      if (s.events[k - 1].timestamp == s.events[k].timestamp) CHECK(s.events[k - 1].position < s.events[k].position);
    }
  }
  CHECK(total == r->size());
}

TEST_CASE("manifest round trip reproduces the split") {
  ScratchDir dir;
  auto c = random_corpus(15, 200, 17);
  const auto csv = dir.file("data.csv");
  write_csv(csv, *c);
  const Corpus loaded = load_csv(csv, CsvSchema::parse("user,item,rating,timestamp"));
  auto shared = std::make_shared<const Corpus>(filter_min_history(loaded, 3));
  const SplitResult s = split_by_random(shared, 0.8, 4);
  ManifestHeader h;
  h.input = "data.csv";
  h.schema = CsvSchema::parse("user,item,rating,timestamp");
  h.protocol = "random";
  h.fraction = 0.8;
  h.seed = 4;
  h.min_history = 3;
  write_manifest(dir.file("m.txt"), h, s);
  const SplitResult back = load_split(dir.file("m.txt"));
  CHECK(rows(*back.corpus, back.train) == rows(*shared, s.train));
  CHECK(rows(*back.corpus, back.test) == rows(*shared, s.test));
  CHECK(back.protocol == SplitProtocol::kByRandom);

  const Manifest m = read_manifest(dir.file("m.txt"));
  CHECK(m.train_rows.size() == s.train.size());
  CHECK(m.header.min_history == 3);
}
