#include "s2pnm/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include "s2pnm/error.hpp"
#include "s2pnm/rng.hpp"

namespace s2pnm {

std::size_t IdIndex::intern(const std::string& id) {
  auto [it, inserted] = lookup_.try_emplace(id, ids_.size());
  if (inserted) ids_.push_back(id);
  return it->second;
}

std::optional<std::size_t> IdIndex::find(const std::string& id) const {
  auto it = lookup_.find(id);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

Interaction Corpus::interaction(std::size_t i) const {
  const Event& e = events.at(i);
  return {users.id(e.user), items.id(e.item), e.rating, e.timestamp};
}

Corpus make_corpus(std::span<const Interaction> records) {
  Corpus c;
  c.events.reserve(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    const Interaction& x = records[r];
    c.events.push_back({c.users.intern(x.user_id), c.items.intern(x.item_id), x.rating,
                        x.timestamp, r});
  }
  return c;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  for (char ch : line) {
    if (ch == delim) {
      out.push_back(std::move(field));
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  out.push_back(std::move(field));
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_time(const std::string& s) {
  if (s.empty()) return std::nullopt;
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc() && ptr == s.data() + s.size()) return v;
  // Accept integral values written in floating-point notation.
  auto d = parse_real(s);
  if (d && *d == std::floor(*d) && std::abs(*d) < 9e18) return static_cast<std::int64_t>(*d);
  return std::nullopt;
}

bool is_position(const std::string& col) {
  return !col.empty() && std::all_of(col.begin(), col.end(), [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

CsvSchema CsvSchema::parse(const std::string& spec, char delimiter) {
  auto cols = split_line(spec, ',');
  if (cols.size() != 4 || std::any_of(cols.begin(), cols.end(), [](auto& c) { return c.empty(); })) {
    throw ConfigError("schema must list four columns user,item,rating,timestamp; got '" + spec + "'");
  }
  CsvSchema s;
  s.user = cols[0];
  s.item = cols[1];
  s.rating = cols[2];
  s.timestamp = cols[3];
  s.delimiter = delimiter;
  return s;
}

std::string CsvSchema::to_string() const {
  return user + "," + item + "," + rating + "," + timestamp;
}

Corpus load_csv(const std::filesystem::path& path, const CsvSchema& schema, LoadReport* report) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read input file '" + path.string() + "'");

  LoadReport local;
  LoadReport& rep = report ? *report : local;
  rep = LoadReport{};

  const bool by_name = !is_position(schema.user) || !is_position(schema.item) ||
                       !is_position(schema.rating) || !is_position(schema.timestamp);
  std::size_t cu = 0, ci = 0, cr = 0, ct = 0;
  if (!by_name) {
    cu = std::stoul(schema.user);
    ci = std::stoul(schema.item);
    cr = std::stoul(schema.rating);
    ct = std::stoul(schema.timestamp);
  }

  std::string line;
  bool first = true;
  std::size_t row = 0;
  std::vector<Interaction> records;
  std::vector<std::size_t> rows;

  auto skip = [&](const std::string& why) {
    ++rep.rows_skipped;
    if (rep.skip_reasons.size() < 10) rep.skip_reasons.push_back(why);
  };

  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_line(line, schema.delimiter);
    if (first) {
      first = false;
      bool header = false;
      if (schema.header) {
        header = *schema.header;
      } else if (by_name) {
        header = true;
      } else {
        const bool numeric = cr < fields.size() && ct < fields.size() &&
                             parse_real(fields[cr]) && parse_time(fields[ct]);
        header = !numeric;
      }
      if (header) {
        if (by_name) {
          auto col = [&](const std::string& name) {
            if (is_position(name)) return static_cast<std::size_t>(std::stoul(name));
            auto it = std::find(fields.begin(), fields.end(), name);
            if (it == fields.end()) throw DataError("column '" + name + "' not found in header");
            return static_cast<std::size_t>(it - fields.begin());
          };
          cu = col(schema.user);
          ci = col(schema.item);
          cr = col(schema.rating);
          ct = col(schema.timestamp);
        }
        continue;
      }
      if (by_name) throw DataError("schema selects columns by name but the file has no header");
    }

    const std::size_t this_row = row++;
    ++rep.rows_read;
    const std::size_t need = std::max({cu, ci, cr, ct});
    if (fields.size() <= need) {
      skip("row " + std::to_string(this_row) + ": too few columns");
      continue;
    }
    auto rating = parse_real(fields[cr]);
    if (!rating) {
      skip("row " + std::to_string(this_row) + ": bad rating '" + fields[cr] + "'");
      continue;
    }
    auto ts = parse_time(fields[ct]);
    if (!ts) {
      skip("row " + std::to_string(this_row) + ": bad timestamp '" + fields[ct] + "'");
      continue;
    }
    if (fields[cu].empty() || fields[ci].empty()) {
      skip("row " + std::to_string(this_row) + ": empty id");
      continue;
    }
    records.push_back({fields[cu], fields[ci], *rating, *ts});
    rows.push_back(this_row);
  }

  if (records.empty()) throw DataError("no valid rows in '" + path.string() + "'");

  Corpus c = make_corpus(records);
  std::set<std::tuple<std::size_t, std::size_t, std::int64_t>> seen;
  for (std::size_t k = 0; k < c.events.size(); ++k) {
    Event& e = c.events[k];
    e.row = rows[k];
    if (!seen.emplace(e.user, e.item, e.timestamp).second) ++rep.duplicate_triples;
  }
  return c;
}

void write_csv(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "user,item,rating,timestamp\n";
  out.precision(17);
  for (const Event& e : corpus.events) {
    out << corpus.users.id(e.user) << ',' << corpus.items.id(e.item) << ',' << e.rating << ','
        << e.timestamp << '\n';
  }
}

Corpus select_events(const Corpus& corpus, std::span<const std::size_t> positions) {
  Corpus out;
  out.events.reserve(positions.size());
  for (std::size_t p : positions) {
    const Event& e = corpus.events.at(p);
    out.events.push_back({out.users.intern(corpus.users.id(e.user)),
                          out.items.intern(corpus.items.id(e.item)), e.rating, e.timestamp,
                          e.row});
  }
  return out;
}

Corpus filter_min_history(const Corpus& corpus, std::size_t min_events) {
  if (min_events < 1) throw ConfigError("min_history must be at least 1");
  std::vector<std::size_t> counts(corpus.num_users(), 0);
  for (const Event& e : corpus.events) ++counts[e.user];
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < corpus.events.size(); ++k)
    if (counts[corpus.events[k].user] >= min_events) keep.push_back(k);
  if (keep.empty()) {
    throw DataError("no user has at least " + std::to_string(min_events) + " events");
  }
  return select_events(corpus, keep);
}

// ---------------------------------------------------------------------------
// Splits

std::string protocol_name(SplitProtocol p) {
  switch (p) {
    case SplitProtocol::kByTime: return "time";
    case SplitProtocol::kByRandom: return "random";
    case SplitProtocol::kPerUserPrefix: return "prefix";
  }
  return "?";
}

SplitProtocol parse_protocol(const std::string& name) {
  if (name == "time") return SplitProtocol::kByTime;
  if (name == "random") return SplitProtocol::kByRandom;
  if (name == "prefix") return SplitProtocol::kPerUserPrefix;
  throw ConfigError("unknown protocol '" + name + "' (expected time, random or prefix)");
}

namespace {

void check_fraction(double f) {
  if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
}

void check_nonempty(const SplitResult& s) {
  if (s.train.empty()) throw DataError("split produced an empty train set");
  if (s.test.empty()) throw DataError("split produced an empty test set");
}

// floor/ceil of fraction * n, robust to representation error such as
// 0.7 * 10 = 7.000000000000001.
std::size_t scaled_floor(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}
std::size_t scaled_ceil(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

std::vector<std::size_t> chronological_order(const Corpus& c) {
  std::vector<std::size_t> order(c.events.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return c.events[a].timestamp < c.events[b].timestamp;
  });
  return order;
}

}  // namespace

SplitResult split_by_time(std::shared_ptr<const Corpus> corpus, double train_fraction) {
  check_fraction(train_fraction);
  SplitResult s;
  s.protocol = SplitProtocol::kByTime;
  auto order = chronological_order(*corpus);
  const std::size_t n_train = scaled_floor(train_fraction, order.size());
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  s.corpus = std::move(corpus);
  check_nonempty(s);
  return s;
}

SplitResult split_by_random(std::shared_ptr<const Corpus> corpus, double train_fraction,
                            std::uint64_t seed) {
  check_fraction(train_fraction);
  SplitResult s;
  s.protocol = SplitProtocol::kByRandom;
  std::vector<std::size_t> perm(corpus->events.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = Rng(seed).split("split");
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.below(i)]);
  }
  const std::size_t n_train = scaled_floor(train_fraction, perm.size());
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  s.corpus = std::move(corpus);
  check_nonempty(s);
  return s;
}

SplitResult split_per_user_prefix(std::shared_ptr<const Corpus> corpus, double prefix_fraction) {
  check_fraction(prefix_fraction);
  SplitResult s;
  s.protocol = SplitProtocol::kPerUserPrefix;
  for (const UserSequence& seq : sequences(*corpus)) {
    const std::size_t t = seq.events.size();
    if (t == 0) continue;
    const std::size_t n_train = std::min(t, scaled_ceil(prefix_fraction, t));
    for (std::size_t k = 0; k < t; ++k) {
      (k < n_train ? s.train : s.test).push_back(seq.events[k].position);
    }
    if (n_train == t) ++s.users_without_test;
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  s.corpus = std::move(corpus);
  check_nonempty(s);
  return s;
}

std::vector<UserSequence> sequences(const Corpus& corpus, std::span<const std::size_t> positions) {
  std::vector<UserSequence> out(corpus.num_users());
  for (std::size_t u = 0; u < out.size(); ++u) out[u].user = u;
  std::vector<std::size_t> sorted(positions.begin(), positions.end());
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t p : sorted) {
    const Event& e = corpus.events.at(p);
    out[e.user].events.push_back({e.item, e.rating, e.timestamp, p});
  }
  for (auto& seq : out) {
    std::stable_sort(seq.events.begin(), seq.events.end(),
                     [](const SeqEvent& a, const SeqEvent& b) { return a.timestamp < b.timestamp; });
  }
  return out;
}

std::vector<UserSequence> sequences(const Corpus& corpus) {
  std::vector<std::size_t> all(corpus.events.size());
  std::iota(all.begin(), all.end(), 0);
  return sequences(corpus, all);
}

// ---------------------------------------------------------------------------
// Manifests

void write_manifest(const std::filesystem::path& path, const ManifestHeader& header,
                    const SplitResult& split) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  out.precision(17);
  out << "# input = " << header.input << '\n';
  out << "# schema = " << header.schema.to_string() << '\n';
  out << "# delimiter = " << static_cast<int>(header.schema.delimiter) << '\n';
  if (header.schema.header) out << "# header = " << (*header.schema.header ? 1 : 0) << '\n';
  out << "# protocol = " << header.protocol << '\n';
  out << "# fraction = " << header.fraction << '\n';
  out << "# seed = " << header.seed << '\n';
  out << "# min_history = " << header.min_history << '\n';

  std::vector<std::pair<std::size_t, bool>> lines;
  lines.reserve(split.train.size() + split.test.size());
  for (std::size_t p : split.train) lines.emplace_back(split.corpus->events[p].row, true);
  for (std::size_t p : split.test) lines.emplace_back(split.corpus->events[p].row, false);
  std::sort(lines.begin(), lines.end());
  for (auto [row, is_train] : lines) out << (is_train ? "train" : "test") << '\t' << row << '\n';
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest '" + path.string() + "'");
  Manifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      const std::string key = trim(line.substr(1, eq - 1));
      const std::string value = trim(line.substr(eq + 1));
      if (key == "input") m.header.input = value;
      else if (key == "schema") m.header.schema = CsvSchema::parse(value, m.header.schema.delimiter);
      else if (key == "delimiter") m.header.schema.delimiter = static_cast<char>(std::stoi(value));
      else if (key == "header") m.header.schema.header = value == "1";
      else if (key == "protocol") m.header.protocol = value;
      else if (key == "fraction") m.header.fraction = std::stod(value);
      else if (key == "seed") m.header.seed = std::stoull(value);
      else if (key == "min_history") m.header.min_history = std::stoul(value);
      continue;
    }
    const auto tab = line.find('\t');
    std::size_t row = 0;
    const std::string tag = line.substr(0, tab);
    const std::string num = tab == std::string::npos ? std::string() : line.substr(tab + 1);
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), row);
    if (tab == std::string::npos || ec != std::errc() || ptr != num.data() + num.size() ||
        (tag != "train" && tag != "test")) {
      throw DataError("malformed manifest line " + std::to_string(lineno) + " in '" +
                      path.string() + "'");
    }
    (tag == "train" ? m.train_rows : m.test_rows).push_back(row);
  }
  if (m.header.input.empty()) throw DataError("manifest '" + path.string() + "' names no input");
  return m;
}

SplitResult load_split(const std::filesystem::path& manifest_path) {
  Manifest m = read_manifest(manifest_path);
  std::filesystem::path input = m.header.input;
  if (input.is_relative() && !std::filesystem::exists(input)) {
    input = manifest_path.parent_path() / input;
  }
  Corpus full = load_csv(input, m.header.schema);

  std::unordered_map<std::size_t, std::size_t> by_row;
  for (std::size_t k = 0; k < full.events.size(); ++k) by_row.emplace(full.events[k].row, k);

  std::vector<std::pair<std::size_t, bool>> chosen;
  for (std::size_t r : m.train_rows) chosen.emplace_back(r, true);
  for (std::size_t r : m.test_rows) chosen.emplace_back(r, false);
  std::sort(chosen.begin(), chosen.end());

  std::vector<std::size_t> positions;
  positions.reserve(chosen.size());
  for (auto [row, is_train] : chosen) {
    auto it = by_row.find(row);
    if (it == by_row.end()) {
      throw DataError("manifest row " + std::to_string(row) + " is not a valid row of '" +
                      input.string() + "'");
    }
    positions.push_back(it->second);
  }

  auto corpus = std::make_shared<Corpus>(select_events(full, positions));
  SplitResult s;
  s.protocol = m.header.protocol.empty() ? SplitProtocol::kByTime : parse_protocol(m.header.protocol);
  for (std::size_t k = 0; k < chosen.size(); ++k) (chosen[k].second ? s.train : s.test).push_back(k);
  s.corpus = std::move(corpus);
  if (s.protocol == SplitProtocol::kPerUserPrefix) {
    std::vector<bool> has_test(s.corpus->num_users(), false);
    for (std::size_t p : s.test) has_test[s.corpus->events[p].user] = true;
    s.users_without_test = static_cast<std::size_t>(std::count(has_test.begin(), has_test.end(), false));
  }
  return s;
}

}  // namespace s2pnm
