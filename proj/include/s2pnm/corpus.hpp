#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace s2pnm {

/// One (user, item, rating, timestamp) record with external ids.
struct Interaction {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::int64_t timestamp = 0;
};

/// An interaction resolved to dense indices. `row` is the 0-based data-row
/// number in the source file (header excluded) and identifies the event in
/// split manifests.
struct Event {
  std::size_t user = 0;
  std::size_t item = 0;
  double rating = 0.0;
  std::int64_t timestamp = 0;
  std::size_t row = 0;
};

/// Bijection between external string ids and dense indices [0, size()).
class IdIndex {
 public:
  std::size_t intern(const std::string& id);
  std::optional<std::size_t> find(const std::string& id) const;
  const std::string& id(std::size_t index) const { return ids_.at(index); }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

struct Corpus {
  std::vector<Event> events;
  IdIndex users;
  IdIndex items;

  std::size_t num_users() const { return users.size(); }
  std::size_t num_items() const { return items.size(); }
  std::size_t size() const { return events.size(); }

  Interaction interaction(std::size_t i) const;
};

/// Builds a corpus from records in order; indices follow first appearance.
/// Records without an explicit row get their position as row number.
Corpus make_corpus(std::span<const Interaction> records);

/// Column selection for CSV ingestion. Each column is either a header name
/// or a 0-based position.
struct CsvSchema {
  std::string user = "0";
  std::string item = "1";
  std::string rating = "2";
  std::string timestamp = "3";
  char delimiter = ',';
  /// Unset means auto-detect: the first line is a header when its rating or
  /// timestamp field does not parse as a number.
  std::optional<bool> header;

  /// Parses "user,item,rating,timestamp" (names or positions).
  static CsvSchema parse(const std::string& spec, char delimiter = ',');
  std::string to_string() const;
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::size_t rows_skipped = 0;
  std::size_t duplicate_triples = 0;
  std::vector<std::string> skip_reasons;  // first few, for diagnostics
};

/// Reads a rating file. Malformed rows are skipped and counted; duplicate
/// (user, item, timestamp) triples are kept and counted. Throws DataError on
/// an unreadable file or when no row is valid.
Corpus load_csv(const std::filesystem::path& path, const CsvSchema& schema,
                LoadReport* report = nullptr);

void write_csv(const std::filesystem::path& path, const Corpus& corpus);

/// Keeps users with at least `min_events` interactions and re-densifies
/// both index spaces in first-appearance order.
Corpus filter_min_history(const Corpus& corpus, std::size_t min_events);

/// Restricts a corpus to the given event positions (ascending) and
/// re-densifies.
Corpus select_events(const Corpus& corpus, std::span<const std::size_t> positions);

enum class SplitProtocol { kByTime, kByRandom, kPerUserPrefix };

std::string protocol_name(SplitProtocol p);
SplitProtocol parse_protocol(const std::string& name);

/// Train/test partition of a corpus. `train` and `test` hold ascending
/// positions into `corpus->events`.
struct SplitResult {
  std::shared_ptr<const Corpus> corpus;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  SplitProtocol protocol = SplitProtocol::kByTime;
  /// Users whose events all landed in train (per-user prefix only).
  std::size_t users_without_test = 0;
};

/// Global chronological split: the first floor(fraction * N) events by
/// (timestamp, input order) are train.
SplitResult split_by_time(std::shared_ptr<const Corpus> corpus, double train_fraction);

/// Uniformly random split of floor(fraction * N) train events under `seed`.
SplitResult split_by_random(std::shared_ptr<const Corpus> corpus, double train_fraction,
                            std::uint64_t seed);

/// Per user, the first ceil(fraction * T_u) events by time are train.
SplitResult split_per_user_prefix(std::shared_ptr<const Corpus> corpus,
                                  double prefix_fraction);

struct SeqEvent {
  std::size_t item = 0;
  double rating = 0.0;
  std::int64_t timestamp = 0;
  /// Position in Corpus::events.
  std::size_t position = 0;
};

/// A user's events in ascending timestamp order, ties kept in input order.
struct UserSequence {
  std::size_t user = 0;
  std::vector<SeqEvent> events;
};

/// One sequence per user (index == user), including users with no events.
std::vector<UserSequence> sequences(const Corpus& corpus);
/// As above, restricted to the given event positions.
std::vector<UserSequence> sequences(const Corpus& corpus,
                                    std::span<const std::size_t> positions);

// ---------------------------------------------------------------------------
// Split manifests: `# key = value` header lines followed by one
// `train|test<TAB>row` line per event, in ascending row order.

struct ManifestHeader {
  std::string input;
  CsvSchema schema;
  std::string protocol;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::size_t min_history = 1;
};

void write_manifest(const std::filesystem::path& path, const ManifestHeader& header,
                    const SplitResult& split);

struct Manifest {
  ManifestHeader header;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

Manifest read_manifest(const std::filesystem::path& path);

/// Re-reads the manifest's input file and rebuilds the exact split it
/// records. Relative input paths resolve against the manifest's directory.
SplitResult load_split(const std::filesystem::path& manifest_path);

}  // namespace s2pnm
