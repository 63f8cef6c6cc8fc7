#pragma once

// Event logs -> filtered, interned, train/test split session sets.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mdprec/domain.hpp"

namespace mdprec {

struct RawEvent {
  std::string user;
  std::int64_t ts = 0;
  std::string item;
};

enum class EventFormat { Csv, Jsonl };

EventFormat parse_event_format(std::string_view name);

// Parses `user,ts,item` CSV (with header) or JSONL objects. Events come back
// grouped by user in order of first appearance, each group stably sorted by
// timestamp. Malformed rows raise DataError naming the line.
std::vector<RawEvent> parse_events(std::istream& in, EventFormat format, std::string_view source = "<input>");
std::vector<RawEvent> load_events(const std::filesystem::path& path, EventFormat format);

// A user's selections before interning.
struct RawSequence {
  std::string user;
  std::vector<std::string> items;
};

// One sequence per user, no time cuts (purchase data).
std::vector<RawSequence> per_user_sequences(std::span<const RawEvent> events);

// Cuts each user's timeline wherever consecutive timestamps differ by at
// least `gap_seconds`. Sessions keep their user for the per-user split.
std::vector<RawSequence> sessionize(std::span<const RawEvent> events, std::int64_t gap_seconds);

struct FilterOptions {
  std::size_t min_item_count = 100;
  std::size_t min_seq_len = 2;
};

// Drops rare items and short sequences, repeating until neither rule removes
// anything. Throws DataError("empty corpus") if nothing survives.
std::vector<RawSequence> filter_sequences(std::vector<RawSequence> sequences, const FilterOptions& options);

struct Sequence {
  std::string user;
  std::vector<ItemId> items;

  friend bool operator==(const Sequence&, const Sequence&) = default;
};

enum class SplitTag { Train, Test };

struct SessionSet {
  SplitTag tag = SplitTag::Train;
  std::vector<Sequence> sequences;

  std::size_t user_count() const;
  std::size_t transition_count() const;
};

// Interns items in order of first appearance.
std::vector<Sequence> intern_sequences(std::span<const RawSequence> sequences, ItemCatalog& catalog);

// Splits by user: round(train_fraction * users) users (ties toward train)
// go to the training side, chosen by a seeded shuffle.
std::pair<SessionSet, SessionSet> split_sessions(std::vector<Sequence> sequences, double train_fraction,
                                                 std::uint64_t seed);

struct IngestOptions {
  EventFormat format = EventFormat::Csv;
  bool sessionize = false;
  double session_gap_hours = 2.0;
  FilterOptions filter;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
};

struct Corpus {
  ItemCatalog catalog;
  SessionSet train{SplitTag::Train, {}};
  SessionSet test{SplitTag::Test, {}};
  std::size_t event_count = 0;
};

Corpus ingest(const std::filesystem::path& events, const IngestOptions& options);

}  // namespace mdprec
