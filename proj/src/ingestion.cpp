#include "mdprec/ingestion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "json.hpp"

#include "mdprec/rng.hpp"

namespace mdprec {

EventFormat parse_event_format(std::string_view name) {
  if (name == "csv") return EventFormat::Csv;
  if (name == "jsonl") return EventFormat::Jsonl;
  throw std::invalid_argument("unknown event format '" + std::string(name) + "' (expected csv or jsonl)");
}

namespace {

std::string strip(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] void fail(std::string_view source, std::size_t lineno, const std::string& what) {
  throw DataError(std::string(source) + ":" + std::to_string(lineno) + ": " + what);
}

RawEvent parse_csv_row(const std::string& line, std::string_view source, std::size_t lineno) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(strip(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (fields.size() != 3) fail(source, lineno, "expected 3 fields (user,ts,item), got " + std::to_string(fields.size()));
  if (fields[0].empty()) fail(source, lineno, "missing user");
  if (fields[2].empty()) fail(source, lineno, "missing item");
  RawEvent ev;
  ev.user = fields[0];
  ev.item = fields[2];
  try {
    std::size_t used = 0;
    ev.ts = std::stoll(fields[1], &used);
    if (used != fields[1].size()) throw std::invalid_argument(fields[1]);
  } catch (const std::exception&) {
    fail(source, lineno, "bad timestamp '" + fields[1] + "'");
  }
  return ev;
}

RawEvent parse_jsonl_row(const std::string& line, std::string_view source, std::size_t lineno) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    fail(source, lineno, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(source, lineno, "expected a JSON object");
  auto str_field = [&](const char* name) {
    auto it = j.find(name);
    if (it == j.end() || !it->is_string() || it->get<std::string>().empty())
      fail(source, lineno, std::string("missing string field '") + name + "'");
    return it->get<std::string>();
  };
  RawEvent ev;
  ev.user = str_field("user");
  ev.item = str_field("item");
  auto ts = j.find("ts");
  if (ts == j.end() || !ts->is_number_integer()) fail(source, lineno, "missing integer field 'ts'");
  ev.ts = ts->get<std::int64_t>();
  return ev;
}

// Groups by user (first-appearance order) and stably sorts each group by time.
std::vector<RawEvent> group_by_user(std::vector<RawEvent> events) {
  std::unordered_map<std::string, std::size_t> rank;
  for (const auto& ev : events) rank.emplace(ev.user, rank.size());
  std::stable_sort(events.begin(), events.end(), [&](const RawEvent& a, const RawEvent& b) {
    const auto ra = rank.at(a.user), rb = rank.at(b.user);
    if (ra != rb) return ra < rb;
    return a.ts < b.ts;
  });
  return events;
}

}  // namespace

std::vector<RawEvent> parse_events(std::istream& in, EventFormat format, std::string_view source) {
  std::vector<RawEvent> events;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (strip(line).empty()) continue;
    if (format == EventFormat::Csv) {
      if (!header_seen) {
        header_seen = true;
        if (strip(line) != "user,ts,item") fail(source, lineno, "expected header 'user,ts,item'");
        continue;
      }
      events.push_back(parse_csv_row(line, source, lineno));
    } else {
      events.push_back(parse_jsonl_row(line, source, lineno));
    }
  }
  return group_by_user(std::move(events));
}

std::vector<RawEvent> load_events(const std::filesystem::path& path, EventFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event file " + path.string());
  return parse_events(in, format, path.string());
}

namespace {

// Calls fn(user, events-of-user) for each user run in grouped input.
template <typename Fn>
void for_each_user(std::span<const RawEvent> events, Fn&& fn) {
  const auto grouped = group_by_user(std::vector<RawEvent>(events.begin(), events.end()));
  std::size_t i = 0;
  while (i < grouped.size()) {
    std::size_t j = i;
    while (j < grouped.size() && grouped[j].user == grouped[i].user) ++j;
    fn(std::span<const RawEvent>(grouped).subspan(i, j - i));
    i = j;
  }
}

}  // namespace

std::vector<RawSequence> per_user_sequences(std::span<const RawEvent> events) {
  std::vector<RawSequence> out;
  for_each_user(events, [&](std::span<const RawEvent> run) {
    RawSequence seq{run.front().user, {}};
    for (const auto& ev : run) seq.items.push_back(ev.item);
    out.push_back(std::move(seq));
  });
  return out;
}

std::vector<RawSequence> sessionize(std::span<const RawEvent> events, std::int64_t gap_seconds) {
  if (gap_seconds <= 0) throw std::invalid_argument("session gap must be positive");
  std::vector<RawSequence> out;
  for_each_user(events, [&](std::span<const RawEvent> run) {
    RawSequence seq{run.front().user, {}};
    for (std::size_t i = 0; i < run.size(); ++i) {
      if (i > 0 && run[i].ts - run[i - 1].ts >= gap_seconds) {
        out.push_back(std::move(seq));
        seq = RawSequence{run.front().user, {}};
      }
      seq.items.push_back(run[i].item);
    }
    out.push_back(std::move(seq));
  });
  return out;
}

std::vector<RawSequence> filter_sequences(std::vector<RawSequence> sequences, const FilterOptions& options) {
  if (options.min_item_count < 1) throw std::invalid_argument("min_item_count must be >= 1");
  if (options.min_seq_len < 2) throw std::invalid_argument("min_seq_len must be >= 2");
  while (true) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& seq : sequences)
      for (const auto& item : seq.items) ++counts[item];

    bool changed = false;
    std::vector<RawSequence> kept;
    kept.reserve(sequences.size());
    for (auto& seq : sequences) {
      const auto before = seq.items.size();
      std::erase_if(seq.items, [&](const std::string& item) { return counts[item] < options.min_item_count; });
      if (seq.items.size() != before) changed = true;
      if (seq.items.size() < options.min_seq_len) {
        changed = true;
        continue;
      }
      kept.push_back(std::move(seq));
    }
    sequences = std::move(kept);
    if (!changed) break;
  }
  if (sequences.empty()) throw DataError("empty corpus: every sequence was removed by filtering");
  return sequences;
}

std::size_t SessionSet::user_count() const {
  std::set<std::string_view> users;
  for (const auto& s : sequences) users.insert(s.user);
  return users.size();
}

std::size_t SessionSet::transition_count() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.items.empty() ? 0 : s.items.size() - 1;
  return n;
}

std::vector<Sequence> intern_sequences(std::span<const RawSequence> sequences, ItemCatalog& catalog) {
  std::vector<Sequence> out;
  out.reserve(sequences.size());
  for (const auto& raw : sequences) {
    Sequence seq{raw.user, {}};
    seq.items.reserve(raw.items.size());
    for (const auto& key : raw.items) seq.items.push_back(catalog.intern(key));
    out.push_back(std::move(seq));
  }
  return out;
}

std::pair<SessionSet, SessionSet> split_sessions(std::vector<Sequence> sequences, double train_fraction,
                                                 std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("train fraction must be in (0, 1)");

  std::vector<std::string> users;
  {
    std::set<std::string> seen;
    for (const auto& s : sequences)
      if (seen.insert(s.user).second) users.push_back(s.user);
  }

  // Fisher-Yates with our own bounded draws: identical on every platform.
  Rng rng(derive_seed(seed, "split"));
  for (std::size_t i = users.size(); i > 1; --i) std::swap(users[i - 1], users[rng.below(i)]);

  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(users.size()) + 0.5));
  std::set<std::string> train_users(users.begin(), users.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, users.size())));

  SessionSet train{SplitTag::Train, {}};
  SessionSet test{SplitTag::Test, {}};
  for (auto& s : sequences) (train_users.count(s.user) ? train : test).sequences.push_back(std::move(s));
  return {std::move(train), std::move(test)};
}

Corpus ingest(const std::filesystem::path& path, const IngestOptions& options) {
  const auto events = load_events(path, options.format);
  std::vector<RawSequence> raw;
  if (options.sessionize) {
    if (!(options.session_gap_hours > 0.0)) throw std::invalid_argument("session gap must be positive");
    raw = sessionize(events, static_cast<std::int64_t>(std::llround(options.session_gap_hours * 3600.0)));
  } else {
    raw = per_user_sequences(events);
  }
  raw = filter_sequences(std::move(raw), options.filter);

  Corpus corpus;
  corpus.event_count = events.size();
  auto sequences = intern_sequences(raw, corpus.catalog);
  auto [train, test] = split_sessions(std::move(sequences), options.train_fraction, options.seed);
  corpus.train = std::move(train);
  corpus.test = std::move(test);
  return corpus;
}

}  // namespace mdprec
