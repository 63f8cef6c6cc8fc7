#include "mdprec/domain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mdprec {

ItemId ItemCatalog::intern(std::string_view key) {
  if (key.empty()) throw DataError("item key must be non-empty");
  std::string k(key);
  if (auto it = index_.find(k); it != index_.end()) return it->second;
  const auto id = static_cast<ItemId>(keys_.size());
  index_.emplace(k, id);
  keys_.push_back(std::move(k));
  rewards_.push_back(kDefaultReward);
  return id;
}

std::optional<ItemId> ItemCatalog::find(std::string_view key) const {
  auto it = index_.find(std::string(key));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void ItemCatalog::set_reward(ItemId id, double reward) {
  if (!std::isfinite(reward)) throw DataError("reward for '" + key(id) + "' is not finite");
  rewards_.at(id) = reward;
}

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

std::size_t ItemCatalog::load_rewards_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open profit file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  std::size_t applied = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (line != "item,reward")
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected header 'item,reward'");
      continue;
    }
    const auto comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 'item,reward'");
    const std::string item = trim(line.substr(0, comma));
    const std::string value = trim(line.substr(comma + 1));
    double reward = 0.0;
    try {
      std::size_t used = 0;
      reward = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad reward '" + value + "'");
    }
    if (!std::isfinite(reward))
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": reward is not finite");
    if (auto id = find(item)) {
      rewards_[*id] = reward;
      ++applied;
    }
  }
  return applied;
}

State::State(int order) {
  check_order(order);
  order_ = static_cast<std::uint8_t>(order);
}

int State::filled() const {
  int n = 0;
  for (ItemId x : slots())
    if (x != kMissing) ++n;
  return n;
}

std::size_t StateHash::operator()(const State& s) const noexcept {
  std::uint64_t h = 0x9e3779b97f4a7c15ULL ^ static_cast<std::uint64_t>(s.order());
  for (ItemId x : s.slots()) {
    h ^= static_cast<std::uint64_t>(x) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return static_cast<std::size_t>(h);
}

void check_order(int k) {
  if (k < 1 || k > kMaxOrder)
    throw std::invalid_argument("order must be in 1.." + std::to_string(kMaxOrder) + ", got " + std::to_string(k));
}

State state_from_history(std::span<const ItemId> history, int k) {
  State s(k);
  const std::size_t take = std::min(history.size(), static_cast<std::size_t>(k));
  const std::size_t from = history.size() - take;
  for (std::size_t i = 0; i < take; ++i) s.set(k - static_cast<int>(take) + static_cast<int>(i), history[from + i]);
  return s;
}

State advance(const State& s, ItemId item) {
  State next(s.order());
  for (int m = 1; m < s.order(); ++m) next.set(m - 1, s[m]);
  next.set(s.order() - 1, item);
  return next;
}

std::vector<ItemId> history_of(const State& s) {
  std::vector<ItemId> h;
  for (ItemId x : s.slots())
    if (x != kMissing) h.push_back(x);
  return h;
}

UnorderedState::UnorderedState(const State& s) : order_(s.order()) {
  for (ItemId x : s.slots())
    if (x != kMissing) bag_[size_++] = x;
  std::sort(bag_.begin(), bag_.begin() + static_cast<std::ptrdiff_t>(size_));
}

State UnorderedState::as_state() const { return state_from_history(items(), order_); }

UnorderedState unorder(const State& s) { return UnorderedState(s); }

}  // namespace mdprec
