#pragma once

// Shared vocabulary: interned items, k-slot states and the item catalog.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mdprec {

using ItemId = std::uint32_t;

// Reserved slot value for "no item yet". Never a valid catalog index.
inline constexpr ItemId kMissing = std::numeric_limits<ItemId>::max();

inline constexpr int kMaxOrder = 5;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or unusable input data (parse failures, empty corpora, unknown states).
class DataError : public Error {
 public:
  using Error::Error;
};

class ItemCatalog {
 public:
  static constexpr double kDefaultReward = 1.0;

  // Returns the id for `key`, assigning the next dense index on first sight.
  ItemId intern(std::string_view key);

  std::optional<ItemId> find(std::string_view key) const;
  const std::string& key(ItemId id) const { return keys_.at(id); }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }

  double reward(ItemId id) const { return rewards_.at(id); }
  void set_reward(ItemId id, double reward);
  std::span<const double> rewards() const { return rewards_; }
  std::span<const std::string> keys() const { return keys_; }

  // Reads a `item,reward` CSV. Rows naming items outside the catalog are
  // skipped; returns the number of rows applied.
  std::size_t load_rewards_csv(const std::filesystem::path& path);

 private:
  std::vector<std::string> keys_;
  std::unordered_map<std::string, ItemId> index_;
  std::vector<double> rewards_;
};

// The last k selections, right-aligned, with MISSING padding on the left.
class State {
 public:
  State() = default;
  explicit State(int order);

  static State initial(int order) { return State(order); }

  int order() const { return order_; }
  ItemId operator[](int slot) const { return slots_[static_cast<std::size_t>(slot)]; }
  void set(int slot, ItemId item) { slots_[static_cast<std::size_t>(slot)] = item; }
  std::span<const ItemId> slots() const { return {slots_.data(), static_cast<std::size_t>(order_)}; }

  ItemId last() const { return order_ == 0 ? kMissing : slots_[static_cast<std::size_t>(order_ - 1)]; }
  int filled() const;
  bool is_initial() const { return filled() == 0; }

  friend bool operator==(const State&, const State&) = default;
  friend auto operator<=>(const State&, const State&) = default;

 private:
  std::uint8_t order_ = 0;
  std::array<ItemId, kMaxOrder> slots_{kMissing, kMissing, kMissing, kMissing, kMissing};
};

struct StateHash {
  std::size_t operator()(const State& s) const noexcept;
};

// Throws std::invalid_argument unless 1 <= k <= kMaxOrder.
void check_order(int k);

State state_from_history(std::span<const ItemId> history, int k);

// Shifts left one slot and appends `item`.
State advance(const State& s, ItemId item);

// The non-MISSING slots, oldest first.
std::vector<ItemId> history_of(const State& s);

// Sorted bag of a state's items; order within the window is forgotten.
class UnorderedState {
 public:
  UnorderedState() = default;
  explicit UnorderedState(const State& s);

  std::span<const ItemId> items() const { return {bag_.data(), size_}; }
  int order() const { return order_; }

  // Canonical State encoding used as a row key: sorted items, right-aligned.
  State as_state() const;

  friend bool operator==(const UnorderedState&, const UnorderedState&) = default;

 private:
  std::array<ItemId, kMaxOrder> bag_{};
  std::size_t size_ = 0;
  int order_ = 0;
};

UnorderedState unorder(const State& s);

// Maps a context (oldest item first) to a ranked list of items.
using Ranker = std::function<std::vector<ItemId>(std::span<const ItemId>)>;

}  // namespace mdprec

template <>
struct std::hash<mdprec::State> {
  std::size_t operator()(const mdprec::State& s) const noexcept { return mdprec::StateHash{}(s); }
};
