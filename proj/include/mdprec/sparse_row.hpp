#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <unordered_map>
#include <vector>

#include "mdprec/domain.hpp"

namespace mdprec {

// Sparse distribution (or count vector) over next items, sorted by ItemId.
// Items and values are stored separately so rows feed the dense kernels.
struct SparseRow {
  std::vector<ItemId> items;
  std::vector<double> values;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }

  std::optional<std::size_t> find(ItemId item) const {
    auto it = std::lower_bound(items.begin(), items.end(), item);
    if (it == items.end() || *it != item) return std::nullopt;
    return static_cast<std::size_t>(it - items.begin());
  }

  double at(ItemId item) const {
    auto i = find(item);
    return i ? values[*i] : 0.0;
  }

  friend bool operator==(const SparseRow&, const SparseRow&) = default;
};

inline SparseRow row_from_map(const std::unordered_map<ItemId, double>& m) {
  std::vector<std::pair<ItemId, double>> entries(m.begin(), m.end());
  std::sort(entries.begin(), entries.end());
  SparseRow row;
  row.items.reserve(entries.size());
  row.values.reserve(entries.size());
  for (const auto& [item, v] : entries) {
    row.items.push_back(item);
    row.values.push_back(v);
  }
  return row;
}

// Gathers the non-zero entries of a dense vector.
inline SparseRow row_from_dense(const std::vector<double>& dense) {
  SparseRow row;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i] != 0.0) {
      row.items.push_back(static_cast<ItemId>(i));
      row.values.push_back(dense[i]);
    }
  }
  return row;
}

}  // namespace mdprec
