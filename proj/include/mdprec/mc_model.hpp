#pragma once

// Enhanced k-order Markov-chain predictor: fractional-count skipping,
// positional-similarity clustering and a uniform mixture over orders.

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mdprec/domain.hpp"
#include "mdprec/ingestion.hpp"
#include "mdprec/sparse_row.hpp"

namespace mdprec {

// Fractional transition counts for one order. Rows are keyed by State, or by
// the canonical sorted-bag encoding when `unordered` is set.
class CountTable {
 public:
  using Row = std::unordered_map<ItemId, double>;

  explicit CountTable(int order, bool unordered = false);

  int order() const { return order_; }
  bool unordered() const { return unordered_; }

  // Maps a context state to its row key.
  State key_for(const State& context) const { return unordered_ ? unorder(context).as_state() : context; }

  void add(const State& context, ItemId next, double weight);
  double get(const State& context, ItemId next) const;

  std::size_t row_count() const { return rows_.size(); }
  std::size_t entry_count() const;
  const std::unordered_map<State, Row, StateHash>& rows() const { return rows_; }

 private:
  int order_;
  bool unordered_;
  std::unordered_map<State, Row, StateHash> rows_;
};

// Counts every observed transition, including the one out of the all-MISSING
// initial state, with weight 1.
CountTable count_base(const SessionSet& train, int order, bool unordered = false);

// count_base plus, for each context ending at position e and each later
// target j, the fractional count 2^-(j - e - 1). The direct successor keeps
// weight 1.
CountTable count_with_skipping(const SessionSet& train, int order, bool unordered = false);

// Row-stochastic transition function of one order; rows sorted by key.
class TransitionModel {
 public:
  TransitionModel() = default;
  TransitionModel(int order, bool unordered, std::vector<std::pair<State, SparseRow>> rows);

  int order() const { return order_; }
  bool unordered() const { return unordered_; }
  std::size_t size() const { return keys_.size(); }

  State key_for(const State& context) const { return unordered_ ? unorder(context).as_state() : context; }
  State key_for_history(std::span<const ItemId> history) const { return key_for(state_from_history(history, order_)); }

  const SparseRow* find(const State& key) const;
  const SparseRow* find_context(std::span<const ItemId> history) const { return find(key_for_history(history)); }

  std::span<const State> keys() const { return keys_; }
  std::span<const SparseRow> rows() const { return rows_; }

  // One past the largest item id mentioned in any row.
  std::size_t item_bound() const;

 private:
  int order_ = 1;
  bool unordered_ = false;
  std::vector<State> keys_;
  std::vector<SparseRow> rows_;
  std::unordered_map<State, std::uint32_t, StateHash> index_;
};

// Divides each row by its total; rows with zero total are dropped.
TransitionModel normalize(const CountTable& counts);

// sum over slots m = 1..k of (m + 1) where both states hold the same item.
// Matching MISSING slots contribute nothing.
double similarity(const State& a, const State& b);

// Blends each row half-and-half with its similarity-weighted neighbourhood
// row. Neighbours are found through a (slot, item) inverted index; a state
// with no neighbour keeps its row.
TransitionModel apply_clustering(const TransitionModel& model);

struct ModelConfig {
  int k = 3;
  std::vector<int> orders;  // mixture components; empty means 1..k
  bool skipping = false;
  bool clustering = false;
  bool unordered = false;

  std::vector<int> component_orders() const;
  int top_order() const;
  // e.g. "MC123-SK-SM", "UMC12", "MC3"
  std::string variant_name() const;
};

class MixtureModel {
 public:
  MixtureModel(ModelConfig config, std::size_t item_count, std::vector<TransitionModel> components,
               std::vector<double> weights, SparseRow fallback,
               std::unordered_map<State, double, StateHash> termination = {});

  // Throws DataError on an empty training set.
  static MixtureModel build(const SessionSet& train, const ModelConfig& config, std::size_t item_count);

  const ModelConfig& config() const { return config_; }
  std::size_t item_count() const { return item_count_; }
  std::span<const TransitionModel> components() const { return components_; }
  std::span<const double> weights() const { return weights_; }
  const TransitionModel& top() const { return components_.back(); }

  // Initial-state row of the order-1 chain; answers when no component knows the context.
  const SparseRow& fallback() const { return fallback_; }

  // Fraction of visits to a top-order state that ended a training sequence.
  double termination(const State& key) const;
  const std::unordered_map<State, double, StateHash>& terminations() const { return termination_; }

  // Dense next-item distribution. Components whose context row is absent
  // drop out and the remaining weights are renormalized.
  std::vector<double> predict(std::span<const ItemId> history) const;
  SparseRow predict_sparse(std::span<const ItemId> history) const;

  // Every catalog item, by probability descending then ItemId ascending.
  std::vector<ItemId> rank(std::span<const ItemId> history) const;

 private:
  ModelConfig config_;
  std::size_t item_count_;
  std::vector<TransitionModel> components_;
  std::vector<double> weights_;
  SparseRow fallback_;
  std::unordered_map<State, double, StateHash> termination_;
};

// Items ordered by score descending, ties by ascending id.
std::vector<ItemId> rank_by_score(std::span<const double> scores);

}  // namespace mdprec
