#pragma once

// Recommendation MDP initialised from the predictive model.
//
// States are the encountered top-order states, actions are items, and the
// reward of a state is the profit of its most recent item. Recommending an
// item multiplies its selection probability by alpha (capped at 1) and
// rescales every other item so the row stays a distribution.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "mdprec/domain.hpp"
#include "mdprec/mc_model.hpp"
#include "mdprec/rng.hpp"
#include "mdprec/sparse_row.hpp"

namespace mdprec {

struct MdpParams {
  double alpha = 1.5;
  double gamma = 0.95;
  double prior_strength = 10.0;
  bool end_state = false;  // scale continuation by (1 - P(session ends here))

  void validate() const;
};

// The alpha-boosted row for `recommended`. An item outside the row keeps
// probability 0 and leaves the row unchanged.
SparseRow boost_row(const SparseRow& base, ItemId recommended, double alpha);

class MdpModel {
 public:
  MdpModel(int k, std::vector<double> rewards, MdpParams params);

  // States and base rows from the top-order component keys, with rows
  // predicted by the full mixture. Unordered models are rejected.
  static MdpModel from_mixture(const MixtureModel& model, std::span<const double> rewards, const MdpParams& params);

  int order() const { return k_; }
  std::size_t item_count() const { return rewards_.size(); }
  const MdpParams& params() const { return params_; }
  std::span<const double> item_rewards() const { return rewards_; }

  void set_base_row(const State& s, SparseRow row);
  void set_termination(const State& s, double probability);

  const SparseRow* base_row(const State& s) const;
  bool encountered(const State& s) const;
  // Encountered states, sorted.
  std::vector<State> states() const;

  double reward(const State& s) const;
  // Session-end probability at s; 0 unless params().end_state.
  double termination(const State& s) const;

  // Effective next-item distribution when `recommended` is shown at s:
  // (prior_strength * boosted row + online counts) / (prior_strength + n).
  // Throws DataError for a state with neither a base row nor online data.
  SparseRow transition_row(const State& s, ItemId recommended) const;

  // Records that `chosen` followed a recommendation of `recommended` at s.
  void observe(const State& s, ItemId recommended, ItemId chosen);

  // Online counts for (s, a); empty when none.
  SparseRow online_counts(const State& s, ItemId recommended) const;
  std::vector<ItemId> online_actions(const State& s) const;

  // Base row, or for states known only through observe() the pooled
  // empirical row over all recommendations seen there.
  std::optional<SparseRow> initial_row(const State& s) const;

 private:
  int k_;
  std::vector<double> rewards_;
  MdpParams params_;
  std::unordered_map<State, SparseRow, StateHash> base_;
  std::unordered_map<State, double, StateHash> termination_;
  std::unordered_map<State, std::map<ItemId, std::map<ItemId, double>>, StateHash> online_;
};

class Policy {
 public:
  Policy() = default;
  Policy(int k, std::vector<State> states, std::vector<ItemId> actions, std::vector<double> values);

  int order() const { return k_; }
  std::span<const State> states() const { return states_; }
  std::span<const ItemId> actions() const { return actions_; }
  std::span<const double> values() const { return values_; }

  std::optional<std::size_t> find(const State& s) const;
  std::optional<ItemId> action(const State& s) const;
  std::optional<double> value(const State& s) const;

  // Solver diagnostics.
  int iterations = 0;
  bool converged = false;
  std::vector<double> residuals;                   // last sweep residual per round
  std::vector<int> sweeps;                         // evaluation sweeps per round
  std::vector<std::vector<double>> value_history;  // evaluated values per round, if recorded

 private:
  int k_ = 1;
  std::vector<State> states_;
  std::vector<ItemId> actions_;
  std::vector<double> values_;
  std::unordered_map<State, std::size_t, StateHash> index_;
};

struct SolveOptions {
  double tolerance = 1e-6;  // bound on the value error of each evaluation
  int max_iterations = 100;
  int max_sweeps = 100000;
  bool record_history = false;
};

// Policy iteration over encountered states. Successors outside the
// encountered set are valued at their immediate reward. Ties go to the
// lowest ItemId.
Policy solve(const MdpModel& model, const SolveOptions& options = {});

// Q(s, a) for every item, using the policy's values (immediate reward for
// states the policy does not cover). Throws DataError if s is unencountered.
std::vector<double> q_values(const MdpModel& model, const Policy& policy, const State& s);

// Top `m_top` items by Q, or the fallback ranking for unencountered states.
std::vector<ItemId> recommend(const Policy& policy, const MdpModel& model, const State& s, std::size_t m_top,
                              const Ranker& fallback);

// Boltzmann draw over actions whose Q is within epsilon of the best.
ItemId explore(const Policy& policy, const MdpModel& model, const State& s, double epsilon, double temperature,
               Rng& rng);

}  // namespace mdprec
