#pragma once

// Synthetic users with a known behaviour model. A simulated user picks the
// next item from the ground-truth row after the alpha/beta adjustment for
// the item being recommended, which is exactly the assumption the MDP makes.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mdprec/domain.hpp"
#include "mdprec/ingestion.hpp"
#include "mdprec/mc_model.hpp"
#include "mdprec/mdp.hpp"

namespace mdprec {

struct GroundTruth {
  ItemCatalog catalog;
  TransitionModel behavior;  // ordered, order k
  double true_alpha = 1.0;
  double end_prob = 0.0;

  int order() const { return behavior.order(); }
};

GroundTruth ground_truth_from_json(const nlohmann::json& j);
nlohmann::json ground_truth_to_json(const GroundTruth& gt);
GroundTruth load_ground_truth(const std::filesystem::path& path);

struct RandomTruthOptions {
  std::size_t items = 20;
  int k = 1;
  std::size_t branching = 4;  // successors per state
  double true_alpha = 2.0;
  double end_prob = 0.1;
  double reward_min = 1.0;
  double reward_max = 10.0;
};

// Every state of order k gets a row over `branching` distinct random items
// with flat-Dirichlet weights.
GroundTruth random_ground_truth(const RandomTruthOptions& options, std::uint64_t seed);

// Sequences sampled without recommendations. Each stops after max_len items
// or, after any item, with probability end_prob.
SessionSet generate_corpus(const GroundTruth& gt, std::size_t n_users, std::size_t max_len, std::uint64_t seed);

using Recommender = std::function<ItemId(const State&)>;

struct Episode {
  std::vector<ItemId> items;
  double total_reward = 0.0;
  double discounted_reward = 0.0;
  std::size_t accepted = 0;
};

// Each step draws exactly two uniforms (choice, session end) so runs of
// different recommenders on one seed share their random stream.
Episode run_episode(const GroundTruth& gt, const Recommender& recommender, std::size_t steps, std::uint64_t seed,
                    double gamma = 0.95);

struct PolicyStats {
  std::string name;
  double mean_discounted = 0.0;
  double stderr_discounted = 0.0;
  double mean_total = 0.0;
  double acceptance_rate = 0.0;
  std::size_t episodes = 0;
};

std::vector<PolicyStats> compare_policies(const GroundTruth& gt,
                                          const std::vector<std::pair<std::string, Recommender>>& policies,
                                          std::size_t episodes, std::size_t steps, std::uint64_t seed,
                                          double gamma = 0.95);

std::string stats_table(const std::vector<PolicyStats>& stats);
nlohmann::json stats_to_json(const std::vector<PolicyStats>& stats);

// The MDP the ground truth defines: behaviour rows as base rows.
MdpModel ground_truth_mdp(const GroundTruth& gt, const MdpParams& params);

// Top-1 recommendation of a solved policy, falling back to `fallback`.
Recommender policy_recommender(const Policy& policy, const MdpModel& model, Ranker fallback);
Recommender ranker_recommender(Ranker ranker);

}  // namespace mdprec
