#pragma once

// JSON artifacts: session sets, models and policies. Doubles are written in
// shortest round-trip form, so save -> load reproduces every probability
// bit for bit.

#include <cstddef>
#include <filesystem>

#include "json.hpp"
#include "mdprec/domain.hpp"
#include "mdprec/ingestion.hpp"
#include "mdprec/mc_model.hpp"
#include "mdprec/mdp.hpp"

namespace mdprec {

inline constexpr int kArtifactVersion = 1;

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

nlohmann::json state_to_json(const State& s);
State state_from_json(const nlohmann::json& j, int k, std::size_t item_count);

nlohmann::json corpus_to_json(const Corpus& corpus);
Corpus corpus_from_json(const nlohmann::json& j);

struct LoadedModel {
  ItemCatalog catalog;
  MixtureModel model;
};

nlohmann::json model_to_json(const MixtureModel& model, const ItemCatalog& catalog);
LoadedModel model_from_json(const nlohmann::json& j);

struct LoadedPolicy {
  MdpParams params;
  std::vector<double> rewards;
  Policy policy;
};

// Per state: slots, chosen action, value and the `top_m` best (item, Q) pairs.
nlohmann::json policy_to_json(const Policy& policy, const MdpModel& model, const ItemCatalog& catalog,
                              std::size_t top_m, double tolerance);
LoadedPolicy policy_from_json(const nlohmann::json& j, const ItemCatalog& catalog);

}  // namespace mdprec
