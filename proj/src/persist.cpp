#include "mdprec/persist.hpp"

#include <algorithm>
#include <fstream>

namespace mdprec {

namespace {

void expect_format(const nlohmann::json& j, const char* format) {
  if (!j.is_object() || j.value("format", "") != format)
    throw DataError(std::string("not a ") + format + " document");
  if (j.value("version", 0) != kArtifactVersion)
    throw DataError(std::string(format) + ": unsupported version " + std::to_string(j.value("version", 0)));
}

nlohmann::json row_to_json(const SparseRow& row) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < row.size(); ++i) arr.push_back(nlohmann::json::array({row.items[i], row.values[i]}));
  return arr;
}

SparseRow row_from_json(const nlohmann::json& arr, std::size_t item_count) {
  SparseRow row;
  for (const auto& e : arr) {
    const auto item = e.at(0).get<std::uint64_t>();
    if (item >= item_count) throw DataError("row mentions unknown item " + std::to_string(item));
    if (!row.items.empty() && item <= row.items.back()) throw DataError("row items must be strictly ascending");
    row.items.push_back(static_cast<ItemId>(item));
    row.values.push_back(e.at(1).get<double>());
  }
  return row;
}

std::vector<std::string> item_keys(const ItemCatalog& catalog) {
  return {catalog.keys().begin(), catalog.keys().end()};
}

ItemCatalog catalog_from_keys(const nlohmann::json& arr) {
  ItemCatalog catalog;
  for (const auto& key : arr) {
    const auto k = key.get<std::string>();
    if (catalog.intern(k) != catalog.size() - 1) throw DataError("duplicate item key '" + k + "'");
  }
  return catalog;
}

}  // namespace

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

nlohmann::json state_to_json(const State& s) {
  nlohmann::json arr = nlohmann::json::array();
  for (ItemId x : s.slots()) arr.push_back(x == kMissing ? nlohmann::json(nullptr) : nlohmann::json(x));
  return arr;
}

State state_from_json(const nlohmann::json& j, int k, std::size_t item_count) {
  if (!j.is_array() || static_cast<int>(j.size()) != k) throw DataError("state must be an array of " + std::to_string(k) + " slots");
  State s(k);
  for (int m = 0; m < k; ++m) {
    const auto& slot = j[static_cast<std::size_t>(m)];
    if (slot.is_null()) {
      if (m > 0 && s[m - 1] != kMissing) throw DataError("state: empty slots must form a prefix");
      continue;
    }
    const auto x = slot.get<std::uint64_t>();
    if (x >= item_count) throw DataError("state mentions unknown item " + std::to_string(x));
    s.set(m, static_cast<ItemId>(x));
  }
  return s;
}

nlohmann::json corpus_to_json(const Corpus& corpus) {
  auto side = [&](const SessionSet& set) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& seq : set.sequences) arr.push_back({{"user", seq.user}, {"items", seq.items}});
    return arr;
  };
  nlohmann::json j;
  j["format"] = "mdprec-sessions";
  j["version"] = kArtifactVersion;
  j["events"] = corpus.event_count;
  j["items"] = item_keys(corpus.catalog);
  j["train"] = side(corpus.train);
  j["test"] = side(corpus.test);
  return j;
}

Corpus corpus_from_json(const nlohmann::json& j) {
  expect_format(j, "mdprec-sessions");
  try {
    Corpus corpus;
    corpus.catalog = catalog_from_keys(j.at("items"));
    corpus.event_count = j.value("events", std::size_t{0});
    auto side = [&](const nlohmann::json& arr, SessionSet& set) {
      for (const auto& e : arr) {
        Sequence seq{e.at("user").get<std::string>(), e.at("items").get<std::vector<ItemId>>()};
        for (ItemId x : seq.items)
          if (x >= corpus.catalog.size()) throw DataError("session mentions unknown item " + std::to_string(x));
        set.sequences.push_back(std::move(seq));
      }
    };
    side(j.at("train"), corpus.train);
    side(j.at("test"), corpus.test);
    return corpus;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("sessions: ") + e.what());
  }
}

nlohmann::json model_to_json(const MixtureModel& model, const ItemCatalog& catalog) {
  const ModelConfig& cfg = model.config();
  nlohmann::json j;
  j["format"] = "mdprec-model";
  j["version"] = kArtifactVersion;
  j["variant"] = cfg.variant_name();
  j["k"] = cfg.k;
  j["orders"] = cfg.component_orders();
  j["skipping"] = cfg.skipping;
  j["clustering"] = cfg.clustering;
  j["unordered"] = cfg.unordered;
  j["weights"] = std::vector<double>(model.weights().begin(), model.weights().end());
  j["items"] = item_keys(catalog);
  j["fallback"] = row_to_json(model.fallback());

  nlohmann::json components = nlohmann::json::array();
  for (const auto& comp : model.components()) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < comp.size(); ++r)
      rows.push_back({{"state", state_to_json(comp.keys()[r])}, {"next", row_to_json(comp.rows()[r])}});
    components.push_back({{"order", comp.order()}, {"rows", rows}});
  }
  j["components"] = components;

  std::vector<std::pair<State, double>> term(model.terminations().begin(), model.terminations().end());
  std::sort(term.begin(), term.end());
  nlohmann::json t = nlohmann::json::array();
  for (const auto& [s, p] : term) t.push_back({{"state", state_to_json(s)}, {"p", p}});
  j["termination"] = t;
  return j;
}

LoadedModel model_from_json(const nlohmann::json& j) {
  expect_format(j, "mdprec-model");
  try {
    ItemCatalog catalog = catalog_from_keys(j.at("items"));
    const std::size_t n_items = catalog.size();
    ModelConfig cfg;
    cfg.k = j.at("k").get<int>();
    cfg.orders = j.at("orders").get<std::vector<int>>();
    cfg.skipping = j.at("skipping").get<bool>();
    cfg.clustering = j.at("clustering").get<bool>();
    cfg.unordered = j.at("unordered").get<bool>();
    const auto orders = cfg.component_orders();

    std::vector<TransitionModel> components;
    for (const auto& c : j.at("components")) {
      const int order = c.at("order").get<int>();
      std::vector<std::pair<State, SparseRow>> rows;
      for (const auto& r : c.at("rows"))
        rows.emplace_back(state_from_json(r.at("state"), order, n_items), row_from_json(r.at("next"), n_items));
      components.emplace_back(order, cfg.unordered, std::move(rows));
    }
    if (components.size() != orders.size()) throw DataError("model: component count does not match orders");
    for (std::size_t i = 0; i < orders.size(); ++i)
      if (components[i].order() != orders[i]) throw DataError("model: components out of order");

    std::unordered_map<State, double, StateHash> termination;
    for (const auto& t : j.value("termination", nlohmann::json::array()))
      termination.emplace(state_from_json(t.at("state"), orders.back(), n_items), t.at("p").get<double>());

    MixtureModel model(cfg, n_items, std::move(components), j.at("weights").get<std::vector<double>>(),
                       row_from_json(j.at("fallback"), n_items), std::move(termination));
    return LoadedModel{std::move(catalog), std::move(model)};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("model: ") + e.what());
  }
}

nlohmann::json policy_to_json(const Policy& policy, const MdpModel& model, const ItemCatalog& catalog,
                              std::size_t top_m, double tolerance) {
  const MdpParams& p = model.params();
  nlohmann::json j;
  j["format"] = "mdprec-policy";
  j["version"] = kArtifactVersion;
  j["k"] = policy.order();
  j["alpha"] = p.alpha;
  j["gamma"] = p.gamma;
  j["prior_strength"] = p.prior_strength;
  j["end_state"] = p.end_state;
  j["tolerance"] = tolerance;
  j["iterations"] = policy.iterations;
  j["converged"] = policy.converged;
  j["residuals"] = policy.residuals;
  j["items"] = item_keys(catalog);
  j["rewards"] = std::vector<double>(model.item_rewards().begin(), model.item_rewards().end());

  nlohmann::json states = nlohmann::json::array();
  for (std::size_t i = 0; i < policy.states().size(); ++i) {
    const State& s = policy.states()[i];
    const auto q = q_values(model, policy, s);
    const auto ranked = rank_by_score(q);
    nlohmann::json top = nlohmann::json::array();
    for (std::size_t r = 0; r < std::min(top_m, ranked.size()); ++r)
      top.push_back(nlohmann::json::array({ranked[r], q[ranked[r]]}));
    states.push_back({{"state", state_to_json(s)},
                      {"action", policy.actions()[i]},
                      {"value", policy.values()[i]},
                      {"top", top}});
  }
  j["states"] = states;
  return j;
}

LoadedPolicy policy_from_json(const nlohmann::json& j, const ItemCatalog& catalog) {
  expect_format(j, "mdprec-policy");
  try {
    const auto keys = j.at("items").get<std::vector<std::string>>();
    if (keys != item_keys(catalog)) throw DataError("policy: item table does not match the model");
    const std::size_t n_items = catalog.size();
    LoadedPolicy out{};
    out.params.alpha = j.at("alpha").get<double>();
    out.params.gamma = j.at("gamma").get<double>();
    out.params.prior_strength = j.at("prior_strength").get<double>();
    out.params.end_state = j.at("end_state").get<bool>();
    out.rewards = j.at("rewards").get<std::vector<double>>();
    if (out.rewards.size() != n_items) throw DataError("policy: reward table size mismatch");
    const int k = j.at("k").get<int>();

    std::vector<State> states;
    std::vector<ItemId> actions;
    std::vector<double> values;
    for (const auto& e : j.at("states")) {
      states.push_back(state_from_json(e.at("state"), k, n_items));
      const auto a = e.at("action").get<std::uint64_t>();
      if (a >= n_items) throw DataError("policy: unknown action");
      actions.push_back(static_cast<ItemId>(a));
      values.push_back(e.at("value").get<double>());
    }
    out.policy = Policy(k, std::move(states), std::move(actions), std::move(values));
    out.policy.iterations = j.value("iterations", 0);
    out.policy.converged = j.value("converged", false);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("policy: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("policy: ") + e.what());
  }
}

}  // namespace mdprec
