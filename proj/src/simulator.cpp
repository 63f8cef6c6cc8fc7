#include "mdprec/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mdprec/rng.hpp"

namespace mdprec {

namespace {

State state_from_json(const nlohmann::json& j, const ItemCatalog& catalog, int k) {
  if (!j.is_array() || static_cast<int>(j.size()) != k) throw DataError("ground truth: state must be an array of length k");
  std::vector<ItemId> slots;
  State s(k);
  for (int m = 0; m < k; ++m) {
    const auto& slot = j[static_cast<std::size_t>(m)];
    if (slot.is_null()) {
      if (m > 0 && s[m - 1] != kMissing) throw DataError("ground truth: null slots must form a prefix");
      continue;
    }
    auto id = catalog.find(slot.get<std::string>());
    if (!id) throw DataError("ground truth: unknown item '" + slot.get<std::string>() + "'");
    s.set(m, *id);
  }
  return s;
}

// Inverse-CDF draw from a row with a pre-drawn uniform.
ItemId draw(const SparseRow& row, double u) {
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t j = 0; j < row.size(); ++j) {
    if (row.values[j] <= 0.0) continue;
    acc += row.values[j];
    last = j;
    if (u < acc) return row.items[j];
  }
  return row.items[last];
}

}  // namespace

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  try {
    GroundTruth gt;
    const int k = j.at("k").get<int>();
    check_order(k);
    for (const auto& item : j.at("items")) {
      const ItemId id = gt.catalog.intern(item.at("key").get<std::string>());
      gt.catalog.set_reward(id, item.value("reward", ItemCatalog::kDefaultReward));
    }
    gt.true_alpha = j.value("true_alpha", 1.0);
    gt.end_prob = j.value("end_prob", 0.0);
    if (!(gt.true_alpha >= 1.0)) throw DataError("ground truth: true_alpha must be >= 1");
    if (!(gt.end_prob >= 0.0 && gt.end_prob <= 1.0)) throw DataError("ground truth: end_prob must be in [0, 1]");

    std::vector<std::pair<State, SparseRow>> rows;
    for (const auto& r : j.at("rows")) {
      const State s = state_from_json(r.at("state"), gt.catalog, k);
      std::unordered_map<ItemId, double> next;
      double total = 0.0;
      for (const auto& [key, p] : r.at("next").items()) {
        auto id = gt.catalog.find(key);
        if (!id) throw DataError("ground truth: unknown item '" + key + "'");
        const double v = p.get<double>();
        if (!(v >= 0.0)) throw DataError("ground truth: negative probability");
        next[*id] += v;
        total += v;
      }
      if (std::fabs(total - 1.0) > 1e-6) throw DataError("ground truth: row does not sum to 1");
      SparseRow row = row_from_map(next);
      for (double& v : row.values) v /= total;
      rows.emplace_back(s, std::move(row));
    }
    gt.behavior = TransitionModel(k, false, std::move(rows));
    if (!gt.behavior.find(State::initial(k))) throw DataError("ground truth: missing row for the initial state");
    return gt;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("ground truth: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("ground truth: ") + e.what());
  }
}

nlohmann::json ground_truth_to_json(const GroundTruth& gt) {
  nlohmann::json j;
  j["k"] = gt.order();
  j["true_alpha"] = gt.true_alpha;
  j["end_prob"] = gt.end_prob;
  nlohmann::json items = nlohmann::json::array();
  for (ItemId i = 0; i < gt.catalog.size(); ++i) items.push_back({{"key", gt.catalog.key(i)}, {"reward", gt.catalog.reward(i)}});
  j["items"] = items;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < gt.behavior.size(); ++r) {
    nlohmann::json state = nlohmann::json::array();
    for (ItemId x : gt.behavior.keys()[r].slots()) state.push_back(x == kMissing ? nlohmann::json(nullptr) : nlohmann::json(gt.catalog.key(x)));
    nlohmann::json next = nlohmann::json::object();
    const SparseRow& row = gt.behavior.rows()[r];
    for (std::size_t i = 0; i < row.size(); ++i) next[gt.catalog.key(row.items[i])] = row.values[i];
    rows.push_back({{"state", state}, {"next", next}});
  }
  j["rows"] = rows;
  return j;
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open ground-truth file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return ground_truth_from_json(j);
}

GroundTruth random_ground_truth(const RandomTruthOptions& options, std::uint64_t seed) {
  check_order(options.k);
  if (options.items == 0 || options.branching == 0 || options.branching > options.items)
    throw std::invalid_argument("random ground truth: need 0 < branching <= items");
  Rng rng(derive_seed(seed, "ground-truth"));
  GroundTruth gt;
  gt.true_alpha = options.true_alpha;
  gt.end_prob = options.end_prob;
  for (std::size_t i = 0; i < options.items; ++i) {
    const ItemId id = gt.catalog.intern("i" + std::to_string(i));
    gt.catalog.set_reward(id, options.reward_min + (options.reward_max - options.reward_min) * rng.uniform());
  }

  // All histories of length 0..k, shortest first.
  std::vector<State> states{State::initial(options.k)};
  for (std::size_t frontier = 0; frontier < states.size(); ++frontier) {
    if (states[frontier].filled() == options.k) continue;
    for (ItemId x = 0; x < options.items; ++x) states.push_back(advance(states[frontier], x));
  }

  std::vector<ItemId> pool(options.items);
  std::vector<std::pair<State, SparseRow>> rows;
  for (const State& s : states) {
    for (ItemId x = 0; x < options.items; ++x) pool[x] = x;
    std::unordered_map<ItemId, double> weights;
    double total = 0.0;
    for (std::size_t b = 0; b < options.branching; ++b) {
      const std::size_t pick = b + rng.below(options.items - b);
      std::swap(pool[b], pool[pick]);
      const double w = -std::log(1.0 - rng.uniform());
      weights[pool[b]] = w;
      total += w;
    }
    SparseRow row = row_from_map(weights);
    for (double& v : row.values) v /= total;
    rows.emplace_back(s, std::move(row));
  }
  gt.behavior = TransitionModel(options.k, false, std::move(rows));
  return gt;
}

SessionSet generate_corpus(const GroundTruth& gt, std::size_t n_users, std::size_t max_len, std::uint64_t seed) {
  if (n_users < 1) throw std::invalid_argument("generate_corpus: need at least one user");
  if (max_len < 1) throw std::invalid_argument("generate_corpus: max_len must be >= 1");
  SessionSet out{SplitTag::Train, {}};
  out.sequences.reserve(n_users);
  for (std::size_t u = 0; u < n_users; ++u) {
    Rng rng(derive_seed(seed, u));
    Sequence seq{"u" + std::to_string(u), {}};
    State s = State::initial(gt.order());
    while (seq.items.size() < max_len) {
      const SparseRow* row = gt.behavior.find(s);
      if (!row) break;
      const ItemId x = draw(*row, rng.uniform());
      const bool ends = rng.uniform() < gt.end_prob;
      seq.items.push_back(x);
      if (ends) break;
      s = advance(s, x);
    }
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

Episode run_episode(const GroundTruth& gt, const Recommender& recommender, std::size_t steps, std::uint64_t seed,
                    double gamma) {
  if (steps < 1) throw std::invalid_argument("run_episode: steps must be >= 1");
  Rng rng(seed);
  Episode ep;
  State s = State::initial(gt.order());
  double discount = 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const SparseRow* row = gt.behavior.find(s);
    if (!row) break;
    const double u_choice = rng.uniform();
    const double u_end = rng.uniform();
    const ItemId shown = recommender(s);
    const ItemId x = draw(boost_row(*row, shown, gt.true_alpha), u_choice);
    if (x == shown) ++ep.accepted;
    const double r = gt.catalog.reward(x);
    ep.total_reward += r;
    ep.discounted_reward += discount * r;
    discount *= gamma;
    ep.items.push_back(x);
    if (u_end < gt.end_prob) break;
    s = advance(s, x);
  }
  return ep;
}

std::vector<PolicyStats> compare_policies(const GroundTruth& gt,
                                          const std::vector<std::pair<std::string, Recommender>>& policies,
                                          std::size_t episodes, std::size_t steps, std::uint64_t seed, double gamma) {
  if (episodes < 1) throw std::invalid_argument("compare_policies: episodes must be >= 1");
  std::vector<PolicyStats> out;
  for (const auto& [name, recommender] : policies) {
    PolicyStats st;
    st.name = name;
    st.episodes = episodes;
    double sum = 0.0, sum_sq = 0.0, total = 0.0;
    std::size_t accepted = 0, shown = 0;
    for (std::size_t e = 0; e < episodes; ++e) {
      const Episode ep = run_episode(gt, recommender, steps, derive_seed(seed, e), gamma);
      sum += ep.discounted_reward;
      sum_sq += ep.discounted_reward * ep.discounted_reward;
      total += ep.total_reward;
      accepted += ep.accepted;
      shown += ep.items.size();
    }
    const double n = static_cast<double>(episodes);
    st.mean_discounted = sum / n;
    st.mean_total = total / n;
    st.acceptance_rate = shown ? static_cast<double>(accepted) / static_cast<double>(shown) : 0.0;
    if (episodes > 1) {
      const double var = std::max(0.0, (sum_sq - sum * sum / n) / (n - 1.0));
      st.stderr_discounted = std::sqrt(var / n);
    }
    out.push_back(st);
  }
  return out;
}

std::string stats_table(const std::vector<PolicyStats>& stats) {
  std::ostringstream out;
  char line[200];
  std::snprintf(line, sizeof line, "%-10s %14s %10s %12s %11s %9s\n", "policy", "mean_disc", "stderr", "mean_total",
                "acceptance", "episodes");
  out << line;
  for (const auto& s : stats) {
    std::snprintf(line, sizeof line, "%-10s %14.6f %10.6f %12.6f %11.6f %9zu\n", s.name.c_str(), s.mean_discounted,
                  s.stderr_discounted, s.mean_total, s.acceptance_rate, s.episodes);
    out << line;
  }
  return out.str();
}

nlohmann::json stats_to_json(const std::vector<PolicyStats>& stats) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : stats)
    arr.push_back({{"policy", s.name},
                   {"mean_discounted", s.mean_discounted},
                   {"stderr_discounted", s.stderr_discounted},
                   {"mean_total", s.mean_total},
                   {"acceptance_rate", s.acceptance_rate},
                   {"episodes", s.episodes}});
  return arr;
}

MdpModel ground_truth_mdp(const GroundTruth& gt, const MdpParams& params) {
  MdpModel m(gt.order(), std::vector<double>(gt.catalog.rewards().begin(), gt.catalog.rewards().end()), params);
  for (std::size_t r = 0; r < gt.behavior.size(); ++r) {
    m.set_base_row(gt.behavior.keys()[r], gt.behavior.rows()[r]);
    // The first selection always happens; later ones continue with 1 - end_prob.
    if (params.end_state && !gt.behavior.keys()[r].is_initial()) m.set_termination(gt.behavior.keys()[r], gt.end_prob);
  }
  return m;
}

Recommender policy_recommender(const Policy& policy, const MdpModel& model, Ranker fallback) {
  return [&policy, &model, fallback = std::move(fallback)](const State& s) {
    if (auto a = policy.action(s)) return *a;
    const auto ranked = recommend(policy, model, s, 1, fallback);
    return ranked.empty() ? ItemId{0} : ranked.front();
  };
}

Recommender ranker_recommender(Ranker ranker) {
  return [ranker = std::move(ranker)](const State& s) {
    const auto ranked = ranker(history_of(s));
    return ranked.empty() ? ItemId{0} : ranked.front();
  };
}

}  // namespace mdprec
