#include "mdprec/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mdprec/kernels.hpp"

namespace mdprec {

void MdpParams::validate() const {
  if (!(alpha >= 1.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be a finite value >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
  if (!(prior_strength >= 0.0) || !std::isfinite(prior_strength))
    throw std::invalid_argument("prior strength must be finite and >= 0");
}

namespace {

struct Boost {
  double recommended;  // new probability of the recommended item
  double beta;         // factor applied to every other item
};

Boost boost_factors(double q, double alpha) {
  const double rec = std::min(alpha * q, 1.0);
  const double beta = q < 1.0 ? (1.0 - rec) / (1.0 - q) : 0.0;
  return {rec, beta};
}

}  // namespace

SparseRow boost_row(const SparseRow& base, ItemId recommended, double alpha) {
  const auto j = base.find(recommended);
  if (!j) return base;
  const Boost b = boost_factors(base.values[*j], alpha);
  SparseRow out = base;
  kernels::scale(out.values, b.beta);
  out.values[*j] = b.recommended;
  return out;
}

MdpModel::MdpModel(int k, std::vector<double> rewards, MdpParams params)
    : k_(k), rewards_(std::move(rewards)), params_(params) {
  check_order(k);
  params_.validate();
  for (double r : rewards_)
    if (!std::isfinite(r)) throw std::invalid_argument("MdpModel: rewards must be finite");
}

MdpModel MdpModel::from_mixture(const MixtureModel& model, std::span<const double> rewards, const MdpParams& params) {
  if (model.config().unordered) throw std::invalid_argument("the MDP needs an ordered model (UMC states have no order)");
  if (rewards.size() != model.item_count()) throw std::invalid_argument("one reward per catalog item required");
  const TransitionModel& top = model.top();
  MdpModel mdp(top.order(), std::vector<double>(rewards.begin(), rewards.end()), params);
  for (const State& key : top.keys()) {
    const auto history = history_of(key);
    mdp.set_base_row(key, model.predict_sparse(history));
    if (params.end_state) mdp.set_termination(key, model.termination(key));
  }
  return mdp;
}

void MdpModel::set_base_row(const State& s, SparseRow row) {
  if (s.order() != k_) throw std::invalid_argument("set_base_row: state order mismatch");
  if (row.items.size() != row.values.size()) throw std::invalid_argument("set_base_row: malformed row");
  double total = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (row.items[i] >= item_count()) throw std::invalid_argument("set_base_row: unknown item");
    if (i > 0 && row.items[i] <= row.items[i - 1]) throw std::invalid_argument("set_base_row: items must ascend");
    if (!(row.values[i] >= 0.0 && row.values[i] <= 1.0)) throw std::invalid_argument("set_base_row: bad probability");
    total += row.values[i];
  }
  if (std::fabs(total - 1.0) > 1e-9) throw std::invalid_argument("set_base_row: row must sum to 1");
  base_[s] = std::move(row);
}

void MdpModel::set_termination(const State& s, double probability) {
  if (!(probability >= 0.0 && probability <= 1.0)) throw std::invalid_argument("termination must be in [0, 1]");
  termination_[s] = probability;
}

const SparseRow* MdpModel::base_row(const State& s) const {
  auto it = base_.find(s);
  return it == base_.end() ? nullptr : &it->second;
}

bool MdpModel::encountered(const State& s) const { return base_.count(s) > 0 || online_.count(s) > 0; }

std::vector<State> MdpModel::states() const {
  std::vector<State> out;
  out.reserve(base_.size() + online_.size());
  for (const auto& [s, row] : base_) out.push_back(s);
  for (const auto& [s, counts] : online_)
    if (!base_.count(s)) out.push_back(s);
  std::sort(out.begin(), out.end());
  return out;
}

double MdpModel::reward(const State& s) const {
  const ItemId last = s.last();
  return last == kMissing ? 0.0 : rewards_.at(last);
}

double MdpModel::termination(const State& s) const {
  if (!params_.end_state) return 0.0;
  auto it = termination_.find(s);
  return it == termination_.end() ? 0.0 : it->second;
}

std::optional<SparseRow> MdpModel::initial_row(const State& s) const {
  if (const SparseRow* row = base_row(s)) return *row;
  auto it = online_.find(s);
  if (it == online_.end()) return std::nullopt;
  std::unordered_map<ItemId, double> pooled;
  double n = 0.0;
  for (const auto& [action, counts] : it->second)
    for (const auto& [x, c] : counts) {
      pooled[x] += c;
      n += c;
    }
  SparseRow row = row_from_map(pooled);
  kernels::scale(row.values, 1.0 / n);
  return row;
}

SparseRow MdpModel::online_counts(const State& s, ItemId recommended) const {
  SparseRow row;
  auto it = online_.find(s);
  if (it == online_.end()) return row;
  auto jt = it->second.find(recommended);
  if (jt == it->second.end()) return row;
  for (const auto& [x, c] : jt->second) {
    row.items.push_back(x);
    row.values.push_back(c);
  }
  return row;
}

std::vector<ItemId> MdpModel::online_actions(const State& s) const {
  std::vector<ItemId> out;
  if (auto it = online_.find(s); it != online_.end())
    for (const auto& [a, counts] : it->second) out.push_back(a);
  return out;
}

SparseRow MdpModel::transition_row(const State& s, ItemId recommended) const {
  const auto base = initial_row(s);
  if (!base) throw DataError("unencountered state");
  SparseRow init = boost_row(*base, recommended, params_.alpha);
  const SparseRow counts = online_counts(s, recommended);
  if (counts.empty()) return init;

  const double n = kernels::sum(counts.values);
  const double ps = params_.prior_strength;
  const double denom = ps + n;
  SparseRow out;
  std::size_t i = 0, j = 0;
  while (i < init.size() || j < counts.size()) {
    ItemId x;
    if (j == counts.size() || (i < init.size() && init.items[i] < counts.items[j])) x = init.items[i];
    else x = counts.items[j];
    double v = 0.0;
    if (i < init.size() && init.items[i] == x) v += ps * init.values[i++];
    if (j < counts.size() && counts.items[j] == x) v += counts.values[j++];
    out.items.push_back(x);
    out.values.push_back(v / denom);
  }
  return out;
}

void MdpModel::observe(const State& s, ItemId recommended, ItemId chosen) {
  if (s.order() != k_) throw std::invalid_argument("observe: state order mismatch");
  if (chosen >= item_count() || recommended >= item_count()) throw std::invalid_argument("observe: unknown item");
  online_[s][recommended][chosen] += 1.0;
}

Policy::Policy(int k, std::vector<State> states, std::vector<ItemId> actions, std::vector<double> values)
    : k_(k), states_(std::move(states)), actions_(std::move(actions)), values_(std::move(values)) {
  if (states_.size() != actions_.size() || states_.size() != values_.size())
    throw std::invalid_argument("Policy: states, actions and values must align");
  index_.reserve(states_.size());
  for (std::size_t i = 0; i < states_.size(); ++i) index_.emplace(states_[i], i);
}

std::optional<std::size_t> Policy::find(const State& s) const {
  auto it = index_.find(s);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<ItemId> Policy::action(const State& s) const {
  auto i = find(s);
  if (!i) return std::nullopt;
  return actions_[*i];
}

std::optional<double> Policy::value(const State& s) const {
  auto i = find(s);
  if (!i) return std::nullopt;
  return values_[*i];
}

namespace {

// Candidate action with its value; better = higher Q, then lower id.
struct Choice {
  ItemId action = kMissing;
  double q = -std::numeric_limits<double>::infinity();

  void offer(ItemId a, double value) {
    if (value > q || (value == q && a < action)) {
      action = a;
      q = value;
    }
  }
};

// Successor-indexed snapshot of the MDP used by the solver. Nodes
// [0, n_states) are encountered states; the rest are unencountered
// successors whose value is pinned to their reward.
struct CompiledMdp {
  struct OnlineAction {
    ItemId action;
    SparseRow row;
    std::vector<std::uint32_t> succ;
  };

  std::vector<State> states;
  std::size_t n_states = 0;
  std::vector<double> node_reward;
  std::vector<SparseRow> base;
  std::vector<std::vector<std::uint32_t>> succ;
  std::vector<double> cont;
  std::vector<std::vector<OnlineAction>> online;
  std::vector<std::vector<ItemId>> blocked;  // base-row items plus online actions, sorted
  std::size_t item_count = 0;
  double alpha = 1.0;
  double gamma = 0.0;
};

CompiledMdp compile(const MdpModel& model) {
  CompiledMdp c;
  c.states = model.states();
  c.n_states = c.states.size();
  c.item_count = model.item_count();
  c.alpha = model.params().alpha;
  c.gamma = model.params().gamma;

  std::unordered_map<State, std::uint32_t, StateHash> node;
  node.reserve(c.n_states * 2);
  for (std::uint32_t i = 0; i < c.n_states; ++i) {
    node.emplace(c.states[i], i);
    c.node_reward.push_back(model.reward(c.states[i]));
  }
  auto node_of = [&](const State& s) {
    auto [it, inserted] = node.emplace(s, static_cast<std::uint32_t>(c.node_reward.size()));
    if (inserted) c.node_reward.push_back(model.reward(s));
    return it->second;
  };
  auto successors = [&](const State& s, const SparseRow& row) {
    std::vector<std::uint32_t> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = node_of(advance(s, row.items[j]));
    return out;
  };

  c.base.resize(c.n_states);
  c.succ.resize(c.n_states);
  c.cont.resize(c.n_states);
  c.online.resize(c.n_states);
  c.blocked.resize(c.n_states);
  for (std::size_t i = 0; i < c.n_states; ++i) {
    const State& s = c.states[i];
    c.base[i] = *model.initial_row(s);
    c.succ[i] = successors(s, c.base[i]);
    c.cont[i] = 1.0 - model.termination(s);
    std::vector<ItemId> blocked = c.base[i].items;
    for (ItemId a : model.online_actions(s)) {
      SparseRow row = model.transition_row(s, a);
      auto succ = successors(s, row);
      c.online[i].push_back({a, std::move(row), std::move(succ)});
      blocked.push_back(a);
    }
    std::sort(blocked.begin(), blocked.end());
    blocked.erase(std::unique(blocked.begin(), blocked.end()), blocked.end());
    c.blocked[i] = std::move(blocked);
  }
  return c;
}

// Q(s_i, a) given continuation weights W[node] = R(node) + gamma * V^(node).
// Uses beta*E + (rec - beta*q)*W_a so that alpha = 1 gives exact ties.
double q_of(const CompiledMdp& c, std::size_t i, ItemId a, double expected, std::span<const double> w) {
  for (const auto& on : c.online[i])
    if (on.action == a) return c.cont[i] * kernels::gather_dot(on.row.values, on.succ, w);
  const SparseRow& row = c.base[i];
  if (auto j = row.find(a)) {
    const double q = row.values[*j];
    const Boost b = boost_factors(q, c.alpha);
    return c.cont[i] * (b.beta * expected + (b.recommended - b.beta * q) * w[c.succ[i][*j]]);
  }
  return c.cont[i] * expected;
}

// Lowest item id outside `blocked` (sorted), or kMissing if every item is blocked.
ItemId first_free(const std::vector<ItemId>& blocked, std::size_t item_count) {
  ItemId candidate = 0;
  for (ItemId b : blocked) {
    if (b > candidate) break;
    if (b == candidate) ++candidate;
  }
  return candidate < item_count ? candidate : kMissing;
}

Choice greedy(const CompiledMdp& c, std::size_t i, std::span<const double> w) {
  const double expected = kernels::gather_dot(c.base[i].values, c.succ[i], w);
  Choice best;
  for (ItemId a : c.blocked[i]) best.offer(a, q_of(c, i, a, expected, w));
  if (ItemId free = first_free(c.blocked[i], c.item_count); free != kMissing) best.offer(free, c.cont[i] * expected);
  return best;
}

}  // namespace

Policy solve(const MdpModel& model, const SolveOptions& options) {
  if (!(options.tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
  if (options.max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
  if (model.item_count() == 0) throw std::invalid_argument("MDP has no actions");

  const CompiledMdp c = compile(model);
  const std::size_t n = c.n_states;
  const std::size_t nodes = c.node_reward.size();
  const double gamma = c.gamma;

  // vhat: values for encountered states, immediate reward for the rest.
  std::vector<double> vhat(c.node_reward);
  std::fill(vhat.begin(), vhat.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
  std::vector<double> w(nodes);
  auto refresh_w = [&] { kernels::affine(c.node_reward, gamma, vhat, w); };

  std::vector<ItemId> policy(n);
  refresh_w();
  for (std::size_t i = 0; i < n; ++i) policy[i] = greedy(c, i, w).action;

  const double stop = gamma > 0.0 ? options.tolerance * (1.0 - gamma) / gamma : 0.0;
  const double switch_margin = 0.1 * options.tolerance;

  Policy result;
  std::vector<double> next(n);
  bool stable = false;
  bool evaluation_ok = true;
  int round = 0;
  while (round < options.max_iterations) {
    ++round;
    // Policy evaluation: Jacobi sweeps from the previous values.
    double residual = 0.0;
    int sweeps = 0;
    while (true) {
      refresh_w();
      for (std::size_t i = 0; i < n; ++i) {
        const double expected = kernels::gather_dot(c.base[i].values, c.succ[i], w);
        next[i] = q_of(c, i, policy[i], expected, w);
      }
      residual = kernels::max_abs_diff(next, std::span<const double>(vhat).first(n));
      std::copy(next.begin(), next.end(), vhat.begin());
      ++sweeps;
      if (residual <= stop) break;
      if (sweeps >= options.max_sweeps) {
        evaluation_ok = false;
        break;
      }
    }
    result.residuals.push_back(residual);
    result.sweeps.push_back(sweeps);
    if (options.record_history) result.value_history.emplace_back(vhat.begin(), vhat.begin() + static_cast<std::ptrdiff_t>(n));

    // Improvement: switch only on a clear gain so evaluation noise cannot cycle.
    refresh_w();
    std::size_t changed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Choice best = greedy(c, i, w);
      if (best.action == policy[i]) continue;
      const double expected = kernels::gather_dot(c.base[i].values, c.succ[i], w);
      const double current = q_of(c, i, policy[i], expected, w);
      if (best.q > current + switch_margin * std::max(1.0, std::fabs(current))) {
        policy[i] = best.action;
        ++changed;
      }
    }
    if (changed == 0) {
      stable = true;
      break;
    }
  }

  // Greedy extraction with the exact tie-break on the final values.
  std::vector<double> values(vhat.begin(), vhat.begin() + static_cast<std::ptrdiff_t>(n));
  refresh_w();
  for (std::size_t i = 0; i < n; ++i) policy[i] = greedy(c, i, w).action;

  Policy out(model.order(), c.states, std::move(policy), std::move(values));
  out.iterations = round;
  out.converged = stable && evaluation_ok;
  out.residuals = std::move(result.residuals);
  out.sweeps = std::move(result.sweeps);
  out.value_history = std::move(result.value_history);
  return out;
}

std::vector<double> q_values(const MdpModel& model, const Policy& policy, const State& s) {
  const auto base = model.initial_row(s);
  if (!base) throw DataError("unencountered state");
  const double gamma = model.params().gamma;
  const double cont = 1.0 - model.termination(s);

  auto continuation = [&](const SparseRow& row, std::vector<double>& w, std::vector<std::uint32_t>& idx) {
    w.resize(row.size());
    idx.resize(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) {
      const State next = advance(s, row.items[j]);
      const double r = model.reward(next);
      const double v = policy.value(next).value_or(r);
      std::span<double> out(&w[j], 1);
      kernels::affine(std::span<const double>(&r, 1), gamma, std::span<const double>(&v, 1), out);
      idx[j] = static_cast<std::uint32_t>(j);
    }
  };

  std::vector<double> w;
  std::vector<std::uint32_t> idx;
  continuation(*base, w, idx);
  const double expected = kernels::gather_dot(base->values, idx, w);

  std::vector<double> q(model.item_count(), cont * expected);
  for (std::size_t j = 0; j < base->size(); ++j) {
    const double p = base->values[j];
    const Boost b = boost_factors(p, model.params().alpha);
    q[base->items[j]] = cont * (b.beta * expected + (b.recommended - b.beta * p) * w[j]);
  }
  std::vector<double> wo;
  std::vector<std::uint32_t> idxo;
  for (ItemId a : model.online_actions(s)) {
    const SparseRow row = model.transition_row(s, a);
    continuation(row, wo, idxo);
    q[a] = cont * kernels::gather_dot(row.values, idxo, wo);
  }
  return q;
}

std::vector<ItemId> recommend(const Policy& policy, const MdpModel& model, const State& s, std::size_t m_top,
                              const Ranker& fallback) {
  if (m_top < 1) throw std::invalid_argument("recommend: m_top must be >= 1");
  std::vector<ItemId> ranked;
  if (model.encountered(s)) ranked = rank_by_score(q_values(model, policy, s));
  else if (fallback) ranked = fallback(history_of(s));
  if (ranked.size() > m_top) ranked.resize(m_top);
  return ranked;
}

ItemId explore(const Policy& policy, const MdpModel& model, const State& s, double epsilon, double temperature,
               Rng& rng) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("explore: epsilon must be >= 0");
  if (!(temperature > 0.0)) throw std::invalid_argument("explore: temperature must be > 0");
  const auto q = q_values(model, policy, s);
  const auto ranked = rank_by_score(q);
  const double best = q[ranked.front()];
  if (epsilon == 0.0) return ranked.front();

  std::vector<double> weights(q.size(), 0.0);
  for (std::size_t a = 0; a < q.size(); ++a)
    if (q[a] >= best - epsilon) weights[a] = std::exp((q[a] - best) / temperature);
  return static_cast<ItemId>(rng.categorical(weights));
}

}  // namespace mdprec
