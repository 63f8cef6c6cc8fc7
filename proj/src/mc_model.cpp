#include "mdprec/mc_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mdprec/kernels.hpp"

namespace mdprec {

CountTable::CountTable(int order, bool unordered) : order_(order), unordered_(unordered) { check_order(order); }

void CountTable::add(const State& context, ItemId next, double weight) {
  if (context.order() != order_) throw std::invalid_argument("CountTable::add: context order mismatch");
  if (weight < 0.0) throw std::invalid_argument("CountTable::add: negative weight");
  rows_[key_for(context)][next] += weight;
}

double CountTable::get(const State& context, ItemId next) const {
  auto it = rows_.find(key_for(context));
  if (it == rows_.end()) return 0.0;
  auto jt = it->second.find(next);
  return jt == it->second.end() ? 0.0 : jt->second;
}

std::size_t CountTable::entry_count() const {
  std::size_t n = 0;
  for (const auto& [key, row] : rows_) n += row.size();
  return n;
}

CountTable count_base(const SessionSet& train, int order, bool unordered) {
  CountTable table(order, unordered);
  for (const auto& seq : train.sequences) {
    const std::span<const ItemId> items(seq.items);
    for (std::size_t e = 0; e < items.size(); ++e)
      table.add(state_from_history(items.first(e), order), items[e], 1.0);
  }
  return table;
}

CountTable count_with_skipping(const SessionSet& train, int order, bool unordered) {
  CountTable table(order, unordered);
  for (const auto& seq : train.sequences) {
    const std::span<const ItemId> items(seq.items);
    for (std::size_t e = 0; e < items.size(); ++e) {
      const State context = state_from_history(items.first(e), order);
      for (std::size_t j = e; j < items.size(); ++j)
        table.add(context, items[j], std::ldexp(1.0, -static_cast<int>(j - e)));
    }
  }
  return table;
}

TransitionModel::TransitionModel(int order, bool unordered, std::vector<std::pair<State, SparseRow>> rows)
    : order_(order), unordered_(unordered) {
  check_order(order);
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  keys_.reserve(rows.size());
  rows_.reserve(rows.size());
  index_.reserve(rows.size());
  for (auto& [key, row] : rows) {
    if (key.order() != order) throw std::invalid_argument("TransitionModel: row key has wrong order");
    if (!index_.emplace(key, static_cast<std::uint32_t>(keys_.size())).second)
      throw std::invalid_argument("TransitionModel: duplicate row key");
    keys_.push_back(key);
    rows_.push_back(std::move(row));
  }
}

const SparseRow* TransitionModel::find(const State& key) const {
  auto it = index_.find(key);
  return it == index_.end() ? nullptr : &rows_[it->second];
}

std::size_t TransitionModel::item_bound() const {
  std::size_t bound = 0;
  for (const auto& row : rows_)
    if (!row.empty()) bound = std::max<std::size_t>(bound, row.items.back() + 1);
  return bound;
}

TransitionModel normalize(const CountTable& counts) {
  std::vector<std::pair<State, SparseRow>> rows;
  rows.reserve(counts.row_count());
  for (const auto& [key, raw] : counts.rows()) {
    SparseRow row = row_from_map(raw);
    const double total = kernels::sum(row.values);
    if (!(total > 0.0)) continue;
    kernels::scale(row.values, 1.0 / total);
    rows.emplace_back(key, std::move(row));
  }
  return TransitionModel(counts.order(), counts.unordered(), std::move(rows));
}

double similarity(const State& a, const State& b) {
  if (a.order() != b.order()) throw std::invalid_argument("similarity: states have different orders");
  double sim = 0.0;
  for (int m = 0; m < a.order(); ++m)
    if (a[m] != kMissing && a[m] == b[m]) sim += m + 2;
  return sim;
}

TransitionModel apply_clustering(const TransitionModel& model) {
  const auto keys = model.keys();
  const auto rows = model.rows();
  const int k = model.order();
  const std::size_t n_items = model.item_bound();

  // (slot, item) -> ascending row indices.
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> postings;
  auto posting_key = [](int slot, ItemId item) { return (static_cast<std::uint64_t>(item) << 3) | static_cast<std::uint64_t>(slot); };
  for (std::uint32_t r = 0; r < keys.size(); ++r)
    for (int m = 0; m < k; ++m)
      if (keys[r][m] != kMissing) postings[posting_key(m, keys[r][m])].push_back(r);

  std::vector<double> sim_of(keys.size(), 0.0);
  std::vector<std::uint32_t> touched;
  std::vector<double> simcount(n_items, 0.0);
  std::vector<char> in_support(n_items, 0);
  std::vector<ItemId> support;
  std::vector<double> gathered;

  std::vector<std::pair<State, SparseRow>> out;
  out.reserve(keys.size());
  for (std::uint32_t r = 0; r < keys.size(); ++r) {
    touched.clear();
    for (int m = 0; m < k; ++m) {
      if (keys[r][m] == kMissing) continue;
      auto it = postings.find(posting_key(m, keys[r][m]));
      for (std::uint32_t t : it->second) {
        if (sim_of[t] == 0.0) touched.push_back(t);
        sim_of[t] += m + 2;
      }
    }
    std::sort(touched.begin(), touched.end());

    support.clear();
    for (std::uint32_t t : touched) {
      const SparseRow& neighbour = rows[t];
      kernels::scatter_axpy(sim_of[t], neighbour.values, neighbour.items, simcount);
      for (ItemId x : neighbour.items)
        if (!in_support[x]) {
          in_support[x] = 1;
          support.push_back(x);
        }
      sim_of[t] = 0.0;
    }
    std::sort(support.begin(), support.end());
    gathered.resize(support.size());
    for (std::size_t i = 0; i < support.size(); ++i) gathered[i] = simcount[support[i]];
    const double total = kernels::sum(gathered);

    const SparseRow& old = rows[r];
    if (!(total > 0.0)) {
      out.emplace_back(keys[r], old);
    } else {
      // Union of the old support and the neighbourhood support.
      SparseRow blended;
      std::size_t i = 0, j = 0;
      while (i < old.size() || j < support.size()) {
        ItemId x;
        if (j == support.size() || (i < old.size() && old.items[i] < support[j])) x = old.items[i];
        else x = support[j];
        double v = 0.0;
        if (i < old.size() && old.items[i] == x) v += 0.5 * old.values[i++];
        if (j < support.size() && support[j] == x) v += 0.5 * (simcount[x] / total), ++j;
        blended.items.push_back(x);
        blended.values.push_back(v);
      }
      out.emplace_back(keys[r], std::move(blended));
    }
    for (ItemId x : support) {
      simcount[x] = 0.0;
      in_support[x] = 0;
    }
  }
  return TransitionModel(model.order(), model.unordered(), std::move(out));
}

std::vector<int> ModelConfig::component_orders() const {
  check_order(k);
  std::vector<int> result = orders;
  if (result.empty()) {
    result.resize(static_cast<std::size_t>(k));
    std::iota(result.begin(), result.end(), 1);
  }
  std::sort(result.begin(), result.end());
  result.erase(std::unique(result.begin(), result.end()), result.end());
  for (int o : result) {
    check_order(o);
    if (o > k) throw std::invalid_argument("mixture component order " + std::to_string(o) + " exceeds k");
  }
  return result;
}

int ModelConfig::top_order() const { return component_orders().back(); }

std::string ModelConfig::variant_name() const {
  std::string name = unordered ? "UMC" : "MC";
  for (int o : component_orders()) name += std::to_string(o);
  if (skipping) name += "-SK";
  if (clustering) name += "-SM";
  return name;
}

MixtureModel::MixtureModel(ModelConfig config, std::size_t item_count, std::vector<TransitionModel> components,
                           std::vector<double> weights, SparseRow fallback,
                           std::unordered_map<State, double, StateHash> termination)
    : config_(std::move(config)),
      item_count_(item_count),
      components_(std::move(components)),
      weights_(std::move(weights)),
      fallback_(std::move(fallback)),
      termination_(std::move(termination)) {
  if (components_.empty()) throw std::invalid_argument("MixtureModel: no components");
  if (weights_.size() != components_.size()) throw std::invalid_argument("MixtureModel: one weight per component");
  double total = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0)) throw std::invalid_argument("MixtureModel: negative mixture weight");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw std::invalid_argument("MixtureModel: mixture weights must sum to 1");
  for (const auto& c : components_)
    if (c.item_bound() > item_count_) throw std::invalid_argument("MixtureModel: row mentions unknown item");
}

MixtureModel MixtureModel::build(const SessionSet& train, const ModelConfig& config, std::size_t item_count) {
  if (train.sequences.empty() || train.transition_count() == 0) throw DataError("empty training set");
  for (const auto& seq : train.sequences)
    for (ItemId x : seq.items)
      if (x >= item_count) throw DataError("training sequence mentions an item outside the catalog");

  const auto orders = config.component_orders();
  std::vector<TransitionModel> components;
  for (int order : orders) {
    const CountTable counts = config.skipping ? count_with_skipping(train, order, config.unordered)
                                              : count_base(train, order, config.unordered);
    TransitionModel model = normalize(counts);
    if (config.clustering) model = apply_clustering(model);
    components.push_back(std::move(model));
  }
  std::vector<double> weights(components.size(), 1.0 / static_cast<double>(components.size()));

  // Initial-state row of the order-1 chain, counted under the same skipping rule.
  CountTable initial(1);
  const State start = State::initial(1);
  for (const auto& seq : train.sequences) {
    const std::size_t reach = config.skipping ? seq.items.size() : std::min<std::size_t>(1, seq.items.size());
    for (std::size_t j = 0; j < reach; ++j) initial.add(start, seq.items[j], std::ldexp(1.0, -static_cast<int>(j)));
  }
  SparseRow fallback;
  const TransitionModel initial_model = normalize(initial);
  if (const SparseRow* row = initial_model.find(start)) fallback = *row;

  // Session-end frequency of top-order states.
  std::unordered_map<State, double, StateHash> termination;
  {
    const int top = orders.back();
    const CountTable out = count_base(train, top, config.unordered);
    std::unordered_map<State, double, StateHash> ends;
    for (const auto& seq : train.sequences)
      ends[out.key_for(state_from_history(seq.items, top))] += 1.0;
    for (const auto& [key, n_end] : ends) {
      double n_out = 0.0;
      if (auto it = out.rows().find(key); it != out.rows().end())
        for (const auto& [x, c] : it->second) n_out += c;
      termination.emplace(key, n_end / (n_end + n_out));
    }
  }

  return MixtureModel(config, item_count, std::move(components), std::move(weights), std::move(fallback),
                      std::move(termination));
}

double MixtureModel::termination(const State& key) const {
  auto it = termination_.find(key);
  return it == termination_.end() ? 0.0 : it->second;
}

std::vector<double> MixtureModel::predict(std::span<const ItemId> history) const {
  std::vector<double> p(item_count_, 0.0);
  std::vector<std::pair<const SparseRow*, double>> live;
  double live_weight = 0.0;
  for (std::size_t c = 0; c < components_.size(); ++c) {
    if (const SparseRow* row = components_[c].find_context(history)) {
      live.emplace_back(row, weights_[c]);
      live_weight += weights_[c];
    }
  }
  if (live.empty() || !(live_weight > 0.0)) {
    kernels::scatter_axpy(1.0, fallback_.values, fallback_.items, p);
    return p;
  }
  for (const auto& [row, w] : live) kernels::scatter_axpy(w / live_weight, row->values, row->items, p);
  return p;
}

SparseRow MixtureModel::predict_sparse(std::span<const ItemId> history) const { return row_from_dense(predict(history)); }

std::vector<ItemId> rank_by_score(std::span<const double> scores) {
  std::vector<ItemId> order(scores.size());
  std::iota(order.begin(), order.end(), ItemId{0});
  std::stable_sort(order.begin(), order.end(), [&](ItemId a, ItemId b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<ItemId> MixtureModel::rank(std::span<const ItemId> history) const { return rank_by_score(predict(history)); }

}  // namespace mdprec
