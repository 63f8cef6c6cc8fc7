// Acceptance harness: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <sstream>
#include <string>
#include <vector>

#include "mdprec/cli.hpp"
#include "mdprec/eval.hpp"
#include "mdprec/mc_model.hpp"
#include "mdprec/mdp.hpp"
#include "mdprec/persist.hpp"
#include "mdprec/simulator.hpp"
#include "oracle/dense_mc.hpp"
#include "oracle/random_mdp.hpp"
#include "oracle/value_iteration.hpp"
#include "test_util.hpp"

using namespace mdprec;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

State st(std::initializer_list<ItemId> h, int k) { return state_from_history(std::vector<ItemId>(h), k); }

Ranker ranker_of(const MixtureModel& m) {
  return [&m](std::span<const ItemId> h) { return m.rank(h); };
}

// All histories of length 0..k over n items.
std::vector<std::vector<int>> all_histories(int n, int k) {
  std::vector<std::vector<int>> out{{}};
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (static_cast<int>(out[i].size()) == k) continue;
    for (int x = 0; x < n; ++x) {
      auto h = out[i];
      h.push_back(x);
      out.push_back(std::move(h));
    }
  }
  return out;
}

// Exact discounted value of a fixed policy on an explicit MDP, from the
// initial state. Sessions stop at states without a row.
double exact_policy_value(const MdpModel& m, const Recommender& pi) {
  const auto states = m.states();
  std::unordered_map<State, double, StateHash> v;
  for (const State& s : states) v[s] = 0.0;
  const double gamma = m.params().gamma;
  for (int sweep = 0; sweep < 100000; ++sweep) {
    double diff = 0.0;
    std::unordered_map<State, double, StateHash> next;
    for (const State& s : states) {
      const SparseRow row = m.transition_row(s, pi(s));
      double q = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) {
        const State succ = advance(s, row.items[j]);
        auto it = v.find(succ);
        q += row.values[j] * (m.reward(succ) + gamma * (it == v.end() ? 0.0 : it->second));
      }
      q *= 1.0 - m.termination(s);
      diff = std::max(diff, std::fabs(q - v[s]));
      next[s] = q;
    }
    v.swap(next);
    if (diff < 1e-13) break;
  }
  return v[State::initial(m.order())];
}

// ---------------------------------------------------------------------------

Outcome skipping_counts() {
  const auto train = testutil::sessions({{0, 1, 2, 3, 4}});
  const CountTable c = count_with_skipping(train, 3);
  const State ctx = st({0, 1, 2}, 3);
  const double to_x5 = c.get(ctx, 4), to_x4 = c.get(ctx, 3);
  return {to_x5 == 0.5 && to_x4 == 1.0, fmt("<x1,x2,x3>->x5 = %g, ->x4 = %g", to_x5, to_x4)};
}

Outcome similarity_values() {
  const ItemId w = 0, x = 1, y = 2, z = 3;
  const double a = similarity(st({x, y, z}, 3), st({w, y, z}, 3));
  const double b = similarity(st({x, y, z}, 3), st({x, y, z}, 3));
  return {a == 7.0 && b == 9.0, fmt("sim(<x,y,z>,<w,y,z>) = %g, sim(s,s) = %g", a, b)};
}

Outcome dense_oracle() {
  Rng rng(31);
  double worst = 0.0;
  std::size_t rows = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n_items = 1 + static_cast<int>(rng.below(5));
    const auto seqs = testutil::random_corpus(rng, n_items, 6, 6, 2);
    ModelConfig cfg;
    cfg.k = 1 + static_cast<int>(rng.below(3));
    if (rng.below(4) == 0) cfg.orders = {cfg.k};
    cfg.skipping = rng.below(2);
    cfg.clustering = rng.below(2);
    cfg.unordered = rng.below(2);
    const MixtureModel m = MixtureModel::build(testutil::sessions(seqs), cfg, static_cast<std::size_t>(n_items));
    const auto dense =
        oracle::dense_mixture(seqs, n_items, cfg.component_orders(), cfg.skipping, cfg.clustering, cfg.unordered);
    for (const auto& h : all_histories(n_items, 4)) {
      const std::vector<ItemId> hid(h.begin(), h.end());
      const auto got = m.predict(hid);
      const auto want = dense.predict(h);
      for (int x = 0; x < n_items; ++x)
        worst = std::max(worst, std::fabs(got[static_cast<std::size_t>(x)] - want[static_cast<std::size_t>(x)]));
      ++rows;
    }
  }
  return {worst <= 1e-12, fmt("%g prediction rows, max |diff| = %.3g", static_cast<double>(rows), worst)};
}

Outcome stochasticity() {
  Rng rng(5);
  std::size_t rows = 0, bad = 0, capped = 0;
  auto check = [&](const SparseRow& r) {
    ++rows;
    if (!testutil::stochastic(r)) ++bad;
  };
  auto check_dense = [&](const std::vector<double>& p) {
    ++rows;
    if (!testutil::stochastic(p)) ++bad;
  };
  for (int trial = 0; rows < 20000 || trial < 60; ++trial) {
    const int n_items = 2 + static_cast<int>(rng.below(11));
    const auto seqs = testutil::random_corpus(rng, n_items, 30, 12, 2);
    ModelConfig cfg;
    cfg.k = 1 + static_cast<int>(rng.below(3));
    cfg.skipping = rng.below(2);
    cfg.clustering = rng.below(2);
    cfg.unordered = rng.below(3) == 0;
    const MixtureModel m = MixtureModel::build(testutil::sessions(seqs), cfg, static_cast<std::size_t>(n_items));
    for (const auto& comp : m.components())
      for (const auto& r : comp.rows()) check(r);
    for (int q = 0; q < 30; ++q) {
      std::vector<ItemId> h(rng.below(6));
      for (auto& x : h) x = static_cast<ItemId>(rng.below(static_cast<std::uint64_t>(n_items)));
      check_dense(m.predict(h));
    }
    if (cfg.unordered) continue;

    MdpParams p;
    p.alpha = 1.0 + 4.0 * rng.uniform();
    p.end_state = rng.below(2);
    std::vector<double> rewards(static_cast<std::size_t>(n_items));
    for (double& r : rewards) r = 10.0 * rng.uniform();
    MdpModel mdp = MdpModel::from_mixture(m, rewards, p);
    const auto states = mdp.states();
    for (int o = 0; o < 50; ++o) {
      const State& s = states[rng.below(states.size())];
      mdp.observe(s, static_cast<ItemId>(rng.below(static_cast<std::uint64_t>(n_items))),
                  static_cast<ItemId>(rng.below(static_cast<std::uint64_t>(n_items))));
    }
    for (const State& s : mdp.states()) {
      const SparseRow* base = mdp.base_row(s);
      for (ItemId a = 0; a < static_cast<ItemId>(n_items); ++a) {
        if (base && p.alpha * base->at(a) > 1.0) ++capped;
        check(mdp.transition_row(s, a));
        if (base) check(boost_row(*base, a, p.alpha));
      }
    }
  }
  return {bad == 0 && rows >= 10000 && capped > 0,
          fmt("%g rows, %g off, %g in the capped branch", static_cast<double>(rows), static_cast<double>(bad),
              static_cast<double>(capped))};
}

Outcome solver_oracle() {
  Rng rng(1234);
  double worst = 0.0;
  std::size_t mismatched = 0, states = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto tiny = oracle::random_tiny_mdp(rng, 4, 2);
    const Policy pol = solve(tiny.model, {1e-10, 200});
    const auto ref = oracle::value_iteration(tiny.explicit_form, 1e-10);
    for (const auto& [key, v] : ref.value) {
      const State s = oracle::from_key(key);
      worst = std::max(worst, std::fabs(*pol.value(s) - v));
      if (*pol.action(s) != static_cast<ItemId>(ref.action.at(key))) ++mismatched;
      ++states;
    }
  }
  return {worst <= 1e-6 && mismatched == 0,
          fmt("%g states, max |V - V*| = %.3g, %g action mismatches", static_cast<double>(states), worst,
              static_cast<double>(mismatched))};
}

Outcome convergence_rounds() {
  RandomTruthOptions o;
  o.items = 50;
  o.k = 3;
  o.branching = 5;
  o.end_prob = 0.1;
  const GroundTruth gt = random_ground_truth(o, 606);
  const SessionSet train = generate_corpus(gt, 10000, 20, 607);
  ModelConfig cfg;
  cfg.k = 3;
  const MixtureModel m = MixtureModel::build(train, cfg, gt.catalog.size());
  MdpParams p;
  p.alpha = 1.5;
  p.gamma = 0.95;
  const MdpModel mdp =
      MdpModel::from_mixture(m, std::vector<double>(gt.catalog.rewards().begin(), gt.catalog.rewards().end()), p);
  const Policy pol = solve(mdp);
  return {pol.converged && pol.iterations <= 10,
          fmt("%g states, %g improvement rounds, converged=%g", static_cast<double>(pol.states().size()),
              static_cast<double>(pol.iterations), pol.converged ? 1.0 : 0.0)};
}

Outcome metric_fidelity() {
  // The observed item always sits at position 5 of the list.
  std::vector<TestCase> cases(200);
  for (auto& c : cases) c.observed = 4;
  const Ranker fifth = [](std::span<const ItemId>) { return std::vector<ItemId>{0, 1, 2, 3, 4, 5, 6}; };
  const double ed = exponential_decay_score(cases, fifth, 5.0);

  Rng rng(88);
  std::size_t violations = 0;
  for (int set = 0; set < 100; ++set) {
    std::vector<std::size_t> pos(1 + rng.below(300));
    for (auto& x : pos) x = rng.below(4) == 0 ? 0 : 1 + rng.below(30);
    double prev = -1.0;
    for (std::size_t m = 1; m <= 35; ++m) {
      const double rc = recommendation_score(pos, m);
      if (rc < prev) ++violations;
      prev = rc;
    }
  }
  return {ed == 50.0 && violations == 0, fmt("ED(rank 5, hl 5) = %.17g, RC monotonicity violations = %g", ed,
                                             static_cast<double>(violations))};
}

Outcome ordering_on_order2_truth() {
  RandomTruthOptions o;
  o.items = 20;
  o.k = 2;
  o.branching = 4;
  o.end_prob = 0.1;
  const GroundTruth gt = random_ground_truth(o, 808);
  const SessionSet train = generate_corpus(gt, 3000, 20, 809);
  SessionSet test = generate_corpus(gt, 1000, 20, 810);
  test.tag = SplitTag::Test;
  const std::size_t n = gt.catalog.size();

  ModelConfig mc12, umc12, mc1;
  mc12.k = 2;
  umc12.k = 2;
  umc12.unordered = true;
  mc1.k = 1;
  const MixtureModel a = MixtureModel::build(train, mc12, n);
  const MixtureModel b = MixtureModel::build(train, umc12, n);
  const MixtureModel c = MixtureModel::build(train, mc1, n);

  // Per-sequence ED sums so the bootstrap resamples whole sessions.
  const std::size_t seqs = test.sequences.size();
  std::vector<double> ed_a(seqs), ed_b(seqs), ed_c(seqs), n_cases(seqs);
  for (std::size_t i = 0; i < seqs; ++i) {
    const SessionSet one{SplitTag::Test, {test.sequences[i]}};
    const auto cases = expand_cases(one, 2);
    n_cases[i] = static_cast<double>(cases.size());
    auto total = [&](const MixtureModel& m) {
      double sum = 0.0;
      for (std::size_t pos : observed_positions(cases, ranker_of(m))) sum += view_probability(pos, 5.0);
      return sum;
    };
    ed_a[i] = total(a);
    ed_b[i] = total(b);
    ed_c[i] = total(c);
  }
  auto sum = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); };
  const double cases = sum(n_cases);
  const double score_a = 100.0 * sum(ed_a) / cases, score_b = 100.0 * sum(ed_b) / cases,
               score_c = 100.0 * sum(ed_c) / cases;

  Rng rng(811);
  std::vector<double> diff_b, diff_c;
  for (int rep = 0; rep < 2000; ++rep) {
    double sa = 0, sb = 0, sc = 0, nc = 0;
    for (std::size_t j = 0; j < seqs; ++j) {
      const std::size_t i = rng.below(seqs);
      sa += ed_a[i];
      sb += ed_b[i];
      sc += ed_c[i];
      nc += n_cases[i];
    }
    diff_b.push_back(100.0 * (sa - sb) / nc);
    diff_c.push_back(100.0 * (sa - sc) / nc);
  }
  std::sort(diff_b.begin(), diff_b.end());
  std::sort(diff_c.begin(), diff_c.end());
  const double lo_b = diff_b[50], lo_c = diff_c[50];  // 2.5% quantiles
  return {lo_b > 0.0 && lo_c > 0.0,
          fmt("ED MC12 %.2f vs UMC12 %.2f vs MC1 %.2f", score_a, score_b, score_c) +
              fmt("; 95%% lower bounds of the margins %.2f, %.2f", lo_b, lo_c)};
}

Outcome vcr_value() {
  const GroundTruth gt = load_ground_truth(testutil::fixture("vcr_ground_truth.json"));
  const SessionSet train = generate_corpus(gt, 2000, 20, 901);
  ModelConfig cfg;
  cfg.k = 1;
  const MixtureModel model = MixtureModel::build(train, cfg, gt.catalog.size());
  const std::vector<double> rewards(gt.catalog.rewards().begin(), gt.catalog.rewards().end());

  MdpParams p;
  p.alpha = gt.true_alpha;
  p.gamma = 0.95;
  p.end_state = true;
  const MdpModel learned = MdpModel::from_mixture(model, rewards, p);
  const Policy pol = solve(learned);
  MdpParams p0 = p;
  p0.gamma = 0.0;
  const MdpModel learned0 = MdpModel::from_mixture(model, rewards, p0);
  const Policy myopic = solve(learned0);

  const Recommender mdp_rec = policy_recommender(pol, learned, ranker_of(model));
  const Recommender myopic_rec = policy_recommender(myopic, learned0, ranker_of(model));
  const Recommender greedy_rec = ranker_recommender(ranker_of(model));

  // Exact values on the true instance.
  const MdpModel truth = ground_truth_mdp(gt, p);
  const Policy best = solve(truth, {1e-12, 100});
  const double v_mdp = exact_policy_value(truth, mdp_rec);
  const double v_myopic = exact_policy_value(truth, myopic_rec);
  const double v_greedy = exact_policy_value(truth, greedy_rec);
  const double v_best = *best.value(State::initial(1));

  const auto stats = compare_policies(gt, {{"mdp", mdp_rec}, {"myopic", myopic_rec}, {"greedy", greedy_rec}}, 10000,
                                      100, 902, p.gamma);
  const bool exact_order = v_mdp > v_myopic && v_mdp > v_greedy;
  const bool sim_order =
      stats[0].mean_discounted > stats[1].mean_discounted && stats[0].mean_discounted > stats[2].mean_discounted;
  return {exact_order && sim_order,
          fmt("exact: mdp %.3f, myopic %.3f, greedy %.3f", v_mdp, v_myopic, v_greedy) + fmt(" (optimal %.3f)", v_best) +
              fmt("; simulated: mdp %.3f, myopic %.3f, greedy %.3f", stats[0].mean_discounted, stats[1].mean_discounted,
                  stats[2].mean_discounted)};
}

Outcome online_update() {
  // The tiny fixture with every user in training.
  IngestOptions io;
  io.filter.min_item_count = 1;
  io.train_fraction = 0.99;
  const Corpus corpus = ingest(testutil::fixture("tiny_events.csv"), io);
  ModelConfig cfg;
  cfg.k = 1;
  const MixtureModel model = MixtureModel::build(corpus.train, cfg, corpus.catalog.size());
  ItemCatalog profits = corpus.catalog;
  profits.load_rewards_csv(testutil::fixture("tiny_profits.csv"));
  const std::vector<double> rewards(profits.rewards().begin(), profits.rewards().end());
  MdpParams p;
  p.alpha = 1.5;
  p.gamma = 0.95;
  MdpModel mdp = MdpModel::from_mixture(model, rewards, p);
  const Policy before = solve(mdp, {1e-9, 100});

  // After a, users now mostly move on to c and never to b.
  const ItemId a = *corpus.catalog.find("a"), b = *corpus.catalog.find("b"), c = *corpus.catalog.find("c");
  const State at_a = st({a}, 1);
  SparseRow shifted;
  shifted.items = {a, c};
  shifted.values = {0.1, 0.9};
  if (b < a || c < a) throw std::logic_error("unexpected item order");

  MdpModel truth = MdpModel::from_mixture(model, rewards, p);
  truth.set_base_row(at_a, shifted);
  const Policy target = solve(truth, {1e-9, 100});

  // 10^4 observations at the changed state, spread over the three actions.
  Rng rng(1010);
  for (int i = 0; i < 10000; ++i) {
    const ItemId shown = static_cast<ItemId>(i % 3);
    const SparseRow true_row = boost_row(shifted, shown, p.alpha);
    mdp.observe(at_a, shown, true_row.items[rng.categorical(true_row.values)]);
  }
  double worst = 0.0;
  for (ItemId shown = 0; shown < 3; ++shown) {
    const SparseRow eff = mdp.transition_row(at_a, shown);
    const SparseRow want = boost_row(shifted, shown, p.alpha);
    for (ItemId x = 0; x < 3; ++x) worst = std::max(worst, std::fabs(eff.at(x) - want.at(x)));
  }
  const Policy after = solve(mdp, {1e-9, 100});

  bool same_as_target = true;
  for (const State& s : target.states()) same_as_target &= after.action(s) == target.action(s);
  const bool moved = *before.action(at_a) != *target.action(at_a);
  return {worst <= 0.02 && same_as_target && moved,
          "L-inf row error " + fmt("%.4f", worst) + "; action at a: " + corpus.catalog.key(*before.action(at_a)) +
              " -> " + corpus.catalog.key(*after.action(at_a)) + " (new optimum " +
              corpus.catalog.key(*target.action(at_a)) + ")"};
}

Outcome pipeline_determinism() {
  const auto dir = testutil::scratch("acceptance_determinism");
  {
    RandomTruthOptions o;
    o.items = 40;
    o.k = 2;
    o.branching = 6;
    const GroundTruth gt = random_ground_truth(o, 1111);
    const SessionSet users = generate_corpus(gt, 600, 15, 1112);
    std::ofstream f(dir / "events.csv");
    f << "user,ts,item\n";
    for (const auto& seq : users.sequences)
      for (std::size_t t = 0; t < seq.items.size(); ++t)
        f << seq.user << ',' << 1000 + 60 * t << ',' << gt.catalog.key(seq.items[t]) << '\n';
    std::ofstream pf(dir / "profits.csv");
    pf << "item,reward\n";
    for (ItemId x = 0; x < gt.catalog.size(); ++x) pf << gt.catalog.key(x) << ',' << gt.catalog.reward(x) << '\n';
  }
  const std::vector<std::string> artifacts{"sessions.json", "model.json", "policy.json", "report.json"};
  auto pipeline = [&](const std::string& run) {
    const auto out = dir / run;
    std::filesystem::create_directories(out);
    std::ostringstream sink;
    auto call = [&](std::vector<std::string> args) {
      if (run_cli(args, sink, sink) != kExitOk) throw std::runtime_error("pipeline step failed: " + sink.str());
    };
    call({"ingest", "--input", (dir / "events.csv").string(), "--min-item-count", "5", "--seed", "42", "-o",
          (out / "sessions.json").string()});
    call({"train", "--sessions", (out / "sessions.json").string(), "--k", "3", "--skip", "--cluster", "-o",
          (out / "model.json").string()});
    call({"solve", "--model", (out / "model.json").string(), "--profits", (dir / "profits.csv").string(), "-o",
          (out / "policy.json").string()});
    call({"evaluate", "--sessions", (out / "sessions.json").string(), "--model", (out / "model.json").string(),
          "--ranker", "mdp", "--policy", (out / "policy.json").string(), "-o", (out / "report.json").string()});
  };
  pipeline("run1");
  pipeline("run2");
  std::size_t identical = 0;
  for (const auto& name : artifacts)
    if (testutil::slurp(dir / "run1" / name) == testutil::slurp(dir / "run2" / name)) ++identical;
  return {identical == artifacts.size(),
          fmt("%g of %g artifacts byte-identical", static_cast<double>(identical), static_cast<double>(artifacts.size()))};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "skipping counts", 1, skipping_counts},
      {2, "state similarity", 1, similarity_values},
      {3, "dense oracle equivalence", 30, dense_oracle},
      {4, "stochastic rows", 60, stochasticity},
      {5, "solver vs value iteration", 30, solver_oracle},
      {6, "policy iteration rounds", 120, convergence_rounds},
      {7, "metric fidelity", 10, metric_fidelity},
      {8, "ordered mixture wins on ED", 120, ordering_on_order2_truth},
      {9, "MDP beats myopic on VCR fixture", 60, vcr_value},
      {10, "online update and re-solve", 60, online_update},
      {11, "pipeline determinism", 120, pipeline_determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    std::printf("%s %2d %-34s %7.2fs / %3.0fs  %s%s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs, c.budget_s,
                o.detail.c_str(), in_time ? "" : "  [over time budget]");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
