#include "mdprec/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "mdprec/eval.hpp"
#include "mdprec/ingestion.hpp"
#include "mdprec/mc_model.hpp"
#include "mdprec/mdp.hpp"
#include "mdprec/persist.hpp"
#include "mdprec/rng.hpp"
#include "mdprec/simulator.hpp"

namespace mdprec {

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

struct IngestFlags {
  std::string input;
  std::string sessions;
  std::string format = "csv";
  bool sessionize = false;
  double gap_hours = 2.0;
  std::size_t min_item_count = 100;
  std::size_t min_seq_len = 2;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;

  void attach(CLI::App& app, bool allow_sessions) {
    app.add_option("--input", input, "Event log (user,ts,item)");
    if (allow_sessions) app.add_option("--sessions", sessions, "Session file written by `ingest`");
    app.add_option("--format", format, "Event format: csv or jsonl")->check(CLI::IsMember({"csv", "jsonl"}));
    app.add_flag("--sessionize", sessionize, "Cut browsing logs into sessions at idle gaps");
    app.add_option("--session-gap-hours", gap_hours, "Idle gap that starts a new session")->check(CLI::PositiveNumber);
    app.add_option("--min-item-count", min_item_count, "Drop items seen fewer times")->check(CLI::Range(1, 1 << 30));
    app.add_option("--min-seq-len", min_seq_len, "Drop sequences shorter than this")->check(CLI::Range(2, 1 << 30));
    app.add_option("--train-fraction", train_fraction, "Share of users in the training split")
        ->check(CLI::Range(0.0, 1.0));
    app.add_option("--seed", seed, "Seed for every random stream");
  }

  Corpus load() const {
    if (!sessions.empty() && !input.empty()) throw UsageError("give either --input or --sessions, not both");
    if (!sessions.empty()) return corpus_from_json(read_json(sessions));
    if (input.empty()) throw UsageError("an event log (--input) or session file (--sessions) is required");
    IngestOptions opt;
    opt.format = parse_event_format(format);
    opt.sessionize = sessionize;
    opt.session_gap_hours = gap_hours;
    opt.filter.min_item_count = min_item_count;
    opt.filter.min_seq_len = min_seq_len;
    opt.train_fraction = train_fraction;
    opt.seed = seed;
    return ingest(input, opt);
  }
};

struct ModelFlags {
  int k = 3;
  std::vector<int> mixture;
  bool skip = false;
  bool cluster = false;
  bool unordered = false;

  void attach(CLI::App& app) {
    app.add_option("--k", k, "Largest Markov order")->check(CLI::Range(1, kMaxOrder));
    app.add_option("--mixture", mixture, "Component orders, e.g. 1,2,3 (default 1..k)")->delimiter(',');
    app.add_flag("--skip", skip, "Add fractional skipping counts");
    app.add_flag("--cluster", cluster, "Blend rows of similar states");
    app.add_flag("--unordered", unordered, "Key states by unordered item bags (UMC)");
  }

  ModelConfig config() const {
    ModelConfig c;
    c.k = k;
    c.orders = mixture;
    c.skipping = skip;
    c.clustering = cluster;
    c.unordered = unordered;
    c.component_orders();
    return c;
  }
};

struct MdpFlags {
  double alpha = 1.5;
  double gamma = 0.95;
  double prior_strength = 10.0;
  double tolerance = 1e-6;
  int max_iterations = 100;
  bool end_state = false;

  void attach(CLI::App& app) {
    app.add_option("--alpha", alpha, "Boost of a recommended item's selection probability");
    app.add_option("--gamma", gamma, "Discount factor");
    app.add_option("--prior-strength", prior_strength, "Pseudo-count weight of the initial rows");
    app.add_option("--tolerance", tolerance, "Value accuracy of each policy evaluation");
    app.add_option("--max-iterations", max_iterations, "Policy-improvement rounds");
    app.add_flag("--end-state", end_state, "Model session termination from sequence ends");
  }

  MdpParams params() const {
    MdpParams p;
    p.alpha = alpha;
    p.gamma = gamma;
    p.prior_strength = prior_strength;
    p.end_state = end_state;
    p.validate();
    return p;
  }

  SolveOptions solve_options() const {
    SolveOptions o;
    o.tolerance = tolerance;
    o.max_iterations = max_iterations;
    return o;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void print_corpus_stats(std::ostream& out, const Corpus& corpus, int k) {
  out << "items: " << corpus.catalog.size() << '\n';
  out << "train users: " << corpus.train.user_count() << "  sequences: " << corpus.train.sequences.size()
      << "  transitions: " << corpus.train.transition_count() << '\n';
  out << "test users: " << corpus.test.user_count() << "  sequences: " << corpus.test.sequences.size()
      << "  cases: " << expand_cases(corpus.test, k).size() << '\n';
}

std::vector<double> rewards_for(const ItemCatalog& base, const std::string& profits_path) {
  ItemCatalog catalog = base;
  if (!profits_path.empty()) catalog.load_rewards_csv(profits_path);
  return {catalog.rewards().begin(), catalog.rewards().end()};
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  bool strict = false;
};

int cmd_ingest(Context& ctx, const IngestFlags& in, const std::string& output) {
  if (!in.sessions.empty()) throw UsageError("ingest reads raw events (--input)");
  const Corpus corpus = in.load();
  write_json(output, corpus_to_json(corpus));
  ctx.out << "events: " << corpus.event_count << '\n';
  print_corpus_stats(ctx.out, corpus, 1);
  ctx.out << "wrote " << output << '\n';
  return kExitOk;
}

int cmd_train(Context& ctx, const IngestFlags& in, const ModelFlags& mf, const std::string& output) {
  const ModelConfig config = mf.config();
  const Corpus corpus = in.load();
  print_corpus_stats(ctx.out, corpus, config.top_order());
  const MixtureModel model = MixtureModel::build(corpus.train, config, corpus.catalog.size());
  write_json(output, model_to_json(model, corpus.catalog));
  ctx.out << "model: " << config.variant_name();
  for (const auto& c : model.components()) ctx.out << "  order" << c.order() << " rows=" << c.size();
  ctx.out << "\nwrote " << output << '\n';
  return kExitOk;
}

int cmd_solve(Context& ctx, const std::string& model_path, const std::string& profits, const MdpFlags& mf,
              std::size_t top, const std::string& output) {
  const LoadedModel lm = model_from_json(read_json(model_path));
  const MdpParams params = mf.params();
  const MdpModel mdp = MdpModel::from_mixture(lm.model, rewards_for(lm.catalog, profits), params);
  const Policy policy = solve(mdp, mf.solve_options());
  ctx.out << "states: " << policy.states().size() << "  iterations: " << policy.iterations << '\n';
  for (std::size_t r = 0; r < policy.residuals.size(); ++r)
    ctx.out << "round " << (r + 1) << ": sweeps=" << policy.sweeps[r] << " residual=" << fmt("%.3e", policy.residuals[r])
            << '\n';
  write_json(output, policy_to_json(policy, mdp, lm.catalog, top, mf.tolerance));
  ctx.out << "wrote " << output << '\n';
  if (!policy.converged) {
    ctx.err << "warning: policy iteration did not converge within " << mf.max_iterations << " rounds\n";
    if (ctx.strict) return kExitNotConverged;
  }
  return kExitOk;
}

// Everything needed to rank with a stored model and, optionally, a policy.
struct Rankers {
  LoadedModel lm;
  std::optional<LoadedPolicy> lp;
  std::optional<MdpModel> mdp;

  Ranker mc() const {
    return [this](std::span<const ItemId> h) { return lm.model.rank(h); };
  }
  Ranker mdp_ranker() const {
    return [this](std::span<const ItemId> h) {
      const State s = state_from_history(h, mdp->order());
      return recommend(lp->policy, *mdp, s, mdp->item_count(), mc());
    };
  }
};

std::unique_ptr<Rankers> load_rankers(const std::string& model_path, const std::string& policy_path,
                                      const std::string& ranker) {
  auto r = std::make_unique<Rankers>(Rankers{model_from_json(read_json(model_path)), std::nullopt, std::nullopt});
  if (ranker == "mdp") {
    if (policy_path.empty()) throw UsageError("--ranker mdp needs --policy");
    r->lp = policy_from_json(read_json(policy_path), r->lm.catalog);
    r->mdp.emplace(MdpModel::from_mixture(r->lm.model, r->lp->rewards, r->lp->params));
  }
  return r;
}

int cmd_evaluate(Context& ctx, const IngestFlags& in, const std::string& model_path, const std::string& policy_path,
                 const std::string& ranker, const std::vector<std::string>& metrics, const std::vector<std::size_t>& ms,
                 double half_life, bool on_train, const std::string& output) {
  if (!(half_life > 1.0)) throw UsageError("--half-life must be > 1");
  bool with_rc = false, with_ed = false;
  for (const auto& m : metrics) {
    if (m == "rc") with_rc = true;
    else if (m == "ed") with_ed = true;
    else throw UsageError("unknown metric '" + m + "' (expected rc, ed)");
  }
  const auto rankers = load_rankers(model_path, policy_path, ranker);
  const Corpus corpus = in.load();
  if (corpus.catalog.keys().size() != rankers->lm.catalog.size() ||
      !std::equal(corpus.catalog.keys().begin(), corpus.catalog.keys().end(), rankers->lm.catalog.keys().begin()))
    throw DataError("session items do not match the model's item table");
  const SessionSet& cases = on_train ? corpus.train : corpus.test;
  if (cases.sequences.empty()) throw DataError(on_train ? "empty training set" : "empty test set");

  const int k = rankers->lm.model.config().top_order();
  const Ranker rank = ranker == "mdp" ? rankers->mdp_ranker() : rankers->mc();
  const ScoreReport report = evaluate(rank, cases, k, ms, half_life);
  const std::string name = rankers->lm.model.config().variant_name() + (ranker == "mdp" ? "+MDP" : "");
  ctx.out << report_table(report, name, with_rc, with_ed);
  if (!output.empty()) write_json(output, report_to_json(report, name, with_rc, with_ed));
  return kExitOk;
}

struct ExploreFlags {
  std::optional<double> epsilon;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

int cmd_recommend(Context& ctx, const std::string& model_path, const std::string& policy_path,
                  const std::string& ranker, const std::vector<std::string>& history_keys, std::size_t m,
                  const ExploreFlags& ex) {
  if (m < 1) throw UsageError("--m must be >= 1");
  const auto rankers = load_rankers(model_path, policy_path, ranker);
  const ItemCatalog& catalog = rankers->lm.catalog;
  std::vector<ItemId> history;
  for (const auto& key : history_keys) {
    if (auto id = catalog.find(key)) history.push_back(*id);
    else ctx.err << "warning: unknown item '" << key << "' skipped\n";
  }

  std::vector<std::pair<ItemId, double>> scored;
  if (ranker == "mdp") {
    const State s = state_from_history(history, rankers->mdp->order());
    if (rankers->mdp->encountered(s)) {
      const auto q = q_values(*rankers->mdp, rankers->lp->policy, s);
      for (ItemId x : rank_by_score(q)) scored.emplace_back(x, q[x]);
      if (ex.epsilon) {
        // The explored pick goes first; the rest keep their Q order.
        Rng rng(derive_seed(ex.seed, "explore"));
        const ItemId pick = explore(rankers->lp->policy, *rankers->mdp, s, *ex.epsilon, ex.temperature, rng);
        auto it = std::find_if(scored.begin(), scored.end(), [&](const auto& e) { return e.first == pick; });
        std::rotate(scored.begin(), it, it + 1);
      }
    } else {
      ctx.err << "note: unencountered state, ranking by the predictive model\n";
    }
  } else if (ex.epsilon) {
    throw UsageError("--epsilon needs --ranker mdp");
  }
  if (scored.empty()) {
    const auto p = rankers->lm.model.predict(history);
    for (ItemId x : rank_by_score(p)) scored.emplace_back(x, p[x]);
  }
  if (scored.size() > m) scored.resize(m);
  for (std::size_t i = 0; i < scored.size(); ++i)
    ctx.out << (i + 1) << '\t' << catalog.key(scored[i].first) << '\t' << fmt("%.6g", scored[i].second) << '\n';
  return kExitOk;
}

struct SimFlags {
  std::string ground_truth;
  std::vector<std::string> policies{"mdp", "myopic"};
  std::size_t episodes = 1000;
  std::size_t steps = 20;
  std::size_t users = 2000;
  std::size_t max_len = 20;
  std::uint64_t seed = 0;
  std::string output;
};

int cmd_simulate(Context& ctx, const SimFlags& sf, const ModelFlags& mf, const MdpFlags& df) {
  const GroundTruth gt = load_ground_truth(sf.ground_truth);
  const SessionSet corpus = generate_corpus(gt, sf.users, sf.max_len, derive_seed(sf.seed, "corpus"));
  SessionSet train{SplitTag::Train, {}};
  for (const auto& s : corpus.sequences)
    if (s.items.size() >= 2) train.sequences.push_back(s);
  if (train.sequences.empty()) throw DataError("generated corpus has no sequence of length >= 2");

  const ModelConfig config = mf.config();
  if (config.unordered) throw UsageError("simulate needs an ordered model");
  const MixtureModel model = MixtureModel::build(train, config, gt.catalog.size());
  const std::vector<double> rewards(gt.catalog.rewards().begin(), gt.catalog.rewards().end());
  const MdpParams params = df.params();
  const MdpModel learned = MdpModel::from_mixture(model, rewards, params);
  const Ranker mc = [&model](std::span<const ItemId> h) { return model.rank(h); };

  // Solved lazily: only the requested policies pay for their solve.
  std::optional<Policy> mdp_policy, myopic_policy, oracle_policy;
  std::optional<MdpModel> myopic_model, oracle_model;
  bool converged = true;
  std::vector<std::pair<std::string, Recommender>> named;
  for (const auto& name : sf.policies) {
    if (name == "mdp") {
      mdp_policy = solve(learned, df.solve_options());
      converged &= mdp_policy->converged;
      named.emplace_back(name, policy_recommender(*mdp_policy, learned, mc));
    } else if (name == "myopic") {
      MdpParams p = params;
      p.gamma = 0.0;
      myopic_model.emplace(MdpModel::from_mixture(model, rewards, p));
      myopic_policy = solve(*myopic_model, df.solve_options());
      named.emplace_back(name, policy_recommender(*myopic_policy, *myopic_model, mc));
    } else if (name == "mc") {
      named.emplace_back(name, ranker_recommender(mc));
    } else if (name == "oracle") {
      MdpParams p = params;
      p.alpha = gt.true_alpha;
      oracle_model.emplace(ground_truth_mdp(gt, p));
      oracle_policy = solve(*oracle_model, df.solve_options());
      converged &= oracle_policy->converged;
      named.emplace_back(name, policy_recommender(*oracle_policy, *oracle_model, mc));
    } else {
      throw UsageError("unknown policy '" + name + "' (expected mdp, myopic, mc, oracle)");
    }
  }

  const auto stats = compare_policies(gt, named, sf.episodes, sf.steps, derive_seed(sf.seed, "episodes"), params.gamma);
  ctx.out << "corpus: " << train.sequences.size() << " sequences  model: " << config.variant_name()
          << "  states: " << learned.states().size() << '\n';
  ctx.out << stats_table(stats);
  if (!sf.output.empty()) write_json(sf.output, stats_to_json(stats));
  if (!converged) {
    ctx.err << "warning: policy iteration did not converge\n";
    if (ctx.strict) return kExitNotConverged;
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"mdprec: Markov-chain and MDP recommender toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Context ctx{out, err};
  app.add_flag("--strict", ctx.strict, "Exit 3 when policy iteration does not converge");

  std::string output;

  IngestFlags ingest_flags;
  auto* ingest_cmd = app.add_subcommand("ingest", "Parse, filter and split an event log");
  ingest_flags.attach(*ingest_cmd, false);
  ingest_cmd->add_option("--output,-o", output, "Session file to write")->required();

  IngestFlags train_in;
  ModelFlags model_flags;
  auto* train_cmd = app.add_subcommand("train", "Build the Markov-chain mixture model");
  train_in.attach(*train_cmd, true);
  model_flags.attach(*train_cmd);
  train_cmd->add_option("--output,-o", output, "Model file to write")->required();

  std::string model_path, policy_path, profits;
  MdpFlags mdp_flags;
  std::size_t top = 10;
  auto* solve_cmd = app.add_subcommand("solve", "Solve the recommendation MDP");
  solve_cmd->add_option("--model", model_path, "Model file")->required();
  solve_cmd->add_option("--profits", profits, "CSV item,reward (default reward 1)");
  mdp_flags.attach(*solve_cmd);
  solve_cmd->add_option("--top", top, "Q-values stored per state")->check(CLI::Range(1, 1 << 20));
  solve_cmd->add_option("--output,-o", output, "Policy file to write")->required();

  IngestFlags eval_in;
  std::string ranker = "mc";
  std::vector<std::string> metrics{"rc", "ed"};
  std::vector<std::size_t> ms(kDefaultListLengths);
  double half_life = 5.0;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a model or policy on the test split");
  eval_in.attach(*eval_cmd, true);
  eval_cmd->add_option("--model", model_path, "Model file")->required();
  eval_cmd->add_option("--policy", policy_path, "Policy file (for --ranker mdp)");
  eval_cmd->add_option("--ranker", ranker, "mc or mdp")->check(CLI::IsMember({"mc", "mdp"}));
  eval_cmd->add_option("--metrics", metrics, "Metrics to report: rc,ed")->delimiter(',');
  eval_cmd->add_option("--m", ms, "List lengths for RC")->delimiter(',')->check(CLI::PositiveNumber);
  eval_cmd->add_option("--half-life", half_life, "ED half-life (> 1)");
  std::string split = "test";
  eval_cmd->add_option("--on", split, "Split to score: test or train")->check(CLI::IsMember({"test", "train"}));
  eval_cmd->add_option("--output,-o", output, "Report JSON to write");

  std::vector<std::string> history;
  std::size_t m_top = 10;
  auto* rec_cmd = app.add_subcommand("recommend", "Print the top-m items for a history");
  rec_cmd->add_option("--model", model_path, "Model file")->required();
  rec_cmd->add_option("--policy", policy_path, "Policy file (for --ranker mdp)");
  rec_cmd->add_option("--ranker", ranker, "mc or mdp")->check(CLI::IsMember({"mc", "mdp"}));
  rec_cmd->add_option("--history", history, "Comma-separated item keys, oldest first")->delimiter(',');
  rec_cmd->add_option("--m", m_top, "Number of items to print");
  ExploreFlags explore_flags;
  rec_cmd->add_option("--epsilon", explore_flags.epsilon, "Draw the first item among actions within epsilon of the best")
      ->check(CLI::NonNegativeNumber);
  rec_cmd->add_option("--temperature", explore_flags.temperature, "Boltzmann temperature of the draw")
      ->check(CLI::PositiveNumber);
  rec_cmd->add_option("--seed", explore_flags.seed);

  SimFlags sim_flags;
  ModelFlags sim_model;
  MdpFlags sim_mdp;
  auto* sim_cmd = app.add_subcommand("simulate", "Compare policies on a synthetic ground truth");
  sim_cmd->add_option("--ground-truth", sim_flags.ground_truth, "Ground-truth JSON")->required();
  sim_cmd->add_option("--policies", sim_flags.policies, "mdp,myopic,mc,oracle")->delimiter(',');
  sim_cmd->add_option("--episodes", sim_flags.episodes)->check(CLI::Range(1, 1 << 30));
  sim_cmd->add_option("--steps", sim_flags.steps)->check(CLI::Range(1, 1 << 30));
  sim_cmd->add_option("--users", sim_flags.users, "Generated training users")->check(CLI::Range(1, 1 << 30));
  sim_cmd->add_option("--max-len", sim_flags.max_len, "Longest generated sequence")->check(CLI::Range(1, 1 << 30));
  sim_cmd->add_option("--seed", sim_flags.seed);
  sim_cmd->add_option("--output,-o", sim_flags.output, "Comparison JSON to write");
  sim_model.attach(*sim_cmd);
  sim_model.k = 1;
  sim_mdp.attach(*sim_cmd);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    std::string sub_help;
    for (auto* sub : app.get_subcommands()) sub_help = sub->help();
    err << (sub_help.empty() ? app.help() : sub_help);
    return kExitUsage;
  }

  try {
    if (*ingest_cmd) return cmd_ingest(ctx, ingest_flags, output);
    if (*train_cmd) return cmd_train(ctx, train_in, model_flags, output);
    if (*solve_cmd) return cmd_solve(ctx, model_path, profits, mdp_flags, top, output);
    if (*eval_cmd) return cmd_evaluate(ctx, eval_in, model_path, policy_path, ranker, metrics, ms, half_life, split == "train", output);
    if (*rec_cmd) return cmd_recommend(ctx, model_path, policy_path, ranker, history, m_top, explore_flags);
    if (*sim_cmd) return cmd_simulate(ctx, sim_flags, sim_model, sim_mdp);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace mdprec
