#include "mdprec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace mdprec {

std::vector<TestCase> expand_cases(const SessionSet& test, int k) {
  check_order(k);
  std::vector<TestCase> cases;
  for (const auto& seq : test.sequences) {
    for (std::size_t p = 1; p < seq.items.size(); ++p) {
      const std::size_t take = std::min<std::size_t>(p, static_cast<std::size_t>(k));
      TestCase c;
      c.context.assign(seq.items.begin() + static_cast<std::ptrdiff_t>(p - take),
                       seq.items.begin() + static_cast<std::ptrdiff_t>(p));
      c.observed = seq.items[p];
      cases.push_back(std::move(c));
    }
  }
  return cases;
}

std::vector<std::size_t> observed_positions(std::span<const TestCase> cases, const Ranker& ranker) {
  std::vector<std::size_t> positions;
  positions.reserve(cases.size());
  for (const auto& c : cases) {
    const auto ranked = ranker(c.context);
    auto it = std::find(ranked.begin(), ranked.end(), c.observed);
    positions.push_back(it == ranked.end() ? 0 : static_cast<std::size_t>(it - ranked.begin()) + 1);
  }
  return positions;
}

double view_probability(std::size_t pos, double half_life) {
  if (!(half_life > 1.0)) throw std::invalid_argument("half-life must be > 1");
  if (pos == 0) return 0.0;
  return std::exp2(-static_cast<double>(pos - 1) / (half_life - 1.0));
}

double recommendation_score(std::span<const std::size_t> positions, std::size_t m) {
  if (m < 1) throw std::invalid_argument("list length m must be >= 1");
  if (positions.empty()) throw DataError("no test cases to score");
  std::size_t hits = 0;
  for (std::size_t pos : positions)
    if (pos != 0 && pos <= m) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(positions.size());
}

double exponential_decay_score(std::span<const std::size_t> positions, double half_life) {
  if (positions.empty()) throw DataError("no test cases to score");
  double total = 0.0;
  for (std::size_t pos : positions) total += view_probability(pos, half_life);
  return 100.0 * total / static_cast<double>(positions.size());
}

double recommendation_score(std::span<const TestCase> cases, const Ranker& ranker, std::size_t m) {
  if (cases.empty()) throw DataError("no test cases to score");
  return recommendation_score(observed_positions(cases, ranker), m);
}

double exponential_decay_score(std::span<const TestCase> cases, const Ranker& ranker, double half_life) {
  if (cases.empty()) throw DataError("no test cases to score");
  return exponential_decay_score(observed_positions(cases, ranker), half_life);
}

ScoreReport evaluate(const Ranker& ranker, const SessionSet& test, int k, std::span<const std::size_t> m_values,
                     double half_life) {
  const auto cases = expand_cases(test, k);
  if (cases.empty()) throw DataError("test set yields no cases");
  const auto positions = observed_positions(cases, ranker);
  ScoreReport report;
  report.case_count = cases.size();
  report.half_life = half_life;
  for (std::size_t m : m_values) report.rc_at_m[m] = recommendation_score(positions, m);
  report.ed_score = exponential_decay_score(positions, half_life);
  return report;
}

nlohmann::json report_to_json(const ScoreReport& report, const std::string& model_name, bool with_rc, bool with_ed) {
  nlohmann::json j;
  j["model"] = model_name;
  j["cases"] = report.case_count;
  if (with_rc) {
    nlohmann::json rc = nlohmann::json::object();
    for (const auto& [m, v] : report.rc_at_m) rc[std::to_string(m)] = v;
    j["rc"] = rc;
  }
  if (with_ed) {
    j["ed"] = report.ed_score;
    j["half_life"] = report.half_life;
  }
  return j;
}

std::string report_table(const ScoreReport& report, const std::string& model_name, bool with_rc, bool with_ed) {
  std::ostringstream out;
  char line[256];
  const int w = static_cast<int>(std::max<std::size_t>(14, model_name.size() + 1));
  std::snprintf(line, sizeof line, "%-*s %-12s %10s\n", w, "model", "metric", "score");
  out << line;
  if (with_rc)
    for (const auto& [m, v] : report.rc_at_m) {
      std::snprintf(line, sizeof line, "%-*s %-12s %10.4f\n", w, model_name.c_str(), ("RC@" + std::to_string(m)).c_str(), v);
      out << line;
    }
  if (with_ed) {
    char metric[32];
    std::snprintf(metric, sizeof metric, "ED(hl=%g)", report.half_life);
    std::snprintf(line, sizeof line, "%-*s %-12s %10.4f\n", w, model_name.c_str(), metric, report.ed_score);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-*s %-12s %10zu\n", w, model_name.c_str(), "cases", report.case_count);
  out << line;
  return out.str();
}

}  // namespace mdprec
