#pragma once

// Offline scoring of ranked next-item lists: Recommendation Score (hit rate
// in the top m) and Exponential Decay Score (position-discounted hits).

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdprec/domain.hpp"
#include "mdprec/ingestion.hpp"

namespace mdprec {

struct TestCase {
  std::vector<ItemId> context;  // at most k items, oldest first
  ItemId observed = kMissing;
};

// n-1 cases per sequence: each prefix (truncated to its last k items)
// predicting the next item.
std::vector<TestCase> expand_cases(const SessionSet& test, int k);

// 1-based position of each observed item in its ranked list, 0 if absent.
std::vector<std::size_t> observed_positions(std::span<const TestCase> cases, const Ranker& ranker);

// Probability that a user looks at list position `pos` (1-based):
// 2^(-(pos-1)/(half_life-1)). Position 0 (absent) scores 0.
double view_probability(std::size_t pos, double half_life);

double recommendation_score(std::span<const TestCase> cases, const Ranker& ranker, std::size_t m);
double exponential_decay_score(std::span<const TestCase> cases, const Ranker& ranker, double half_life);

// Score helpers over precomputed positions.
double recommendation_score(std::span<const std::size_t> positions, std::size_t m);
double exponential_decay_score(std::span<const std::size_t> positions, double half_life);

struct ScoreReport {
  std::map<std::size_t, double> rc_at_m;
  double ed_score = 0.0;
  std::size_t case_count = 0;
  double half_life = 5.0;
};

inline const std::vector<std::size_t> kDefaultListLengths{1, 3, 5, 10};

ScoreReport evaluate(const Ranker& ranker, const SessionSet& test, int k,
                     std::span<const std::size_t> m_values = kDefaultListLengths, double half_life = 5.0);

nlohmann::json report_to_json(const ScoreReport& report, const std::string& model_name, bool with_rc = true,
                              bool with_ed = true);

// Aligned text table, one row per metric.
std::string report_table(const ScoreReport& report, const std::string& model_name, bool with_rc = true,
                         bool with_ed = true);

}  // namespace mdprec
