#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mdprec/eval.hpp"
#include "test_util.hpp"

using namespace mdprec;
using testutil::sessions;

namespace {

// Ranks `observed` at a fixed position among n items, given the case.
Ranker fixed_position(const std::vector<TestCase>& cases, std::size_t n, std::size_t pos) {
  return [&cases, n, pos](std::span<const ItemId> ctx) {
    ItemId obs = 0;
    for (const auto& c : cases)
      if (std::equal(c.context.begin(), c.context.end(), ctx.begin(), ctx.end())) obs = c.observed;
    std::vector<ItemId> others;
    for (ItemId x = 0; x < n; ++x)
      if (x != obs) others.push_back(x);
    others.insert(others.begin() + static_cast<std::ptrdiff_t>(pos - 1), obs);
    return others;
  };
}

}  // namespace

TEST_CASE("expand_cases") {
  const auto c3 = expand_cases(sessions({{0, 1, 2}}), 3);
  REQUIRE(c3.size() == 2);
  CHECK(c3[0].context == std::vector<ItemId>{0});
  CHECK(c3[0].observed == 1);
  CHECK(c3[1].context == std::vector<ItemId>{0, 1});
  CHECK(c3[1].observed == 2);
  CHECK(expand_cases(sessions({{4, 5}}), 5).size() == 1);
  const auto c2 = expand_cases(sessions({{0, 1, 2, 3, 4}}), 2);
  REQUIRE(c2.size() == 4);
  CHECK(c2[3].context == std::vector<ItemId>{2, 3});
  CHECK(c2[3].observed == 4);
  for (const auto& c : c2) CHECK(c.context.size() <= 2);
}

TEST_CASE("view probability") {
  CHECK(view_probability(1, 5) == 1.0);
  CHECK(view_probability(5, 5) == 0.5);
  CHECK(view_probability(9, 5) == 0.25);
  CHECK(view_probability(0, 5) == 0.0);
  CHECK_THROWS_AS(view_probability(1, 1.0), std::invalid_argument);
}

TEST_CASE("recommendation score") {
  const std::vector<std::size_t> hit2{2}, miss{3}, half{1, 4};
  CHECK(recommendation_score(hit2, 2) == 100.0);
  CHECK(recommendation_score(miss, 2) == 0.0);
  CHECK(recommendation_score(half, 2) == 50.0);
  CHECK(recommendation_score(std::vector<std::size_t>{0}, 10) == 0.0);
  CHECK_THROWS_AS(recommendation_score(std::vector<std::size_t>{}, 1), DataError);
  CHECK_THROWS_AS(recommendation_score(half, 0), std::invalid_argument);
}

TEST_CASE("exponential decay score") {
  CHECK(exponential_decay_score(std::vector<std::size_t>{1}, 5) == 100.0);
  CHECK(exponential_decay_score(std::vector<std::size_t>{5, 5, 5}, 5) == 50.0);
  CHECK(exponential_decay_score(std::vector<std::size_t>{9, 0}, 5) == 12.5);
  CHECK_THROWS_AS(exponential_decay_score(std::vector<std::size_t>{}, 5), DataError);
}

TEST_CASE("scores over rankers") {
  const auto test = sessions({{0, 1, 2, 3}, {3, 2, 1}});
  const auto cases = expand_cases(test, 2);
  const Ranker oracle = fixed_position(cases, 6, 1);
  const ScoreReport perfect = evaluate(oracle, test, 2);
  for (const auto& [m, v] : perfect.rc_at_m) CHECK(v == 100.0);
  CHECK(perfect.ed_score == 100.0);
  CHECK(perfect.case_count == 5);

  const ScoreReport last = evaluate(fixed_position(cases, 6, 6), test, 2);
  CHECK(last.ed_score == doctest::Approx(100.0 * std::exp2(-5.0 / 4.0)).epsilon(1e-15));
  CHECK(last.rc_at_m.at(5) == 0.0);
  CHECK(last.rc_at_m.at(10) == 100.0);

  const ScoreReport fifth = evaluate(fixed_position(cases, 6, 5), test, 2);
  CHECK(fifth.ed_score == 50.0);

  // Reversing a list that had every observed item on top cannot help.
  const Ranker reversed = [&](std::span<const ItemId> ctx) {
    auto r = oracle(ctx);
    std::reverse(r.begin(), r.end());
    return r;
  };
  CHECK(evaluate(reversed, test, 2).ed_score <= perfect.ed_score);
  CHECK_THROWS_AS(evaluate(oracle, SessionSet{}, 2), DataError);
}

TEST_CASE("RC is monotone in m and both scores stay in range") {
  Rng rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::size_t> pos(1 + rng.below(30));
    for (auto& p : pos) p = rng.below(12);
    double prev = -1.0;
    for (std::size_t m = 1; m <= 12; ++m) {
      const double rc = recommendation_score(pos, m);
      CHECK(rc >= prev);
      CHECK(rc <= 100.0);
      prev = rc;
    }
    const double ed = exponential_decay_score(pos, 5.0);
    CHECK(ed >= 0.0);
    CHECK(ed <= 100.0);
    // Table of precomputed powers as an independent check.
    double table[12];
    for (int i = 0; i < 12; ++i) table[i] = std::pow(0.5, i / 4.0);
    double sum = 0.0;
    for (auto p : pos) sum += p == 0 ? 0.0 : table[p - 1];
    CHECK(ed == doctest::Approx(100.0 * sum / static_cast<double>(pos.size())).epsilon(1e-12));
  }
}

TEST_CASE("ED ignores permutations below every observed position") {
  const auto test = sessions({{0, 1}, {1, 2}});
  const auto cases = expand_cases(test, 1);
  const Ranker base = [](std::span<const ItemId>) { return std::vector<ItemId>{1, 2, 0, 3, 4, 5}; };
  const Ranker shuffled = [](std::span<const ItemId>) { return std::vector<ItemId>{1, 2, 5, 4, 3, 0}; };
  CHECK(exponential_decay_score(cases, base, 5) == exponential_decay_score(cases, shuffled, 5));
}

TEST_CASE("report output") {
  ScoreReport r;
  r.rc_at_m = {{1, 25.0}, {3, 50.0}};
  r.ed_score = 40.0;
  r.case_count = 8;
  const auto j = report_to_json(r, "MC1");
  CHECK(j.at("model") == "MC1");
  CHECK(j.at("ed").get<double>() == 40.0);
  const auto table = report_table(r, "MC1", true, false);
  CHECK(table.find("RC@3") != std::string::npos);
  CHECK(table.find("ED") == std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 4);
}
