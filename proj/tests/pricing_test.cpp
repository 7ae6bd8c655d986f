/*
 * Copyright 2026 The Bazaar Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "bazaar/pricing.hpp"

#include <gtest/gtest.h>

#include <tuple>

namespace bazaar::pricing {
namespace {

// One model with quality 1 on both metrics: C = 0.5 c, W = 0.5 (l1 + l2).
PricingInstance Single(double c, double l) { return PricingInstance({{1.0, 1.0, c}}, {{l, l}}); }

TEST(Revenue, TrivialCases) {
  const auto inst = Single(0.4, 0.6);  // C = 0.2, W = 0.6
  EXPECT_DOUBLE_EQ(inst.cost(0), 0.2);
  EXPECT_DOUBLE_EQ(inst.willingness(0, 0), 0.6);
  const auto none = evaluate(inst, {0.7});
  EXPECT_EQ(none.assignment.choice[0], -1);
  EXPECT_EQ(none.revenue, 0.0);
  EXPECT_EQ(none.utilities[0], 0.0);
  const auto sale = evaluate(inst, {0.5});
  EXPECT_NEAR(sale.revenue, 0.3, 1e-15);
  EXPECT_NEAR(sale.utilities[0], 0.1, 1e-15);
  const auto edge = evaluate(inst, {0.6});
  EXPECT_EQ(edge.assignment.choice[0], 0);
  EXPECT_EQ(edge.utilities[0], 0.0);
  EXPECT_EQ(check_solution(inst, edge), "");
}

TEST(BestResponse, TieGoesToLowerIndex) {
  const PricingInstance inst({{1.0, 1.0, 0.1}, {1.0, 1.0, 0.1}}, {{0.8, 0.8}});
  EXPECT_EQ(best_response(inst, {0.5, 0.5}).choice[0], 0);
  EXPECT_EQ(best_response(inst, {0.6, 0.5}).choice[0], 1);
  EXPECT_EQ(best_response(inst, {0.9, 0.9}).choice[0], -1);
}

// Independent oracle: over every feasible assignment, the buyer-order
// lexicographic maximum of (U_j, bought, -model index).
Assignment LexOracle(const PricingInstance& inst, const std::vector<double>& p) {
  const std::size_t n = inst.models(), m = inst.buyers();
  std::vector<int> c(m, -1), best;
  std::vector<std::tuple<double, int, int>> best_key;
  while (true) {
    bool ok = true;
    std::vector<int> used(n, 0);
    std::vector<std::tuple<double, int, int>> key;
    for (std::size_t j = 0; j < m && ok; ++j) {
      if (c[j] < 0) {
        key.emplace_back(0.0, 0, 0);
        continue;
      }
      const double u = inst.willingness(c[j], j) - p[c[j]];
      if (u < 0 || used[c[j]]++) ok = false;
      key.emplace_back(u, 1, -c[j]);
    }
    if (ok && (best.empty() || key > best_key)) {
      best = c;
      best_key = key;
    }
    std::size_t j = 0;
    while (j < m && ++c[j] == static_cast<int>(n)) c[j++] = -1;
    if (j == m) break;
  }
  return Assignment{best};
}

TEST(BestResponse, MatchesExhaustiveOracle) {
  Rng rng(12);
  for (int t = 0; t < 300; ++t) {
    const auto inst = PricingInstance::random(1 + rng.below(4), 1 + rng.below(4), rng);
    std::vector<double> p;
    for (std::size_t i = 0; i < inst.models(); ++i) {
      p.push_back(inst.cost(i) + rng.uniform(0.0, 0.4));
    }
    const auto a = best_response(inst, p);
    EXPECT_EQ(a.choice, LexOracle(inst, p).choice) << "trial " << t;
    // No buyer gains by switching to a model still free when it was served.
    std::vector<char> taken(inst.models(), 0);
    for (std::size_t j = 0; j < inst.buyers(); ++j) {
      const double u = utility(inst, p, a, j);
      EXPECT_GE(u, 0.0);
      for (std::size_t i = 0; i < inst.models(); ++i) {
        if (!taken[i] && inst.willingness(i, j) >= p[i]) EXPECT_GE(u, inst.willingness(i, j) - p[i]);
      }
      if (a.choice[j] >= 0) taken[a.choice[j]] = 1;
    }
  }
}

TEST(GaSolve, SingleModelFindsWillingness) {
  const auto inst = Single(0.2, 0.6);  // C = 0.1, W = 0.6
  const auto bf = brute_force_solve(inst, 0.01);
  EXPECT_NEAR(bf.prices[0], 0.6, 0.01);
  const auto ga = ga_solve(inst, GaParams{});
  EXPECT_NEAR(ga.prices[0], bf.prices[0], 0.01);
  EXPECT_NEAR(ga.revenue, 0.5, 0.01);
  EXPECT_EQ(check_solution(inst, ga), "");
}

TEST(GaSolve, TwoByTwoWithinTwoPercentOfGrid) {
  const PricingInstance inst({{0.9, 0.7, 0.3}, {0.5, 0.6, 0.5}}, {{0.8, 0.4}, {0.3, 0.9}});
  const auto bf = brute_force_solve(inst, 0.01);
  const auto ga = ga_solve(inst, GaParams{});
  ASSERT_GT(bf.revenue, 0.0);
  EXPECT_GE(ga.revenue, 0.98 * bf.revenue);
  EXPECT_EQ(check_solution(inst, ga), "");
  EXPECT_EQ(check_solution(inst, bf), "");
}

TEST(GaSolve, DeterministicInSeed) {
  Rng rng(3);
  const auto inst = PricingInstance::random(3, 3, rng);
  GaParams gp;
  gp.iterations = 100;
  const auto a = ga_solve(inst, gp);
  const auto b = ga_solve(inst, gp);
  EXPECT_EQ(a.prices, b.prices);
  EXPECT_EQ(a.revenue, b.revenue);
}

TEST(GaSolve, UnsellableInstanceYieldsNoSales) {
  // C = 0.5 > W = 0.1
  const auto inst = Single(1.0, 0.1);
  const auto ga = ga_solve(inst, GaParams{});
  EXPECT_EQ(ga.revenue, 0.0);
  EXPECT_EQ(ga.y[0], 0);
  EXPECT_EQ(check_solution(inst, ga), "");
}

TEST(GaSolve, SmallCorpusAgainstGrid) {
  Rng rng(2024);
  for (int t = 0; t < 6; ++t) {
    const auto inst = PricingInstance::random(1 + rng.below(3), 1 + rng.below(3), rng);
    const auto bf = brute_force_solve(inst, 0.01);
    GaParams gp;
    gp.seed = t + 1;
    const auto ga = ga_solve(inst, gp);
    EXPECT_GE(ga.revenue, 0.95 * bf.revenue - 1e-12) << "instance " << t;
    EXPECT_EQ(check_solution(inst, ga), "");
  }
}

TEST(PriceCurveTest, IsotonicAboveCostAndClamped) {
  // Three sold points where the middle one violates monotonicity.
  const PricingInstance inst({{0.2, 0.2, 0.5}, {0.6, 0.6, 0.5}, {1.0, 1.0, 0.5}},
                             {{1, 1}, {1, 1}, {1, 1}});
  PricingSolution s = evaluate(inst, {0.08, 0.06, 0.40});
  ASSERT_EQ(s.y, (std::vector<int>{1, 1, 1}));
  const auto curve = PriceCurve::fit({inst}, {s});
  ASSERT_EQ(curve.table().size(), 3u);
  // PAV pools 0.08 and 0.06 to 0.07; the second point's cost is 0.15.
  EXPECT_NEAR(curve.table()[0].price, 0.07, 1e-12);
  EXPECT_NEAR(curve.table()[1].price, 0.15 + kCurveMargin, 1e-12);
  EXPECT_NEAR(curve.table()[2].price, 0.40, 1e-12);
  for (const auto& p : curve.table()) EXPECT_GT(p.price, p.cost);
  EXPECT_EQ(curve.price_at(0.0), curve.table()[0].price);
  EXPECT_EQ(curve.price_at(9.0), 0.40);
  const double mid = 0.5 * (curve.table()[1].q + curve.table()[2].q);
  EXPECT_NEAR(curve.price_at(mid), 0.5 * (curve.table()[1].price + 0.40), 1e-12);
  const auto back = PriceCurve::from_json(curve.to_json());
  EXPECT_EQ(back.price_at(mid), curve.price_at(mid));
}

TEST(PriceCurveTest, MonotoneOnSolvedCorpus) {
  Rng rng(77);
  std::vector<PricingInstance> insts;
  std::vector<PricingSolution> sols;
  GaParams gp;
  gp.iterations = 100;
  for (int t = 0; t < 8; ++t) {
    insts.push_back(PricingInstance::random(3, 3, rng));
    sols.push_back(ga_solve(insts.back(), gp));
  }
  const auto curve = PriceCurve::fit(insts, sols);
  ASSERT_FALSE(curve.empty());
  double prev = 0.0;
  for (double q = 0.0; q <= 0.6; q += 0.01) {
    EXPECT_GE(curve.price_at(q), prev);
    prev = curve.price_at(q);
  }
}

TEST(PriceFor, QualityFromMetrics) {
  bench::BenchmarkResult r;
  r.mce = 0.4;  // q_mCE = 0.6
  r.mfp = 0.8;  // q_mFP = 0.2
  EXPECT_NEAR(combined_quality(r), 0.5 * (0.5 * 0.6 + 0.5 * 0.2), 1e-15);
  const PriceCurve curve({{0.1, 0.2, 0.05}, {0.3, 0.6, 0.1}});
  EXPECT_NEAR(price_for(curve, r), 0.4, 1e-12);
}

TEST(InstanceFile, RoundTrip) {
  Rng rng(5);
  const auto inst = PricingInstance::random(2, 3, rng);
  const auto back = instance_from_json(instance_to_json(inst));
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.cost(i), inst.cost(i));
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(back.willingness(i, j), inst.willingness(i, j));
  }
  EXPECT_THROW(instance_from_json("{\"format\":\"x\"}"), std::invalid_argument);
}

}  // namespace
}  // namespace bazaar::pricing
