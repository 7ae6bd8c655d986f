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

// Bi-level model pricing.
//
// Up level: the marketplace picks prices p to maximise revenue
//   R = sum_j sum_i p_i x_ij - sum_i C_i y_i.
// Low level: buyers respond to fixed prices. Buyers are served in index
// order; each takes the unsold model with the largest surplus W_ij - p_i
// among those with W_ij >= p_i (ties to the lowest model index), or nothing.
// A model sells at most once and y_i = 1 exactly when it sold.

#ifndef BAZAAR_PRICING_HPP_
#define BAZAAR_PRICING_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "bazaar/benchmark.hpp"
#include "bazaar/rng.hpp"

namespace bazaar::pricing {

struct ModelSpec {
  double q_mce = 0.0;
  double q_mfp = 0.0;
  double cost = 0.0;  // marginal cost c in (0, c_max]
};

struct BuyerSpec {
  double l1 = 0.0;
  double l2 = 0.0;
};

class PricingInstance {
 public:
  PricingInstance(std::vector<ModelSpec> models, std::vector<BuyerSpec> buyers, double w1 = 0.5,
                  double w2 = 0.5);

  /// N models with q in [0.05, 1], c in (0, c_max]; M buyers with l ~ U(0,1).
  static PricingInstance random(std::size_t n, std::size_t m, Rng& rng, double c_max = 1.0);

  std::size_t models() const { return models_.size(); }
  std::size_t buyers() const { return buyers_.size(); }
  const std::vector<ModelSpec>& model_specs() const { return models_; }
  const std::vector<BuyerSpec>& buyer_specs() const { return buyers_; }
  double w1() const { return w1_; }
  double w2() const { return w2_; }

  /// q_i = 1/2 (w1 q_mCE + w2 q_mFP)
  double quality(std::size_t i) const;
  /// C_i = c_i q_i
  double cost(std::size_t i) const { return cost_[i]; }
  /// W_ij = 1/2 (l1_j q_mCE,i + l2_j q_mFP,i)
  double willingness(std::size_t i, std::size_t j) const { return will_[i * buyers() + j]; }
  double max_willingness(std::size_t i) const;

 private:
  std::vector<ModelSpec> models_;
  std::vector<BuyerSpec> buyers_;
  double w1_;
  double w2_;
  std::vector<double> cost_;
  std::vector<double> will_;
};

/// choice[j] is the model buyer j bought, or -1.
struct Assignment {
  std::vector<int> choice;
  bool sold(std::size_t i) const;
  int x(std::size_t i, std::size_t j) const { return choice[j] == static_cast<int>(i) ? 1 : 0; }
};

struct PricingSolution {
  std::vector<double> prices;
  Assignment assignment;
  std::vector<int> y;
  double revenue = 0.0;
  std::vector<double> utilities;
};

Assignment best_response(const PricingInstance& inst, const std::vector<double>& prices);
double revenue(const PricingInstance& inst, const std::vector<double>& prices, const Assignment& a);
double utility(const PricingInstance& inst, const std::vector<double>& prices, const Assignment& a,
               std::size_t buyer);
/// Fills assignment, y, revenue and utilities for the given prices.
PricingSolution evaluate(const PricingInstance& inst, std::vector<double> prices);

/// Checks p_i > C_i, x_ij = 1 => W_ij >= p_i, one model per buyer, one sale
/// per model, y closure. Returns an empty string when all hold.
std::string check_solution(const PricingInstance& inst, const PricingSolution& s);

struct GaParams {
  std::size_t population = 50;
  std::size_t tournament = 3;
  double crossover_rate = 0.8;
  double mutation_rate = 0.05;
  double mutation_sigma = 0.05;  // fraction of each gene's range
  std::size_t elitism = 2;
  std::size_t iterations = 500;
  std::uint64_t seed = 1;
};

PricingSolution ga_solve(const PricingInstance& inst, const GaParams& params);

/// Exhaustive search over p_i in {C_i + k delta} up to max_j W_ij, plus one
/// price per model that no buyer accepts.
PricingSolution brute_force_solve(const PricingInstance& inst, double delta = 0.01);

/// Monotone piecewise-linear map from quality to price.
class PriceCurve {
 public:
  struct Point {
    double q = 0.0;
    double price = 0.0;
    double cost = 0.0;
  };

  PriceCurve() = default;
  explicit PriceCurve(std::vector<Point> table);

  /// Isotonic (pool-adjacent-violators) fit over the sold models of every
  /// solution, lifted above each point's cost and made nondecreasing.
  static PriceCurve fit(const std::vector<PricingInstance>& instances,
                        const std::vector<PricingSolution>& solutions);

  /// Linear interpolation, clamped to the end points.
  double price_at(double q) const;
  const std::vector<Point>& table() const { return table_; }
  bool empty() const { return table_.empty(); }

  std::string to_json() const;
  static PriceCurve from_json(const std::string& text);

 private:
  std::vector<Point> table_;
};

inline constexpr double kCurveMargin = 1e-6;

/// q = 1/2 (w1 q_mCE + w2 q_mFP) from a benchmark result.
double combined_quality(const bench::BenchmarkResult& result, double w1 = 0.5, double w2 = 0.5);
double price_for(const PriceCurve& curve, const bench::BenchmarkResult& result, double w1 = 0.5,
                 double w2 = 0.5);

/// Structured-text (JSON) instance and solution files.
std::string instance_to_json(const PricingInstance& inst);
PricingInstance instance_from_json(const std::string& text);
std::string solution_to_json(const PricingInstance& inst, const PricingSolution& s);

}  // namespace bazaar::pricing

#endif  // BAZAAR_PRICING_HPP_
