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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace bazaar::pricing {
namespace {

using json = nlohmann::ordered_json;

// Smallest step above cost the GA may price at.
constexpr double kPriceFloor = 1e-9;

}  // namespace

PricingInstance::PricingInstance(std::vector<ModelSpec> models, std::vector<BuyerSpec> buyers,
                                 double w1, double w2)
    : models_(std::move(models)), buyers_(std::move(buyers)), w1_(w1), w2_(w2) {
  if (models_.empty() || buyers_.empty()) throw std::invalid_argument("need N, M >= 1");
  if (std::abs(w1_ + w2_ - 1.0) > 1e-12) throw std::invalid_argument("w1 + w2 must be 1");
  for (std::size_t i = 0; i < models_.size(); ++i) {
    cost_.push_back(models_[i].cost * quality(i));
    if (!(cost_.back() > 0.0)) throw std::invalid_argument("C_i must be positive");
    for (const BuyerSpec& b : buyers_) {
      const double w = 0.5 * (b.l1 * models_[i].q_mce + b.l2 * models_[i].q_mfp);
      if (!(w > 0.0)) throw std::invalid_argument("W_ij must be positive");
      will_.push_back(w);
    }
  }
}

PricingInstance PricingInstance::random(std::size_t n, std::size_t m, Rng& rng, double c_max) {
  std::vector<ModelSpec> models(n);
  for (ModelSpec& s : models) {
    s.q_mce = rng.uniform(0.05, 1.0);
    s.q_mfp = rng.uniform(0.05, 1.0);
    s.cost = c_max * (1.0 - rng.uniform01());  // (0, c_max]
  }
  std::vector<BuyerSpec> buyers(m);
  for (BuyerSpec& b : buyers) {
    do b.l1 = rng.uniform01(); while (b.l1 == 0.0);
    do b.l2 = rng.uniform01(); while (b.l2 == 0.0);
  }
  return PricingInstance(std::move(models), std::move(buyers));
}

double PricingInstance::quality(std::size_t i) const {
  return 0.5 * (w1_ * models_[i].q_mce + w2_ * models_[i].q_mfp);
}

double PricingInstance::max_willingness(std::size_t i) const {
  double w = 0.0;
  for (std::size_t j = 0; j < buyers(); ++j) w = std::max(w, willingness(i, j));
  return w;
}

bool Assignment::sold(std::size_t i) const {
  return std::find(choice.begin(), choice.end(), static_cast<int>(i)) != choice.end();
}

Assignment best_response(const PricingInstance& inst, const std::vector<double>& prices) {
  const std::size_t n = inst.models();
  Assignment a;
  a.choice.assign(inst.buyers(), -1);
  std::vector<char> taken(n, 0);
  for (std::size_t j = 0; j < inst.buyers(); ++j) {
    int best = -1;
    double surplus = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double s = inst.willingness(i, j) - prices[i];
      if (s < 0.0) continue;
      if (best < 0 || s > surplus) {
        best = static_cast<int>(i);
        surplus = s;
      }
    }
    if (best >= 0) {
      a.choice[j] = best;
      taken[best] = 1;
    }
  }
  return a;
}

double revenue(const PricingInstance& inst, const std::vector<double>& prices,
               const Assignment& a) {
  double r = 0.0;
  for (int i : a.choice) {
    if (i >= 0) r += prices[i] - inst.cost(i);
  }
  return r;
}

double utility(const PricingInstance& inst, const std::vector<double>& prices, const Assignment& a,
               std::size_t buyer) {
  const int i = a.choice[buyer];
  return i < 0 ? 0.0 : inst.willingness(i, buyer) - prices[i];
}

PricingSolution evaluate(const PricingInstance& inst, std::vector<double> prices) {
  PricingSolution s;
  s.prices = std::move(prices);
  s.assignment = best_response(inst, s.prices);
  s.y.assign(inst.models(), 0);
  for (std::size_t i = 0; i < inst.models(); ++i) s.y[i] = s.assignment.sold(i) ? 1 : 0;
  s.revenue = revenue(inst, s.prices, s.assignment);
  for (std::size_t j = 0; j < inst.buyers(); ++j) {
    s.utilities.push_back(utility(inst, s.prices, s.assignment, j));
  }
  return s;
}

std::string check_solution(const PricingInstance& inst, const PricingSolution& s) {
  if (s.prices.size() != inst.models()) return "price vector size";
  for (std::size_t i = 0; i < inst.models(); ++i) {
    if (!(s.prices[i] > inst.cost(i))) return "p_i <= C_i for model " + std::to_string(i);
    int sales = 0;
    for (std::size_t j = 0; j < inst.buyers(); ++j) {
      if (s.assignment.x(i, j)) {
        ++sales;
        if (inst.willingness(i, j) < s.prices[i]) return "W < p on a sale";
      }
    }
    if (sales > 1) return "model sold twice";
    if (s.y[i] != (sales > 0 ? 1 : 0)) return "y does not match sales";
  }
  for (std::size_t j = 0; j < inst.buyers(); ++j) {
    if (s.assignment.choice[j] >= static_cast<int>(inst.models())) return "bad choice";
    if (s.utilities[j] < 0.0) return "negative utility";
  }
  return {};
}

PricingSolution ga_solve(const PricingInstance& inst, const GaParams& params) {
  const std::size_t n = inst.models();
  const std::size_t pop_size = std::max<std::size_t>(params.population, 2);
  Rng rng(params.seed);

  std::vector<double> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = inst.cost(i) + kPriceFloor;
    // A little headroom above every W lets a gene switch its model off.
    hi[i] = std::max(inst.max_willingness(i), lo[i]) + 0.01;
  }
  auto clamp = [&](std::size_t i, double p) { return std::clamp(p, lo[i], hi[i]); };

  using Genome = std::vector<double>;
  std::vector<Genome> pop(pop_size, Genome(n));
  for (std::size_t k = 0; k < pop_size; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      if (k == 0) {
        pop[k][i] = clamp(i, inst.max_willingness(i));
      } else if (rng.uniform01() < 0.5) {
        pop[k][i] = rng.uniform(lo[i], hi[i]);
      } else {
        const auto j = rng.below(inst.buyers() + 1);
        pop[k][i] = j == inst.buyers() ? hi[i] : clamp(i, inst.willingness(i, j));
      }
    }
  }

  auto fitness = [&](const Genome& g) { return revenue(inst, g, best_response(inst, g)); };
  std::vector<double> fit(pop_size);
  for (std::size_t k = 0; k < pop_size; ++k) fit[k] = fitness(pop[k]);

  Genome best = pop[0];
  double best_fit = fit[0];
  auto track = [&] {
    for (std::size_t k = 0; k < pop_size; ++k) {
      if (fit[k] > best_fit) {
        best_fit = fit[k];
        best = pop[k];
      }
    }
  };
  track();

  auto tournament = [&]() -> const Genome& {
    std::size_t win = rng.below(pop_size);
    for (std::size_t t = 1; t < params.tournament; ++t) {
      const std::size_t c = rng.below(pop_size);
      if (fit[c] > fit[win] || (fit[c] == fit[win] && c < win)) win = c;
    }
    return pop[win];
  };

  std::vector<std::size_t> order(pop_size);
  for (std::size_t gen = 0; gen < params.iterations; ++gen) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fit[a] > fit[b]; });
    std::vector<Genome> next;
    next.reserve(pop_size);
    for (std::size_t e = 0; e < std::min(params.elitism, pop_size); ++e) next.push_back(pop[order[e]]);
    while (next.size() < pop_size) {
      Genome a = tournament();
      Genome b = tournament();
      if (n > 1 && rng.uniform01() < params.crossover_rate) {
        const std::size_t cut = 1 + rng.below(n - 1);
        for (std::size_t i = cut; i < n; ++i) std::swap(a[i], b[i]);
      }
      for (Genome* child : {&a, &b}) {
        for (std::size_t i = 0; i < n; ++i) {
          if (rng.uniform01() < params.mutation_rate) {
            (*child)[i] =
                clamp(i, (*child)[i] + rng.normal() * params.mutation_sigma * (hi[i] - lo[i]));
          }
        }
        if (next.size() < pop_size) next.push_back(std::move(*child));
      }
    }
    pop = std::move(next);
    for (std::size_t k = 0; k < pop_size; ++k) fit[k] = fitness(pop[k]);
    track();
  }
  return evaluate(inst, best);
}

PricingSolution brute_force_solve(const PricingInstance& inst, double delta) {
  const std::size_t n = inst.models();
  std::vector<std::vector<double>> grid(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double top = inst.max_willingness(i);
    for (std::size_t k = 1;; ++k) {
      const double p = inst.cost(i) + static_cast<double>(k) * delta;
      if (p > top) {
        grid[i].push_back(p);  // first grid price nobody accepts
        break;
      }
      grid[i].push_back(p);
    }
  }
  std::vector<double> prices(n), best_prices;
  double best = -1.0;
  std::vector<std::size_t> idx(n, 0);
  while (true) {
    for (std::size_t i = 0; i < n; ++i) prices[i] = grid[i][idx[i]];
    const double r = revenue(inst, prices, best_response(inst, prices));
    if (r > best) {
      best = r;
      best_prices = prices;
    }
    std::size_t i = 0;
    while (i < n && ++idx[i] == grid[i].size()) idx[i++] = 0;
    if (i == n) break;
  }
  return evaluate(inst, best_prices);
}

PriceCurve::PriceCurve(std::vector<Point> table) : table_(std::move(table)) {
  for (std::size_t k = 1; k < table_.size(); ++k) {
    if (table_[k].q < table_[k - 1].q || table_[k].price < table_[k - 1].price) {
      throw std::invalid_argument("price curve must be nondecreasing");
    }
  }
}

PriceCurve PriceCurve::fit(const std::vector<PricingInstance>& instances,
                           const std::vector<PricingSolution>& solutions) {
  if (instances.size() != solutions.size()) throw std::invalid_argument("size mismatch");
  std::vector<Point> pts;
  for (std::size_t k = 0; k < instances.size(); ++k) {
    for (std::size_t i = 0; i < instances[k].models(); ++i) {
      if (solutions[k].y[i]) {
        pts.push_back({instances[k].quality(i), solutions[k].prices[i], instances[k].cost(i)});
      }
    }
  }
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.q < b.q || (a.q == b.q && a.price < b.price);
  });

  // Pool adjacent violators.
  struct Block {
    double sum;
    std::size_t count;
  };
  std::vector<Block> blocks;
  for (const Point& p : pts) {
    blocks.push_back({p.price, 1});
    while (blocks.size() > 1) {
      const Block& b = blocks.back();
      const Block& a = blocks[blocks.size() - 2];
      if (a.sum / a.count <= b.sum / b.count) break;
      Block merged{a.sum + b.sum, a.count + b.count};
      blocks.pop_back();
      blocks.back() = merged;
    }
  }
  std::size_t k = 0;
  for (const Block& b : blocks) {
    for (std::size_t c = 0; c < b.count; ++c) pts[k++].price = b.sum / b.count;
  }
  double run = 0.0;
  for (Point& p : pts) {
    p.price = std::max(p.price, p.cost + kCurveMargin);
    run = std::max(run, p.price);
    p.price = run;
  }
  return PriceCurve(std::move(pts));
}

double PriceCurve::price_at(double q) const {
  if (table_.empty()) throw std::logic_error("empty price curve");
  if (q <= table_.front().q) return table_.front().price;
  if (q >= table_.back().q) return table_.back().price;
  const auto it = std::upper_bound(table_.begin(), table_.end(), q,
                                   [](double v, const Point& p) { return v < p.q; });
  const Point& b = *it;
  const Point& a = *(it - 1);
  if (b.q == a.q) return b.price;
  return a.price + (b.price - a.price) * (q - a.q) / (b.q - a.q);
}

std::string PriceCurve::to_json() const {
  json j;
  j["format"] = "bazaar-price-curve";
  j["version"] = 1;
  json t = json::array();
  for (const Point& p : table_) t.push_back({{"q", p.q}, {"price", p.price}, {"cost", p.cost}});
  j["table"] = t;
  return j.dump(2);
}

PriceCurve PriceCurve::from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("format") != "bazaar-price-curve") throw std::invalid_argument("not a price curve");
  std::vector<Point> pts;
  for (const auto& p : j.at("table")) {
    pts.push_back({p.at("q").get<double>(), p.at("price").get<double>(), p.at("cost").get<double>()});
  }
  return PriceCurve(std::move(pts));
}

double combined_quality(const bench::BenchmarkResult& result, double w1, double w2) {
  const bench::QualityScores q = bench::quality_scores(result);
  return 0.5 * (w1 * q.mce + w2 * q.mfp);
}

double price_for(const PriceCurve& curve, const bench::BenchmarkResult& result, double w1,
                 double w2) {
  return curve.price_at(combined_quality(result, w1, w2));
}

std::string instance_to_json(const PricingInstance& inst) {
  json j;
  j["format"] = "bazaar-pricing-instance";
  j["version"] = 1;
  j["w1"] = inst.w1();
  j["w2"] = inst.w2();
  json ms = json::array();
  for (const ModelSpec& m : inst.model_specs()) {
    ms.push_back({{"q_mce", m.q_mce}, {"q_mfp", m.q_mfp}, {"cost", m.cost}});
  }
  json bs = json::array();
  for (const BuyerSpec& b : inst.buyer_specs()) bs.push_back({{"l1", b.l1}, {"l2", b.l2}});
  j["models"] = ms;
  j["buyers"] = bs;
  return j.dump(2);
}

PricingInstance instance_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("format") != "bazaar-pricing-instance") throw std::invalid_argument("not an instance");
  std::vector<ModelSpec> ms;
  for (const auto& m : j.at("models")) {
    ms.push_back({m.at("q_mce").get<double>(), m.at("q_mfp").get<double>(),
                  m.at("cost").get<double>()});
  }
  std::vector<BuyerSpec> bs;
  for (const auto& b : j.at("buyers")) bs.push_back({b.at("l1").get<double>(), b.at("l2").get<double>()});
  return PricingInstance(std::move(ms), std::move(bs), j.value("w1", 0.5), j.value("w2", 0.5));
}

std::string solution_to_json(const PricingInstance& inst, const PricingSolution& s) {
  json j;
  j["format"] = "bazaar-pricing-solution";
  j["version"] = 1;
  j["revenue"] = s.revenue;
  json ms = json::array();
  for (std::size_t i = 0; i < inst.models(); ++i) {
    ms.push_back({{"price", s.prices[i]}, {"cost", inst.cost(i)}, {"quality", inst.quality(i)},
                  {"sold", s.y[i] == 1}});
  }
  json bs = json::array();
  for (std::size_t b = 0; b < inst.buyers(); ++b) {
    bs.push_back({{"model", s.assignment.choice[b]}, {"utility", s.utilities[b]}});
  }
  j["models"] = ms;
  j["buyers"] = bs;
  return j.dump(2);
}

}  // namespace bazaar::pricing
