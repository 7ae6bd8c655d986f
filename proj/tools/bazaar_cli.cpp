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

// bazaar: command-line driver for the marketplace simulator.
//
// Every subcommand writes its artifacts under --out (default $BAZAAR_OUT,
// then ./bazaar-out), prints a summary report and exits 0 iff the run's own
// checks hold. Outputs depend only on the inputs and --seed.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bazaar/protocol.hpp"

namespace fs = std::filesystem;
using namespace bazaar;

namespace {

struct Options {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string strategy = "all";
  std::optional<std::size_t> ga_iters;
  std::string instance;
  std::string model;
  std::vector<std::uint32_t> hidden = {64};
  std::optional<double> accuracy;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

fs::path out_dir(const Options& o, const std::string& sub) {
  std::string base = o.out;
  if (base.empty()) {
    const char* env = std::getenv("BAZAAR_OUT");
    base = env != nullptr && *env != '\0' ? env : "bazaar-out";
  }
  fs::path dir = fs::path(base) / sub;
  fs::create_directories(dir);
  return dir;
}

// The scenario file when given, else `fallback(seed)`. --seed overrides the
// file's seed.
template <typename F>
protocol::Scenario load_scenario(const Options& o, F fallback) {
  protocol::Scenario s;
  if (!o.scenario.empty()) {
    s = protocol::Scenario::from_json(read_file(o.scenario));
    if (o.seed) s.seed = *o.seed;
  } else {
    s = fallback(o.seed.value_or(1));
  }
  if (o.ga_iters) s.pricing.ga_iterations = *o.ga_iters;
  return s;
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

int finish(const fs::path& dir, const std::string& report, bool ok) {
  write_file(dir / "summary.txt", report);
  std::cout << report << (ok ? "ok" : "FAILED") << "\n";
  return ok ? 0 : 1;
}

// Also saves the scenario that ran, ready to edit and pass back with --scenario.
void write_transcript(const fs::path& dir, const protocol::Market& m) {
  write_file(dir / "scenario.json", m.scenario().to_json());
  std::ofstream out(dir / "transcript.jsonl", std::ios::binary);
  m.export_jsonl(out);
}

bool all_fair(const protocol::Market& m) {
  for (const auto& f : m.fairness()) {
    if (!f.fair()) return false;
  }
  return m.money_conserved();
}

int gen_data(const Options& o) {
  const auto s = load_scenario(o, protocol::default_scenario);
  const fs::path dir = out_dir(o, "dataset");
  const auto suites = bench::generate_suites(s.suite, s.seed);
  bench::save_suites(suites, dir);
  std::ostringstream r;
  r << "dataset " << dir.string() << "\n"
    << "clean " << suites.clean.size() << "\n"
    << "corruption " << suites.corruption.records.size() << "\n"
    << "perturbation " << suites.perturbation.sequences.size() << "\n";
  const auto back = bench::load_suites(dir);
  const bool ok = back.clean == suites.clean &&
                  back.corruption.records == suites.corruption.records &&
                  back.perturbation.sequences == suites.perturbation.sequences;
  return finish(dir, r.str(), ok);
}

int gen_model(const Options& o) {
  const auto s = load_scenario(o, protocol::default_scenario);
  const fs::path dir = out_dir(o, "model");
  const auto train = bench::generate_training_set(s.suite, s.seed, 50);
  const auto eval = bench::generate_clean_set(s.suite, s.seed);
  const bench::ToyModel m =
      o.accuracy ? bench::fit_model_with_accuracy(train, eval, s.suite.classes, o.hidden,
                                                  *o.accuracy, s.seed)
                 : bench::fit_centroid_model(train, s.suite.classes, o.hidden, s.seed);
  m.save(dir / "model.bin");
  const double acc = 1.0 - bench::clean_error(m, eval);
  std::ostringstream r;
  r << "model " << (dir / "model.bin").string() << "\n"
    << "bytes " << m.serialize().size() << "\n"
    << "id " << to_hex(hash(m.serialize())) << "\n"
    << "clean accuracy " << fmt(acc) << "\n";
  const bool ok = !o.accuracy || std::llround(*o.accuracy * eval.size()) ==
                                     std::llround(acc * eval.size());
  return finish(dir, r.str(), ok);
}

int bench_cmd(const Options& o) {
  auto s = load_scenario(o, protocol::default_scenario);
  s.buyers.clear();
  if (!o.model.empty()) {
    protocol::SellerSpec one{"alice", 0, {}, std::nullopt, o.model, protocol::Strategy::kHonest,
                             0, 0};
    protocol::SellerSpec host{"carol", 0, {128}, 0.62, "", protocol::Strategy::kHonest, 0, 0};
    s.sellers = {one, host};
  }
  const fs::path dir = out_dir(o, "bench");
  protocol::Market m(s);
  m.run();
  write_transcript(dir, m);

  std::ostringstream r, csv;
  csv << "seller,metric,index,value\n";
  bool ok = m.money_conserved();
  for (const auto& spec : s.sellers) {
    const auto* rep = m.bm().report(m.model_id(spec.name));
    r << "seller " << spec.name << "\n";
    if (rep == nullptr || !rep->metrics) {
      const auto v = m.transcript().verdict_for("bm:" + spec.name);
      r << "  " << (v ? v->outcome : "no verdict") << "\n";
      ok = false;
      continue;
    }
    const auto& x = *rep->metrics;
    r << "  ce " << fmt(x.ce) << "\n";
    for (std::size_t c = 0; c < x.corruption_errors.size(); ++c) {
      r << "  CE " << bench::corruption_name(c) << " " << fmt(x.corruption_errors[c]) << "\n";
      csv << spec.name << ",CE," << bench::corruption_name(c) << "," << fmt(x.corruption_errors[c])
          << "\n";
    }
    r << "  mCE " << fmt(x.mce) << "\n"
      << "  relative mCE " << fmt(x.relative_mce) << "\n";
    for (std::size_t p = 0; p < x.flip_rates.size(); ++p) {
      r << "  FP " << bench::perturbation_name(p) << " " << fmt(x.flip_rates[p]) << "\n";
      csv << spec.name << ",FP," << bench::perturbation_name(p) << "," << fmt(x.flip_rates[p])
          << "\n";
    }
    r << "  mFP " << fmt(x.mfp) << "\n"
      << "  nature accuracy " << fmt(x.nature_accuracy()) << "\n"
      << "  " << (rep->for_sale ? "price " + std::to_string(rep->price) : "not for sale") << "\n";
    csv << spec.name << ",ce,," << fmt(x.ce) << "\n"
        << spec.name << ",mCE,," << fmt(x.mce) << "\n"
        << spec.name << ",relative_mCE,," << fmt(x.relative_mce) << "\n"
        << spec.name << ",mFP,," << fmt(x.mfp) << "\n";
  }
  write_file(dir / "metrics.csv", csv.str());
  return finish(dir, r.str(), ok);
}

int price_cmd(const Options& o) {
  const auto s = load_scenario(o, protocol::default_scenario);
  const fs::path dir = out_dir(o, "price");
  Rng rng(s.seed);
  const pricing::PricingInstance inst =
      o.instance.empty()
          ? pricing::PricingInstance::random(s.pricing.models, s.pricing.buyers, rng)
          : pricing::instance_from_json(read_file(o.instance));
  pricing::GaParams ga;
  ga.iterations = s.pricing.ga_iterations;
  ga.seed = s.seed;
  const auto sol = pricing::ga_solve(inst, ga);
  write_file(dir / "instance.json", pricing::instance_to_json(inst));
  write_file(dir / "solution.json", pricing::solution_to_json(inst, sol));

  std::ostringstream r;
  r << "models " << inst.models() << " buyers " << inst.buyers() << "\n";
  for (std::size_t i = 0; i < inst.models(); ++i) {
    r << "  p" << i << " " << fmt(sol.prices[i]) << " cost " << fmt(inst.cost(i))
      << (sol.y[i] ? " sold" : " unsold") << "\n";
  }
  r << "revenue " << fmt(sol.revenue) << "\n";
  const std::string violation = pricing::check_solution(inst, sol);
  bool ok = violation.empty();
  if (!ok) r << "violation " << violation << "\n";
  if (inst.models() <= 4 && inst.buyers() <= 4) {
    const auto best = pricing::brute_force_solve(inst);
    r << "grid optimum " << fmt(best.revenue) << "\n";
    if (best.revenue > 0) r << "ratio " << fmt(sol.revenue / best.revenue) << "\n";
  }

  const auto curve = protocol::calibrate_curve(s.pricing);
  std::ostringstream csv;
  csv << "q,price,cost\n";
  for (const auto& p : curve.table()) csv << fmt(p.q) << "," << fmt(p.price) << "," << fmt(p.cost) << "\n";
  write_file(dir / "curve.csv", csv.str());
  r << "curve points " << curve.table().size() << "\n";
  return finish(dir, r.str(), ok);
}

int run_market(const Options& o, const std::string& sub, protocol::Scenario s) {
  const fs::path dir = out_dir(o, sub);
  protocol::Market m(s);
  m.run();
  write_transcript(dir, m);
  std::ostringstream r;
  r << m.summary();
  for (const auto& f : m.fairness()) {
    r << "fairness " << f.buyer << " <- " << f.seller << ": paid "
      << (f.seller_paid ? "yes" : "no") << ", model " << (f.buyer_has_model ? "yes" : "no")
      << "\n";
  }
  return finish(dir, r.str(), all_fair(m));
}

int trade(const Options& o) {
  return run_market(o, "trade", load_scenario(o, [](std::uint64_t seed) {
                      return protocol::attack_scenario(protocol::Strategy::kHonest, seed);
                    }));
}

int simulate(const Options& o) {
  return run_market(o, "simulate", load_scenario(o, protocol::default_scenario));
}

int attack(const Options& o) {
  const fs::path dir = out_dir(o, "attack");
  std::vector<protocol::Strategy> strategies;
  if (o.strategy == "all") {
    strategies = protocol::adversary_strategies();
  } else {
    strategies = {protocol::strategy_from_string(o.strategy)};
  }
  const auto cells = protocol::run_attack_suite(strategies, {o.seed.value_or(1)});
  std::ostringstream r;
  bool ok = true;
  for (const auto& c : cells) {
    r << protocol::to_string(c.strategy) << " seed " << c.seed << "\n"
      << "  benchmark: " << c.bm_outcome << "\n"
      << "  exchange: " << c.me_outcome << "\n"
      << "  seller paid " << (c.seller_paid ? "yes" : "no") << ", buyer has model "
      << (c.buyer_has_model ? "yes" : "no") << ", money conserved "
      << (c.conserved ? "yes" : "no") << "\n";
    ok = ok && c.clean();
  }
  return finish(dir, r.str(), ok);
}

int account(const Options& o) {
  const auto s = load_scenario(o, [](std::uint64_t seed) {
    return protocol::attack_scenario(protocol::Strategy::kHonest, seed);
  });
  if (s.buyers.empty()) throw std::runtime_error("scenario has no buyer");
  const fs::path dir = out_dir(o, "account");
  protocol::Market m(s);
  m.run();
  write_transcript(dir, m);
  const auto& buyer = s.buyers.front();
  std::ostringstream r, csv;
  const auto sale = m.sale_of(buyer.name);
  if (!sale) {
    r << "no sale for " << buyer.name << "\n";
    return finish(dir, r.str(), false);
  }
  const auto z = m.sizes(buyer.target);
  r << "|prog| " << z.prog << " |outp| " << z.outp << " |model| " << z.model << " |samples| "
    << z.samples << " |AEnc| " << z.aenc << "\n";
  csv << "name,flow,party,kind,expected,actual\n";
  bool ok = true;
  for (const auto& row : protocol::check_accounting(m.transcript(), buyer.target, buyer.name,
                                                   *sale, z)) {
    r << (row.ok() ? "  ok   " : "  FAIL ") << row.name << " expected " << row.expected
      << " actual " << row.actual << "\n";
    csv << row.name << "," << row.flow << "," << row.party << ","
        << (row.space ? "space" : "comm") << "," << row.expected << "," << row.actual << "\n";
    ok = ok && row.ok();
  }
  write_file(dir / "accounting.csv", csv.str());
  return finish(dir, r.str(), ok);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bazaar: benchmark, price and trade models on a simulated chain"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* c) {
    c->add_option("--scenario", o.scenario, "scenario file (JSON)");
    c->add_option("--seed", o.seed, "seed");
    c->add_option("--out", o.out, "output directory (default $BAZAAR_OUT or bazaar-out)");
    c->add_option("--ga-iters", o.ga_iters, "GA iterations for the price curve");
  };

  struct Cmd {
    const char* name;
    const char* help;
    int (*run)(const Options&);
  };
  const Cmd cmds[] = {
      {"gen-data", "generate and save the benchmark suites", gen_data},
      {"gen-model", "fit a toy model", gen_model},
      {"bench", "benchmark the scenario's models on chain", bench_cmd},
      {"price", "solve a pricing instance and fit the price curve", price_cmd},
      {"trade", "one seller, one buyer: benchmark and exchange", trade},
      {"simulate", "full market run", simulate},
      {"attack", "run adversary strategies", attack},
      {"account", "check per-party byte totals", account},
  };
  int (*chosen)(const Options&) = nullptr;
  for (const Cmd& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    common(sub);
    if (std::string(c.name) == "gen-model") {
      sub->add_option("--hidden", o.hidden, "hidden layer sizes")->expected(1, -1);
      sub->add_option("--accuracy", o.accuracy, "exact clean accuracy");
    } else if (std::string(c.name) == "bench") {
      sub->add_option("--model", o.model, "model file to benchmark");
    } else if (std::string(c.name) == "price") {
      sub->add_option("--instance", o.instance, "instance file (JSON)");
    } else if (std::string(c.name) == "attack") {
      sub->add_option("--strategy", o.strategy, "strategy name or all");
    }
    sub->callback([&chosen, run = c.run] { chosen = run; });
  }

  CLI11_PARSE(app, argc, argv);
  try {
    return chosen(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
