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

#include "bazaar/protocol.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace bazaar::protocol {

using json = nlohmann::ordered_json;
using chain::Address;
using chain::Round;

namespace {

constexpr std::pair<Strategy, const char*> kStrategyNames[] = {
    {Strategy::kHonest, "honest"},
    {Strategy::kForgeModel, "forge_model"},
    {Strategy::kRollback, "rollback"},
    {Strategy::kTamperSamples, "tamper_samples"},
    {Strategy::kWithholdKey, "withhold_key"},
    {Strategy::kSwapKey, "swap_key"},
    {Strategy::kRepudiate, "repudiate"},
};

constexpr std::uint64_t kIdBytes = Digest::kSize;
constexpr std::uint64_t kSigBytes = Signature::kSize;
constexpr std::uint64_t kPkBytes = PublicKey::kSize;

std::uint64_t seed_of(Rng rng) { return rng.next_u64(); }

}  // namespace

const char* to_string(Strategy s) {
  for (const auto& [k, name] : kStrategyNames) {
    if (k == s) return name;
  }
  return "?";
}

Strategy strategy_from_string(const std::string& name) {
  for (const auto& [k, n] : kStrategyNames) {
    if (name == n) return k;
  }
  throw std::invalid_argument("unknown strategy: " + name);
}

std::vector<Strategy> adversary_strategies() {
  return {Strategy::kForgeModel, Strategy::kRollback, Strategy::kTamperSamples,
          Strategy::kWithholdKey, Strategy::kSwapKey,  Strategy::kRepudiate};
}

// --- scenario ---------------------------------------------------------------

std::string Scenario::to_json() const {
  json j;
  j["format"] = "bazaar-scenario";
  j["version"] = 1;
  j["seed"] = seed;
  j["suite"] = {{"dim", suite.dim},
                {"classes", suite.classes},
                {"per_class", suite.per_class},
                {"corruption_types", suite.corruption_types},
                {"perturbation_types", suite.perturbation_types},
                {"sequences_per_type", suite.sequences_per_type},
                {"frames", suite.frames},
                {"class_noise", suite.class_noise}};
  j["samples"] = {{"corruption_bases", samples.corruption_bases},
                  {"sequences_per_type", samples.sequences_per_type},
                  {"clean", samples.clean}};
  j["memory_cap"] = memory_cap;
  j["deadlines"] = {{"t1", deadlines.t1}, {"t2", deadlines.t2}, {"t3", deadlines.t3},
                    {"t1_prime", deadlines.t1_prime}};
  j["gate"] = gate;
  j["relay_fee"] = relay_fee;
  j["fee_pool"] = fee_pool;
  j["pricing"] = {{"instances", pricing.instances}, {"models", pricing.models},
                  {"buyers", pricing.buyers}, {"ga_iterations", pricing.ga_iterations},
                  {"seed", pricing.seed}};
  j["sellers"] = json::array();
  for (const SellerSpec& s : sellers) {
    json o = {{"name", s.name}, {"balance", s.balance}, {"hidden", s.hidden}};
    if (s.accuracy) o["accuracy"] = *s.accuracy;
    if (!s.model_path.empty()) o["model_path"] = s.model_path;
    o["strategy"] = to_string(s.strategy);
    o["key_delay"] = s.key_delay;
    o["tamper_offset"] = s.tamper_offset;
    j["sellers"].push_back(o);
  }
  j["buyers"] = json::array();
  for (const BuyerSpec& b : buyers) {
    json o = {{"name", b.name}, {"balance", b.balance}, {"target", b.target}};
    if (b.deposit) o["deposit"] = *b.deposit;
    o["strategy"] = to_string(b.strategy);
    j["buyers"].push_back(o);
  }
  j["max_rounds"] = max_rounds;
  return j.dump(2) + "\n";
}

Scenario Scenario::from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.value("format", "") != "bazaar-scenario") {
    throw std::invalid_argument("not a bazaar-scenario file");
  }
  Scenario s;
  s.seed = j.value("seed", s.seed);
  if (j.contains("suite")) {
    const json& c = j["suite"];
    s.suite.dim = c.value("dim", s.suite.dim);
    s.suite.classes = c.value("classes", s.suite.classes);
    s.suite.per_class = c.value("per_class", s.suite.per_class);
    s.suite.corruption_types = c.value("corruption_types", s.suite.corruption_types);
    s.suite.perturbation_types = c.value("perturbation_types", s.suite.perturbation_types);
    s.suite.sequences_per_type = c.value("sequences_per_type", s.suite.sequences_per_type);
    s.suite.frames = c.value("frames", s.suite.frames);
    s.suite.class_noise = c.value("class_noise", s.suite.class_noise);
  }
  if (j.contains("samples")) {
    const json& c = j["samples"];
    s.samples.corruption_bases = c.value("corruption_bases", s.samples.corruption_bases);
    s.samples.sequences_per_type = c.value("sequences_per_type", s.samples.sequences_per_type);
    s.samples.clean = c.value("clean", s.samples.clean);
  }
  s.memory_cap = j.value("memory_cap", s.memory_cap);
  if (j.contains("deadlines")) {
    const json& c = j["deadlines"];
    s.deadlines.t1 = c.value("t1", s.deadlines.t1);
    s.deadlines.t2 = c.value("t2", s.deadlines.t2);
    s.deadlines.t3 = c.value("t3", s.deadlines.t3);
    s.deadlines.t1_prime = c.value("t1_prime", s.deadlines.t1_prime);
  }
  s.gate = j.value("gate", s.gate);
  s.relay_fee = j.value("relay_fee", s.relay_fee);
  s.fee_pool = j.value("fee_pool", s.fee_pool);
  if (j.contains("pricing")) {
    const json& c = j["pricing"];
    s.pricing.instances = c.value("instances", s.pricing.instances);
    s.pricing.models = c.value("models", s.pricing.models);
    s.pricing.buyers = c.value("buyers", s.pricing.buyers);
    s.pricing.ga_iterations = c.value("ga_iterations", s.pricing.ga_iterations);
    s.pricing.seed = c.value("seed", s.pricing.seed);
  }
  for (const json& o : j.value("sellers", json::array())) {
    SellerSpec sp;
    sp.name = o.at("name").get<std::string>();
    sp.balance = o.value("balance", sp.balance);
    if (o.contains("hidden")) sp.hidden = o["hidden"].get<std::vector<std::uint32_t>>();
    if (o.contains("accuracy") && !o["accuracy"].is_null()) sp.accuracy = o["accuracy"].get<double>();
    sp.model_path = o.value("model_path", "");
    sp.strategy = strategy_from_string(o.value("strategy", "honest"));
    sp.key_delay = o.value("key_delay", sp.key_delay);
    sp.tamper_offset = o.value("tamper_offset", sp.tamper_offset);
    s.sellers.push_back(std::move(sp));
  }
  for (const json& o : j.value("buyers", json::array())) {
    BuyerSpec bp;
    bp.name = o.at("name").get<std::string>();
    bp.balance = o.value("balance", bp.balance);
    bp.target = o.at("target").get<std::string>();
    if (o.contains("deposit") && !o["deposit"].is_null()) bp.deposit = o["deposit"].get<chain::Amount>();
    bp.strategy = strategy_from_string(o.value("strategy", "honest"));
    s.buyers.push_back(std::move(bp));
  }
  s.max_rounds = j.value("max_rounds", s.max_rounds);
  return s;
}

Scenario default_scenario(std::uint64_t seed) {
  Scenario s;
  s.seed = seed;
  s.sellers = {{"alice", 0, {128}, 0.82, "", Strategy::kHonest, 0, 0},
               {"carol", 0, {128}, 0.74, "", Strategy::kHonest, 0, 0},
               {"dave", 0, {64}, 0.66, "", Strategy::kHonest, 0, 0}};
  s.buyers = {{"bob", 100000, "alice", std::nullopt, Strategy::kHonest},
              {"erin", 100000, "carol", std::nullopt, Strategy::kHonest}};
  return s;
}

Scenario attack_scenario(Strategy strategy, std::uint64_t seed) {
  Scenario s;
  s.seed = seed;
  s.suite.dim = 16;
  s.suite.classes = 4;
  s.suite.per_class = 25;
  s.samples = {25, 20, 0};
  s.pricing.instances = 6;
  s.pricing.ga_iterations = 100;
  SellerSpec alice{"alice", 0, {128}, 0.65, "", Strategy::kHonest, 0, 0};
  SellerSpec carol{"carol", 0, {128}, 0.62, "", Strategy::kHonest, 0, 0};
  BuyerSpec bob{"bob", 100000, "alice", std::nullopt, Strategy::kHonest};
  if (strategy == Strategy::kRepudiate) {
    bob.strategy = strategy;
  } else {
    alice.strategy = strategy;
  }
  alice.tamper_offset = Rng(seed).fork("tamper").next_u64();
  s.sellers = {alice, carol};
  s.buyers = {bob};
  return s;
}

// --- storage and transcript ---------------------------------------------------

Digest BlobStore::put(Bytes blob) {
  const Digest addr = hash(blob);
  blobs_.emplace(addr, std::move(blob));
  return addr;
}

const Bytes* BlobStore::get(const Digest& addr) const {
  auto it = blobs_.find(addr);
  return it == blobs_.end() ? nullptr : &it->second;
}

void Transcript::send(Round round, const std::string& flow, const std::string& from,
                      const std::string& to, const std::string& item, std::uint64_t bytes,
                      bool accounted, bool forwarded) {
  items_.push_back({round, flow, from, to, item, bytes, accounted, forwarded});
}

void Transcript::store(const std::string& flow, const std::string& party, const std::string& item,
                       std::uint64_t bytes, bool accounted) {
  stores_.push_back({flow, party, item, bytes, accounted});
}

void Transcript::verdict(const std::string& flow, const std::string& outcome, Round round) {
  verdicts_.push_back({flow, outcome, round});
}

void Transcript::note(Round round, const std::string& party, const std::string& text) {
  notes_.push_back({round, party, text});
}

std::optional<Verdict> Transcript::verdict_for(const std::string& flow) const {
  for (auto it = verdicts_.rbegin(); it != verdicts_.rend(); ++it) {
    if (it->flow == flow) return *it;
  }
  return std::nullopt;
}

void Transcript::export_jsonl(std::ostream& out) const {
  for (const TranscriptItem& i : items_) {
    json j = {{"type", "send"},       {"T", i.round},          {"flow", i.flow},
              {"from", i.from},       {"to", i.to},            {"item", i.item},
              {"bytes", i.bytes},     {"accounted", i.accounted}, {"forwarded", i.forwarded}};
    out << j.dump() << "\n";
  }
  for (const StoreItem& s : stores_) {
    json j = {{"type", "store"}, {"flow", s.flow},   {"party", s.party},
              {"item", s.item},  {"bytes", s.bytes}, {"accounted", s.accounted}};
    out << j.dump() << "\n";
  }
  for (const Note& n : notes_) {
    json j = {{"type", "note"}, {"T", n.round}, {"party", n.party}, {"text", n.text}};
    out << j.dump() << "\n";
  }
  for (const Verdict& v : verdicts_) {
    json j = {{"type", "verdict"}, {"T", v.round}, {"flow", v.flow}, {"outcome", v.outcome}};
    out << j.dump() << "\n";
  }
}

std::map<std::string, std::map<std::string, Totals>> account_bytes(const Transcript& t) {
  std::map<std::string, std::map<std::string, Totals>> out;
  for (const TranscriptItem& i : t.items()) {
    if (!i.accounted) continue;
    if (!i.forwarded) out[i.flow][i.from].comm += i.bytes;
    out[i.flow][i.to].comm += i.bytes;
  }
  for (const StoreItem& s : t.stores()) {
    if (s.accounted) out[s.flow][s.party].space += s.bytes;
  }
  return out;
}

std::vector<AccountingRow> check_accounting(const Transcript& t, const std::string& seller,
                                            const std::string& buyer, std::uint64_t sale_id,
                                            const Sizes& z) {
  const auto totals = account_bytes(t);
  auto get = [&](const std::string& flow, const std::string& party) {
    auto f = totals.find(flow);
    if (f == totals.end()) return Totals{};
    auto p = f->second.find(party);
    return p == f->second.end() ? Totals{} : p->second;
  };
  const std::string bm = "bm:" + seller;
  const std::string me = "me:" + std::to_string(sale_id);
  const std::string sp = "seller:" + seller;
  const std::string bp = "buyer:" + buyer;
  const std::uint64_t h = kIdBytes, s = kSigBytes, pk = kPkBytes;

  std::vector<AccountingRow> rows = {
      {"BM-Contract space", bm, "bm-contract", true, 4 * h + z.prog + z.outp, 0},
      {"BM-Contract communication", bm, "bm-contract", false, z.prog + 2 * h + 4 * s + z.outp, 0},
      {"Seller BM space", bm, sp, true, h + z.samples + z.model + z.prog + z.outp, 0},
      {"Seller BM communication", bm, sp, false,
       z.prog + 2 * h + 3 * s + z.model + z.samples + z.outp, 0},
      {"Seller ME space", me, sp, true, 2 * h + pk + z.aenc + s, 0},
      {"Seller ME communication", me, sp, false, pk + 2 * h + s + (pk + z.aenc), 0},
      {"Buyer communication", me, bp, false, h + h + pk + s, 0},
      {"BE-Contract space", me, "be-contract", true, 2 * h + pk + z.aenc + 2 * s, 0},
      {"BE-Contract communication", me, "be-contract", false, pk + 2 * h + s + s + pk + z.aenc, 0},
  };
  for (AccountingRow& r : rows) {
    const Totals tot = get(r.flow, r.party);
    r.actual = r.space ? tot.space : tot.comm;
  }
  return rows;
}

// --- parties ------------------------------------------------------------------

struct SellerState {
  SellerState(SellerSpec sp, KeyPair key, Rng r)
      : spec(std::move(sp)), kp(std::move(key)), rng(std::move(r)) {
    party = "seller:" + spec.name;
    flow = "bm:" + spec.name;
  }

  SellerSpec spec;
  std::string party;
  std::string flow;
  KeyPair kp;
  Rng rng;
  Address addr;
  Bytes model;
  SymmetricKey k_m;
  Coin r_m, r_k;
  Digest addr_m, id_m;
  std::unique_ptr<tee::SetupEnclave> setup;
  std::unique_ptr<tee::BenchmarkEnclave> bench;
  std::unique_ptr<tee::MonetizationEnclave> keys;
  std::unique_ptr<relay::RelayEnclave> relay;

  bool published = false;
  bool bm_terminal = false;
  std::optional<bench::SampleBundle> samples;
  std::array<Bytes, 3> sections;
  std::array<Digest, 3> digests;
  int next_step = 0;
  std::optional<tee::SealedState> sealed;
  std::string enclave_error;

  struct KeyJob {
    std::uint64_t sale = 0;
    Round due = 0;
    PublicKey pk_b;
    Commitment com_k;
  };
  std::vector<KeyJob> key_jobs;
  std::set<std::uint64_t> served;
};

struct BuyerState {
  BuyerState(BuyerSpec sp, KeyPair key, KeyPair b)
      : spec(std::move(sp)), kp(std::move(key)), box(std::move(b)) {
    party = "buyer:" + spec.name;
    flow = "buy:" + spec.name;
  }

  enum class Phase { kWaiting, kInitSent, kRequested, kDone };

  BuyerSpec spec;
  std::string party;
  std::string flow;
  KeyPair kp;
  KeyPair box;  // pk_B and its secret half
  Address addr;
  Phase phase = Phase::kWaiting;
  std::optional<Digest> init_tx;
  std::optional<std::uint64_t> sale;
  std::optional<Bytes> recovered;
};

// --- market -------------------------------------------------------------------

Market::Market(Scenario scenario) : scenario_(std::move(scenario)), rng_(scenario_.seed) {
  setup();
}

Market::~Market() = default;

const contracts::BMContract& Market::bm() const {
  return ledger_.contract<contracts::BMContract>(bm_addr_);
}

const contracts::BEContract& Market::be() const {
  return ledger_.contract<contracts::BEContract>(be_addr_);
}

pricing::PriceCurve calibrate_curve(const PricingSetup& setup) {
  Rng rng(setup.seed);
  std::vector<pricing::PricingInstance> insts;
  std::vector<pricing::PricingSolution> sols;
  for (std::size_t t = 0; t < setup.instances; ++t) {
    insts.push_back(pricing::PricingInstance::random(setup.models, setup.buyers, rng));
    pricing::GaParams gp;
    gp.iterations = setup.ga_iterations;
    gp.seed = setup.seed * 1000 + t + 1;
    sols.push_back(pricing::ga_solve(insts.back(), gp));
  }
  return pricing::PriceCurve::fit(insts, sols);
}

void Market::setup() {
  const bench::SuiteConfig& cfg = scenario_.suite;
  suites_ = bench::generate_suites(cfg, scenario_.seed);
  server_.publish(relay::kDefaultUrl, suites_);
  if (scenario_.samples.clean == 0) {
    scenario_.samples.clean = static_cast<std::uint32_t>(suites_.clean.size());
  }
  curve_ = calibrate_curve(scenario_.pricing);

  tee::BenchmarkProgram prog;
  prog.params = scenario_.samples;
  prog.corruption_types = cfg.corruption_types;
  prog.perturbation_types = cfg.perturbation_types;
  prog.memory_cap = scenario_.memory_cap;
  prog.baseline_model = bench::baseline_model(cfg, scenario_.seed).serialize();

  Rng pool_rng = rng_.fork("fee-pool");
  const KeyPair pool = generate_keypair(pool_rng);
  pool_ = ledger_.create_account(pool.pk, scenario_.fee_pool);
  names_[pool_] = "fee-pool";
  registry_ = ledger_.deploy(std::make_unique<tee::CounterRegistry>());
  contracts::BmConfig bc{prog.serialize(), curve_, scenario_.deadlines, scenario_.gate,
                         scenario_.relay_fee, pool_};
  bm_addr_ = ledger_.deploy(std::make_unique<contracts::BMContract>(std::move(bc)));
  be_addr_ = ledger_.deploy(std::make_unique<contracts::BEContract>(
      ledger_.contract<contracts::BMContract>(bm_addr_), scenario_.deadlines));
  names_[registry_] = "registry";
  names_[bm_addr_] = "bm-contract";
  names_[be_addr_] = "be-contract";

  auto enclave_account = [&](const PublicKey& pk, const std::string& name) {
    const Address a = ledger_.create_account(pk, 0);
    ledger_.bind_enclave(a, pk);
    names_[a] = name;
  };

  std::set<std::string> seen;
  for (const SellerSpec& spec : scenario_.sellers) {
    if (!seen.insert(spec.name).second) throw std::invalid_argument("duplicate party " + spec.name);
    Rng r = rng_.fork("seller:" + spec.name);
    KeyPair kp = generate_keypair(r);
    auto s = std::make_unique<SellerState>(spec, std::move(kp), r.fork("coins"));
    s->addr = ledger_.create_account(s->kp.pk, spec.balance);
    names_[s->addr] = s->party;

    bench::ToyModel model;
    if (!spec.model_path.empty()) {
      model = bench::ToyModel::load(spec.model_path);
    } else {
      // Same seed as the suites: the class prototypes are shared, the split differs.
      const auto train = bench::generate_training_set(cfg, scenario_.seed, 50);
      if (spec.accuracy) {
        model = bench::fit_model_with_accuracy(train, suites_.clean, cfg.classes, spec.hidden,
                                               *spec.accuracy, seed_of(r.fork("model")));
      } else {
        model = bench::fit_centroid_model(train, cfg.classes, spec.hidden, seed_of(r.fork("model")));
      }
    }
    s->model = model.serialize();
    s->k_m = s->rng.draw<SymmetricKey>();
    s->r_m = s->rng.draw<Coin>();
    s->r_k = s->rng.draw<Coin>();
    s->addr_m = blobs_.put(enc(s->k_m, s->model, s->rng));
    s->id_m = contracts::model_id(s->addr_m, s->addr);

    s->setup = std::make_unique<tee::SetupEnclave>(r.fork("setup").draw<KeySeed>());
    s->bench = std::make_unique<tee::BenchmarkEnclave>(r.fork("bench").draw<KeySeed>(), ledger_,
                                                       registry_, bm_addr_);
    s->keys = std::make_unique<tee::MonetizationEnclave>(r.fork("keys").draw<KeySeed>());
    s->relay = std::make_unique<relay::RelayEnclave>(r.fork("relay").draw<KeySeed>());
    enclave_account(s->setup->pk(), "setup-enclave:" + spec.name);
    enclave_account(s->bench->pk(), "bm-enclave:" + spec.name);
    enclave_account(s->keys->pk(), "me-enclave:" + spec.name);
    enclave_account(s->relay->pk(), "relay:" + spec.name);
    s->keys->install(s->addr);
    sellers_.push_back(std::move(s));
  }
  for (const BuyerSpec& spec : scenario_.buyers) {
    if (!seen.insert(spec.name).second) throw std::invalid_argument("duplicate party " + spec.name);
    seller(spec.target);  // throws on an unknown target
    Rng r = rng_.fork("buyer:" + spec.name);
    KeyPair kp = generate_keypair(r);
    Rng box_rng = r.fork("box");
    KeyPair box = generate_keypair(box_rng);
    auto b = std::make_unique<BuyerState>(spec, std::move(kp), std::move(box));
    b->addr = ledger_.create_account(b->kp.pk, spec.balance);
    names_[b->addr] = b->party;
    buyers_.push_back(std::move(b));
  }
}

SellerState& Market::seller(const std::string& name) {
  for (auto& s : sellers_) {
    if (s->spec.name == name) return *s;
  }
  throw std::invalid_argument("unknown seller " + name);
}

const SellerState& Market::seller(const std::string& name) const {
  return const_cast<Market*>(this)->seller(name);
}

void Market::submit(const chain::Transaction& tx, const std::string& who) {
  const chain::SubmitResult r = ledger_.submit(tx);
  if (!r) {
    transcript_.note(ledger_.now(), who, tx.method + " not admitted: " + r.reason);
    return;
  }
  pending_[tx.id()] = who;
}

void Market::run() {
  while (step()) {
  }
}

bool Market::quiescent() const {
  if (ledger_.mempool_size() > 0) return false;
  for (const auto& s : sellers_) {
    if (!s->bm_terminal || !s->key_jobs.empty()) return false;
  }
  for (const auto& b : buyers_) {
    if (b->phase != BuyerState::Phase::kDone) return false;
  }
  return true;
}

bool Market::step() {
  if (ledger_.now() >= scenario_.max_rounds) return false;
  if (ledger_.now() > 0 && quiescent()) return false;
  for (auto& s : sellers_) act_seller(*s);
  for (auto& b : buyers_) act_buyer(*b);
  const chain::Block& block = ledger_.advance_round();
  for (std::size_t i = 0; i < block.txs.size(); ++i) {
    auto it = pending_.find(block.receipts[i].tx);
    if (it == pending_.end()) continue;
    if (!block.receipts[i].accepted) {
      transcript_.note(block.height, it->second,
                       block.txs[i].method + " rejected: " + block.receipts[i].reason);
    }
    pending_.erase(it);
  }
  return true;
}

void Market::act_relay(SellerState& s) {
  const chain::Block& block = ledger_.blocks().back();
  const std::string me = to_hex(s.relay->account());
  for (const chain::Event& e : block.events) {
    if (e.contract != bm_addr_ || e.kind != "request" || e.field("intermediator") != me) continue;
    const std::uint64_t rid = std::stoull(e.field("request"));
    if (!s.served.insert(rid).second) continue;
    const Bytes pbytes = from_hex(e.field("params"));
    ByteReader pin(pbytes);
    relay::RelayRequest req{rid, e.field("url"), relay::SampleParams::deserialize(pin)};
    const auto resp = s.relay->serve(req, ledger_.head_hash(), server_, bm_addr_);
    const std::string host = "relay:" + s.spec.name;
    submit(resp.tx, host);
    if (!resp.ok) {
      transcript_.note(ledger_.now(), host, "relay failed: " + resp.error);
      continue;
    }
    // Every model that joined this request in the same block gets the samples.
    for (const chain::Event& m : block.events) {
      if (m.contract != bm_addr_ || m.kind != "request" || m.field("request") != e.field("request")) {
        continue;
      }
      const Digest id = Digest::from(from_hex(m.field("ID_m")));
      std::string owner;
      for (const auto& other : sellers_) {
        if (other->id_m == id) owner = other->spec.name;
      }
      const std::string flow = "bm:" + owner;
      const Round now = ledger_.now();
      transcript_.send(now, flow, "server", host, "samples", resp.digest.encoded_bytes, false);
      transcript_.send(now, flow, host, "bm-contract", "sigma_I", kSigBytes);
      transcript_.send(now, flow, host, "bm-contract", "Hash(samples)", kIdBytes);
      transcript_.send(now, flow, host, "bm-contract", "request id", 8, false);
      transcript_.send(now, flow, host, "bm-contract", "seed", 8, false);
      transcript_.send(now, flow, host, "seller:" + owner, "samples", resp.digest.encoded_bytes);
      mailbox_[id] = resp.bundle;
    }
  }
}

void Market::run_step(SellerState& s, std::optional<tee::SealedState> sealed) {
  const Round now = ledger_.now();
  const std::string enclave = "bm-enclave:" + s.spec.name;
  const int idx = s.next_step - 1;
  tee::BenchmarkEnclave::StepInput in{s.sections[idx], s.digests, sealed};
  transcript_.send(now, s.flow, s.party, enclave, "samples section " + std::to_string(s.next_step),
                   s.sections[idx].size(), true, true);
  if (sealed) {
    transcript_.send(now, s.flow, s.party, enclave, "sealed state", sealed->serialize().size(),
                     false, true);
  }
  if (s.next_step == 2 && s.spec.strategy == Strategy::kRollback) {
    // Replay from the start instead of resuming the sealed state.
    in = {s.sections[0], s.digests, std::nullopt};
    transcript_.note(now, s.party, "rollback: restarting the evaluation from scratch");
  }
  const auto r = s.bench->resume_evaluate(in);
  using Status = tee::BenchmarkEnclave::StepResult::Status;
  if (r.status == Status::kAbort) {
    s.enclave_error = r.error;
    s.next_step = 0;
    transcript_.note(now, enclave, "abort: " + r.error);
    return;
  }
  submit(r.tx, enclave);
  if (r.status == Status::kSealed) {
    transcript_.send(now, s.flow, enclave, "registry", "step", r.tx.payload.size(), false);
    transcript_.send(now, s.flow, enclave, s.party, "sealed state",
                     r.sealed->serialize().size(), false);
    s.sealed = r.sealed;
    s.next_step += 1;
    return;
  }
  transcript_.send(now, s.flow, enclave, s.party, "outp", r.outp.size());
  transcript_.send(now, s.flow, enclave, s.party, "sigma_o", kSigBytes);
  transcript_.send(now, s.flow, s.party, "bm-contract", "outp", r.outp.size(), true, true);
  transcript_.send(now, s.flow, s.party, "bm-contract", "sigma_o", kSigBytes, true, true);
  transcript_.store(s.flow, s.party, "outp", r.outp.size());
  s.next_step = 0;
}

void Market::act_seller(SellerState& s) {
  const Round now = ledger_.now();
  const chain::Block& block = ledger_.blocks().back();
  const std::string bm_enclave = "bm-enclave:" + s.spec.name;
  const std::string me_enclave = "me-enclave:" + s.spec.name;
  const std::string setup_enclave = "setup-enclave:" + s.spec.name;

  if (!s.published) {
    s.published = true;
    submit(s.relay->announce(s.addr, bm_addr_), "relay:" + s.spec.name);
    const Bytes& ct = *blobs_.get(s.addr_m);
    const std::string reg = "reg:" + s.spec.name;
    transcript_.send(now, reg, s.party, setup_enclave, "model", s.model.size(), false);
    transcript_.send(now, reg, s.party, setup_enclave, "k_m", SymmetricKey::kSize, false);
    transcript_.send(now, reg, s.party, setup_enclave, "r_m", Coin::kSize, false);
    transcript_.send(now, reg, s.party, setup_enclave, "r_k", Coin::kSize, false);
    transcript_.send(now, reg, s.party, setup_enclave, "ciphertext", ct.size(), false);
    transcript_.send(now, reg, s.party, "blob-store", "ciphertext", ct.size(), false);
    const auto proofs = s.setup->attest(s.model, s.r_m, s.k_m, s.r_k, ct);
    if (!proofs) {
      s.bm_terminal = true;
      transcript_.verdict(s.flow, "aborted: setup enclave refused the registration", now);
      return;
    }
    contracts::Registration r{proofs->addr_m, s.id_m,      proofs->com_m, proofs->com_k,
                              proofs->p_k,    proofs->p_ck, proofs->p_cm, s.setup->account()};
    const Bytes payload = r.serialize();
    transcript_.send(now, reg, setup_enclave, s.party, "proofs", 3 * kSigBytes + 2 * kIdBytes,
                     false);
    transcript_.send(now, reg, s.party, "bm-contract", "registration", payload.size(), false);
    submit(chain::make_tx(s.kp.sk, s.addr, bm_addr_, chain::TxKind::kPlain, "publish", payload),
           s.party);
    return;
  }

  act_relay(s);

  const std::string idm = to_hex(s.id_m);
  const Bytes& prog = bm().prog();
  for (const chain::Event& e : block.events) {
    if (e.contract == bm_addr_ && e.has("ID_m") && e.field("ID_m") == idm) {
      if (e.kind == "install") {
        transcript_.send(now, s.flow, "bm-contract", s.party, "prog", prog.size());
        transcript_.store(s.flow, s.party, "prog", prog.size());
        transcript_.send(now, s.flow, s.party, bm_enclave, "prog", prog.size(), true, true);
        const auto okay = s.bench->install(s.addr, prog, s.id_m);
        transcript_.send(now, s.flow, bm_enclave, s.party, "sigma_att", kSigBytes);
        transcript_.send(now, s.flow, s.party, "bm-contract", "sigma_att", kSigBytes, true, true);
        transcript_.send(now, s.flow, s.party, "bm-contract", "ID_m", kIdBytes, false);
        transcript_.send(now, s.flow, s.party, "bm-contract", "eid", kIdBytes, false);
        submit(okay.tx, bm_enclave);
      } else if (e.kind == "commit") {
        const Commitment com_m{Digest::from(from_hex(e.field("Com_m")))};
        transcript_.send(now, s.flow, "bm-contract", s.party, "Com_m", kIdBytes);
        transcript_.store(s.flow, s.party, "Com_m", kIdBytes);
        transcript_.store(s.flow, s.party, "model", s.model.size());
        Bytes load = s.model;
        if (s.spec.strategy == Strategy::kForgeModel) {
          bench::ToyModel m = bench::ToyModel::deserialize(s.model);
          load = bench::degrade(m, 0.5, seed_of(s.rng.fork("forge"))).serialize();
          transcript_.note(now, s.party, "forge: loading a substitute model");
        }
        transcript_.send(now, s.flow, s.party, bm_enclave, "Com_m", kIdBytes, true, true);
        transcript_.send(now, s.flow, s.party, bm_enclave, "model", load.size());
        transcript_.send(now, s.flow, s.party, bm_enclave, "r_m", Coin::kSize, false);
        const auto c = s.bench->resume_commit(com_m, load, s.r_m);
        if (!c.ok) {
          s.enclave_error = c.error;
          transcript_.note(now, bm_enclave, "abort: " + c.error);
          continue;
        }
        transcript_.send(now, s.flow, bm_enclave, s.party, "sigma_c", kSigBytes);
        transcript_.send(now, s.flow, s.party, "bm-contract", "sigma_c", kSigBytes, true, true);
        submit(c.tx, bm_enclave);
      } else if (e.kind == "relayed") {
        transcript_.send(now, s.flow, "bm-contract", s.party, "Hash(samples)", kIdBytes, true,
                         true);
        auto it = mailbox_.find(s.id_m);
        if (it == mailbox_.end()) {
          transcript_.note(now, s.party, "relayed samples never arrived");
          continue;
        }
        s.samples = it->second;
        mailbox_.erase(it);
        s.sections = {bench::encode_section(*s.samples, bench::Section::kCorruption),
                      bench::encode_section(*s.samples, bench::Section::kPerturbation),
                      bench::encode_section(*s.samples, bench::Section::kClean)};
        const std::uint64_t total =
            s.sections[0].size() + s.sections[1].size() + s.sections[2].size();
        transcript_.store(s.flow, s.party, "samples", total);
        if (s.spec.strategy == Strategy::kTamperSamples) {
          std::uint64_t off = s.spec.tamper_offset % total;
          for (Bytes& sec : s.sections) {
            if (off < sec.size()) {
              sec[off] ^= 0x01;
              break;
            }
            off -= sec.size();
          }
          transcript_.note(now, s.party, "tamper: flipped one sample byte");
        }
        for (int i = 0; i < 3; ++i) s.digests[i] = hash(s.sections[i]);
        transcript_.send(now, s.flow, s.party, bm_enclave, "Hash(samples)", kIdBytes, true, true);
        s.next_step = 1;
        run_step(s, std::nullopt);
      } else if (e.kind == "benchmarked") {
        s.bm_terminal = true;
        for (const auto& item : bm().storage(s.id_m)) {
          transcript_.store(s.flow, "bm-contract", item.name, item.bytes, item.accounted);
        }
        const bool listed = e.field("for_sale") == "true";
        transcript_.verdict(s.flow, listed ? "listed at " + e.field("price") : "benchmarked, not for sale",
                            now);
      } else if (e.kind == "bm_abort") {
        s.bm_terminal = true;
        std::string why = "aborted: " + e.field("reason");
        if (!s.enclave_error.empty()) why += " (enclave: " + s.enclave_error + ")";
        transcript_.verdict(s.flow, why, now);
      }
    }
    if (e.contract == registry_ && e.kind == "step" && s.next_step > 1 && s.bench->installed() &&
        e.field("eid") == to_hex(s.bench->eid())) {
      const std::uint64_t counter = std::stoull(e.field("counter"));
      if (static_cast<int>(counter) == s.next_step - 1) {
        run_step(s, s.sealed);
      }
    }
    if (e.contract == be_addr_ && e.kind == "key_request" && e.field("seller") == to_hex(s.addr)) {
      SellerState::KeyJob job;
      job.sale = std::stoull(e.field("sale"));
      job.due = now + s.spec.key_delay;
      job.pk_b = PublicKey::from(from_hex(e.field("pk_B")));
      job.com_k = Commitment{Digest::from(from_hex(e.field("Com_k")))};
      const std::string flow = "me:" + e.field("sale");
      transcript_.send(now, flow, "be-contract", s.party, "pk_B", kPkBytes, true, true);
      transcript_.send(now, flow, "be-contract", s.party, "Com_k", kIdBytes, true, true);
      transcript_.send(now, flow, "be-contract", s.party, "sale id", 8, false);
      transcript_.store(flow, s.party, "Com_k", kIdBytes);
      transcript_.store(flow, s.party, "pk_B", kPkBytes);
      s.key_jobs.push_back(job);
    }
  }

  std::vector<SellerState::KeyJob> later;
  for (const auto& job : s.key_jobs) {
    if (job.due > now) {
      later.push_back(job);
      continue;
    }
    const std::string flow = "me:" + std::to_string(job.sale);
    if (s.spec.strategy == Strategy::kWithholdKey) {
      transcript_.note(now, s.party, "withhold: ignoring key request for sale " +
                                         std::to_string(job.sale));
      continue;
    }
    SymmetricKey key = s.k_m;
    if (s.spec.strategy == Strategy::kSwapKey) {
      key = s.rng.fork("swap").draw<SymmetricKey>();
      transcript_.note(now, s.party, "swap: handing the enclave a different key");
    }
    transcript_.store(flow, s.party, "k_m", SymmetricKey::kSize);
    transcript_.send(now, flow, s.party, me_enclave, "k_m", SymmetricKey::kSize);
    transcript_.send(now, flow, s.party, me_enclave, "Com_k", kIdBytes, true, true);
    transcript_.send(now, flow, s.party, me_enclave, "pk_B", kPkBytes, true, true);
    transcript_.send(now, flow, s.party, me_enclave, "r_k", Coin::kSize, false);
    const auto rel = s.keys->resume_request_key(job.com_k, key, s.r_k, job.pk_b, s.id_m, be_addr_);
    if (!rel.ok) {
      transcript_.note(now, me_enclave, "abort: " + rel.error);
      continue;
    }
    transcript_.send(now, flow, me_enclave, s.party, "sigma_o'", kSigBytes);
    transcript_.send(now, flow, me_enclave, s.party, "pk_B", kPkBytes);
    transcript_.send(now, flow, me_enclave, s.party, "AEnc", rel.aenc.size());
    transcript_.send(now, flow, s.party, "be-contract", "sigma_o'", kSigBytes, true, true);
    transcript_.send(now, flow, s.party, "be-contract", "pk_B", kPkBytes, true, true);
    transcript_.send(now, flow, s.party, "be-contract", "AEnc", rel.aenc.size(), true, true);
    transcript_.send(now, flow, s.party, "be-contract", "ID_m", kIdBytes, false);
    transcript_.store(flow, s.party, "AEnc", rel.aenc.size());
    transcript_.store(flow, s.party, "sigma_o'", kSigBytes);
    submit(rel.tx, me_enclave);
  }
  s.key_jobs = std::move(later);
}

void Market::act_buyer(BuyerState& b) {
  using Phase = BuyerState::Phase;
  const Round now = ledger_.now();
  const chain::Block& block = ledger_.blocks().back();
  if (b.phase == Phase::kDone) return;
  const SellerState& target = seller(b.spec.target);
  const contracts::ModelReport* report = bm().report(target.id_m);

  if (b.phase == Phase::kInitSent) {
    for (std::size_t i = 0; i < block.txs.size(); ++i) {
      if (block.receipts[i].tx == *b.init_tx && !block.receipts[i].accepted) {
        transcript_.verdict(b.flow, "rejected: " + block.receipts[i].reason, now);
        b.phase = Phase::kDone;
        return;
      }
    }
    for (const chain::Event& e : block.events) {
      if (e.contract != be_addr_ || e.kind != "initiated" || e.field("buyer") != to_hex(b.addr)) {
        continue;
      }
      b.sale = std::stoull(e.field("sale"));
      const std::string flow = "me:" + e.field("sale");
      const Round sent = now - 1;
      transcript_.send(sent, flow, b.party, "be-contract", "ID_m", kIdBytes);
      transcript_.send(sent, flow, b.party, "be-contract", "Com_k", kIdBytes);
      transcript_.send(sent, flow, b.party, "be-contract", "p_k", kSigBytes);
      transcript_.send(sent, flow, b.party, "be-contract", "deposit", 8, false);
      if (b.spec.strategy == Strategy::kRepudiate) {
        transcript_.note(now, b.party, "repudiate: never sending the key request");
        b.phase = Phase::kRequested;
        break;
      }
      ByteWriter w;
      w.raw(target.id_m).raw(b.box.pk);
      submit(chain::make_tx(b.kp.sk, b.addr, be_addr_, chain::TxKind::kPlain, "request",
                            std::move(w).take()),
             b.party);
      transcript_.send(now, flow, b.party, "be-contract", "pk_B", kPkBytes);
      transcript_.send(now, flow, b.party, "be-contract", "ID_m", kIdBytes, false);
      b.phase = Phase::kRequested;
    }
    return;
  }

  if (b.phase == Phase::kRequested) {
    const std::string sale = std::to_string(*b.sale);
    for (const chain::Event& e : block.events) {
      if (e.contract != be_addr_ || e.field("sale") != sale) continue;
      if (e.kind == "claimed" || e.kind == "aborted") {
        for (const auto& item : be().storage(*b.sale)) {
          transcript_.store("me:" + sale, "be-contract", item.name, item.bytes, item.accounted);
        }
      }
      if (e.kind == "claimed") {
        const Bytes aenc = from_hex(e.field("AEnc"));
        transcript_.send(now, "me:" + sale, "be-contract", b.party, "AEnc", aenc.size(), false);
        const auto k = adec(b.box.sk, aenc);
        const Bytes* ct = blobs_.get(report->reg.addr_m);
        if (k && ct != nullptr) {
          transcript_.send(now, "me:" + sale, "blob-store", b.party, "ciphertext", ct->size(), false);
          if (auto m = dec(*k, *ct)) b.recovered = std::move(*m);
        }
        transcript_.verdict(b.flow, b.recovered ? "claimed" : "claimed, but the key did not decrypt",
                            now);
        b.phase = Phase::kDone;
      } else if (e.kind == "aborted") {
        transcript_.verdict(b.flow, "refunded " + e.field("refund"), now);
        b.phase = Phase::kDone;
      }
    }
    return;
  }

  // Waiting for the target's benchmark.
  if (report == nullptr) {
    if (target.bm_terminal) {
      transcript_.verdict(b.flow, "blocked: model never registered", now);
      b.phase = Phase::kDone;
    }
    return;
  }
  if (report->bm.phase == contracts::BmPhase::kAborted) {
    transcript_.verdict(b.flow, "blocked: benchmark aborted", now);
    b.phase = Phase::kDone;
    return;
  }
  if (report->state == contracts::SaleState::kListed) return;
  if (const contracts::Sale* s = be().latest_sale(target.id_m);
      s != nullptr && (s->phase == contracts::BePhase::kInitiated ||
                       s->phase == contracts::BePhase::kRequested)) {
    return;  // someone else's sale is running
  }
  ByteWriter w;
  w.raw(target.id_m).raw(report->reg.com_k.value).raw(report->reg.p_k);
  w.i64(b.spec.deposit.value_or(report->price));
  const auto tx = chain::make_tx(b.kp.sk, b.addr, be_addr_, chain::TxKind::kPlain, "init",
                                 std::move(w).take());
  transcript_.send(now, b.flow, "bm-contract", b.party, "report", 2 * kIdBytes + kSigBytes, false);
  b.init_tx = tx.id();
  submit(tx, b.party);
  b.phase = Phase::kInitSent;
}

// --- queries --------------------------------------------------------------------

Digest Market::model_id(const std::string& name) const { return seller(name).id_m; }
const Bytes& Market::model_bytes(const std::string& name) const { return seller(name).model; }
const SymmetricKey& Market::model_key(const std::string& name) const { return seller(name).k_m; }

Address Market::address(const std::string& party) const {
  for (const auto& [addr, name] : names_) {
    if (name == party) return addr;
  }
  throw std::invalid_argument("unknown party " + party);
}

const bench::SampleBundle* Market::delivered_samples(const std::string& name) const {
  const auto& s = seller(name).samples;
  return s ? &*s : nullptr;
}

const std::optional<Bytes>& Market::recovered_model(const std::string& buyer) const {
  for (const auto& b : buyers_) {
    if (b->spec.name == buyer) return b->recovered;
  }
  throw std::invalid_argument("unknown buyer " + buyer);
}

std::optional<std::uint64_t> Market::sale_of(const std::string& buyer) const {
  for (const auto& b : buyers_) {
    if (b->spec.name == buyer) return b->sale;
  }
  throw std::invalid_argument("unknown buyer " + buyer);
}

Sizes Market::sizes(const std::string& name) const {
  const SellerState& s = seller(name);
  Sizes z;
  z.prog = bm().prog().size();
  z.model = s.model.size();
  if (s.samples) z.samples = bench::digest_bundle(*s.samples).encoded_bytes;
  if (const auto* r = bm().report(s.id_m); r != nullptr && r->bm.outp) z.outp = r->bm.outp->size();
  return z;
}

std::vector<FairnessRow> Market::fairness() const {
  std::vector<FairnessRow> out;
  for (const auto& b : buyers_) {
    FairnessRow row{b->spec.name, b->spec.target, false, false};
    if (b->sale) {
      const contracts::Sale* s = be().sale(*b->sale);
      row.seller_paid = s != nullptr && s->phase == contracts::BePhase::kClaimed;
    }
    const SellerState& t = seller(b->spec.target);
    row.buyer_has_model = b->recovered && *b->recovered == t.model;
    out.push_back(row);
  }
  return out;
}

bool Market::money_conserved() const { return ledger_.total_supply() == ledger_.minted(); }

void Market::export_jsonl(std::ostream& out) const {
  transcript_.export_jsonl(out);
  ledger_.export_jsonl(out);
}

std::string Market::summary() const {
  std::ostringstream out;
  out << "rounds " << ledger_.now() << "\n";
  for (const Verdict& v : transcript_.verdicts()) {
    out << v.flow << " @" << v.round << ": " << v.outcome << "\n";
  }
  for (const auto& [addr, name] : names_) {
    if (name.rfind("seller:", 0) == 0 || name.rfind("buyer:", 0) == 0 || name == "fee-pool") {
      out << name << " balance " << ledger_.balance(addr) << "\n";
    }
  }
  out << "money supply " << ledger_.total_supply() << " minted " << ledger_.minted()
      << " conserved " << (money_conserved() ? "yes" : "no") << "\n";
  return out.str();
}

std::string simulate(const Scenario& scenario) {
  Market m(scenario);
  m.run();
  std::ostringstream out;
  m.export_jsonl(out);
  return out.str();
}

bool AttackCell::clean() const { return fair() && conserved; }

std::vector<AttackCell> run_attack_suite(const std::vector<Strategy>& strategies,
                                         const std::vector<std::uint64_t>& seeds) {
  std::vector<AttackCell> out;
  for (Strategy st : strategies) {
    for (std::uint64_t seed : seeds) {
      Market m(attack_scenario(st, seed));
      m.run();
      AttackCell c;
      c.strategy = st;
      c.seed = seed;
      if (auto v = m.transcript().verdict_for("bm:alice")) c.bm_outcome = v->outcome;
      if (auto v = m.transcript().verdict_for("buy:bob")) c.me_outcome = v->outcome;
      const FairnessRow f = m.fairness().front();
      c.seller_paid = f.seller_paid;
      c.buyer_has_model = f.buyer_has_model;
      c.conserved = m.money_conserved();
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace bazaar::protocol
