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

// End-to-end marketplace runs.
//
// A Market wires sellers, buyers, their enclaves, the relay and the contracts
// to one ledger and drives them round by round. Every party acts once per
// round on the events of the latest block, then the round is sealed. Each
// message that crosses a party boundary is logged to the Transcript with its
// byte size; account_bytes() turns the log into per-party totals.
//
// Accounting rule: a party's communication is the bytes it receives plus the
// bytes it originates and does not merely forward. Items marked unaccounted
// (commitment coins, ELI steps, addressing fields, retrievals) are logged
// but not totalled.

#ifndef BAZAAR_PROTOCOL_HPP_
#define BAZAAR_PROTOCOL_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bazaar/benchmark.hpp"
#include "bazaar/contracts.hpp"
#include "bazaar/enclave.hpp"
#include "bazaar/ledger.hpp"
#include "bazaar/pricing.hpp"
#include "bazaar/relay.hpp"

namespace bazaar::protocol {

enum class Strategy {
  kHonest,
  kForgeModel,     // seller loads m' != m at commit
  kRollback,       // seller restarts the evaluation after the first sealed step
  kTamperSamples,  // seller flips one sample byte after the relay
  kWithholdKey,    // seller never answers the key request
  kSwapKey,        // seller hands k' != k_m to the key-release enclave
  kRepudiate,      // buyer deposits and never sends the key request
};

const char* to_string(Strategy s);
Strategy strategy_from_string(const std::string& name);
std::vector<Strategy> adversary_strategies();

// --- scenario ---------------------------------------------------------------

struct SellerSpec {
  std::string name;
  chain::Amount balance = 0;
  std::vector<std::uint32_t> hidden = {64};
  std::optional<double> accuracy;  // exact clean accuracy on the full clean set
  std::string model_path;          // load instead of fitting when set
  Strategy strategy = Strategy::kHonest;
  /// Rounds to wait before releasing the key.
  chain::Round key_delay = 0;
  /// Tamper position (byte offset into the encoded sections), for kTamperSamples.
  std::uint64_t tamper_offset = 0;
};

struct BuyerSpec {
  std::string name;
  chain::Amount balance = 0;
  std::string target;  // seller name
  std::optional<chain::Amount> deposit;  // defaults to the listed price
  Strategy strategy = Strategy::kHonest;
};

struct PricingSetup {
  std::size_t instances = 20;
  std::size_t models = 3;
  std::size_t buyers = 3;
  std::size_t ga_iterations = 500;
  std::uint64_t seed = 11;
};

struct Scenario {
  std::uint64_t seed = 1;
  bench::SuiteConfig suite;
  relay::SampleParams samples{40, 20, 0};  // clean 0 means the whole clean set
  std::uint64_t memory_cap = tee::kDefaultMemoryCap;
  contracts::Deadlines deadlines;
  double gate = contracts::kNatureAccuracyGate;
  chain::Amount relay_fee = 5;
  chain::Amount fee_pool = 1000;
  PricingSetup pricing;
  std::vector<SellerSpec> sellers;
  std::vector<BuyerSpec> buyers;
  chain::Round max_rounds = 60;

  std::string to_json() const;
  static Scenario from_json(const std::string& text);
};

/// Three honest sellers and two honest buyers on the default suite.
Scenario default_scenario(std::uint64_t seed);
/// Small suite, seller "alice" (benchmarked), seller "carol" (relay host) and
/// buyer "bob"; the strategy goes to alice, or to bob for kRepudiate.
Scenario attack_scenario(Strategy strategy, std::uint64_t seed);

// --- storage and transcript ---------------------------------------------------

/// Content-addressed store for encrypted models: Addr = hash(ciphertext).
class BlobStore {
 public:
  Digest put(Bytes blob);
  const Bytes* get(const Digest& addr) const;
  std::size_t size() const { return blobs_.size(); }

 private:
  std::map<Digest, Bytes> blobs_;
};

struct TranscriptItem {
  chain::Round round = 0;
  std::string flow;  // "bm:<seller>" or "me:<sale>"
  std::string from;
  std::string to;
  std::string item;
  std::uint64_t bytes = 0;
  bool accounted = true;
  bool forwarded = false;
};

struct StoreItem {
  std::string flow;
  std::string party;
  std::string item;
  std::uint64_t bytes = 0;
  bool accounted = true;
};

struct Verdict {
  std::string flow;
  std::string outcome;  // benchmarked, listed, claimed, refunded, blocked: ..., aborted: ...
  chain::Round round = 0;
};

struct Note {
  chain::Round round = 0;
  std::string party;
  std::string text;
};

class Transcript {
 public:
  void send(chain::Round round, const std::string& flow, const std::string& from,
            const std::string& to, const std::string& item, std::uint64_t bytes,
            bool accounted = true, bool forwarded = false);
  void store(const std::string& flow, const std::string& party, const std::string& item,
             std::uint64_t bytes, bool accounted = true);
  void verdict(const std::string& flow, const std::string& outcome, chain::Round round);
  void note(chain::Round round, const std::string& party, const std::string& text);

  const std::vector<TranscriptItem>& items() const { return items_; }
  const std::vector<StoreItem>& stores() const { return stores_; }
  const std::vector<Verdict>& verdicts() const { return verdicts_; }
  const std::vector<Note>& notes() const { return notes_; }
  std::optional<Verdict> verdict_for(const std::string& flow) const;

  void export_jsonl(std::ostream& out) const;

 private:
  std::vector<TranscriptItem> items_;
  std::vector<StoreItem> stores_;
  std::vector<Verdict> verdicts_;
  std::vector<Note> notes_;
};

struct Totals {
  std::uint64_t space = 0;
  std::uint64_t comm = 0;
  friend bool operator==(const Totals&, const Totals&) = default;
};

/// flow -> party -> totals, counting accounted items only.
std::map<std::string, std::map<std::string, Totals>> account_bytes(const Transcript& t);

struct Sizes {
  std::uint64_t prog = 0;
  std::uint64_t outp = 0;
  std::uint64_t model = 0;
  std::uint64_t samples = 0;
  std::uint64_t aenc = aenc_size(32);
};

struct AccountingRow {
  std::string name;
  std::string flow;
  std::string party;
  bool space = false;  // false: communication
  std::uint64_t expected = 0;
  std::uint64_t actual = 0;
  bool ok() const { return expected == actual; }
};

/// The nine closed-form totals, evaluated at `sizes` and compared with the
/// transcript for one benchmarking flow and one sale.
std::vector<AccountingRow> check_accounting(const Transcript& t, const std::string& seller,
                                            const std::string& buyer, std::uint64_t sale_id,
                                            const Sizes& sizes);

// --- market -------------------------------------------------------------------

struct SellerState;
struct BuyerState;

struct FairnessRow {
  std::string buyer;
  std::string seller;
  bool seller_paid = false;
  bool buyer_has_model = false;
  bool fair() const { return seller_paid == buyer_has_model; }
};

class Market {
 public:
  explicit Market(Scenario scenario);
  ~Market();
  Market(const Market&) = delete;
  Market& operator=(const Market&) = delete;

  /// Runs until every flow is terminal or max_rounds pass.
  void run();
  /// One actor pass plus one sealed round. Returns false once quiescent.
  bool step();

  const Scenario& scenario() const { return scenario_; }
  const chain::Ledger& ledger() const { return ledger_; }
  const Transcript& transcript() const { return transcript_; }
  const contracts::BMContract& bm() const;
  const contracts::BEContract& be() const;
  const bench::Suites& suites() const { return suites_; }
  const pricing::PriceCurve& curve() const { return curve_; }
  const BlobStore& blobs() const { return blobs_; }

  /// Seller-side facts the harness needs (never visible on chain).
  Digest model_id(const std::string& seller) const;
  const Bytes& model_bytes(const std::string& seller) const;
  const SymmetricKey& model_key(const std::string& seller) const;
  chain::Address address(const std::string& party) const;
  /// Samples the seller's enclave evaluated (empty before the relay).
  const bench::SampleBundle* delivered_samples(const std::string& seller) const;
  /// Bytes the buyer recovered, if it decrypted anything.
  const std::optional<Bytes>& recovered_model(const std::string& buyer) const;
  std::optional<std::uint64_t> sale_of(const std::string& buyer) const;
  /// Sizes of one seller's flow as the parties observed them.
  Sizes sizes(const std::string& seller) const;

  std::vector<FairnessRow> fairness() const;
  bool money_conserved() const;

  /// Transcript followed by the ledger log, as JSON lines.
  void export_jsonl(std::ostream& out) const;
  std::string summary() const;

 private:
  void setup();
  void act_seller(SellerState& s);
  void act_relay(SellerState& s);
  void act_buyer(BuyerState& b);
  void submit(const chain::Transaction& tx, const std::string& who);
  bool quiescent() const;
  void run_step(SellerState& s, std::optional<tee::SealedState> sealed);
  SellerState& seller(const std::string& name);
  const SellerState& seller(const std::string& name) const;

  Scenario scenario_;
  Rng rng_;
  chain::Ledger ledger_;
  chain::Address registry_, bm_addr_, be_addr_, pool_;
  bench::Suites suites_;
  relay::DatasetServer server_;
  pricing::PriceCurve curve_;
  BlobStore blobs_;
  Transcript transcript_;
  std::vector<std::unique_ptr<SellerState>> sellers_;
  std::vector<std::unique_ptr<BuyerState>> buyers_;
  std::map<Digest, bench::SampleBundle> mailbox_;
  std::map<chain::Address, std::string> names_;
  std::map<Digest, std::string> pending_;  // tx id -> submitting party
};

/// Runs a scenario and returns the exported transcript.
std::string simulate(const Scenario& scenario);

struct AttackCell {
  Strategy strategy = Strategy::kHonest;
  std::uint64_t seed = 0;
  std::string bm_outcome;
  std::string me_outcome;
  bool seller_paid = false;
  bool buyer_has_model = false;
  bool conserved = false;
  bool fair() const { return seller_paid == buyer_has_model; }
  /// The run ended honestly or in a clean abort with money conserved.
  bool clean() const;
};

std::vector<AttackCell> run_attack_suite(const std::vector<Strategy>& strategies,
                                         const std::vector<std::uint64_t>& seeds);

/// Price curve from `setup.instances` random instances solved by the GA.
pricing::PriceCurve calibrate_curve(const PricingSetup& setup);

}  // namespace bazaar::protocol

#endif  // BAZAAR_PROTOCOL_HPP_
