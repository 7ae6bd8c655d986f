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

// Marketplace contracts.
//
// BMContract holds model reports and drives benchmarking:
//   publish      (seller)        report -> TRIGGERED, emits install
//   installed    (BM enclave)    ID_m | eid | sigma_att, T < T1, emits commit
//   commit       (BM enclave)    sigma_c, T < T2 -> COMMITTED, emits request
//   relay        (intermediator) RelayPayload -> REQUESTED
//   relay_failed (intermediator) u64 request id -> ABORTED
//   output       (BM enclave)    blob(outp) | sigma_o, T < T3 -> PUBLISHED
//   register_relay (relay enclave) owner address
//
// BEContract runs one sale at a time per model:
//   init    (buyer)      ID_m | Com_k | p_k | i64 deposit -> INITIATED, T1' = T + 4
//   request (buyer)      ID_m | pk_B -> REQUESTED, emits key_request
//   publish (ME enclave) ID_m | sigma | pk_B | AEnc, T <= T1' -> CLAIMED
// and refunds the deposit in the first round with T > T1'.

#ifndef BAZAAR_CONTRACTS_HPP_
#define BAZAAR_CONTRACTS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bazaar/benchmark.hpp"
#include "bazaar/crypto.hpp"
#include "bazaar/enclave.hpp"
#include "bazaar/ledger.hpp"
#include "bazaar/pricing.hpp"
#include "bazaar/relay.hpp"

namespace bazaar::contracts {

inline constexpr double kNatureAccuracyGate = 0.60;
inline constexpr chain::Amount kMoneyPerPriceUnit = 1000;

struct Deadlines {
  chain::Round t1 = 2;  // T1 = trigger + t1
  chain::Round t2 = 2;  // T2 = T1 + t2
  chain::Round t3 = 6;  // T3 = T2 + t3
  chain::Round t1_prime = 4;  // T1' = init + t1_prime
};

enum class SaleState { kListed, kBenchmarked, kSold };
enum class BmPhase { kTriggered, kCommitted, kRequested, kPublished, kAborted };
enum class BePhase { kInitiated, kRequested, kClaimed, kAborted };

const char* to_string(SaleState s);
const char* to_string(BmPhase p);
const char* to_string(BePhase p);

/// Registration payload, built by the seller from its setup-enclave proofs.
struct Registration {
  Digest addr_m;
  Digest id_m;
  Commitment com_m;
  Commitment com_k;
  Signature p_k;
  Signature p_ck;
  Signature p_cm;
  chain::Address setup_enclave;

  Bytes serialize() const;
  static Registration deserialize(ByteView bytes);
};

Digest model_id(const Digest& addr_m, const chain::Address& seller);

struct BmState {
  BmPhase phase = BmPhase::kTriggered;
  chain::Round t1 = 0, t2 = 0, t3 = 0;
  bool installed = false;
  Digest eid;
  chain::Address enclave;
  std::optional<std::uint64_t> request_id;
  std::optional<relay::RelayRecord> record;
  std::optional<Bytes> outp;
  std::optional<Signature> sigma_att, sigma_c, sigma_o;
  std::string abort_reason;
};

struct ModelReport {
  Registration reg;
  chain::Address seller;
  SaleState state = SaleState::kListed;
  bool for_sale = false;
  std::optional<bench::BenchmarkResult> metrics;
  chain::Amount price = 0;
  BmState bm;
};

/// One stored field with its size; `accounted` marks the fields the
/// closed-form storage totals include.
struct StoredItem {
  std::string name;
  std::uint64_t bytes = 0;
  bool accounted = true;
};

struct BmConfig {
  Bytes prog;
  pricing::PriceCurve curve;
  Deadlines deadlines;
  double gate = kNatureAccuracyGate;
  chain::Amount relay_fee = 0;
  chain::Address fee_pool;  // pays relay fees; must be an account
};

class BMContract : public chain::Contract, public relay::RelayRecordView {
 public:
  explicit BMContract(BmConfig config);

  std::string name() const override { return "bm-contract"; }
  void on_tx(chain::Context& ctx, const chain::Transaction& tx) override;
  void on_round(chain::Context& ctx) override;
  std::optional<relay::RelayRecord> relay_record_for(const Digest& id_m) const override;

  const Bytes& prog() const { return config_.prog; }
  const Digest& prog_hash() const { return prog_hash_; }
  const BmConfig& config() const { return config_; }
  const ModelReport* report(const Digest& id_m) const;
  std::vector<Digest> report_ids() const;
  std::vector<StoredItem> storage(const Digest& id_m) const;

  /// Called by the BE contract when a sale settles.
  void mark_sold(const Digest& id_m);

  struct RelayHost {
    chain::Address enclave;
    chain::Address owner;
  };
  const std::vector<RelayHost>& relay_hosts() const { return relay_hosts_; }

 private:
  struct PendingRequest {
    std::string url;
    relay::SampleParams params;
    chain::Address intermediator;
    chain::Round round = 0;
    std::vector<Digest> models;
    bool done = false;
  };

  ModelReport& by_enclave(const chain::Address& enclave);
  void on_publish(chain::Context& ctx, const chain::Transaction& tx);
  void on_installed(chain::Context& ctx, const chain::Transaction& tx);
  void on_commit(chain::Context& ctx, const chain::Transaction& tx);
  void on_relay(chain::Context& ctx, const chain::Transaction& tx);
  void on_relay_failed(chain::Context& ctx, const chain::Transaction& tx);
  void on_output(chain::Context& ctx, const chain::Transaction& tx);
  void on_register_relay(chain::Context& ctx, const chain::Transaction& tx);
  void abort(chain::Context& ctx, ModelReport& r, const std::string& why);

  BmConfig config_;
  Digest prog_hash_;
  std::map<Digest, ModelReport> reports_;
  std::vector<Digest> order_;
  std::set<Digest> commitments_;
  std::map<chain::Address, Digest> enclaves_;
  std::vector<RelayHost> relay_hosts_;
  std::map<std::uint64_t, PendingRequest> requests_;
  std::uint64_t next_request_ = 1;
};

struct Sale {
  std::uint64_t id = 0;
  Digest id_m;
  chain::Address buyer;
  chain::Address seller;
  BePhase phase = BePhase::kInitiated;
  chain::Amount deposit = 0;
  chain::EscrowId escrow = 0;
  chain::Round t1_prime = 0;
  Commitment com_k;
  Signature p_k;
  std::optional<PublicKey> pk_b;
  std::optional<Signature> sigma;
  std::optional<Bytes> aenc;
};

class BEContract : public chain::Contract {
 public:
  /// `bm` must outlive this contract; both live in the same ledger.
  BEContract(BMContract& bm, Deadlines deadlines = {});

  std::string name() const override { return "be-contract"; }
  void on_tx(chain::Context& ctx, const chain::Transaction& tx) override;
  void on_round(chain::Context& ctx) override;

  const Sale* sale(std::uint64_t id) const;
  /// Most recent sale for the model, if any.
  const Sale* latest_sale(const Digest& id_m) const;
  std::vector<StoredItem> storage(std::uint64_t sale_id) const;

 private:
  Sale& active(const Digest& id_m);
  void on_init(chain::Context& ctx, const chain::Transaction& tx);
  void on_request(chain::Context& ctx, const chain::Transaction& tx);
  void on_publish(chain::Context& ctx, const chain::Transaction& tx);

  BMContract& bm_;
  Deadlines deadlines_;
  std::map<std::uint64_t, Sale> sales_;
  std::map<Digest, std::uint64_t> latest_;
  std::uint64_t next_sale_ = 1;
};

/// Money units for a curve price: round(price * 1000).
chain::Amount to_money(double price);

}  // namespace bazaar::contracts

#endif  // BAZAAR_CONTRACTS_HPP_
