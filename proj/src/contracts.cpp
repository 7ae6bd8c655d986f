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

#include "bazaar/contracts.hpp"

#include <cmath>
#include <cstdio>

namespace bazaar::contracts {
namespace {

using chain::ContractReject;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const PublicKey& enclave_key(const chain::Ledger& ledger, const chain::Address& a) {
  if (!ledger.has_account(a)) throw ContractReject("unknown enclave account");
  const auto& acct = ledger.account(a);
  if (!acct.enclave_key) throw ContractReject("account has no enclave key");
  return *acct.enclave_key;
}

void require_attestation(const chain::Transaction& tx) {
  if (tx.kind != chain::TxKind::kAttestation) throw ContractReject("not an attestation");
}

}  // namespace

const char* to_string(SaleState s) {
  switch (s) {
    case SaleState::kListed: return "LISTED";
    case SaleState::kBenchmarked: return "BENCHMARKED";
    case SaleState::kSold: return "SOLD";
  }
  return "?";
}

const char* to_string(BmPhase p) {
  switch (p) {
    case BmPhase::kTriggered: return "TRIGGERED";
    case BmPhase::kCommitted: return "COMMITTED";
    case BmPhase::kRequested: return "REQUESTED";
    case BmPhase::kPublished: return "PUBLISHED";
    case BmPhase::kAborted: return "ABORTED";
  }
  return "?";
}

const char* to_string(BePhase p) {
  switch (p) {
    case BePhase::kInitiated: return "INITIATED";
    case BePhase::kRequested: return "REQUESTED";
    case BePhase::kClaimed: return "CLAIMED";
    case BePhase::kAborted: return "ABORTED";
  }
  return "?";
}

chain::Amount to_money(double price) {
  return static_cast<chain::Amount>(std::llround(price * kMoneyPerPriceUnit));
}

Digest model_id(const Digest& addr_m, const chain::Address& seller) {
  ByteWriter w;
  w.raw(addr_m).raw(seller);
  return hash(w.bytes());
}

Bytes Registration::serialize() const {
  ByteWriter w;
  w.raw(addr_m).raw(id_m).raw(com_m.value).raw(com_k.value).raw(p_k).raw(p_ck).raw(p_cm);
  w.raw(setup_enclave);
  return std::move(w).take();
}

Registration Registration::deserialize(ByteView bytes) {
  ByteReader in(bytes);
  Registration r;
  r.addr_m = in.fixed<Digest>();
  r.id_m = in.fixed<Digest>();
  r.com_m.value = in.fixed<Digest>();
  r.com_k.value = in.fixed<Digest>();
  r.p_k = in.fixed<Signature>();
  r.p_ck = in.fixed<Signature>();
  r.p_cm = in.fixed<Signature>();
  r.setup_enclave = in.fixed<chain::Address>();
  in.expect_done();
  return r;
}

// --- BM ---------------------------------------------------------------------------

BMContract::BMContract(BmConfig config) : config_(std::move(config)) {
  prog_hash_ = hash(config_.prog);
}

const ModelReport* BMContract::report(const Digest& id_m) const {
  auto it = reports_.find(id_m);
  return it == reports_.end() ? nullptr : &it->second;
}

std::vector<Digest> BMContract::report_ids() const { return order_; }

std::optional<relay::RelayRecord> BMContract::relay_record_for(const Digest& id_m) const {
  const ModelReport* r = report(id_m);
  if (r == nullptr) return std::nullopt;
  return r->bm.record;
}

ModelReport& BMContract::by_enclave(const chain::Address& enclave) {
  auto it = enclaves_.find(enclave);
  if (it == enclaves_.end()) throw ContractReject("enclave not installed for any model");
  return reports_.at(it->second);
}

void BMContract::on_tx(chain::Context& ctx, const chain::Transaction& tx) {
  if (tx.method == "publish") return on_publish(ctx, tx);
  if (tx.method == "installed") return on_installed(ctx, tx);
  if (tx.method == "commit") return on_commit(ctx, tx);
  if (tx.method == "relay") return on_relay(ctx, tx);
  if (tx.method == "relay_failed") return on_relay_failed(ctx, tx);
  if (tx.method == "output") return on_output(ctx, tx);
  if (tx.method == "register_relay") return on_register_relay(ctx, tx);
  throw ContractReject("unknown method");
}

void BMContract::on_register_relay(chain::Context& ctx, const chain::Transaction& tx) {
  require_attestation(tx);
  ByteReader in(tx.payload);
  const auto owner = in.fixed<chain::Address>();
  in.expect_done();
  for (const RelayHost& h : relay_hosts_) {
    if (h.enclave == tx.sender) throw ContractReject("relay already registered");
  }
  relay_hosts_.push_back({tx.sender, owner});
  ctx.emit("relay_registered", {{"enclave", chain::field_hex(tx.sender)},
                                {"owner", chain::field_hex(owner)}});
}

void BMContract::on_publish(chain::Context& ctx, const chain::Transaction& tx) {
  if (tx.kind != chain::TxKind::kPlain) throw ContractReject("publish must be a plain tx");
  const Registration reg = Registration::deserialize(tx.payload);
  if (reg.id_m != model_id(reg.addr_m, tx.sender)) throw ContractReject("malformed ID_m");
  if (reports_.contains(reg.id_m)) throw ContractReject("ID_m already registered");
  if (commitments_.contains(reg.com_m.value)) throw ContractReject("Com_m already registered");
  const PublicKey& setup = enclave_key(ctx.ledger(), reg.setup_enclave);
  if (!verify(setup, tee::proof_k_message(reg.addr_m, reg.com_k), reg.p_k) ||
      !verify(setup, tee::proof_cm_message(reg.addr_m, reg.com_m), reg.p_cm) ||
      !verify(setup, tee::proof_ck_message(reg.com_m, reg.com_k), reg.p_ck)) {
    throw ContractReject("registration proof invalid");
  }
  ModelReport r;
  r.reg = reg;
  r.seller = tx.sender;
  r.bm.t1 = ctx.now() + config_.deadlines.t1;
  r.bm.t2 = r.bm.t1 + config_.deadlines.t2;
  r.bm.t3 = r.bm.t2 + config_.deadlines.t3;
  commitments_.insert(reg.com_m.value);
  order_.push_back(reg.id_m);
  const auto& stored = reports_.emplace(reg.id_m, std::move(r)).first->second;
  ctx.emit("install", {{"ID_m", chain::field_hex(reg.id_m)},
                       {"seller", chain::field_hex(tx.sender)},
                       {"prog", chain::field_hex(prog_hash_)},
                       {"phase", to_string(stored.bm.phase)},
                       {"T1", std::to_string(stored.bm.t1)}});
}

void BMContract::on_installed(chain::Context& ctx, const chain::Transaction& tx) {
  require_attestation(tx);
  ByteReader in(tx.payload);
  const auto id_m = in.fixed<Digest>();
  const auto eid = in.fixed<Digest>();
  const auto sigma = in.fixed<Signature>();
  in.expect_done();
  auto it = reports_.find(id_m);
  if (it == reports_.end()) throw ContractReject("unknown model");
  ModelReport& r = it->second;
  if (r.bm.phase != BmPhase::kTriggered || r.bm.installed) throw ContractReject("not awaiting install");
  if (!(ctx.now() < r.bm.t1)) throw ContractReject("install after T1");
  if (enclaves_.contains(tx.sender)) throw ContractReject("enclave already in use");
  const PublicKey& key = enclave_key(ctx.ledger(), tx.sender);
  if (!verify(key, tee::okay_message(prog_hash_, id_m, r.seller, eid), sigma)) {
    throw ContractReject("attestation sigma_att invalid");
  }
  r.bm.installed = true;
  r.bm.eid = eid;
  r.bm.enclave = tx.sender;
  r.bm.sigma_att = sigma;
  enclaves_[tx.sender] = id_m;
  ctx.emit("commit", {{"ID_m", chain::field_hex(id_m)},
                      {"eid", chain::field_hex(eid)},
                      {"Com_m", chain::field_hex(r.reg.com_m.value)},
                      {"T2", std::to_string(r.bm.t2)}});
}

void BMContract::on_commit(chain::Context& ctx, const chain::Transaction& tx) {
  require_attestation(tx);
  ModelReport& r = by_enclave(tx.sender);
  ByteReader in(tx.payload);
  const auto sigma = in.fixed<Signature>();
  in.expect_done();
  if (r.bm.phase != BmPhase::kTriggered || !r.bm.installed) throw ContractReject("not awaiting commit");
  if (!(ctx.now() < r.bm.t2)) throw ContractReject("commit after T2");
  if (!verify(enclave_key(ctx.ledger(), tx.sender), tee::commit_message(prog_hash_, r.reg.com_m),
              sigma)) {
    throw ContractReject("commitment attestation does not match Com_m");
  }
  const tee::BenchmarkProgram prog = tee::BenchmarkProgram::deserialize(config_.prog);

  // Same-round requests for the same samples share one relay.
  std::uint64_t rid = 0;
  for (auto& [id, req] : requests_) {
    if (req.done || req.round != ctx.now() || req.url != prog.url || !(req.params == prog.params)) {
      continue;
    }
    bool own = false;
    for (const RelayHost& h : relay_hosts_) {
      if (h.enclave == req.intermediator && h.owner == r.seller) own = true;
    }
    if (!own) {
      rid = id;
      break;
    }
  }
  if (rid == 0) {
    std::vector<chain::Address> candidates, excluded;
    for (const RelayHost& h : relay_hosts_) {
      candidates.push_back(h.enclave);
      if (h.owner == r.seller) excluded.push_back(h.enclave);
    }
    chain::Address pick;
    try {
      pick = relay::pick_intermediator(candidates, excluded, ctx.anchor(), next_request_);
    } catch (const relay::RelayError& e) {
      throw ContractReject(e.what());
    }
    rid = next_request_++;
    requests_[rid] = PendingRequest{prog.url, prog.params, pick, ctx.now(), {}, false};
  }
  PendingRequest& req = requests_.at(rid);
  req.models.push_back(r.reg.id_m);
  r.bm.phase = BmPhase::kCommitted;
  r.bm.sigma_c = sigma;
  r.bm.request_id = rid;
  ctx.emit("request", {{"ID_m", chain::field_hex(r.reg.id_m)},
                       {"seller", chain::field_hex(r.seller)},
                       {"request", std::to_string(rid)},
                       {"url", req.url},
                       {"params", to_hex(req.params.serialize())},
                       {"intermediator", chain::field_hex(req.intermediator)},
                       {"phase", to_string(r.bm.phase)}});
}

void BMContract::on_relay(chain::Context& ctx, const chain::Transaction& tx) {
  require_attestation(tx);
  const relay::RelayPayload p = relay::RelayPayload::deserialize(tx.payload);
  auto it = requests_.find(p.request_id);
  if (it == requests_.end() || it->second.done) throw ContractReject("no pending request");
  PendingRequest& req = it->second;
  if (tx.sender != req.intermediator) throw ContractReject("relay from unselected intermediator");
  relay::RelayRecord rec{p.request_id, req.url, req.params, p.root, p.seed, tx.sender, p.sigma,
                         ctx.now()};
  if (!relay::verify_record(ctx.ledger(), rec)) throw ContractReject("relay signature invalid");

  chain::Address owner;
  for (const RelayHost& h : relay_hosts_) {
    if (h.enclave == tx.sender) owner = h.owner;
  }
  if (config_.relay_fee > 0 && ctx.ledger().balance(config_.fee_pool) >= config_.relay_fee) {
    ctx.transfer(config_.fee_pool, owner, config_.relay_fee);
  }
  req.done = true;
  for (const Digest& id : req.models) {
    ModelReport& r = reports_.at(id);
    if (r.bm.phase != BmPhase::kCommitted) continue;
    r.bm.record = rec;
    r.bm.phase = BmPhase::kRequested;
    ctx.emit("relayed", {{"ID_m", chain::field_hex(id)},
                         {"request", std::to_string(p.request_id)},
                         {"root", chain::field_hex(p.root)},
                         {"phase", to_string(r.bm.phase)}});
  }
}

void BMContract::on_relay_failed(chain::Context& ctx, const chain::Transaction& tx) {
  require_attestation(tx);
  ByteReader in(tx.payload);
  const std::uint64_t id = in.u64();
  in.expect_done();
  auto it = requests_.find(id);
  if (it == requests_.end() || it->second.done) throw ContractReject("no pending request");
  if (tx.sender != it->second.intermediator) throw ContractReject("relay from unselected intermediator");
  it->second.done = true;
  for (const Digest& m : it->second.models) abort(ctx, reports_.at(m), "relay failed");
}

void BMContract::on_output(chain::Context& ctx, const chain::Transaction& tx) {
  require_attestation(tx);
  ModelReport& r = by_enclave(tx.sender);
  ByteReader in(tx.payload);
  const Bytes outp = in.blob();
  const auto sigma = in.fixed<Signature>();
  in.expect_done();
  if (r.bm.phase != BmPhase::kRequested || !r.bm.record) throw ContractReject("not awaiting output");
  if (!(ctx.now() < r.bm.t3)) throw ContractReject("output after T3");
  if (!verify(enclave_key(ctx.ledger(), tx.sender),
              tee::output_message(prog_hash_, r.bm.record->root, outp), sigma)) {
    throw ContractReject("output attestation invalid for the relayed samples");
  }
  bench::BenchmarkResult result;
  try {
    result = bench::BenchmarkResult::deserialize(outp);
  } catch (const bench::FormatError& e) {
    throw ContractReject(e.what());
  }
  const bool listed = result.nature_accuracy() >= config_.gate;
  chain::Amount price = 0;
  if (!config_.curve.empty()) price = to_money(pricing::price_for(config_.curve, result));

  r.bm.outp = outp;
  r.bm.sigma_o = sigma;
  r.bm.phase = BmPhase::kPublished;
  r.metrics = result;
  r.price = price;
  r.for_sale = listed;
  r.state = SaleState::kBenchmarked;
  ctx.emit("benchmarked", {{"ID_m", chain::field_hex(r.reg.id_m)},
                           {"ce", num(result.ce)},
                           {"mCE", num(result.mce)},
                           {"relative_mCE", num(result.relative_mce)},
                           {"mFP", num(result.mfp)},
                           {"price", std::to_string(price)},
                           {"for_sale", listed ? "true" : "false"},
                           {"phase", to_string(r.bm.phase)}});
}

void BMContract::abort(chain::Context& ctx, ModelReport& r, const std::string& why) {
  r.bm.phase = BmPhase::kAborted;
  r.bm.abort_reason = why;
  ctx.emit("bm_abort", {{"ID_m", chain::field_hex(r.reg.id_m)}, {"reason", why},
                        {"phase", to_string(r.bm.phase)}});
}

void BMContract::on_round(chain::Context& ctx) {
  const chain::Round t = ctx.now();
  for (const Digest& id : order_) {
    ModelReport& r = reports_.at(id);
    switch (r.bm.phase) {
      case BmPhase::kTriggered:
        if (!r.bm.installed && t >= r.bm.t1) abort(ctx, r, "no install by T1");
        else if (r.bm.installed && t >= r.bm.t2) abort(ctx, r, "no commit by T2");
        break;
      case BmPhase::kCommitted:
      case BmPhase::kRequested:
        if (t >= r.bm.t3) abort(ctx, r, "no output by T3");
        break;
      default:
        break;
    }
  }
}

void BMContract::mark_sold(const Digest& id_m) {
  ModelReport& r = reports_.at(id_m);
  r.state = SaleState::kSold;
  r.for_sale = false;
}

std::vector<StoredItem> BMContract::storage(const Digest& id_m) const {
  const ModelReport* r = report(id_m);
  if (r == nullptr) return {};
  std::vector<StoredItem> out = {
      {"Addr_m", Digest::kSize},
      {"ID_m", Digest::kSize},
      {"Com_m", Digest::kSize},
      {"Com_k", Digest::kSize, false},
      {"p_k", Signature::kSize, false},
      {"p_ck", Signature::kSize, false},
      {"p_cm", Signature::kSize, false},
      {"setup_enclave", chain::Address::kSize, false},
      {"prog", config_.prog.size()},
  };
  if (r->bm.record) out.push_back({"Hash(samples)", Digest::kSize});
  if (r->bm.outp) out.push_back({"outp", r->bm.outp->size()});
  if (r->bm.outp) out.push_back({"price", sizeof(chain::Amount), false});
  return out;
}

// --- BE ---------------------------------------------------------------------------

BEContract::BEContract(BMContract& bm, Deadlines deadlines) : bm_(bm), deadlines_(deadlines) {}

const Sale* BEContract::sale(std::uint64_t id) const {
  auto it = sales_.find(id);
  return it == sales_.end() ? nullptr : &it->second;
}

const Sale* BEContract::latest_sale(const Digest& id_m) const {
  auto it = latest_.find(id_m);
  return it == latest_.end() ? nullptr : sale(it->second);
}

Sale& BEContract::active(const Digest& id_m) {
  auto it = latest_.find(id_m);
  if (it == latest_.end()) throw ContractReject("no sale for model");
  return sales_.at(it->second);
}

void BEContract::on_tx(chain::Context& ctx, const chain::Transaction& tx) {
  if (tx.method == "init") return on_init(ctx, tx);
  if (tx.method == "request") return on_request(ctx, tx);
  if (tx.method == "publish") return on_publish(ctx, tx);
  throw ContractReject("unknown method");
}

void BEContract::on_init(chain::Context& ctx, const chain::Transaction& tx) {
  if (tx.kind != chain::TxKind::kPlain) throw ContractReject("init must be a plain tx");
  ByteReader in(tx.payload);
  const auto id_m = in.fixed<Digest>();
  Commitment com_k{in.fixed<Digest>()};
  const auto p_k = in.fixed<Signature>();
  const chain::Amount deposit = in.i64();
  in.expect_done();

  const ModelReport* r = bm_.report(id_m);
  if (r == nullptr) throw ContractReject("unknown model");
  if (r->state == SaleState::kSold) throw ContractReject("model already SOLD");
  if (r->state != SaleState::kBenchmarked) throw ContractReject("model not benchmarked");
  if (!r->for_sale) throw ContractReject("model rejected for sale");
  if (const Sale* s = latest_sale(id_m);
      s != nullptr && (s->phase == BePhase::kInitiated || s->phase == BePhase::kRequested)) {
    throw ContractReject("sale in progress");
  }
  if (com_k != r->reg.com_k) throw ContractReject("Com_k does not match the report");
  if (!verify(enclave_key(ctx.ledger(), r->reg.setup_enclave),
              tee::proof_k_message(r->reg.addr_m, com_k), p_k)) {
    throw ContractReject("p_k invalid");
  }
  if (deposit < r->price) throw ContractReject("deposit below price");

  Sale s;
  s.id = next_sale_;
  s.id_m = id_m;
  s.buyer = tx.sender;
  s.seller = r->seller;
  s.deposit = deposit;
  s.escrow = ctx.escrow(tx.sender, deposit);  // rejects if balance < deposit
  s.t1_prime = ctx.now() + deadlines_.t1_prime;
  s.com_k = com_k;
  s.p_k = p_k;
  ++next_sale_;
  latest_[id_m] = s.id;
  const auto& stored = sales_.emplace(s.id, std::move(s)).first->second;
  ctx.emit("initiated", {{"sale", std::to_string(stored.id)},
                         {"ID_m", chain::field_hex(id_m)},
                         {"buyer", chain::field_hex(stored.buyer)},
                         {"deposit", std::to_string(deposit)},
                         {"T1'", std::to_string(stored.t1_prime)},
                         {"phase", to_string(stored.phase)}});
}

void BEContract::on_request(chain::Context& ctx, const chain::Transaction& tx) {
  if (tx.kind != chain::TxKind::kPlain) throw ContractReject("request must be a plain tx");
  ByteReader in(tx.payload);
  const auto id_m = in.fixed<Digest>();
  const auto pk_b = in.fixed<PublicKey>();
  in.expect_done();
  Sale& s = active(id_m);
  if (s.phase != BePhase::kInitiated) throw ContractReject("sale not awaiting request");
  if (tx.sender != s.buyer) throw ContractReject("only the buyer may request");
  if (ctx.now() > s.t1_prime) throw ContractReject("request after T1'");
  s.pk_b = pk_b;
  s.phase = BePhase::kRequested;
  ctx.emit("key_request", {{"sale", std::to_string(s.id)},
                           {"ID_m", chain::field_hex(id_m)},
                           {"seller", chain::field_hex(s.seller)},
                           {"pk_B", chain::field_hex(pk_b)},
                           {"Com_k", chain::field_hex(s.com_k.value)},
                           {"phase", to_string(s.phase)}});
}

void BEContract::on_publish(chain::Context& ctx, const chain::Transaction& tx) {
  require_attestation(tx);
  ByteReader in(tx.payload);
  const auto id_m = in.fixed<Digest>();
  const auto sigma = in.fixed<Signature>();
  const auto pk_b = in.fixed<PublicKey>();
  const ByteView rest = in.raw(in.remaining());
  const Bytes aenc(rest.begin(), rest.end());
  Sale& s = active(id_m);
  if (s.phase != BePhase::kRequested) throw ContractReject("sale not awaiting key");
  if (ctx.now() > s.t1_prime) throw ContractReject("publish after T1'");
  if (!s.pk_b || pk_b != *s.pk_b) throw ContractReject("pk_B mismatch");
  if (!verify(enclave_key(ctx.ledger(), tx.sender),
              tee::key_message(hash(tee::monetization_program()), s.com_k, pk_b, aenc), sigma)) {
    throw ContractReject("key-release attestation invalid");
  }
  ctx.release(s.escrow, s.seller);
  s.sigma = sigma;
  s.aenc = aenc;
  s.phase = BePhase::kClaimed;
  bm_.mark_sold(id_m);
  ctx.emit("claimed", {{"sale", std::to_string(s.id)},
                       {"ID_m", chain::field_hex(id_m)},
                       {"AEnc", to_hex(aenc)},
                       {"pk_B", chain::field_hex(pk_b)},
                       {"paid", std::to_string(s.deposit)},
                       {"phase", to_string(s.phase)}});
}

void BEContract::on_round(chain::Context& ctx) {
  for (auto& [id, s] : sales_) {
    if ((s.phase == BePhase::kInitiated || s.phase == BePhase::kRequested) &&
        ctx.now() > s.t1_prime) {
      ctx.refund(s.escrow);
      s.phase = BePhase::kAborted;
      ctx.emit("aborted", {{"sale", std::to_string(id)},
                           {"ID_m", chain::field_hex(s.id_m)},
                           {"refund", std::to_string(s.deposit)},
                           {"phase", to_string(s.phase)}});
    }
  }
}

std::vector<StoredItem> BEContract::storage(std::uint64_t sale_id) const {
  const Sale* s = sale(sale_id);
  if (s == nullptr) return {};
  std::vector<StoredItem> out = {
      {"Com_k", Digest::kSize},
      {"ID_m", Digest::kSize},
      {"p_k", Signature::kSize},
      {"deposit", sizeof(chain::Amount), false},
  };
  if (s->pk_b) out.push_back({"pk_B", PublicKey::kSize});
  if (s->aenc) out.push_back({"AEnc", s->aenc->size()});
  if (s->sigma) out.push_back({"sigma_o'", Signature::kSize});
  return out;
}

}  // namespace bazaar::contracts
