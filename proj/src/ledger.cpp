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

#include "bazaar/ledger.hpp"

#include <nlohmann/json.hpp>

namespace bazaar::chain {

Address address_of(const PublicKey& pk) {
  ByteWriter w;
  w.str("bazaar.addr").raw(pk);
  const Digest d = hash(w.bytes());
  return Address::from(d.view().first(Address::kSize));
}

Bytes Transaction::body() const {
  ByteWriter w;
  w.str("bazaar.tx").raw(sender).raw(target).u8(static_cast<std::uint8_t>(kind)).str(method);
  w.blob(payload);
  return std::move(w).take();
}

Digest Transaction::id() const {
  ByteWriter w;
  w.raw(body()).raw(sig);
  return hash(w.bytes());
}

Transaction make_tx(const SecretKey& sk, const Address& sender, const Address& target,
                    TxKind kind, std::string method, Bytes payload) {
  Transaction tx;
  tx.sender = sender;
  tx.target = target;
  tx.kind = kind;
  tx.method = std::move(method);
  tx.payload = std::move(payload);
  tx.sig = sign(sk, tx.body());
  return tx;
}

std::string Event::field(const std::string& name) const {
  for (const auto& [k, v] : fields) {
    if (k == name) return v;
  }
  throw std::out_of_range("event " + kind + " has no field " + name);
}

bool Event::has(const std::string& name) const {
  for (const auto& [k, v] : fields) {
    if (k == name) return true;
  }
  return false;
}

// --- context ----------------------------------------------------------------

Round Context::now() const { return ledger_.now() + 1; }

Digest Context::anchor() const { return ledger_.head_hash(); }

void Context::transfer(const Address& from, const Address& to, Amount amount) {
  if (amount < 0) throw ContractReject("negative transfer");
  auto src = ledger_.accounts_.find(from);
  auto dst = ledger_.accounts_.find(to);
  if (src == ledger_.accounts_.end() || dst == ledger_.accounts_.end()) {
    throw ContractReject("transfer between unknown accounts");
  }
  if (src->second.balance < amount) throw ContractReject("insufficient funds");
  src->second.balance -= amount;
  dst->second.balance += amount;
}

EscrowId Context::escrow(const Address& from, Amount amount) {
  if (amount < 0) throw ContractReject("negative escrow");
  auto src = ledger_.accounts_.find(from);
  if (src == ledger_.accounts_.end()) throw ContractReject("escrow from unknown account");
  if (src->second.balance < amount) throw ContractReject("insufficient funds");
  src->second.balance -= amount;
  const EscrowId id = ledger_.next_escrow_++;
  ledger_.escrows_[id] = Ledger::EscrowEntry{from, self_, amount};
  return id;
}

void Context::release(EscrowId id, const Address& to) {
  auto it = ledger_.escrows_.find(id);
  if (it == ledger_.escrows_.end() || it->second.contract != self_) {
    throw ContractReject("unknown escrow");
  }
  auto dst = ledger_.accounts_.find(to);
  if (dst == ledger_.accounts_.end()) throw ContractReject("release to unknown account");
  dst->second.balance += it->second.amount;
  ledger_.escrows_.erase(it);
}

void Context::refund(EscrowId id) {
  auto it = ledger_.escrows_.find(id);
  if (it == ledger_.escrows_.end() || it->second.contract != self_) {
    throw ContractReject("unknown escrow");
  }
  ledger_.accounts_.at(it->second.owner).balance += it->second.amount;
  ledger_.escrows_.erase(it);
}

Amount Context::escrowed(EscrowId id) const {
  auto it = ledger_.escrows_.find(id);
  return it == ledger_.escrows_.end() ? 0 : it->second.amount;
}

void Context::emit(std::string kind, Fields fields) {
  Event e;
  e.round = now();
  e.contract = self_;
  e.kind = std::move(kind);
  e.fields = std::move(fields);
  ledger_.pending_events_.push_back(std::move(e));
}

// --- ledger -----------------------------------------------------------------

Ledger::Ledger() {
  Block genesis;
  genesis.height = 0;
  genesis.hash = block_hash(genesis);
  blocks_.push_back(std::move(genesis));
}

Address Ledger::create_account(const PublicKey& key, Amount balance) {
  if (balance < 0) throw std::invalid_argument("negative opening balance");
  const Address addr = address_of(key);
  if (accounts_.contains(addr)) throw std::invalid_argument("account already exists");
  accounts_[addr] = Account{addr, key, balance, std::nullopt};
  minted_ += balance;
  return addr;
}

void Ledger::bind_enclave(const Address& account, const PublicKey& enclave_key) {
  Account& a = accounts_.at(account);
  if (a.enclave_key) throw std::logic_error("enclave key already bound");
  a.enclave_key = enclave_key;
}

Address Ledger::deploy(std::unique_ptr<Contract> contract) {
  ByteWriter w;
  w.str("bazaar.contract").str(contract->name()).u64(contract_order_.size());
  const Address addr = Address::from(hash(w.bytes()).view().first(Address::kSize));
  contract_order_.push_back(addr);
  contracts_[addr] = std::move(contract);
  return addr;
}

SubmitResult Ledger::submit(Transaction tx) {
  auto it = accounts_.find(tx.sender);
  if (it == accounts_.end()) return {false, "unknown sender"};
  const Account& sender = it->second;
  const PublicKey* key = &sender.key;
  if (tx.kind == TxKind::kAttestation) {
    if (!sender.enclave_key) return {false, "unbound enclave key"};
    key = &*sender.enclave_key;
  }
  if (!verify(*key, tx.body(), tx.sig)) return {false, "bad signature"};
  if (!tx.target.is_zero() && !contracts_.contains(tx.target)) return {false, "unknown target"};
  const Digest id = tx.id();
  if (seen_.contains(id)) return {false, "duplicate transaction"};
  seen_.insert(id);
  mempool_.push_back(std::move(tx));
  return {true, ""};
}

const Block& Ledger::advance_round() {
  Block b;
  b.height = now() + 1;
  b.parent = head_hash();
  b.txs = std::move(mempool_);
  mempool_.clear();
  pending_events_.clear();

  for (const Transaction& tx : b.txs) {
    Receipt r;
    r.tx = tx.id();
    const auto saved_accounts = accounts_;
    const auto saved_escrows = escrows_;
    const std::size_t saved_events = pending_events_.size();
    try {
      if (tx.target.is_zero()) {
        if (tx.method != "transfer" || tx.kind != TxKind::kPlain) {
          throw ContractReject("unknown ledger method");
        }
        ByteReader in(tx.payload);
        const Address to = in.fixed<Address>();
        const Amount amount = in.i64();
        in.expect_done();
        Context ctx(*this, Address{});
        ctx.transfer(tx.sender, to, amount);
      } else {
        Context ctx(*this, tx.target);
        contracts_.at(tx.target)->on_tx(ctx, tx);
      }
      r.accepted = true;
    } catch (const ContractReject& e) {
      r.reason = e.what();
    } catch (const DecodeError& e) {
      r.reason = std::string("malformed payload: ") + e.what();
    }
    if (!r.accepted) {
      accounts_ = saved_accounts;
      escrows_ = saved_escrows;
      pending_events_.resize(saved_events);
    }
    b.receipts.push_back(std::move(r));
  }
  for (const Address& addr : contract_order_) {
    Context ctx(*this, addr);
    contracts_.at(addr)->on_round(ctx);
  }
  b.events = std::move(pending_events_);
  pending_events_.clear();
  b.hash = block_hash(b);
  blocks_.push_back(std::move(b));
  return blocks_.back();
}

Amount Ledger::balance(const Address& addr) const {
  auto it = accounts_.find(addr);
  return it == accounts_.end() ? 0 : it->second.balance;
}

Amount Ledger::escrowed_total() const {
  Amount total = 0;
  for (const auto& [id, e] : escrows_) total += e.amount;
  return total;
}

Amount Ledger::total_supply() const {
  Amount total = escrowed_total();
  for (const auto& [addr, a] : accounts_) total += a.balance;
  return total;
}

std::vector<Event> Ledger::events_since(Round round) const {
  std::vector<Event> out;
  for (const Block& b : blocks_) {
    if (b.height < round) continue;
    out.insert(out.end(), b.events.begin(), b.events.end());
  }
  return out;
}

Digest Ledger::block_hash(const Block& b) const {
  ByteWriter w;
  w.str("bazaar.block").u64(b.height).raw(b.parent);
  w.u32(static_cast<std::uint32_t>(b.txs.size()));
  for (const Transaction& tx : b.txs) w.raw(tx.id());
  for (const Receipt& r : b.receipts) w.raw(r.tx).u8(r.accepted).str(r.reason);
  w.u32(static_cast<std::uint32_t>(b.events.size()));
  for (const Event& e : b.events) {
    w.u64(e.round).raw(e.contract).str(e.kind).u32(static_cast<std::uint32_t>(e.fields.size()));
    for (const auto& [k, v] : e.fields) w.str(k).str(v);
  }
  return hash(w.bytes());
}

void Ledger::export_jsonl(std::ostream& out) const {
  for (const Block& b : blocks_) {
    nlohmann::ordered_json j;
    j["height"] = b.height;
    j["parent"] = to_hex(b.parent);
    j["hash"] = to_hex(b.hash);
    j["txs"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < b.txs.size(); ++i) {
      const Transaction& tx = b.txs[i];
      nlohmann::ordered_json t;
      t["id"] = to_hex(b.receipts[i].tx);
      t["sender"] = to_hex(tx.sender);
      t["target"] = to_hex(tx.target);
      t["kind"] = tx.kind == TxKind::kPlain ? "plain" : "attestation";
      t["method"] = tx.method;
      t["payload_bytes"] = tx.payload.size();
      t["accepted"] = b.receipts[i].accepted;
      if (!b.receipts[i].accepted) t["reason"] = b.receipts[i].reason;
      j["txs"].push_back(std::move(t));
    }
    j["events"] = nlohmann::ordered_json::array();
    for (const Event& e : b.events) {
      nlohmann::ordered_json ev;
      ev["T"] = e.round;
      ev["contract"] = to_hex(e.contract);
      ev["kind"] = e.kind;
      for (const auto& [k, v] : e.fields) ev[k] = v;
      j["events"].push_back(std::move(ev));
    }
    out << j.dump() << "\n";
  }
}

Digest Ledger::log_digest() const {
  ByteWriter w;
  for (const Block& b : blocks_) w.raw(b.hash);
  return hash(w.bytes());
}

}  // namespace bazaar::chain
