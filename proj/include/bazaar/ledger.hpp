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

// Simulated chain: accounts, a round clock, blocks and hosted contracts.
//
// Time only moves in advance_round(). Each call seals the mempool into block
// T+1, runs every transaction against its target contract in submission
// order, then gives every contract an on_round() tick (timeouts). A handler
// rejects a transaction by throwing ContractReject; money movements made by
// a rejected handler are rolled back.

#ifndef BAZAAR_LEDGER_HPP_
#define BAZAAR_LEDGER_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bazaar/bytes.hpp"
#include "bazaar/crypto.hpp"

namespace bazaar::chain {

struct AddressTag {};
using Address = FixedBytes<20, AddressTag>;
using Amount = std::int64_t;
using Round = std::uint64_t;
using EscrowId = std::uint64_t;

/// First 20 bytes of hash("bazaar.addr" || pk).
Address address_of(const PublicKey& pk);

struct Account {
  Address address;
  PublicKey key;
  Amount balance = 0;
  std::optional<PublicKey> enclave_key;
};

enum class TxKind : std::uint8_t { kPlain = 0, kAttestation = 1 };

/// A zero target addresses the ledger itself (built-in "transfer").
struct Transaction {
  Address sender;
  Address target;
  TxKind kind = TxKind::kPlain;
  std::string method;
  Bytes payload;
  Signature sig;

  /// Bytes covered by the signature.
  Bytes body() const;
  Digest id() const;
};

/// Signs with an account key (plain) or an enclave key (attestation).
Transaction make_tx(const SecretKey& sk, const Address& sender, const Address& target,
                    TxKind kind, std::string method, Bytes payload);

struct Event {
  Round round = 0;
  Address contract;
  std::string kind;
  std::vector<std::pair<std::string, std::string>> fields;

  std::string field(const std::string& name) const;
  bool has(const std::string& name) const;
};

struct Receipt {
  Digest tx;
  bool accepted = false;
  std::string reason;
};

struct Block {
  Round height = 0;
  Digest parent;
  std::vector<Transaction> txs;
  std::vector<Receipt> receipts;
  std::vector<Event> events;
  Digest hash;
};

class ContractReject : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Ledger;

/// Capabilities a contract handler gets while it runs.
class Context {
 public:
  Context(Ledger& ledger, Address self) : ledger_(ledger), self_(self) {}

  Round now() const;
  /// Hash of the most recent sealed block (the anchor enclaves derive keys from).
  Digest anchor() const;
  const Address& self() const { return self_; }
  const Ledger& ledger() const { return ledger_; }

  void transfer(const Address& from, const Address& to, Amount amount);
  EscrowId escrow(const Address& from, Amount amount);
  void release(EscrowId id, const Address& to);
  void refund(EscrowId id);
  Amount escrowed(EscrowId id) const;

  using Fields = std::vector<std::pair<std::string, std::string>>;
  void emit(std::string kind, Fields fields = {});

 private:
  Ledger& ledger_;
  Address self_;
};

class Contract {
 public:
  virtual ~Contract() = default;
  virtual std::string name() const = 0;
  virtual void on_tx(Context& ctx, const Transaction& tx) = 0;
  virtual void on_round(Context&) {}
};

struct SubmitResult {
  bool accepted = false;
  std::string reason;
  explicit operator bool() const { return accepted; }
};

class Ledger {
 public:
  Ledger();

  /// Genesis-style account creation; the balance is minted.
  Address create_account(const PublicKey& key, Amount balance);
  /// Binds an enclave attestation key to an account. Immutable once set.
  void bind_enclave(const Address& account, const PublicKey& enclave_key);

  Address deploy(std::unique_ptr<Contract> contract);
  template <typename T>
  T& contract(const Address& addr) {
    return dynamic_cast<T&>(*contracts_.at(addr));
  }
  template <typename T>
  const T& contract(const Address& addr) const {
    return dynamic_cast<const T&>(*contracts_.at(addr));
  }
  bool is_contract(const Address& addr) const { return contracts_.contains(addr); }

  SubmitResult submit(Transaction tx);
  const Block& advance_round();

  Round now() const { return blocks_.back().height; }
  const Digest& head_hash() const { return blocks_.back().hash; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& block(Round height) const { return blocks_.at(height); }
  std::size_t mempool_size() const { return mempool_.size(); }

  bool has_account(const Address& addr) const { return accounts_.contains(addr); }
  const Account& account(const Address& addr) const { return accounts_.at(addr); }
  Amount balance(const Address& addr) const;
  Amount escrowed_total() const;
  Amount total_supply() const;
  Amount minted() const { return minted_; }
  const std::map<Address, Account>& accounts() const { return accounts_; }

  /// All events from every sealed block, oldest first.
  std::vector<Event> events_since(Round round) const;

  /// One JSON object per block.
  void export_jsonl(std::ostream& out) const;
  Digest log_digest() const;

 private:
  friend class Context;

  struct EscrowEntry {
    Address owner;
    Address contract;
    Amount amount = 0;
  };

  Digest block_hash(const Block& b) const;

  std::map<Address, Account> accounts_;
  std::map<Address, std::unique_ptr<Contract>> contracts_;
  std::vector<Address> contract_order_;
  std::map<EscrowId, EscrowEntry> escrows_;
  EscrowId next_escrow_ = 1;
  std::vector<Transaction> mempool_;
  std::set<Digest> seen_;
  std::vector<Block> blocks_;
  std::vector<Event> pending_events_;
  Amount minted_ = 0;
};

/// Hex-encodes fixed values for event fields.
template <typename T>
std::string field_hex(const T& value) {
  return to_hex(value);
}

}  // namespace bazaar::chain

#endif  // BAZAAR_LEDGER_HPP_
