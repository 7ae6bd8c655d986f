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

#include <gtest/gtest.h>

#include <sstream>

namespace bazaar::chain {
namespace {

// Accepts "ping" only while T < deadline.
class DeadlineContract : public Contract {
 public:
  explicit DeadlineContract(Round deadline) : deadline_(deadline) {}
  std::string name() const override { return "deadline"; }
  void on_tx(Context& ctx, const Transaction&) override {
    if (!(ctx.now() < deadline_)) throw ContractReject("late");
    ctx.emit("pong", {{"T", std::to_string(ctx.now())}});
  }

 private:
  Round deadline_;
};

// Minimal escrow: "lock" escrows the payload amount, "pay" releases it to the
// payload address, "fail" escrows and then rejects.
class EscrowContract : public Contract {
 public:
  std::string name() const override { return "escrow"; }
  void on_tx(Context& ctx, const Transaction& tx) override {
    ByteReader in(tx.payload);
    if (tx.method == "lock") {
      id = ctx.escrow(tx.sender, in.i64());
    } else if (tx.method == "pay") {
      ctx.release(id, in.fixed<Address>());
    } else if (tx.method == "refund") {
      ctx.refund(id);
    } else if (tx.method == "fail") {
      ctx.escrow(tx.sender, in.i64());
      throw ContractReject("changed my mind");
    }
  }
  EscrowId id = 0;
};

struct Party {
  KeyPair kp;
  Address addr;
};

class LedgerTest : public ::testing::Test {
 protected:
  Party Make(Amount balance) {
    Party p{generate_keypair(rng_), {}};
    p.addr = ledger_.create_account(p.kp.pk, balance);
    return p;
  }
  Bytes Amt(Amount a) {
    ByteWriter w;
    w.i64(a);
    return std::move(w).take();
  }

  Rng rng_{42};
  Ledger ledger_;
};

TEST_F(LedgerTest, PlainTxAcceptedAndBadOnesRejected) {
  Party alice = Make(100);
  Party bob = Make(0);
  const Address c = ledger_.deploy(std::make_unique<DeadlineContract>(10));
  Transaction tx = make_tx(alice.kp.sk, alice.addr, c, TxKind::kPlain, "ping", {});
  EXPECT_TRUE(ledger_.submit(tx));
  EXPECT_EQ(ledger_.submit(tx).reason, "duplicate transaction");

  Transaction flipped = make_tx(alice.kp.sk, alice.addr, c, TxKind::kPlain, "ping", {1});
  flipped.payload[0] ^= 1;
  EXPECT_EQ(ledger_.submit(flipped).reason, "bad signature");

  Transaction forged = make_tx(bob.kp.sk, alice.addr, c, TxKind::kPlain, "ping", {2});
  EXPECT_EQ(ledger_.submit(forged).reason, "bad signature");

  Rng other(7);
  const KeyPair stranger = generate_keypair(other);
  Transaction unknown =
      make_tx(stranger.sk, address_of(stranger.pk), c, TxKind::kPlain, "ping", {});
  EXPECT_EQ(ledger_.submit(unknown).reason, "unknown sender");
}

TEST_F(LedgerTest, AttestationNeedsBoundEnclaveKey) {
  Party host = Make(0);
  const KeyPair tee = generate_keypair(rng_);
  const Address c = ledger_.deploy(std::make_unique<DeadlineContract>(10));
  Transaction att = make_tx(tee.sk, host.addr, c, TxKind::kAttestation, "ping", {});
  EXPECT_EQ(ledger_.submit(att).reason, "unbound enclave key");
  ledger_.bind_enclave(host.addr, tee.pk);
  EXPECT_THROW(ledger_.bind_enclave(host.addr, host.kp.pk), std::logic_error);
  EXPECT_TRUE(ledger_.submit(att));
  // The account key no longer passes as an attestation.
  Transaction wrong = make_tx(host.kp.sk, host.addr, c, TxKind::kAttestation, "ping", {9});
  EXPECT_EQ(ledger_.submit(wrong).reason, "bad signature");
}

TEST_F(LedgerTest, RoundsChainAndClockAdvances) {
  EXPECT_EQ(ledger_.now(), 0u);
  const Block b1 = ledger_.advance_round();
  EXPECT_EQ(b1.height, 1u);
  EXPECT_TRUE(b1.txs.empty());
  const Block b2 = ledger_.advance_round();
  EXPECT_EQ(b2.height, 2u);
  EXPECT_EQ(b2.parent, b1.hash);
  EXPECT_EQ(b1.parent, ledger_.block(0).hash);
  EXPECT_NE(b1.hash, b2.hash);
}

TEST_F(LedgerTest, DeadlineIsExclusive) {
  Party alice = Make(0);
  const Address c = ledger_.deploy(std::make_unique<DeadlineContract>(3));
  ledger_.advance_round();
  ledger_.submit(make_tx(alice.kp.sk, alice.addr, c, TxKind::kPlain, "ping", {1}));
  const Block& at2 = ledger_.advance_round();
  ASSERT_EQ(at2.height, 2u);
  EXPECT_TRUE(at2.receipts.at(0).accepted);
  ledger_.submit(make_tx(alice.kp.sk, alice.addr, c, TxKind::kPlain, "ping", {2}));
  const Block& at3 = ledger_.advance_round();
  ASSERT_EQ(at3.height, 3u);
  EXPECT_FALSE(at3.receipts.at(0).accepted);
  EXPECT_EQ(at3.receipts.at(0).reason, "late");
}

TEST_F(LedgerTest, EscrowReleaseAndRefund) {
  Party buyer = Make(100);
  Party seller = Make(0);
  const Address c = ledger_.deploy(std::make_unique<EscrowContract>());
  auto run = [&](const std::string& method, Bytes payload) {
    ledger_.submit(make_tx(buyer.kp.sk, buyer.addr, c, TxKind::kPlain, method, payload));
    return ledger_.advance_round().receipts.back();
  };
  EXPECT_TRUE(run("lock", Amt(60)).accepted);
  EXPECT_EQ(ledger_.balance(buyer.addr), 40);
  EXPECT_EQ(ledger_.escrowed_total(), 60);
  EXPECT_EQ(ledger_.total_supply(), 100);
  EXPECT_TRUE(run("pay", seller.addr.bytes()).accepted);
  EXPECT_EQ(ledger_.balance(buyer.addr), 40);
  EXPECT_EQ(ledger_.balance(seller.addr), 60);

  EXPECT_FALSE(run("lock", Amt(41)).accepted);
  EXPECT_EQ(ledger_.balance(buyer.addr), 40);

  EXPECT_TRUE(run("lock", Amt(40)).accepted);
  EXPECT_TRUE(run("refund", {}).accepted);
  EXPECT_EQ(ledger_.balance(buyer.addr), 40);
  EXPECT_EQ(ledger_.total_supply(), ledger_.minted());
}

TEST_F(LedgerTest, RejectedHandlerRollsBackMoney) {
  Party buyer = Make(100);
  const Address c = ledger_.deploy(std::make_unique<EscrowContract>());
  ledger_.submit(make_tx(buyer.kp.sk, buyer.addr, c, TxKind::kPlain, "fail", Amt(30)));
  const Block& b = ledger_.advance_round();
  EXPECT_FALSE(b.receipts.at(0).accepted);
  EXPECT_EQ(ledger_.balance(buyer.addr), 100);
  EXPECT_EQ(ledger_.escrowed_total(), 0);
}

TEST_F(LedgerTest, BuiltinTransfer) {
  Party a = Make(10);
  Party b = Make(0);
  ByteWriter w;
  w.raw(b.addr).i64(7);
  ledger_.submit(make_tx(a.kp.sk, a.addr, Address{}, TxKind::kPlain, "transfer", w.bytes()));
  ledger_.advance_round();
  EXPECT_EQ(ledger_.balance(a.addr), 3);
  EXPECT_EQ(ledger_.balance(b.addr), 7);
  ByteWriter w2;
  w2.raw(b.addr).i64(4);
  ledger_.submit(make_tx(a.kp.sk, a.addr, Address{}, TxKind::kPlain, "transfer", w2.bytes()));
  EXPECT_FALSE(ledger_.advance_round().receipts.at(0).accepted);
  EXPECT_EQ(ledger_.balance(a.addr), 3);
}

TEST(LedgerReplayTest, SameScriptSameLog) {
  auto script = [] {
    Rng rng(5);
    Ledger l;
    const KeyPair kp = generate_keypair(rng);
    const Address a = l.create_account(kp.pk, 5);
    const Address c = l.deploy(std::make_unique<DeadlineContract>(4));
    for (std::uint8_t i = 0; i < 5; ++i) {
      l.submit(make_tx(kp.sk, a, c, TxKind::kPlain, "ping", {i}));
      l.advance_round();
    }
    std::ostringstream out;
    l.export_jsonl(out);
    return out.str();
  };
  const std::string first = script();
  EXPECT_EQ(first, script());
  EXPECT_NE(first.find("\"late\""), std::string::npos);
  EXPECT_EQ(std::count(first.begin(), first.end(), '\n'), 6);
}

}  // namespace
}  // namespace bazaar::chain
