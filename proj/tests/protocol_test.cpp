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

#include <gtest/gtest.h>

#include <sstream>

namespace bazaar::protocol {
namespace {

std::string Export(const Market& m) {
  std::ostringstream out;
  m.export_jsonl(out);
  return out.str();
}

TEST(BlobStoreTest, AddressIsHashOfCiphertext) {
  BlobStore store;
  const Bytes blob = {1, 2, 3};
  const Digest a = store.put(blob);
  EXPECT_EQ(a, hash(blob));
  ASSERT_NE(store.get(a), nullptr);
  EXPECT_EQ(*store.get(a), blob);
  EXPECT_EQ(store.get(hash(Bytes{4})), nullptr);
}

TEST(AccountBytes, ForwardedBytesCountForTheReceiverOnly) {
  Transcript t;
  t.send(1, "f", "a", "b", "x", 10);
  t.send(1, "f", "b", "c", "x", 10, true, true);
  t.send(1, "f", "a", "c", "coin", 32, false);
  t.store("f", "c", "x", 10);
  t.store("f", "c", "coin", 32, false);
  const auto tot = account_bytes(t).at("f");
  EXPECT_EQ(tot.at("a"), (Totals{0, 10}));
  EXPECT_EQ(tot.at("b"), (Totals{0, 10}));
  EXPECT_EQ(tot.at("c"), (Totals{10, 10}));
}

TEST(ScenarioFile, RoundTrip) {
  Scenario s = default_scenario(9);
  s.sellers[1].strategy = Strategy::kSwapKey;
  s.sellers[2].key_delay = 3;
  s.buyers[0].deposit = 777;
  const Scenario back = Scenario::from_json(s.to_json());
  EXPECT_EQ(back.to_json(), s.to_json());
  EXPECT_EQ(back.sellers[1].strategy, Strategy::kSwapKey);
  EXPECT_EQ(back.buyers[0].deposit, 777);
  EXPECT_THROW(Scenario::from_json("{\"format\": \"other\"}"), std::invalid_argument);
  EXPECT_THROW(strategy_from_string("bribe"), std::invalid_argument);
}

class HonestRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    market_ = new Market(attack_scenario(Strategy::kHonest, 3));
    market_->run();
  }
  static void TearDownTestSuite() {
    delete market_;
    market_ = nullptr;
  }
  static Market* market_;
};
Market* HonestRun::market_ = nullptr;

TEST_F(HonestRun, ModelIsBenchmarkedSoldAndDelivered) {
  const Market& m = *market_;
  const auto* r = m.bm().report(m.model_id("alice"));
  ASSERT_NE(r, nullptr);
  EXPECT_EQ(r->state, contracts::SaleState::kSold);
  ASSERT_TRUE(r->metrics.has_value());
  EXPECT_DOUBLE_EQ(r->metrics->nature_accuracy(), 0.65);
  ASSERT_TRUE(m.recovered_model("bob").has_value());
  EXPECT_EQ(*m.recovered_model("bob"), m.model_bytes("alice"));
  EXPECT_EQ(m.transcript().verdict_for("buy:bob")->outcome, "claimed");
  const auto f = m.fairness();
  ASSERT_EQ(f.size(), 1u);
  EXPECT_TRUE(f[0].seller_paid && f[0].buyer_has_model);
  EXPECT_TRUE(m.money_conserved());
  EXPECT_EQ(m.ledger().balance(m.address("seller:alice")) +
                m.ledger().balance(m.address("buyer:bob")),
            100000 + 5);  // the price moved; plus one relay fee earned by alice
}

TEST_F(HonestRun, PublishedMetricsMatchStraightLineEvaluation) {
  const Market& m = *market_;
  const auto* samples = m.delivered_samples("alice");
  ASSERT_NE(samples, nullptr);
  const auto prog = tee::BenchmarkProgram::deserialize(m.bm().prog());
  const auto baseline = bench::ToyModel::deserialize(prog.baseline_model);
  const auto model = bench::ToyModel::deserialize(m.model_bytes("alice"));
  const auto expect = bench::evaluate(model, *samples, bench::measure_baseline(baseline, *samples),
                                      hash(prog.baseline_model));
  EXPECT_EQ(*m.bm().report(m.model_id("alice"))->metrics, expect);
}

TEST_F(HonestRun, AllNineTotalsMatchTheClosedForms) {
  const Market& m = *market_;
  // Sizes from the artifacts themselves, not from the transcript.
  Sizes z;
  z.prog = m.bm().prog().size();
  z.model = m.model_bytes("alice").size();
  z.samples = bench::digest_bundle(*m.delivered_samples("alice")).encoded_bytes;
  z.outp = m.bm().report(m.model_id("alice"))->metrics->serialize().size();
  z.aenc = aenc_size(SymmetricKey::kSize);
  const auto rows = check_accounting(m.transcript(), "alice", "bob", *m.sale_of("bob"), z);
  ASSERT_EQ(rows.size(), 9u);
  for (const auto& r : rows) EXPECT_TRUE(r.ok()) << r.name << ": " << r.expected << " vs " << r.actual;
  EXPECT_EQ(rows[6].expected, 198u);  // buyer: 2 x 32 + 64 + 70
}

TEST_F(HonestRun, TranscriptNeverCarriesModelOrKeyBytes) {
  const Market& m = *market_;
  const std::string log = Export(m);
  EXPECT_EQ(log.find(to_hex(m.model_key("alice"))), std::string::npos);
  const Bytes& model = m.model_bytes("alice");
  const std::string body = to_hex(ByteView(model).subspan(model.size() / 2, 16));
  EXPECT_EQ(log.find(body), std::string::npos);
}

TEST(ProtocolRun, AccountingHoldsAcrossConfigurations) {
  for (std::uint64_t seed : {5u, 6u}) {
    Scenario s = attack_scenario(Strategy::kHonest, seed);
    s.sellers[0].hidden = {seed == 5 ? 96u : 160u};
    s.samples = {seed == 5 ? 6u : 12u, 20, 0};
    Market m(s);
    m.run();
    ASSERT_TRUE(m.sale_of("bob").has_value());
    for (const auto& r : check_accounting(m.transcript(), "alice", "bob", *m.sale_of("bob"),
                                          m.sizes("alice"))) {
      EXPECT_TRUE(r.ok()) << "seed " << seed << " " << r.name;
    }
  }
}

struct Expect {
  Strategy strategy;
  const char* bm_prefix;
  const char* buyer_prefix;
};

class Adversary : public ::testing::TestWithParam<Expect> {};

TEST_P(Adversary, EndsInCleanAbortOrRefund) {
  const Expect e = GetParam();
  Market m(attack_scenario(e.strategy, 2));
  m.run();
  const auto bm = m.transcript().verdict_for("bm:alice");
  const auto buy = m.transcript().verdict_for("buy:bob");
  ASSERT_TRUE(bm && buy);
  EXPECT_EQ(bm->outcome.rfind(e.bm_prefix, 0), 0u) << bm->outcome;
  EXPECT_EQ(buy->outcome.rfind(e.buyer_prefix, 0), 0u) << buy->outcome;
  const auto f = m.fairness().front();
  EXPECT_FALSE(f.seller_paid);
  EXPECT_FALSE(f.buyer_has_model);
  EXPECT_TRUE(m.money_conserved());
  EXPECT_EQ(m.ledger().balance(m.address("buyer:bob")), 100000);
  const auto* r = m.bm().report(m.model_id("alice"));
  ASSERT_NE(r, nullptr);
  if (std::string(e.bm_prefix) == "aborted") EXPECT_FALSE(r->metrics.has_value());
  EXPECT_NE(r->state, contracts::SaleState::kSold);
}

INSTANTIATE_TEST_SUITE_P(
    Strategies, Adversary,
    ::testing::Values(Expect{Strategy::kForgeModel, "aborted: no commit by T2", "blocked"},
                      Expect{Strategy::kRollback, "aborted: no output by T3", "blocked"},
                      Expect{Strategy::kTamperSamples, "aborted: no output by T3", "blocked"},
                      Expect{Strategy::kWithholdKey, "listed", "refunded"},
                      Expect{Strategy::kSwapKey, "listed", "refunded"},
                      Expect{Strategy::kRepudiate, "listed", "refunded"}),
    [](const auto& info) { return std::string(to_string(info.param.strategy)); });

TEST(ProtocolRun, KeyDelayAtT1PrimeSettlesOneLaterRefunds) {
  for (chain::Round delay : {2u, 3u}) {
    Scenario s = attack_scenario(Strategy::kHonest, 4);
    s.sellers[0].key_delay = delay;
    Market m(s);
    m.run();
    const auto* sale = m.be().sale(*m.sale_of("bob"));
    ASSERT_NE(sale, nullptr);
    if (delay == 2) {
      EXPECT_EQ(sale->phase, contracts::BePhase::kClaimed);
      EXPECT_EQ(m.transcript().verdict_for("buy:bob")->round, sale->t1_prime);
    } else {
      EXPECT_EQ(sale->phase, contracts::BePhase::kAborted);
      EXPECT_EQ(m.transcript().verdict_for("buy:bob")->round, sale->t1_prime + 1);
    }
    const auto f = m.fairness().front();
    EXPECT_TRUE(f.fair());
    EXPECT_TRUE(m.money_conserved());
  }
}

TEST(ProtocolRun, DeterministicInSeed) {
  const Scenario s = attack_scenario(Strategy::kHonest, 8);
  const std::string a = simulate(s);
  EXPECT_EQ(a, simulate(s));
  EXPECT_NE(a, simulate(attack_scenario(Strategy::kHonest, 9)));
}

TEST(ProtocolRun, ConcurrentSecondBuyerIsRejected) {
  Scenario s = attack_scenario(Strategy::kHonest, 2);
  s.buyers.push_back({"zoe", 100000, "alice", std::nullopt, Strategy::kHonest});
  Market m(s);
  m.run();
  EXPECT_EQ(m.transcript().verdict_for("buy:bob")->outcome, "claimed");
  EXPECT_EQ(m.transcript().verdict_for("buy:zoe")->outcome, "rejected: sale in progress");
  EXPECT_EQ(m.ledger().balance(m.address("buyer:zoe")), 100000);
  for (const auto& f : m.fairness()) EXPECT_TRUE(f.fair());
}

TEST(ProtocolRun, BelowGateModelIsNotOffered) {
  Scenario s = attack_scenario(Strategy::kHonest, 2);
  s.sellers[0].accuracy = 0.55;
  Market m(s);
  m.run();
  const auto* r = m.bm().report(m.model_id("alice"));
  EXPECT_DOUBLE_EQ(r->metrics->nature_accuracy(), 0.55);
  EXPECT_FALSE(r->for_sale);
  EXPECT_EQ(m.transcript().verdict_for("buy:bob")->outcome, "rejected: model rejected for sale");
}

}  // namespace
}  // namespace bazaar::protocol
