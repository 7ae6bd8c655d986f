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

#include "bazaar/relay.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

namespace bazaar::relay {
namespace {

bench::SuiteConfig SmallConfig() {
  bench::SuiteConfig c;
  c.dim = 8;
  c.classes = 4;
  c.per_class = 5;
  c.sequences_per_type = 6;
  c.frames = 5;
  return c;
}

const bench::Suites& SmallSuites() {
  static const bench::Suites s = bench::generate_suites(SmallConfig(), 11);
  return s;
}

TEST(SampleIndices, FullDrawIsAPermutation) {
  Rng rng(3);
  auto idx = sample_indices(50, 50, rng);
  std::sort(idx.begin(), idx.end());
  for (std::uint32_t i = 0; i < 50; ++i) EXPECT_EQ(idx[i], i);
  EXPECT_THROW(sample_indices(5, 6, rng), RelayError);
}

TEST(SampleIndices, RoughlyUniform) {
  // Each index of [0,10) is picked with probability 3/10 per draw.
  Rng rng(9);
  std::vector<int> hits(10, 0);
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    for (auto i : sample_indices(10, 3, rng)) ++hits[i];
  }
  for (int h : hits) EXPECT_NEAR(h / static_cast<double>(trials), 0.3, 0.02);
}

TEST(Bundle, CoversEverySeverityAndIsDeterministic) {
  const SampleParams p{3, 2, 7};
  const auto a = build_bundle(SmallSuites(), p, 77);
  EXPECT_EQ(a.corruption.size(), 3u * bench::kSeverities * 3u);
  EXPECT_EQ(a.perturbation.size(), 3u * 2u);
  EXPECT_EQ(a.clean.size(), 7u);
  for (std::uint32_t c = 0; c < 3; ++c) {
    std::set<int> sevs;
    std::set<std::uint32_t> bases;
    for (const auto& r : a.corruption) {
      if (r.type == c) {
        sevs.insert(r.severity);
        bases.insert(r.base);
      }
    }
    EXPECT_EQ(sevs.size(), bench::kSeverities);
    EXPECT_EQ(bases.size(), 3u);
  }
  const auto b = build_bundle(SmallSuites(), p, 77);
  EXPECT_EQ(bench::digest_bundle(a).root, bench::digest_bundle(b).root);
  const auto c = build_bundle(SmallSuites(), p, 78);
  EXPECT_NE(bench::digest_bundle(a).root, bench::digest_bundle(c).root);
}

TEST(Bundle, OversizedParamsThrow) {
  EXPECT_THROW(build_bundle(SmallSuites(), SampleParams{1, 7, 1}, 1), RelayError);
}

TEST(Intermediator, ExcludesAndIsDeterministic) {
  std::vector<chain::Address> hosts(5);
  for (std::uint8_t i = 0; i < 5; ++i) hosts[i].data[0] = i + 1;
  const Digest bh = hash("block");
  EXPECT_EQ(pick_intermediator({hosts[2]}, {}, bh, 4), hosts[2]);
  EXPECT_THROW(pick_intermediator({hosts[2]}, {hosts[2]}, bh, 4), RelayError);
  std::set<chain::Address> seen;
  for (std::uint64_t id = 0; id < 200; ++id) {
    const auto pick = pick_intermediator(hosts, {hosts[0], hosts[1]}, bh, id);
    EXPECT_NE(pick, hosts[0]);
    EXPECT_NE(pick, hosts[1]);
    EXPECT_EQ(pick, pick_intermediator(hosts, {hosts[0], hosts[1]}, bh, id));
    seen.insert(pick);
  }
  EXPECT_EQ(seen.size(), 3u);
}

class RelayEnclaveTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.publish(kDefaultUrl, SmallSuites());
    Rng rng(21);
    enclave_ = std::make_unique<RelayEnclave>(rng.draw<KeySeed>());
    ledger_.create_account(enclave_->pk(), 0);
    ledger_.bind_enclave(enclave_->account(), enclave_->pk());
  }

  RelayRecord Record(const RelayEnclave::Response& r, const RelayRequest& req) {
    const auto p = RelayPayload::deserialize(r.tx.payload);
    return RelayRecord{p.request_id, req.url, req.params, p.root, p.seed,
                       enclave_->account(), p.sigma, 1};
  }

  DatasetServer server_;
  chain::Ledger ledger_;
  std::unique_ptr<RelayEnclave> enclave_;
};

TEST_F(RelayEnclaveTest, SignedRecordVerifiesAndTamperingBreaksIt) {
  const RelayRequest req{5, kDefaultUrl, SampleParams{2, 2, 4}};
  const auto resp = enclave_->serve(req, hash("anchor"), server_, chain::Address{});
  ASSERT_TRUE(resp.ok);
  EXPECT_EQ(resp.tx.method, "relay");
  EXPECT_EQ(resp.digest.root, bench::digest_bundle(resp.bundle).root);
  const RelayRecord rec = Record(resp, req);
  EXPECT_TRUE(verify_record(ledger_, rec));

  RelayRecord bad = rec;
  bad.seed ^= 1;
  EXPECT_FALSE(verify_record(ledger_, bad));
  bad = rec;
  bad.root.data[3] ^= 0x10;
  EXPECT_FALSE(verify_record(ledger_, bad));
  bad = rec;
  bad.params.clean += 1;
  EXPECT_FALSE(verify_record(ledger_, bad));
  bad = rec;
  bad.url = "bazaar://other";
  EXPECT_FALSE(verify_record(ledger_, bad));
  bad = rec;
  bad.intermediator.data[0] ^= 1;
  EXPECT_FALSE(verify_record(ledger_, bad));
  for (std::size_t i = 0; i < rec.sigma.size(); i += 7) {
    bad = rec;
    bad.sigma.data[i] ^= 0x01;
    EXPECT_FALSE(verify_record(ledger_, bad)) << "byte " << i;
  }
}

TEST_F(RelayEnclaveTest, SeedsDependOnAnchorAndRequest) {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const RelayRequest req{i, kDefaultUrl, SampleParams{1, 1, 1}};
    seeds.insert(enclave_->serve(req, hash("a"), server_, chain::Address{}).seed);
  }
  EXPECT_EQ(seeds.size(), 1000u);
  const RelayRequest req{1, kDefaultUrl, SampleParams{1, 1, 1}};
  EXPECT_NE(enclave_->serve(req, hash("a"), server_, {}).seed,
            enclave_->serve(req, hash("b"), server_, {}).seed);
  EXPECT_EQ(enclave_->serve(req, hash("a"), server_, {}).seed,
            enclave_->serve(req, hash("a"), server_, {}).seed);
}

TEST_F(RelayEnclaveTest, MissingDatasetYieldsFailureTx) {
  const RelayRequest req{2, "bazaar://missing", SampleParams{1, 1, 1}};
  const auto resp = enclave_->serve(req, hash("a"), server_, {});
  EXPECT_FALSE(resp.ok);
  EXPECT_EQ(resp.tx.method, "relay_failed");
}

TEST(RelayPayloadTest, RoundTripAndTruncation) {
  RelayPayload p;
  p.request_id = 9;
  p.root = hash("r");
  p.seed = 1234;
  p.sigma.data[5] = 7;
  const Bytes b = p.serialize();
  EXPECT_EQ(b.size(), 8u + 32u + 8u + 70u);
  const auto q = RelayPayload::deserialize(b);
  EXPECT_EQ(q.root, p.root);
  EXPECT_EQ(q.seed, 1234u);
  EXPECT_EQ(q.sigma, p.sigma);
  EXPECT_THROW(RelayPayload::deserialize(ByteView(b).first(b.size() - 1)), DecodeError);
}

}  // namespace
}  // namespace bazaar::relay
