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

// Authenticated sample relay. An intermediator enclave fetches benchmark
// samples from the dataset server, anchors their digest on-chain with its
// signature, and hands the samples to the requesting seller off-chain.

#ifndef BAZAAR_RELAY_HPP_
#define BAZAAR_RELAY_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bazaar/benchmark.hpp"
#include "bazaar/crypto.hpp"
#include "bazaar/ledger.hpp"

namespace bazaar::relay {

inline constexpr const char* kDefaultUrl = "bazaar://benchmark/v1";

class RelayError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// How many samples a benchmark run draws from each suite. Corruption draws
/// pick base samples and take every type and severity of each; perturbation
/// draws pick whole sequences per type.
struct SampleParams {
  std::uint32_t corruption_bases = 0;
  std::uint32_t sequences_per_type = 0;
  std::uint32_t clean = 0;

  Bytes serialize() const;
  static SampleParams deserialize(ByteReader& in);
  friend bool operator==(const SampleParams&, const SampleParams&) = default;
};

struct RelayRequest {
  std::uint64_t id = 0;
  std::string url;
  SampleParams params;
};

/// On-chain record of one relay.
struct RelayRecord {
  std::uint64_t request_id = 0;
  std::string url;
  SampleParams params;
  Digest root;
  std::uint64_t seed = 0;
  chain::Address intermediator;  // enclave account of the relaying enclave
  Signature sigma;
  chain::Round round = 0;
};

/// Bytes the intermediator signs.
Bytes relay_message(std::uint64_t request_id, const std::string& url, const SampleParams& params,
                    const Digest& root, std::uint64_t seed);

/// Contracts that hold relay records expose them to enclave light clients
/// through this interface.
class RelayRecordView {
 public:
  virtual ~RelayRecordView() = default;
  virtual std::optional<RelayRecord> relay_record_for(const Digest& id_m) const = 0;
};

/// Checks a record's signature against the ledger-bound key of its
/// intermediator account.
bool verify_record(const chain::Ledger& ledger, const RelayRecord& record);

/// Uniform sample of `count` distinct indices from [0, size), in draw order.
/// count == size yields a permutation.
std::vector<std::uint32_t> sample_indices(std::uint32_t size, std::uint32_t count, Rng& rng);

/// Read-only authenticated dataset host.
class DatasetServer {
 public:
  void publish(const std::string& url, bench::Suites suites);
  const bench::Suites* find(const std::string& url) const;

  /// Bundle for (params, seed), records in index order. Throws RelayError if
  /// the URL is unknown or a count exceeds the suite.
  bench::SampleBundle fetch(const std::string& url, const SampleParams& params,
                            std::uint64_t seed) const;

 private:
  std::map<std::string, bench::Suites> datasets_;
};

bench::SampleBundle build_bundle(const bench::Suites& suites, const SampleParams& params,
                                 std::uint64_t seed);

/// Deterministic in (block hash, request id); never returns an excluded host.
/// Throws RelayError when no candidate remains.
chain::Address pick_intermediator(const std::vector<chain::Address>& candidates,
                                  const std::vector<chain::Address>& excluded,
                                  const Digest& block_hash, std::uint64_t request_id);

/// Relay transaction payloads (target: the benchmark contract).
///   "relay":        u64 request id | root | u64 seed | sigma
///   "relay_failed": u64 request id
struct RelayPayload {
  std::uint64_t request_id = 0;
  Digest root;
  std::uint64_t seed = 0;
  Signature sigma;

  Bytes serialize() const;
  static RelayPayload deserialize(ByteView bytes);
};

/// The intermediator's enclave.
class RelayEnclave {
 public:
  explicit RelayEnclave(const KeySeed& seed);

  const PublicKey& pk() const { return kp_.pk; }
  chain::Address account() const { return chain::address_of(kp_.pk); }

  struct Response {
    bool ok = false;
    std::string error;
    bench::SampleBundle bundle;
    bench::BundleDigest digest;
    std::uint64_t seed = 0;
    chain::Transaction tx;
  };

  /// Fetches and signs. On a missing dataset the response carries a
  /// "relay_failed" transaction instead.
  Response serve(const RelayRequest& request, const Digest& anchor, const DatasetServer& server,
                 const chain::Address& contract) const;
  /// "register_relay" attestation naming the host that runs this enclave.
  chain::Transaction announce(const chain::Address& owner, const chain::Address& contract) const;

 private:
  KeyPair kp_;
};

}  // namespace bazaar::relay

#endif  // BAZAAR_RELAY_HPP_
