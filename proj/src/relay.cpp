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

#include <algorithm>
#include <numeric>

namespace bazaar::relay {

Bytes SampleParams::serialize() const {
  ByteWriter w;
  w.u32(corruption_bases).u32(sequences_per_type).u32(clean);
  return std::move(w).take();
}

SampleParams SampleParams::deserialize(ByteReader& in) {
  SampleParams p;
  p.corruption_bases = in.u32();
  p.sequences_per_type = in.u32();
  p.clean = in.u32();
  return p;
}

Bytes relay_message(std::uint64_t request_id, const std::string& url, const SampleParams& params,
                    const Digest& root, std::uint64_t seed) {
  ByteWriter w;
  w.str("bazaar.relay").u64(request_id).str(url).raw(params.serialize()).raw(root).u64(seed);
  return std::move(w).take();
}

bool verify_record(const chain::Ledger& ledger, const RelayRecord& record) {
  if (!ledger.has_account(record.intermediator)) return false;
  const chain::Account& acct = ledger.account(record.intermediator);
  if (!acct.enclave_key) return false;
  return verify(*acct.enclave_key,
                relay_message(record.request_id, record.url, record.params, record.root,
                              record.seed),
                record.sigma);
}

std::vector<std::uint32_t> sample_indices(std::uint32_t size, std::uint32_t count, Rng& rng) {
  if (count > size) throw RelayError("sample count exceeds dataset size");
  std::vector<std::uint32_t> pool(size);
  std::iota(pool.begin(), pool.end(), 0u);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto j = k + static_cast<std::uint32_t>(rng.below(size - k));
    std::swap(pool[k], pool[j]);
  }
  pool.resize(count);
  return pool;
}

bench::SampleBundle build_bundle(const bench::Suites& suites, const SampleParams& params,
                                 std::uint64_t seed) {
  const Rng root(seed);
  bench::SampleBundle out;
  out.corruption_types = suites.corruption.types;
  out.perturbation_types = suites.perturbation.types;

  Rng crng = root.fork("corruption");
  auto bases = sample_indices(suites.corruption.bases, params.corruption_bases, crng);
  std::sort(bases.begin(), bases.end());
  for (std::uint32_t c = 0; c < suites.corruption.types; ++c) {
    for (std::uint32_t s = 1; s <= bench::kSeverities; ++s) {
      for (std::uint32_t b : bases) {
        out.corruption.push_back(suites.corruption.records[suites.corruption.index(c, s, b)]);
      }
    }
  }

  for (std::uint32_t p = 0; p < suites.perturbation.types; ++p) {
    Rng prng = root.fork("perturbation-" + std::to_string(p));
    auto picks =
        sample_indices(suites.perturbation.sequences_per_type, params.sequences_per_type, prng);
    std::sort(picks.begin(), picks.end());
    for (std::uint32_t k : picks) {
      out.perturbation.push_back(
          suites.perturbation.sequences[p * suites.perturbation.sequences_per_type + k]);
    }
  }

  Rng krng = root.fork("clean");
  auto clean = sample_indices(static_cast<std::uint32_t>(suites.clean.size()), params.clean, krng);
  std::sort(clean.begin(), clean.end());
  for (std::uint32_t i : clean) out.clean.push_back(suites.clean[i]);
  return out;
}

void DatasetServer::publish(const std::string& url, bench::Suites suites) {
  datasets_[url] = std::move(suites);
}

const bench::Suites* DatasetServer::find(const std::string& url) const {
  auto it = datasets_.find(url);
  return it == datasets_.end() ? nullptr : &it->second;
}

bench::SampleBundle DatasetServer::fetch(const std::string& url, const SampleParams& params,
                                         std::uint64_t seed) const {
  const bench::Suites* suites = find(url);
  if (suites == nullptr) throw RelayError("dataset not found: " + url);
  return build_bundle(*suites, params, seed);
}

chain::Address pick_intermediator(const std::vector<chain::Address>& candidates,
                                  const std::vector<chain::Address>& excluded,
                                  const Digest& block_hash, std::uint64_t request_id) {
  std::vector<chain::Address> eligible;
  for (const chain::Address& c : candidates) {
    if (std::find(excluded.begin(), excluded.end(), c) == excluded.end()) eligible.push_back(c);
  }
  if (eligible.empty()) throw RelayError("no eligible intermediator");
  ByteWriter w;
  w.str("bazaar.pick").raw(block_hash).u64(request_id);
  const Digest d = hash(w.bytes());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(d.data[i]) << (8 * i);
  return eligible[v % eligible.size()];
}

Bytes RelayPayload::serialize() const {
  ByteWriter w;
  w.u64(request_id).raw(root).u64(seed).raw(sigma);
  return std::move(w).take();
}

RelayPayload RelayPayload::deserialize(ByteView bytes) {
  ByteReader in(bytes);
  RelayPayload p;
  p.request_id = in.u64();
  p.root = in.fixed<Digest>();
  p.seed = in.u64();
  p.sigma = in.fixed<Signature>();
  in.expect_done();
  return p;
}

RelayEnclave::RelayEnclave(const KeySeed& seed) : kp_(generate_keypair(seed)) {}

RelayEnclave::Response RelayEnclave::serve(const RelayRequest& request, const Digest& anchor,
                                           const DatasetServer& server,
                                           const chain::Address& contract) const {
  Response r;
  ByteWriter in;
  in.raw(anchor).u64(request.id);
  const SymmetricKey k = prf(kp_.sk, in.bytes()).first;
  for (int i = 0; i < 8; ++i) r.seed |= static_cast<std::uint64_t>(k.data[i]) << (8 * i);
  try {
    r.bundle = server.fetch(request.url, request.params, r.seed);
  } catch (const RelayError& e) {
    r.error = e.what();
    ByteWriter w;
    w.u64(request.id);
    r.tx = chain::make_tx(kp_.sk, account(), contract, chain::TxKind::kAttestation,
                          "relay_failed", std::move(w).take());
    return r;
  }
  r.digest = bench::digest_bundle(r.bundle);
  RelayPayload payload;
  payload.request_id = request.id;
  payload.root = r.digest.root;
  payload.seed = r.seed;
  payload.sigma =
      sign(kp_.sk, relay_message(request.id, request.url, request.params, r.digest.root, r.seed));
  r.tx = chain::make_tx(kp_.sk, account(), contract, chain::TxKind::kAttestation, "relay",
                        payload.serialize());
  r.ok = true;
  return r;
}

chain::Transaction RelayEnclave::announce(const chain::Address& owner,
                                         const chain::Address& contract) const {
  ByteWriter w;
  w.raw(owner);
  return chain::make_tx(kp_.sk, account(), contract, chain::TxKind::kAttestation,
                        "register_relay", std::move(w).take());
}

}  // namespace bazaar::relay
