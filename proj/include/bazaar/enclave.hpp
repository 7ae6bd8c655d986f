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

// Simulated enclaves.
//
// Every enclave owns a key pair generated inside it; the host only ever sees
// the public half. An enclave's ledger account uses that same public key as
// both its account key and its bound attestation key, so the account address
// is address_of(pk).
//
// The benchmark enclave runs in three resumable steps (corruption,
// perturbation, clean). Between steps its progress exists only as a sealed
// blob held by the host. Each seal is announced on-chain through an
// attestation transaction to the CounterRegistry, and unsealing requires the
// blob to match the registry's latest (counter, anchor, digest) for the eid.
// Enclaves read the ledger directly, standing in for a verified light client.

#ifndef BAZAAR_ENCLAVE_HPP_
#define BAZAAR_ENCLAVE_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "bazaar/benchmark.hpp"
#include "bazaar/crypto.hpp"
#include "bazaar/ledger.hpp"
#include "bazaar/relay.hpp"

namespace bazaar::tee {

inline constexpr std::uint64_t kDefaultMemoryCap = 64 * 1024;

// --- programs ---------------------------------------------------------------

/// Benchmark program descriptor. The baseline model travels inside the
/// program so every run normalises against the same reference on the same
/// samples.
struct BenchmarkProgram {
  static constexpr std::uint16_t kVersion = 1;

  std::string url = relay::kDefaultUrl;
  relay::SampleParams params;
  std::uint32_t corruption_types = 3;
  std::uint32_t perturbation_types = 3;
  std::uint64_t memory_cap = kDefaultMemoryCap;
  Bytes baseline_model;

  Bytes serialize() const;
  static BenchmarkProgram deserialize(ByteView bytes);
};

/// The key-release program has no parameters.
Bytes monetization_program();
Bytes setup_program();

// --- signed messages ----------------------------------------------------------

Bytes okay_message(const Digest& prog_hash, const Digest& id_m, const chain::Address& owner,
                   const Digest& eid);
Bytes commit_message(const Digest& prog_hash, const Commitment& com_m);
Bytes output_message(const Digest& prog_hash, const Digest& samples_root, ByteView outp);
Bytes key_message(const Digest& prog_hash, const Commitment& com_k, const PublicKey& pk_b,
                  ByteView aenc);
/// Registration proofs: p_k binds Com_k to the ciphertext at Addr_m, p_cm
/// binds Com_m to it, p_ck binds the two commitments together.
Bytes proof_k_message(const Digest& addr_m, const Commitment& com_k);
Bytes proof_cm_message(const Digest& addr_m, const Commitment& com_m);
Bytes proof_ck_message(const Commitment& com_m, const Commitment& com_k);

// --- ELI counter registry -----------------------------------------------------

struct CounterEntry {
  std::uint64_t counter = 0;
  Digest anchor;
  Digest state_digest;
  chain::Address enclave;
};

/// "step" payload: eid | u64 counter | anchor | hash(C_st)
struct StepPayload {
  Digest eid;
  std::uint64_t counter = 0;
  Digest anchor;
  Digest state_digest;

  Bytes serialize() const;
  static StepPayload deserialize(ByteView bytes);
};

/// Per-eid monotonic counter. Accepts an attestation transaction only when
/// its counter is exactly one past the stored one and, after the first step,
/// only from the enclave account that made the first step.
class CounterRegistry : public chain::Contract {
 public:
  std::string name() const override { return "eli-registry"; }
  void on_tx(chain::Context& ctx, const chain::Transaction& tx) override;
  std::optional<CounterEntry> entry(const Digest& eid) const;

 private:
  std::map<Digest, CounterEntry> entries_;
};

// --- sealing ------------------------------------------------------------------

struct SealedState {
  std::uint64_t counter = 0;
  Digest anchor;
  Bytes ciphertext;  // Enc(k_i, (st, counter, hash(prog)))

  Bytes serialize() const;
  static SealedState deserialize(ByteView bytes);
  friend bool operator==(const SealedState&, const SealedState&) = default;
};

/// (k_i, r_i) = prf(sk, "bazaar.eli" || anchor || eid || counter). r_i seeds
/// the encryption nonce.
SealedState eli_seal(const SecretKey& sk, const Digest& eid, const Digest& prog_hash,
                     std::uint64_t counter, const Digest& anchor, ByteView state);

enum class UnsealError { kNone, kNoEntry, kWrongEnclave, kCounter, kAnchor, kDigest, kDecrypt,
                         kBinding };
const char* to_string(UnsealError e);

struct Unsealed {
  UnsealError error = UnsealError::kNone;
  Bytes state;
  bool ok() const { return error == UnsealError::kNone; }
};

Unsealed eli_unseal(const SecretKey& sk, const Digest& eid, const Digest& prog_hash,
                    const chain::Address& self, const SealedState& sealed,
                    const std::optional<CounterEntry>& entry);

// --- setup enclave --------------------------------------------------------------

struct RegistrationProofs {
  Digest addr_m;
  Commitment com_m;
  Commitment com_k;
  Signature p_k;
  Signature p_ck;
  Signature p_cm;
};

/// One-shot registration enclave: checks that the ciphertext decrypts under
/// k_m to the model and signs the three linking proofs.
class SetupEnclave {
 public:
  explicit SetupEnclave(const KeySeed& seed);
  const PublicKey& pk() const { return kp_.pk; }
  chain::Address account() const { return chain::address_of(kp_.pk); }

  std::optional<RegistrationProofs> attest(ByteView model, const Coin& r_m,
                                           const SymmetricKey& k_m, const Coin& r_k,
                                           ByteView ciphertext) const;

 private:
  KeyPair kp_;
};

// --- benchmark enclave ----------------------------------------------------------

enum class Step : std::uint8_t { kCorruption = 1, kPerturbation = 2, kClean = 3 };

class BenchmarkEnclave {
 public:
  BenchmarkEnclave(const KeySeed& seed, const chain::Ledger& ledger, chain::Address registry,
                   chain::Address bm_contract);

  const PublicKey& pk() const { return kp_.pk; }
  chain::Address account() const { return chain::address_of(kp_.pk); }

  struct Okay {
    Digest eid;
    Digest nonce;
    Signature sigma_att;
    chain::Transaction tx;  // "installed": ID_m | eid | sigma_att
  };
  /// A second install keeps the first slot and returns its receipt.
  Okay install(const chain::Address& owner, ByteView prog, const Digest& id_m);

  struct CommitResult {
    bool ok = false;
    std::string error;
    Commitment com_m;  // recomputed Com_m'
    Signature sigma_c;
    chain::Transaction tx;  // "commit": sigma_c
  };
  /// Recomputes Com_m' from the loaded model and coin. On mismatch the model
  /// is not stored.
  CommitResult resume_commit(const Commitment& com_m, ByteView model, const Coin& r_m);

  struct StepInput {
    Bytes section;  // encode_section() bytes for the next step
    std::array<Digest, 3> section_digests;
    std::optional<SealedState> sealed;  // absent for the first step
  };

  struct StepResult {
    enum class Status { kSealed, kFinal, kAbort };
    Status status = Status::kAbort;
    std::string error;
    Step step = Step::kCorruption;
    std::optional<SealedState> sealed;
    chain::Transaction tx;  // "step" to the registry, or "output" to the contract
    Bytes outp;
    Signature sigma_o;
  };
  StepResult resume_evaluate(const StepInput& input);

  const Digest& eid() const { return eid_; }
  bool installed() const { return installed_; }
  /// Largest batch of sample bytes held at once.
  std::uint64_t peak_resident_bytes() const { return peak_resident_; }

 private:
  StepResult abort(std::string why) const;

  KeyPair kp_;
  Rng rng_;
  const chain::Ledger& ledger_;
  chain::Address registry_;
  chain::Address bm_contract_;

  bool installed_ = false;
  Digest eid_;
  Digest nonce_;
  Digest id_m_;
  chain::Address owner_;
  Bytes prog_bytes_;
  Digest prog_hash_;
  BenchmarkProgram prog_;
  std::optional<bench::ToyModel> baseline_;
  std::optional<bench::ToyModel> model_;
  Okay okay_;
  std::uint64_t peak_resident_ = 0;
};

// --- key-release enclave ----------------------------------------------------

class MonetizationEnclave {
 public:
  explicit MonetizationEnclave(const KeySeed& seed);

  const PublicKey& pk() const { return kp_.pk; }
  chain::Address account() const { return chain::address_of(kp_.pk); }

  Digest install(const chain::Address& owner);

  struct KeyRelease {
    bool ok = false;
    std::string error;
    Bytes aenc;
    PublicKey pk_b;
    Signature sigma;
    chain::Transaction tx;  // "publish": ID_m | sigma | pk_B | AEnc
  };
  /// Recomputes Com_k' and, on match, encrypts k_m to the buyer.
  KeyRelease resume_request_key(const Commitment& com_k, const SymmetricKey& k_m, const Coin& r_k,
                                const PublicKey& pk_b, const Digest& id_m,
                                const chain::Address& be_contract);

 private:
  KeyPair kp_;
  Rng rng_;
  bool installed_ = false;
  Digest eid_;
};

}  // namespace bazaar::tee

#endif  // BAZAAR_ENCLAVE_HPP_
