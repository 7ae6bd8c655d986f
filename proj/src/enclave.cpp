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

#include "bazaar/enclave.hpp"

#include <algorithm>

namespace bazaar::tee {
namespace {

std::uint64_t seed_u64(const Digest& d) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(d.data[i]) << (8 * i);
  return v;
}

Rng enclave_rng(const KeySeed& seed) {
  ByteWriter w;
  w.str("bazaar.enclave.rng").raw(seed);
  return Rng(seed_u64(hash(w.bytes())));
}

// Sealed ELI state. Tallies for the sections already processed, the section
// digests fixed at step one and the relay root they hash to.
struct EliState {
  std::uint8_t done = 0;
  std::array<Digest, 3> digests;
  Digest root;
  bench::CorruptionTally corr{0};
  bench::CorruptionTally corr_base{0};
  bench::FlipTally flip{0};
  bench::FlipTally flip_base{0};

  Bytes serialize() const {
    ByteWriter w;
    w.u8(done);
    for (const Digest& d : digests) w.raw(d);
    w.raw(root);
    corr.write(w);
    corr_base.write(w);
    if (done >= 2) {
      flip.write(w);
      flip_base.write(w);
    }
    return std::move(w).take();
  }

  static EliState deserialize(ByteView bytes) {
    ByteReader in(bytes);
    EliState st;
    st.done = in.u8();
    for (Digest& d : st.digests) d = in.fixed<Digest>();
    st.root = in.fixed<Digest>();
    st.corr = bench::CorruptionTally::read(in);
    st.corr_base = bench::CorruptionTally::read(in);
    if (st.done >= 2) {
      st.flip = bench::FlipTally::read(in);
      st.flip_base = bench::FlipTally::read(in);
    }
    in.expect_done();
    return st;
  }
};

}  // namespace

Bytes BenchmarkProgram::serialize() const {
  ByteWriter w;
  w.raw(as_bytes("BZPG")).u16(kVersion).str(url).raw(params.serialize());
  w.u32(corruption_types).u32(perturbation_types).u64(memory_cap).blob(baseline_model);
  return std::move(w).take();
}

BenchmarkProgram BenchmarkProgram::deserialize(ByteView bytes) {
  ByteReader in(bytes);
  const ByteView magic = in.raw(4);
  if (!std::equal(magic.begin(), magic.end(), as_bytes("BZPG").begin())) {
    throw DecodeError("not a benchmark program");
  }
  if (in.u16() != kVersion) throw DecodeError("unsupported program version");
  BenchmarkProgram p;
  p.url = in.str();
  p.params = relay::SampleParams::deserialize(in);
  p.corruption_types = in.u32();
  p.perturbation_types = in.u32();
  p.memory_cap = in.u64();
  p.baseline_model = in.blob();
  in.expect_done();
  return p;
}

Bytes monetization_program() {
  const std::string_view s = "bazaar.program.key-release.v1";
  return {s.begin(), s.end()};
}

Bytes setup_program() {
  const std::string_view s = "bazaar.program.setup.v1";
  return {s.begin(), s.end()};
}

Bytes okay_message(const Digest& prog_hash, const Digest& id_m, const chain::Address& owner,
                   const Digest& eid) {
  ByteWriter w;
  w.str("bazaar.okay").raw(prog_hash).raw(id_m).raw(owner).raw(eid);
  return std::move(w).take();
}

Bytes commit_message(const Digest& prog_hash, const Commitment& com_m) {
  ByteWriter w;
  w.str("bazaar.commit").raw(prog_hash).raw(com_m.value);
  return std::move(w).take();
}

Bytes output_message(const Digest& prog_hash, const Digest& samples_root, ByteView outp) {
  ByteWriter w;
  w.str("bazaar.output").raw(prog_hash).raw(samples_root).blob(outp);
  return std::move(w).take();
}

Bytes key_message(const Digest& prog_hash, const Commitment& com_k, const PublicKey& pk_b,
                  ByteView aenc) {
  ByteWriter w;
  w.str("bazaar.key").raw(prog_hash).raw(com_k.value).raw(pk_b).blob(aenc);
  return std::move(w).take();
}

Bytes proof_k_message(const Digest& addr_m, const Commitment& com_k) {
  ByteWriter w;
  w.str("bazaar.proof.k").raw(hash(setup_program())).raw(addr_m).raw(com_k.value);
  return std::move(w).take();
}

Bytes proof_cm_message(const Digest& addr_m, const Commitment& com_m) {
  ByteWriter w;
  w.str("bazaar.proof.cm").raw(hash(setup_program())).raw(addr_m).raw(com_m.value);
  return std::move(w).take();
}

Bytes proof_ck_message(const Commitment& com_m, const Commitment& com_k) {
  ByteWriter w;
  w.str("bazaar.proof.ck").raw(hash(setup_program())).raw(com_m.value).raw(com_k.value);
  return std::move(w).take();
}

// --- registry -----------------------------------------------------------------

Bytes StepPayload::serialize() const {
  ByteWriter w;
  w.raw(eid).u64(counter).raw(anchor).raw(state_digest);
  return std::move(w).take();
}

StepPayload StepPayload::deserialize(ByteView bytes) {
  ByteReader in(bytes);
  StepPayload p;
  p.eid = in.fixed<Digest>();
  p.counter = in.u64();
  p.anchor = in.fixed<Digest>();
  p.state_digest = in.fixed<Digest>();
  in.expect_done();
  return p;
}

void CounterRegistry::on_tx(chain::Context& ctx, const chain::Transaction& tx) {
  if (tx.method != "step") throw chain::ContractReject("unknown method");
  if (tx.kind != chain::TxKind::kAttestation) throw chain::ContractReject("not an attestation");
  StepPayload p;
  try {
    p = StepPayload::deserialize(tx.payload);
  } catch (const DecodeError&) {
    throw chain::ContractReject("malformed step");
  }
  if (p.anchor != ctx.anchor()) throw chain::ContractReject("stale anchor");
  auto it = entries_.find(p.eid);
  const std::uint64_t stored = it == entries_.end() ? 0 : it->second.counter;
  if (p.counter != stored + 1) throw chain::ContractReject("counter not monotonic");
  if (it != entries_.end() && it->second.enclave != tx.sender) {
    throw chain::ContractReject("eid owned by another enclave");
  }
  entries_[p.eid] = CounterEntry{p.counter, p.anchor, p.state_digest, tx.sender};
  ctx.emit("step", {{"eid", chain::field_hex(p.eid)}, {"counter", std::to_string(p.counter)}});
}

std::optional<CounterEntry> CounterRegistry::entry(const Digest& eid) const {
  auto it = entries_.find(eid);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

// --- sealing ------------------------------------------------------------------

Bytes SealedState::serialize() const {
  ByteWriter w;
  w.u64(counter).raw(anchor).blob(ciphertext);
  return std::move(w).take();
}

SealedState SealedState::deserialize(ByteView bytes) {
  ByteReader in(bytes);
  SealedState s;
  s.counter = in.u64();
  s.anchor = in.fixed<Digest>();
  s.ciphertext = in.blob();
  in.expect_done();
  return s;
}

namespace {

std::pair<SymmetricKey, Coin> eli_keys(const SecretKey& sk, const Digest& eid,
                                       std::uint64_t counter, const Digest& anchor) {
  ByteWriter w;
  w.str("bazaar.eli").raw(anchor).raw(eid).u64(counter);
  return prf(sk, w.bytes());
}

}  // namespace

SealedState eli_seal(const SecretKey& sk, const Digest& eid, const Digest& prog_hash,
                     std::uint64_t counter, const Digest& anchor, ByteView state) {
  const auto [k, r] = eli_keys(sk, eid, counter, anchor);
  Rng nonce_rng(seed_u64(Digest::from(r.view())));
  ByteWriter pt;
  pt.blob(state).u64(counter).raw(prog_hash);
  return SealedState{counter, anchor, enc(k, pt.bytes(), nonce_rng)};
}

const char* to_string(UnsealError e) {
  switch (e) {
    case UnsealError::kNone: return "ok";
    case UnsealError::kNoEntry: return "no registry entry";
    case UnsealError::kWrongEnclave: return "registry entry belongs to another enclave";
    case UnsealError::kCounter: return "stale counter";
    case UnsealError::kAnchor: return "anchor mismatch";
    case UnsealError::kDigest: return "state digest mismatch";
    case UnsealError::kDecrypt: return "state does not decrypt";
    case UnsealError::kBinding: return "state bound to another run";
  }
  return "unknown";
}

Unsealed eli_unseal(const SecretKey& sk, const Digest& eid, const Digest& prog_hash,
                    const chain::Address& self, const SealedState& sealed,
                    const std::optional<CounterEntry>& entry) {
  Unsealed out;
  if (!entry) {
    out.error = UnsealError::kNoEntry;
  } else if (entry->enclave != self) {
    out.error = UnsealError::kWrongEnclave;
  } else if (entry->counter != sealed.counter) {
    out.error = UnsealError::kCounter;
  } else if (entry->anchor != sealed.anchor) {
    out.error = UnsealError::kAnchor;
  } else if (entry->state_digest != hash(sealed.ciphertext)) {
    out.error = UnsealError::kDigest;
  }
  if (!out.ok()) return out;
  const SymmetricKey k = eli_keys(sk, eid, sealed.counter, sealed.anchor).first;
  const auto pt = dec(k, sealed.ciphertext);
  if (!pt) {
    out.error = UnsealError::kDecrypt;
    return out;
  }
  try {
    ByteReader in(*pt);
    Bytes st = in.blob();
    const std::uint64_t counter = in.u64();
    const Digest ph = in.fixed<Digest>();
    in.expect_done();
    if (counter != sealed.counter || ph != prog_hash) {
      out.error = UnsealError::kBinding;
      return out;
    }
    out.state = std::move(st);
  } catch (const DecodeError&) {
    out.error = UnsealError::kBinding;
  }
  return out;
}

// --- setup --------------------------------------------------------------------

SetupEnclave::SetupEnclave(const KeySeed& seed) : kp_(generate_keypair(seed)) {}

std::optional<RegistrationProofs> SetupEnclave::attest(ByteView model, const Coin& r_m,
                                                       const SymmetricKey& k_m, const Coin& r_k,
                                                       ByteView ciphertext) const {
  const auto pt = dec(k_m, ciphertext);
  if (!pt || !std::equal(pt->begin(), pt->end(), model.begin(), model.end())) return std::nullopt;
  RegistrationProofs p;
  p.addr_m = hash(ciphertext);
  p.com_m = commit(model, r_m);
  p.com_k = commit(k_m.view(), r_k);
  p.p_k = sign(kp_.sk, proof_k_message(p.addr_m, p.com_k));
  p.p_cm = sign(kp_.sk, proof_cm_message(p.addr_m, p.com_m));
  p.p_ck = sign(kp_.sk, proof_ck_message(p.com_m, p.com_k));
  return p;
}

// --- benchmark enclave -----------------------------------------------------------

BenchmarkEnclave::BenchmarkEnclave(const KeySeed& seed, const chain::Ledger& ledger,
                                   chain::Address registry, chain::Address bm_contract)
    : kp_(generate_keypair(seed)),
      rng_(enclave_rng(seed)),
      ledger_(ledger),
      registry_(registry),
      bm_contract_(bm_contract) {}

BenchmarkEnclave::Okay BenchmarkEnclave::install(const chain::Address& owner, ByteView prog,
                                                 const Digest& id_m) {
  if (installed_) return okay_;
  prog_ = BenchmarkProgram::deserialize(prog);
  baseline_ = bench::ToyModel::deserialize(prog_.baseline_model);
  prog_bytes_.assign(prog.begin(), prog.end());
  prog_hash_ = hash(prog);
  owner_ = owner;
  id_m_ = id_m;
  nonce_ = rng_.draw<Digest>();
  ByteWriter w;
  w.str("bazaar.eid").raw(kp_.pk).raw(nonce_).raw(prog_hash_);
  eid_ = hash(w.bytes());
  installed_ = true;

  okay_.eid = eid_;
  okay_.nonce = nonce_;
  okay_.sigma_att = sign(kp_.sk, okay_message(prog_hash_, id_m, owner, eid_));
  ByteWriter payload;
  payload.raw(id_m).raw(eid_).raw(okay_.sigma_att);
  okay_.tx = chain::make_tx(kp_.sk, account(), bm_contract_, chain::TxKind::kAttestation,
                            "installed", std::move(payload).take());
  return okay_;
}

BenchmarkEnclave::CommitResult BenchmarkEnclave::resume_commit(const Commitment& com_m,
                                                               ByteView model, const Coin& r_m) {
  CommitResult out;
  if (!installed_) {
    out.error = "not installed";
    return out;
  }
  out.com_m = commit(model, r_m);
  if (out.com_m != com_m) {
    out.error = "model does not open the commitment";
    return out;
  }
  try {
    model_ = bench::ToyModel::deserialize(model);
  } catch (const std::exception& e) {
    out.error = std::string("model rejected: ") + e.what();
    return out;
  }
  out.sigma_c = sign(kp_.sk, commit_message(prog_hash_, out.com_m));
  out.tx = chain::make_tx(kp_.sk, account(), bm_contract_, chain::TxKind::kAttestation, "commit",
                          Bytes(out.sigma_c.data.begin(), out.sigma_c.data.end()));
  out.ok = true;
  return out;
}

BenchmarkEnclave::StepResult BenchmarkEnclave::abort(std::string why) const {
  StepResult r;
  r.status = StepResult::Status::kAbort;
  r.error = std::move(why);
  return r;
}

BenchmarkEnclave::StepResult BenchmarkEnclave::resume_evaluate(const StepInput& input) {
  if (!installed_) return abort("not installed");
  if (!model_) return abort("no committed model");
  const auto& registry = ledger_.contract<CounterRegistry>(registry_);
  const auto entry = registry.entry(eid_);

  EliState st;
  if (!input.sealed) {
    if (entry) return abort("evaluation already started");
    const auto& view = ledger_.contract<relay::RelayRecordView>(bm_contract_);
    const auto record = view.relay_record_for(id_m_);
    if (!record) return abort("no relay record");
    if (!relay::verify_record(ledger_, *record)) return abort("relay record signature invalid");
    if (record->url != prog_.url || !(record->params == prog_.params)) {
      return abort("relay record does not match the program");
    }
    const auto& d = input.section_digests;
    if (bench::section_root(d[0], d[1], d[2]) != record->root) {
      return abort("section digests do not match the relayed root");
    }
    st.digests = d;
    st.root = record->root;
    st.corr = bench::CorruptionTally(prog_.corruption_types);
    st.corr_base = bench::CorruptionTally(prog_.corruption_types);
  } else {
    const Unsealed u = eli_unseal(kp_.sk, eid_, prog_hash_, account(), *input.sealed, entry);
    if (!u.ok()) return abort(std::string("unseal: ") + to_string(u.error));
    st = EliState::deserialize(u.state);
    if (st.done != input.sealed->counter) return abort("state counter mismatch");
    if (st.done >= 3) return abort("evaluation already finished");
  }

  const auto step = static_cast<Step>(st.done + 1);
  if (hash(input.section) != st.digests[st.done]) return abort("section digest mismatch");

  // Stream the section in batches no larger than the memory cap.
  try {
    ByteReader in(input.section);
    const std::uint32_t count = in.u32();
    std::vector<Bytes> batch;
    std::uint64_t batch_bytes = 0;
    bench::CleanTally clean, clean_base;
    if (step == Step::kPerturbation) {
      st.flip = bench::FlipTally(prog_.perturbation_types);
      st.flip_base = bench::FlipTally(prog_.perturbation_types);
    }
    auto flush = [&] {
      peak_resident_ = std::max(peak_resident_, batch_bytes);
      for (const Bytes& rec : batch) {
        switch (step) {
          case Step::kCorruption: {
            const auto r = bench::decode_corruption_record(rec);
            st.corr.add(*model_, r);
            st.corr_base.add(*baseline_, r);
            break;
          }
          case Step::kPerturbation: {
            const auto s = bench::decode_perturbation_record(rec);
            st.flip.add(*model_, s);
            st.flip_base.add(*baseline_, s);
            break;
          }
          case Step::kClean: {
            const auto s = bench::decode_clean_record(rec);
            clean.add(*model_, s);
            clean_base.add(*baseline_, s);
            break;
          }
        }
      }
      batch.clear();
      batch_bytes = 0;
    };
    for (std::uint32_t i = 0; i < count; ++i) {
      Bytes rec = in.blob();
      if (rec.size() > prog_.memory_cap) return abort("record exceeds the memory cap");
      if (batch_bytes + rec.size() > prog_.memory_cap) flush();
      batch_bytes += rec.size();
      batch.push_back(std::move(rec));
    }
    flush();
    in.expect_done();

    StepResult r;
    r.step = step;
    st.done = static_cast<std::uint8_t>(step);
    if (step != Step::kClean) {
      const Digest anchor = ledger_.head_hash();
      r.sealed = eli_seal(kp_.sk, eid_, prog_hash_, st.done, anchor, st.serialize());
      StepPayload p{eid_, st.done, anchor, hash(r.sealed->ciphertext)};
      r.tx = chain::make_tx(kp_.sk, account(), registry_, chain::TxKind::kAttestation, "step",
                            p.serialize());
      r.status = StepResult::Status::kSealed;
      return r;
    }

    bench::BaselineStats base;
    base.errors = st.corr_base.table();
    base.fp = st.flip_base.rates();
    base.ce = clean_base.error();
    const auto result = bench::score(clean.error(), st.corr.table(), st.flip.rates(), base,
                                     hash(prog_.baseline_model));
    r.outp = result.serialize();
    r.sigma_o = sign(kp_.sk, output_message(prog_hash_, st.root, r.outp));
    ByteWriter payload;
    payload.blob(r.outp).raw(r.sigma_o);
    r.tx = chain::make_tx(kp_.sk, account(), bm_contract_, chain::TxKind::kAttestation, "output",
                          std::move(payload).take());
    r.status = StepResult::Status::kFinal;
    return r;
  } catch (const std::exception& e) {
    return abort(std::string("evaluation failed: ") + e.what());
  }
}

// --- key release ----------------------------------------------------------------

MonetizationEnclave::MonetizationEnclave(const KeySeed& seed)
    : kp_(generate_keypair(seed)), rng_(enclave_rng(seed)) {}

Digest MonetizationEnclave::install(const chain::Address& owner) {
  if (!installed_) {
    ByteWriter w;
    w.str("bazaar.eid").raw(kp_.pk).raw(rng_.draw<Digest>()).raw(owner);
    eid_ = hash(w.bytes());
    installed_ = true;
  }
  return eid_;
}

MonetizationEnclave::KeyRelease MonetizationEnclave::resume_request_key(
    const Commitment& com_k, const SymmetricKey& k_m, const Coin& r_k, const PublicKey& pk_b,
    const Digest& id_m, const chain::Address& be_contract) {
  KeyRelease out;
  if (!installed_) {
    out.error = "not installed";
    return out;
  }
  if (commit(k_m.view(), r_k) != com_k) {
    out.error = "key does not open the commitment";
    return out;
  }
  try {
    out.aenc = aenc(pk_b, k_m.view(), rng_);
  } catch (const std::invalid_argument& e) {
    out.error = e.what();
    return out;
  }
  out.pk_b = pk_b;
  out.sigma = sign(kp_.sk, key_message(hash(monetization_program()), com_k, pk_b, out.aenc));
  ByteWriter payload;
  payload.raw(id_m).raw(out.sigma).raw(pk_b).raw(out.aenc);
  out.tx = chain::make_tx(kp_.sk, account(), be_contract, chain::TxKind::kAttestation, "publish",
                          std::move(payload).take());
  out.ok = true;
  return out;
}

}  // namespace bazaar::tee
