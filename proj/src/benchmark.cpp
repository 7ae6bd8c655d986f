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

#include "bazaar/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

namespace bazaar::bench {
namespace {

constexpr char kModelMagic[4] = {'B', 'Z', 'M', 'D'};
constexpr char kOutputMagic[4] = {'B', 'Z', 'O', 'P'};

// Severity schedules per corruption kind. Each is strictly increasing so the
// distortion energy ||x' - x||^2 grows with severity.
constexpr double kNoiseSigma[kSeverities] = {0.8, 1.6, 2.4, 3.2, 4.0};
constexpr double kBlurMix[kSeverities] = {0.2, 0.4, 0.6, 0.8, 1.0};
constexpr double kBrightShift[kSeverities] = {0.4, 0.8, 1.2, 1.6, 2.0};
constexpr int kBlurRadius = 3;

// Per-frame drift of the perturbation kinds, plus a shared jitter term.
constexpr double kWalkStep = 0.25;
constexpr double kDriftStep = 0.05;
constexpr double kContrastStep = 0.012;
constexpr double kJitter = 0.08;

std::vector<float> blur(std::span<const float> x, int radius) {
  const int n = static_cast<int>(x.size());
  std::vector<float> out(x.size());
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int k = -radius; k <= radius; ++k) acc += x[((i + k) % n + n) % n];
    out[i] = static_cast<float>(acc / (2 * radius + 1));
  }
  return out;
}

void write_floats(ByteWriter& w, std::span<const float> xs) {
  for (float v : xs) w.f32(v);
}

std::vector<float> read_floats(ByteReader& r, std::size_t n) {
  std::vector<float> out(n);
  for (float& v : out) v = r.f32();
  return out;
}

std::vector<double> forward_hidden(const ToyModel::Layer& layer, std::span<const double> x) {
  std::vector<double> out(layer.out);
  for (std::uint32_t o = 0; o < layer.out; ++o) {
    double acc = layer.bias[o];
    const float* row = layer.weights.data() + static_cast<std::size_t>(o) * layer.in;
    for (std::uint32_t i = 0; i < layer.in; ++i) acc += static_cast<double>(row[i]) * x[i];
    out[o] = acc;
  }
  return out;
}

std::vector<double> features(const ToyModel& model, std::span<const float> x,
                             std::size_t hidden_layers) {
  std::vector<double> h(x.begin(), x.end());
  for (std::size_t l = 0; l < hidden_layers; ++l) {
    h = forward_hidden(model.layers()[l], h);
    for (double& v : h) v = std::max(v, 0.0);
  }
  return h;
}

}  // namespace

// --- data -------------------------------------------------------------------

std::string corruption_name(std::uint32_t type) {
  static const char* kNames[] = {"noise", "blur", "brightness"};
  const std::string base = kNames[type % 3];
  return type < 3 ? base : base + "-" + std::to_string(type / 3 + 1);
}

std::string perturbation_name(std::uint32_t type) {
  static const char* kNames[] = {"jitter-walk", "brightness-drift", "contrast-drift"};
  const std::string base = kNames[type % 3];
  return type < 3 ? base : base + "-" + std::to_string(type / 3 + 1);
}

namespace {

std::vector<Sample> draw_samples(const SuiteConfig& config, std::uint64_t seed,
                                 std::string_view split, std::uint32_t per_class) {
  Rng proto_rng = Rng(seed).fork("prototypes");
  std::vector<std::vector<double>> prototypes(config.classes, std::vector<double>(config.dim));
  for (auto& p : prototypes) {
    for (double& v : p) v = proto_rng.normal();
  }
  Rng rng = Rng(seed).fork(split);
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(config.classes) * per_class);
  for (std::uint32_t c = 0; c < config.classes; ++c) {
    for (std::uint32_t k = 0; k < per_class; ++k) {
      Sample s;
      s.label = static_cast<std::uint16_t>(c);
      s.x.resize(config.dim);
      for (std::uint32_t d = 0; d < config.dim; ++d) {
        s.x[d] = static_cast<float>(prototypes[c][d] + config.class_noise * rng.normal());
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace

std::vector<Sample> generate_clean_set(const SuiteConfig& config, std::uint64_t seed) {
  return draw_samples(config, seed, "clean", config.per_class);
}

std::vector<Sample> generate_training_set(const SuiteConfig& config, std::uint64_t seed,
                                          std::uint32_t per_class) {
  return draw_samples(config, seed, "train", per_class);
}

Suites generate_suites(std::vector<Sample> base, const SuiteConfig& config, std::uint64_t seed) {
  if (base.empty()) throw std::invalid_argument("generate_suites: empty base set");
  if (config.sequences_per_type > base.size()) {
    throw std::invalid_argument("generate_suites: more sequences than base samples");
  }
  if (config.frames < 2) throw std::invalid_argument("generate_suites: need at least 2 frames");
  const std::uint32_t dim = static_cast<std::uint32_t>(base.front().x.size());

  Suites out;
  out.config = config;
  out.config.dim = dim;

  // Corruptions.
  Rng crng = Rng(seed).fork("corruption");
  CorruptionSuite& cs = out.corruption;
  cs.types = config.corruption_types;
  cs.bases = static_cast<std::uint32_t>(base.size());
  cs.records.resize(static_cast<std::size_t>(cs.types) * kSeverities * cs.bases);
  for (std::uint32_t c = 0; c < cs.types; ++c) {
    const double magnitude = 1.0 + 0.5 * (c / 3);
    for (std::uint32_t b = 0; b < cs.bases; ++b) {
      const Sample& clean = base[b];
      std::vector<double> direction(dim);
      for (double& v : direction) v = crng.normal();
      const std::vector<float> smooth =
          blur(clean.x, kBlurRadius * static_cast<int>(1 + c / 3));
      for (std::uint32_t s = 1; s <= kSeverities; ++s) {
        CorruptionRecord r;
        r.type = static_cast<std::uint16_t>(c);
        r.severity = static_cast<std::uint8_t>(s);
        r.base = b;
        r.sample.label = clean.label;
        r.sample.x.resize(dim);
        for (std::uint32_t d = 0; d < dim; ++d) {
          const double x = clean.x[d];
          double y = x;
          switch (c % 3) {
            case 0:
              y = x + magnitude * kNoiseSigma[s - 1] * direction[d];
              break;
            case 1:
              y = (1.0 - kBlurMix[s - 1]) * x + kBlurMix[s - 1] * smooth[d];
              break;
            default:
              y = x + magnitude * kBrightShift[s - 1];
              break;
          }
          r.sample.x[d] = static_cast<float>(y);
        }
        cs.records[cs.index(c, s, b)] = std::move(r);
      }
    }
  }

  // Perturbation sequences.
  Rng prng = Rng(seed).fork("perturbation");
  PerturbationSuite& ps = out.perturbation;
  ps.types = config.perturbation_types;
  ps.sequences_per_type = config.sequences_per_type;
  ps.frames = config.frames;
  ps.sequences.reserve(static_cast<std::size_t>(ps.types) * ps.sequences_per_type);
  for (std::uint32_t p = 0; p < ps.types; ++p) {
    // Partial Fisher-Yates to pick distinct bases.
    std::vector<std::uint32_t> order(base.size());
    std::iota(order.begin(), order.end(), 0u);
    for (std::uint32_t k = 0; k < ps.sequences_per_type; ++k) {
      const auto j = k + prng.below(order.size() - k);
      std::swap(order[k], order[j]);
    }
    const double magnitude = 1.0 + 0.5 * (p / 3);
    for (std::uint32_t k = 0; k < ps.sequences_per_type; ++k) {
      const Sample& clean = base[order[k]];
      PerturbationSequence seq;
      seq.type = static_cast<std::uint16_t>(p);
      seq.base = order[k];
      seq.label = clean.label;
      seq.frames.reserve(ps.frames);
      seq.frames.push_back(clean.x);
      for (std::uint32_t f = 1; f < ps.frames; ++f) {
        const std::vector<float>& prev = seq.frames.back();
        std::vector<float> next(dim);
        for (std::uint32_t d = 0; d < dim; ++d) {
          double y = prev[d];
          switch (p % 3) {
            case 0:
              y += magnitude * kWalkStep * prng.normal();
              break;
            case 1:
              y += magnitude * kDriftStep + kJitter * prng.normal();
              break;
            default:
              y = y * (1.0 + magnitude * kContrastStep) + kJitter * prng.normal();
              break;
          }
          next[d] = static_cast<float>(y);
        }
        seq.frames.push_back(std::move(next));
      }
      ps.sequences.push_back(std::move(seq));
    }
  }

  out.clean = std::move(base);
  return out;
}

// --- canonical encodings ----------------------------------------------------

Bytes encode_record(const Sample& s) {
  ByteWriter w;
  w.u16(s.label);
  write_floats(w, s.x);
  return std::move(w).take();
}

Bytes encode_record(const CorruptionRecord& r) {
  ByteWriter w;
  w.u16(r.type).u8(r.severity).u32(r.base).u16(r.sample.label);
  write_floats(w, r.sample.x);
  return std::move(w).take();
}

Bytes encode_record(const PerturbationSequence& s) {
  ByteWriter w;
  w.u16(s.type).u32(s.base).u16(s.label).u16(static_cast<std::uint16_t>(s.frames.size()));
  for (const auto& f : s.frames) write_floats(w, f);
  return std::move(w).take();
}

Sample decode_clean_record(ByteView bytes) {
  if (bytes.size() < 2 || (bytes.size() - 2) % 4 != 0) throw FormatError("bad clean record size");
  ByteReader r(bytes);
  Sample s;
  s.label = r.u16();
  s.x = read_floats(r, (bytes.size() - 2) / 4);
  return s;
}

CorruptionRecord decode_corruption_record(ByteView bytes) {
  if (bytes.size() < 9 || (bytes.size() - 9) % 4 != 0) {
    throw FormatError("bad corruption record size");
  }
  ByteReader r(bytes);
  CorruptionRecord out;
  out.type = r.u16();
  out.severity = r.u8();
  out.base = r.u32();
  out.sample.label = r.u16();
  out.sample.x = read_floats(r, (bytes.size() - 9) / 4);
  if (out.severity < 1 || out.severity > kSeverities) throw FormatError("severity out of range");
  return out;
}

PerturbationSequence decode_perturbation_record(ByteView bytes) {
  if (bytes.size() < 10) throw FormatError("bad perturbation record size");
  ByteReader r(bytes);
  PerturbationSequence out;
  out.type = r.u16();
  out.base = r.u32();
  out.label = r.u16();
  const std::uint16_t frames = r.u16();
  if (frames == 0 || (bytes.size() - 10) % (4u * frames) != 0) {
    throw FormatError("bad perturbation record size");
  }
  const std::size_t dim = (bytes.size() - 10) / (4u * frames);
  out.frames.reserve(frames);
  for (std::uint16_t f = 0; f < frames; ++f) out.frames.push_back(read_floats(r, dim));
  return out;
}

Bytes encode_section(const SampleBundle& bundle, Section section) {
  ByteWriter w;
  auto emit = [&w](const auto& records) {
    w.u32(static_cast<std::uint32_t>(records.size()));
    for (const auto& rec : records) w.blob(encode_record(rec));
  };
  switch (section) {
    case Section::kCorruption:
      emit(bundle.corruption);
      break;
    case Section::kPerturbation:
      emit(bundle.perturbation);
      break;
    case Section::kClean:
      emit(bundle.clean);
      break;
  }
  return std::move(w).take();
}

Digest section_root(const Digest& corruption, const Digest& perturbation, const Digest& clean) {
  ByteWriter w;
  w.raw(corruption).raw(perturbation).raw(clean);
  return hash(w.bytes());
}

BundleDigest digest_bundle(const SampleBundle& bundle) {
  BundleDigest out;
  const Bytes c = encode_section(bundle, Section::kCorruption);
  const Bytes p = encode_section(bundle, Section::kPerturbation);
  const Bytes k = encode_section(bundle, Section::kClean);
  out.corruption = hash(c);
  out.perturbation = hash(p);
  out.clean = hash(k);
  out.root = section_root(out.corruption, out.perturbation, out.clean);
  out.encoded_bytes = c.size() + p.size() + k.size();
  return out;
}

// --- toy classifier ---------------------------------------------------------

ToyModel::ToyModel(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw std::invalid_argument("ToyModel: no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& layer = layers_[l];
    if (layer.in == 0 || layer.out == 0) throw std::invalid_argument("ToyModel: empty layer");
    if (layer.weights.size() != static_cast<std::size_t>(layer.in) * layer.out ||
        layer.bias.size() != layer.out) {
      throw std::invalid_argument("ToyModel: weight shape mismatch");
    }
    if (l > 0 && layers_[l - 1].out != layer.in) {
      throw std::invalid_argument("ToyModel: layer widths do not chain");
    }
  }
}

std::vector<std::uint32_t> ToyModel::hidden_sizes() const {
  std::vector<std::uint32_t> out;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) out.push_back(layers_[l].out);
  return out;
}

std::uint16_t ToyModel::predict(std::span<const float> x) const {
  if (x.size() != input_dim()) throw std::invalid_argument("ToyModel::predict: wrong input dim");
  const std::vector<double> h = features(*this, x, layers_.size() - 1);
  const std::vector<double> logits = forward_hidden(layers_.back(), h);
  std::uint16_t best = 0;
  for (std::size_t c = 1; c < logits.size(); ++c) {
    if (logits[c] > logits[best]) best = static_cast<std::uint16_t>(c);
  }
  return best;
}

Bytes ToyModel::serialize() const {
  ByteWriter w;
  w.raw(as_bytes(std::string_view(kModelMagic, 4))).u16(kVersion);
  w.u32(input_dim()).u32(static_cast<std::uint32_t>(layers_.size()));
  for (const Layer& layer : layers_) {
    w.u32(layer.in).u32(layer.out);
    write_floats(w, layer.weights);
    write_floats(w, layer.bias);
  }
  return std::move(w).take();
}

ToyModel ToyModel::deserialize(ByteView bytes) {
  try {
    ByteReader r(bytes);
    ByteView magic = r.raw(4);
    if (!std::equal(magic.begin(), magic.end(), kModelMagic)) throw FormatError("bad model magic");
    if (r.u16() != kVersion) throw FormatError("unsupported model version");
    const std::uint32_t input_dim = r.u32();
    const std::uint32_t count = r.u32();
    if (count == 0 || count > 64) throw FormatError("bad layer count");
    std::vector<Layer> layers;
    for (std::uint32_t l = 0; l < count; ++l) {
      Layer layer;
      layer.in = r.u32();
      layer.out = r.u32();
      const std::uint64_t n = static_cast<std::uint64_t>(layer.in) * layer.out;
      if (n * 4 > r.remaining()) throw FormatError("truncated model weights");
      layer.weights = read_floats(r, n);
      layer.bias = read_floats(r, layer.out);
      layers.push_back(std::move(layer));
    }
    r.expect_done();
    if (layers.front().in != input_dim) throw FormatError("input dim mismatch");
    return ToyModel(std::move(layers));
  } catch (const DecodeError& e) {
    throw FormatError(std::string("model: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
}

void ToyModel::save(const std::filesystem::path& path) const {
  const Bytes bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ToyModel ToyModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

ToyModel fit_centroid_model(std::span<const Sample> train, std::uint32_t classes,
                            const std::vector<std::uint32_t>& hidden, std::uint64_t seed) {
  if (train.empty()) throw std::invalid_argument("fit_centroid_model: empty training set");
  Rng rng = Rng(seed).fork("model-init");
  std::vector<ToyModel::Layer> layers;
  std::uint32_t width = static_cast<std::uint32_t>(train.front().x.size());
  for (std::uint32_t h : hidden) {
    ToyModel::Layer layer;
    layer.in = width;
    layer.out = h;
    layer.weights.resize(static_cast<std::size_t>(h) * width);
    const double scale = 1.0 / std::sqrt(static_cast<double>(width));
    for (float& w : layer.weights) w = static_cast<float>(scale * rng.normal());
    layer.bias.assign(h, 0.0f);
    layers.push_back(std::move(layer));
    width = h;
  }
  // Readout placeholder so features() can run the hidden stack.
  ToyModel::Layer readout;
  readout.in = width;
  readout.out = classes;
  readout.weights.assign(static_cast<std::size_t>(width) * classes, 0.0f);
  readout.bias.assign(classes, 0.0f);
  layers.push_back(readout);
  ToyModel stack(layers);

  std::vector<std::vector<double>> centroid(classes, std::vector<double>(width, 0.0));
  std::vector<std::size_t> count(classes, 0);
  for (const Sample& s : train) {
    const std::vector<double> f = features(stack, s.x, hidden.size());
    for (std::uint32_t d = 0; d < width; ++d) centroid[s.label][d] += f[d];
    ++count[s.label];
  }
  ToyModel::Layer& out = layers.back();
  for (std::uint32_t c = 0; c < classes; ++c) {
    double norm2 = 0.0;
    for (std::uint32_t d = 0; d < width; ++d) {
      const double mu = count[c] ? centroid[c][d] / static_cast<double>(count[c]) : 0.0;
      out.weights[static_cast<std::size_t>(c) * width + d] = static_cast<float>(mu);
      norm2 += mu * mu;
    }
    out.bias[c] = static_cast<float>(-0.5 * norm2);
  }
  return ToyModel(std::move(layers));
}

ToyModel degrade(const ToyModel& model, double scale, std::uint64_t seed) {
  if (scale == 0.0) return model;
  std::vector<ToyModel::Layer> layers = model.layers();
  ToyModel::Layer& out = layers.back();
  double rms_w = 0.0;
  for (float w : out.weights) rms_w += static_cast<double>(w) * w;
  rms_w = std::sqrt(rms_w / static_cast<double>(out.weights.size()));
  double rms_b = 0.0;
  for (float b : out.bias) rms_b += static_cast<double>(b) * b;
  rms_b = std::sqrt(rms_b / static_cast<double>(out.bias.size()));
  Rng rng = Rng(seed).fork("degrade");
  for (float& w : out.weights) w = static_cast<float>(w + scale * rms_w * rng.normal());
  for (float& b : out.bias) b = static_cast<float>(b + scale * rms_b * rng.normal());
  return ToyModel(std::move(layers));
}

ToyModel fit_model_with_accuracy(std::span<const Sample> train, std::span<const Sample> eval,
                                 std::uint32_t classes, const std::vector<std::uint32_t>& hidden,
                                 double accuracy, std::uint64_t seed) {
  if (eval.empty()) throw std::invalid_argument("fit_model_with_accuracy: empty eval set");
  const auto target = static_cast<std::int64_t>(std::llround(accuracy * eval.size()));
  auto correct = [&](const ToyModel& m) {
    std::int64_t n = 0;
    for (const Sample& s : eval) n += m.predict(s.x) == s.label;
    return n;
  };
  const ToyModel clean = fit_centroid_model(train, classes, hidden, seed);
  if (correct(clean) == target) return clean;
  if (correct(clean) < target) {
    throw std::runtime_error("fit_model_with_accuracy: target above undegraded accuracy");
  }
  for (std::uint64_t attempt = 0; attempt < 16; ++attempt) {
    const std::uint64_t noise_seed = seed * 1000003 + attempt;
    double lo = 0.0;
    double hi = 0.5;
    while (correct(degrade(clean, hi, noise_seed)) > target && hi < 1e6) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      const ToyModel m = degrade(clean, mid, noise_seed);
      const std::int64_t n = correct(m);
      if (n == target) return m;
      if (n > target) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
  }
  throw std::runtime_error("fit_model_with_accuracy: no degradation hits the target count");
}

ToyModel baseline_model(const SuiteConfig& config, std::uint64_t seed) {
  const std::vector<Sample> train = generate_training_set(config, seed, 50);
  return fit_model_with_accuracy(train, train, config.classes, {16}, kBaselineAccuracy,
                                 seed ^ 0xba5e);
}

// --- metric kernels ---------------------------------------------------------

double ErrorTable::severity_sum(std::uint32_t type) const {
  double acc = 0.0;
  for (std::uint32_t s = 1; s <= kSeverities; ++s) acc += at(type, s);
  return acc;
}

void CleanTally::add(const ToyModel& model, const Sample& s) {
  wrong_ += model.predict(s.x) != s.label;
  ++total_;
}

double CleanTally::error() const {
  if (total_ == 0) throw std::domain_error("clean error of an empty set");
  return static_cast<double>(wrong_) / static_cast<double>(total_);
}

CorruptionTally::CorruptionTally(std::uint32_t types)
    : types_(types), wrong_(types * kSeverities, 0), total_(types * kSeverities, 0) {}

void CorruptionTally::add(const ToyModel& model, const CorruptionRecord& r) {
  if (r.type >= types_) throw std::invalid_argument("corruption type out of range");
  const std::size_t i = static_cast<std::size_t>(r.type) * kSeverities + (r.severity - 1);
  wrong_[i] += model.predict(r.sample.x) != r.sample.label;
  ++total_[i];
}

ErrorTable CorruptionTally::table() const {
  ErrorTable t;
  t.types = types_;
  t.values.resize(wrong_.size());
  for (std::size_t i = 0; i < wrong_.size(); ++i) {
    if (total_[i] == 0) throw std::domain_error("corruption cell with no samples");
    t.values[i] = static_cast<double>(wrong_[i]) / static_cast<double>(total_[i]);
  }
  return t;
}

FlipTally::FlipTally(std::uint32_t types) : flips_(types, 0), pairs_(types, 0) {}

void FlipTally::add(const ToyModel& model, const PerturbationSequence& seq) {
  if (seq.type >= flips_.size()) throw std::invalid_argument("perturbation type out of range");
  if (seq.frames.size() < 2) throw std::invalid_argument("sequence shorter than two frames");
  std::uint16_t prev = model.predict(seq.frames.front());
  for (std::size_t f = 1; f < seq.frames.size(); ++f) {
    const std::uint16_t cur = model.predict(seq.frames[f]);
    flips_[seq.type] += cur != prev;
    prev = cur;
  }
  pairs_[seq.type] += seq.frames.size() - 1;
}

std::vector<double> FlipTally::rates() const {
  std::vector<double> out(flips_.size());
  for (std::size_t p = 0; p < flips_.size(); ++p) {
    if (pairs_[p] == 0) throw std::domain_error("perturbation type with no sequences");
    out[p] = static_cast<double>(flips_[p]) / static_cast<double>(pairs_[p]);
  }
  return out;
}

void CleanTally::write(ByteWriter& out) const { out.u64(wrong_).u64(total_); }

CleanTally CleanTally::read(ByteReader& in) {
  CleanTally t;
  t.wrong_ = in.u64();
  t.total_ = in.u64();
  return t;
}

void CorruptionTally::write(ByteWriter& out) const {
  out.u32(types_);
  for (std::size_t i = 0; i < wrong_.size(); ++i) out.u64(wrong_[i]).u64(total_[i]);
}

CorruptionTally CorruptionTally::read(ByteReader& in) {
  const std::uint32_t types = in.u32();
  if (types > 1024) throw DecodeError("too many corruption types");
  CorruptionTally t(types);
  for (std::size_t i = 0; i < t.wrong_.size(); ++i) {
    t.wrong_[i] = in.u64();
    t.total_[i] = in.u64();
  }
  return t;
}

void FlipTally::write(ByteWriter& out) const {
  out.u32(static_cast<std::uint32_t>(flips_.size()));
  for (std::size_t i = 0; i < flips_.size(); ++i) out.u64(flips_[i]).u64(pairs_[i]);
}

FlipTally FlipTally::read(ByteReader& in) {
  const std::uint32_t types = in.u32();
  if (types > 1024) throw DecodeError("too many perturbation types");
  FlipTally t(types);
  for (std::size_t i = 0; i < types; ++i) {
    t.flips_[i] = in.u64();
    t.pairs_[i] = in.u64();
  }
  return t;
}

double clean_error(const ToyModel& model, std::span<const Sample> clean) {
  CleanTally t;
  for (const Sample& s : clean) t.add(model, s);
  return t.error();
}

ErrorTable corruption_errors(const ToyModel& model, std::span<const CorruptionRecord> records,
                             std::uint32_t types) {
  CorruptionTally t(types);
  for (const CorruptionRecord& r : records) t.add(model, r);
  return t.table();
}

std::vector<double> flip_rates(const ToyModel& model,
                               std::span<const PerturbationSequence> sequences,
                               std::uint32_t types) {
  FlipTally t(types);
  for (const PerturbationSequence& s : sequences) t.add(model, s);
  return t.rates();
}

CorruptionScore mce(const ErrorTable& model, const ErrorTable& baseline) {
  if (model.types != baseline.types || model.types == 0) {
    throw std::invalid_argument("mce: corruption type count mismatch");
  }
  CorruptionScore out;
  double acc = 0.0;
  for (std::uint32_t c = 0; c < model.types; ++c) {
    const double denom = baseline.severity_sum(c);
    if (denom == 0.0) {
      throw NormalizationError("baseline has zero error on corruption " + corruption_name(c));
    }
    out.per_corruption.push_back(model.severity_sum(c) / denom);
    acc += out.per_corruption.back();
  }
  out.mce = acc / model.types;
  return out;
}

double relative_mce(const ErrorTable& model, double ce, const ErrorTable& baseline,
                    double baseline_ce) {
  if (model.types != baseline.types || model.types == 0) {
    throw std::invalid_argument("relative_mce: corruption type count mismatch");
  }
  double acc = 0.0;
  for (std::uint32_t c = 0; c < model.types; ++c) {
    double num = 0.0;
    double denom = 0.0;
    for (std::uint32_t s = 1; s <= kSeverities; ++s) {
      num += model.at(c, s) - ce;
      denom += baseline.at(c, s) - baseline_ce;
    }
    // Rates are multiples of 1/n, so a true nonzero sum is far above rounding noise.
    if (std::fabs(denom) < 1e-12) {
      throw NormalizationError("baseline corruption error equals its clean error on " +
                               corruption_name(c));
    }
    acc += num / denom;
  }
  return acc / model.types;
}

double mfp(std::span<const double> model_fp, std::span<const double> baseline_fp) {
  if (model_fp.size() != baseline_fp.size() || model_fp.empty()) {
    throw std::invalid_argument("mfp: perturbation type count mismatch");
  }
  double acc = 0.0;
  for (std::size_t p = 0; p < model_fp.size(); ++p) {
    if (baseline_fp[p] == 0.0) {
      throw NormalizationError("baseline flip rate is zero on " +
                               perturbation_name(static_cast<std::uint32_t>(p)));
    }
    acc += model_fp[p] / baseline_fp[p];
  }
  return acc / static_cast<double>(model_fp.size());
}

BaselineStats measure_baseline(const ToyModel& baseline, const SampleBundle& bundle) {
  BaselineStats out;
  out.ce = clean_error(baseline, bundle.clean);
  out.errors = corruption_errors(baseline, bundle.corruption, bundle.corruption_types);
  out.fp = flip_rates(baseline, bundle.perturbation, bundle.perturbation_types);
  return out;
}

BenchmarkResult score(double ce, const ErrorTable& errors, const std::vector<double>& fp,
                      const BaselineStats& baseline, const Digest& baseline_id) {
  BenchmarkResult out;
  out.ce = ce;
  out.errors = errors;
  const CorruptionScore cs = mce(errors, baseline.errors);
  out.corruption_errors = cs.per_corruption;
  out.mce = cs.mce;
  out.relative_mce = relative_mce(errors, ce, baseline.errors, baseline.ce);
  out.flip_rates = fp;
  out.mfp = mfp(fp, baseline.fp);
  out.baseline_id = baseline_id;
  return out;
}

BenchmarkResult evaluate(const ToyModel& model, const SampleBundle& bundle,
                         const BaselineStats& baseline, const Digest& baseline_id) {
  const double ce = clean_error(model, bundle.clean);
  const ErrorTable errors = corruption_errors(model, bundle.corruption, bundle.corruption_types);
  const std::vector<double> fp = flip_rates(model, bundle.perturbation, bundle.perturbation_types);
  return score(ce, errors, fp, baseline, baseline_id);
}

Bytes BenchmarkResult::serialize() const {
  ByteWriter w;
  w.raw(as_bytes(std::string_view(kOutputMagic, 4))).u16(1);
  w.f64(ce).u32(errors.types);
  for (double v : errors.values) w.f64(v);
  w.u32(static_cast<std::uint32_t>(corruption_errors.size()));
  for (double v : corruption_errors) w.f64(v);
  w.f64(mce).f64(relative_mce);
  w.u32(static_cast<std::uint32_t>(flip_rates.size()));
  for (double v : flip_rates) w.f64(v);
  w.f64(mfp).raw(baseline_id);
  return std::move(w).take();
}

BenchmarkResult BenchmarkResult::deserialize(ByteView bytes) {
  try {
    ByteReader r(bytes);
    ByteView magic = r.raw(4);
    if (!std::equal(magic.begin(), magic.end(), kOutputMagic)) {
      throw FormatError("bad benchmark output magic");
    }
    if (r.u16() != 1) throw FormatError("unsupported benchmark output version");
    BenchmarkResult out;
    out.ce = r.f64();
    out.errors.types = r.u32();
    if (out.errors.types > 1024) throw FormatError("too many corruption types");
    out.errors.values.resize(static_cast<std::size_t>(out.errors.types) * kSeverities);
    for (double& v : out.errors.values) v = r.f64();
    const std::uint32_t nce = r.u32();
    if (nce > 1024) throw FormatError("too many corruption scores");
    out.corruption_errors.resize(nce);
    for (double& v : out.corruption_errors) v = r.f64();
    out.mce = r.f64();
    out.relative_mce = r.f64();
    const std::uint32_t nfp = r.u32();
    if (nfp > 1024) throw FormatError("too many flip rates");
    out.flip_rates.resize(nfp);
    for (double& v : out.flip_rates) v = r.f64();
    out.mfp = r.f64();
    out.baseline_id = r.fixed<Digest>();
    r.expect_done();
    return out;
  } catch (const DecodeError& e) {
    throw FormatError(std::string("benchmark output: ") + e.what());
  }
}

double quality_from_metric(double metric) {
  return std::clamp(1.0 - metric, kQualityFloor, 1.0);
}

QualityScores quality_scores(const BenchmarkResult& result) {
  return {quality_from_metric(result.mce), quality_from_metric(result.mfp)};
}

// --- dataset files ----------------------------------------------------------

namespace {

template <typename Records>
void write_records(const std::filesystem::path& path, const Records& records,
                   std::size_t& record_bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  record_bytes = 0;
  for (const auto& rec : records) {
    const Bytes b = encode_record(rec);
    if (record_bytes == 0) record_bytes = b.size();
    if (b.size() != record_bytes) throw FormatError("records are not fixed-width");
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  }
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

void save_suites(const Suites& suites, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::size_t clean_bytes = 0;
  std::size_t corruption_bytes = 0;
  std::size_t perturbation_bytes = 0;
  write_records(dir / "clean.bin", suites.clean, clean_bytes);
  write_records(dir / "corruption.bin", suites.corruption.records, corruption_bytes);
  write_records(dir / "perturbation.bin", suites.perturbation.sequences, perturbation_bytes);

  nlohmann::json manifest = {
      {"format", "bazaar-dataset"},
      {"version", kDatasetFormatVersion},
      {"dim", suites.config.dim},
      {"classes", suites.config.classes},
      {"corruption_types", suites.corruption.types},
      {"severities", kSeverities},
      {"corruption_bases", suites.corruption.bases},
      {"perturbation_types", suites.perturbation.types},
      {"sequences_per_type", suites.perturbation.sequences_per_type},
      {"frames", suites.perturbation.frames},
      {"suites",
       {{{"name", "clean"}, {"kind", "clean"}, {"file", "clean.bin"},
         {"record_count", suites.clean.size()}, {"record_bytes", clean_bytes}},
        {{"name", "corruption"}, {"kind", "corruption"}, {"file", "corruption.bin"},
         {"record_count", suites.corruption.records.size()}, {"record_bytes", corruption_bytes}},
        {{"name", "perturbation"}, {"kind", "perturbation"}, {"file", "perturbation.bin"},
         {"record_count", suites.perturbation.sequences.size()},
         {"record_bytes", perturbation_bytes}}}}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

Suites load_suites(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw FormatError("missing manifest.json in " + dir.string());
    try {
      in >> manifest;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("manifest.json: ") + e.what());
    }
  }
  try {
    if (manifest.at("format") != "bazaar-dataset") throw FormatError("not a bazaar dataset");
    if (manifest.at("version").get<int>() != kDatasetFormatVersion) {
      throw FormatError("unsupported dataset version");
    }
    Suites out;
    out.config.dim = manifest.at("dim");
    out.config.classes = manifest.at("classes");
    out.config.corruption_types = manifest.at("corruption_types");
    out.config.perturbation_types = manifest.at("perturbation_types");
    out.config.sequences_per_type = manifest.at("sequences_per_type");
    out.config.frames = manifest.at("frames");
    out.corruption.types = out.config.corruption_types;
    out.corruption.bases = manifest.at("corruption_bases");
    out.perturbation.types = out.config.perturbation_types;
    out.perturbation.sequences_per_type = out.config.sequences_per_type;
    out.perturbation.frames = out.config.frames;

    for (const auto& suite : manifest.at("suites")) {
      const std::string kind = suite.at("kind");
      const std::size_t count = suite.at("record_count");
      const std::size_t width = suite.at("record_bytes");
      const Bytes data = read_file(dir / suite.at("file").get<std::string>());
      if (data.size() != count * width) throw FormatError("record file size mismatch: " + kind);
      for (std::size_t i = 0; i < count; ++i) {
        ByteView rec(data.data() + i * width, width);
        if (kind == "clean") {
          out.clean.push_back(decode_clean_record(rec));
        } else if (kind == "corruption") {
          out.corruption.records.push_back(decode_corruption_record(rec));
        } else if (kind == "perturbation") {
          out.perturbation.sequences.push_back(decode_perturbation_record(rec));
        } else {
          throw FormatError("unknown suite kind: " + kind);
        }
      }
    }
    out.config.per_class =
        out.config.classes ? static_cast<std::uint32_t>(out.clean.size() / out.config.classes) : 0;
    if (out.corruption.records.size() !=
        static_cast<std::size_t>(out.corruption.types) * kSeverities * out.corruption.bases) {
      throw FormatError("corruption suite does not match its declared shape");
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }
}

}  // namespace bazaar::bench
