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

// Robustness benchmark: toy classifiers, synthetic corruption/perturbation
// suites and the ce / mCE / relative mCE / mFP kernels.
//
// Conventions (all errors are fractions, not percentages):
//   E[c][s]  error of a model on corruption c at severity s
//   CE_c     = sum_s E[c][s] / sum_s Ebase[c][s]
//   mCE      = mean_c CE_c
//   relCE_c  = sum_s (E[c][s] - ce) / sum_s (Ebase[c][s] - ce_base)
//   FP_p     = flips between consecutive frames / (sequences * (F - 1))
//   mFP      = mean_p FP_p / FPbase_p

#ifndef BAZAAR_BENCHMARK_HPP_
#define BAZAAR_BENCHMARK_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bazaar/bytes.hpp"
#include "bazaar/crypto.hpp"
#include "bazaar/rng.hpp"

namespace bazaar::bench {

inline constexpr std::uint32_t kSeverities = 5;
inline constexpr std::uint32_t kFramesPerSequence = 31;

/// Raised when a baseline would divide by zero (CE, relative CE or FP).
class NormalizationError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised on malformed model or dataset files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- data -----------------------------------------------------------------

struct Sample {
  std::uint16_t label = 0;
  std::vector<float> x;
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct CorruptionRecord {
  std::uint16_t type = 0;
  std::uint8_t severity = 1;  // 1..kSeverities
  std::uint32_t base = 0;     // index into the clean base set
  Sample sample;
  friend bool operator==(const CorruptionRecord&, const CorruptionRecord&) = default;
};

struct PerturbationSequence {
  std::uint16_t type = 0;
  std::uint32_t base = 0;
  std::uint16_t label = 0;
  std::vector<std::vector<float>> frames;  // frames[0] is the clean base
  friend bool operator==(const PerturbationSequence&, const PerturbationSequence&) = default;
};

struct SuiteConfig {
  std::uint32_t dim = 64;
  std::uint32_t classes = 10;
  std::uint32_t per_class = 100;
  std::uint32_t corruption_types = 3;
  std::uint32_t perturbation_types = 3;
  std::uint32_t sequences_per_type = 20;
  std::uint32_t frames = kFramesPerSequence;
  double class_noise = 2.0;
};

struct CorruptionSuite {
  std::uint32_t types = 0;
  std::uint32_t bases = 0;
  /// Index layout: ((type * kSeverities) + (severity - 1)) * bases + base.
  std::vector<CorruptionRecord> records;

  std::size_t index(std::uint32_t type, std::uint32_t severity, std::uint32_t base) const {
    return (static_cast<std::size_t>(type) * kSeverities + (severity - 1)) * bases + base;
  }
};

struct PerturbationSuite {
  std::uint32_t types = 0;
  std::uint32_t sequences_per_type = 0;
  std::uint32_t frames = kFramesPerSequence;
  /// Index layout: type * sequences_per_type + k.
  std::vector<PerturbationSequence> sequences;
};

struct Suites {
  SuiteConfig config;
  std::vector<Sample> clean;
  CorruptionSuite corruption;
  PerturbationSuite perturbation;
};

/// Clean base set: one Gaussian prototype per class plus isotropic noise.
std::vector<Sample> generate_clean_set(const SuiteConfig& config, std::uint64_t seed);
/// Independent draw from the same class prototypes, for fitting models.
std::vector<Sample> generate_training_set(const SuiteConfig& config, std::uint64_t seed,
                                          std::uint32_t per_class);

/// Corruption and perturbation suites derived from a clean base set. Pure in
/// (base, config, seed); labels of the base set are carried through.
Suites generate_suites(std::vector<Sample> base, const SuiteConfig& config, std::uint64_t seed);
inline Suites generate_suites(const SuiteConfig& config, std::uint64_t seed) {
  return generate_suites(generate_clean_set(config, seed), config, seed);
}

/// Names of the desk-scale corruption and perturbation types.
std::string corruption_name(std::uint32_t type);
std::string perturbation_name(std::uint32_t type);

// --- canonical encodings ---------------------------------------------------

Bytes encode_record(const Sample& s);
Bytes encode_record(const CorruptionRecord& r);
Bytes encode_record(const PerturbationSequence& s);
Sample decode_clean_record(ByteView bytes);
CorruptionRecord decode_corruption_record(ByteView bytes);
PerturbationSequence decode_perturbation_record(ByteView bytes);

/// Samples delivered to a benchmark run: the subset of each suite chosen by
/// the relay, in index order.
struct SampleBundle {
  std::vector<CorruptionRecord> corruption;
  std::vector<PerturbationSequence> perturbation;
  std::vector<Sample> clean;
  std::uint32_t corruption_types = 0;
  std::uint32_t perturbation_types = 0;
};

enum class Section : std::uint8_t { kCorruption = 0, kPerturbation = 1, kClean = 2 };

/// Canonical section encoding: u32 record count, then each record as a
/// u32-length-prefixed blob, in bundle order.
Bytes encode_section(const SampleBundle& bundle, Section section);

struct BundleDigest {
  Digest corruption;
  Digest perturbation;
  Digest clean;
  /// hash(corruption || perturbation || clean)
  Digest root;
  std::uint64_t encoded_bytes = 0;
};

Digest section_root(const Digest& corruption, const Digest& perturbation, const Digest& clean);
BundleDigest digest_bundle(const SampleBundle& bundle);

// --- toy classifier ---------------------------------------------------------

/// Small fully-connected ReLU network. Serialized form:
///   "BZMD" | u16 version | u32 input_dim | u32 layer_count |
///   per layer: u32 in | u32 out | f32 weights[out*in] (row-major) | f32 bias[out]
/// all little-endian. The forward pass accumulates in double and breaks
/// argmax ties toward the lowest class index.
class ToyModel {
 public:
  struct Layer {
    std::uint32_t in = 0;
    std::uint32_t out = 0;
    std::vector<float> weights;
    std::vector<float> bias;
    friend bool operator==(const Layer&, const Layer&) = default;
  };

  static constexpr std::uint16_t kVersion = 1;

  ToyModel() = default;
  explicit ToyModel(std::vector<Layer> layers);

  std::uint32_t input_dim() const { return layers_.front().in; }
  std::uint32_t classes() const { return layers_.back().out; }
  std::vector<std::uint32_t> hidden_sizes() const;
  const std::vector<Layer>& layers() const { return layers_; }

  std::uint16_t predict(std::span<const float> x) const;

  Bytes serialize() const;
  static ToyModel deserialize(ByteView bytes);
  void save(const std::filesystem::path& path) const;
  static ToyModel load(const std::filesystem::path& path);

  friend bool operator==(const ToyModel&, const ToyModel&) = default;

 private:
  std::vector<Layer> layers_;
};

/// Random ReLU features (one layer per hidden size) followed by a
/// nearest-centroid readout fitted on the training set.
ToyModel fit_centroid_model(std::span<const Sample> train, std::uint32_t classes,
                            const std::vector<std::uint32_t>& hidden, std::uint64_t seed);

/// Adds noise of the given scale to the readout layer. Scale 0 returns the
/// model unchanged.
ToyModel degrade(const ToyModel& model, double scale, std::uint64_t seed);

/// Searches the degradation scale so that exactly round(accuracy * n)
/// samples of `eval` are classified correctly. Throws std::runtime_error if
/// no scale hits the count.
ToyModel fit_model_with_accuracy(std::span<const Sample> train, std::span<const Sample> eval,
                                 std::uint32_t classes, const std::vector<std::uint32_t>& hidden,
                                 double accuracy, std::uint64_t seed);

/// The deliberately weak reference classifier every benchmark normalises
/// against: one hidden layer of 16 units, degraded to 40% clean accuracy on
/// its own training set.
ToyModel baseline_model(const SuiteConfig& config, std::uint64_t seed);
inline constexpr double kBaselineAccuracy = 0.40;

// --- metric kernels ----------------------------------------------------------

/// Error table indexed [type][severity-1].
struct ErrorTable {
  std::uint32_t types = 0;
  std::vector<double> values;  // types * kSeverities

  double at(std::uint32_t type, std::uint32_t severity) const {
    return values[static_cast<std::size_t>(type) * kSeverities + (severity - 1)];
  }
  double severity_sum(std::uint32_t type) const;
  friend bool operator==(const ErrorTable&, const ErrorTable&) = default;
};

/// Running tallies. The enclave feeds them batch by batch; the tallies are
/// exact integer counts so the order of batches does not matter.
class CleanTally {
 public:
  void add(const ToyModel& model, const Sample& s);
  double error() const;
  std::uint64_t total() const { return total_; }
  std::uint64_t wrong() const { return wrong_; }
  void write(ByteWriter& out) const;
  static CleanTally read(ByteReader& in);

 private:
  std::uint64_t wrong_ = 0;
  std::uint64_t total_ = 0;
};

class CorruptionTally {
 public:
  explicit CorruptionTally(std::uint32_t types);
  void add(const ToyModel& model, const CorruptionRecord& r);
  ErrorTable table() const;
  void write(ByteWriter& out) const;
  static CorruptionTally read(ByteReader& in);

 private:
  std::uint32_t types_;
  std::vector<std::uint64_t> wrong_;
  std::vector<std::uint64_t> total_;
};

class FlipTally {
 public:
  explicit FlipTally(std::uint32_t types);
  void add(const ToyModel& model, const PerturbationSequence& seq);
  std::vector<double> rates() const;
  void write(ByteWriter& out) const;
  static FlipTally read(ByteReader& in);

 private:
  std::vector<std::uint64_t> flips_;
  std::vector<std::uint64_t> pairs_;
};

double clean_error(const ToyModel& model, std::span<const Sample> clean);
ErrorTable corruption_errors(const ToyModel& model, std::span<const CorruptionRecord> records,
                             std::uint32_t types);
std::vector<double> flip_rates(const ToyModel& model,
                               std::span<const PerturbationSequence> sequences,
                               std::uint32_t types);

struct CorruptionScore {
  std::vector<double> per_corruption;
  double mce = 0.0;
};

CorruptionScore mce(const ErrorTable& model, const ErrorTable& baseline);
double relative_mce(const ErrorTable& model, double ce, const ErrorTable& baseline,
                    double baseline_ce);
double mfp(std::span<const double> model_fp, std::span<const double> baseline_fp);

/// Baseline statistics a benchmark program normalises against. Always
/// measured on the same samples as the candidate.
struct BaselineStats {
  ErrorTable errors;
  double ce = 0.0;
  std::vector<double> fp;
  friend bool operator==(const BaselineStats&, const BaselineStats&) = default;
};

BaselineStats measure_baseline(const ToyModel& baseline, const SampleBundle& bundle);

struct BenchmarkResult {
  double ce = 0.0;
  ErrorTable errors;
  std::vector<double> corruption_errors;  // CE_c
  double mce = 0.0;
  double relative_mce = 0.0;
  std::vector<double> flip_rates;  // FP_p
  double mfp = 0.0;
  Digest baseline_id;

  double nature_accuracy() const { return 1.0 - ce; }
  Bytes serialize() const;
  static BenchmarkResult deserialize(ByteView bytes);
  friend bool operator==(const BenchmarkResult&, const BenchmarkResult&) = default;
};

/// Combines raw tallies into the published metrics.
BenchmarkResult score(double ce, const ErrorTable& errors, const std::vector<double>& fp,
                      const BaselineStats& baseline, const Digest& baseline_id);

/// Straight-line evaluation of a bundle (no batching, no enclave).
BenchmarkResult evaluate(const ToyModel& model, const SampleBundle& bundle,
                         const BaselineStats& baseline, const Digest& baseline_id);

inline constexpr double kQualityFloor = 0.01;

struct QualityScores {
  double mce = 0.0;
  double mfp = 0.0;
};

/// q = clamp(1 - metric, kQualityFloor, 1). Lower metric, higher quality.
QualityScores quality_scores(const BenchmarkResult& result);
double quality_from_metric(double metric);

// --- dataset files -----------------------------------------------------------

/// On-disk dataset: a directory holding manifest.json plus one fixed-width
/// record file per suite (records encoded as by encode_record).
///
/// manifest.json:
///   {"format": "bazaar-dataset", "version": 1, "dim": 64, "classes": 10,
///    "corruption_types": 3, "perturbation_types": 3, "frames": 31,
///    "suites": [{"name": "clean", "kind": "clean", "file": "clean.bin",
///                "record_count": 1000, "record_bytes": 258}, ...]}
inline constexpr int kDatasetFormatVersion = 1;

void save_suites(const Suites& suites, const std::filesystem::path& dir);
Suites load_suites(const std::filesystem::path& dir);

}  // namespace bazaar::bench

#endif  // BAZAAR_BENCHMARK_HPP_
