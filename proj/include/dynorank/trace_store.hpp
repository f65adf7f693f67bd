#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dynorank {

// Activation record of one training run: epochs x trace samples x units,
// stored C-order as 32-bit floats (the on-disk precision).
class TraceTensor {
 public:
  TraceTensor() = default;
  // Validates shape, finiteness and epoch ordering; empty epoch_ids means
  // 0..n_epochs-1.
  TraceTensor(std::size_t n_epochs, std::size_t m_samples, std::size_t p_units, std::vector<float> values,
              std::vector<std::int64_t> epoch_ids = {});

  std::size_t n_epochs() const { return n_; }
  std::size_t m_samples() const { return m_; }
  std::size_t p_units() const { return p_; }
  const std::vector<float>& values() const { return values_; }
  const std::vector<std::int64_t>& epoch_ids() const { return epoch_ids_; }

  float at(std::size_t tau, std::size_t i, std::size_t u) const { return values_[(tau * m_ + i) * p_ + u]; }
  std::span<const float> row(std::size_t tau, std::size_t i) const {
    return {values_.data() + (tau * m_ + i) * p_, p_};
  }

  bool same_shape(const TraceTensor& other) const {
    return n_ == other.n_ && m_ == other.m_ && p_ == other.p_;
  }

  // Reorders trace samples: sample i of the result is sample perm[i] of this.
  TraceTensor permute_samples(std::span<const std::size_t> perm) const;

 private:
  std::size_t n_ = 0;
  std::size_t m_ = 0;
  std::size_t p_ = 0;
  std::vector<float> values_;
  std::vector<std::int64_t> epoch_ids_;
};

// Reads a 3-d NPY trace. Epoch ids come from the sidecar `<path>.json`
// ({"epoch_ids": [...]}) when present.
TraceTensor load_trace(const std::filesystem::path& path);
// Writes float32 C-order NPY; writes the sidecar only for non-default epoch ids.
void save_trace(const TraceTensor& t, const std::filesystem::path& path);

struct RunManifest {
  std::string spec_id;
  std::string realization_id;
  std::int64_t seed = 0;
  std::map<std::string, double> hyperparams;
  std::filesystem::path trace_path;
};

struct EnsembleManifest {
  std::vector<RunManifest> runs;
  std::vector<std::int64_t> trace_sample_ids;

  // Spec ids in first-appearance order.
  std::vector<std::string> spec_ids() const;
  // Indices into `runs` for one spec, manifest order.
  std::vector<std::size_t> group(const std::string& spec_id) const;
};

// Relative trace paths are resolved against the manifest's directory.
EnsembleManifest read_manifest(const std::filesystem::path& path);
// Trace paths are written as given (callers choose relative or absolute).
void write_manifest(const EnsembleManifest& e, const std::filesystem::path& path);

struct Violation {
  std::vector<std::string> runs;  // "spec_id/realization_id"
  std::string field;
  std::string message;
};

std::string describe(const Violation& v);

// Checks every ensemble invariant. `traces` is aligned with e.runs.
std::vector<Violation> validate_ensemble(const EnsembleManifest& e, std::span<const TraceTensor> traces);
// Loads the traces named by the manifest first; unreadable or malformed
// trace files are reported as violations on the `trace_path` field.
std::vector<Violation> validate_ensemble(const EnsembleManifest& e, std::vector<TraceTensor>* loaded = nullptr);

enum class FactorKind { kDiscrete, kOrdinal };

// Which noise probability of a NoiseModel applies to a factor.
enum class NoiseChannel { kNone, kShape, kScale, kOrientation, kPosition };

// Parses "shape" / "scale" / "orientation" / "position" / "none".
NoiseChannel parse_noise_channel(const std::string& tag);
std::string to_string(NoiseChannel c);

struct FactorInfo {
  std::string name;
  std::int64_t size = 0;
  FactorKind kind = FactorKind::kDiscrete;
  NoiseChannel channel = NoiseChannel::kNone;
};

// Observations with ground-truth generative factor labels.
struct FactorDataset {
  std::size_t n = 0;
  std::size_t obs_dim = 0;
  std::vector<float> observations;           // n x obs_dim, may be empty for label-only loads
  std::vector<std::int64_t> factor_classes;  // n x F
  std::vector<double> factor_values;         // n x F
  std::vector<FactorInfo> factors;

  std::size_t n_factors() const { return factors.size(); }
  std::vector<std::int64_t> factor_sizes() const;
  std::int64_t factor_class(std::size_t row, std::size_t f) const { return factor_classes[row * factors.size() + f]; }
  bool is_full_factorial() const;
  // Throws ValidationError when classes are out of range or arrays disagree.
  void validate() const;
};

struct DspritesLoadOptions {
  bool images = true;
};

// numpy .npz with members imgs (N,H,W), latents_classes (N,F), latents_values (N,F).
FactorDataset load_dsprites(const std::filesystem::path& path, DspritesLoadOptions options = {});

enum class SampleStrategy { kUniform, kStratified };

// Trace batch size used when a caller has no reason to pick another.
inline constexpr std::size_t kDefaultTraceSamples = 64;

// m distinct row indices, sorted. Stratified balances counts over the
// classes of `stratify_factor`.
std::vector<std::int64_t> select_trace_samples(const FactorDataset& d, std::size_t m, std::uint64_t seed,
                                               SampleStrategy strategy, std::size_t stratify_factor = 0);

}  // namespace dynorank
