#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dynorank/trace_store.hpp"

namespace dynorank {

// Per-sample posterior means, row-major N x dim.
struct LatentCodes {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  double at(std::size_t row, std::size_t j) const { return values[row * dim + j]; }
  void validate() const;
};

struct NoiseModel {
  double p_shape = 0.0;
  double p_scale = 0.0;
  double p_orient = 0.0;
  double p_pos = 0.0;
  double continuous_sigma = 1.0;  // Gaussian step scale, in class-index units

  void validate() const;
  double probability(NoiseChannel c) const;
};

// The three label-noise regimes used for the robustness study (index 1..3).
NoiseModel noise_model_preset(int index);

struct MetricConfig {
  std::size_t batches = 800;          // votes
  std::size_t samples_per_batch = 64;
  std::uint64_t seed = 0;
  std::size_t bins = 20;
  double variance_prune_threshold = 0.05;  // fraction of the largest latent variance
  double learning_rate = 0.5;              // beta-VAE metric classifier
  std::size_t classifier_epochs = 2000;
  double train_fraction = 0.5;

  void validate() const;
};

struct MetricResult {
  double value = 0.0;
  std::vector<std::string> warnings;
};

// Linear-classifier vote accuracy on mean absolute code differences of
// pairs that share one factor. With `noise`, the shared factor of the
// second sample is perturbed before lookup.
MetricResult betavae_metric(const LatentCodes& codes, const FactorDataset& d, const MetricConfig& cfg,
                            const std::optional<NoiseModel>& noise = std::nullopt);

// Majority-vote accuracy of argmin normalized in-batch variance.
MetricResult factorvae_metric(const LatentCodes& codes, const FactorDataset& d, const MetricConfig& cfg,
                              const std::optional<NoiseModel>& noise = std::nullopt);

// Mutual information gap with equal-occupancy binning of each code dimension.
MetricResult mig(const LatentCodes& codes, const FactorDataset& d, const MetricConfig& cfg);

// Equal-occupancy bin index per row (stable on ties).
std::vector<std::size_t> equal_occupancy_bins(std::span<const double> values, std::size_t bins);

// Plug-in mutual information (nats) of two discrete label vectors.
double mutual_information(std::span<const std::size_t> a, std::span<const std::size_t> b);
double entropy(std::span<const std::size_t> a);

// Perturbed label copy. Discrete factors are resampled uniformly, ordinal
// factors move by a rounded Gaussian step clipped to range.
FactorDataset perturb_factors(const FactorDataset& d, const NoiseModel& noise, std::uint64_t seed);

// One factor class after noise; exposed for the vote samplers.
std::int64_t perturb_class(std::int64_t c, const FactorInfo& f, double probability, double sigma,
                           std::mt19937_64& rng);

double total_variation(std::span<const double> p, std::span<const double> q);

// Mean over sensitive classes of TV(p(yhat), p(yhat | s)). Classes listed
// in [0, n_sensitive) but absent from `sensitive` are skipped with a warning;
// n_sensitive = 0 infers the class count from the data.
MetricResult unfairness(std::span<const std::int64_t> predictions, std::span<const std::int64_t> sensitive,
                        std::size_t n_sensitive = 0);

// Mean unfairness over several prediction targets.
MetricResult unfairness(const std::vector<std::vector<std::int64_t>>& predictions_per_target,
                        std::span<const std::int64_t> sensitive, std::size_t n_sensitive = 0);

}  // namespace dynorank
