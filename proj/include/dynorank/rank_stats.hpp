#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dynorank/stability_score.hpp"

namespace dynorank {

// Mid-ranks (1-based), ties share the average rank.
std::vector<double> mid_ranks(std::span<const double> v);

// Throw ValidationError on length mismatch, length < 2 or zero variance.
double pearson(std::span<const double> a, std::span<const double> b);
double spearman(std::span<const double> a, std::span<const double> b);

enum class CorrelationMethod { kSpearman, kPearson };
double correlate(std::span<const double> a, std::span<const double> b, CorrelationMethod method);

struct SubsampleOptions {
  std::vector<std::size_t> subset_sizes;
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  CorrelationMethod method = CorrelationMethod::kSpearman;
  // Stability scores are lower-is-better; they are negated before
  // correlating so agreement with a higher-is-better reference is positive.
  bool lower_is_better = true;
};

struct SubsampleRow {
  std::size_t size = 0;
  double mean = 0.0;
  double std = 0.0;  // population std over trials
};

// scores_by_seed is specs x seeds. Per trial and spec, a random subset of
// seeds is drawn and the spec score is the subset mean; the correlation of
// those scores against `reference` is summarized per size.
std::vector<SubsampleRow> subsample_stability(const Eigen::MatrixXd& scores_by_seed, std::span<const double> reference,
                                              const SubsampleOptions& options);

// Pairwise variant: one score matrix per spec; a subset's score is the mean
// over its realization pairs (sizes must be >= 2).
std::vector<SubsampleRow> subsample_stability(std::span<const ScoreMatrix> per_spec, std::span<const double> reference,
                                              const SubsampleOptions& options);

}  // namespace dynorank
