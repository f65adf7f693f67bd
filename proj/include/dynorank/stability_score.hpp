#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "dynorank/joint_embedding.hpp"

namespace dynorank {

enum class MmdEstimator { kBiased, kUnbiased };
enum class MmdBandwidth { kMedianHeuristic, kFixed };
// kPooled compares all (epoch, sample) rows of two blocks at once;
// kPerEpoch averages the per-epoch statistics.
enum class MmdPooling { kPooled, kPerEpoch };

struct MmdParams {
  MmdEstimator estimator = MmdEstimator::kBiased;
  MmdBandwidth bandwidth = MmdBandwidth::kMedianHeuristic;
  double fixed_bandwidth = 1.0;
  MmdPooling pooling = MmdPooling::kPooled;

  void validate() const;
};

inline constexpr double kBandwidthFloor = 1e-12;

// Median of pairwise Euclidean distances over the pooled rows of x and y.
double median_heuristic_bandwidth(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

// Squared MMD with Gaussian kernel exp(-|a-b|^2 / (2 h^2)); rows are points.
double mmd2(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double bandwidth, MmdEstimator estimator);
double mmd2(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const MmdParams& params);

struct ScoreMatrix {
  std::string spec_id;
  Eigen::MatrixXd values;  // symmetric, zero diagonal
};

ScoreMatrix pairwise_scores(const JointEmbedding& e, const MmdParams& params, std::size_t threads = 1);

struct SpecScore {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over the upper-triangle pairs
};

SpecScore spec_score(const ScoreMatrix& s);

struct RankEntry {
  std::size_t rank = 0;  // 1 = lowest mean = most stable
  std::string spec_id;
  double mean = 0.0;
  bool tied = false;     // equal mean to a neighbor; order then follows spec_id
};

struct RankingReport {
  std::vector<RankEntry> entries;
};

RankingReport rank_specs(const std::vector<std::pair<std::string, double>>& scores);

}  // namespace dynorank
