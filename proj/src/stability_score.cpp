#include "dynorank/stability_score.hpp"

#include <algorithm>
#include <cmath>

#include "dynorank/errors.hpp"
#include "dynorank/parallel.hpp"

namespace dynorank {

namespace {

// Row-pair squared distances of the pooled set [x; y], exact zero for equal rows.
Eigen::MatrixXd pooled_sq_dists(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  const Eigen::Index nx = x.rows();
  const Eigen::Index n = nx + y.rows();
  Eigen::MatrixXd z(n, x.cols());
  z << x, y;
  const Eigen::MatrixXd zt = z.transpose();
  Eigen::MatrixXd d(n, n);
  for (Eigen::Index a = 0; a < n; ++a) {
    d(a, a) = 0;
    for (Eigen::Index b = a + 1; b < n; ++b) {
      const double s = (zt.col(a) - zt.col(b)).squaredNorm();
      d(a, b) = s;
      d(b, a) = s;
    }
  }
  return d;
}

double median_from_sq(const Eigen::MatrixXd& d2) {
  const Eigen::Index n = d2.rows();
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a + 1; b < n; ++b) v.push_back(std::sqrt(d2(a, b)));
  }
  if (v.empty()) return kBandwidthFloor;
  const std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h), v.end());
  double med = v[h];
  if (v.size() % 2 == 0) med = 0.5 * (med + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h)));
  return std::max(med, kBandwidthFloor);
}

double mmd2_from_sq(const Eigen::MatrixXd& d2, Eigen::Index nx, double bandwidth, MmdEstimator estimator) {
  const Eigen::Index n = d2.rows();
  const Eigen::Index ny = n - nx;
  const double scale = -1.0 / (2.0 * bandwidth * bandwidth);
  double sxx = 0, syy = 0, sxy = 0;
  const bool unbiased = estimator == MmdEstimator::kUnbiased;
  for (Eigen::Index a = 0; a < nx; ++a) {
    for (Eigen::Index b = 0; b < nx; ++b) {
      if (!(unbiased && a == b)) sxx += std::exp(d2(a, b) * scale);
    }
  }
  for (Eigen::Index a = nx; a < n; ++a) {
    for (Eigen::Index b = nx; b < n; ++b) {
      if (!(unbiased && a == b)) syy += std::exp(d2(a, b) * scale);
    }
  }
  for (Eigen::Index a = 0; a < nx; ++a) {
    for (Eigen::Index b = nx; b < n; ++b) sxy += std::exp(d2(a, b) * scale);
  }
  const double fx = static_cast<double>(nx);
  const double fy = static_cast<double>(ny);
  if (unbiased) return sxx / (fx * (fx - 1)) + syy / (fy * (fy - 1)) - 2.0 * sxy / (fx * fy);
  return sxx / (fx * fx) + syy / (fy * fy) - 2.0 * sxy / (fx * fy);
}

void check_sets(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() < 2 || y.rows() < 2) throw ValidationError("mmd2: each point set needs at least 2 points");
  if (x.cols() != y.cols()) throw ValidationError("mmd2: point dimensions differ");
}

double mmd2_pair(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const MmdParams& params) {
  const Eigen::MatrixXd d2 = pooled_sq_dists(x, y);
  const double h = params.bandwidth == MmdBandwidth::kFixed ? params.fixed_bandwidth : median_from_sq(d2);
  return mmd2_from_sq(d2, x.rows(), h, params.estimator);
}

}  // namespace

void MmdParams::validate() const {
  if (bandwidth == MmdBandwidth::kFixed && !(fixed_bandwidth > 0)) {
    throw ValidationError("mmd: fixed bandwidth must be positive");
  }
}

double median_heuristic_bandwidth(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  if (x.rows() + y.rows() < 2) throw ValidationError("median_heuristic_bandwidth: need at least 2 points");
  if (x.rows() && y.rows() && x.cols() != y.cols()) throw ValidationError("median_heuristic_bandwidth: dimension mismatch");
  return median_from_sq(pooled_sq_dists(x, y));
}

double mmd2(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double bandwidth, MmdEstimator estimator) {
  check_sets(x, y);
  if (!(bandwidth > 0)) throw ValidationError("mmd2: bandwidth must be positive");
  return mmd2_from_sq(pooled_sq_dists(x, y), x.rows(), bandwidth, estimator);
}

double mmd2(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const MmdParams& params) {
  check_sets(x, y);
  params.validate();
  return mmd2_pair(x, y, params);
}

ScoreMatrix pairwise_scores(const JointEmbedding& e, const MmdParams& params, std::size_t threads) {
  params.validate();
  const std::size_t n = e.n_realizations();
  if (n < 2) throw ValidationError("pairwise_scores: need at least 2 realizations");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) pairs.emplace_back(a, b);
  }
  std::vector<double> vals(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t k) {
    const auto [a, b] = pairs[k];
    const Eigen::MatrixXd x = e.block(a);
    const Eigen::MatrixXd y = e.block(b);
    if (params.pooling == MmdPooling::kPooled) {
      vals[k] = mmd2(x, y, params);
    } else {
      const auto m = static_cast<Eigen::Index>(e.m_samples);
      double acc = 0;
      for (std::size_t tau = 0; tau < e.n_epochs; ++tau) {
        const auto off = static_cast<Eigen::Index>(tau) * m;
        acc += mmd2(x.middleRows(off, m), y.middleRows(off, m), params);
      }
      vals[k] = acc / static_cast<double>(e.n_epochs);
    }
  });
  ScoreMatrix s;
  s.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [a, b] = pairs[k];
    s.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = vals[k];
    s.values(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = vals[k];
  }
  return s;
}

SpecScore spec_score(const ScoreMatrix& s) {
  const Eigen::Index n = s.values.rows();
  if (n < 2 || s.values.cols() != n) throw ValidationError("spec_score: need a square matrix with n >= 2");
  double sum = 0;
  std::size_t count = 0;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a + 1; b < n; ++b) {
      sum += s.values(a, b);
      ++count;
    }
  }
  SpecScore out;
  out.mean = sum / static_cast<double>(count);
  double ss = 0;
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a + 1; b < n; ++b) ss += (s.values(a, b) - out.mean) * (s.values(a, b) - out.mean);
  }
  out.std = std::sqrt(ss / static_cast<double>(count));
  return out;
}

RankingReport rank_specs(const std::vector<std::pair<std::string, double>>& scores) {
  if (scores.empty()) throw ValidationError("rank_specs: no scores");
  std::vector<std::pair<std::string, double>> sorted = scores;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second < b.second;
    return a.first < b.first;
  });
  RankingReport r;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    RankEntry e;
    e.rank = k + 1;
    e.spec_id = sorted[k].first;
    e.mean = sorted[k].second;
    e.tied = (k > 0 && sorted[k - 1].second == e.mean) || (k + 1 < sorted.size() && sorted[k + 1].second == e.mean);
    r.entries.push_back(e);
  }
  return r;
}

}  // namespace dynorank
