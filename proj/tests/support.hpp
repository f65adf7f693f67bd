#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <unistd.h>
#include <string>
#include <vector>

#include "dynorank/multislice_kernel.hpp"
#include "dynorank/random.hpp"
#include "dynorank/trace_store.hpp"

namespace testing {

inline dynorank::TraceTensor random_tensor(std::size_t n, std::size_t m, std::size_t p, std::uint64_t seed,
                                           double scale = 1.0) {
  auto rng = dynorank::stream_rng(seed, 0x7e57);
  std::vector<float> v(n * m * p);
  for (auto& x : v) x = static_cast<float>(scale * dynorank::standard_normal(rng));
  return dynorank::TraceTensor(n, m, p, std::move(v));
}

inline Eigen::MatrixXd random_points(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double shift = 0) {
  Eigen::MatrixXd x(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) x(i, j) = dynorank::standard_normal(rng) + shift;
  }
  return x;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("dynorank_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(dynorank::mix64(reinterpret_cast<std::uintptr_t>(this))));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline double point_dist(const dynorank::TraceTensor& t, std::size_t ta, std::size_t ia, std::size_t tb,
                         std::size_t ib) {
  double s = 0;
  for (std::size_t u = 0; u < t.p_units(); ++u) {
    const double d = static_cast<double>(t.at(ta, ia, u)) - static_cast<double>(t.at(tb, ib, u));
    s += d * d;
  }
  return std::sqrt(s);
}

// Dense K' straight from the case definition, looping over all index pairs.
inline Eigen::MatrixXd brute_force_kernel(const dynorank::TraceTensor& t, const dynorank::KernelParams& params) {
  const std::size_t n = t.n_epochs();
  const std::size_t m = t.m_samples();
  std::vector<double> sigma(n * m);
  for (std::size_t tau = 0; tau < n; ++tau) {
    for (std::size_t i = 0; i < m; ++i) {
      std::vector<double> d;
      for (std::size_t j = 0; j < m; ++j) {
        if (j != i) d.push_back(point_dist(t, tau, i, tau, j));
      }
      std::sort(d.begin(), d.end());
      sigma[tau * m + i] = std::max(d[params.knn_k - 1], params.bandwidth_floor);
    }
  }
  std::vector<double> cross;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t tau = 0; tau < n; ++tau) {
      for (std::size_t nu = tau + 1; nu < n; ++nu) {
        const double d = point_dist(t, tau, i, nu, i);
        if (d > 0) cross.push_back(d);
      }
    }
  }
  double eps = params.epsilon;
  if (params.epsilon_mode == dynorank::EpsilonMode::kMedian) {
    std::sort(cross.begin(), cross.end());
    if (cross.empty()) {
      eps = params.bandwidth_floor;
    } else if (cross.size() % 2) {
      eps = cross[cross.size() / 2];
    } else {
      eps = 0.5 * (cross[cross.size() / 2 - 1] + cross[cross.size() / 2]);
    }
    eps = std::max(eps, params.bandwidth_floor);
  }
  const auto N = static_cast<Eigen::Index>(n * m);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(N, N);
  for (std::size_t tau = 0; tau < n; ++tau) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t nu = 0; nu < n; ++nu) {
        for (std::size_t j = 0; j < m; ++j) {
          double v = 0;
          if (tau == nu) {
            const double s = sigma[tau * m + i];
            v = std::exp(-std::pow(point_dist(t, tau, i, tau, j), params.alpha) / (s * s));
          } else if (i == j) {
            const double d = point_dist(t, tau, i, nu, i);
            v = std::exp(-d * d / (eps * eps));
          }
          k(static_cast<Eigen::Index>(tau * m + i), static_cast<Eigen::Index>(nu * m + j)) = v;
        }
      }
    }
  }
  return 0.5 * (k + k.transpose());
}

// Biased / unbiased MMD^2 by explicit triple sums over kernel evaluations.
inline double naive_mmd2(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double h, bool unbiased) {
  auto kern = [h](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return std::exp(-(a - b).squaredNorm() / (2 * h * h));
  };
  const Eigen::Index nx = x.rows(), ny = y.rows();
  double xx = 0, yy = 0, xy = 0;
  for (Eigen::Index i = 0; i < nx; ++i) {
    for (Eigen::Index j = 0; j < nx; ++j) {
      if (!unbiased || i != j) xx += kern(x.row(i), x.row(j));
    }
  }
  for (Eigen::Index i = 0; i < ny; ++i) {
    for (Eigen::Index j = 0; j < ny; ++j) {
      if (!unbiased || i != j) yy += kern(y.row(i), y.row(j));
    }
  }
  for (Eigen::Index i = 0; i < nx; ++i) {
    for (Eigen::Index j = 0; j < ny; ++j) xy += kern(x.row(i), y.row(j));
  }
  const double a = static_cast<double>(nx), b = static_cast<double>(ny);
  if (unbiased) return xx / (a * (a - 1)) + yy / (b * (b - 1)) - 2 * xy / (a * b);
  return xx / (a * a) + yy / (b * b) - 2 * xy / (a * b);
}

// Median of the pooled pairwise distances, computed by full enumeration.
inline double naive_median_bandwidth(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  Eigen::MatrixXd z(x.rows() + y.rows(), x.cols());
  z << x, y;
  std::vector<double> d;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < z.rows(); ++j) d.push_back((z.row(i) - z.row(j)).norm());
  }
  std::sort(d.begin(), d.end());
  const double med = d.size() % 2 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
  return std::max(med, 1e-12);
}

}  // namespace testing
