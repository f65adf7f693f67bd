#include "dynorank/multislice_kernel.hpp"

#include <algorithm>
#include <cmath>

#include "dynorank/errors.hpp"

namespace dynorank {

namespace {

// Double-precision copy of one epoch's points, optionally standardized per unit.
Eigen::MatrixXd epoch_points(const TraceTensor& t, std::size_t tau, bool standardize) {
  const std::size_t m = t.m_samples();
  const std::size_t p = t.p_units();
  Eigen::MatrixXd x(m, p);
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = t.row(tau, i);
    for (std::size_t u = 0; u < p; ++u) x(i, u) = r[u];
  }
  if (standardize) {
    for (std::size_t u = 0; u < p; ++u) {
      const double mean = x.col(u).mean();
      const double sd = std::sqrt((x.col(u).array() - mean).square().mean());
      x.col(u).array() -= mean;
      if (sd > 0) x.col(u) /= sd;
    }
  }
  return x;
}

double sq_dist(const Eigen::MatrixXd& x, std::size_t a, std::size_t b) {
  double s = 0;
  for (Eigen::Index u = 0; u < x.cols(); ++u) {
    const double d = x(a, u) - x(b, u);
    s += d * d;
  }
  return s;
}

double powered(double sq, double alpha) { return alpha == 2.0 ? sq : std::pow(std::sqrt(sq), alpha); }

std::vector<double> knn_from_points(const Eigen::MatrixXd& x, const KernelParams& params) {
  const auto m = static_cast<std::size_t>(x.rows());
  std::vector<double> sigma(m);
  std::vector<double> d(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t k = 0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != i) d[k++] = sq_dist(x, i, j);
    }
    const auto nth = d.begin() + static_cast<std::ptrdiff_t>(params.knn_k - 1);
    std::nth_element(d.begin(), nth, d.end());
    sigma[i] = std::max(std::sqrt(*nth), params.bandwidth_floor);
  }
  return sigma;
}

Eigen::MatrixXd block_from_points(const Eigen::MatrixXd& x, const std::vector<double>& sigma, double alpha) {
  const Eigen::Index m = x.rows();
  Eigen::MatrixXd b(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double s2 = sigma[static_cast<std::size_t>(i)] * sigma[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m; ++j) {
      b(i, j) = i == j ? 1.0 : std::exp(-powered(sq_dist(x, static_cast<std::size_t>(i), static_cast<std::size_t>(j)), alpha) / s2);
    }
  }
  return b;
}

double trajectory_sq_dist(const TraceTensor& t, std::size_t i, std::size_t tau, std::size_t nu) {
  const auto a = t.row(tau, i);
  const auto b = t.row(nu, i);
  double s = 0;
  for (std::size_t u = 0; u < a.size(); ++u) {
    const double d = static_cast<double>(a[u]) - static_cast<double>(b[u]);
    s += d * d;
  }
  return s;
}

}  // namespace

void KernelParams::validate(std::size_t m_samples) const {
  if (!(alpha >= 1.0) || !std::isfinite(alpha)) throw ValidationError("kernel: alpha must be >= 1");
  if (knn_k < 1 || knn_k >= m_samples) {
    throw ValidationError("kernel: knn_k = " + std::to_string(knn_k) + " must lie in [1, m_samples = " +
                          std::to_string(m_samples) + ")");
  }
  if (!(bandwidth_floor > 0)) throw ValidationError("kernel: bandwidth_floor must be positive");
  if (epsilon_mode == EpsilonMode::kFixed && !(epsilon > 0)) throw ValidationError("kernel: fixed epsilon must be positive");
}

std::vector<double> knn_bandwidths(const TraceTensor& t, std::size_t tau, const KernelParams& params) {
  params.validate(t.m_samples());
  return knn_from_points(epoch_points(t, tau, params.standardize), params);
}

Eigen::MatrixXd intraslice_block(const TraceTensor& t, std::size_t tau, const KernelParams& params) {
  if (tau >= t.n_epochs()) throw ValidationError("intraslice_block: epoch index out of range");
  params.validate(t.m_samples());
  const Eigen::MatrixXd x = epoch_points(t, tau, params.standardize);
  return block_from_points(x, knn_from_points(x, params), params.alpha);
}

BandwidthChoice interslice_bandwidth(const TraceTensor& t, const KernelParams& params) {
  if (params.epsilon_mode == EpsilonMode::kFixed) return {params.epsilon, false};
  std::vector<double> d;
  d.reserve(t.m_samples() * t.n_epochs() * (t.n_epochs() - 1) / 2);
  for (std::size_t i = 0; i < t.m_samples(); ++i) {
    for (std::size_t tau = 0; tau < t.n_epochs(); ++tau) {
      for (std::size_t nu = tau + 1; nu < t.n_epochs(); ++nu) {
        const double s = trajectory_sq_dist(t, i, tau, nu);
        if (s > 0) d.push_back(std::sqrt(s));
      }
    }
  }
  if (d.empty()) return {params.bandwidth_floor, true};
  const std::size_t h = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(h), d.end());
  double med = d[h];
  if (d.size() % 2 == 0) {
    const double lo = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(h));
    med = 0.5 * (lo + med);
  }
  return {std::max(med, params.bandwidth_floor), false};
}

Eigen::MatrixXd interslice_stripe(const TraceTensor& t, std::size_t i, double epsilon) {
  if (i >= t.m_samples()) throw ValidationError("interslice_stripe: sample index out of range");
  if (!(epsilon > 0)) throw ValidationError("interslice_stripe: epsilon must be positive");
  const std::size_t n = t.n_epochs();
  const double e2 = epsilon * epsilon;
  Eigen::MatrixXd s(n, n);
  for (std::size_t tau = 0; tau < n; ++tau) {
    s(tau, tau) = 1.0;
    for (std::size_t nu = tau + 1; nu < n; ++nu) {
      const double v = std::exp(-trajectory_sq_dist(t, i, tau, nu) / e2);
      s(tau, nu) = v;
      s(nu, tau) = v;
    }
  }
  return s;
}

Eigen::MatrixXd interslice_stripe(const TraceTensor& t, std::size_t i, const KernelParams& params) {
  return interslice_stripe(t, i, interslice_bandwidth(t, params).value);
}

MultisliceKernel assemble_multislice(const TraceTensor& t, const KernelParams& params) {
  params.validate(t.m_samples());
  const std::size_t n = t.n_epochs();
  const std::size_t m = t.m_samples();

  MultisliceKernel k;
  k.n_epochs = n;
  k.m_samples = m;
  k.sigma.resize(n * m);

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(n * m * m + m * n * (n - 1));

  std::size_t floored = 0;
  for (std::size_t tau = 0; tau < n; ++tau) {
    const Eigen::MatrixXd x = epoch_points(t, tau, params.standardize);
    const auto sigma = knn_from_points(x, params);
    for (std::size_t i = 0; i < m; ++i) {
      k.sigma[tau * m + i] = sigma[i];
      if (sigma[i] == params.bandwidth_floor) ++floored;
    }
    const Eigen::MatrixXd b = block_from_points(x, sigma, params.alpha);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        trip.emplace_back(static_cast<int>(tau * m + i), static_cast<int>(tau * m + j), 0.5 * (b(i, j) + b(j, i)));
      }
    }
  }
  if (floored) {
    k.warnings.push_back("intraslice bandwidth floored for " + std::to_string(floored) + " points");
  }

  const BandwidthChoice eps = interslice_bandwidth(t, params);
  k.epsilon = eps.value;
  if (eps.fell_back) {
    k.warnings.push_back("all interslice distances are zero; epsilon set to bandwidth_floor");
  }
  for (std::size_t i = 0; i < m; ++i) {
    const Eigen::MatrixXd s = interslice_stripe(t, i, eps.value);
    for (std::size_t tau = 0; tau < n; ++tau) {
      for (std::size_t nu = 0; nu < n; ++nu) {
        if (nu != tau) trip.emplace_back(static_cast<int>(tau * m + i), static_cast<int>(nu * m + i), s(tau, nu));
      }
    }
  }

  k.matrix.resize(static_cast<Eigen::Index>(n * m), static_cast<Eigen::Index>(n * m));
  k.matrix.setFromTriplets(trip.begin(), trip.end());
  return k;
}

DiffusionOperator row_normalize(const RowSparse& k) {
  DiffusionOperator d;
  d.P = k;
  for (Eigen::Index r = 0; r < d.P.outerSize(); ++r) {
    double sum = 0;
    for (RowSparse::InnerIterator it(d.P, r); it; ++it) sum += it.value();
    if (!(sum > 0)) throw NumericalError("row_normalize: row " + std::to_string(r) + " has non-positive sum");
    for (RowSparse::InnerIterator it(d.P, r); it; ++it) it.valueRef() /= sum;
  }
  return d;
}

DiffusionOperator row_normalize(const MultisliceKernel& k) { return row_normalize(k.matrix); }

Eigen::MatrixXd diffuse(const DiffusionOperator& p, int power) {
  if (power < 1) throw ValidationError("diffuse: diffusion time must be >= 1");
  Eigen::MatrixXd base = Eigen::MatrixXd(p.P);
  Eigen::MatrixXd result;
  bool have = false;
  for (unsigned e = static_cast<unsigned>(power);;) {
    if (e & 1u) {
      if (have) {
        result = (result * base).eval();
      } else {
        result = base;
        have = true;
      }
    }
    e >>= 1;
    if (!e) break;
    base = (base * base).eval();
  }
  return result;
}

}  // namespace dynorank
