#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cstddef>
#include <string>
#include <vector>

#include "dynorank/trace_store.hpp"

namespace dynorank {

using RowSparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class EpsilonMode { kMedian, kFixed };

struct KernelParams {
  double alpha = 2.0;         // exponent on the intraslice distance
  std::size_t knn_k = 5;      // neighbor rank defining the per-point bandwidth
  EpsilonMode epsilon_mode = EpsilonMode::kMedian;
  double epsilon = 1.0;       // used when epsilon_mode == kFixed
  double bandwidth_floor = 1e-12;
  bool standardize = false;   // z-score each unit within an epoch before distances

  // Throws ValidationError; knn_k is checked against the trace's sample count.
  void validate(std::size_t m_samples) const;
};

// Symmetrized affinity over (epoch, sample) points, index tau * m + i.
struct MultisliceKernel {
  std::size_t n_epochs = 0;
  std::size_t m_samples = 0;
  RowSparse matrix;
  double epsilon = 0.0;        // interslice bandwidth actually used
  std::vector<double> sigma;   // per-point intraslice bandwidth, index tau * m + i
  std::vector<std::string> warnings;

  std::size_t size() const { return n_epochs * m_samples; }
};

// Row-stochastic transition matrix D^-1 K'.
struct DiffusionOperator {
  RowSparse P;
};

struct BandwidthChoice {
  double value = 0.0;
  bool fell_back = false;  // degenerate distances, floor used
};

// Per-point intraslice bandwidths for epoch tau: distance to the knn_k-th
// nearest other sample, floored.
std::vector<double> knn_bandwidths(const TraceTensor& t, std::size_t tau, const KernelParams& params);

// m x m block, entry (i, j) = exp(-|T(tau,i) - T(tau,j)|^alpha / sigma_(tau,i)^2).
// Not symmetric in general: the bandwidth belongs to the row sample.
Eigen::MatrixXd intraslice_block(const TraceTensor& t, std::size_t tau, const KernelParams& params);

// Interslice bandwidth: fixed, or median of all nonzero same-sample
// cross-epoch distances in the tensor.
BandwidthChoice interslice_bandwidth(const TraceTensor& t, const KernelParams& params);

// n x n stripe for sample i, entry (tau, nu) = exp(-|T(tau,i) - T(nu,i)|^2 / eps^2).
Eigen::MatrixXd interslice_stripe(const TraceTensor& t, std::size_t i, double epsilon);
Eigen::MatrixXd interslice_stripe(const TraceTensor& t, std::size_t i, const KernelParams& params);

MultisliceKernel assemble_multislice(const TraceTensor& t, const KernelParams& params);

DiffusionOperator row_normalize(const MultisliceKernel& k);
DiffusionOperator row_normalize(const RowSparse& k);

// P^power by binary exponentiation; the multiplication sequence depends
// only on `power`.
Eigen::MatrixXd diffuse(const DiffusionOperator& p, int power);

}  // namespace dynorank
