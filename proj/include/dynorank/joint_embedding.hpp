#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dynorank/multislice_kernel.hpp"
#include "dynorank/trace_store.hpp"

namespace dynorank {

// Stacks square kernels vertically in the given order.
Eigen::MatrixXd concatenate_kernels(std::span<const Eigen::MatrixXd> kernels);

struct SvdOptions {
  double tolerance = 1e-10;  // on singular values and residuals, relative to the largest
  int max_iterations = 2000;
  std::uint64_t seed = 0x5eed;
  std::size_t oversample = 10;
};

struct TruncatedSvd {
  Eigen::MatrixXd U;  // rows x d, orthonormal columns
  Eigen::VectorXd S;  // nonincreasing
  Eigen::MatrixXd V;  // cols x d, orthonormal columns
  int iterations = 0;
  double residual = 0.0;  // max_j |A v_j - s_j u_j| / s_1
};

// Top-d singular triplets by block subspace iteration with Rayleigh-Ritz
// extraction. Throws NumericalError (carrying the achieved residual) when
// the iteration cap is reached.
TruncatedSvd truncated_left_svd(const Eigen::MatrixXd& a, std::size_t d, const SvdOptions& options = {});

enum class Weighting { kNone, kSingular };

struct EmbeddingParams {
  KernelParams kernel;
  int diffusion_time = 8;
  std::size_t dim = 20;  // capped at n_epochs * m_samples
  Weighting weighting = Weighting::kSingular;
  SvdOptions svd;
};

// Rows ordered (realization, epoch, sample); block r starts at
// realization_offsets[r].
struct JointEmbedding {
  Eigen::MatrixXd coords;
  Eigen::VectorXd singular_values;
  std::vector<std::size_t> realization_offsets;
  std::size_t d = 0;
  std::size_t n_epochs = 0;
  std::size_t m_samples = 0;
  std::vector<std::string> warnings;

  std::size_t n_realizations() const { return realization_offsets.size(); }
  std::size_t block_rows() const { return n_epochs * m_samples; }
  Eigen::MatrixXd block(std::size_t r) const {
    return coords.middleRows(static_cast<Eigen::Index>(realization_offsets[r]), static_cast<Eigen::Index>(block_rows()));
  }
};

// Diffusion kernel P^t for one trace.
Eigen::MatrixXd diffusion_kernel(const TraceTensor& t, const KernelParams& params, int diffusion_time,
                                 std::vector<std::string>* warnings = nullptr);

// Coordinates are A V diag(w), computed row by row so identical kernel rows
// give bitwise identical coordinates; w = 1 (kSingular, equal to U S) or
// 1/s (kNone, equal to U), with directions whose singular value is below
// tolerance * s_1 zeroed.
JointEmbedding embed_group(std::span<const TraceTensor> traces, const EmbeddingParams& params,
                           std::size_t threads = 1);

}  // namespace dynorank
