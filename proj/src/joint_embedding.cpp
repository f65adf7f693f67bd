#include "dynorank/joint_embedding.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dynorank/errors.hpp"
#include "dynorank/parallel.hpp"
#include "dynorank/random.hpp"

namespace dynorank {

Eigen::MatrixXd concatenate_kernels(std::span<const Eigen::MatrixXd> kernels) {
  if (kernels.empty()) throw ValidationError("concatenate_kernels: no kernels");
  const Eigen::Index n = kernels.front().rows();
  for (std::size_t r = 0; r < kernels.size(); ++r) {
    if (kernels[r].rows() != n || kernels[r].cols() != n) {
      throw ValidationError("concatenate_kernels: kernel " + std::to_string(r) + " is " +
                            std::to_string(kernels[r].rows()) + "x" + std::to_string(kernels[r].cols()) +
                            ", expected " + std::to_string(n) + "x" + std::to_string(n));
    }
  }
  Eigen::MatrixXd tall(n * static_cast<Eigen::Index>(kernels.size()), n);
  for (std::size_t r = 0; r < kernels.size(); ++r) tall.middleRows(static_cast<Eigen::Index>(r) * n, n) = kernels[r];
  return tall;
}

namespace {

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& x) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(x);
  return qr.householderQ() * Eigen::MatrixXd::Identity(x.rows(), x.cols());
}

}  // namespace

TruncatedSvd truncated_left_svd(const Eigen::MatrixXd& a, std::size_t d, const SvdOptions& options) {
  const auto rows = static_cast<std::size_t>(a.rows());
  const auto cols = static_cast<std::size_t>(a.cols());
  if (d == 0 || d > std::min(rows, cols)) {
    throw ValidationError("truncated_left_svd: d = " + std::to_string(d) + " must lie in [1, " +
                          std::to_string(std::min(rows, cols)) + "]");
  }
  const auto block = static_cast<Eigen::Index>(std::min({cols, rows, d + options.oversample}));
  const auto dd = static_cast<Eigen::Index>(d);

  auto rng = stream_rng(options.seed, 0x5bd);
  Eigen::MatrixXd start(a.cols(), block);
  for (Eigen::Index j = 0; j < block; ++j) {
    for (Eigen::Index i = 0; i < a.cols(); ++i) start(i, j) = standard_normal(rng);
  }
  Eigen::MatrixXd q = orthonormalize(a * start);

  TruncatedSvd out;
  Eigen::VectorXd prev = Eigen::VectorXd::Constant(dd, -1.0);
  for (int it = 1; it <= options.max_iterations; ++it) {
    if (it > 1) {
      const Eigen::MatrixXd z = orthonormalize(a.transpose() * q);
      q = orthonormalize(a * z);
    }
    const Eigen::MatrixXd b = q.transpose() * a;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd s = svd.singularValues().head(dd);
    const double top = s(0);
    out.U = q * svd.matrixU().leftCols(dd);
    out.V = svd.matrixV().leftCols(dd);
    out.S = s;
    out.iterations = it;
    if (!(top > 0)) {
      out.residual = 0;
      return out;
    }
    const double change = (s - prev).cwiseAbs().maxCoeff() / top;
    prev = s;
    // Vectors lag the values, so the residual is checked once the values settle.
    if (change > options.tolerance && it < options.max_iterations) continue;
    const Eigen::MatrixXd av = a * out.V;
    double residual = 0;
    for (Eigen::Index j = 0; j < dd; ++j) residual = std::max(residual, (av.col(j) - s(j) * out.U.col(j)).norm());
    out.residual = residual / top;
    if (change <= options.tolerance && out.residual <= options.tolerance) {
      // Fix the sign so the largest-magnitude entry of each right vector is positive.
      for (Eigen::Index j = 0; j < dd; ++j) {
        Eigen::Index at;
        out.V.col(j).cwiseAbs().maxCoeff(&at);
        if (out.V(at, j) < 0) {
          out.V.col(j) *= -1.0;
          out.U.col(j) *= -1.0;
        }
      }
      return out;
    }
  }
  std::ostringstream msg;
  msg << "truncated_left_svd: no convergence after " << options.max_iterations
      << " iterations (relative residual " << out.residual << ")";
  throw NumericalError(msg.str());
}

Eigen::MatrixXd diffusion_kernel(const TraceTensor& t, const KernelParams& params, int diffusion_time,
                                 std::vector<std::string>* warnings) {
  const MultisliceKernel k = assemble_multislice(t, params);
  if (warnings) warnings->insert(warnings->end(), k.warnings.begin(), k.warnings.end());
  return diffuse(row_normalize(k), diffusion_time);
}

JointEmbedding embed_group(std::span<const TraceTensor> traces, const EmbeddingParams& params, std::size_t threads) {
  if (traces.empty()) throw ValidationError("embed_group: no traces");
  for (std::size_t r = 1; r < traces.size(); ++r) {
    if (!traces[r].same_shape(traces[0]) || traces[r].epoch_ids() != traces[0].epoch_ids()) {
      throw ValidationError("embed_group: trace " + std::to_string(r) + " does not match the shape of trace 0");
    }
  }
  const std::size_t nm = traces[0].n_epochs() * traces[0].m_samples();

  std::vector<Eigen::MatrixXd> kernels(traces.size());
  std::vector<std::vector<std::string>> notes(traces.size());
  parallel_for(traces.size(), threads, [&](std::size_t r) {
    kernels[r] = diffusion_kernel(traces[r], params.kernel, params.diffusion_time, &notes[r]);
  });
  const Eigen::MatrixXd tall = concatenate_kernels(kernels);
  kernels.clear();

  JointEmbedding e;
  e.n_epochs = traces[0].n_epochs();
  e.m_samples = traces[0].m_samples();
  e.d = std::min(params.dim, nm);
  for (std::size_t r = 0; r < traces.size(); ++r) {
    e.realization_offsets.push_back(r * nm);
    for (const auto& w : notes[r]) e.warnings.push_back("realization " + std::to_string(r) + ": " + w);
  }

  const TruncatedSvd svd = truncated_left_svd(tall, e.d, params.svd);
  e.singular_values = svd.S;

  const auto d = static_cast<Eigen::Index>(e.d);
  Eigen::VectorXd weight(d);
  const double top = svd.S(0);
  for (Eigen::Index j = 0; j < d; ++j) {
    const bool null_dir = !(svd.S(j) > params.svd.tolerance * top);
    if (params.weighting == Weighting::kSingular) {
      weight(j) = 1.0;
    } else {
      weight(j) = null_dir ? 0.0 : 1.0 / svd.S(j);
    }
  }

  // Every row accumulates over k = 0..cols-1 in the same order; rows never interact.
  e.coords.setZero(tall.rows(), d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double* out = e.coords.col(j).data();
    for (Eigen::Index k = 0; k < tall.cols(); ++k) {
      const double v = svd.V(k, j);
      const double* in = tall.col(k).data();
      for (Eigen::Index row = 0; row < tall.rows(); ++row) out[row] += in[row] * v;
    }
    e.coords.col(j) *= weight(j);
  }
  return e;
}

}  // namespace dynorank
