#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dynorank/supervised_baselines.hpp"
#include "dynorank/trace_store.hpp"

namespace dynorank {

enum class Regime { kAxisAligned, kRotationFree, kPerturbed };

Regime parse_regime(const std::string& s);  // "axis_aligned" | "rotation_free" | "perturbed"
std::string to_string(Regime r);

struct SynthSpec {
  Regime regime = Regime::kAxisAligned;
  double delta = 0.0;  // perturbed regime only
  std::size_t k_factors = 3;
  std::size_t obs_dim = 8;
  std::size_t n_epochs = 20;
  std::size_t m_trace = 32;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;    // realization seed (initialization)
  double reg_weight = 0.3;   // strength of the axis-aligning penalty
  // Toy-trainer extras.
  std::size_t n_data = 512;
  std::uint64_t data_seed = 0;
  std::size_t steps_per_epoch = 10;
  double init_scale = 1.0;
  double data_noise = 0.05;
  std::size_t grid_levels = 8;

  void validate() const;
};

// Factors on a uniform grid per factor (variance 4^-f, so consecutive
// variances differ by 4x), mapped to observations by a fixed random
// orthonormal map plus isotropic noise.
struct FactorData {
  Eigen::MatrixXd observations;  // N x obs_dim
  Eigen::MatrixXd factors;       // N x k
  Eigen::MatrixXd mixing;        // obs_dim x k, orthonormal columns
  std::vector<double> variances;
  FactorDataset labeled;         // grid classes, for the supervised metrics
};

FactorData gen_factor_data(std::size_t k, std::size_t n, std::size_t obs_dim, std::uint64_t seed,
                           double noise = 0.05, std::size_t grid_levels = 8);

struct LinearModel {
  Eigen::MatrixXd encoder;  // k x obs_dim
  Eigen::MatrixXd decoder;  // obs_dim x k
};

// Full-batch gradient descent on 0.5 * mean |x - D E x|^2. In the
// axis_aligned regime a graded L2 penalty reg_weight * (j+1)/k on latent j
// (encoder row j and decoder column j) breaks the rotational symmetry, so
// every seed converges to the principal axes. The trace records the decoder
// outputs on the first m_trace data rows after each epoch.
TraceTensor train_linear_ae(const SynthSpec& spec, const FactorData& data, LinearModel* final_model = nullptr);

// Encoder means E x for every data row.
LatentCodes encode(const LinearModel& model, const FactorData& data);

// Realization r = base + delta * field_r, both smooth in the epoch index;
// each field has unit RMS over its tensor.
std::vector<TraceTensor> gen_perturbed_trajectories(std::uint64_t base_seed, double delta, std::size_t n_realizations,
                                                    std::size_t n_epochs, std::size_t m, std::size_t p);

// One spec's realizations: trained models for the learning regimes, or the
// perturbation generator (base_seed = spec.seed, p = obs_dim).
std::vector<TraceTensor> generate_realizations(const SynthSpec& spec, std::size_t n_realizations,
                                               std::size_t threads = 1, std::vector<LinearModel>* models = nullptr);

}  // namespace dynorank
