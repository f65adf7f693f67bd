#include "dynorank/synth_dynamics.hpp"

#include <cmath>

#include "dynorank/errors.hpp"
#include "dynorank/parallel.hpp"
#include "dynorank/random.hpp"

namespace dynorank {

namespace {

constexpr std::uint64_t kFactorStream = 0xfac0;
constexpr std::uint64_t kMixStream = 0x313c;
constexpr std::uint64_t kNoiseStream = 0x7015e;
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kBaseStream = 0xba5e;
constexpr std::uint64_t kFieldStream = 0xf1e1d;
constexpr double kPi = 3.14159265358979323846;

std::uint64_t realization_seed(std::uint64_t seed, std::size_t r) {
  return mix64(seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(r) + 1));
}

// c + sum_h a_h sin(pi h x + phi_h), x in [0, 1] over the epochs.
std::vector<double> smooth_curve(std::mt19937_64& rng, std::size_t n_epochs) {
  const double c = standard_normal(rng);
  double amp[3];
  double phase[3];
  for (int h = 0; h < 3; ++h) {
    amp[h] = standard_normal(rng) / (h + 1);
    phase[h] = 2.0 * kPi * uniform01(rng);
  }
  std::vector<double> out(n_epochs);
  for (std::size_t tau = 0; tau < n_epochs; ++tau) {
    const double x = n_epochs > 1 ? static_cast<double>(tau) / static_cast<double>(n_epochs - 1) : 0.0;
    double v = c;
    for (int h = 0; h < 3; ++h) v += amp[h] * std::sin(kPi * (h + 1) * x + phase[h]);
    out[tau] = v;
  }
  return out;
}

std::vector<double> smooth_tensor(std::uint64_t seed, std::uint64_t stream, std::size_t n, std::size_t m,
                                  std::size_t p) {
  std::vector<double> out(n * m * p);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t u = 0; u < p; ++u) {
      auto rng = stream_rng(seed, stream, i * p + u);
      const auto curve = smooth_curve(rng, n);
      for (std::size_t tau = 0; tau < n; ++tau) out[(tau * m + i) * p + u] = curve[tau];
    }
  }
  return out;
}

}  // namespace

Regime parse_regime(const std::string& s) {
  if (s == "axis_aligned") return Regime::kAxisAligned;
  if (s == "rotation_free") return Regime::kRotationFree;
  if (s == "perturbed") return Regime::kPerturbed;
  throw ValidationError("unknown regime '" + s + "' (expected axis_aligned, rotation_free or perturbed)");
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::kAxisAligned: return "axis_aligned";
    case Regime::kRotationFree: return "rotation_free";
    case Regime::kPerturbed: return "perturbed";
  }
  return "?";
}

void SynthSpec::validate() const {
  if (k_factors == 0) throw ValidationError("synth: k_factors must be positive");
  if (obs_dim < k_factors) throw ValidationError("synth: obs_dim must be >= k_factors");
  if (!(delta >= 0) || !std::isfinite(delta)) throw ValidationError("synth: delta must be a finite nonnegative number");
  if (n_epochs < 2) throw ValidationError("synth: n_epochs must be >= 2");
  if (m_trace < 2) throw ValidationError("synth: m_trace must be >= 2");
  if (!(learning_rate >= 0)) throw ValidationError("synth: learning_rate must be nonnegative");
  if (!(reg_weight >= 0)) throw ValidationError("synth: reg_weight must be nonnegative");
  if (!(init_scale >= 0) || !(data_noise >= 0)) throw ValidationError("synth: scales must be nonnegative");
  if (grid_levels < 2) throw ValidationError("synth: grid_levels must be >= 2");
  if (regime != Regime::kPerturbed && m_trace > n_data) throw ValidationError("synth: m_trace exceeds n_data");
}

FactorData gen_factor_data(std::size_t k, std::size_t n, std::size_t obs_dim, std::uint64_t seed, double noise,
                           std::size_t grid_levels) {
  if (k == 0 || obs_dim < k) throw ValidationError("gen_factor_data: need 1 <= k <= obs_dim");
  if (grid_levels < 2) throw ValidationError("gen_factor_data: grid_levels must be >= 2");
  const auto K = static_cast<Eigen::Index>(k);
  const auto N = static_cast<Eigen::Index>(n);
  const auto P = static_cast<Eigen::Index>(obs_dim);
  FactorData d;
  d.variances.resize(k);
  for (std::size_t f = 0; f < k; ++f) d.variances[f] = std::pow(4.0, -static_cast<double>(f));

  auto mix_rng = stream_rng(seed, kMixStream);
  Eigen::MatrixXd g(P, K);
  for (Eigen::Index j = 0; j < K; ++j) {
    for (Eigen::Index i = 0; i < P; ++i) g(i, j) = standard_normal(mix_rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  d.mixing = qr.householderQ() * Eigen::MatrixXd::Identity(P, K);

  const double levels = static_cast<double>(grid_levels);
  FactorDataset& lab = d.labeled;
  lab.n = n;
  lab.obs_dim = obs_dim;
  const NoiseChannel channels[] = {NoiseChannel::kShape, NoiseChannel::kScale, NoiseChannel::kOrientation,
                                   NoiseChannel::kPosition};
  for (std::size_t f = 0; f < k; ++f) {
    FactorInfo info;
    info.name = "factor" + std::to_string(f);
    info.size = static_cast<std::int64_t>(grid_levels);
    info.channel = channels[std::min<std::size_t>(f, 3)];
    info.kind = info.channel == NoiseChannel::kShape ? FactorKind::kDiscrete : FactorKind::kOrdinal;
    lab.factors.push_back(info);
  }
  lab.factor_classes.resize(n * k);
  lab.factor_values.resize(n * k);

  d.factors.resize(N, K);
  for (Eigen::Index r = 0; r < N; ++r) {
    auto rng = stream_rng(seed, kFactorStream, static_cast<std::uint64_t>(r));
    for (Eigen::Index f = 0; f < K; ++f) {
      const auto level = static_cast<std::int64_t>(uniform_index(rng, grid_levels));
      const double step = std::sqrt(12.0 * d.variances[static_cast<std::size_t>(f)] / (levels * levels - 1.0));
      const double v = (static_cast<double>(level) - 0.5 * (levels - 1.0)) * step;
      d.factors(r, f) = v;
      lab.factor_classes[static_cast<std::size_t>(r) * k + static_cast<std::size_t>(f)] = level;
      lab.factor_values[static_cast<std::size_t>(r) * k + static_cast<std::size_t>(f)] = v;
    }
  }
  d.observations = d.factors * d.mixing.transpose();
  for (Eigen::Index r = 0; r < N; ++r) {
    auto rng = stream_rng(seed, kNoiseStream, static_cast<std::uint64_t>(r));
    for (Eigen::Index j = 0; j < P; ++j) d.observations(r, j) += noise * standard_normal(rng);
  }
  lab.observations.resize(n * obs_dim);
  for (Eigen::Index r = 0; r < N; ++r) {
    for (Eigen::Index j = 0; j < P; ++j) {
      lab.observations[static_cast<std::size_t>(r * P + j)] = static_cast<float>(d.observations(r, j));
    }
  }
  return d;
}

TraceTensor train_linear_ae(const SynthSpec& spec, const FactorData& data, LinearModel* final_model) {
  spec.validate();
  if (spec.regime == Regime::kPerturbed) {
    throw ValidationError("train_linear_ae: the perturbed regime has no trainer; use gen_perturbed_trajectories");
  }
  const auto K = static_cast<Eigen::Index>(spec.k_factors);
  const auto P = static_cast<Eigen::Index>(spec.obs_dim);
  const auto M = static_cast<Eigen::Index>(spec.m_trace);
  if (data.observations.cols() != P) {
    throw ValidationError("train_linear_ae: data has " + std::to_string(data.observations.cols()) +
                          " observed dimensions, spec says " + std::to_string(spec.obs_dim));
  }
  if (data.observations.rows() < M) throw ValidationError("train_linear_ae: fewer data rows than m_trace");

  const Eigen::MatrixXd& x = data.observations;
  const Eigen::MatrixXd c = x.transpose() * x / static_cast<double>(x.rows());
  const Eigen::MatrixXd xt = x.topRows(M);

  auto rng = stream_rng(spec.seed, kInitStream);
  Eigen::MatrixXd e(K, P);
  Eigen::MatrixXd d(P, K);
  for (Eigen::Index i = 0; i < K; ++i) {
    for (Eigen::Index j = 0; j < P; ++j) e(i, j) = spec.init_scale * standard_normal(rng);
  }
  for (Eigen::Index j = 0; j < K; ++j) {
    for (Eigen::Index i = 0; i < P; ++i) d(i, j) = spec.init_scale * standard_normal(rng);
  }
  Eigen::VectorXd graded(K);
  for (Eigen::Index j = 0; j < K; ++j) graded(j) = static_cast<double>(j + 1) / static_cast<double>(K);
  const bool aligned = spec.regime == Regime::kAxisAligned;

  std::vector<float> values;
  values.reserve(spec.n_epochs * spec.m_trace * spec.obs_dim);
  for (std::size_t epoch = 0; epoch < spec.n_epochs; ++epoch) {
    for (std::size_t step = 0; step < spec.steps_per_epoch; ++step) {
      const Eigen::MatrixXd r = d * e * c - c;
      Eigen::MatrixXd ge = d.transpose() * r;
      Eigen::MatrixXd gd = r * e.transpose();
      if (aligned) {
        ge += spec.reg_weight * (graded.asDiagonal() * e);
        gd += spec.reg_weight * (d * graded.asDiagonal());
      }
      e -= spec.learning_rate * ge;
      d -= spec.learning_rate * gd;
      if (!e.allFinite() || !d.allFinite()) {
        throw NumericalError("train_linear_ae: training diverged at epoch " + std::to_string(epoch) +
                             "; try a smaller learning_rate (currently " + std::to_string(spec.learning_rate) + ")");
      }
    }
    const Eigen::MatrixXd out = xt * e.transpose() * d.transpose();
    for (Eigen::Index i = 0; i < M; ++i) {
      for (Eigen::Index j = 0; j < P; ++j) values.push_back(static_cast<float>(out(i, j)));
    }
  }
  if (final_model) {
    final_model->encoder = e;
    final_model->decoder = d;
  }
  return TraceTensor(spec.n_epochs, spec.m_trace, spec.obs_dim, std::move(values));
}

LatentCodes encode(const LinearModel& model, const FactorData& data) {
  const Eigen::MatrixXd z = data.observations * model.encoder.transpose();
  LatentCodes codes;
  codes.n = static_cast<std::size_t>(z.rows());
  codes.dim = static_cast<std::size_t>(z.cols());
  codes.values.resize(codes.n * codes.dim);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) codes.values[static_cast<std::size_t>(r * z.cols() + j)] = z(r, j);
  }
  return codes;
}

std::vector<TraceTensor> gen_perturbed_trajectories(std::uint64_t base_seed, double delta, std::size_t n_realizations,
                                                    std::size_t n_epochs, std::size_t m, std::size_t p) {
  if (!(delta >= 0) || !std::isfinite(delta)) throw ValidationError("gen_perturbed_trajectories: delta must be >= 0");
  const auto base = smooth_tensor(base_seed, kBaseStream, n_epochs, m, p);
  std::vector<TraceTensor> out;
  out.reserve(n_realizations);
  for (std::size_t r = 0; r < n_realizations; ++r) {
    const auto field = smooth_tensor(base_seed, kFieldStream + (static_cast<std::uint64_t>(r) << 20), n_epochs, m, p);
    double ss = 0;
    for (const double v : field) ss += v * v;
    const double rms = std::sqrt(ss / static_cast<double>(field.size()));
    const double scale = rms > 0 ? delta / rms : 0.0;
    std::vector<float> values(base.size());
    for (std::size_t k = 0; k < base.size(); ++k) values[k] = static_cast<float>(base[k] + scale * field[k]);
    out.emplace_back(n_epochs, m, p, std::move(values));
  }
  return out;
}

std::vector<TraceTensor> generate_realizations(const SynthSpec& spec, std::size_t n_realizations, std::size_t threads,
                                               std::vector<LinearModel>* models) {
  spec.validate();
  if (spec.regime == Regime::kPerturbed) {
    if (models) models->clear();
    return gen_perturbed_trajectories(spec.seed, spec.delta, n_realizations, spec.n_epochs, spec.m_trace,
                                      spec.obs_dim);
  }
  const FactorData data =
      gen_factor_data(spec.k_factors, spec.n_data, spec.obs_dim, spec.data_seed, spec.data_noise, spec.grid_levels);
  std::vector<TraceTensor> traces(n_realizations);
  std::vector<LinearModel> trained(n_realizations);
  parallel_for(n_realizations, threads, [&](std::size_t r) {
    SynthSpec s = spec;
    s.seed = realization_seed(spec.seed, r);
    traces[r] = train_linear_ae(s, data, &trained[r]);
  });
  if (models) *models = std::move(trained);
  return traces;
}

}  // namespace dynorank
