#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

#include "dynorank/errors.hpp"
#include "dynorank/synth_dynamics.hpp"

using namespace dynorank;

namespace {

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  return c.transpose() * c / static_cast<double>(x.rows());
}

// Largest principal angle between the column spans of a and b.
double max_principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd qa = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  const Eigen::MatrixXd qb = Eigen::HouseholderQR<Eigen::MatrixXd>(b).householderQ() * Eigen::MatrixXd::Identity(b.rows(), b.cols());
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(qa.transpose() * qb).singularValues();
  return std::acos(std::clamp(s.minCoeff(), -1.0, 1.0));
}

double abs_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return std::abs(a.dot(b)) / (a.norm() * b.norm()); }

bool same_values(const TraceTensor& a, const TraceTensor& b) {
  return a.same_shape(b) && std::equal(a.values().begin(), a.values().end(), b.values().begin());
}

}  // namespace

TEST_SUITE("synth_dynamics") {
  TEST_CASE("regime names") {
    CHECK(parse_regime("axis_aligned") == Regime::kAxisAligned);
    CHECK(parse_regime("rotation_free") == Regime::kRotationFree);
    CHECK(parse_regime("perturbed") == Regime::kPerturbed);
    CHECK(to_string(Regime::kRotationFree) == "rotation_free");
    CHECK_THROWS_AS(parse_regime("diagonal"), ValidationError);
  }

  TEST_CASE("spec validation") {
    SynthSpec s;
    CHECK_NOTHROW(s.validate());
    s.obs_dim = 2;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = SynthSpec{};
    s.delta = -0.1;
    CHECK_THROWS_AS(s.validate(), ValidationError);
  }

  TEST_CASE("factor data covariance follows the factor variances") {
    const FactorData d = gen_factor_data(2, 40000, 5, 7, 0.0);
    CHECK(d.variances == std::vector<double>{1.0, 0.25});
    CHECK((d.mixing.transpose() * d.mixing - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sample_covariance(d.observations));
    const Eigen::VectorXd ev = es.eigenvalues().reverse();
    // Orthonormal map: gains are 1.
    CHECK(ev(0) == doctest::Approx(1.0).epsilon(0.05));
    CHECK(ev(1) == doctest::Approx(0.25).epsilon(0.05));
    CHECK(ev(2) < 1e-12);
    CHECK(abs_cosine(es.eigenvectors().col(4), d.mixing.col(0)) > 0.999);
  }

  TEST_CASE("factor data is deterministic and handles N = 0") {
    const FactorData a = gen_factor_data(3, 50, 8, 1);
    const FactorData b = gen_factor_data(3, 50, 8, 1);
    CHECK(a.observations == b.observations);
    CHECK(a.labeled.factor_classes == b.labeled.factor_classes);
    CHECK_NOTHROW(a.labeled.validate());
    const FactorData e = gen_factor_data(3, 0, 8, 1);
    CHECK(e.observations.rows() == 0);
    CHECK(e.labeled.factor_classes.empty());
    CHECK_THROWS_AS(gen_factor_data(4, 10, 3, 1), ValidationError);
  }

  TEST_CASE("zero learning rate freezes the trace") {
    SynthSpec s;
    s.learning_rate = 0.0;
    s.n_epochs = 4;
    const FactorData d = gen_factor_data(s.k_factors, s.n_data, s.obs_dim, s.data_seed);
    const TraceTensor t = train_linear_ae(s, d);
    for (std::size_t e = 1; e < t.n_epochs(); ++e) {
      for (std::size_t i = 0; i < t.m_samples(); ++i) {
        const auto a = t.row(0, i);
        const auto b = t.row(e, i);
        CHECK(std::equal(a.begin(), a.end(), b.begin()));
      }
    }
  }

  TEST_CASE("training is deterministic and rejects the perturbed regime") {
    SynthSpec s;
    s.n_epochs = 3;
    const FactorData d = gen_factor_data(s.k_factors, s.n_data, s.obs_dim, s.data_seed);
    CHECK(same_values(train_linear_ae(s, d), train_linear_ae(s, d)));
    s.regime = Regime::kPerturbed;
    CHECK_THROWS_AS(train_linear_ae(s, d), ValidationError);
  }

  TEST_CASE("divergence is reported") {
    SynthSpec s;
    s.learning_rate = 50.0;
    s.init_scale = 3.0;
    const FactorData d = gen_factor_data(s.k_factors, s.n_data, s.obs_dim, s.data_seed);
    CHECK_THROWS_AS(train_linear_ae(s, d), NumericalError);
  }

  TEST_CASE("axis_aligned seeds agree on the principal directions") {
    SynthSpec s;
    s.n_epochs = 300;  // converged; the default 20 epochs is still transient
    const FactorData d = gen_factor_data(s.k_factors, s.n_data, s.obs_dim, s.data_seed, s.data_noise);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sample_covariance(d.observations));
    const Eigen::MatrixXd u = es.eigenvectors().rowwise().reverse();
    std::vector<LinearModel> models;
    generate_realizations(s, 2, 1, &models);
    for (const auto& m : models) {
      const double top = m.decoder.colwise().norm().maxCoeff();
      for (Eigen::Index j = 0; j < m.decoder.cols(); ++j) {
        // Columns driven to zero by the penalty carry no direction.
        if (m.decoder.col(j).norm() < 0.1 * top) continue;
        CHECK(abs_cosine(m.decoder.col(j), u.col(j)) >= 0.99);
      }
    }
  }

  TEST_CASE("rotation_free seeds share a span but not their columns") {
    SynthSpec s;
    s.regime = Regime::kRotationFree;
    s.n_epochs = 1000;  // the smallest direction converges slowly
    std::vector<LinearModel> models;
    generate_realizations(s, 2, 1, &models);
    CHECK(max_principal_angle(models[0].decoder, models[1].decoder) <= 0.05);
    double min_cos = 1.0;
    for (Eigen::Index j = 0; j < models[0].decoder.cols(); ++j) {
      min_cos = std::min(min_cos, abs_cosine(models[0].decoder.col(j), models[1].decoder.col(j)));
    }
    CHECK(min_cos < 0.9);
  }

  TEST_CASE("perturbed trajectories") {
    const auto zero = gen_perturbed_trajectories(5, 0.0, 3, 6, 4, 3);
    REQUIRE(zero.size() == 3);
    CHECK(same_values(zero[0], zero[1]));
    CHECK(same_values(zero[0], zero[2]));

    const auto one = gen_perturbed_trajectories(5, 1.0, 8, 20, 32, 16);
    const auto base = gen_perturbed_trajectories(5, 0.0, 1, 20, 32, 16)[0].values();
    double rms = 0;
    for (const auto& t : one) {
      double ss = 0;
      for (std::size_t k = 0; k < base.size(); ++k) {
        const double dv = static_cast<double>(t.values()[k]) - static_cast<double>(base[k]);
        ss += dv * dv;
      }
      rms += std::sqrt(ss / static_cast<double>(base.size()));
    }
    CHECK(rms / 8.0 == doctest::Approx(1.0).epsilon(0.05));

    const auto again = gen_perturbed_trajectories(5, 1.0, 8, 20, 32, 16);
    for (std::size_t r = 0; r < one.size(); ++r) CHECK(same_values(one[r], again[r]));
    CHECK_THROWS_AS(gen_perturbed_trajectories(5, -1.0, 2, 4, 4, 2), ValidationError);
  }

  TEST_CASE("perturbed regime routes through generate_realizations") {
    SynthSpec s;
    s.regime = Regime::kPerturbed;
    s.delta = 0.5;
    s.seed = 4;
    const auto a = generate_realizations(s, 3);
    const auto b = gen_perturbed_trajectories(4, 0.5, 3, s.n_epochs, s.m_trace, s.obs_dim);
    for (std::size_t r = 0; r < 3; ++r) CHECK(same_values(a[r], b[r]));
  }

  TEST_CASE("thread count does not change realizations") {
    SynthSpec s;
    s.n_epochs = 5;
    const auto a = generate_realizations(s, 3, 1);
    const auto b = generate_realizations(s, 3, 3);
    for (std::size_t r = 0; r < 3; ++r) CHECK(same_values(a[r], b[r]));
  }
}
