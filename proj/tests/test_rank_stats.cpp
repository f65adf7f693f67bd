#include <doctest.h>

#include <cmath>

#include "dynorank/errors.hpp"
#include "dynorank/random.hpp"
#include "dynorank/rank_stats.hpp"

using namespace dynorank;

namespace {

// Direct product-moment formula.
double pearson_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

ScoreMatrix pairwise_from(const std::vector<double>& per_seed, const std::string& id) {
  // Pair score = mean of the two seeds' values; the diagonal stays zero.
  const auto n = static_cast<Eigen::Index>(per_seed.size());
  ScoreMatrix s{id, Eigen::MatrixXd::Zero(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) s.values(i, j) = 0.5 * (per_seed[static_cast<std::size_t>(i)] + per_seed[static_cast<std::size_t>(j)]);
    }
  }
  return s;
}

}  // namespace

TEST_SUITE("rank_stats") {
  TEST_CASE("mid-ranks average ties") {
    const std::vector<double> v{3, 1, 3, 2};
    CHECK(mid_ranks(v) == std::vector<double>{3.5, 1, 3.5, 2});
  }

  TEST_CASE("spearman examples") {
    const std::vector<double> a{1, 2, 3, 4}, b{1, 3, 2, 4}, r{4, 3, 2, 1};
    // 1 - 6 * 2 / (4 * 15)
    CHECK(spearman(a, b) == doctest::Approx(1.0 - 12.0 / 60.0).epsilon(1e-14));
    CHECK(spearman(a, a) == 1.0);
    CHECK(spearman(a, r) == -1.0);
    CHECK(spearman(b, a) == spearman(a, b));
  }

  TEST_CASE("spearman ignores strictly increasing transforms") {
    auto rng = stream_rng(1, 2);
    std::vector<double> a(12), b(12), ta(12);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = standard_normal(rng);
      b[i] = a[i] + standard_normal(rng);
      ta[i] = std::exp(2.0 * a[i]) + 7.0;
    }
    CHECK(spearman(a, b) == doctest::Approx(spearman(ta, b)).epsilon(1e-14));
  }

  TEST_CASE("pearson matches the direct formula") {
    const std::vector<double> a{0.3, -1.2, 2.5, 0.9}, b{1.1, 0.4, 2.0, -0.7};
    CHECK(pearson(a, b) == doctest::Approx(pearson_oracle(a, b)).epsilon(1e-14));
    CHECK(pearson(a, a) == doctest::Approx(1.0));
    std::vector<double> neg(a.size()), aff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) neg[i] = -a[i], aff[i] = 3.0 * a[i] + 2.0;
    CHECK(pearson(a, neg) == doctest::Approx(-1.0));
    CHECK(pearson(aff, b) == doctest::Approx(pearson(a, b)).epsilon(1e-13));
    CHECK(pearson(b, a) == pearson(a, b));
  }

  TEST_CASE("degenerate inputs") {
    const std::vector<double> c{2, 2, 2}, a{1, 2, 3};
    CHECK_THROWS_AS(pearson(a, c), ValidationError);
    CHECK_THROWS_AS(spearman(c, a), ValidationError);
    CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{1}), ValidationError);
    CHECK_THROWS_AS(spearman(a, std::vector<double>{1, 2}), ValidationError);
  }

  TEST_CASE("subsample stability on a seed matrix") {
    // 5 specs x 8 seeds; spec j centered at j with seed noise.
    Eigen::MatrixXd s(5, 8);
    auto rng = stream_rng(3, 4);
    for (Eigen::Index r = 0; r < 5; ++r) {
      for (Eigen::Index c = 0; c < 8; ++c) s(r, c) = static_cast<double>(r) + 1.5 * standard_normal(rng);
    }
    const std::vector<double> ref{4, 3, 2, 1, 0};
    SubsampleOptions o;
    o.subset_sizes = {2, 8};
    o.trials = 20;
    o.seed = 9;
    const auto rows = subsample_stability(s, ref, o);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].size == 2);
    CHECK(rows[1].std == doctest::Approx(0.0).epsilon(1e-15));
    const auto again = subsample_stability(s, ref, o);
    CHECK(rows[0].mean == again[0].mean);
    CHECK(rows[0].std == again[0].std);

    o.subset_sizes = {9};
    CHECK_THROWS_AS(subsample_stability(s, ref, o), ValidationError);
    o.subset_sizes = {3};
    CHECK_THROWS_AS(subsample_stability(s, std::vector<double>{1, 2}, o), ValidationError);
  }

  TEST_CASE("full subset with one trial has zero spread") {
    std::vector<ScoreMatrix> specs;
    for (int k = 0; k < 4; ++k) specs.push_back(pairwise_from({k + 0.1, k + 0.5, k + 0.2, k + 0.9}, "s" + std::to_string(k)));
    const std::vector<double> ref{3, 2, 1, 0};
    SubsampleOptions o;
    o.subset_sizes = {4};
    o.trials = 1;
    const auto rows = subsample_stability(std::span<const ScoreMatrix>(specs), ref, o);
    CHECK(rows[0].std == 0.0);
    // Lower score is better, so the reversed reference agrees perfectly.
    CHECK(rows[0].mean == doctest::Approx(1.0));
    o.subset_sizes = {1};
    CHECK_THROWS_AS(subsample_stability(std::span<const ScoreMatrix>(specs), ref, o), ValidationError);
  }
}
