#include "dynorank/rank_stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "dynorank/errors.hpp"
#include "dynorank/random.hpp"

namespace dynorank {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ValidationError("score vectors differ in length (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  if (a.size() < 2) throw ValidationError("correlation needs at least 2 entries");
}

// k distinct indices from [0, n), partial Fisher-Yates.
std::vector<std::size_t> draw_subset(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

using SubsetScore = std::function<double(std::size_t spec, const std::vector<std::size_t>& subset)>;

std::vector<SubsampleRow> run_subsampling(std::size_t specs, std::size_t seeds, std::span<const double> reference,
                                          const SubsampleOptions& options, std::size_t min_size,
                                          const SubsetScore& score) {
  if (reference.size() != specs) {
    throw ValidationError("reference has " + std::to_string(reference.size()) + " entries for " +
                          std::to_string(specs) + " specs");
  }
  if (options.trials == 0) throw ValidationError("subsample_stability: trials must be positive");
  std::vector<SubsampleRow> rows;
  for (const std::size_t size : options.subset_sizes) {
    if (size > seeds) {
      throw ValidationError("subset size " + std::to_string(size) + " exceeds the " + std::to_string(seeds) +
                            " available seeds");
    }
    if (size < min_size) throw ValidationError("subset size " + std::to_string(size) + " is too small");
    std::vector<double> values(options.trials);
    std::vector<double> spec_scores(specs);
    for (std::size_t trial = 0; trial < options.trials; ++trial) {
      for (std::size_t s = 0; s < specs; ++s) {
        auto rng = stream_rng(options.seed, (static_cast<std::uint64_t>(size) << 32) ^ trial, s);
        const double v = score(s, draw_subset(seeds, size, rng));
        spec_scores[s] = options.lower_is_better ? -v : v;
      }
      values[trial] = correlate(spec_scores, reference, options.method);
    }
    SubsampleRow row;
    row.size = size;
    row.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double ss = 0;
    for (const double v : values) ss += (v - row.mean) * (v - row.mean);
    row.std = std::sqrt(ss / static_cast<double>(values.size()));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::vector<double> mid_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0) || !(sbb > 0)) throw ValidationError("correlation undefined: zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  check_pair(a, b);
  const auto ra = mid_ranks(a);
  const auto rb = mid_ranks(b);
  return pearson(ra, rb);
}

double correlate(std::span<const double> a, std::span<const double> b, CorrelationMethod method) {
  return method == CorrelationMethod::kSpearman ? spearman(a, b) : pearson(a, b);
}

std::vector<SubsampleRow> subsample_stability(const Eigen::MatrixXd& scores_by_seed, std::span<const double> reference,
                                              const SubsampleOptions& options) {
  return run_subsampling(static_cast<std::size_t>(scores_by_seed.rows()),
                         static_cast<std::size_t>(scores_by_seed.cols()), reference, options, 1,
                         [&](std::size_t s, const std::vector<std::size_t>& subset) {
                           double acc = 0;
                           for (const auto c : subset) acc += scores_by_seed(static_cast<Eigen::Index>(s),
                                                                             static_cast<Eigen::Index>(c));
                           return acc / static_cast<double>(subset.size());
                         });
}

std::vector<SubsampleRow> subsample_stability(std::span<const ScoreMatrix> per_spec, std::span<const double> reference,
                                              const SubsampleOptions& options) {
  if (per_spec.empty()) throw ValidationError("subsample_stability: no specs");
  std::size_t seeds = static_cast<std::size_t>(per_spec.front().values.rows());
  for (const auto& s : per_spec) seeds = std::min(seeds, static_cast<std::size_t>(s.values.rows()));
  return run_subsampling(per_spec.size(), seeds, reference, options, 2,
                         [&](std::size_t s, const std::vector<std::size_t>& subset) {
                           std::vector<std::size_t> sorted = subset;
                           std::sort(sorted.begin(), sorted.end());
                           ScoreMatrix sub;
                           const auto k = static_cast<Eigen::Index>(sorted.size());
                           sub.values.resize(k, k);
                           for (Eigen::Index a = 0; a < k; ++a) {
                             for (Eigen::Index b = 0; b < k; ++b) {
                               sub.values(a, b) = per_spec[s].values(static_cast<Eigen::Index>(sorted[a]),
                                                                     static_cast<Eigen::Index>(sorted[b]));
                             }
                           }
                           return spec_score(sub).mean;
                         });
}

}  // namespace dynorank
