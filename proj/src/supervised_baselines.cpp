#include "dynorank/supervised_baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "dynorank/errors.hpp"
#include "dynorank/random.hpp"

namespace dynorank {

namespace {

constexpr std::uint64_t kBetaVaeStream = 0xbe7a;
constexpr std::uint64_t kFactorVaeStream = 0xfac7;
constexpr std::uint64_t kPerturbStream = 0x9e27;

void check_aligned(const LatentCodes& codes, const FactorDataset& d) {
  codes.validate();
  if (codes.n != d.n) {
    throw ValidationError("codes have " + std::to_string(codes.n) + " rows but dataset has " + std::to_string(d.n));
  }
  if (d.factor_classes.size() != d.n * d.n_factors()) throw ValidationError("dataset labels are malformed");
}

// rows[f][c] = dataset rows whose factor f has class c.
std::vector<std::vector<std::vector<std::size_t>>> index_by_class(const FactorDataset& d) {
  std::vector<std::vector<std::vector<std::size_t>>> rows(d.n_factors());
  for (std::size_t f = 0; f < d.n_factors(); ++f) rows[f].resize(static_cast<std::size_t>(d.factors[f].size));
  for (std::size_t r = 0; r < d.n; ++r) {
    for (std::size_t f = 0; f < d.n_factors(); ++f) rows[f][static_cast<std::size_t>(d.factor_class(r, f))].push_back(r);
  }
  return rows;
}

// Factors with at least two populated classes.
std::vector<std::size_t> eligible_factors(const FactorDataset& d,
                                          const std::vector<std::vector<std::vector<std::size_t>>>& rows,
                                          std::vector<std::string>& warnings) {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < d.n_factors(); ++f) {
    std::size_t populated = 0;
    for (const auto& c : rows[f]) populated += c.empty() ? 0 : 1;
    if (populated >= 2) {
      out.push_back(f);
    } else {
      warnings.push_back("factor '" + d.factors[f].name + "' has a single class and is excluded");
    }
  }
  if (out.empty()) throw ValidationError("no factor has more than one class");
  return out;
}

// Row with factor f at class c, after optional label noise on c.
std::size_t sample_row_with(std::size_t f, std::int64_t c, const FactorDataset& d,
                            const std::vector<std::vector<std::vector<std::size_t>>>& rows,
                            const std::optional<NoiseModel>& noise, std::mt19937_64& rng) {
  std::int64_t target = c;
  if (noise) {
    const std::int64_t moved = perturb_class(c, d.factors[f], noise->probability(d.factors[f].channel),
                                             noise->continuous_sigma, rng);
    if (!rows[f][static_cast<std::size_t>(moved)].empty()) target = moved;
  }
  const auto& pool = rows[f][static_cast<std::size_t>(target)];
  return pool[static_cast<std::size_t>(uniform_index(rng, pool.size()))];
}

std::size_t train_count(const MetricConfig& cfg) {
  auto k = static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(cfg.batches)));
  return std::clamp<std::size_t>(k, 1, cfg.batches - 1);
}

}  // namespace

void LatentCodes::validate() const {
  if (values.size() != n * dim) throw ValidationError("codes: value count does not match shape");
  if (dim == 0) throw ValidationError("codes: zero latent dimensions");
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      throw ValidationError("codes: non-finite value at (" + std::to_string(k / dim) + ", " + std::to_string(k % dim) + ")");
    }
  }
}

void NoiseModel::validate() const {
  for (const double p : {p_shape, p_scale, p_orient, p_pos}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("noise model: probabilities must lie in [0, 1]");
  }
  if (!(continuous_sigma >= 0.0)) throw ValidationError("noise model: continuous_sigma must be nonnegative");
}

double NoiseModel::probability(NoiseChannel c) const {
  switch (c) {
    case NoiseChannel::kShape: return p_shape;
    case NoiseChannel::kScale: return p_scale;
    case NoiseChannel::kOrientation: return p_orient;
    case NoiseChannel::kPosition: return p_pos;
    case NoiseChannel::kNone: return 0.0;
  }
  return 0.0;
}

NoiseModel noise_model_preset(int index) {
  switch (index) {
    case 1: return {0.05, 0.1, 0.05, 0.05, 1.0};
    case 2: return {0.1, 0.2, 0.1, 0.1, 1.0};
    case 3: return {0.3, 0.3, 0.3, 0.3, 1.0};
    default: throw ValidationError("noise model index must be 1, 2 or 3");
  }
}

void MetricConfig::validate() const {
  if (batches < 2) throw ValidationError("metric config: batches must be >= 2 (train and eval votes)");
  if (samples_per_batch < 2) throw ValidationError("metric config: samples_per_batch must be >= 2");
  if (bins < 2) throw ValidationError("metric config: bins must be >= 2");
  if (!(variance_prune_threshold >= 0)) throw ValidationError("metric config: variance_prune_threshold must be >= 0");
  if (!(train_fraction > 0 && train_fraction < 1)) throw ValidationError("metric config: train_fraction in (0, 1)");
  if (!(learning_rate > 0)) throw ValidationError("metric config: learning_rate must be positive");
}

std::int64_t perturb_class(std::int64_t c, const FactorInfo& f, double probability, double sigma,
                           std::mt19937_64& rng) {
  if (!(uniform01(rng) < probability)) return c;
  if (f.kind == FactorKind::kDiscrete) return static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(f.size)));
  const auto step = static_cast<std::int64_t>(std::llround(sigma * standard_normal(rng)));
  return std::clamp<std::int64_t>(c + step, 0, f.size - 1);
}

MetricResult betavae_metric(const LatentCodes& codes, const FactorDataset& d, const MetricConfig& cfg,
                            const std::optional<NoiseModel>& noise) {
  check_aligned(codes, d);
  cfg.validate();
  if (noise) noise->validate();
  MetricResult result;
  const auto rows = index_by_class(d);
  const auto factors = eligible_factors(d, rows, result.warnings);
  const std::size_t dim = codes.dim;
  const std::size_t classes = factors.size();

  Eigen::MatrixXd features(static_cast<Eigen::Index>(cfg.batches), static_cast<Eigen::Index>(dim));
  std::vector<std::size_t> labels(cfg.batches);
  for (std::size_t v = 0; v < cfg.batches; ++v) {
    auto rng = stream_rng(cfg.seed, kBetaVaeStream, v);
    const std::size_t label = static_cast<std::size_t>(uniform_index(rng, classes));
    const std::size_t f = factors[label];
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t s = 0; s < cfg.samples_per_batch; ++s) {
      const std::size_t a = static_cast<std::size_t>(uniform_index(rng, d.n));
      const std::size_t b = sample_row_with(f, d.factor_class(a, f), d, rows, noise, rng);
      for (std::size_t j = 0; j < dim; ++j) acc(static_cast<Eigen::Index>(j)) += std::abs(codes.at(a, j) - codes.at(b, j));
    }
    features.row(static_cast<Eigen::Index>(v)) = acc.transpose() / static_cast<double>(cfg.samples_per_batch);
    labels[v] = label;
  }

  const std::size_t n_train = train_count(cfg);
  const auto nt = static_cast<Eigen::Index>(n_train);
  const Eigen::RowVectorXd mean = features.topRows(nt).colwise().mean();
  Eigen::RowVectorXd sd = ((features.topRows(nt).rowwise() - mean).array().square().colwise().mean()).sqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j) {
    if (!(sd(j) > 0)) sd(j) = 1.0;
  }
  const Eigen::MatrixXd x = (features.rowwise() - mean).array().rowwise() / sd.array();

  // Multinomial logistic regression, full-batch gradient descent.
  const auto c = static_cast<Eigen::Index>(classes);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), c);
  Eigen::RowVectorXd bias = Eigen::RowVectorXd::Zero(c);
  Eigen::MatrixXd target = Eigen::MatrixXd::Zero(nt, c);
  for (Eigen::Index i = 0; i < nt; ++i) target(i, static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)])) = 1.0;
  const Eigen::MatrixXd xt = x.topRows(nt);
  for (std::size_t epoch = 0; epoch < cfg.classifier_epochs; ++epoch) {
    Eigen::MatrixXd logits = (xt * w).rowwise() + bias;
    for (Eigen::Index i = 0; i < nt; ++i) {
      const double mx = logits.row(i).maxCoeff();
      logits.row(i) = (logits.row(i).array() - mx).exp();
      logits.row(i) /= logits.row(i).sum();
    }
    const Eigen::MatrixXd grad = (logits - target) / static_cast<double>(nt);
    w -= cfg.learning_rate * (xt.transpose() * grad);
    bias -= cfg.learning_rate * grad.colwise().sum();
  }

  std::size_t correct = 0;
  for (std::size_t v = n_train; v < cfg.batches; ++v) {
    const Eigen::RowVectorXd logits = x.row(static_cast<Eigen::Index>(v)) * w + bias;
    Eigen::Index pred;
    logits.maxCoeff(&pred);
    correct += static_cast<std::size_t>(pred) == labels[v] ? 1 : 0;
  }
  result.value = static_cast<double>(correct) / static_cast<double>(cfg.batches - n_train);
  return result;
}

MetricResult factorvae_metric(const LatentCodes& codes, const FactorDataset& d, const MetricConfig& cfg,
                              const std::optional<NoiseModel>& noise) {
  check_aligned(codes, d);
  cfg.validate();
  if (noise) noise->validate();
  MetricResult result;
  const auto rows = index_by_class(d);
  const auto factors = eligible_factors(d, rows, result.warnings);
  const std::size_t dim = codes.dim;

  std::vector<double> global_sd(dim);
  std::vector<double> global_var(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    double mean = 0;
    for (std::size_t r = 0; r < codes.n; ++r) mean += codes.at(r, j);
    mean /= static_cast<double>(codes.n);
    double var = 0;
    for (std::size_t r = 0; r < codes.n; ++r) var += (codes.at(r, j) - mean) * (codes.at(r, j) - mean);
    global_var[j] = var / static_cast<double>(codes.n);
    global_sd[j] = std::sqrt(global_var[j]);
  }
  const double max_var = *std::max_element(global_var.begin(), global_var.end());
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < dim; ++j) {
    if (global_var[j] > 0 && global_var[j] >= cfg.variance_prune_threshold * max_var) active.push_back(j);
  }
  if (active.empty()) throw ValidationError("factorvae_metric: all latent dimensions were pruned");
  if (active.size() < dim) {
    result.warnings.push_back(std::to_string(dim - active.size()) + " low-variance latent dimensions pruned");
  }

  std::vector<std::size_t> vote_dim(cfg.batches);
  std::vector<std::size_t> vote_factor(cfg.batches);
  std::vector<std::size_t> batch(cfg.samples_per_batch);
  for (std::size_t v = 0; v < cfg.batches; ++v) {
    auto rng = stream_rng(cfg.seed, kFactorVaeStream, v);
    const std::size_t label = static_cast<std::size_t>(uniform_index(rng, factors.size()));
    const std::size_t f = factors[label];
    const std::int64_t c = d.factor_class(static_cast<std::size_t>(uniform_index(rng, d.n)), f);
    for (auto& r : batch) r = sample_row_with(f, c, d, rows, noise, rng);

    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = active.front();
    for (const std::size_t j : active) {
      double mean = 0;
      for (const auto r : batch) mean += codes.at(r, j) / global_sd[j];
      mean /= static_cast<double>(batch.size());
      double var = 0;
      for (const auto r : batch) {
        const double z = codes.at(r, j) / global_sd[j] - mean;
        var += z * z;
      }
      var /= static_cast<double>(batch.size());
      if (var < best) {
        best = var;
        arg = j;
      }
    }
    vote_dim[v] = arg;
    vote_factor[v] = label;
  }

  const std::size_t n_train = train_count(cfg);
  std::vector<std::vector<std::size_t>> counts(dim, std::vector<std::size_t>(factors.size(), 0));
  for (std::size_t v = 0; v < n_train; ++v) ++counts[vote_dim[v]][vote_factor[v]];
  std::vector<std::int64_t> table(dim, -1);
  for (std::size_t j = 0; j < dim; ++j) {
    std::size_t best = 0;
    for (std::size_t k = 0; k < factors.size(); ++k) {
      if (counts[j][k] > best) {
        best = counts[j][k];
        table[j] = static_cast<std::int64_t>(k);
      }
    }
  }
  std::size_t correct = 0;
  for (std::size_t v = n_train; v < cfg.batches; ++v) {
    correct += table[vote_dim[v]] == static_cast<std::int64_t>(vote_factor[v]) ? 1 : 0;
  }
  result.value = static_cast<double>(correct) / static_cast<double>(cfg.batches - n_train);
  return result;
}

std::vector<std::size_t> equal_occupancy_bins(std::span<const double> values, std::size_t bins) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<std::size_t> out(n);
  std::size_t first_rank = 0;
  for (std::size_t r = 0; r < n; ++r) {
    // Equal values share the bin of their first rank.
    if (r == 0 || values[order[r]] != values[order[r - 1]]) first_rank = r;
    out[order[r]] = first_rank * bins / n;
  }
  return out;
}

double mutual_information(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size() || a.empty()) throw ValidationError("mutual_information: label vectors must align");
  const std::size_t na = *std::max_element(a.begin(), a.end()) + 1;
  const std::size_t nb = *std::max_element(b.begin(), b.end()) + 1;
  std::vector<double> joint(na * nb, 0.0);
  std::vector<double> pa(na, 0.0);
  std::vector<double> pb(nb, 0.0);
  for (std::size_t k = 0; k < a.size(); ++k) {
    joint[a[k] * nb + b[k]] += 1;
    pa[a[k]] += 1;
    pb[b[k]] += 1;
  }
  const double n = static_cast<double>(a.size());
  double mi = 0;
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      const double c = joint[i * nb + j];
      if (c > 0) mi += (c / n) * std::log(c * n / (pa[i] * pb[j]));
    }
  }
  return std::max(mi, 0.0);
}

double entropy(std::span<const std::size_t> a) {
  if (a.empty()) return 0.0;
  const std::size_t na = *std::max_element(a.begin(), a.end()) + 1;
  std::vector<double> p(na, 0.0);
  for (const auto v : a) p[v] += 1;
  double h = 0;
  for (const double c : p) {
    if (c > 0) h -= (c / static_cast<double>(a.size())) * std::log(c / static_cast<double>(a.size()));
  }
  return h;
}

MetricResult mig(const LatentCodes& codes, const FactorDataset& d, const MetricConfig& cfg) {
  check_aligned(codes, d);
  cfg.validate();
  MetricResult result;
  std::vector<std::vector<std::size_t>> binned(codes.dim);
  std::vector<double> column(codes.n);
  for (std::size_t j = 0; j < codes.dim; ++j) {
    for (std::size_t r = 0; r < codes.n; ++r) column[r] = codes.at(r, j);
    binned[j] = equal_occupancy_bins(column, cfg.bins);
  }
  double total = 0;
  std::size_t used = 0;
  std::vector<std::size_t> labels(d.n);
  for (std::size_t f = 0; f < d.n_factors(); ++f) {
    for (std::size_t r = 0; r < d.n; ++r) labels[r] = static_cast<std::size_t>(d.factor_class(r, f));
    const double h = entropy(labels);
    if (!(h > 1e-12)) {
      result.warnings.push_back("factor '" + d.factors[f].name + "' has zero entropy and is excluded");
      continue;
    }
    std::vector<double> mi(codes.dim);
    for (std::size_t j = 0; j < codes.dim; ++j) mi[j] = mutual_information(binned[j], labels);
    std::sort(mi.begin(), mi.end(), std::greater<>());
    const double second = mi.size() > 1 ? mi[1] : 0.0;
    total += (mi[0] - second) / h;
    ++used;
  }
  if (used == 0) throw ValidationError("mig: every factor has zero entropy");
  result.value = total / static_cast<double>(used);
  return result;
}

FactorDataset perturb_factors(const FactorDataset& d, const NoiseModel& noise, std::uint64_t seed) {
  noise.validate();
  const std::size_t F = d.n_factors();
  // class -> value lookup, first occurrence.
  std::vector<std::map<std::int64_t, double>> value_of(F);
  if (!d.factor_values.empty()) {
    for (std::size_t r = 0; r < d.n; ++r) {
      for (std::size_t f = 0; f < F; ++f) value_of[f].emplace(d.factor_class(r, f), d.factor_values[r * F + f]);
    }
  }
  FactorDataset out = d;
  for (std::size_t r = 0; r < d.n; ++r) {
    auto rng = stream_rng(seed, kPerturbStream, r);
    for (std::size_t f = 0; f < F; ++f) {
      const double p = noise.probability(d.factors[f].channel);
      const std::int64_t c = d.factor_class(r, f);
      const std::int64_t moved = perturb_class(c, d.factors[f], p, noise.continuous_sigma, rng);
      if (moved == c) continue;
      out.factor_classes[r * F + f] = moved;
      if (!d.factor_values.empty()) {
        const auto it = value_of[f].find(moved);
        if (it != value_of[f].end()) out.factor_values[r * F + f] = it->second;
      }
    }
  }
  return out;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw ValidationError("total_variation: supports differ in size");
  double sp = 0, sq = 0, tv = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] < 0 || q[k] < 0) throw ValidationError("total_variation: negative probability");
    sp += p[k];
    sq += q[k];
    tv += std::abs(p[k] - q[k]);
  }
  if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
    throw ValidationError("total_variation: distributions must sum to 1");
  }
  return 0.5 * tv;
}

MetricResult unfairness(std::span<const std::int64_t> predictions, std::span<const std::int64_t> sensitive,
                        std::size_t n_sensitive) {
  if (predictions.size() != sensitive.size()) throw ValidationError("unfairness: arrays are not aligned");
  if (predictions.empty()) throw ValidationError("unfairness: no samples");
  std::map<std::int64_t, std::size_t> pred_index;
  for (const auto v : predictions) pred_index.emplace(v, 0);
  std::size_t k = 0;
  for (auto& [v, idx] : pred_index) idx = k++;

  std::int64_t max_s = *std::max_element(sensitive.begin(), sensitive.end());
  if (*std::min_element(sensitive.begin(), sensitive.end()) < 0) throw ValidationError("unfairness: negative sensitive class");
  const std::size_t classes = n_sensitive ? n_sensitive : static_cast<std::size_t>(max_s) + 1;
  if (static_cast<std::size_t>(max_s) >= classes) throw ValidationError("unfairness: sensitive class out of range");

  std::vector<double> marginal(pred_index.size(), 0.0);
  std::vector<std::vector<double>> cond(classes, std::vector<double>(pred_index.size(), 0.0));
  std::vector<double> count(classes, 0.0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const std::size_t y = pred_index[predictions[i]];
    const auto s = static_cast<std::size_t>(sensitive[i]);
    marginal[y] += 1;
    cond[s][y] += 1;
    count[s] += 1;
  }
  for (auto& v : marginal) v /= static_cast<double>(predictions.size());

  MetricResult r;
  double sum = 0;
  std::size_t used = 0;
  for (std::size_t s = 0; s < classes; ++s) {
    if (count[s] == 0) {
      r.warnings.push_back("sensitive class " + std::to_string(s) + " is empty and excluded");
      continue;
    }
    for (auto& v : cond[s]) v /= count[s];
    sum += total_variation(marginal, cond[s]);
    ++used;
  }
  r.value = sum / static_cast<double>(used);
  return r;
}

MetricResult unfairness(const std::vector<std::vector<std::int64_t>>& predictions_per_target,
                        std::span<const std::int64_t> sensitive, std::size_t n_sensitive) {
  if (predictions_per_target.empty()) throw ValidationError("unfairness: no targets");
  MetricResult r;
  for (const auto& p : predictions_per_target) {
    const auto one = unfairness(p, sensitive, n_sensitive);
    r.value += one.value;
    r.warnings.insert(r.warnings.end(), one.warnings.begin(), one.warnings.end());
  }
  r.value /= static_cast<double>(predictions_per_target.size());
  return r;
}

}  // namespace dynorank
