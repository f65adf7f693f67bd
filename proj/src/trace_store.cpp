#include "dynorank/trace_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "dynorank/errors.hpp"
#include "dynorank/npy.hpp"
#include "dynorank/random.hpp"
#include "dynorank/zip_archive.hpp"
#include "json.hpp"

namespace dynorank {

using nlohmann::json;

TraceTensor::TraceTensor(std::size_t n_epochs, std::size_t m_samples, std::size_t p_units, std::vector<float> values,
                         std::vector<std::int64_t> epoch_ids)
    : n_(n_epochs), m_(m_samples), p_(p_units), values_(std::move(values)), epoch_ids_(std::move(epoch_ids)) {
  if (values_.size() != n_ * m_ * p_) {
    throw ValidationError("trace: " + std::to_string(values_.size()) + " values for shape (" + std::to_string(n_) +
                          ", " + std::to_string(m_) + ", " + std::to_string(p_) + ")");
  }
  if (n_ < 2 || m_ < 2 || p_ < 1) {
    throw ValidationError("trace: need n_epochs >= 2, m_samples >= 2, p_units >= 1; got (" + std::to_string(n_) +
                          ", " + std::to_string(m_) + ", " + std::to_string(p_) + ")");
  }
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (!std::isfinite(values_[k])) {
      const std::size_t u = k % p_;
      const std::size_t i = (k / p_) % m_;
      const std::size_t tau = k / (p_ * m_);
      throw ValidationError("trace: non-finite value at index (" + std::to_string(tau) + ", " + std::to_string(i) +
                            ", " + std::to_string(u) + ")");
    }
  }
  if (epoch_ids_.empty()) {
    epoch_ids_.resize(n_);
    std::iota(epoch_ids_.begin(), epoch_ids_.end(), std::int64_t{0});
  }
  if (epoch_ids_.size() != n_) throw ValidationError("trace: epoch_ids length does not match n_epochs");
  for (std::size_t k = 1; k < n_; ++k) {
    if (epoch_ids_[k] <= epoch_ids_[k - 1]) throw ValidationError("trace: epoch_ids not strictly increasing");
  }
}

TraceTensor TraceTensor::permute_samples(std::span<const std::size_t> perm) const {
  if (perm.size() != m_) throw ValidationError("permute_samples: permutation length mismatch");
  std::vector<bool> hit(m_, false);
  for (const auto k : perm) {
    if (k >= m_ || hit[k]) throw ValidationError("permute_samples: not a permutation");
    hit[k] = true;
  }
  std::vector<float> out(values_.size());
  for (std::size_t tau = 0; tau < n_; ++tau) {
    for (std::size_t i = 0; i < m_; ++i) {
      const auto src = row(tau, perm[i]);
      std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>((tau * m_ + i) * p_));
    }
  }
  return TraceTensor(n_, m_, p_, std::move(out), epoch_ids_);
}

namespace {

std::filesystem::path sidecar_path(const std::filesystem::path& p) {
  auto s = p;
  s += ".json";
  return s;
}

}  // namespace

TraceTensor load_trace(const std::filesystem::path& path) {
  const npy::Array a = npy::read(path);
  if (a.shape.size() != 3) {
    throw ValidationError(path.string() + ": expected a 3-d array (epochs, samples, units), got rank " +
                          std::to_string(a.shape.size()));
  }
  if (a.dtype != npy::DType::kFloat32 && a.dtype != npy::DType::kFloat64) {
    throw ValidationError(path.string() + ": trace must be real-valued (f4 or f8)");
  }
  std::vector<std::int64_t> epoch_ids;
  const auto side = sidecar_path(path);
  if (std::filesystem::exists(side)) {
    std::ifstream in(side);
    try {
      const json j = json::parse(in);
      epoch_ids = j.at("epoch_ids").get<std::vector<std::int64_t>>();
    } catch (const json::exception& e) {
      throw ValidationError(side.string() + ": " + e.what());
    }
  }
  try {
    return TraceTensor(a.shape[0], a.shape[1], a.shape[2], a.as<float>(), std::move(epoch_ids));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void save_trace(const TraceTensor& t, const std::filesystem::path& path) {
  const std::size_t shape[] = {t.n_epochs(), t.m_samples(), t.p_units()};
  npy::write(path, shape, std::span<const float>(t.values()));
  bool default_ids = true;
  for (std::size_t k = 0; k < t.n_epochs(); ++k) default_ids = default_ids && t.epoch_ids()[k] == std::int64_t(k);
  const auto side = sidecar_path(path);
  if (!default_ids) {
    const std::string text = json{{"epoch_ids", t.epoch_ids()}}.dump(2);
    npy::write_file_atomic(side, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
  } else if (std::filesystem::exists(side)) {
    std::filesystem::remove(side);
  }
}

std::vector<std::string> EnsembleManifest::spec_ids() const {
  std::vector<std::string> out;
  for (const auto& r : runs) {
    if (std::find(out.begin(), out.end(), r.spec_id) == out.end()) out.push_back(r.spec_id);
  }
  return out;
}

std::vector<std::size_t> EnsembleManifest::group(const std::string& spec_id) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    if (runs[k].spec_id == spec_id) out.push_back(k);
  }
  return out;
}

EnsembleManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  EnsembleManifest e;
  try {
    const json j = json::parse(in);
    e.trace_sample_ids = j.at("trace_sample_ids").get<std::vector<std::int64_t>>();
    for (const auto& r : j.at("runs")) {
      RunManifest run;
      run.spec_id = r.at("spec_id").get<std::string>();
      run.realization_id = r.at("realization_id").get<std::string>();
      run.seed = r.value("seed", std::int64_t{0});
      if (r.contains("hyperparams")) {
        for (const auto& [k, v] : r.at("hyperparams").items()) {
          if (v.is_number()) {
            run.hyperparams[k] = v.get<double>();
          } else if (v.is_boolean()) {
            run.hyperparams[k] = v.get<bool>() ? 1.0 : 0.0;
          } else {
            throw ValidationError("manifest: hyperparam '" + k + "' is not a scalar");
          }
        }
      }
      std::filesystem::path tp = r.at("trace_path").get<std::string>();
      if (tp.is_relative()) tp = path.parent_path() / tp;
      run.trace_path = tp;
      e.runs.push_back(std::move(run));
    }
  } catch (const json::exception& ex) {
    throw ValidationError(path.string() + ": " + ex.what());
  }
  return e;
}

void write_manifest(const EnsembleManifest& e, const std::filesystem::path& path) {
  json runs = json::array();
  for (const auto& r : e.runs) {
    runs.push_back({{"spec_id", r.spec_id},
                    {"realization_id", r.realization_id},
                    {"seed", r.seed},
                    {"hyperparams", r.hyperparams},
                    {"trace_path", r.trace_path.generic_string()}});
  }
  const json j = {{"runs", runs}, {"trace_sample_ids", e.trace_sample_ids}};
  const std::string text = j.dump(2) + "\n";
  npy::write_file_atomic(path, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

std::string describe(const Violation& v) {
  std::string s = v.field + ": " + v.message;
  if (!v.runs.empty()) {
    s += " [";
    for (std::size_t k = 0; k < v.runs.size(); ++k) s += (k ? ", " : "") + v.runs[k];
    s += "]";
  }
  return s;
}

namespace {

std::string run_name(const RunManifest& r) { return r.spec_id + "/" + r.realization_id; }

std::string shape_str(const TraceTensor& t) {
  return "(" + std::to_string(t.n_epochs()) + ", " + std::to_string(t.m_samples()) + ", " +
         std::to_string(t.p_units()) + ")";
}

}  // namespace

std::vector<Violation> validate_ensemble(const EnsembleManifest& e, std::span<const TraceTensor> traces) {
  std::vector<Violation> out;
  if (traces.size() != e.runs.size()) {
    out.push_back({{}, "runs", "trace count does not match run count"});
    return out;
  }
  if (e.runs.empty()) out.push_back({{}, "runs", "ensemble has no runs"});

  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : e.runs) {
    if (!seen.insert({r.spec_id, r.realization_id}).second) {
      out.push_back({{run_name(r)}, "realization_id", "duplicate (spec_id, realization_id)"});
    }
  }

  {
    std::set<std::int64_t> ids(e.trace_sample_ids.begin(), e.trace_sample_ids.end());
    if (ids.size() != e.trace_sample_ids.size()) {
      out.push_back({{}, "trace_sample_ids", "trace sample ids are not distinct"});
    }
  }
  for (std::size_t k = 0; k < e.runs.size(); ++k) {
    if (traces[k].m_samples() != e.trace_sample_ids.size()) {
      out.push_back({{run_name(e.runs[k])},
                     "m_samples",
                     "trace has " + std::to_string(traces[k].m_samples()) + " samples but ensemble lists " +
                         std::to_string(e.trace_sample_ids.size()) + " trace_sample_ids"});
    }
  }

  std::size_t group_size = 0;
  bool first_group = true;
  for (const auto& spec : e.spec_ids()) {
    const auto idx = e.group(spec);
    const TraceTensor& ref = traces[idx.front()];
    for (std::size_t k = 1; k < idx.size(); ++k) {
      const TraceTensor& t = traces[idx[k]];
      if (t.n_epochs() != ref.n_epochs()) {
        out.push_back({{run_name(e.runs[idx.front()]), run_name(e.runs[idx[k]])},
                       "n_epochs",
                       "shape " + shape_str(t) + " differs from " + shape_str(ref)});
      } else if (!t.same_shape(ref)) {
        out.push_back({{run_name(e.runs[idx.front()]), run_name(e.runs[idx[k]])},
                       t.m_samples() != ref.m_samples() ? "m_samples" : "p_units",
                       "shape " + shape_str(t) + " differs from " + shape_str(ref)});
      } else if (t.epoch_ids() != ref.epoch_ids()) {
        out.push_back({{run_name(e.runs[idx.front()]), run_name(e.runs[idx[k]])},
                       "epoch_ids",
                       "epoch ids differ within spec group"});
      }
    }
    if (idx.size() < 2) {
      out.push_back({{run_name(e.runs[idx.front()])}, "runs", "spec '" + spec + "' has fewer than 2 realizations"});
    }
    if (first_group) {
      group_size = idx.size();
      first_group = false;
    } else if (idx.size() != group_size) {
      out.push_back({{run_name(e.runs[idx.front()])},
                     "runs",
                     "spec '" + spec + "' has " + std::to_string(idx.size()) + " realizations, expected " +
                         std::to_string(group_size)});
    }
  }
  return out;
}

std::vector<Violation> validate_ensemble(const EnsembleManifest& e, std::vector<TraceTensor>* loaded) {
  std::vector<TraceTensor> traces;
  std::vector<Violation> load_errors;
  traces.reserve(e.runs.size());
  for (const auto& r : e.runs) {
    try {
      traces.push_back(load_trace(r.trace_path));
    } catch (const std::exception& ex) {
      load_errors.push_back({{run_name(r)}, "trace_path", ex.what()});
      traces.emplace_back();
    }
  }
  if (!load_errors.empty()) return load_errors;
  auto out = validate_ensemble(e, std::span<const TraceTensor>(traces));
  if (loaded && out.empty()) *loaded = std::move(traces);
  return out;
}

NoiseChannel parse_noise_channel(const std::string& tag) {
  if (tag == "none") return NoiseChannel::kNone;
  if (tag == "shape") return NoiseChannel::kShape;
  if (tag == "scale") return NoiseChannel::kScale;
  if (tag == "orientation") return NoiseChannel::kOrientation;
  if (tag == "position") return NoiseChannel::kPosition;
  throw ValidationError("unknown factor tag '" + tag + "'");
}

std::string to_string(NoiseChannel c) {
  switch (c) {
    case NoiseChannel::kNone: return "none";
    case NoiseChannel::kShape: return "shape";
    case NoiseChannel::kScale: return "scale";
    case NoiseChannel::kOrientation: return "orientation";
    case NoiseChannel::kPosition: return "position";
  }
  return "none";
}

std::vector<std::int64_t> FactorDataset::factor_sizes() const {
  std::vector<std::int64_t> out;
  for (const auto& f : factors) out.push_back(f.size);
  return out;
}

bool FactorDataset::is_full_factorial() const {
  std::size_t prod = 1;
  for (const auto& f : factors) prod *= static_cast<std::size_t>(f.size);
  if (prod != n) return false;
  std::set<std::vector<std::int64_t>> combos;
  for (std::size_t r = 0; r < n; ++r) {
    combos.insert({factor_classes.begin() + static_cast<std::ptrdiff_t>(r * factors.size()),
                   factor_classes.begin() + static_cast<std::ptrdiff_t>((r + 1) * factors.size())});
  }
  return combos.size() == n;
}

void FactorDataset::validate() const {
  const std::size_t F = factors.size();
  if (factor_classes.size() != n * F) throw ValidationError("dataset: factor_classes has wrong size");
  if (!factor_values.empty() && factor_values.size() != n * F) {
    throw ValidationError("dataset: factor_values has wrong size");
  }
  if (!observations.empty() && observations.size() != n * obs_dim) {
    throw ValidationError("dataset: observations have wrong size");
  }
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t f = 0; f < F; ++f) {
      const auto c = factor_class(r, f);
      if (c < 0 || c >= factors[f].size) {
        throw ValidationError("dataset: factor " + std::to_string(f) + " class " + std::to_string(c) + " at row " +
                              std::to_string(r) + " outside [0, " + std::to_string(factors[f].size) + ")");
      }
    }
  }
}

FactorDataset load_dsprites(const std::filesystem::path& path, DspritesLoadOptions options) {
  const zip::Archive archive(path);
  for (const char* member : {"latents_classes.npy", "latents_values.npy"}) {
    if (!archive.contains(member)) {
      throw ValidationError(path.string() + ": missing archive member '" + member + "'");
    }
  }
  if (options.images && !archive.contains("imgs.npy")) {
    throw ValidationError(path.string() + ": missing archive member 'imgs.npy'");
  }

  const npy::Array classes = npy::parse(archive.extract("latents_classes.npy"));
  const npy::Array values = npy::parse(archive.extract("latents_values.npy"));
  if (classes.shape.size() != 2 || values.shape != classes.shape) {
    throw ValidationError(path.string() + ": latents_classes / latents_values must share a 2-d shape");
  }

  FactorDataset d;
  d.n = classes.shape[0];
  const std::size_t F = classes.shape[1];
  d.factor_classes = classes.as<std::int64_t>();
  d.factor_values = values.as<double>();

  if (options.images) {
    const npy::Array imgs = npy::parse(archive.extract("imgs.npy"));
    if (imgs.shape.empty() || imgs.shape[0] != d.n) {
      throw ValidationError(path.string() + ": image count " + (imgs.shape.empty() ? "?" : std::to_string(imgs.shape[0])) +
                            " does not match label rows " + std::to_string(d.n));
    }
    d.obs_dim = d.n ? imgs.size() / d.n : 0;
    d.observations = imgs.as<float>();
  }

  // Column layout of the public archive: color, shape, scale, orientation, posX, posY.
  static const FactorInfo kSix[] = {
      {"color", 0, FactorKind::kDiscrete, NoiseChannel::kNone},
      {"shape", 0, FactorKind::kDiscrete, NoiseChannel::kShape},
      {"scale", 0, FactorKind::kOrdinal, NoiseChannel::kScale},
      {"orientation", 0, FactorKind::kOrdinal, NoiseChannel::kOrientation},
      {"posX", 0, FactorKind::kOrdinal, NoiseChannel::kPosition},
      {"posY", 0, FactorKind::kOrdinal, NoiseChannel::kPosition},
  };
  for (std::size_t f = 0; f < F; ++f) {
    FactorInfo info;
    if (F == 6) {
      info = kSix[f];
    } else if (F == 5) {
      info = kSix[f + 1];
    } else {
      info = {"factor" + std::to_string(f), 0, FactorKind::kDiscrete, NoiseChannel::kNone};
    }
    std::int64_t max_class = -1;
    for (std::size_t r = 0; r < d.n; ++r) max_class = std::max(max_class, d.factor_classes[r * F + f]);
    info.size = max_class + 1;
    d.factors.push_back(info);
  }
  d.validate();
  return d;
}

std::vector<std::int64_t> select_trace_samples(const FactorDataset& d, std::size_t m, std::uint64_t seed,
                                               SampleStrategy strategy, std::size_t stratify_factor) {
  if (m > d.n) {
    throw ValidationError("select_trace_samples: m = " + std::to_string(m) + " exceeds dataset size " +
                          std::to_string(d.n));
  }
  auto rng = stream_rng(seed, 0x7ace);
  auto draw = [&rng](std::vector<std::int64_t>& pool, std::size_t k) {
    // Partial Fisher-Yates: the first k slots become the sample.
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t r = j + static_cast<std::size_t>(uniform_index(rng, pool.size() - j));
      std::swap(pool[j], pool[r]);
    }
    pool.resize(k);
  };

  std::vector<std::int64_t> out;
  if (strategy == SampleStrategy::kUniform) {
    out.resize(d.n);
    std::iota(out.begin(), out.end(), std::int64_t{0});
    draw(out, m);
  } else {
    if (stratify_factor >= d.n_factors()) throw ValidationError("select_trace_samples: bad stratify factor");
    const auto classes = static_cast<std::size_t>(d.factors[stratify_factor].size);
    std::vector<std::vector<std::int64_t>> rows(classes);
    for (std::size_t r = 0; r < d.n; ++r) {
      rows[static_cast<std::size_t>(d.factor_class(r, stratify_factor))].push_back(static_cast<std::int64_t>(r));
    }
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t quota = m / classes + (c < m % classes ? 1 : 0);
      if (quota > rows[c].size()) {
        throw ValidationError("select_trace_samples: class " + std::to_string(c) + " of factor " +
                              std::to_string(stratify_factor) + " has fewer than " + std::to_string(quota) + " rows");
      }
      draw(rows[c], quota);
      out.insert(out.end(), rows[c].begin(), rows[c].end());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace dynorank
