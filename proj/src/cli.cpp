#include "dynorank/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "dynorank/errors.hpp"
#include "dynorank/npy.hpp"
#include "dynorank/parallel.hpp"
#include "dynorank/pipeline.hpp"
#include "dynorank/rank_stats.hpp"
#include "dynorank/supervised_baselines.hpp"
#include "dynorank/synth_dynamics.hpp"
#include "dynorank/version.hpp"
#include "dynorank/zip_archive.hpp"

namespace dynorank::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

// ---- shared option blocks ---------------------------------------------------

struct ScoringFlags {
  EmbeddingParams embedding;
  MmdParams mmd;
  std::optional<double> epsilon;
  std::optional<double> bandwidth;
  std::string weighting = "singular";
  std::string estimator = "biased";
  std::string pooling = "pooled";

  void add_to(CLI::App* app) {
    app->add_option("--alpha", embedding.kernel.alpha, "Intraslice distance exponent")->capture_default_str();
    app->add_option("--knn-k", embedding.kernel.knn_k, "Neighbor rank of the per-point bandwidth")
        ->capture_default_str();
    app->add_option("--epsilon", epsilon, "Fixed interslice bandwidth (default: median heuristic)");
    app->add_flag("--standardize", embedding.kernel.standardize, "z-score units within each epoch");
    app->add_option("-t,--diffusion-time", embedding.diffusion_time, "Diffusion time t")->capture_default_str();
    app->add_option("-d,--dim", embedding.dim, "Embedding dimension d")->capture_default_str();
    app->add_option("--weighting", weighting, "Coordinate weighting")
        ->check(CLI::IsMember({"singular", "none"}))
        ->capture_default_str();
    app->add_option("--svd-tol", embedding.svd.tolerance, "Relative SVD tolerance")->capture_default_str();
    app->add_option("--svd-max-iter", embedding.svd.max_iterations, "SVD iteration cap")->capture_default_str();
    app->add_option("--svd-seed", embedding.svd.seed, "SVD start-block seed")->capture_default_str();
    app->add_option("--estimator", estimator, "MMD estimator")
        ->check(CLI::IsMember({"biased", "unbiased"}))
        ->capture_default_str();
    app->add_option("--bandwidth", bandwidth, "Fixed MMD bandwidth (default: median heuristic)");
    app->add_option("--pooling", pooling, "MMD pooling over epochs")
        ->check(CLI::IsMember({"pooled", "per-epoch"}))
        ->capture_default_str();
  }

  void resolve() {
    if (epsilon) {
      embedding.kernel.epsilon_mode = EpsilonMode::kFixed;
      embedding.kernel.epsilon = *epsilon;
    }
    if (bandwidth) {
      mmd.bandwidth = MmdBandwidth::kFixed;
      mmd.fixed_bandwidth = *bandwidth;
    }
    embedding.weighting = weighting == "none" ? Weighting::kNone : Weighting::kSingular;
    mmd.estimator = estimator == "unbiased" ? MmdEstimator::kUnbiased : MmdEstimator::kBiased;
    mmd.pooling = pooling == "per-epoch" ? MmdPooling::kPerEpoch : MmdPooling::kPooled;
    if (embedding.diffusion_time < 1) throw ValidationError("--diffusion-time must be >= 1");
    if (embedding.dim < 1) throw ValidationError("--dim must be >= 1");
    if (!(embedding.kernel.alpha > 0)) throw ValidationError("--alpha must be positive");
    mmd.validate();
  }

  Json config() const {
    const auto& k = embedding.kernel;
    Json j;
    j["alpha"] = k.alpha;
    j["knn_k"] = k.knn_k;
    j["epsilon_mode"] = k.epsilon_mode == EpsilonMode::kFixed ? "fixed" : "median";
    if (k.epsilon_mode == EpsilonMode::kFixed) j["epsilon"] = k.epsilon;
    j["bandwidth_floor"] = k.bandwidth_floor;
    j["standardize"] = k.standardize;
    j["diffusion_time"] = embedding.diffusion_time;
    j["dim"] = embedding.dim;
    j["weighting"] = weighting;
    j["svd_tolerance"] = embedding.svd.tolerance;
    j["svd_max_iterations"] = embedding.svd.max_iterations;
    j["svd_seed"] = embedding.svd.seed;
    j["svd_oversample"] = embedding.svd.oversample;
    j["mmd_estimator"] = estimator;
    j["mmd_bandwidth"] = mmd.bandwidth == MmdBandwidth::kFixed ? "fixed" : "median";
    if (mmd.bandwidth == MmdBandwidth::kFixed) j["mmd_fixed_bandwidth"] = mmd.fixed_bandwidth;
    j["mmd_pooling"] = pooling;
    return j;
  }
};

// ---- output helpers -----------------------------------------------------------

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<unsigned char> to_bytes(const std::string& s) { return {s.begin(), s.end()}; }

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

// Files are staged in memory and written only once everything has succeeded.
struct PendingOutputs {
  std::vector<std::pair<fs::path, std::vector<unsigned char>>> files;

  void add(const fs::path& p, std::vector<unsigned char> bytes) { files.emplace_back(p, std::move(bytes)); }
  void add_json(const fs::path& p, const Json& j) { add(p, to_bytes(dump(j))); }
  void commit() const {
    for (const auto& [p, bytes] : files) {
      if (p.has_parent_path()) ensure_dir(p.parent_path());
      npy::write_file_atomic(p, bytes);
    }
  }
};

std::vector<unsigned char> npy_bytes(const std::vector<std::size_t>& shape, const std::vector<double>& v) {
  return npy::serialize(shape, npy::DType::kFloat64,
                        {reinterpret_cast<const unsigned char*>(v.data()), v.size() * sizeof(double)});
}

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_')) c = '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json header(const std::string& command) {
  Json j;
  j["tool"] = "dynorank";
  j["version"] = kVersion;
  j["command"] = command;
  return j;
}

Json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot open " + p.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(p.string() + ": invalid JSON: " + e.what());
  }
}

// ---- rank -----------------------------------------------------------------------

Json score_json(const SpecResult& r, const Json& config) {
  Json j = header("rank");
  j["spec_id"] = r.spec_id;
  j["mean_mmd"] = r.score.mean;
  j["std_mmd"] = r.score.std;
  Json pairs = Json::array();
  const auto n = r.scores.values.rows();
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = a + 1; b < n; ++b) pairs.push_back({a, b, r.scores.values(a, b)});
  }
  j["pairs"] = pairs;
  j["realization_ids"] = r.realization_ids;
  j["singular_values"] = r.singular_values;
  j["warnings"] = r.warnings;
  j["params"] = config;
  return j;
}

int cmd_rank(const fs::path& manifest_path, const fs::path& out_dir, ScoringFlags& flags, std::size_t threads) {
  flags.resolve();
  RankOptions options{flags.embedding, flags.mmd, threads};
  const EnsembleManifest manifest = read_manifest(manifest_path);
  const RankResult result = rank_manifest(manifest, options);
  const Json config = flags.config();

  PendingOutputs out;
  Json all = header("rank");
  all["manifest"] = manifest_path.string();
  all["params"] = config;
  all["scores"] = Json::array();
  for (const auto& r : result.specs) {
    const Json j = score_json(r, config);
    out.add_json(out_dir / "scores" / (safe_name(r.spec_id) + ".json"), j);
    all["scores"].push_back({{"spec_id", r.spec_id}, {"mean_mmd", r.score.mean}, {"std_mmd", r.score.std}});
    for (const auto& w : r.warnings) std::cerr << "warning: " << r.spec_id << ": " << w << "\n";
  }
  Json ranking = Json::array();
  std::ostringstream csv;
  csv << "rank,spec_id,mean_mmd\n";
  for (const auto& e : result.ranking.entries) {
    csv << e.rank << "," << e.spec_id << "," << format_double(e.mean) << "\n";
    ranking.push_back({{"rank", e.rank}, {"spec_id", e.spec_id}, {"mean_mmd", e.mean}, {"tied", e.tied}});
  }
  all["ranking"] = ranking;
  out.add_json(out_dir / "scores.json", all);
  out.add(out_dir / "ranking.csv", to_bytes(csv.str()));
  out.commit();
  std::cout << csv.str();
  return 0;
}

// ---- embed ----------------------------------------------------------------------

int cmd_embed(const fs::path& manifest_path, const std::string& spec_id, const fs::path& out_dir,
              ScoringFlags& flags, std::size_t threads) {
  flags.resolve();
  const EnsembleManifest manifest = read_manifest(manifest_path);
  auto groups = load_groups(manifest);
  const auto it = std::find_if(groups.begin(), groups.end(), [&](const TraceGroup& g) { return g.spec_id == spec_id; });
  if (it == groups.end()) throw ValidationError("spec_id '" + spec_id + "' not found in " + manifest_path.string());
  const JointEmbedding e = embed_group(it->traces, flags.embedding, threads);

  std::vector<double> coords(static_cast<std::size_t>(e.coords.size()));
  for (Eigen::Index r = 0; r < e.coords.rows(); ++r) {
    for (Eigen::Index c = 0; c < e.coords.cols(); ++c) {
      coords[static_cast<std::size_t>(r * e.coords.cols() + c)] = e.coords(r, c);
    }
  }
  Json j = header("embed");
  j["spec_id"] = spec_id;
  j["coords_file"] = "coords.npy";
  j["realization_ids"] = it->realization_ids;
  j["realization_offsets"] = e.realization_offsets;
  j["n_epochs"] = e.n_epochs;
  j["m_samples"] = e.m_samples;
  j["epoch_ids"] = it->traces.front().epoch_ids();
  j["row_order"] = "realization, epoch, sample";
  j["d"] = e.d;
  j["singular_values"] = std::vector<double>(e.singular_values.data(), e.singular_values.data() + e.singular_values.size());
  j["warnings"] = e.warnings;
  j["params"] = flags.config();

  PendingOutputs out;
  out.add(out_dir / "coords.npy", npy_bytes({static_cast<std::size_t>(e.coords.rows()), e.d}, coords));
  out.add_json(out_dir / "embedding.json", j);
  out.commit();
  return 0;
}

// ---- metrics --------------------------------------------------------------------

struct MetricFlags {
  MetricConfig config;
  std::string noise_model;  // "", "1", "2", "3", "custom"
  NoiseModel custom;
  std::uint64_t noise_seed = 0;
  std::vector<std::string> factor_channels;
  std::size_t sensitive_factor = 0;
  std::size_t n_sensitive = 0;
};

std::optional<NoiseModel> resolve_noise(const MetricFlags& f) {
  if (f.noise_model.empty()) return std::nullopt;
  if (f.noise_model == "custom") {
    f.custom.validate();
    return f.custom;
  }
  return noise_model_preset(std::stoi(f.noise_model));
}

Json noise_json(const std::string& tag, const std::optional<NoiseModel>& n) {
  if (!n) return nullptr;
  return {{"model", tag},           {"p_shape", n->p_shape}, {"p_scale", n->p_scale},
          {"p_orient", n->p_orient}, {"p_pos", n->p_pos},     {"continuous_sigma", n->continuous_sigma}};
}

LatentCodes read_codes(const fs::path& p) {
  const npy::Array a = npy::read(p);
  if (a.shape.size() != 2) throw ValidationError(p.string() + ": codes must be a 2-d array (N, dim)");
  LatentCodes c;
  c.n = a.shape[0];
  c.dim = a.shape[1];
  c.values = a.as<double>();
  c.validate();
  return c;
}

std::vector<std::vector<std::int64_t>> read_predictions(const fs::path& p) {
  const npy::Array a = npy::read(p);
  if (a.shape.empty() || a.shape.size() > 2) throw ValidationError(p.string() + ": predictions must be 1-d or 2-d");
  const std::size_t n = a.shape[0];
  const std::size_t t = a.shape.size() == 2 ? a.shape[1] : 1;
  const auto v = a.as<double>();
  std::vector<std::vector<std::int64_t>> out(t, std::vector<std::int64_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < t; ++k) {
      const double x = v[i * t + k];
      if (!std::isfinite(x) || x != std::round(x)) {
        throw ValidationError(p.string() + ": predictions must be integer class labels");
      }
      out[k][i] = static_cast<std::int64_t>(x);
    }
  }
  return out;
}

int cmd_metrics(const std::string& kind, const fs::path& codes_path, const fs::path& dataset_path,
                const fs::path& out_path, MetricFlags& flags) {
  flags.config.validate();
  const auto noise = resolve_noise(flags);
  FactorDataset d = load_dsprites(dataset_path, {.images = false});
  if (!flags.factor_channels.empty()) {
    if (flags.factor_channels.size() != d.n_factors()) {
      throw ValidationError("--factor-channels lists " + std::to_string(flags.factor_channels.size()) +
                            " tags for " + std::to_string(d.n_factors()) + " factors");
    }
    for (std::size_t f = 0; f < d.n_factors(); ++f) {
      d.factors[f].channel = parse_noise_channel(flags.factor_channels[f]);
    }
  }

  MetricResult r;
  if (kind == "beta-vae") {
    r = betavae_metric(read_codes(codes_path), d, flags.config, noise);
  } else if (kind == "factor-vae") {
    r = factorvae_metric(read_codes(codes_path), d, flags.config, noise);
  } else if (kind == "mig") {
    const FactorDataset used = noise ? perturb_factors(d, *noise, flags.noise_seed) : d;
    r = mig(read_codes(codes_path), used, flags.config);
  } else {
    const auto preds = read_predictions(codes_path);
    if (preds.front().size() != d.n) {
      throw ValidationError("predictions have " + std::to_string(preds.front().size()) + " rows but dataset has " +
                            std::to_string(d.n));
    }
    if (flags.sensitive_factor >= d.n_factors()) throw ValidationError("--sensitive-factor out of range");
    const FactorDataset used = noise ? perturb_factors(d, *noise, flags.noise_seed) : d;
    std::vector<std::int64_t> s(d.n);
    for (std::size_t i = 0; i < d.n; ++i) s[i] = used.factor_class(i, flags.sensitive_factor);
    r = unfairness(preds, s, flags.n_sensitive);
  }

  Json j = header("metrics");
  j["metric"] = kind;
  j["value"] = r.value;
  j["codes"] = codes_path.string();
  j["dataset"] = dataset_path.string();
  const auto& c = flags.config;
  j["config"] = {{"batches", c.batches},
                 {"samples_per_batch", c.samples_per_batch},
                 {"seed", c.seed},
                 {"bins", c.bins},
                 {"variance_prune_threshold", c.variance_prune_threshold},
                 {"learning_rate", c.learning_rate},
                 {"classifier_epochs", c.classifier_epochs},
                 {"train_fraction", c.train_fraction},
                 {"noise_seed", flags.noise_seed},
                 {"sensitive_factor", flags.sensitive_factor},
                 {"n_sensitive", flags.n_sensitive},
                 {"factor_channels", flags.factor_channels}};
  j["noise_model"] = noise_json(flags.noise_model, noise);
  j["warnings"] = r.warnings;
  if (out_path.empty()) {
    std::cout << dump(j);
  } else {
    PendingOutputs out;
    out.add_json(out_path, j);
    out.commit();
  }
  return 0;
}

// ---- correlate --------------------------------------------------------------------

// Accepts {"scores": [{"spec_id", "mean_mmd" | "value"}...]}, {"values": {id: x}},
// a single score file {"spec_id", "mean_mmd"}, or a plain {id: x} map.
std::map<std::string, double> read_scores(const fs::path& p) {
  const Json j = read_json(p);
  std::map<std::string, double> out;
  auto value_of = [&](const Json& e) -> double {
    for (const char* key : {"mean_mmd", "value", "score"}) {
      if (e.contains(key) && e[key].is_number()) return e[key].get<double>();
    }
    throw ValidationError(p.string() + ": score entry without a numeric mean_mmd/value");
  };
  auto insert = [&](const std::string& id, double v) {
    if (!out.emplace(id, v).second) throw ValidationError(p.string() + ": duplicate spec_id '" + id + "'");
  };
  if (!j.is_object()) throw ValidationError(p.string() + ": expected a JSON object");
  if (j.contains("scores") && j["scores"].is_array()) {
    for (const auto& e : j["scores"]) insert(e.at("spec_id").get<std::string>(), value_of(e));
  } else if (j.contains("values") && j["values"].is_object()) {
    for (const auto& [k, v] : j["values"].items()) insert(k, v.get<double>());
  } else if (j.contains("spec_id")) {
    insert(j["spec_id"].get<std::string>(), value_of(j));
  } else {
    for (const auto& [k, v] : j.items()) {
      if (!v.is_number()) throw ValidationError(p.string() + ": value for '" + k + "' is not a number");
      insert(k, v.get<double>());
    }
  }
  return out;
}

int cmd_correlate(const fs::path& a_path, const fs::path& b_path, const std::string& method,
                  const fs::path& out_path) {
  const auto a = read_scores(a_path);
  const auto b = read_scores(b_path);
  std::vector<std::string> ids;
  std::vector<double> va, vb;
  for (const auto& [id, v] : a) {
    const auto it = b.find(id);
    if (it == b.end()) throw ValidationError("spec_id '" + id + "' missing from " + b_path.string());
    ids.push_back(id);
    va.push_back(v);
    vb.push_back(it->second);
  }
  if (a.size() != b.size()) throw ValidationError("score files list different spec ids");
  const auto m = method == "pearson" ? CorrelationMethod::kPearson : CorrelationMethod::kSpearman;
  Json j = header("correlate");
  j["method"] = method;
  j["value"] = correlate(va, vb, m);
  j["n"] = ids.size();
  j["spec_ids"] = ids;
  j["inputs"] = {a_path.string(), b_path.string()};
  j["config"] = {{"method", method}};
  if (out_path.empty()) {
    std::cout << dump(j);
  } else {
    PendingOutputs out;
    out.add_json(out_path, j);
    out.commit();
  }
  return 0;
}

// ---- synth ------------------------------------------------------------------------

struct SynthFlags {
  SynthSpec spec;
  std::string regime = "axis_aligned";
  std::size_t realizations = 5;
  std::string spec_id;
  bool append = false;
  bool export_codes = false;
};

Json synth_config(const SynthFlags& f) {
  const auto& s = f.spec;
  return {{"regime", f.regime},
          {"delta", s.delta},
          {"k_factors", s.k_factors},
          {"obs_dim", s.obs_dim},
          {"n_epochs", s.n_epochs},
          {"m_trace", s.m_trace},
          {"learning_rate", s.learning_rate},
          {"seed", s.seed},
          {"reg_weight", s.reg_weight},
          {"n_data", s.n_data},
          {"data_seed", s.data_seed},
          {"steps_per_epoch", s.steps_per_epoch},
          {"init_scale", s.init_scale},
          {"data_noise", s.data_noise},
          {"grid_levels", s.grid_levels},
          {"realizations", f.realizations},
          {"spec_id", f.spec_id}};
}

int cmd_synth(const fs::path& out_dir, SynthFlags& flags, std::size_t threads) {
  flags.spec.regime = parse_regime(flags.regime);
  flags.spec.validate();
  if (flags.realizations < 2) throw ValidationError("--realizations must be >= 2");
  if (flags.spec_id.empty()) flags.spec_id = flags.regime;
  if (flags.export_codes && flags.spec.regime == Regime::kPerturbed) {
    throw ValidationError("--export-codes needs a trained regime (axis_aligned or rotation_free)");
  }
  const fs::path manifest_path = out_dir / "manifest.json";

  EnsembleManifest manifest;
  if (flags.append && fs::exists(manifest_path)) {
    manifest = read_manifest(manifest_path);
    // read_manifest resolves paths; store them relative again.
    for (auto& r : manifest.runs) r.trace_path = fs::relative(r.trace_path, out_dir);
    for (const auto& r : manifest.runs) {
      if (r.spec_id == flags.spec_id) throw ValidationError("spec_id '" + flags.spec_id + "' already in manifest");
    }
    if (manifest.trace_sample_ids.size() != flags.spec.m_trace) {
      throw ValidationError("existing manifest has " + std::to_string(manifest.trace_sample_ids.size()) +
                            " trace samples, --m-trace is " + std::to_string(flags.spec.m_trace));
    }
  } else if (fs::exists(manifest_path) && !flags.append) {
    throw ValidationError(manifest_path.string() + " exists; pass --append to add a spec");
  } else {
    for (std::size_t i = 0; i < flags.spec.m_trace; ++i) manifest.trace_sample_ids.push_back(static_cast<std::int64_t>(i));
  }

  std::vector<LinearModel> models;
  const auto traces = generate_realizations(flags.spec, flags.realizations, threads, &models);

  PendingOutputs out;
  const std::string dir = safe_name(flags.spec_id);
  const Json config = synth_config(flags);
  std::optional<FactorData> data;
  if (flags.export_codes) {
    data = gen_factor_data(flags.spec.k_factors, flags.spec.n_data, flags.spec.obs_dim, flags.spec.data_seed,
                           flags.spec.data_noise, flags.spec.grid_levels);
  }
  for (std::size_t r = 0; r < traces.size(); ++r) {
    const fs::path rel = fs::path("traces") / dir / ("r" + std::to_string(r) + ".npy");
    const auto& t = traces[r];
    const std::vector<std::size_t> shape{t.n_epochs(), t.m_samples(), t.p_units()};
    out.add(out_dir / rel, npy::serialize(shape, npy::DType::kFloat32,
                                          {reinterpret_cast<const unsigned char*>(t.values().data()),
                                           t.values().size() * sizeof(float)}));
    RunManifest run;
    run.spec_id = flags.spec_id;
    run.realization_id = "r" + std::to_string(r);
    run.seed = static_cast<std::int64_t>(flags.spec.seed);
    run.hyperparams = {{"delta", flags.spec.delta},
                       {"learning_rate", flags.spec.learning_rate},
                       {"reg_weight", flags.spec.reg_weight},
                       {"realization_index", static_cast<double>(r)}};
    run.trace_path = rel;
    manifest.runs.push_back(run);
    if (data) {
      const LatentCodes c = encode(models[r], *data);
      out.add(out_dir / "codes" / dir / ("r" + std::to_string(r) + ".npy"), npy_bytes({c.n, c.dim}, c.values));
    }
  }
  if (data) {
    const auto& lab = data->labeled;
    const std::vector<std::size_t> lshape{lab.n, lab.n_factors()};
    const std::vector<std::size_t> ishape{lab.n, lab.obs_dim};
    zip::write_stored(out_dir / "labels.npz.tmp",
                      {{"imgs.npy", npy::serialize(ishape, npy::DType::kFloat32,
                                                   {reinterpret_cast<const unsigned char*>(lab.observations.data()),
                                                    lab.observations.size() * sizeof(float)})},
                       {"latents_classes.npy",
                        npy::serialize(lshape, npy::DType::kInt64,
                                       {reinterpret_cast<const unsigned char*>(lab.factor_classes.data()),
                                        lab.factor_classes.size() * sizeof(std::int64_t)})},
                       {"latents_values.npy", npy_bytes(lshape, lab.factor_values)}});
    fs::rename(out_dir / "labels.npz.tmp", out_dir / "labels.npz");
  }
  Json j = header("synth");
  j["config"] = config;
  j["traces"] = traces.size();
  out.add_json(out_dir / ("synth_" + dir + ".json"), j);
  out.commit();
  write_manifest(manifest, manifest_path);
  std::cout << manifest_path.string() << "\n";
  return 0;
}

// ---- dsprites-inspect -----------------------------------------------------------

int cmd_inspect(const fs::path& path, bool images) {
  const FactorDataset d = load_dsprites(path, {.images = images});
  Json j = header("dsprites-inspect");
  j["path"] = path.string();
  j["n"] = d.n;
  if (images) j["obs_dim"] = d.obs_dim;
  Json factors = Json::array();
  for (const auto& f : d.factors) {
    factors.push_back({{"name", f.name},
                       {"size", f.size},
                       {"kind", f.kind == FactorKind::kOrdinal ? "ordinal" : "discrete"},
                       {"noise_channel", to_string(f.channel)}});
  }
  j["factors"] = factors;
  j["full_factorial"] = d.is_full_factorial();
  j["config"] = {{"images", images}};
  std::cout << dump(j);
  return 0;
}

}  // namespace

std::string defaults_table() {
  const EmbeddingParams e;
  const MetricConfig m;
  const SynthSpec s;
  std::ostringstream o;
  o << "Defaults:\n"
    << "  trace samples m        " << kDefaultTraceSamples << " when selecting from a dataset; the manifest's\n"
    << "                         trace_sample_ids decide at rank time (synth uses m_trace)\n"
    << "  diffusion time t       " << e.diffusion_time << "\n"
    << "  embedding dim d        " << e.dim << "\n"
    << "  knn_k                  " << e.kernel.knn_k << "\n"
    << "  alpha                  " << e.kernel.alpha << "\n"
    << "  epsilon                median of same-sample cross-epoch distances\n"
    << "  weighting              singular\n"
    << "  MMD estimator          biased\n"
    << "  MMD bandwidth          median heuristic\n"
    << "  MMD pooling            pooled\n"
    << "  metric votes           " << m.batches << " x " << m.samples_per_batch << " samples\n"
    << "  MIG bins               " << m.bins << "\n"
    << "  variance prune         " << m.variance_prune_threshold << " x max latent variance\n"
    << "  synth                  k=" << s.k_factors << " obs_dim=" << s.obs_dim << " epochs=" << s.n_epochs
    << " m_trace=" << s.m_trace << " lr=" << s.learning_rate << " reg_weight=" << s.reg_weight << "\n"
    << "  threads                --threads, else DYNORANK_THREADS, else 1\n"
    << "Exit codes: 0 success, 2 invalid input, 3 numerical failure.\n";
  return o.str();
}

int run(int argc, char** argv) {
  CLI::App app{"Label-free ranking of model specifications by the stability of their training dynamics."};
  app.footer(defaults_table());
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::size_t threads_flag = 0;
  app.add_option("--threads", threads_flag, "Worker threads (0: DYNORANK_THREADS or 1)");

  ScoringFlags rank_flags;
  fs::path rank_manifest_path, rank_out;
  auto* rank = app.add_subcommand("rank", "Score and rank every spec of an ensemble manifest");
  rank->add_option("manifest", rank_manifest_path, "Ensemble manifest JSON")->required();
  rank->add_option("-o,--out-dir", rank_out, "Output directory")->required();
  rank_flags.add_to(rank);

  ScoringFlags embed_flags;
  fs::path embed_manifest_path, embed_out;
  std::string embed_spec;
  auto* embed = app.add_subcommand("embed", "Write the joint embedding of one spec");
  embed->add_option("manifest", embed_manifest_path, "Ensemble manifest JSON")->required();
  embed->add_option("--spec", embed_spec, "spec_id to embed")->required();
  embed->add_option("-o,--out-dir", embed_out, "Output directory")->required();
  embed_flags.add_to(embed);

  MetricFlags metric_flags;
  std::string metric_kind;
  fs::path codes_path, dataset_path, metric_out;
  auto* metrics = app.add_subcommand("metrics", "Supervised disentanglement metrics and unfairness");
  metrics->add_option("kind", metric_kind, "beta-vae | factor-vae | mig | unfairness")
      ->required()
      ->check(CLI::IsMember({"beta-vae", "factor-vae", "mig", "unfairness"}));
  metrics->add_option("codes", codes_path, "Codes NPY (N, dim); integer predictions for unfairness")->required();
  metrics->add_option("dataset", dataset_path, "Labels archive (.npz with latents_classes, latents_values)")
      ->required();
  metrics->add_option("-o,--out", metric_out, "Output JSON (default: stdout)");
  auto& mc = metric_flags.config;
  metrics->add_option("--batches", mc.batches, "Votes")->capture_default_str();
  metrics->add_option("--samples-per-batch", mc.samples_per_batch, "Samples per vote")->capture_default_str();
  metrics->add_option("--seed", mc.seed, "Vote sampler seed")->capture_default_str();
  metrics->add_option("--bins", mc.bins, "MIG bins")->capture_default_str();
  metrics->add_option("--prune", mc.variance_prune_threshold, "FactorVAE prune fraction")->capture_default_str();
  metrics->add_option("--lr", mc.learning_rate, "beta-VAE classifier learning rate")->capture_default_str();
  metrics->add_option("--classifier-epochs", mc.classifier_epochs, "beta-VAE classifier epochs")
      ->capture_default_str();
  metrics->add_option("--train-fraction", mc.train_fraction, "Votes used for training")->capture_default_str();
  metrics->add_option("--noise-model", metric_flags.noise_model, "Label noise: 1, 2, 3 or custom")
      ->check(CLI::IsMember({"1", "2", "3", "custom"}));
  metrics->add_option("--p-shape", metric_flags.custom.p_shape, "custom noise: shape")->capture_default_str();
  metrics->add_option("--p-scale", metric_flags.custom.p_scale, "custom noise: scale")->capture_default_str();
  metrics->add_option("--p-orient", metric_flags.custom.p_orient, "custom noise: orientation")->capture_default_str();
  metrics->add_option("--p-pos", metric_flags.custom.p_pos, "custom noise: position")->capture_default_str();
  metrics->add_option("--noise-sigma", metric_flags.custom.continuous_sigma, "Ordinal noise step scale")
      ->capture_default_str();
  metrics->add_option("--noise-seed", metric_flags.noise_seed, "Label perturbation seed")->capture_default_str();
  metrics->add_option("--factor-channels", metric_flags.factor_channels,
                      "Noise channel per factor (shape, scale, orientation, position, none)")
      ->delimiter(',');
  metrics->add_option("--sensitive-factor", metric_flags.sensitive_factor, "Factor used as sensitive attribute")
      ->capture_default_str();
  metrics->add_option("--n-sensitive", metric_flags.n_sensitive, "Sensitive class count (0: infer)")
      ->capture_default_str();

  fs::path corr_a, corr_b, corr_out;
  std::string corr_method = "spearman";
  auto* corr = app.add_subcommand("correlate", "Correlate two score files by spec_id");
  corr->add_option("a", corr_a, "Score JSON")->required();
  corr->add_option("b", corr_b, "Score JSON")->required();
  corr->add_option("--method", corr_method, "Correlation")
      ->check(CLI::IsMember({"spearman", "pearson"}))
      ->capture_default_str();
  corr->add_option("-o,--out", corr_out, "Output JSON (default: stdout)");

  SynthFlags synth_flags;
  fs::path synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic ensemble (manifest + traces)");
  auto& ss = synth_flags.spec;
  synth->add_option("-o,--out-dir", synth_out, "Output directory")->required();
  synth->add_option("--regime", synth_flags.regime, "axis_aligned | rotation_free | perturbed")->capture_default_str();
  synth->add_option("--delta", ss.delta, "Perturbation size (perturbed regime)")->capture_default_str();
  synth->add_option("--k-factors", ss.k_factors, "Latent factors")->capture_default_str();
  synth->add_option("--obs-dim", ss.obs_dim, "Observed dimension (trace units)")->capture_default_str();
  synth->add_option("--epochs", ss.n_epochs, "Epochs recorded")->capture_default_str();
  synth->add_option("--m-trace", ss.m_trace, "Trace samples")->capture_default_str();
  synth->add_option("--lr", ss.learning_rate, "Learning rate")->capture_default_str();
  synth->add_option("--seed", ss.seed, "Spec seed")->capture_default_str();
  synth->add_option("--reg-weight", ss.reg_weight, "Axis-aligning penalty weight")->capture_default_str();
  synth->add_option("--n-data", ss.n_data, "Training rows")->capture_default_str();
  synth->add_option("--data-seed", ss.data_seed, "Data seed")->capture_default_str();
  synth->add_option("--steps-per-epoch", ss.steps_per_epoch, "Gradient steps per epoch")->capture_default_str();
  synth->add_option("--init-scale", ss.init_scale, "Initialization scale")->capture_default_str();
  synth->add_option("--data-noise", ss.data_noise, "Observation noise")->capture_default_str();
  synth->add_option("--realizations", synth_flags.realizations, "Realizations")->capture_default_str();
  synth->add_option("--spec-id", synth_flags.spec_id, "spec_id (default: regime name)");
  synth->add_flag("--append", synth_flags.append, "Add a spec to an existing manifest");
  synth->add_flag("--export-codes", synth_flags.export_codes, "Also write encoder codes and labels.npz");

  fs::path inspect_path;
  bool inspect_images = false;
  auto* inspect = app.add_subcommand("dsprites-inspect", "Summarize a dSprites-style archive");
  inspect->add_option("archive", inspect_path, ".npz archive")->required();
  inspect->add_flag("--images", inspect_images, "Also load the image array");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const std::size_t threads = resolve_threads(threads_flag);
    if (*rank) return cmd_rank(rank_manifest_path, rank_out, rank_flags, threads);
    if (*embed) return cmd_embed(embed_manifest_path, embed_spec, embed_out, embed_flags, threads);
    if (*metrics) return cmd_metrics(metric_kind, codes_path, dataset_path, metric_out, metric_flags);
    if (*corr) return cmd_correlate(corr_a, corr_b, corr_method, corr_out);
    if (*synth) return cmd_synth(synth_out, synth_flags, threads);
    if (*inspect) return cmd_inspect(inspect_path, inspect_images);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace dynorank::cli
