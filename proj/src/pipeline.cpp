#include "dynorank/pipeline.hpp"

namespace dynorank {

namespace {

std::string join_violations(const std::vector<Violation>& v) {
  std::string out = "ensemble validation failed:";
  for (const auto& x : v) out += "\n  " + describe(x);
  return out;
}

}  // namespace

EnsembleError::EnsembleError(std::vector<Violation> v)
    : ValidationError(join_violations(v)), violations_(std::move(v)) {}

SpecResult score_group(const TraceGroup& group, const RankOptions& options) {
  if (group.traces.size() < 2) {
    throw ValidationError("spec '" + group.spec_id + "' needs at least 2 realizations");
  }
  const JointEmbedding e = embed_group(group.traces, options.embedding, options.threads);
  SpecResult r;
  r.spec_id = group.spec_id;
  r.realization_ids = group.realization_ids;
  r.scores = pairwise_scores(e, options.mmd, options.threads);
  r.scores.spec_id = group.spec_id;
  r.score = spec_score(r.scores);
  r.singular_values.assign(e.singular_values.data(), e.singular_values.data() + e.singular_values.size());
  r.warnings = e.warnings;
  return r;
}

RankResult rank_groups(const std::vector<TraceGroup>& groups, const RankOptions& options) {
  if (groups.empty()) throw ValidationError("nothing to rank: no specs");
  RankResult out;
  std::vector<std::pair<std::string, double>> means;
  for (const auto& g : groups) {
    out.specs.push_back(score_group(g, options));
    means.emplace_back(g.spec_id, out.specs.back().score.mean);
  }
  out.ranking = rank_specs(means);
  return out;
}

std::vector<TraceGroup> load_groups(const EnsembleManifest& manifest) {
  std::vector<TraceTensor> traces;
  auto violations = validate_ensemble(manifest, &traces);
  if (!violations.empty()) throw EnsembleError(std::move(violations));
  std::vector<TraceGroup> groups;
  for (const auto& spec : manifest.spec_ids()) {
    TraceGroup g;
    g.spec_id = spec;
    for (const std::size_t k : manifest.group(spec)) {
      g.realization_ids.push_back(manifest.runs[k].realization_id);
      g.traces.push_back(std::move(traces[k]));
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

RankResult rank_manifest(const EnsembleManifest& manifest, const RankOptions& options) {
  return rank_groups(load_groups(manifest), options);
}

}  // namespace dynorank
