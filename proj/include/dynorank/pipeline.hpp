#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dynorank/errors.hpp"
#include "dynorank/joint_embedding.hpp"
#include "dynorank/stability_score.hpp"
#include "dynorank/trace_store.hpp"

namespace dynorank {

// Ensemble validation failure carrying every violation found.
class EnsembleError : public ValidationError {
 public:
  explicit EnsembleError(std::vector<Violation> v);
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

struct RankOptions {
  EmbeddingParams embedding;
  MmdParams mmd;
  std::size_t threads = 1;
};

struct SpecResult {
  std::string spec_id;
  std::vector<std::string> realization_ids;
  ScoreMatrix scores;
  SpecScore score;
  std::vector<double> singular_values;
  std::vector<std::string> warnings;
};

struct RankResult {
  std::vector<SpecResult> specs;  // manifest order
  RankingReport ranking;
};

struct TraceGroup {
  std::string spec_id;
  std::vector<std::string> realization_ids;
  std::vector<TraceTensor> traces;
};

// Embeds and scores each group independently.
SpecResult score_group(const TraceGroup& group, const RankOptions& options);
RankResult rank_groups(const std::vector<TraceGroup>& groups, const RankOptions& options);

// Loads and validates every trace named by the manifest, then ranks.
// Throws EnsembleError listing all violations.
std::vector<TraceGroup> load_groups(const EnsembleManifest& manifest);
RankResult rank_manifest(const EnsembleManifest& manifest, const RankOptions& options);

}  // namespace dynorank
