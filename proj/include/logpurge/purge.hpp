#pragma once

#include <json.hpp>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "logpurge/core.hpp"
#include "logpurge/embed.hpp"
#include "logpurge/evaluator.hpp"
#include "logpurge/pluto.hpp"
#include "logpurge/tsne.hpp"

namespace logpurge {

struct NoLowRegions final : Error {
  explicit NoLowRegions(int regions)
      : Error("all " + std::to_string(regions) +
              " regions judged high-contamination on the first iteration; nothing to train on") {
  }
};
struct PartitionMismatch final : Error {
  PartitionMismatch() : Error("low-region sets come from different candidate universes") {}
};

/// Stage-1 termination: the low-contamination membership no longer
/// expands (equality or shrinkage both terminate). Throws
/// PartitionMismatch when either set steps outside the universe.
bool converged(const std::set<int>& prev_low_members, const std::set<int>& cur_low_members,
               const std::set<int>& universe);

struct IterationStats {
  int iteration = 0;
  int regions_low = 0;
  int regions_high = 0;
  std::size_t train_size = 0;
  std::size_t errors = 0;
  std::size_t rules_added = 0;
  std::optional<double> sp;  // purity of the accumulated train set, labels permitting
};

struct StageState {
  int iteration = 0;
  RuleSet rules;
  std::set<int> low_members;  // union of low-region member ids
  std::set<int> train_set;
  std::vector<int> error_set;
  std::vector<Region> regions;  // final partition with verdicts
  bool reached_fixed_point = false;
  std::vector<IterationStats> history;
};

struct Stage2Stats {
  int regions_processed = 0;
  int regions_kept_whole = 0;  // too small to project
  int subregions = 0;
  int subregions_removed = 0;
  std::size_t sequences_removed = 0;
};

struct LayoutRow {
  int seq_id = 0;
  double x = 0.0;
  double y = 0.0;
  int region_id = 0;
};

struct PlutoClusterRow {
  int cluster = 0;
  std::size_t size = 0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double dom = 0.0;
  bool high = false;
  double ratio = 0.0;  // estimated anomaly ratio applied to low clusters
  std::size_t removed = 0;
};

struct PhaseTiming {
  std::string phase;
  double ms = 0.0;
};

struct PurgeReport {
  int schema_version = 1;
  std::string strategy;
  std::string backend;
  std::uint64_t seed = 0;
  std::size_t n_input = 0;
  std::size_t n_candidates = 0;
  std::size_t n_validation = 0;
  int iterations = 0;
  bool reached_fixed_point = false;
  std::vector<IterationStats> stage1;
  Stage2Stats stage2;
  std::size_t removed = 0;
  std::size_t retained = 0;
  std::optional<double> sp;
  std::optional<double> crr;
  std::vector<std::string> rule_texts;
  std::vector<PlutoClusterRow> pluto_clusters;
  std::vector<PhaseTiming> timings;

  /// Deterministic report body; wall-clock timings are serialized
  /// separately so identical runs stay byte-identical.
  nlohmann::json to_json() const;
  nlohmann::json timings_json() const;
};

struct PipelineOptions {
  PurgeConfig purge;
  ProjectionConfig projection;
  EmbedderConfig embedder;
  BackendConfig backend;
  PlutoParams pluto;
  std::string strategy = "logpurge";  // or "pluto"
  int detector_order = 3;
  int detector_top_k = 5;
  bool with_labels = false;  // research mode: ground truth as reference labels
  bool stage2_enabled = true;  // ablation switch for the subdivision stage
  bool dump_layouts = false;
  unsigned workers = 0;
};

struct PipelineResult {
  PurgeReport report;
  std::vector<int> purified_ids;  // ascending seq ids into the input
  RuleSet rules;
  std::vector<LayoutRow> layouts;
};

/// Inputs shared by the stage functions.
struct PipelineContext {
  std::span<const LogSequence> sequences;
  std::span<const Template> vocabulary;
  const EmbeddingMatrix* embeddings = nullptr;
  std::vector<int> candidates;  // purification universe, ascending
  std::vector<int> validation;  // held out for the error loop, ascending
};

/// Seeded 20/80 validation/candidate split over the sequence ids.
void split_validation(std::size_t n, const PurgeConfig& cfg, std::vector<int>& candidates,
                      std::vector<int>& validation);

/// Stage 1: iterative rule-enhanced purification. Clusters candidates,
/// judges every region through the backend, accumulates low regions
/// into the train set, trains the lightweight detector, turns
/// validation disagreements into new rules, and stops at the fixed
/// point or the iteration cap.
StageState stage1_iterate(const PipelineContext& ctx, const PipelineOptions& opts,
                          EvaluatorBackend& backend, std::vector<IterationStats>* stats_out);

/// Stage 2: projects every low region to 2-D, subdivides it, judges
/// each sub-region once with the frozen rule set, and removes
/// high-verdict sub-regions from the train set.
std::set<int> stage2_subdivide_purify(const PipelineContext& ctx, const PipelineOptions& opts,
                                      StageState& state, EvaluatorBackend& backend,
                                      Stage2Stats& stats, std::vector<LayoutRow>* layouts);

/// Full composition: embed, split, stage 1, stage 2 (or the dominance
/// baseline), metrics, report. All randomness derives from
/// opts.purge.seed.
PipelineResult run_pipeline(std::span<const LogSequence> sequences,
                            std::span<const Template> vocabulary,
                            const PipelineOptions& opts);

}  // namespace logpurge
