#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>

#include "logpurge/purge.hpp"
#include "logpurge/synth.hpp"

namespace logpurge {

/// Flat namespaced configuration for a run. Every key has a default;
/// unknown keys are rejected so typos cannot silently change behavior.
/// The fully materialized key/value map is written next to every run's
/// outputs as the effective-config snapshot.
struct RunConfig {
  PipelineOptions pipeline;
  SynthConfig synth;
  int parser_depth = 4;
  double parser_sim_threshold = 0.4;
  int parser_max_children = 100;
  std::filesystem::path cache_dir;

  /// Parses a flat {"regions.K": 20, ...} JSON object.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::filesystem::path& path);

  /// All keys materialized with their effective values.
  nlohmann::json to_json() const;
  void write_snapshot(const std::filesystem::path& path) const;
};

}  // namespace logpurge
