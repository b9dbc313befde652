#pragma once

#include <vector>

#include "logpurge/core.hpp"

namespace logpurge {

/// Configuration for the planted-anomaly corpus generator.
///
/// anomaly_ratio is the corpus fraction that is anomalous;
/// residual_rate is the corpus fraction that is sparse-mode anomalous
/// (a normal-looking sequence carrying a few injected anomaly
/// templates), so residual_rate <= anomaly_ratio and the burst-mode
/// fraction is anomaly_ratio - residual_rate.
struct SynthConfig {
  std::size_t n_sequences = 5000;
  double anomaly_ratio = 0.12;
  int n_normal_patterns = 8;
  int n_anomaly_clusters = 3;
  double residual_rate = 0.03;
  int vocab_size = 64;
  std::uint64_t seed = 1;

  int min_len = 40;
  int max_len = 56;
  int n_residual_templates = 4;
  int n_carrier_patterns = 2;   // sparse anomalies ride on these patterns
  std::uint64_t sample_salt = 0;  // fresh draws with identical vocabulary/patterns

  void validate() const;
};

struct SynthOutput {
  std::vector<LogSequence> sequences;  // every sequence labeled
  std::vector<Template> templates;
  std::vector<int> residual_template_ids;  // the sparse-injection vocabulary
};

/// Generates a labeled corpus: normal traffic from seeded order-2
/// Markov patterns, burst anomalies from dedicated anomaly-template
/// chains (one per cluster), and sparse anomalies as normal walks with
/// 1-2 injected anomaly templates. Same seed, same corpus.
SynthOutput generate(const SynthConfig& cfg);

}  // namespace logpurge
