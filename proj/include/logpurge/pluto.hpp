#pragma once

#include <span>
#include <vector>

#include "logpurge/core.hpp"

namespace logpurge {

struct ClusterTooSmall final : Error {
  ClusterTooSmall() : Error("cluster needs at least 2 rows for a spectrum") {}
};
struct InfiniteDominance final : Error {
  InfiniteDominance() : Error("dominance is infinite; anomaly ratio undefined") {}
};
struct AllInfinite final : Error {
  AllInfinite() : Error("no finite dominance values to split on") {}
};

struct PlutoParams {
  double alpha = 0.1;  // scaling coefficient, (0, 1]
  enum class SpikeMethod { max_gap, percentile } spike_method = SpikeMethod::max_gap;
  double spike_percentile = 90.0;
  bool center_rows = true;  // pipeline-level centering before the SVD

  void validate() const;
};

/// Top-two singular structure of a cluster embedding matrix.
/// dom is +inf when lambda2 collapses below 1e-12.
struct ClusterSpectrum {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  std::vector<double> v2;  // second right-singular vector
  double dom = 0.0;

  bool infinite() const;
};

/// Top-two singular triplets of the matrix exactly as given, by
/// orthogonalized power iteration (tolerance 1e-8, at most 500 rounds).
/// Callers that want variation directions rather than mean structure
/// center the rows first (mean_center_rows).
ClusterSpectrum dominance(const EmbeddingMatrix& cluster);

/// Row-centered copy of the given rows of a matrix.
EmbeddingMatrix gather_rows(const EmbeddingMatrix& points, std::span<const int> ids);
void mean_center_rows(EmbeddingMatrix& m);

/// alpha / dom for low-contamination clusters, alpha * dom for
/// high-contamination ones; clamped to [0, 1].
enum class ContaminationKind { low, high };
double estimate_anomaly_ratio(const ClusterSpectrum& spectrum, const PlutoParams& params,
                              ContaminationKind kind);

struct SpikeSplit {
  std::vector<int> high_ids;
  std::vector<int> low_ids;
};

/// Splits cluster ids by dominance. max_gap: sort descending and cut at
/// the largest consecutive gap (no positive gap means everything is
/// low). Infinite dominance always lands on the high side.
SpikeSplit spike_split(std::span<const double> doms, const PlutoParams& params);

/// Scores members by |<x - centroid, v2>| and removes the top
/// ceil(r * n) scorers (ties broken by lower id).
std::vector<int> filter_low_contamination(const EmbeddingMatrix& points,
                                          std::span<const int> cluster_members,
                                          const ClusterSpectrum& spectrum, double ratio);

}  // namespace logpurge
