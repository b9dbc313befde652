#pragma once

#include <span>
#include <vector>

#include "logpurge/core.hpp"

namespace logpurge {

struct DegenerateRow final : Error {
  explicit DegenerateRow(int row)
      : Error("distance row " + std::to_string(row) + " is all zeros") {}
};

struct ProjectionConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  std::uint64_t seed = 0;
  unsigned workers = 0;

  void validate(std::size_t n) const;  // enforces 3 * perplexity < n, iterations >= 250
};

/// Per-row Gaussian bandwidths such that each conditional distribution
/// hits the target perplexity within 1e-4 (binary search, <= 60 steps).
std::vector<double> perplexity_sigmas(const std::vector<double>& distances, std::size_t n,
                                      double target_perplexity);

struct TsneResult {
  std::vector<double> layout;  // row-major N x 2
  double kl_after_exaggeration = 0.0;
  double kl_final = 0.0;

  EmbeddingMatrix as_matrix() const;
};

/// Exact O(N^2) t-SNE to two dimensions. Symmetrized joint P from
/// calibrated conditionals, Student-t Q, gradient descent with momentum
/// 0.5 -> 0.8 after the exaggeration phase. Deterministic given seed.
TsneResult tsne(const EmbeddingMatrix& points, const ProjectionConfig& cfg);

/// Symmetric joint probabilities for a point set (exposed for property
/// tests; sums to 1).
std::vector<double> joint_probabilities(const EmbeddingMatrix& points, double perplexity);

struct SubdivisionResult {
  std::vector<std::vector<int>> groups;  // indices into the layout, partitioning [0, N)
  int chosen_k = 0;
  double silhouette = 0.0;
  bool low_confidence = false;  // best silhouette below 0.2
};

/// K-means over the 2-D layout with K chosen by best silhouette in
/// [2, 8]; groups smaller than min_size merge into their nearest
/// sibling.
SubdivisionResult subdivide(const EmbeddingMatrix& layout, int min_size, std::uint64_t seed);

}  // namespace logpurge
