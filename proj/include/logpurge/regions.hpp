#pragma once

#include <span>
#include <vector>

#include "logpurge/core.hpp"

namespace logpurge {

struct RegionTooSmall final : Error {
  explicit RegionTooSmall(const std::string& msg = "region too small for density")
      : Error(msg) {}
};

struct Partition {
  std::vector<int> assignments;   // point index -> region id
  std::vector<double> centroids;  // row-major K x dim
  std::size_t dim = 0;
  double inertia = 0.0;

  int k() const { return dim == 0 ? 0 : static_cast<int>(centroids.size() / dim); }
  std::span<const double> centroid(int region) const {
    return {centroids.data() + static_cast<std::size_t>(region) * dim, dim};
  }
  std::vector<std::vector<int>> members() const;
};

struct KmeansOptions {
  int max_iters = 300;
  double tol = 1e-6;      // max centroid shift
  unsigned workers = 0;
};

/// k-means++ seeding followed by Lloyd iterations; empty clusters are
/// reseeded from the point farthest from its assigned centroid.
Partition kmeans(const EmbeddingMatrix& points, int k, std::uint64_t seed,
                 const KmeansOptions& opts = {});

/// Mean distance to the k_nn nearest same-region neighbors, smoothed:
/// density = 1 / (mean_dist + epsilon). Throws RegionTooSmall when the
/// region has fewer than k_nn + 1 members.
double local_density(const EmbeddingMatrix& points, std::span<const int> region_members,
                     int member, int k_nn, double epsilon);

/// Densities for every region member (same formula, one O(n^2) pass).
std::vector<double> local_densities(const EmbeddingMatrix& points,
                                    std::span<const int> region_members, int k_nn,
                                    double epsilon);

/// 0.5 * median pairwise distance within the region; the adaptive
/// default for the center-separation radius. Large regions are
/// subsampled with a fixed stride so the value stays deterministic.
double auto_r_min(const EmbeddingMatrix& points, std::span<const int> region_members);

/// Density-peak representative selection: members sorted by density
/// (ties by lower id), greedily accepted as centers when at least
/// r_min away from every accepted center, then M nearest non-center
/// members attach to each center. Never returns an empty set.
/// max_centers = 0 keeps the default budget of one center per
/// 10 * (M + 1) members, which holds the representative set under a
/// tenth of the region.
RepresentativeSet select_representatives(const EmbeddingMatrix& points,
                                         std::span<const int> region_members, int k_nn,
                                         double r_min, int M, double epsilon = 1e-6,
                                         std::size_t max_centers = 0);

/// Mean silhouette over all points for a given assignment (clusters in
/// [0, k)); singleton clusters contribute 0.
double mean_silhouette(const EmbeddingMatrix& points, std::span<const int> assignments, int k);

}  // namespace logpurge
