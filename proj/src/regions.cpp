#include "logpurge/regions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "logpurge/rng.hpp"

namespace logpurge {

std::vector<std::vector<int>> Partition::members() const {
  std::vector<std::vector<int>> out(k());
  for (std::size_t i = 0; i < assignments.size(); ++i)
    out[assignments[i]].push_back(static_cast<int>(i));
  return out;
}

namespace {

int nearest_centroid(const EmbeddingMatrix& points, std::size_t i,
                     const std::vector<double>& centroids, std::size_t dim, int k,
                     double* best_out = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  const auto p = points.row(i);
  for (int c = 0; c < k; ++c) {
    const double d =
        squared_distance(p, {centroids.data() + static_cast<std::size_t>(c) * dim, dim});
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (best_out) *best_out = best_d;
  return best;
}

}  // namespace

Partition kmeans(const EmbeddingMatrix& points, int k, std::uint64_t seed,
                 const KmeansOptions& opts) {
  const std::size_t n = points.rows();
  const std::size_t dim = points.dim;
  if (k < 1) throw InvalidConfig("kmeans k must be >= 1");
  if (n < static_cast<std::size_t>(k))
    throw TooFewPoints("kmeans needs at least k points (" + std::to_string(n) + " < " +
                       std::to_string(k) + ")");

  Rng rng(derive_seed(seed, 0x6B6D));
  std::vector<double> centroids(static_cast<std::size_t>(k) * dim);

  // k-means++ seeding.
  {
    const std::size_t first = rng.bounded(n);
    std::copy(points.row(first).begin(), points.row(first).end(), centroids.begin());
    std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = squared_distance(
            points.row(i), {centroids.data() + static_cast<std::size_t>(c - 1) * dim, dim});
        min_sq[i] = std::min(min_sq[i], d);
        total += min_sq[i];
      }
      std::size_t chosen = 0;
      if (total > 0.0) {
        const double target = rng.uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          acc += min_sq[i];
          if (acc >= target) {
            chosen = i;
            break;
          }
        }
      } else {
        chosen = rng.bounded(n);
      }
      std::copy(points.row(chosen).begin(), points.row(chosen).end(),
                centroids.begin() + static_cast<std::size_t>(c) * dim);
    }
  }

  const unsigned workers =
      n * dim < 100000 ? 1 : (opts.workers == 0 ? default_workers() : opts.workers);
  std::vector<int> assignments(n, 0);
  std::vector<double> point_dist(n, 0.0);

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i)
        assignments[i] = nearest_centroid(points, i, centroids, dim, k, &point_dist[i]);
    });

    std::vector<double> sums(static_cast<std::size_t>(k) * dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const int c = assignments[i];
      ++counts[c];
      const auto p = points.row(i);
      double* s = sums.data() + static_cast<std::size_t>(c) * dim;
      for (std::size_t d = 0; d < dim; ++d) s[d] += p[d];
    }

    // Reseed empty clusters from the globally farthest point.
    for (int c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t farthest = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[assignments[i]] > 1 && point_dist[i] > far_d) {
          far_d = point_dist[i];
          farthest = i;
        }
      }
      --counts[assignments[farthest]];
      const auto p = points.row(farthest);
      double* old_sum = sums.data() + static_cast<std::size_t>(assignments[farthest]) * dim;
      for (std::size_t d = 0; d < dim; ++d) old_sum[d] -= p[d];
      assignments[farthest] = c;
      counts[c] = 1;
      point_dist[farthest] = 0.0;
      double* s = sums.data() + static_cast<std::size_t>(c) * dim;
      for (std::size_t d = 0; d < dim; ++d) s[d] = p[d];
    }

    double max_shift = 0.0;
    for (int c = 0; c < k; ++c) {
      double shift = 0.0;
      double* s = sums.data() + static_cast<std::size_t>(c) * dim;
      double* old_c = centroids.data() + static_cast<std::size_t>(c) * dim;
      for (std::size_t d = 0; d < dim; ++d) {
        const double nc = s[d] / static_cast<double>(counts[c]);
        const double diff = nc - old_c[d];
        shift += diff * diff;
        old_c[d] = nc;
      }
      max_shift = std::max(max_shift, std::sqrt(shift));
    }
    if (max_shift < opts.tol) break;
  }

  Partition part;
  part.dim = dim;
  part.centroids = std::move(centroids);
  double inertia = 0.0;
  part.assignments.assign(n, 0);
  parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      part.assignments[i] =
          nearest_centroid(points, i, part.centroids, dim, k, &point_dist[i]);
  });
  for (std::size_t i = 0; i < n; ++i) inertia += point_dist[i];
  part.inertia = inertia;
  return part;
}

std::vector<double> local_densities(const EmbeddingMatrix& points,
                                    std::span<const int> region_members, int k_nn,
                                    double epsilon) {
  const std::size_t n = region_members.size();
  if (n < static_cast<std::size_t>(k_nn) + 1)
    throw RegionTooSmall("region of " + std::to_string(n) + " members needs k_nn+1 = " +
                         std::to_string(k_nn + 1));
  std::vector<double> densities(n, 0.0);
  std::vector<double> dists(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      dists[j] = i == j ? std::numeric_limits<double>::infinity()
                        : euclidean(points.row(region_members[i]),
                                    points.row(region_members[j]));
    }
    std::nth_element(dists.begin(), dists.begin() + (k_nn - 1), dists.end());
    double mean = 0.0;
    // nth_element left-partitions: first k_nn entries are the nearest.
    for (int t = 0; t < k_nn; ++t) mean += dists[t];
    mean /= k_nn;
    densities[i] = 1.0 / (mean + epsilon);
  }
  return densities;
}

double local_density(const EmbeddingMatrix& points, std::span<const int> region_members,
                     int member, int k_nn, double epsilon) {
  auto it = std::find(region_members.begin(), region_members.end(), member);
  if (it == region_members.end()) throw Error("member not in region");
  const auto densities = local_densities(points, region_members, k_nn, epsilon);
  return densities[static_cast<std::size_t>(it - region_members.begin())];
}

double auto_r_min(const EmbeddingMatrix& points, std::span<const int> region_members) {
  const std::size_t n = region_members.size();
  if (n < 2) return 0.0;
  // Deterministic strided subsample keeps this O(1) in region size.
  constexpr std::size_t kCap = 512;
  std::vector<int> sample;
  if (n <= kCap) {
    sample.assign(region_members.begin(), region_members.end());
  } else {
    const double stride = static_cast<double>(n) / kCap;
    for (std::size_t t = 0; t < kCap; ++t)
      sample.push_back(region_members[static_cast<std::size_t>(t * stride)]);
  }
  std::vector<double> dists;
  dists.reserve(sample.size() * (sample.size() - 1) / 2);
  for (std::size_t i = 0; i < sample.size(); ++i) {
    for (std::size_t j = i + 1; j < sample.size(); ++j) {
      dists.push_back(euclidean(points.row(sample[i]), points.row(sample[j])));
    }
  }
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  return 0.5 * dists[dists.size() / 2];
}

RepresentativeSet select_representatives(const EmbeddingMatrix& points,
                                         std::span<const int> region_members, int k_nn,
                                         double r_min, int M, double epsilon,
                                         std::size_t max_centers) {
  RepresentativeSet reps;
  const std::size_t n = region_members.size();
  if (n == 0) return reps;
  if (n == 1) {
    reps.center_ids.push_back(region_members[0]);
    reps.neighbor_ids.push_back({});
    return reps;
  }

  // Density with k capped so that small regions still resolve.
  const int effective_k = std::min<int>(k_nn, static_cast<int>(n) - 1);
  const auto densities = local_densities(points, region_members, effective_k, epsilon);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (densities[a] != densities[b]) return densities[a] > densities[b];
    return region_members[a] < region_members[b];
  });

  // Pairwise distances concentrate in high dimension, so the radius
  // alone barely thins a tight cloud; the center budget keeps the
  // representative set well under a tenth of the region.
  const std::size_t center_cap =
      max_centers > 0
          ? max_centers
          : std::max<std::size_t>(1, n / (10 * (static_cast<std::size_t>(M) + 1)));

  std::vector<std::size_t> center_local;
  for (std::size_t idx : order) {
    if (center_local.size() >= center_cap) break;
    bool ok = true;
    for (std::size_t c : center_local) {
      if (euclidean(points.row(region_members[idx]), points.row(region_members[c])) < r_min) {
        ok = false;
        break;
      }
    }
    if (ok) center_local.push_back(idx);
  }
  if (center_local.empty()) center_local.push_back(order.front());

  std::vector<bool> is_center(n, false);
  for (std::size_t c : center_local) is_center[c] = true;

  for (std::size_t c : center_local) {
    reps.center_ids.push_back(region_members[c]);
    std::vector<std::pair<double, int>> candidates;
    for (std::size_t j = 0; j < n; ++j) {
      if (is_center[j]) continue;
      candidates.emplace_back(
          euclidean(points.row(region_members[c]), points.row(region_members[j])),
          region_members[j]);
    }
    const std::size_t take = std::min<std::size_t>(M, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + take, candidates.end());
    std::vector<int> neighbors;
    for (std::size_t t = 0; t < take; ++t) neighbors.push_back(candidates[t].second);
    reps.neighbor_ids.push_back(std::move(neighbors));
  }
  return reps;
}

double mean_silhouette(const EmbeddingMatrix& points, std::span<const int> assignments, int k) {
  const std::size_t n = points.rows();
  if (n == 0 || k < 2) return 0.0;
  std::vector<std::size_t> sizes(k, 0);
  for (int a : assignments) ++sizes[a];

  double total = 0.0;
  std::vector<double> mean_to(k);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(mean_to.begin(), mean_to.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      mean_to[assignments[j]] += euclidean(points.row(i), points.row(j));
    }
    const int own = assignments[i];
    if (sizes[own] <= 1) continue;  // singleton contributes 0
    const double a = mean_to[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c == own || sizes[c] == 0) continue;
      b = std::min(b, mean_to[c] / static_cast<double>(sizes[c]));
    }
    if (!std::isfinite(b)) continue;
    const double denom = std::max(a, b);
    if (denom > 0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

}  // namespace logpurge
