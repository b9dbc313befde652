#include "logpurge/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "logpurge/regions.hpp"
#include "logpurge/rng.hpp"

namespace logpurge {

namespace {

constexpr double kPerplexityTol = 1e-4;
constexpr int kSearchSteps = 60;
constexpr double kPMin = 1e-12;

/// Shannon entropy (bits) and the conditional row for a given beta
/// (= 1 / (2 sigma^2)). Row i excludes itself.
double row_entropy(const std::vector<double>& sq_dist, std::size_t n, std::size_t i,
                   double beta, std::vector<double>& row) {
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) {
      row[j] = 0.0;
      continue;
    }
    row[j] = std::exp(-beta * sq_dist[i * n + j]);
    sum += row[j];
  }
  if (sum <= 0.0) return 0.0;  // perplexity 1
  double h = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    row[j] /= sum;
    if (row[j] > 0.0) h -= row[j] * std::log2(row[j]);
  }
  return h;
}

std::vector<double> squared_distance_matrix(const EmbeddingMatrix& points) {
  const std::size_t n = points.rows();
  std::vector<double> sq(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = squared_distance(points.row(i), points.row(j));
      sq[i * n + j] = d;
      sq[j * n + i] = d;
    }
  }
  return sq;
}

/// Binary search on beta until the row's perplexity matches the target;
/// the calibrated conditional row is left in `row`. Throws
/// DegenerateRow when every off-diagonal distance is zero.
double calibrate_beta(const std::vector<double>& sq_dist, std::size_t n, std::size_t i,
                      double target_perplexity, std::vector<double>& row) {
  bool any_positive = false;
  for (std::size_t j = 0; j < n && !any_positive; ++j)
    any_positive = j != i && sq_dist[i * n + j] > 0.0;
  if (!any_positive) throw DegenerateRow(static_cast<int>(i));

  const double target_h = std::log2(target_perplexity);
  double beta = 1.0, beta_min = -std::numeric_limits<double>::infinity(),
         beta_max = std::numeric_limits<double>::infinity();
  double h = row_entropy(sq_dist, n, i, beta, row);
  for (int step = 0; step < kSearchSteps; ++step) {
    if (std::abs(std::exp2(h) - target_perplexity) <= kPerplexityTol) break;
    if (h > target_h) {  // too spread out: sharpen
      beta_min = beta;
      beta = std::isinf(beta_max) ? beta * 2.0 : 0.5 * (beta + beta_max);
    } else {
      beta_max = beta;
      beta = std::isinf(beta_min) ? beta / 2.0 : 0.5 * (beta + beta_min);
    }
    h = row_entropy(sq_dist, n, i, beta, row);
  }
  return beta;
}

/// Calibrates beta per row; returns conditionals flattened row-major.
std::vector<double> conditionals(const std::vector<double>& sq_dist, std::size_t n,
                                 double perplexity) {
  std::vector<double> p(n * n, 0.0);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    calibrate_beta(sq_dist, n, i, perplexity, row);
    std::copy(row.begin(), row.end(), p.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  return p;
}

}  // namespace

void ProjectionConfig::validate(std::size_t n) const {
  if (!(perplexity > 0)) throw InvalidConfig("projection.perplexity must be > 0");
  if (3.0 * perplexity >= static_cast<double>(n))
    throw InvalidConfig("projection.perplexity too large: need 3 * perplexity < N");
  if (iterations < 250) throw InvalidConfig("projection.iterations must be >= 250");
  if (!(learning_rate > 0)) throw InvalidConfig("projection.learning_rate must be > 0");
  if (!(early_exaggeration >= 1)) throw InvalidConfig("projection.early_exaggeration must be >= 1");
  if (exaggeration_iters < 0 || exaggeration_iters > iterations)
    throw InvalidConfig("projection.exaggeration_iters out of range");
}

std::vector<double> perplexity_sigmas(const std::vector<double>& distances, std::size_t n,
                                      double target_perplexity) {
  if (distances.size() != n * n) throw InvalidConfig("distance matrix size mismatch");
  std::vector<double> sq(n * n);
  for (std::size_t i = 0; i < n * n; ++i) sq[i] = distances[i] * distances[i];

  std::vector<double> sigmas(n, 0.0);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double beta = calibrate_beta(sq, n, i, target_perplexity, row);
    sigmas[i] = std::sqrt(1.0 / (2.0 * beta));
  }
  return sigmas;
}

std::vector<double> joint_probabilities(const EmbeddingMatrix& points, double perplexity) {
  const std::size_t n = points.rows();
  const auto sq = squared_distance_matrix(points);
  const auto cond = conditionals(sq, n, perplexity);
  std::vector<double> p(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * static_cast<double>(n));
    }
  }
  return p;
}

EmbeddingMatrix TsneResult::as_matrix() const {
  EmbeddingMatrix m;
  m.dim = 2;
  m.provider_tag = "tsne";
  m.data = layout;
  return m;
}

TsneResult tsne(const EmbeddingMatrix& points, const ProjectionConfig& cfg) {
  const std::size_t n = points.rows();
  if (n < 10) throw TooFewPoints("tsne needs at least 10 points");
  cfg.validate(n);

  auto p = joint_probabilities(points, cfg.perplexity);

  Rng rng(derive_seed(cfg.seed, 0x75E3));
  std::vector<double> y(n * 2);
  for (double& v : y) v = rng.gaussian() * 1e-4;
  std::vector<double> inc(n * 2, 0.0);
  std::vector<double> gains(n * 2, 1.0);
  std::vector<double> grad(n * 2, 0.0);
  std::vector<double> qnum(n * n, 0.0);  // (1 + ||yi - yj||^2)^-1

  // Threading pays only for large point sets; the per-iteration fan-out
  // otherwise costs more than the arithmetic.
  const unsigned workers =
      n < 512 ? 1 : (cfg.workers == 0 ? default_workers() : cfg.workers);

  auto kl_divergence = [&](double exaggeration) {
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) z += qnum[i * n + j];
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double pij = std::max(p[i * n + j] / exaggeration, kPMin);
        const double qij = std::max(qnum[i * n + j] / z, kPMin);
        kl += pij * std::log(pij / qij);
      }
    }
    return kl;
  };

  // Exaggerate the attraction phase.
  for (double& v : p) v *= cfg.early_exaggeration;

  TsneResult result;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) {
            qnum[i * n + j] = 0.0;
            continue;
          }
          const double dx = y[i * 2] - y[j * 2];
          const double dy = y[i * 2 + 1] - y[j * 2 + 1];
          qnum[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
        }
      }
    });

    if (iter == cfg.exaggeration_iters) {
      for (double& v : p) v /= cfg.early_exaggeration;
      result.kl_after_exaggeration = kl_divergence(1.0);
    }

    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) z += qnum[i * n + j];
    if (z <= 0.0) z = kPMin;

    parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        double gx = 0.0, gy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          if (i == j) continue;
          const double q = qnum[i * n + j];
          const double mult = (p[i * n + j] - q / z) * q;
          gx += mult * (y[i * 2] - y[j * 2]);
          gy += mult * (y[i * 2 + 1] - y[j * 2 + 1]);
        }
        grad[i * 2] = 4.0 * gx;
        grad[i * 2 + 1] = 4.0 * gy;
      }
    });

    const double momentum = iter < 250 ? 0.5 : 0.8;
    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (int d = 0; d < 2; ++d) {
        const std::size_t k = i * 2 + d;
        // Per-dimension gains: damp oscillation, reward consistent signs.
        const bool same_sign = (grad[k] > 0.0) == (inc[k] > 0.0);
        gains[k] = same_sign ? std::max(0.01, gains[k] * 0.8) : gains[k] + 0.2;
        inc[k] = momentum * inc[k] - cfg.learning_rate * gains[k] * grad[k];
        y[k] += inc[k];
      }
      mean_x += y[i * 2];
      mean_y += y[i * 2 + 1];
    }
    mean_x /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i * 2] -= mean_x;
      y[i * 2 + 1] -= mean_y;
    }
  }

  // Refresh Q for the final objective value.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) {
        qnum[i * n + j] = 0.0;
        continue;
      }
      const double dx = y[i * 2] - y[j * 2];
      const double dy = y[i * 2 + 1] - y[j * 2 + 1];
      qnum[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
    }
  }
  const double exaggeration_left =
      cfg.exaggeration_iters >= cfg.iterations ? cfg.early_exaggeration : 1.0;
  result.kl_final = [&] {
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) z += qnum[i * n + j];
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double pij = std::max(p[i * n + j] / exaggeration_left, kPMin);
        const double qij = std::max(qnum[i * n + j] / z, kPMin);
        kl += pij * std::log(pij / qij);
      }
    }
    return kl;
  }();
  result.layout = std::move(y);
  return result;
}

SubdivisionResult subdivide(const EmbeddingMatrix& layout, int min_size, std::uint64_t seed) {
  const std::size_t n = layout.rows();
  if (min_size < 1) throw InvalidConfig("min_size must be >= 1");
  if (n < 2 * static_cast<std::size_t>(min_size))
    throw TooFewPoints("subdivide needs at least 2 * min_size points");

  SubdivisionResult best;
  std::vector<int> best_assign;
  for (int k = 2; k <= 8 && static_cast<std::size_t>(k) <= n; ++k) {
    Partition part = kmeans(layout, k, derive_seed(seed, 0x5D1B, k));
    const double sil = mean_silhouette(layout, part.assignments, k);
    if (best_assign.empty() || sil > best.silhouette) {
      best.silhouette = sil;
      best.chosen_k = k;
      best_assign = part.assignments;
    }
  }
  best.low_confidence = best.silhouette < 0.2;

  // Merge undersized groups into their nearest sibling by centroid.
  std::vector<std::vector<int>> groups(best.chosen_k);
  for (std::size_t i = 0; i < n; ++i) groups[best_assign[i]].push_back(static_cast<int>(i));
  groups.erase(std::remove_if(groups.begin(), groups.end(),
                              [](const auto& g) { return g.empty(); }),
               groups.end());

  auto centroid_of = [&](const std::vector<int>& g) {
    std::vector<double> c(2, 0.0);
    for (int i : g) {
      c[0] += layout.row(i)[0];
      c[1] += layout.row(i)[1];
    }
    c[0] /= static_cast<double>(g.size());
    c[1] /= static_cast<double>(g.size());
    return c;
  };

  bool merged = true;
  while (merged && groups.size() > 1) {
    merged = false;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (groups[g].size() >= static_cast<std::size_t>(min_size)) continue;
      const auto cg = centroid_of(groups[g]);
      std::size_t nearest = g;
      double nearest_d = std::numeric_limits<double>::infinity();
      for (std::size_t h = 0; h < groups.size(); ++h) {
        if (h == g) continue;
        const auto ch = centroid_of(groups[h]);
        const double d = std::hypot(cg[0] - ch[0], cg[1] - ch[1]);
        if (d < nearest_d) {
          nearest_d = d;
          nearest = h;
        }
      }
      auto& dst = groups[nearest];
      dst.insert(dst.end(), groups[g].begin(), groups[g].end());
      std::sort(dst.begin(), dst.end());
      groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(g));
      merged = true;
      break;
    }
  }
  for (auto& g : groups) std::sort(g.begin(), g.end());
  best.groups = std::move(groups);
  return best;
}

}  // namespace logpurge
