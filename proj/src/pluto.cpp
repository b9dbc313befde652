#include "logpurge/pluto.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "logpurge/rng.hpp"

namespace logpurge {

namespace {

constexpr double kRankTol = 1e-12;
constexpr double kPowerTol = 1e-8;
constexpr int kPowerIters = 500;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

/// y = A^T (A x), matrix-free.
void apply_gram(const EmbeddingMatrix& a, std::span<const double> x, std::vector<double>& av,
                std::vector<double>& y) {
  const std::size_t m = a.rows();
  const std::size_t d = a.dim;
  for (std::size_t i = 0; i < m; ++i) av[i] = dot(a.row(i), x);
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = a.row(i);
    for (std::size_t j = 0; j < d; ++j) y[j] += row[j] * av[i];
  }
}

struct TopTwo {
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  std::vector<double> v1;
  std::vector<double> v2;
};

/// Top-two singular structure by block power iteration on A^T A with
/// Rayleigh-Ritz extraction: the 2x2 projected eigenproblem keeps the
/// pair accurate even when the two leading values nearly coincide.
TopTwo top_two_singular(const EmbeddingMatrix& a) {
  const std::size_t d = a.dim;
  const std::size_t m = a.rows();
  TopTwo out;
  out.v1.assign(d, 0.0);
  out.v2.assign(d, 0.0);

  if (d == 1) {
    double s = 0.0;
    for (double x : a.data) s += x * x;
    out.sigma1 = std::sqrt(s);
    out.v1[0] = 1.0;
    return out;
  }

  Rng rng(0x5D1C0F5EULL + d + m);  // fixed stream; the limit is seed-insensitive
  std::vector<double> u(d), w(d);
  for (double& x : u) x = rng.gaussian();
  for (double& x : w) x = rng.gaussian();

  auto orthonormalize = [&](std::vector<double>& p, std::vector<double>& q) {
    const double np = norm(p);
    if (np < kRankTol) return false;
    for (double& x : p) x /= np;
    const double c = dot(q, p);
    for (std::size_t j = 0; j < d; ++j) q[j] -= c * p[j];
    const double nq = norm(q);
    if (nq < kRankTol) return false;
    for (double& x : q) x /= nq;
    return true;
  };
  orthonormalize(u, w);

  std::vector<double> av(m), bu(d), bw(d);
  double ritz1 = 0.0, ritz2 = 0.0;
  double e1 = 0.0, e2 = 0.0;  // 2x2 eigenvalues of the projected problem
  double r11 = 1.0, r12 = 0.0, r21 = 0.0, r22 = 1.0;  // Ritz rotation

  for (int iter = 0; iter < kPowerIters; ++iter) {
    apply_gram(a, u, av, bu);
    apply_gram(a, w, av, bw);

    // Projected 2x2 problem on the current orthonormal basis.
    const double s11 = dot(u, bu);
    const double s12 = 0.5 * (dot(u, bw) + dot(w, bu));
    const double s22 = dot(w, bw);
    const double mean = 0.5 * (s11 + s22);
    const double disc = std::sqrt(std::max(0.0, 0.25 * (s11 - s22) * (s11 - s22) + s12 * s12));
    e1 = mean + disc;
    e2 = mean - disc;
    // Eigenvector of the 2x2 for e1 is (s12, e1 - s11) unless degenerate.
    if (std::abs(s12) > 1e-300) {
      const double n1 = std::hypot(s12, e1 - s11);
      r11 = s12 / n1;
      r21 = (e1 - s11) / n1;
      r12 = -r21;
      r22 = r11;
    } else {
      const bool first_bigger = s11 >= s22;
      r11 = first_bigger ? 1.0 : 0.0;
      r21 = first_bigger ? 0.0 : 1.0;
      r12 = -r21;
      r22 = r11;
    }

    const double new1 = std::sqrt(std::max(0.0, e1));
    const double new2 = std::sqrt(std::max(0.0, e2));
    const bool converged = iter > 0 &&
                           std::abs(new1 - ritz1) <= kPowerTol * std::max(1.0, new1) &&
                           std::abs(new2 - ritz2) <= kPowerTol * std::max(1.0, new2);
    ritz1 = new1;
    ritz2 = new2;
    if (converged) break;  // rotation r belongs to the current basis

    // Next basis: B applied to the Ritz directions, re-orthonormalized.
    std::vector<double> next_u(d), next_w(d);
    for (std::size_t j = 0; j < d; ++j) {
      next_u[j] = r11 * bu[j] + r21 * bw[j];
      next_w[j] = r12 * bu[j] + r22 * bw[j];
    }
    if (norm(next_u) < kRankTol) {
      ritz1 = ritz2 = 0.0;
      r11 = 1.0; r12 = 0.0; r21 = 0.0; r22 = 1.0;
      break;
    }
    if (!orthonormalize(next_u, next_w)) {
      // Rank-one spectrum: keep the dominant direction, zero the rest.
      const double nu = norm(next_u);
      if (nu > 0)
        for (double& x : next_u) x /= nu;
      u = std::move(next_u);
      w.assign(d, 0.0);
      apply_gram(a, u, av, bu);
      ritz1 = std::sqrt(std::max(0.0, dot(u, bu)));
      ritz2 = 0.0;
      r11 = 1.0; r12 = 0.0; r21 = 0.0; r22 = 1.0;
      break;
    }
    u = std::move(next_u);
    w = std::move(next_w);
  }

  // Ritz vectors in the original space.
  for (std::size_t j = 0; j < d; ++j) {
    out.v1[j] = r11 * u[j] + r21 * w[j];
    out.v2[j] = r12 * u[j] + r22 * w[j];
  }
  const double n1 = norm(out.v1);
  if (n1 > 0)
    for (double& x : out.v1) x /= n1;
  const double n2 = norm(out.v2);
  if (n2 > 0)
    for (double& x : out.v2) x /= n2;
  out.sigma1 = ritz1;
  out.sigma2 = ritz2;
  return out;
}

}  // namespace

void PlutoParams::validate() const {
  if (!(alpha > 0 && alpha <= 1)) throw InvalidConfig("pluto.alpha must be in (0, 1]");
  if (!(spike_percentile > 0 && spike_percentile < 100))
    throw InvalidConfig("pluto.spike_percentile must be in (0, 100)");
}

bool ClusterSpectrum::infinite() const { return std::isinf(dom); }

EmbeddingMatrix gather_rows(const EmbeddingMatrix& points, std::span<const int> ids) {
  EmbeddingMatrix out;
  out.dim = points.dim;
  out.provider_tag = points.provider_tag;
  out.data.reserve(ids.size() * points.dim);
  for (int id : ids) {
    const auto r = points.row(id);
    out.data.insert(out.data.end(), r.begin(), r.end());
  }
  return out;
}

void mean_center_rows(EmbeddingMatrix& m) {
  const std::size_t n = m.rows();
  if (n == 0) return;
  std::vector<double> mean(m.dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = m.row(i);
    for (std::size_t d = 0; d < m.dim; ++d) mean[d] += r[d];
  }
  for (double& x : mean) x /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = m.row(i);
    for (std::size_t d = 0; d < m.dim; ++d) r[d] -= mean[d];
  }
}

ClusterSpectrum dominance(const EmbeddingMatrix& cluster) {
  if (cluster.rows() < 2) throw ClusterTooSmall();

  TopTwo top = top_two_singular(cluster);
  ClusterSpectrum spec;
  spec.lambda1 = top.sigma1;
  spec.lambda2 = top.sigma2;
  spec.v2 = std::move(top.v2);
  spec.dom = spec.lambda2 < kRankTol ? std::numeric_limits<double>::infinity()
                                     : spec.lambda1 / spec.lambda2;
  return spec;
}

double estimate_anomaly_ratio(const ClusterSpectrum& spectrum, const PlutoParams& params,
                              ContaminationKind kind) {
  params.validate();
  if (spectrum.infinite()) throw InfiniteDominance();
  const double r = kind == ContaminationKind::low ? params.alpha / spectrum.dom
                                                  : params.alpha * spectrum.dom;
  return std::clamp(r, 0.0, 1.0);
}

SpikeSplit spike_split(std::span<const double> doms, const PlutoParams& params) {
  SpikeSplit split;
  std::vector<int> finite;
  for (std::size_t i = 0; i < doms.size(); ++i) {
    if (std::isinf(doms[i])) {
      split.high_ids.push_back(static_cast<int>(i));  // extreme concentration
    } else {
      finite.push_back(static_cast<int>(i));
    }
  }
  if (finite.empty()) throw AllInfinite();

  if (params.spike_method == PlutoParams::SpikeMethod::percentile) {
    std::vector<double> values;
    for (int i : finite) values.push_back(doms[i]);
    std::sort(values.begin(), values.end());
    const std::size_t rank = static_cast<std::size_t>(
        std::ceil(params.spike_percentile / 100.0 * static_cast<double>(values.size())));
    const double cut = values[std::min(values.size() - 1, std::max<std::size_t>(rank, 1) - 1)];
    for (int i : finite)
      (doms[i] > cut ? split.high_ids : split.low_ids).push_back(i);
    std::sort(split.high_ids.begin(), split.high_ids.end());
    return split;
  }

  // max_gap: descending sort, cut at the largest consecutive gap.
  std::sort(finite.begin(), finite.end(),
            [&](int a, int b) { return doms[a] > doms[b]; });
  double best_gap = 0.0;
  std::size_t cut_after = 0;  // number of high clusters among the finite
  for (std::size_t i = 0; i + 1 < finite.size(); ++i) {
    const double gap = doms[finite[i]] - doms[finite[i + 1]];
    if (gap > best_gap) {
      best_gap = gap;
      cut_after = i + 1;
    }
  }
  if (best_gap <= 0.0) cut_after = 0;  // flat curve: no spike, everything low
  for (std::size_t i = 0; i < finite.size(); ++i)
    (i < cut_after ? split.high_ids : split.low_ids).push_back(finite[i]);
  std::sort(split.high_ids.begin(), split.high_ids.end());
  std::sort(split.low_ids.begin(), split.low_ids.end());
  return split;
}

std::vector<int> filter_low_contamination(const EmbeddingMatrix& points,
                                          std::span<const int> cluster_members,
                                          const ClusterSpectrum& spectrum, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw InvalidConfig("ratio must be in [0, 1]");
  const std::size_t n = cluster_members.size();
  const std::size_t remove =
      static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n)));
  if (remove == 0 || n == 0) return {};

  std::vector<double> centroid(points.dim, 0.0);
  for (int id : cluster_members) {
    const auto r = points.row(id);
    for (std::size_t d = 0; d < points.dim; ++d) centroid[d] += r[d];
  }
  for (double& x : centroid) x /= static_cast<double>(n);

  std::vector<std::pair<double, int>> scored;
  scored.reserve(n);
  for (int id : cluster_members) {
    const auto r = points.row(id);
    double proj = 0.0;
    for (std::size_t d = 0; d < points.dim; ++d)
      proj += (r[d] - centroid[d]) * spectrum.v2[d];
    scored.emplace_back(std::abs(proj), id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int> removed;
  for (std::size_t i = 0; i < std::min(remove, n); ++i) removed.push_back(scored[i].second);
  std::sort(removed.begin(), removed.end());
  return removed;
}

}  // namespace logpurge
