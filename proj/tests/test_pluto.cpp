#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "logpurge/pluto.hpp"
#include "logpurge/rng.hpp"
#include "test_util.hpp"

using namespace logpurge;

namespace {

EmbeddingMatrix matrix_from(std::vector<std::vector<double>> rows) {
  EmbeddingMatrix m;
  m.dim = rows.front().size();
  for (const auto& r : rows) m.data.insert(m.data.end(), r.begin(), r.end());
  return m;
}

EmbeddingMatrix rotate2d(const EmbeddingMatrix& m, double angle) {
  EmbeddingMatrix out = m;
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out.row(i)[0] = c * m.row(i)[0] - s * m.row(i)[1];
    out.row(i)[1] = s * m.row(i)[0] + c * m.row(i)[1];
  }
  return out;
}

}  // namespace

TEST_CASE("identical nonzero rows collapse the second singular value") {
  auto m = matrix_from({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
  const auto spec = dominance(m);
  CHECK(spec.lambda2 < 1e-9);
  CHECK(spec.infinite());
}

TEST_CASE("hand-computed 2x2 spectrum survives orthogonal mixing") {
  // Diagonal (3, 2) rotated arbitrarily: singular values stay 3 and 2.
  auto base = matrix_from({{3, 0}, {0, 2}});
  for (double angle : {0.0, 0.3, 1.1, 2.5}) {
    const auto m = rotate2d(base, angle);
    const auto spec = dominance(m);
    CHECK(spec.lambda1 == doctest::Approx(3.0).epsilon(1e-7));
    CHECK(spec.lambda2 == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(spec.dom == doctest::Approx(1.5).epsilon(1e-7));
  }
}

TEST_CASE("power iteration matches the dense oracle on random matrices") {
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    EmbeddingMatrix m;
    m.dim = 8;
    for (int i = 0; i < 50 * 8; ++i) m.data.push_back(rng.gaussian());
    const auto spec = dominance(m);
    const auto oracle = testutil::dense_singular_values(m);
    CHECK(testutil::rel_err(spec.lambda1, oracle[0]) < 1e-6);
    CHECK(testutil::rel_err(spec.lambda2, oracle[1]) < 1e-6);
  }
}

TEST_CASE("dominance needs two rows") {
  auto m = matrix_from({{1, 2}});
  CHECK_THROWS_AS(dominance(m), ClusterTooSmall);
}

TEST_CASE("dominance is invariant under rotation and scaling") {
  Rng rng(13);
  EmbeddingMatrix m;
  m.dim = 2;
  for (int i = 0; i < 40; ++i) {
    m.data.push_back(rng.gaussian() * 3.0);
    m.data.push_back(rng.gaussian());
  }
  const auto spec = dominance(m);
  const auto rotated = dominance(rotate2d(m, 0.77));
  CHECK(rotated.dom == doctest::Approx(spec.dom).epsilon(1e-6));

  EmbeddingMatrix scaled = m;
  for (double& x : scaled.data) x *= 4.2;
  const auto s = dominance(scaled);
  CHECK(s.dom == doctest::Approx(spec.dom).epsilon(1e-6));
}

TEST_CASE("anomaly ratio follows the piecewise rule with clamping") {
  PlutoParams params;
  params.alpha = 0.1;
  ClusterSpectrum spec;
  spec.lambda1 = 2;
  spec.lambda2 = 1;
  spec.dom = 2.0;
  CHECK(estimate_anomaly_ratio(spec, params, ContaminationKind::low) ==
        doctest::Approx(0.05));
  CHECK(estimate_anomaly_ratio(spec, params, ContaminationKind::high) ==
        doctest::Approx(0.2));
  spec.dom = 50.0;
  CHECK(estimate_anomaly_ratio(spec, params, ContaminationKind::high) == doctest::Approx(1.0));
  spec.dom = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(estimate_anomaly_ratio(spec, params, ContaminationKind::low),
                  InfiniteDominance);
}

TEST_CASE("max-gap split cuts at the largest consecutive gap") {
  PlutoParams params;
  std::vector<double> doms{10.0, 9.5, 2.0, 1.8};
  const auto split = spike_split(doms, params);
  CHECK(split.high_ids == std::vector<int>{0, 1});
  CHECK(split.low_ids == std::vector<int>{2, 3});
}

TEST_CASE("a flat dominance curve has no spike") {
  PlutoParams params;
  std::vector<double> doms{2.0, 2.0, 2.0};
  const auto split = spike_split(doms, params);
  CHECK(split.high_ids.empty());
  CHECK(split.low_ids.size() == 3);
}

TEST_CASE("infinite dominance always lands on the high side") {
  PlutoParams params;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> doms{inf, 2.0, 2.0, 2.0};
  const auto split = spike_split(doms, params);
  CHECK(split.high_ids == std::vector<int>{0});
  CHECK(split.low_ids.size() == 3);
  std::vector<double> all_inf{inf, inf};
  CHECK_THROWS_AS(spike_split(all_inf, params), AllInfinite);
}

TEST_CASE("percentile split uses the configured cut") {
  PlutoParams params;
  params.spike_method = PlutoParams::SpikeMethod::percentile;
  params.spike_percentile = 75.0;
  std::vector<double> doms{1.0, 2.0, 3.0, 10.0};
  const auto split = spike_split(doms, params);
  CHECK(split.high_ids == std::vector<int>{3});
}

TEST_CASE("template-concentrated normal cluster outranks a mixed contaminated one") {
  // The documented failure mode: concentration is not contamination.
  Rng rng(55);
  EmbeddingMatrix pure;  // one dominant direction, tiny spread
  pure.dim = 4;
  for (int i = 0; i < 50; ++i) {
    const double v = rng.uniform(0, 0.01);
    pure.data.insert(pure.data.end(), {1.0 + v, v, 0.0, 0.0});
  }
  EmbeddingMatrix mixed;  // two comparable co-occurring directions
  mixed.dim = 4;
  for (int i = 0; i < 50; ++i) {
    mixed.data.insert(mixed.data.end(),
                      {0.0, 0.0, 1.0 + rng.uniform(0, 0.5), 1.0 + rng.uniform(0, 0.5)});
  }
  auto centered_dom = [](EmbeddingMatrix m) {
    mean_center_rows(m);
    return dominance(m).dom;
  };
  CHECK(centered_dom(pure) >= centered_dom(mixed));
}

TEST_CASE("filter removes exactly the requested share") {
  Rng rng(3);
  EmbeddingMatrix m;
  m.dim = 3;
  std::vector<int> members;
  for (int i = 0; i < 21; ++i) {
    members.push_back(i);
    for (int d = 0; d < 3; ++d) m.data.push_back(rng.gaussian());
  }
  const auto spec = dominance(m);
  CHECK(filter_low_contamination(m, members, spec, 0.0).empty());
  CHECK(filter_low_contamination(m, members, spec, 1.0).size() == 21);
  CHECK(filter_low_contamination(m, members, spec, 0.25).size() ==
        static_cast<std::size_t>(std::ceil(0.25 * 21)));
}

TEST_CASE("filter removes the members aligned with the second direction") {
  // Majority spread along e1, planted minority along e2. After
  // centering, v2 is the minority direction; the planted ids must be
  // exactly the removed ones (verified against a projection oracle).
  EmbeddingMatrix m;
  m.dim = 2;
  Rng rng(9);
  std::vector<int> members;
  std::vector<int> planted;
  for (int i = 0; i < 40; ++i) {
    members.push_back(i);
    m.data.insert(m.data.end(), {rng.uniform(-4, 4), rng.uniform(-0.01, 0.01)});
  }
  for (int i = 40; i < 50; ++i) {
    members.push_back(i);
    planted.push_back(i);
    m.data.insert(m.data.end(), {rng.uniform(-0.5, 0.5), rng.uniform(2.0, 3.0)});
  }
  EmbeddingMatrix centered = m;
  mean_center_rows(centered);
  const auto spec = dominance(centered);
  const auto removed = filter_low_contamination(m, members, spec, 10.0 / 50.0);
  CHECK(removed == planted);
}
