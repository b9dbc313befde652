#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "logpurge/metrics.hpp"
#include "logpurge/rng.hpp"

using namespace logpurge;

TEST_CASE("subset purity counts the clean share of the selection") {
  SelectionOutcome o;
  o.selected = {0, 1, 2, 3};
  o.normal = {0, 1, 2, 9};
  o.universe = {0, 1, 2, 3, 9};
  CHECK(subset_purity(o) == doctest::Approx(0.75));
}

TEST_CASE("a selection inside the normal set is pure") {
  SelectionOutcome o;
  o.selected = {1, 2};
  o.normal = {0, 1, 2, 3};
  CHECK(subset_purity(o) == doctest::Approx(1.0));
}

TEST_CASE("empty selections are rejected") {
  SelectionOutcome o;
  o.normal = {1};
  CHECK_THROWS_AS(subset_purity(o), EmptySelection);
}

TEST_CASE("clean retention counts preserved normals") {
  SelectionOutcome o;
  o.normal = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  o.selected = {0, 1, 2, 3, 4, 5, 6, 7, 90, 91};
  CHECK(clean_retention(o) == doctest::Approx(0.8));
  o.selected = o.normal;
  CHECK(clean_retention(o) == doctest::Approx(1.0));
  o.selected = {90, 91};
  CHECK(clean_retention(o) == doctest::Approx(0.0));
}

TEST_CASE("retention needs a non-empty normal set") {
  SelectionOutcome o;
  o.selected = {1};
  CHECK_THROWS_AS(clean_retention(o), NoNormals);
}

TEST_CASE("count identities hold for purity and retention") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    SelectionOutcome o;
    for (int i = 0; i < 60; ++i) {
      o.universe.push_back(i);
      if (rng.uniform() < 0.6) o.normal.push_back(i);
      if (rng.uniform() < 0.5) o.selected.push_back(i);
    }
    if (o.selected.empty() || o.normal.empty()) continue;
    const double sp = subset_purity(o);
    const double crr = clean_retention(o);
    const double hits_a = sp * static_cast<double>(o.selected.size());
    const double hits_b = crr * static_cast<double>(o.normal.size());
    CHECK(std::abs(hits_a - std::round(hits_a)) < 1e-9);
    CHECK(std::abs(hits_b - std::round(hits_b)) < 1e-9);
    CHECK(std::round(hits_a) == std::round(hits_b));
  }
}

TEST_CASE("homogeneity of pure clusters is one") {
  std::vector<int> clusters{0, 0, 1, 1, 2, 2};
  std::vector<Label> labels{Label::normal,    Label::normal,    Label::anomalous,
                            Label::anomalous, Label::normal,    Label::normal};
  CHECK(homogeneity(clusters, labels) == doctest::Approx(1.0));
}

TEST_CASE("two half-mixed clusters score one half") {
  std::vector<int> clusters{0, 0, 0, 0, 1, 1, 1, 1};
  std::vector<Label> labels{Label::normal, Label::normal, Label::anomalous, Label::anomalous,
                            Label::normal, Label::normal, Label::anomalous, Label::anomalous};
  CHECK(homogeneity(clusters, labels) == doctest::Approx(0.5));
}

TEST_CASE("a single 70/30 cluster scores the majority share") {
  std::vector<int> clusters(10, 0);
  std::vector<Label> labels(10, Label::normal);
  for (int i = 0; i < 3; ++i) labels[i] = Label::anomalous;
  CHECK(homogeneity(clusters, labels) == doctest::Approx(0.7));
}

TEST_CASE("homogeneity ignores cluster id permutations") {
  Rng rng(7);
  std::vector<int> clusters;
  std::vector<Label> labels;
  for (int i = 0; i < 100; ++i) {
    clusters.push_back(static_cast<int>(rng.bounded(5)));
    labels.push_back(rng.uniform() < 0.3 ? Label::anomalous : Label::normal);
  }
  const double base = homogeneity(clusters, labels);
  std::vector<int> permuted;
  for (int c : clusters) permuted.push_back((c * 7 + 3) % 11);  // injective on 0..4
  CHECK(homogeneity(permuted, labels) == doctest::Approx(base));
}

TEST_CASE("homogeneity rejects empty or mismatched input") {
  CHECK_THROWS_AS(homogeneity({}, {}), EmptyInput);
  std::vector<int> clusters{0};
  std::vector<Label> labels;
  CHECK_THROWS_AS(homogeneity(clusters, labels), EmptyInput);
}

TEST_CASE("perfect predictions score ones") {
  std::vector<Label> y{Label::anomalous, Label::normal, Label::anomalous};
  const auto r = prf1(y, y);
  CHECK(r.precision == doctest::Approx(1.0));
  CHECK(r.recall == doctest::Approx(1.0));
  CHECK(r.f1 == doctest::Approx(1.0));
  CHECK_FALSE(r.precision_undefined);
  CHECK_FALSE(r.f1_undefined);
}

TEST_CASE("all-normal predictions on anomalies zero out with flags") {
  std::vector<Label> pred(4, Label::normal);
  std::vector<Label> truth{Label::anomalous, Label::anomalous, Label::normal, Label::normal};
  const auto r = prf1(pred, truth);
  CHECK(r.recall == 0.0);
  CHECK(r.f1 == 0.0);
  CHECK(r.precision_undefined);  // no positive predictions: 0/0
  CHECK(r.f1_undefined);
}

TEST_CASE("substitution example: TP=1 FP=1 FN=3") {
  std::vector<Label> pred{Label::anomalous, Label::anomalous, Label::normal, Label::normal,
                          Label::normal};
  std::vector<Label> truth{Label::anomalous, Label::normal, Label::anomalous,
                           Label::anomalous, Label::anomalous};
  const auto r = prf1(pred, truth);
  CHECK(r.precision == doctest::Approx(0.5));
  CHECK(r.recall == doctest::Approx(0.25));
  CHECK(r.f1 == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("f1 extremes coincide with counting conditions") {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Label> pred, truth;
    for (int i = 0; i < 30; ++i) {
      pred.push_back(rng.uniform() < 0.4 ? Label::anomalous : Label::normal);
      truth.push_back(rng.uniform() < 0.4 ? Label::anomalous : Label::normal);
    }
    const auto r = prf1(pred, truth);
    if (r.f1 == doctest::Approx(1.0)) {
      CHECK(r.fp == 0);
      CHECK(r.fn == 0);
    }
    if (r.f1 == 0.0) CHECK(r.tp == 0);
    if (r.tp == 0) CHECK(r.f1 == 0.0);
  }
}
