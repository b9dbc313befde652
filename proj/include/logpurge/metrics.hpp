#pragma once

#include <span>
#include <vector>

#include "logpurge/core.hpp"

namespace logpurge {

struct EmptySelection final : Error {
  EmptySelection() : Error("selection is empty") {}
};
struct NoNormals final : Error {
  NoNormals() : Error("no ground-truth normal sequences") {}
};
struct EmptyInput final : Error {
  EmptyInput() : Error("metric input is empty") {}
};
struct NoLabels final : Error {
  NoLabels() : Error("no labeled sequences") {}
};

/// Selection under evaluation: the purified subset, the ground-truth
/// normal set, and the universe they live in. Vectors must be sorted
/// ascending and duplicate-free.
struct SelectionOutcome {
  std::vector<int> selected;
  std::vector<int> normal;
  std::vector<int> universe;
};

/// |selected ∩ normal| / |selected|
double subset_purity(const SelectionOutcome& outcome);

/// |selected ∩ normal| / |normal|
double clean_retention(const SelectionOutcome& outcome);

/// Fraction of points whose cluster's majority label equals their own.
/// Cluster ids are arbitrary; the score is invariant under relabeling.
double homogeneity(std::span<const int> assignments, std::span<const Label> labels);

struct PrfResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;  // 0/0 reported as 0 with flag
  bool recall_undefined = false;
  bool f1_undefined = false;
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Precision/recall/F1 with anomalous as the positive class.
PrfResult prf1(std::span<const Label> predictions, std::span<const Label> truth);

}  // namespace logpurge
