#include "logpurge/metrics.hpp"

#include <algorithm>
#include <map>

namespace logpurge {

namespace {

std::size_t intersection_size(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t count = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++count;
      ++ia;
      ++ib;
    }
  }
  return count;
}

}  // namespace

double subset_purity(const SelectionOutcome& outcome) {
  if (outcome.selected.empty()) throw EmptySelection();
  return static_cast<double>(intersection_size(outcome.selected, outcome.normal)) /
         static_cast<double>(outcome.selected.size());
}

double clean_retention(const SelectionOutcome& outcome) {
  if (outcome.normal.empty()) throw NoNormals();
  return static_cast<double>(intersection_size(outcome.selected, outcome.normal)) /
         static_cast<double>(outcome.normal.size());
}

double homogeneity(std::span<const int> assignments, std::span<const Label> labels) {
  if (assignments.empty() || assignments.size() != labels.size()) throw EmptyInput();
  std::map<int, std::pair<long, long>> per_cluster;  // cluster -> (normal, anomalous)
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    auto& [n_normal, n_anom] = per_cluster[assignments[i]];
    (labels[i] == Label::normal ? n_normal : n_anom) += 1;
  }
  long matches = 0;
  for (const auto& [cluster, counts] : per_cluster) {
    matches += std::max(counts.first, counts.second);
  }
  return static_cast<double>(matches) / static_cast<double>(assignments.size());
}

PrfResult prf1(std::span<const Label> predictions, std::span<const Label> truth) {
  if (predictions.size() != truth.size()) throw EmptyInput();
  PrfResult r;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred_pos = predictions[i] == Label::anomalous;
    const bool true_pos = truth[i] == Label::anomalous;
    if (pred_pos && true_pos) ++r.tp;
    if (pred_pos && !true_pos) ++r.fp;
    if (!pred_pos && true_pos) ++r.fn;
    if (!pred_pos && !true_pos) ++r.tn;
  }
  if (r.tp + r.fp == 0) {
    r.precision_undefined = true;
  } else {
    r.precision = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  }
  if (r.tp + r.fn == 0) {
    r.recall_undefined = true;
  } else {
    r.recall = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  }
  if (r.precision + r.recall == 0.0) {
    r.f1_undefined = true;  // 0/0 reported as 0 with flag
    r.f1 = 0.0;
  } else {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  }
  return r;
}

}  // namespace logpurge
