#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "logpurge/core.hpp"
#include "logpurge/metrics.hpp"

namespace logpurge {

struct EmptyTrainingSet final : Error {
  EmptyTrainingSet() : Error("detector training set is empty") {}
};

/// Next-template predictor over raw n-gram counts. A sequence is
/// anomalous when some position's actual continuation is outside the
/// top_k most frequent continuations of its context, or the context was
/// never seen in training.
class NgramModel {
 public:
  NgramModel() = default;

  static NgramModel train(std::span<const LogSequence> sequences, int order = 3, int top_k = 5);

  struct Prediction {
    Label label = Label::normal;
    bool too_short = false;  // shorter than order + 1 templates
  };

  Prediction predict_sequence(const LogSequence& seq, int top_k = 0) const;  // 0 = model default

  /// Precision/recall/F1 against ground-truth labels (anomalous
  /// positive). Throws NoLabels when nothing is labeled.
  PrfResult evaluate(std::span<const LogSequence> labeled, int top_k = 0) const;

  int order() const { return order_; }
  int top_k() const { return top_k_; }
  int vocab() const { return vocab_; }
  std::size_t context_count() const { return counts_.size(); }
  long transition_count(std::span<const int> context, int next) const;

  void save(const std::filesystem::path& path) const;
  static NgramModel load(const std::filesystem::path& path);

 private:
  int order_ = 3;
  int top_k_ = 5;
  int vocab_ = 0;
  std::map<std::vector<int>, std::map<int, long>> counts_;
};

}  // namespace logpurge
