#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace logpurge {

// ─── Errors ───────────────────────────────────────────────────

/// Base class for every domain error raised by the pipeline.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyDataset final : Error {
  EmptyDataset() : Error("dataset is empty") {}
};
struct NonFiniteTimestamp final : Error {
  explicit NonFiniteTimestamp(const std::string& msg = "timestamp is negative or non-finite")
      : Error(msg) {}
};
struct UnsortedInput final : Error {
  explicit UnsortedInput(const std::string& msg = "records are not sorted by timestamp")
      : Error(msg) {}
};
struct TooFewPoints final : Error {
  explicit TooFewPoints(const std::string& msg = "too few points") : Error(msg) {}
};
struct InvalidConfig final : Error {
  explicit InvalidConfig(const std::string& msg) : Error(msg) {}
};

// ─── Labels ───────────────────────────────────────────────────

enum class Label : std::uint8_t { normal = 0, anomalous = 1 };

std::string to_string(Label label);
Label label_from_string(const std::string& s);

enum class ContaminationVerdict : std::uint8_t { low_contamination = 0, high_contamination = 1 };

std::string to_string(ContaminationVerdict v);

// ─── Domain types ─────────────────────────────────────────────

/// One raw log line after header extraction.
struct LogRecord {
  std::int64_t timestamp = 0;  // seconds since epoch
  std::string message;
  std::optional<Label> source_label;  // ground truth, evaluation only
  std::optional<int> template_id;     // filled by the parser
};

/// A parsed event pattern; wildcard positions are "<*>".
struct Template {
  int id = 0;
  std::vector<std::string> tokens;
  long support_count = 0;

  std::string text() const;
};

/// Ordered template ids inside one time window.
///
/// ground_truth is carried for metrics and synthetic oracles only; the
/// purge path never reads it unless the explicit labeled research mode
/// is requested.
struct LogSequence {
  std::int64_t window_start = 0;
  std::int64_t window_end = 0;
  std::vector<int> template_ids;
  std::optional<Label> ground_truth;
  int seq_id = 0;
};

/// Row-major N x dim matrix of sequence embeddings.
struct EmbeddingMatrix {
  std::vector<double> data;
  std::size_t dim = 0;
  std::string provider_tag;

  std::size_t rows() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * dim, dim}; }
};

/// Density-peak centers plus their attached near neighbors.
struct RepresentativeSet {
  std::vector<int> center_ids;                 // sequence ids
  std::vector<std::vector<int>> neighbor_ids;  // parallel to center_ids, <= M each

  /// Centers union neighbors, deduplicated, ascending.
  std::vector<int> all() const;
};

/// One cluster of the embedding space with its judgment state.
struct Region {
  int region_id = 0;
  std::vector<int> member_ids;
  std::vector<double> centroid;
  RepresentativeSet representatives;
  std::optional<ContaminationVerdict> verdict;
};

struct Rule {
  std::string text;
  int iteration_added = 0;
  std::vector<int> source_error_ids;
};

/// Append-only ordered rule list; duplicates (case-folded) are dropped.
class RuleSet {
 public:
  bool add(Rule rule);
  const std::vector<Rule>& rules() const { return rules_; }
  std::size_t size() const { return rules_.size(); }
  bool empty() const { return rules_.empty(); }

 private:
  std::vector<Rule> rules_;
};

/// Knobs shared by the whole purge path.
struct PurgeConfig {
  int K = 20;                          // region count
  int k_nn = 10;                       // neighbors for local density
  double epsilon = 1e-6;               // density smoothing
  std::optional<double> r_min;         // center separation; nullopt = auto
  int M = 5;                           // neighbors attached per center
  int n_max = 5;                       // refinement iteration cap
  double percentile = 90.0;            // sub-region severity-score cut
  std::int64_t window_len = 60;        // seconds
  std::int64_t stride = 30;            // seconds
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  int stage2_min_size = 10;

  void validate() const;  // throws InvalidConfig
};

// ─── Dataset validation ───────────────────────────────────────

struct DatasetSummary {
  std::size_t count = 0;
  std::size_t labeled = 0;
  std::size_t anomalous = 0;
  std::int64_t min_timestamp = 0;
  std::int64_t max_timestamp = 0;

  std::int64_t time_span() const { return max_timestamp - min_timestamp; }
};

/// Streaming dataset validator: O(1) memory, suitable for corpora of
/// millions of lines.
class DatasetValidator {
 public:
  explicit DatasetValidator(bool strict_monotone = false) : strict_(strict_monotone) {}

  void add(const LogRecord& record);
  DatasetSummary finish() const;  // throws EmptyDataset when nothing was added

 private:
  bool strict_;
  DatasetSummary summary_;
  std::int64_t last_ts_ = 0;
  bool any_ = false;
};

DatasetSummary validate_dataset(std::span<const LogRecord> records, bool strict_monotone = false);

// ─── Small shared helpers ─────────────────────────────────────

std::string trim(const std::string& s);
std::string lowercase(std::string s);

double euclidean(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);

/// Static-chunk parallel map over [0, n); f(begin, end) runs on worker
/// threads. Each index is touched by exactly one worker, so results are
/// deterministic as long as f writes only to its own slots.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t, std::size_t)>& f);

/// Worker-count default used by all fan-out sites (bounded by the
/// global --workers flag through the configs).
unsigned default_workers();

}  // namespace logpurge
