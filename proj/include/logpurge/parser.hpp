#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "logpurge/core.hpp"

namespace logpurge {

struct UnparseableTimestamp final : Error {
  explicit UnparseableTimestamp(const std::string& msg = "cannot parse timestamp field")
      : Error(msg) {}
};
struct EmptyMessage final : Error {
  EmptyMessage() : Error("message is empty after header stripping") {}
};

/// Column layout of a raw log line. Fields are split on whitespace;
/// the message is everything from message_start onward.
struct FieldLayout {
  int timestamp_index = 0;
  int message_start = 1;
  std::optional<int> label_index;   // optional ground-truth column
  std::string normal_token = "-";   // label column value meaning "normal"
};

/// Extracts timestamp/label headers and the message body from one line.
LogRecord parse_line(const std::string& raw, const FieldLayout& layout);

/// Fixed-depth prefix-tree template miner.
///
/// Lines are routed by token count, then by their first (depth - 2)
/// tokens, into a leaf group holding candidate templates. A message
/// joins the template with the highest fraction of equal literal
/// tokens when that fraction reaches sim_threshold; otherwise it
/// becomes a new template. Positions that disagree turn into "<*>".
/// Purely numeric tokens are wildcarded before descent so that ids and
/// counters do not explode the first tree levels.
class ParseTree {
 public:
  explicit ParseTree(int depth = 4, double sim_threshold = 0.4, int max_children = 100);

  /// Matches or creates a template for the token list; always resolves.
  int match(const std::vector<std::string>& tokens);

  /// Tokenizes, pre-wildcards numerics, and matches.
  int match_message(const std::string& message);

  const std::vector<Template>& templates() const { return templates_; }
  int depth() const { return depth_; }
  double sim_threshold() const { return sim_threshold_; }

  static std::vector<std::string> tokenize(const std::string& message);
  static bool is_numeric_token(const std::string& token);

 private:
  struct Node {
    std::map<std::string, std::unique_ptr<Node>> children;
    std::vector<int> group;  // template ids at the leaf level
  };

  int depth_;
  double sim_threshold_;
  int max_children_;
  std::map<std::size_t, std::unique_ptr<Node>> by_length_;
  std::vector<Template> templates_;

  int match_in_group(std::vector<int>& group, const std::vector<std::string>& tokens);
};

/// Streams a raw log file through parse_line + template mining.
/// Returns records with template_id filled, sorted check deferred to
/// windowing.
std::vector<LogRecord> parse_file(const std::filesystem::path& path, const FieldLayout& layout,
                                  ParseTree& tree);

/// Groups records into sliding windows anchored at the corpus minimum
/// timestamp. Window starts are min_ts, min_ts+stride, ... while the
/// start does not exceed the maximum timestamp; empty windows are
/// dropped. A sequence is anomalous iff any member record is.
std::vector<LogSequence> window_sequences(std::span<const LogRecord> records,
                                          std::int64_t window_len, std::int64_t stride);

}  // namespace logpurge
