#include "logpurge/parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace logpurge {

namespace {
constexpr const char* kWildcard = "<*>";
}

LogRecord parse_line(const std::string& raw, const FieldLayout& layout) {
  std::vector<std::string> fields;
  {
    std::istringstream ss(raw);
    std::string f;
    while (ss >> f) fields.push_back(std::move(f));
  }
  if (layout.timestamp_index < 0 ||
      static_cast<std::size_t>(layout.timestamp_index) >= fields.size())
    throw UnparseableTimestamp("timestamp field missing");

  const std::string& ts_field = fields[layout.timestamp_index];
  std::int64_t ts = 0;
  auto [ptr, ec] = std::from_chars(ts_field.data(), ts_field.data() + ts_field.size(), ts);
  if (ec != std::errc() || ptr != ts_field.data() + ts_field.size())
    throw UnparseableTimestamp("timestamp field not an integer: " + ts_field);
  if (ts < 0) throw NonFiniteTimestamp();

  LogRecord record;
  record.timestamp = ts;
  std::string msg;
  for (std::size_t i = std::max(0, layout.message_start); i < fields.size(); ++i) {
    if (!msg.empty()) msg += ' ';
    msg += fields[i];
  }
  if (trim(msg).empty()) throw EmptyMessage();
  record.message = std::move(msg);

  if (layout.label_index && static_cast<std::size_t>(*layout.label_index) < fields.size()) {
    record.source_label = fields[*layout.label_index] == layout.normal_token
                              ? Label::normal
                              : Label::anomalous;
  }
  return record;
}

// Any digit-bearing token (ids, counters, addresses like "core.1143")
// routes as a wildcard; otherwise the first tree levels explode on
// unique identifiers.
bool ParseTree::is_numeric_token(const std::string& token) {
  for (char c : token) {
    if (std::isdigit(static_cast<unsigned char>(c))) return true;
  }
  return false;
}

std::vector<std::string> ParseTree::tokenize(const std::string& message) {
  std::vector<std::string> tokens;
  std::istringstream ss(message);
  std::string tok;
  while (ss >> tok) {
    tokens.push_back(is_numeric_token(tok) ? kWildcard : tok);
  }
  return tokens;
}

ParseTree::ParseTree(int depth, double sim_threshold, int max_children)
    : depth_(depth), sim_threshold_(sim_threshold), max_children_(max_children) {
  if (depth_ < 2) throw InvalidConfig("parser.depth must be >= 2");
  if (!(sim_threshold_ > 0 && sim_threshold_ < 1))
    throw InvalidConfig("parser.sim_threshold must be in (0, 1)");
  if (max_children_ < 1) throw InvalidConfig("parser.max_children must be >= 1");
}

int ParseTree::match_message(const std::string& message) {
  return match(tokenize(message));
}

int ParseTree::match(const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw EmptyMessage();

  auto& root = by_length_[tokens.size()];
  if (!root) root = std::make_unique<Node>();

  Node* node = root.get();
  const int internal_levels = depth_ - 2;
  for (int level = 0; level < internal_levels && level < static_cast<int>(tokens.size());
       ++level) {
    std::string key = tokens[level];
    auto it = node->children.find(key);
    if (it == node->children.end()) {
      // Full interior nodes route new keys through a shared wildcard child.
      if (static_cast<int>(node->children.size()) >= max_children_) {
        key = kWildcard;
        it = node->children.find(key);
      }
      if (it == node->children.end()) {
        it = node->children.emplace(key, std::make_unique<Node>()).first;
      }
    }
    node = it->second.get();
  }
  return match_in_group(node->group, tokens);
}

int ParseTree::match_in_group(std::vector<int>& group, const std::vector<std::string>& tokens) {
  int best_id = -1;
  double best_sim = -1.0;
  for (int id : group) {
    const auto& tpl = templates_[id].tokens;
    if (tpl.size() != tokens.size()) continue;
    int equal_literals = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tpl[i] != kWildcard && tpl[i] == tokens[i]) ++equal_literals;
    }
    const double sim = static_cast<double>(equal_literals) / tokens.size();
    if (sim > best_sim) {
      best_sim = sim;
      best_id = id;
    }
  }

  if (best_id >= 0 && best_sim >= sim_threshold_) {
    auto& tpl = templates_[best_id];
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tpl.tokens[i] != tokens[i]) tpl.tokens[i] = kWildcard;
    }
    ++tpl.support_count;
    return best_id;
  }

  Template t;
  t.id = static_cast<int>(templates_.size());
  t.tokens = tokens;
  t.support_count = 1;
  templates_.push_back(std::move(t));
  group.push_back(templates_.back().id);
  return templates_.back().id;
}

std::vector<LogRecord> parse_file(const std::filesystem::path& path, const FieldLayout& layout,
                                  ParseTree& tree) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open log file: " + path.string());
  std::vector<LogRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    LogRecord record = parse_line(line, layout);
    record.template_id = tree.match_message(record.message);
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<LogSequence> window_sequences(std::span<const LogRecord> records,
                                          std::int64_t window_len, std::int64_t stride) {
  if (records.empty()) throw EmptyDataset();
  if (window_len <= 0 || stride <= 0 || stride > window_len)
    throw InvalidConfig("window_len/stride invalid");
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].timestamp < records[i - 1].timestamp) throw UnsortedInput();
  }

  const std::int64_t min_ts = records.front().timestamp;
  const std::int64_t max_ts = records.back().timestamp;

  std::vector<LogSequence> sequences;
  std::size_t low = 0;  // first record with ts >= start
  for (std::int64_t start = min_ts; start <= max_ts; start += stride) {
    while (low < records.size() && records[low].timestamp < start) ++low;
    LogSequence seq;
    seq.window_start = start;
    seq.window_end = start + window_len;
    bool any_label = false;
    bool anomalous = false;
    for (std::size_t i = low; i < records.size() && records[i].timestamp < start + window_len;
         ++i) {
      if (!records[i].template_id)
        throw Error("record without template id cannot be windowed");
      seq.template_ids.push_back(*records[i].template_id);
      if (records[i].source_label) {
        any_label = true;
        anomalous = anomalous || *records[i].source_label == Label::anomalous;
      }
    }
    if (seq.template_ids.empty()) continue;
    if (any_label) seq.ground_truth = anomalous ? Label::anomalous : Label::normal;
    seq.seq_id = static_cast<int>(sequences.size());
    sequences.push_back(std::move(seq));
  }
  return sequences;
}

}  // namespace logpurge
