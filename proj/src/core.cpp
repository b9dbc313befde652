#include "logpurge/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <thread>

namespace logpurge {

std::string to_string(Label label) {
  return label == Label::normal ? "normal" : "anomalous";
}

Label label_from_string(const std::string& s) {
  if (s == "normal") return Label::normal;
  if (s == "anomalous") return Label::anomalous;
  throw Error("unknown label: " + s);
}

std::string to_string(ContaminationVerdict v) {
  return v == ContaminationVerdict::low_contamination ? "low_contamination"
                                                      : "high_contamination";
}

std::string Template::text() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<int> RepresentativeSet::all() const {
  std::set<int> ids(center_ids.begin(), center_ids.end());
  for (const auto& ns : neighbor_ids) ids.insert(ns.begin(), ns.end());
  return {ids.begin(), ids.end()};
}

bool RuleSet::add(Rule rule) {
  const std::string folded = lowercase(trim(rule.text));
  if (folded.empty()) return false;
  for (const auto& existing : rules_) {
    if (lowercase(trim(existing.text)) == folded) return false;
  }
  rules_.push_back(std::move(rule));
  return true;
}

void PurgeConfig::validate() const {
  if (K < 2) throw InvalidConfig("regions.K must be >= 2");
  if (k_nn < 1) throw InvalidConfig("regions.k_nn must be >= 1");
  if (!(epsilon > 0)) throw InvalidConfig("regions.epsilon must be > 0");
  if (r_min && !(*r_min > 0)) throw InvalidConfig("regions.r_min must be > 0 or auto");
  if (M < 0) throw InvalidConfig("regions.M must be >= 0");
  if (n_max < 1) throw InvalidConfig("stage1.n_max must be >= 1");
  if (!(percentile > 0 && percentile < 100))
    throw InvalidConfig("stage2.percentile must be in (0, 100)");
  if (window_len <= 0) throw InvalidConfig("window.len must be > 0");
  if (stride <= 0 || stride > window_len)
    throw InvalidConfig("window.stride must be in (0, window.len]");
  if (!(validation_fraction > 0 && validation_fraction < 1))
    throw InvalidConfig("stage1.validation_fraction must be in (0, 1)");
  if (stage2_min_size < 2) throw InvalidConfig("stage2.min_size must be >= 2");
}

void DatasetValidator::add(const LogRecord& record) {
  if (record.timestamp < 0) throw NonFiniteTimestamp();
  if (trim(record.message).empty()) throw Error("record message empty after trim");
  if (strict_ && any_ && record.timestamp < last_ts_)
    throw UnsortedInput("timestamp decreased in strict mode");
  if (!any_) {
    summary_.min_timestamp = record.timestamp;
    summary_.max_timestamp = record.timestamp;
    any_ = true;
  } else {
    summary_.min_timestamp = std::min(summary_.min_timestamp, record.timestamp);
    summary_.max_timestamp = std::max(summary_.max_timestamp, record.timestamp);
  }
  last_ts_ = record.timestamp;
  ++summary_.count;
  if (record.source_label) {
    ++summary_.labeled;
    if (*record.source_label == Label::anomalous) ++summary_.anomalous;
  }
}

DatasetSummary DatasetValidator::finish() const {
  if (!any_) throw EmptyDataset();
  return summary_;
}

DatasetSummary validate_dataset(std::span<const LogRecord> records, bool strict_monotone) {
  DatasetValidator v(strict_monotone);
  for (const auto& r : records) v.add(r);
  return v.finish();
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double euclidean(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

unsigned default_workers() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t, std::size_t)>& f) {
  if (n == 0) return;
  if (workers == 0) workers = 1;
  workers = std::min<std::size_t>(workers, n);
  if (workers == 1) {
    f(0, n);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&f, begin, end] { f(begin, end); });
  }
  for (auto& t : threads) t.join();
}

}  // namespace logpurge
