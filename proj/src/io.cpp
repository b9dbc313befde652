#include "logpurge/io.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace logpurge::io {

using nlohmann::json;

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open for reading: " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path.string());
  return out;
}

json parse_line(const std::string& line, const std::filesystem::path& path, std::size_t lineno) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) {
    throw Error("malformed JSON at " + path.string() + ":" + std::to_string(lineno));
  }
  return j;
}

}  // namespace

std::vector<LogRecord> read_records(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<LogRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j = parse_line(line, path, lineno);
    LogRecord r;
    if (!j.contains("ts") || !j["ts"].is_number())
      throw Error("record missing numeric ts at line " + std::to_string(lineno));
    const double ts = j["ts"].get<double>();
    if (!std::isfinite(ts)) throw NonFiniteTimestamp();
    r.timestamp = static_cast<std::int64_t>(ts);
    r.message = j.value("msg", std::string());
    if (j.contains("label")) r.source_label = label_from_string(j["label"].get<std::string>());
    if (j.contains("tid")) r.template_id = j["tid"].get<int>();
    out.push_back(std::move(r));
  }
  return out;
}

void write_records(const std::filesystem::path& path, std::span<const LogRecord> records) {
  auto out = open_out(path);
  for (const auto& r : records) {
    json j{{"ts", r.timestamp}, {"msg", r.message}};
    if (r.source_label) j["label"] = to_string(*r.source_label);
    if (r.template_id) j["tid"] = *r.template_id;
    out << j.dump() << '\n';
  }
}

std::vector<LogSequence> read_sequences(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<LogSequence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j = parse_line(line, path, lineno);
    LogSequence s;
    s.window_start = j.value("start", std::int64_t{0});
    s.window_end = j.value("end", std::int64_t{0});
    s.template_ids = j.at("tids").get<std::vector<int>>();
    if (s.template_ids.empty())
      throw Error("sequence with empty tids at line " + std::to_string(lineno));
    if (j.contains("label")) s.ground_truth = label_from_string(j["label"].get<std::string>());
    s.seq_id = static_cast<int>(out.size());
    out.push_back(std::move(s));
  }
  return out;
}

void write_sequences(const std::filesystem::path& path, std::span<const LogSequence> sequences,
                     bool include_labels) {
  auto out = open_out(path);
  for (const auto& s : sequences) {
    json j{{"start", s.window_start}, {"end", s.window_end}, {"tids", s.template_ids}};
    if (include_labels && s.ground_truth) j["label"] = to_string(*s.ground_truth);
    out << j.dump() << '\n';
  }
}

std::vector<Template> read_templates(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<Template> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j = parse_line(line, path, lineno);
    Template t;
    t.id = j.at("id").get<int>();
    t.support_count = j.value("support", 0L);
    std::istringstream text(j.at("text").get<std::string>());
    std::string tok;
    while (text >> tok) t.tokens.push_back(tok);
    if (t.tokens.empty()) throw Error("template with no tokens at line " + std::to_string(lineno));
    out.push_back(std::move(t));
  }
  return out;
}

void write_templates(const std::filesystem::path& path, std::span<const Template> templates) {
  auto out = open_out(path);
  for (const auto& t : templates) {
    json j{{"id", t.id}, {"text", t.text()}, {"support", t.support_count}};
    out << j.dump() << '\n';
  }
}

std::vector<PredictionRow> read_predictions(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<PredictionRow> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    json j = parse_line(line, path, lineno);
    PredictionRow row;
    row.seq_id = j.at("seq_id").get<int>();
    row.predicted = label_from_string(j.at("predicted").get<std::string>());
    row.too_short = j.value("too_short", false);
    out.push_back(row);
  }
  return out;
}

void write_predictions(const std::filesystem::path& path, std::span<const PredictionRow> rows) {
  auto out = open_out(path);
  for (const auto& row : rows) {
    json j{{"seq_id", row.seq_id}, {"predicted", to_string(row.predicted)}};
    if (row.too_short) j["too_short"] = true;
    out << j.dump() << '\n';
  }
}

std::vector<std::string> read_rules(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) out.push_back(line);
  }
  return out;
}

void write_rules(const std::filesystem::path& path, const RuleSet& rules) {
  auto out = open_out(path);
  for (const auto& rule : rules.rules()) out << rule.text << '\n';
}

std::string read_text_file(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  auto out = open_out(path);
  out << content;
}

}  // namespace logpurge::io
