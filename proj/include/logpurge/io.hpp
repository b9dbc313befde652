#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "logpurge/core.hpp"

namespace logpurge::io {

// Newline-delimited JSON interchange:
//   records:   {"ts": 123, "msg": "...", "label": "normal"?}
//   sequences: {"start": 0, "end": 60, "tids": [..], "label": "anomalous"?}
//   templates: {"id": 0, "text": "generating <*>", "support": 2}
// Sequence ids are dense line indices assigned on load.

std::vector<LogRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, std::span<const LogRecord> records);

std::vector<LogSequence> read_sequences(const std::filesystem::path& path);
void write_sequences(const std::filesystem::path& path, std::span<const LogSequence> sequences,
                     bool include_labels = true);

std::vector<Template> read_templates(const std::filesystem::path& path);
void write_templates(const std::filesystem::path& path, std::span<const Template> templates);

struct PredictionRow {
  int seq_id = 0;
  Label predicted = Label::normal;
  bool too_short = false;
};

std::vector<PredictionRow> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::filesystem::path& path, std::span<const PredictionRow> rows);

/// Rule texts, one per line, in induction order.
std::vector<std::string> read_rules(const std::filesystem::path& path);
void write_rules(const std::filesystem::path& path, const RuleSet& rules);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace logpurge::io
