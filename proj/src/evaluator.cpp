#include "logpurge/evaluator.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "logpurge/regions.hpp"
#include "logpurge/rng.hpp"

namespace logpurge {

using nlohmann::json;

namespace {

constexpr const char* kPreamble =
    "You are an expert in system log analysis. You are given representative log "
    "sequences from one cluster of a contaminated training set, rendered as event "
    "templates with occurrence counts. Decide whether the cluster is a "
    "high-contamination region (dominated by abnormal system behavior) or a "
    "low-contamination region (ordinary operation). Apply the domain rules when "
    "they are relevant.";

constexpr const char* kOutputSchema =
    "Answer with a single JSON object: {\"label\": \"high\" or \"low\", "
    "\"rationale\": \"short explanation\"}.";

std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  if (scheme == std::string::npos)
    throw InvalidConfig("evaluator endpoint must include scheme");
  const auto path_pos = endpoint.find('/', scheme + 3);
  if (path_pos == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, path_pos), endpoint.substr(path_pos)};
}

/// First balanced {...} block in a chat reply, if any.
std::optional<std::string> extract_json_object(const std::string& content) {
  const auto open = content.find('{');
  if (open == std::string::npos) return std::nullopt;
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < content.size(); ++i) {
    const char c = content[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') in_string = true;
    if (c == '{') ++depth;
    if (c == '}') {
      --depth;
      if (depth == 0) return content.substr(open, i - open + 1);
    }
  }
  return std::nullopt;
}

std::optional<Verdict> parse_verdict(const std::string& content) {
  const auto block = extract_json_object(content);
  if (!block) return std::nullopt;
  json j = json::parse(*block, nullptr, false);
  if (j.is_discarded() || !j.contains("label") || !j["label"].is_string()) return std::nullopt;
  const std::string label = lowercase(j["label"].get<std::string>());
  Verdict v;
  if (label.find("high") != std::string::npos) {
    v.label = ContaminationVerdict::high_contamination;
  } else if (label.find("low") != std::string::npos) {
    v.label = ContaminationVerdict::low_contamination;
  } else {
    return std::nullopt;
  }
  v.rationale = j.value("rationale", std::string());
  return v;
}

std::string render_error_sample(const ErrorSample& e) {
  std::string out = "detector=" + to_string(e.detector_label) +
                    " reference=" + to_string(e.reference_label) + " templates:";
  for (const auto& [text, count] : e.template_counts) {
    out += " [" + text + "] x" + std::to_string(count) + ";";
  }
  return out;
}

}  // namespace

void BackendConfig::validate() const {
  if (kind == Kind::chat_service && endpoint.empty())
    throw InvalidConfig("evaluator.endpoint required for chat backend");
  if (max_retries < 0) throw InvalidConfig("evaluator.max_retries must be >= 0");
  if (context_budget < 256) throw InvalidConfig("evaluator.context_budget too small");
  if (!(rule_df_ratio > 0 && rule_df_ratio <= 1))
    throw InvalidConfig("evaluator.rule_df_ratio must be in (0, 1]");
  if (!(rule_normal_df_floor >= 0 && rule_normal_df_floor <= 1))
    throw InvalidConfig("evaluator.rule_normal_df_floor must be in [0, 1]");
}

RenderedRepresentative render_representative(const LogSequence& seq,
                                             std::span<const Template> vocabulary) {
  std::map<int, long> counts;
  for (int tid : seq.template_ids) ++counts[tid];

  std::map<int, const Template*> by_id;
  for (const auto& t : vocabulary) by_id[t.id] = &t;

  std::vector<std::pair<int, long>> ordered(counts.begin(), counts.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  RenderedRepresentative rep;
  rep.seq_id = seq.seq_id;
  for (const auto& [tid, count] : ordered) {
    auto it = by_id.find(tid);
    rep.template_counts.emplace_back(
        it == by_id.end() ? "template_" + std::to_string(tid) : it->second->text(), count);
  }
  return rep;
}

std::string PromptTemplate::render() const {
  std::string out = system_preamble;
  if (!rules_block.empty()) out += "\n\n" + rules_block;
  out += "\n\n" + payload;
  out += "\n\n" + output_schema;
  return out;
}

PromptTemplate build_prompt(const RuleSet& rules, std::vector<RenderedRepresentative> reps,
                            std::size_t context_budget, std::size_t max_templates_per_rep) {
  if (reps.empty()) throw Error("cannot build a prompt without representatives");

  PromptTemplate prompt;
  prompt.system_preamble = kPreamble;
  prompt.output_schema = kOutputSchema;

  if (!rules.empty()) {
    prompt.rules_block = "Domain rules:\n";
    int i = 1;
    for (const auto& rule : rules.rules()) {
      prompt.rules_block += std::to_string(i++) + ". " + rule.text + "\n";
    }
    prompt.rules_block.pop_back();
  }

  prompt.payload = "Representative sequences:\n";
  for (auto& rep : reps) {
    if (rep.template_counts.size() > max_templates_per_rep) {
      rep.omitted = static_cast<long>(rep.template_counts.size() - max_templates_per_rep);
      rep.template_counts.resize(max_templates_per_rep);
    }
    prompt.payload += "- seq " + std::to_string(rep.seq_id) + ":";
    for (const auto& [text, count] : rep.template_counts) {
      prompt.payload += " [" + text + "] x" + std::to_string(count) + ";";
    }
    if (rep.omitted > 0) prompt.payload += " +" + std::to_string(rep.omitted) + " more";
    prompt.payload += "\n";
  }
  prompt.payload.pop_back();

  const std::size_t size = prompt.render().size();
  if (size > context_budget) throw ContextBudgetExceeded(size, context_budget);
  return prompt;
}

// ─── Templated rules ──────────────────────────────────────────

std::string format_templated_rule(const ParsedRule& rule) {
  return "sequences containing template \"" + rule.template_text + "\" with frequency >= " +
         std::to_string(rule.min_count) + " are " + to_string(rule.label);
}

std::optional<ParsedRule> parse_templated_rule(const std::string& text) {
  const std::string t = trim(text);
  const std::string prefix = "sequences containing template \"";
  if (lowercase(t).rfind(prefix, 0) != 0) return std::nullopt;
  const auto quote_end = t.rfind('"');
  if (quote_end == std::string::npos || quote_end <= prefix.size() - 1) return std::nullopt;

  ParsedRule rule;
  rule.template_text = t.substr(prefix.size(), quote_end - prefix.size());

  const std::string rest = lowercase(t.substr(quote_end + 1));
  const std::string freq_marker = "frequency >= ";
  const auto freq_pos = rest.find(freq_marker);
  if (freq_pos == std::string::npos) return std::nullopt;
  const char* begin = rest.data() + freq_pos + freq_marker.size();
  auto [ptr, ec] = std::from_chars(begin, rest.data() + rest.size(), rule.min_count);
  if (ec != std::errc()) return std::nullopt;

  if (rest.find("are anomalous", static_cast<std::size_t>(ptr - rest.data())) !=
      std::string::npos) {
    rule.label = Label::anomalous;
  } else if (rest.find("are normal", static_cast<std::size_t>(ptr - rest.data())) !=
             std::string::npos) {
    rule.label = Label::normal;
  } else {
    return std::nullopt;
  }
  return rule;
}

// ─── Deterministic backend ────────────────────────────────────

const std::vector<std::string>& DeterministicBackend::severity_lexicon() {
  static const std::vector<std::string> lexicon{"error",  "fail",  "fatal", "exception",
                                                "denied", "bad",   "abort", "panic"};
  return lexicon;
}

DeterministicBackend::DeterministicBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {}

void DeterministicBackend::set_corpus_frequencies(std::map<std::string, double> df_fraction) {
  df_fraction_ = std::move(df_fraction);
}

ContaminationVerdict DeterministicBackend::judge_representative(
    const RenderedRepresentative& rep, const RuleSet& rules) const {
  // Rules act per template: an anomalous rule flags its template, a
  // normal rule neutralizes its template (it stops counting as
  // severity evidence). Any flagged, un-neutralized template makes the
  // representative anomalous.
  std::vector<ParsedRule> parsed;
  for (const auto& rule : rules.rules()) {
    if (auto p = parse_templated_rule(rule.text)) parsed.push_back(std::move(*p));
  }

  for (const auto& [text, count] : rep.template_counts) {
    bool flagged = false;
    bool neutralized = false;
    for (const auto& rule : parsed) {
      if (text != rule.template_text || count < rule.min_count) continue;
      if (rule.label == Label::anomalous) {
        flagged = true;
      } else {
        neutralized = true;
      }
    }
    if (!flagged && !neutralized) {
      const std::string folded = lowercase(text);
      for (const auto& term : severity_lexicon()) {
        if (folded.find(term) != std::string::npos) {
          flagged = true;
          break;
        }
      }
    }
    if (flagged && !neutralized) return ContaminationVerdict::high_contamination;
  }
  return ContaminationVerdict::low_contamination;
}

double DeterministicBackend::region_score(const std::vector<RenderedRepresentative>& reps,
                                          const RuleSet& rules) const {
  if (reps.empty()) return 0.0;
  std::size_t high = 0;
  for (const auto& rep : reps) {
    if (judge_representative(rep, rules) == ContaminationVerdict::high_contamination) ++high;
  }
  return static_cast<double>(high) / static_cast<double>(reps.size());
}

Verdict DeterministicBackend::judge(const PromptTemplate&,
                                    const std::vector<RenderedRepresentative>& reps,
                                    const RuleSet& rules) {
  Verdict v;
  std::size_t high = 0;
  for (const auto& rep : reps) {
    const auto label = judge_representative(rep, rules);
    v.per_representative.emplace_back(rep.seq_id, label);
    if (label == ContaminationVerdict::high_contamination) ++high;
  }
  v.label = 2 * high >= reps.size() ? ContaminationVerdict::high_contamination
                                    : ContaminationVerdict::low_contamination;
  v.rationale = std::to_string(high) + "/" + std::to_string(reps.size()) +
                " representatives matched severity terms or rules";
  return v;
}

std::vector<std::string> DeterministicBackend::induce(const std::vector<ErrorSample>& errors) {
  if (errors.empty()) throw Error("induce_rules requires a non-empty error set");

  // Most frequent disagreement templates, restricted to rare templates
  // so that ubiquitous traffic never becomes a rule target. The rule
  // label is the majority reference label among the samples naming the
  // template (ties anomalous).
  struct Candidate {
    long freq = 0;
    long anomalous_votes = 0;
    double df = 0.0;
    Label label = Label::anomalous;
  };
  std::map<std::string, Candidate> candidates;
  for (const auto& e : errors) {
    for (const auto& [text, count] : e.template_counts) {
      auto& c = candidates[text];
      ++c.freq;
      if (e.reference_label == Label::anomalous) ++c.anomalous_votes;
      auto it = df_fraction_.find(text);
      c.df = it == df_fraction_.end() ? 0.0 : it->second;
      (void)count;
    }
  }

  std::vector<std::pair<std::string, Candidate>> eligible;
  for (auto& [text, c] : candidates) {
    c.label = 2 * c.anomalous_votes >= c.freq ? Label::anomalous : Label::normal;
    const bool ok = c.label == Label::anomalous ? c.df <= cfg_.rule_df_ratio
                                                : c.df >= cfg_.rule_normal_df_floor;
    if (ok) eligible.emplace_back(text, c);
  }
  std::sort(eligible.begin(), eligible.end(), [](const auto& a, const auto& b) {
    if (a.second.freq != b.second.freq) return a.second.freq > b.second.freq;
    if (a.second.df != b.second.df) return a.second.df < b.second.df;
    return a.first < b.first;
  });

  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& [text, c] : eligible) {
    if (out.size() >= 5) break;
    ParsedRule rule{text, 1, c.label};
    const std::string formatted = format_templated_rule(rule);
    if (seen.insert(lowercase(formatted)).second) out.push_back(formatted);
  }
  return out;
}

// ─── Response cache ───────────────────────────────────────────

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("prompt_hash") || !j.contains("content")) continue;
    entries_[j["prompt_hash"].get<std::string>()] = j["content"].get<std::string>();
  }
}

std::string ResponseCache::prompt_hash(const std::string& prompt) {
  std::ostringstream ss;
  ss << std::hex << fnv1a64(prompt);
  return ss.str();
}

std::optional<std::string> ResponseCache::lookup(const std::string& prompt_hash) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(prompt_hash);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::store(const std::string& prompt_hash, const std::string& content) {
  std::lock_guard lock(mutex_);
  entries_[prompt_hash] = content;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app);
  if (!out) return;
  json j{{"prompt_hash", prompt_hash}, {"content", content}};
  out << j.dump() << '\n';
}

// ─── Chat backend ─────────────────────────────────────────────

ChatBackend::ChatBackend(BackendConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (!cfg_.cache_path.empty()) cache_ = std::make_unique<ResponseCache>(cfg_.cache_path);
}

ChatBackend::~ChatBackend() = default;

std::string ChatBackend::complete(const std::string& system, const std::string& user) {
  const std::string cache_key = ResponseCache::prompt_hash(system + "\n" + user);
  if (cache_) {
    if (auto hit = cache_->lookup(cache_key)) return *hit;
  }

  const auto [base, path] = split_endpoint(cfg_.endpoint);
  httplib::Client client(base);
  client.set_read_timeout(60, 0);
  client.set_connection_timeout(5, 0);

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  json body{{"model", cfg_.model_name},
            {"temperature", 0},
            {"messages",
             json::array({{{"role", "system"}, {"content", system}},
                          {{"role", "user"}, {"content", user}}})}};

  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50LL << (attempt - 1)));
    }
    ++requests_;
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) {
      last_error = "connection failed";
      continue;
    }
    if (res->status != 200) {
      last_error = "status " + std::to_string(res->status);
      continue;
    }
    json parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("choices") || parsed["choices"].empty()) {
      last_error = "malformed completion body";
      continue;
    }
    const std::string content =
        parsed["choices"][0].value("message", json::object()).value("content", std::string());
    if (cache_) cache_->store(cache_key, content);
    return content;
  }
  throw BackendUnreachable("chat backend at " + cfg_.endpoint + ": " + last_error);
}

Verdict ChatBackend::judge(const PromptTemplate& prompt,
                           const std::vector<RenderedRepresentative>&, const RuleSet&) {
  std::string user = prompt.rules_block.empty()
                         ? prompt.payload + "\n\n" + prompt.output_schema
                         : prompt.rules_block + "\n\n" + prompt.payload + "\n\n" +
                               prompt.output_schema;
  std::string content = complete(prompt.system_preamble, user);
  if (auto v = parse_verdict(content)) return *v;

  // One reprompt asking for strictly the JSON object.
  user += "\nRespond with only the JSON object.";
  content = complete(prompt.system_preamble, user);
  if (auto v = parse_verdict(content)) return *v;
  throw UnparseableResponse("no parseable label in chat reply");
}

std::vector<std::string> ChatBackend::induce(const std::vector<ErrorSample>& errors) {
  if (errors.empty()) throw Error("induce_rules requires a non-empty error set");
  std::string user =
      "A lightweight anomaly detector disagreed with reference labels on these "
      "validation sequences:\n";
  for (const auto& e : errors) user += "- " + render_error_sample(e) + "\n";
  user +=
      "Summarize at most 5 generalized system-level domain rules that explain the "
      "disagreements. Answer with a single JSON object: {\"rules\": [\"...\"]}.";

  const std::string content = complete(kPreamble, user);
  const auto block = extract_json_object(content);
  std::vector<std::string> out;
  if (block) {
    json j = json::parse(*block, nullptr, false);
    if (!j.is_discarded() && j.contains("rules") && j["rules"].is_array()) {
      std::set<std::string> seen;
      for (const auto& r : j["rules"]) {
        if (!r.is_string()) continue;
        const std::string text = trim(r.get<std::string>());
        if (text.empty() || out.size() >= 5) continue;
        if (seen.insert(lowercase(text)).second) out.push_back(text);
      }
    }
  }
  return out;
}

std::unique_ptr<EvaluatorBackend> make_backend(const BackendConfig& cfg) {
  cfg.validate();
  if (cfg.kind == BackendConfig::Kind::deterministic)
    return std::make_unique<DeterministicBackend>(cfg);
  return std::make_unique<ChatBackend>(cfg);
}

// ─── Module-level operations ──────────────────────────────────

Verdict judge_region(const std::vector<RenderedRepresentative>& reps, const RuleSet& rules,
                     EvaluatorBackend& backend, std::size_t context_budget) {
  const PromptTemplate prompt = build_prompt(rules, reps, context_budget);
  return backend.judge(prompt, reps, rules);
}

std::vector<std::string> induce_rules(const std::vector<ErrorSample>& errors,
                                      EvaluatorBackend& backend) {
  if (errors.empty()) throw Error("induce_rules requires a non-empty error set");
  auto rules = backend.induce(errors);
  if (rules.size() > 5) rules.resize(5);
  return rules;
}

std::vector<int> select_error_representatives(const EmbeddingMatrix& points,
                                              std::span<const int> error_ids, int k_nn,
                                              std::optional<double> r_min, int M) {
  if (error_ids.empty()) throw Error("error set is empty");
  if (error_ids.size() == 1) return {error_ids[0]};
  // Disagreement sets are small and diverse; a wider center budget
  // keeps every disagreement mode represented.
  const double radius = r_min ? *r_min : auto_r_min(points, error_ids);
  const RepresentativeSet reps =
      select_representatives(points, error_ids, k_nn, radius, M, 1e-6, 8);
  return reps.all();
}

}  // namespace logpurge
