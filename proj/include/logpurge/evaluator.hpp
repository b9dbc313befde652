#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "logpurge/core.hpp"

namespace logpurge {

struct ContextBudgetExceeded final : Error {
  explicit ContextBudgetExceeded(std::size_t size, std::size_t budget)
      : Error("rendered prompt of " + std::to_string(size) + " chars exceeds budget " +
              std::to_string(budget)) {}
};
struct BackendUnreachable final : Error {
  explicit BackendUnreachable(const std::string& msg) : Error(msg) {}
};
struct UnparseableResponse final : Error {
  explicit UnparseableResponse(const std::string& msg) : Error(msg) {}
};

/// One representative sequence rendered as template texts with counts,
/// sorted by count descending (ties by template id).
struct RenderedRepresentative {
  int seq_id = 0;
  std::vector<std::pair<std::string, long>> template_counts;
  long omitted = 0;  // entries dropped by prompt truncation
};

RenderedRepresentative render_representative(const LogSequence& seq,
                                             std::span<const Template> vocabulary);

struct PromptTemplate {
  std::string system_preamble;
  std::string rules_block;
  std::string payload;
  std::string output_schema;

  std::string render() const;
};

struct Verdict {
  ContaminationVerdict label = ContaminationVerdict::low_contamination;
  std::string rationale;
  std::vector<std::pair<int, ContaminationVerdict>> per_representative;
};

struct BackendConfig {
  enum class Kind { chat_service, deterministic } kind = Kind::deterministic;
  std::string endpoint;
  std::string model_name = "gpt-4o";
  int max_retries = 3;
  std::string cache_path;
  std::string api_key_env = "LOGPURGE_API_KEY";
  std::size_t context_budget = 32768;
  // Deterministic rule induction: anomalous rules may only name rare
  // templates, normal rules only common ones. Anomalies are rare;
  // letting a disagreement whitelist a rare template would delete the
  // very evidence the subdivision stage needs.
  double rule_df_ratio = 0.2;         // ceiling for anomalous-rule targets
  double rule_normal_df_floor = 0.05; // floor for normal-rule targets
  // Chat requests always carry temperature 0: consistency over creativity.

  void validate() const;
};

/// Detector/reference disagreement fed back for rule induction.
struct ErrorSample {
  int seq_id = 0;
  std::vector<std::pair<std::string, long>> template_counts;
  Label detector_label = Label::normal;
  Label reference_label = Label::normal;
};

class EvaluatorBackend {
 public:
  virtual ~EvaluatorBackend() = default;

  virtual Verdict judge(const PromptTemplate& prompt,
                        const std::vector<RenderedRepresentative>& reps,
                        const RuleSet& rules) = 0;
  virtual std::vector<std::string> induce(const std::vector<ErrorSample>& errors) = 0;
  virtual std::string name() const = 0;
};

/// Machine-checkable rule emitted by the deterministic backend:
///   sequences containing template "<text>" with frequency >= N are <label>
struct ParsedRule {
  std::string template_text;
  long min_count = 1;
  Label label = Label::anomalous;
};

std::optional<ParsedRule> parse_templated_rule(const std::string& text);
std::string format_templated_rule(const ParsedRule& rule);

/// Offline scorer: a representative is anomalous when any template text
/// hits the severity lexicon or an anomalous rule; normal-labeled rules
/// override. Region verdict is the representative majority, ties high.
class DeterministicBackend final : public EvaluatorBackend {
 public:
  explicit DeterministicBackend(BackendConfig cfg = {});

  Verdict judge(const PromptTemplate& prompt, const std::vector<RenderedRepresentative>& reps,
                const RuleSet& rules) override;
  std::vector<std::string> induce(const std::vector<ErrorSample>& errors) override;
  std::string name() const override { return "deterministic"; }

  /// Fraction of representatives judged anomalous; the stage-2
  /// percentile cut operates on this score.
  double region_score(const std::vector<RenderedRepresentative>& reps,
                      const RuleSet& rules) const;

  ContaminationVerdict judge_representative(const RenderedRepresentative& rep,
                                            const RuleSet& rules) const;

  /// Corpus document-frequency fractions per template text; bounds
  /// which templates rule induction may name.
  void set_corpus_frequencies(std::map<std::string, double> df_fraction);

  static const std::vector<std::string>& severity_lexicon();

 private:
  BackendConfig cfg_;
  std::map<std::string, double> df_fraction_;
};

/// Cache of chat responses keyed by prompt hash; append-only file.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path path);

  std::optional<std::string> lookup(const std::string& prompt_hash) const;
  void store(const std::string& prompt_hash, const std::string& content);

  static std::string prompt_hash(const std::string& prompt);

 private:
  std::filesystem::path path_;
  std::map<std::string, std::string> entries_;
  mutable std::mutex mutex_;
};

/// JSON-over-HTTP chat-completion client with retries and a response
/// cache. Requests: {model, temperature: 0, messages: [...]}; the label
/// is extracted from the first JSON object in the reply, with one
/// reprompt on parse failure.
class ChatBackend final : public EvaluatorBackend {
 public:
  explicit ChatBackend(BackendConfig cfg);
  ~ChatBackend() override;

  Verdict judge(const PromptTemplate& prompt, const std::vector<RenderedRepresentative>& reps,
                const RuleSet& rules) override;
  std::vector<std::string> induce(const std::vector<ErrorSample>& errors) override;
  std::string name() const override { return "chat:" + cfg_.model_name; }

  std::size_t requests_made() const { return requests_; }

 private:
  BackendConfig cfg_;
  std::unique_ptr<ResponseCache> cache_;
  std::atomic<std::size_t> requests_{0};

  std::string complete(const std::string& system, const std::string& user);
};

std::unique_ptr<EvaluatorBackend> make_backend(const BackendConfig& cfg);

/// Deterministic prompt construction. Representatives are truncated to
/// their 50 most frequent templates; rules render in insertion order.
PromptTemplate build_prompt(const RuleSet& rules, std::vector<RenderedRepresentative> reps,
                            std::size_t context_budget = 32768,
                            std::size_t max_templates_per_rep = 50);

Verdict judge_region(const std::vector<RenderedRepresentative>& reps, const RuleSet& rules,
                     EvaluatorBackend& backend, std::size_t context_budget = 32768);

/// Asks the backend for generalized rules explaining the disagreements
/// (at most 5; duplicates case-folded away).
std::vector<std::string> induce_rules(const std::vector<ErrorSample>& errors,
                                      EvaluatorBackend& backend);

/// Representative subset of an error set, reusing the density-peak
/// selection over the error embeddings.
std::vector<int> select_error_representatives(const EmbeddingMatrix& points,
                                              std::span<const int> error_ids, int k_nn,
                                              std::optional<double> r_min, int M);

}  // namespace logpurge
