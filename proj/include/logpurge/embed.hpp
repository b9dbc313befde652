#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "logpurge/core.hpp"

namespace logpurge {

struct ProviderUnreachable final : Error {
  explicit ProviderUnreachable(const std::string& msg) : Error(msg) {}
};
struct DimensionMismatch final : Error {
  explicit DimensionMismatch(const std::string& msg) : Error(msg) {}
};
struct PartialFailure final : Error {
  explicit PartialFailure(std::vector<int> failed)
      : Error("embedding failed for " + std::to_string(failed.size()) + " sequence(s)"),
        failed_ids(std::move(failed)) {}
  std::vector<int> failed_ids;
};

struct EmbedderConfig {
  enum class Kind { deterministic, external } kind = Kind::deterministic;
  std::size_t dim = 256;
  std::uint64_t seed = 0;
  std::string endpoint;                 // required for external
  std::filesystem::path cache_path;     // optional, external only
  int max_inflight = 8;
  unsigned workers = 0;                 // 0 = hardware default

  void validate() const;
};

/// Common surface for turning sequences into unit-norm d-vectors.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::vector<double> embed_sequence(const LogSequence& seq) = 0;
  virtual std::size_t dim() const = 0;
  virtual std::string tag() const = 0;

  /// Row i corresponds to seq_id i. Collects per-sequence failures and
  /// reports them together as PartialFailure.
  virtual EmbeddingMatrix embed_dataset(std::span<const LogSequence> seqs);

 protected:
  unsigned workers_ = 0;
};

/// Offline embedder: IDF-weighted template counts pushed through a
/// seed-fixed Gaussian random projection, then L2-normalized. Identical
/// corpus + seed gives a bitwise-identical matrix.
class DeterministicEmbedder final : public EmbeddingProvider {
 public:
  DeterministicEmbedder(std::size_t dim, std::uint64_t seed, unsigned workers = 0);

  /// Computes document frequencies over the corpus; must run before
  /// embedding.
  void fit(std::span<const LogSequence> seqs);

  std::vector<double> embed_sequence(const LogSequence& seq) override;
  std::size_t dim() const override { return dim_; }
  std::string tag() const override;

  /// Sparse IDF-weighted count vector (template id -> weight); the
  /// pre-projection representation.
  std::map<int, double> weighted_counts(const LogSequence& seq) const;
  double idf(int template_id) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::map<int, std::size_t> document_frequency_;
  std::map<int, std::vector<double>> columns_;  // projection columns, filled by fit
  std::size_t corpus_size_ = 0;

  std::vector<double> projection_column(int template_id) const;
};

/// Append-only vector cache keyed by a content hash of the rendered
/// sequence text. Concurrent reads, exclusive writes.
class EmbeddingCache {
 public:
  explicit EmbeddingCache(std::filesystem::path path);

  bool lookup(const std::string& key, std::size_t dim, std::vector<double>& out) const;
  void store(const std::string& key, const std::vector<double>& vec);

  static std::string content_key(const std::string& text);

 private:
  std::filesystem::path path_;
  std::map<std::string, std::vector<double>> entries_;
  mutable std::mutex mutex_;
};

/// JSON-over-HTTP embedding client: POST {"texts": [...]} to the
/// endpoint, expecting {"vectors": [[...], ...]}. Responses are cached
/// by content hash; at most max_inflight requests run concurrently.
class ExternalEmbedder final : public EmbeddingProvider {
 public:
  ExternalEmbedder(const EmbedderConfig& cfg, std::vector<Template> vocabulary);
  ~ExternalEmbedder() override;

  std::vector<double> embed_sequence(const LogSequence& seq) override;
  EmbeddingMatrix embed_dataset(std::span<const LogSequence> seqs) override;
  std::size_t dim() const override { return dim_; }
  std::string tag() const override { return "external:" + endpoint_; }

  /// Rendered text sent for one sequence (template texts in order).
  std::string render(const LogSequence& seq) const;

  /// Number of HTTP requests issued so far (cache instrumentation).
  std::size_t requests_made() const { return requests_; }

 private:
  std::size_t dim_;
  std::string endpoint_;
  int max_inflight_;
  std::map<int, std::string> template_text_;
  std::unique_ptr<EmbeddingCache> cache_;
  std::atomic<std::size_t> requests_{0};

  std::vector<std::vector<double>> fetch(const std::vector<std::string>& texts);
};

std::unique_ptr<EmbeddingProvider> make_provider(const EmbedderConfig& cfg,
                                                 std::span<const LogSequence> corpus,
                                                 std::vector<Template> vocabulary);

}  // namespace logpurge
