#include "logpurge/embed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "logpurge/rng.hpp"

// cpp-httplib is header-only; keep it out of our public headers.
#include <httplib.h>

namespace logpurge {

using nlohmann::json;

namespace {

void l2_normalize(std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
}

/// Splits "http://host:port/path" into client base and request path.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  if (scheme == std::string::npos) throw InvalidConfig("embed endpoint must include scheme");
  const auto path_pos = endpoint.find('/', scheme + 3);
  if (path_pos == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, path_pos), endpoint.substr(path_pos)};
}

}  // namespace

void EmbedderConfig::validate() const {
  if (dim < 8) throw InvalidConfig("embed.dim must be >= 8");
  if (kind == Kind::external && endpoint.empty())
    throw InvalidConfig("embed.endpoint required for external embedder");
  if (max_inflight < 1) throw InvalidConfig("embed.max_inflight must be >= 1");
}

EmbeddingMatrix EmbeddingProvider::embed_dataset(std::span<const LogSequence> seqs) {
  if (seqs.empty()) throw EmptyDataset();
  EmbeddingMatrix m;
  m.dim = dim();
  m.provider_tag = tag();
  m.data.assign(seqs.size() * m.dim, 0.0);

  std::vector<int> failed;
  std::mutex failed_mutex;
  const unsigned workers =
      seqs.size() < 256 ? 1 : (workers_ == 0 ? default_workers() : workers_);
  parallel_for(seqs.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        const auto v = embed_sequence(seqs[i]);
        std::copy(v.begin(), v.end(), m.row(i).begin());
      } catch (const Error&) {
        std::lock_guard lock(failed_mutex);
        failed.push_back(static_cast<int>(i));
      }
    }
  });
  if (!failed.empty()) {
    std::sort(failed.begin(), failed.end());
    throw PartialFailure(std::move(failed));
  }
  return m;
}

// ─── Deterministic embedder ───────────────────────────────────

DeterministicEmbedder::DeterministicEmbedder(std::size_t dim, std::uint64_t seed,
                                             unsigned workers)
    : dim_(dim), seed_(seed) {
  if (dim_ < 8) throw InvalidConfig("embed.dim must be >= 8");
  workers_ = workers;
}

void DeterministicEmbedder::fit(std::span<const LogSequence> seqs) {
  document_frequency_.clear();
  columns_.clear();
  corpus_size_ = seqs.size();
  for (const auto& seq : seqs) {
    std::vector<int> distinct(seq.template_ids.begin(), seq.template_ids.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    for (int tid : distinct) ++document_frequency_[tid];
  }
  for (const auto& [tid, df] : document_frequency_) columns_[tid] = projection_column(tid);
}

double DeterministicEmbedder::idf(int template_id) const {
  auto it = document_frequency_.find(template_id);
  const std::size_t df = it == document_frequency_.end() ? 0 : it->second;
  return 1.0 + std::log(static_cast<double>(corpus_size_ + 1) / static_cast<double>(df + 1));
}

std::map<int, double> DeterministicEmbedder::weighted_counts(const LogSequence& seq) const {
  std::map<int, long> counts;
  for (int tid : seq.template_ids) ++counts[tid];
  std::map<int, double> weighted;
  for (const auto& [tid, count] : counts) weighted[tid] = count * idf(tid);
  return weighted;
}

std::vector<double> DeterministicEmbedder::projection_column(int template_id) const {
  Rng rng(derive_seed(seed_, 0xE3B0, static_cast<std::uint64_t>(template_id)));
  std::vector<double> col(dim_);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (double& x : col) x = rng.gaussian() * scale;
  return col;
}

std::vector<double> DeterministicEmbedder::embed_sequence(const LogSequence& seq) {
  std::vector<double> out(dim_, 0.0);
  for (const auto& [tid, weight] : weighted_counts(seq)) {
    auto it = columns_.find(tid);
    const std::vector<double> col = it == columns_.end() ? projection_column(tid) : it->second;
    for (std::size_t d = 0; d < dim_; ++d) out[d] += weight * col[d];
  }
  l2_normalize(out);
  return out;
}

std::string DeterministicEmbedder::tag() const {
  return "deterministic:d" + std::to_string(dim_) + ":s" + std::to_string(seed_);
}

// ─── Cache ────────────────────────────────────────────────────

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("hash") || !j.contains("vector")) continue;
    entries_[j["hash"].get<std::string>()] = j["vector"].get<std::vector<double>>();
  }
}

std::string EmbeddingCache::content_key(const std::string& text) {
  std::ostringstream ss;
  ss << std::hex << fnv1a64(text);
  return ss.str();
}

bool EmbeddingCache::lookup(const std::string& key, std::size_t dim,
                            std::vector<double>& out) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end() || it->second.size() != dim) return false;
  out = it->second;
  return true;
}

void EmbeddingCache::store(const std::string& key, const std::vector<double>& vec) {
  std::lock_guard lock(mutex_);
  entries_[key] = vec;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app);
  if (!out) return;
  json j{{"hash", key}, {"dim", vec.size()}, {"vector", vec}};
  out << j.dump() << '\n';
}

// ─── External provider ────────────────────────────────────────

ExternalEmbedder::ExternalEmbedder(const EmbedderConfig& cfg, std::vector<Template> vocabulary)
    : dim_(cfg.dim), endpoint_(cfg.endpoint), max_inflight_(cfg.max_inflight) {
  cfg.validate();
  workers_ = cfg.workers;
  for (const auto& t : vocabulary) template_text_[t.id] = t.text();
  if (!cfg.cache_path.empty()) cache_ = std::make_unique<EmbeddingCache>(cfg.cache_path);
}

ExternalEmbedder::~ExternalEmbedder() = default;

std::string ExternalEmbedder::render(const LogSequence& seq) const {
  std::string out;
  for (int tid : seq.template_ids) {
    auto it = template_text_.find(tid);
    if (!out.empty()) out += '\n';
    out += it == template_text_.end() ? ("template_" + std::to_string(tid)) : it->second;
  }
  return out;
}

std::vector<std::vector<double>> ExternalEmbedder::fetch(const std::vector<std::string>& texts) {
  const auto [base, path] = split_endpoint(endpoint_);
  httplib::Client client(base);
  client.set_read_timeout(30, 0);
  client.set_connection_timeout(5, 0);

  json body{{"texts", texts}};
  ++requests_;
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res || res->status != 200)
    throw ProviderUnreachable("embedding service at " + endpoint_ +
                              (res ? " returned status " + std::to_string(res->status)
                                   : " is unreachable"));
  json parsed = json::parse(res->body, nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("vectors"))
    throw ProviderUnreachable("embedding service returned malformed body");
  auto vectors = parsed["vectors"].get<std::vector<std::vector<double>>>();
  if (vectors.size() != texts.size())
    throw DimensionMismatch("embedding service returned " + std::to_string(vectors.size()) +
                            " vectors for " + std::to_string(texts.size()) + " texts");
  for (const auto& v : vectors) {
    if (v.size() != dim_)
      throw DimensionMismatch("embedding service returned dim " + std::to_string(v.size()) +
                              ", expected " + std::to_string(dim_));
  }
  return vectors;
}

std::vector<double> ExternalEmbedder::embed_sequence(const LogSequence& seq) {
  const std::string text = render(seq);
  const std::string key = EmbeddingCache::content_key(text);
  std::vector<double> vec;
  if (cache_ && cache_->lookup(key, dim_, vec)) {
    l2_normalize(vec);
    return vec;
  }
  vec = fetch({text}).front();
  if (cache_) cache_->store(key, vec);
  l2_normalize(vec);
  return vec;
}

EmbeddingMatrix ExternalEmbedder::embed_dataset(std::span<const LogSequence> seqs) {
  if (seqs.empty()) throw EmptyDataset();
  EmbeddingMatrix m;
  m.dim = dim_;
  m.provider_tag = tag();
  m.data.assign(seqs.size() * dim_, 0.0);

  // Serve hits from the cache, then fetch each distinct missing text
  // once, in bounded-size batches with at most max_inflight requests
  // in flight.
  std::map<std::string, std::vector<std::size_t>> miss_rows;  // text -> row indices
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const std::string text = render(seqs[i]);
    std::vector<double> vec;
    if (cache_ && cache_->lookup(EmbeddingCache::content_key(text), dim_, vec)) {
      l2_normalize(vec);
      std::copy(vec.begin(), vec.end(), m.row(i).begin());
    } else {
      miss_rows[text].push_back(i);
    }
  }
  if (miss_rows.empty()) return m;

  std::vector<const std::pair<const std::string, std::vector<std::size_t>>*> misses;
  for (const auto& entry : miss_rows) misses.push_back(&entry);

  constexpr std::size_t kBatch = 32;
  std::vector<std::pair<std::size_t, std::size_t>> batches;  // [begin, end) into misses
  for (std::size_t b = 0; b < misses.size(); b += kBatch) {
    batches.emplace_back(b, std::min(misses.size(), b + kBatch));
  }

  std::vector<int> failed;
  std::mutex failed_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= batches.size()) return;
      const auto [begin, end] = batches[b];
      std::vector<std::string> texts;
      texts.reserve(end - begin);
      for (std::size_t k = begin; k < end; ++k) texts.push_back(misses[k]->first);
      try {
        auto vectors = fetch(texts);
        for (std::size_t k = begin; k < end; ++k) {
          auto& vec = vectors[k - begin];
          if (cache_) cache_->store(EmbeddingCache::content_key(texts[k - begin]), vec);
          l2_normalize(vec);
          for (std::size_t row : misses[k]->second)
            std::copy(vec.begin(), vec.end(), m.row(row).begin());
        }
      } catch (const Error&) {
        std::lock_guard lock(failed_mutex);
        for (std::size_t k = begin; k < end; ++k)
          for (std::size_t row : misses[k]->second) failed.push_back(static_cast<int>(row));
      }
    }
  };

  const std::size_t n_workers = std::min<std::size_t>(max_inflight_, batches.size());
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < n_workers; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  if (!failed.empty()) {
    std::sort(failed.begin(), failed.end());
    throw PartialFailure(std::move(failed));
  }
  return m;
}

std::unique_ptr<EmbeddingProvider> make_provider(const EmbedderConfig& cfg,
                                                 std::span<const LogSequence> corpus,
                                                 std::vector<Template> vocabulary) {
  cfg.validate();
  if (cfg.kind == EmbedderConfig::Kind::deterministic) {
    auto p = std::make_unique<DeterministicEmbedder>(cfg.dim, cfg.seed, cfg.workers);
    p->fit(corpus);
    return p;
  }
  return std::make_unique<ExternalEmbedder>(cfg, std::move(vocabulary));
}

}  // namespace logpurge
