#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <thread>

#include <httplib.h>

#include "logpurge/embed.hpp"
#include "test_util.hpp"

using namespace logpurge;
using testutil::make_sequence;

namespace {

std::vector<LogSequence> tiny_corpus() {
  return {make_sequence(0, {0, 0, 1, 2}), make_sequence(1, {0, 0, 1, 2}),
          make_sequence(2, {3, 4, 4}), make_sequence(3, {0, 1}),
          make_sequence(4, {2, 2, 2, 3})};
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("identical sequences embed identically") {
  auto corpus = tiny_corpus();
  DeterministicEmbedder e(64, 5);
  e.fit(corpus);
  CHECK(e.embed_sequence(corpus[0]) == e.embed_sequence(corpus[1]));
}

TEST_CASE("disjoint template sets are orthogonal before projection") {
  auto corpus = tiny_corpus();
  DeterministicEmbedder e(64, 5);
  e.fit(corpus);
  const auto wa = e.weighted_counts(corpus[0]);  // templates {0,1,2}
  const auto wb = e.weighted_counts(corpus[2]);  // templates {3,4}
  double inner = 0.0;
  for (const auto& [tid, w] : wa) {
    auto it = wb.find(tid);
    if (it != wb.end()) inner += w * it->second;
  }
  CHECK(inner == 0.0);
}

TEST_CASE("embeddings are unit norm") {
  auto corpus = tiny_corpus();
  DeterministicEmbedder e(32, 5);
  e.fit(corpus);
  for (const auto& seq : corpus) {
    const auto v = e.embed_sequence(seq);
    double norm = std::sqrt(dot(v, v));
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("matrix rows follow sequence order") {
  auto corpus = tiny_corpus();
  DeterministicEmbedder e(32, 5);
  e.fit(corpus);
  const auto m = e.embed_dataset(corpus);
  CHECK(m.rows() == corpus.size());
  CHECK(m.dim == 32);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto v = e.embed_sequence(corpus[i]);
    const auto row = m.row(i);
    CHECK(std::equal(row.begin(), row.end(), v.begin()));
  }
}

TEST_CASE("same corpus and seed give a bitwise-identical matrix") {
  auto corpus = tiny_corpus();
  auto run = [&] {
    DeterministicEmbedder e(64, 17);
    e.fit(corpus);
    return e.embed_dataset(corpus).data;
  };
  CHECK(run() == run());
}

TEST_CASE("idf strictly decreases with document frequency") {
  auto corpus = tiny_corpus();
  DeterministicEmbedder e(32, 5);
  e.fit(corpus);
  // df: template 0 appears in 3 docs, template 3 in 2, template 4 in 1.
  CHECK(e.idf(0) < e.idf(3));
  CHECK(e.idf(3) < e.idf(4));
}

TEST_CASE("dim below 8 is rejected") {
  CHECK_THROWS_AS(DeterministicEmbedder(4, 1), InvalidConfig);
}

TEST_CASE("random projection roughly preserves pairwise distances") {
  // >= 95% of sampled pairs within +-30% relative distortion at d=256.
  const std::size_t n = 400;
  Rng rng(99);
  std::vector<LogSequence> corpus;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> tids;
    const int len = 20 + static_cast<int>(rng.bounded(20));
    for (int k = 0; k < len; ++k) tids.push_back(static_cast<int>(rng.bounded(80)));
    corpus.push_back(make_sequence(static_cast<int>(i), tids));
  }
  DeterministicEmbedder e(256, 7);
  e.fit(corpus);

  // Pre-projection geometry: normalized weighted count vectors.
  auto sparse_normalized = [&](const LogSequence& s) {
    auto w = e.weighted_counts(s);
    double norm = 0;
    for (auto& [t, v] : w) norm += v * v;
    norm = std::sqrt(norm);
    for (auto& [t, v] : w) v /= norm;
    return w;
  };
  auto sparse_dist = [&](const LogSequence& a, const LogSequence& b) {
    auto wa = sparse_normalized(a), wb = sparse_normalized(b);
    for (const auto& [t, v] : wb) wa[t] -= v;
    double s = 0;
    for (const auto& [t, v] : wa) s += v * v;
    return std::sqrt(s);
  };

  const auto m = e.embed_dataset(corpus);
  std::size_t ok = 0;
  const std::size_t pairs = 300;
  for (std::size_t t = 0; t < pairs; ++t) {
    const std::size_t i = rng.bounded(n);
    std::size_t j = rng.bounded(n);
    while (j == i) j = rng.bounded(n);
    const double before = sparse_dist(corpus[i], corpus[j]);
    const double after = euclidean(m.row(i), m.row(j));
    if (before == 0.0) {
      ok += after < 1e-9;
      continue;
    }
    const double ratio = after / before;
    if (ratio > 0.7 && ratio < 1.3) ++ok;
  }
  CHECK(static_cast<double>(ok) / pairs >= 0.95);
}

// ── External provider against a loopback service ──

namespace {

struct MockEmbedService {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> requests{0};
  std::size_t dim = 16;
  bool wrong_dim = false;

  MockEmbedService() {
    server.Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      auto body = nlohmann::json::parse(req.body);
      nlohmann::json vectors = nlohmann::json::array();
      for (const auto& text : body["texts"]) {
        std::vector<double> v(wrong_dim ? dim + 1 : dim, 0.0);
        const auto h = logpurge::fnv1a64(text.get<std::string>());
        for (std::size_t k = 0; k < v.size(); ++k)
          v[k] = static_cast<double>((h >> (k % 48)) & 0xFF) + 1.0;
        vectors.push_back(v);
      }
      res.set_content(nlohmann::json{{"vectors", vectors}}.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~MockEmbedService() {
    server.stop();
    thread.join();
  }
  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port) + "/v1/embed";
  }
};

std::vector<Template> tiny_vocab() {
  return {testutil::make_template(0, "session opened for <*>"),
          testutil::make_template(1, "cache flushed"),
          testutil::make_template(2, "disk quota <*> exceeded"),
          testutil::make_template(3, "heartbeat acknowledged"),
          testutil::make_template(4, "worker resumed on <*>")};
}

}  // namespace

TEST_CASE("external provider round-trips through the wire protocol") {
  MockEmbedService service;
  EmbedderConfig cfg;
  cfg.kind = EmbedderConfig::Kind::external;
  cfg.dim = service.dim;
  cfg.endpoint = service.endpoint();
  ExternalEmbedder e(cfg, tiny_vocab());
  auto corpus = tiny_corpus();
  const auto m = e.embed_dataset(corpus);
  CHECK(m.rows() == corpus.size());
  CHECK(service.requests.load() >= 1);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    CHECK(std::sqrt(dot(row, row)) == doctest::Approx(1.0).epsilon(1e-9));
  }
  // Identical rendered text, identical vector.
  const auto v0 = e.embed_sequence(corpus[0]);
  const auto v1 = e.embed_sequence(corpus[1]);
  CHECK(v0 == v1);
}

TEST_CASE("warm cache serves embeddings with zero requests") {
  const auto dir = std::filesystem::temp_directory_path() / "lp_embed_cache_test";
  std::filesystem::remove_all(dir);
  auto corpus = tiny_corpus();
  {
    MockEmbedService service;
    EmbedderConfig cfg;
    cfg.kind = EmbedderConfig::Kind::external;
    cfg.dim = service.dim;
    cfg.endpoint = service.endpoint();
    cfg.cache_path = dir / "cache.jsonl";
    ExternalEmbedder e(cfg, tiny_vocab());
    e.embed_dataset(corpus);
    CHECK(service.requests.load() >= 1);
  }
  {
    MockEmbedService service;
    EmbedderConfig cfg;
    cfg.kind = EmbedderConfig::Kind::external;
    cfg.dim = service.dim;
    cfg.endpoint = service.endpoint();
    cfg.cache_path = dir / "cache.jsonl";
    ExternalEmbedder e(cfg, tiny_vocab());
    e.embed_dataset(corpus);
    CHECK(service.requests.load() == 0);
  }
}

TEST_CASE("one corrupted cache entry triggers exactly one re-fetch") {
  const auto dir = std::filesystem::temp_directory_path() / "lp_embed_corrupt_test";
  std::filesystem::remove_all(dir);
  auto corpus = tiny_corpus();
  MockEmbedService service;
  EmbedderConfig cfg;
  cfg.kind = EmbedderConfig::Kind::external;
  cfg.dim = service.dim;
  cfg.endpoint = service.endpoint();
  cfg.cache_path = dir / "cache.jsonl";
  {
    ExternalEmbedder e(cfg, tiny_vocab());
    e.embed_dataset(corpus);
  }
  // Flip one stored hash so a single entry misses.
  {
    std::ifstream in(cfg.cache_path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(!lines.empty());
    auto j = nlohmann::json::parse(lines.front());
    j["hash"] = "deadbeef";
    lines.front() = j.dump();
    std::ofstream out(cfg.cache_path, std::ios::trunc);
    for (const auto& l : lines) out << l << '\n';
  }
  service.requests = 0;
  ExternalEmbedder e(cfg, tiny_vocab());
  e.embed_dataset(corpus);
  CHECK(service.requests.load() == 1);
}

TEST_CASE("dimension mismatch from the service is an error") {
  MockEmbedService service;
  service.wrong_dim = true;
  EmbedderConfig cfg;
  cfg.kind = EmbedderConfig::Kind::external;
  cfg.dim = service.dim;
  cfg.endpoint = service.endpoint();
  ExternalEmbedder e(cfg, tiny_vocab());
  auto corpus = tiny_corpus();
  CHECK_THROWS_AS(e.embed_sequence(corpus[0]), DimensionMismatch);
  try {
    e.embed_dataset(corpus);
    FAIL("expected PartialFailure");
  } catch (const PartialFailure& pf) {
    // Every sequence failed; the report names each row once, in order.
    std::vector<int> expected{0, 1, 2, 3, 4};
    CHECK(pf.failed_ids == expected);
  }
}

TEST_CASE("unreachable endpoint surfaces as provider failure") {
  EmbedderConfig cfg;
  cfg.kind = EmbedderConfig::Kind::external;
  cfg.dim = 16;
  cfg.endpoint = "http://127.0.0.1:1/v1/embed";  // nothing listens here
  ExternalEmbedder e(cfg, tiny_vocab());
  auto corpus = tiny_corpus();
  CHECK_THROWS_AS(e.embed_sequence(corpus[0]), ProviderUnreachable);
}

TEST_CASE("external config requires an endpoint") {
  EmbedderConfig cfg;
  cfg.kind = EmbedderConfig::Kind::external;
  CHECK_THROWS_AS(cfg.validate(), InvalidConfig);
}
