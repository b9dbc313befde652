#include "logpurge/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "logpurge/rng.hpp"

namespace logpurge {

namespace {

// Benign vocabulary pools; none of these words hit the severity lexicon.
const std::vector<std::string> kComponents{
    "scheduler", "replica",  "cache",    "session", "heartbeat", "worker",
    "queue",     "index",    "snapshot", "router",  "monitor",   "ledger",
    "catalog",   "beacon",   "courier",  "planner", "archive",   "mirror"};
const std::vector<std::string> kActions{
    "opened",   "completed", "synced",   "started",  "flushed",  "rotated",
    "balanced", "committed", "refreshed", "acknowledged", "resumed", "compacted",
    "published", "verified", "scheduled", "drained"};
const std::vector<std::string> kObjects{
    "for user <*>",   "on node <*>",    "in shard <*>",  "for job <*>",
    "at offset <*>",  "within slot <*>", "for tenant <*>", "on volume <*>"};

// Severity-bearing phrases for burst-mode anomaly templates.
const std::vector<std::string> kBurstPhrases{
    "daemon reported bad file descriptor in <*>",
    "kernel panic on node <*>",
    "memory allocation failure in <*>",
    "io error writing block <*>",
    "task abort requested by supervisor <*>",
    "fatal machine check interrupt on <*>",
    "unhandled exception in service <*>",
    "replication failure detected on shard <*>",
    "access denied for principal <*>",
    "watchdog abort after <*> missed beats",
    "checksum error on segment <*>",
    "fatal link error on port <*>"};

// Severity-bearing phrases for sparse (residual) injections.
const std::vector<std::string> kResidualPhrases{
    "socket exception in worker <*>",
    "permission denied for user <*>",
    "retry failed after <*> attempts",
    "queue abort signalled by controller <*>",
    "stale lock error on resource <*>",
    "handshake failure with peer <*>"};

Template make_template(int id, const std::string& text) {
  Template t;
  t.id = id;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) t.tokens.push_back(tok);
  return t;
}

/// Deterministic order-2 successor set: same (pattern, a, b) always
/// yields the same candidates, giving each pattern a learnable chain.
std::vector<int> successors(std::uint64_t pattern_seed, int a, int b,
                            const std::vector<int>& pattern_vocab) {
  Rng rng(derive_seed(pattern_seed, static_cast<std::uint64_t>(a) * 131071 + 7,
                      static_cast<std::uint64_t>(b)));
  const int branch = 2;
  std::vector<int> out;
  for (int i = 0; i < branch; ++i)
    out.push_back(pattern_vocab[rng.bounded(pattern_vocab.size())]);
  return out;
}

std::vector<int> markov_walk(std::uint64_t pattern_seed, const std::vector<int>& pattern_vocab,
                             int length, Rng& rng) {
  std::vector<int> walk;
  walk.reserve(length);
  walk.push_back(pattern_vocab[0]);
  if (length > 1) walk.push_back(pattern_vocab[1 % pattern_vocab.size()]);
  while (static_cast<int>(walk.size()) < length) {
    const int a = walk[walk.size() - 2];
    const int b = walk[walk.size() - 1];
    const auto succ = successors(pattern_seed, a, b, pattern_vocab);
    // Skewed branch choice keeps transitions concentrated.
    walk.push_back(rng.uniform() < 0.75 ? succ[0] : succ[1]);
  }
  return walk;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_sequences == 0) throw InvalidConfig("synth.n must be > 0");
  if (!(anomaly_ratio >= 0 && anomaly_ratio < 0.5))
    throw InvalidConfig("synth.anomaly_ratio must be in [0, 0.5)");
  if (!(residual_rate >= 0 && residual_rate <= anomaly_ratio))
    throw InvalidConfig("synth.residual_rate must be in [0, anomaly_ratio]");
  if (n_normal_patterns < 1) throw InvalidConfig("synth.n_normal_patterns must be >= 1");
  if (n_anomaly_clusters < 1) throw InvalidConfig("synth.n_anomaly_clusters must be >= 1");
  if (min_len < 6 || max_len < min_len) throw InvalidConfig("synth length range invalid");
  if (n_carrier_patterns < 1 || n_carrier_patterns > n_normal_patterns)
    throw InvalidConfig("synth.n_carrier_patterns out of range");
  const int anomaly_templates = n_anomaly_clusters * 4 + n_residual_templates;
  if (vocab_size < anomaly_templates + n_normal_patterns * 4)
    throw InvalidConfig("synth.vocab_size too small for the requested structure");
}

SynthOutput generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::uint64_t structure_seed = derive_seed(cfg.seed, 0x57C7);
  const std::uint64_t sample_seed = derive_seed(cfg.seed, 0x5A17, cfg.sample_salt);

  SynthOutput out;

  // ── Vocabulary ──
  const int burst_per_cluster = 4;
  const int n_burst = cfg.n_anomaly_clusters * burst_per_cluster;
  const int n_residual = cfg.n_residual_templates;
  const int n_normal = cfg.vocab_size - n_burst - n_residual;

  Rng vocab_rng(derive_seed(structure_seed, 0x70CA));
  std::vector<int> normal_ids, burst_ids, residual_ids;
  for (int id = 0; id < n_normal; ++id) {
    const auto& comp = kComponents[vocab_rng.bounded(kComponents.size())];
    const auto& act = kActions[vocab_rng.bounded(kActions.size())];
    const auto& obj = kObjects[vocab_rng.bounded(kObjects.size())];
    out.templates.push_back(make_template(id, comp + " " + act + " " + obj));
    normal_ids.push_back(id);
  }
  for (int i = 0; i < n_burst; ++i) {
    const int id = n_normal + i;
    out.templates.push_back(
        make_template(id, "cluster" + std::to_string(i / burst_per_cluster) + " " +
                              kBurstPhrases[i % kBurstPhrases.size()]));
    burst_ids.push_back(id);
  }
  for (int i = 0; i < n_residual; ++i) {
    const int id = n_normal + n_burst + i;
    out.templates.push_back(make_template(id, kResidualPhrases[i % kResidualPhrases.size()]));
    residual_ids.push_back(id);
  }
  out.residual_template_ids = residual_ids;

  // ── Patterns ──
  // Each normal pattern owns a disjoint slice of the normal vocabulary
  // plus a small shared tail, so patterns are distinct but overlapping.
  const int per_pattern = std::max(4, n_normal / cfg.n_normal_patterns);
  std::vector<std::vector<int>> pattern_vocab(cfg.n_normal_patterns);
  for (int p = 0; p < cfg.n_normal_patterns; ++p) {
    for (int t = 0; t < per_pattern; ++t) {
      pattern_vocab[p].push_back(normal_ids[(p * per_pattern + t) % normal_ids.size()]);
    }
    pattern_vocab[p].push_back(normal_ids[normal_ids.size() - 1 - (p % 2)]);
  }
  std::vector<std::vector<int>> cluster_vocab(cfg.n_anomaly_clusters);
  for (int c = 0; c < cfg.n_anomaly_clusters; ++c) {
    for (int t = 0; t < burst_per_cluster; ++t)
      cluster_vocab[c].push_back(burst_ids[c * burst_per_cluster + t]);
  }

  // ── Role assignment ──
  const std::size_t n = cfg.n_sequences;
  const std::size_t n_anomalous =
      static_cast<std::size_t>(std::llround(cfg.anomaly_ratio * static_cast<double>(n)));
  const std::size_t n_sparse =
      static_cast<std::size_t>(std::llround(cfg.residual_rate * static_cast<double>(n)));
  const std::size_t n_burst_seqs = n_anomalous - std::min(n_anomalous, n_sparse);

  enum class Role : std::uint8_t { normal, burst, sparse };
  std::vector<Role> roles(n, Role::normal);
  {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng role_rng(derive_seed(sample_seed, 0x401E));
    role_rng.shuffle(order);
    for (std::size_t i = 0; i < n_burst_seqs; ++i) roles[order[i]] = Role::burst;
    for (std::size_t i = n_burst_seqs; i < n_burst_seqs + n_sparse && i < n; ++i)
      roles[order[i]] = Role::sparse;
  }

  // ── Sequences ──
  out.sequences.reserve(n);
  std::vector<long> support(out.templates.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(sample_seed, 0x5E9, i));
    const int length = cfg.min_len + static_cast<int>(rng.bounded(cfg.max_len - cfg.min_len + 1));

    LogSequence seq;
    seq.seq_id = static_cast<int>(i);
    seq.window_start = static_cast<std::int64_t>(i) * 60;
    seq.window_end = seq.window_start + 60;

    switch (roles[i]) {
      case Role::normal: {
        const int p = static_cast<int>(rng.bounded(cfg.n_normal_patterns));
        seq.template_ids =
            markov_walk(derive_seed(structure_seed, 0xA0, p), pattern_vocab[p], length, rng);
        seq.ground_truth = Label::normal;
        break;
      }
      case Role::burst: {
        const int c = static_cast<int>(rng.bounded(cfg.n_anomaly_clusters));
        seq.template_ids =
            markov_walk(derive_seed(structure_seed, 0xB0, c), cluster_vocab[c], length, rng);
        seq.ground_truth = Label::anomalous;
        break;
      }
      case Role::sparse: {
        const int p = static_cast<int>(rng.bounded(cfg.n_carrier_patterns));
        seq.template_ids =
            markov_walk(derive_seed(structure_seed, 0xA0, p), pattern_vocab[p], length, rng);
        // Inject the carrier pattern's residual template, anchored right
        // after occurrences of the pattern's lead template.
        const int x = residual_ids[p % residual_ids.size()];
        const int lead = pattern_vocab[p][0];
        const int injections = 3 + static_cast<int>(rng.bounded(2));
        int injected = 0;
        for (std::size_t pos = 0; pos < seq.template_ids.size() && injected < injections;
             ++pos) {
          if (seq.template_ids[pos] == lead) {
            seq.template_ids.insert(
                seq.template_ids.begin() + static_cast<std::ptrdiff_t>(pos) + 1, x);
            ++injected;
            ++pos;
          }
        }
        while (injected < injections) {  // lead template absent: append
          seq.template_ids.push_back(x);
          ++injected;
        }
        seq.ground_truth = Label::anomalous;
        break;
      }
    }
    for (int tid : seq.template_ids) ++support[tid];
    out.sequences.push_back(std::move(seq));
  }
  for (auto& t : out.templates) t.support_count = support[t.id];
  return out;
}

}  // namespace logpurge
