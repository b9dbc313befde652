#include "logpurge/config.hpp"

#include <fstream>
#include <set>

namespace logpurge {

using nlohmann::json;

namespace {

/// Typed accessors over the flat key map; every read marks the key as
/// known so leftovers can be rejected.
class KeyReader {
 public:
  explicit KeyReader(const json& j) : j_(j) {}

  template <typename T>
  void get(const char* key, T& out) {
    known_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw InvalidConfig(std::string("config key has wrong type: ") + key);
    }
  }

  void get_r_min(const char* key, std::optional<double>& out) {
    known_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_string()) {
      if (lowercase(it->get<std::string>()) != "auto")
        throw InvalidConfig("regions.r_min must be a number or \"auto\"");
      out = std::nullopt;
    } else if (it->is_number()) {
      out = it->get<double>();
    } else {
      throw InvalidConfig("regions.r_min must be a number or \"auto\"");
    }
  }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!known_.count(it.key()))
        throw InvalidConfig("unknown config key: " + it.key());
    }
  }

 private:
  const json& j_;
  std::set<std::string> known_;
};

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw InvalidConfig("config root must be a JSON object");
  RunConfig cfg;
  KeyReader r(j);

  auto& purge = cfg.pipeline.purge;
  std::uint64_t seed = purge.seed;
  r.get("seed", seed);
  purge.seed = seed;
  r.get("workers", cfg.pipeline.workers);

  r.get("window.len", purge.window_len);
  r.get("window.stride", purge.stride);

  r.get("parser.depth", cfg.parser_depth);
  r.get("parser.sim_threshold", cfg.parser_sim_threshold);
  r.get("parser.max_children", cfg.parser_max_children);

  auto& embed = cfg.pipeline.embedder;
  std::string embed_kind = "deterministic";
  r.get("embed.kind", embed_kind);
  if (embed_kind == "deterministic") {
    embed.kind = EmbedderConfig::Kind::deterministic;
  } else if (embed_kind == "external") {
    embed.kind = EmbedderConfig::Kind::external;
  } else {
    throw InvalidConfig("embed.kind must be deterministic or external");
  }
  r.get("embed.dim", embed.dim);
  r.get("embed.endpoint", embed.endpoint);
  std::string embed_cache;
  r.get("embed.cache_path", embed_cache);
  if (!embed_cache.empty()) embed.cache_path = embed_cache;
  r.get("embed.max_inflight", embed.max_inflight);

  r.get("regions.K", purge.K);
  r.get("regions.k_nn", purge.k_nn);
  r.get("regions.epsilon", purge.epsilon);
  r.get_r_min("regions.r_min", purge.r_min);
  r.get("regions.M", purge.M);

  r.get("stage1.n_max", purge.n_max);
  r.get("stage1.validation_fraction", purge.validation_fraction);
  r.get("stage2.min_size", purge.stage2_min_size);
  r.get("stage2.percentile", purge.percentile);
  r.get("stage2.enabled", cfg.pipeline.stage2_enabled);

  auto& proj = cfg.pipeline.projection;
  r.get("projection.perplexity", proj.perplexity);
  r.get("projection.iterations", proj.iterations);
  r.get("projection.learning_rate", proj.learning_rate);
  r.get("projection.early_exaggeration", proj.early_exaggeration);
  r.get("projection.exaggeration_iters", proj.exaggeration_iters);

  auto& backend = cfg.pipeline.backend;
  std::string backend_kind = "deterministic";
  r.get("evaluator.kind", backend_kind);
  if (backend_kind == "deterministic") {
    backend.kind = BackendConfig::Kind::deterministic;
  } else if (backend_kind == "chat" || backend_kind == "chat_service") {
    backend.kind = BackendConfig::Kind::chat_service;
  } else {
    throw InvalidConfig("evaluator.kind must be deterministic or chat");
  }
  r.get("evaluator.endpoint", backend.endpoint);
  r.get("evaluator.model", backend.model_name);
  r.get("evaluator.max_retries", backend.max_retries);
  r.get("evaluator.cache_path", backend.cache_path);
  r.get("evaluator.api_key_env", backend.api_key_env);
  r.get("evaluator.context_budget", backend.context_budget);
  r.get("evaluator.rule_df_ratio", backend.rule_df_ratio);
  r.get("evaluator.rule_normal_df_floor", backend.rule_normal_df_floor);

  r.get("detector.n", cfg.pipeline.detector_order);
  r.get("detector.top_k", cfg.pipeline.detector_top_k);

  r.get("pluto.alpha", cfg.pipeline.pluto.alpha);
  std::string spike = "max_gap";
  r.get("pluto.spike_method", spike);
  if (spike == "max_gap") {
    cfg.pipeline.pluto.spike_method = PlutoParams::SpikeMethod::max_gap;
  } else if (spike == "percentile") {
    cfg.pipeline.pluto.spike_method = PlutoParams::SpikeMethod::percentile;
  } else {
    throw InvalidConfig("pluto.spike_method must be max_gap or percentile");
  }
  r.get("pluto.spike_percentile", cfg.pipeline.pluto.spike_percentile);

  r.get("strategy", cfg.pipeline.strategy);
  if (cfg.pipeline.strategy != "logpurge" && cfg.pipeline.strategy != "pluto")
    throw InvalidConfig("strategy must be logpurge or pluto");
  r.get("with_labels", cfg.pipeline.with_labels);
  r.get("report.layout_dump", cfg.pipeline.dump_layouts);

  r.get("synth.n", cfg.synth.n_sequences);
  r.get("synth.anomaly_ratio", cfg.synth.anomaly_ratio);
  r.get("synth.residual_rate", cfg.synth.residual_rate);
  r.get("synth.n_normal_patterns", cfg.synth.n_normal_patterns);
  r.get("synth.n_anomaly_clusters", cfg.synth.n_anomaly_clusters);
  r.get("synth.vocab_size", cfg.synth.vocab_size);
  r.get("synth.min_len", cfg.synth.min_len);
  r.get("synth.max_len", cfg.synth.max_len);
  r.get("synth.n_residual_templates", cfg.synth.n_residual_templates);
  r.get("synth.n_carrier_patterns", cfg.synth.n_carrier_patterns);
  r.get("synth.sample_salt", cfg.synth.sample_salt);
  cfg.synth.seed = purge.seed == 0 ? cfg.synth.seed : purge.seed;

  std::string cache_dir;
  r.get("cache_dir", cache_dir);
  if (!cache_dir.empty()) cfg.cache_dir = cache_dir;

  r.reject_unknown();
  return cfg;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config file: " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw InvalidConfig("config file is not valid JSON: " + path.string());
  return from_json(j);
}

json RunConfig::to_json() const {
  const auto& p = pipeline;
  json j;
  j["seed"] = p.purge.seed;
  j["workers"] = p.workers;
  j["window.len"] = p.purge.window_len;
  j["window.stride"] = p.purge.stride;
  j["parser.depth"] = parser_depth;
  j["parser.sim_threshold"] = parser_sim_threshold;
  j["parser.max_children"] = parser_max_children;
  j["embed.kind"] =
      p.embedder.kind == EmbedderConfig::Kind::deterministic ? "deterministic" : "external";
  j["embed.dim"] = p.embedder.dim;
  j["embed.endpoint"] = p.embedder.endpoint;
  j["embed.cache_path"] = p.embedder.cache_path.string();
  j["embed.max_inflight"] = p.embedder.max_inflight;
  j["regions.K"] = p.purge.K;
  j["regions.k_nn"] = p.purge.k_nn;
  j["regions.epsilon"] = p.purge.epsilon;
  if (p.purge.r_min) {
    j["regions.r_min"] = *p.purge.r_min;
  } else {
    j["regions.r_min"] = "auto";
  }
  j["regions.M"] = p.purge.M;
  j["stage1.n_max"] = p.purge.n_max;
  j["stage1.validation_fraction"] = p.purge.validation_fraction;
  j["stage2.min_size"] = p.purge.stage2_min_size;
  j["stage2.percentile"] = p.purge.percentile;
  j["stage2.enabled"] = p.stage2_enabled;
  j["projection.perplexity"] = p.projection.perplexity;
  j["projection.iterations"] = p.projection.iterations;
  j["projection.learning_rate"] = p.projection.learning_rate;
  j["projection.early_exaggeration"] = p.projection.early_exaggeration;
  j["projection.exaggeration_iters"] = p.projection.exaggeration_iters;
  j["evaluator.kind"] =
      p.backend.kind == BackendConfig::Kind::deterministic ? "deterministic" : "chat";
  j["evaluator.endpoint"] = p.backend.endpoint;
  j["evaluator.model"] = p.backend.model_name;
  j["evaluator.max_retries"] = p.backend.max_retries;
  j["evaluator.cache_path"] = p.backend.cache_path;
  j["evaluator.api_key_env"] = p.backend.api_key_env;
  j["evaluator.context_budget"] = p.backend.context_budget;
  j["evaluator.rule_df_ratio"] = p.backend.rule_df_ratio;
  j["evaluator.rule_normal_df_floor"] = p.backend.rule_normal_df_floor;
  j["detector.n"] = p.detector_order;
  j["detector.top_k"] = p.detector_top_k;
  j["pluto.alpha"] = p.pluto.alpha;
  j["pluto.spike_method"] =
      p.pluto.spike_method == PlutoParams::SpikeMethod::max_gap ? "max_gap" : "percentile";
  j["pluto.spike_percentile"] = p.pluto.spike_percentile;
  j["strategy"] = p.strategy;
  j["with_labels"] = p.with_labels;
  j["report.layout_dump"] = p.dump_layouts;
  j["synth.n"] = synth.n_sequences;
  j["synth.anomaly_ratio"] = synth.anomaly_ratio;
  j["synth.residual_rate"] = synth.residual_rate;
  j["synth.n_normal_patterns"] = synth.n_normal_patterns;
  j["synth.n_anomaly_clusters"] = synth.n_anomaly_clusters;
  j["synth.vocab_size"] = synth.vocab_size;
  j["synth.min_len"] = synth.min_len;
  j["synth.max_len"] = synth.max_len;
  j["synth.n_residual_templates"] = synth.n_residual_templates;
  j["synth.n_carrier_patterns"] = synth.n_carrier_patterns;
  j["synth.sample_salt"] = synth.sample_salt;
  j["cache_dir"] = cache_dir.string();
  return j;
}

void RunConfig::write_snapshot(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write config snapshot: " + path.string());
  out << to_json().dump(2) << '\n';
}

}  // namespace logpurge
