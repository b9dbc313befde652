// Command-line surface for the purification pipeline.
//
// Subcommands: parse, window, embed, synth, purge (alias: run), detect,
// eval, report. Every run writes an effective-config snapshot and a
// structured report; phase timings go to a sidecar file so reports stay
// reproducible byte for byte.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "logpurge/config.hpp"
#include "logpurge/detector.hpp"
#include "logpurge/io.hpp"
#include "logpurge/metrics.hpp"
#include "logpurge/parser.hpp"
#include "logpurge/purge.hpp"
#include "logpurge/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace logpurge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPhaseFailure = 1;
constexpr int kExitUsage = 2;

struct GlobalArgs {
  std::string config_path;
  std::string cache_dir;
  unsigned workers = 0;
  std::int64_t seed_override = -1;
};

RunConfig load_config(const GlobalArgs& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : RunConfig::from_file(g.config_path);
  if (!g.cache_dir.empty()) cfg.cache_dir = g.cache_dir;
  if (g.workers != 0) cfg.pipeline.workers = g.workers;
  if (g.seed_override >= 0) {
    cfg.pipeline.purge.seed = static_cast<std::uint64_t>(g.seed_override);
    cfg.synth.seed = static_cast<std::uint64_t>(g.seed_override);
  }
  if (!cfg.cache_dir.empty()) {
    if (cfg.pipeline.embedder.cache_path.empty())
      cfg.pipeline.embedder.cache_path = cfg.cache_dir / "embeddings.jsonl";
    if (cfg.pipeline.backend.cache_path.empty())
      cfg.pipeline.backend.cache_path = (cfg.cache_dir / "responses.jsonl").string();
  }
  return cfg;
}

int fail_phase(const std::string& phase, const std::exception& e) {
  std::cerr << "error in phase '" << phase << "': " << e.what() << "\n";
  return kExitPhaseFailure;
}

/// Minimal structural validator for the shipped report schema: checks
/// type and required fields recursively.
bool validate_against_schema(const json& value, const json& schema, std::string& error,
                             const std::string& where = "$") {
  const std::string type = schema.value("type", std::string());
  auto type_ok = [&](const std::string& t) {
    if (t == "object") return value.is_object();
    if (t == "array") return value.is_array();
    if (t == "string") return value.is_string();
    if (t == "number") return value.is_number();
    if (t == "integer") return value.is_number_integer() || value.is_number_unsigned();
    if (t == "boolean") return value.is_boolean();
    return true;
  };
  if (!type.empty() && !type_ok(type)) {
    error = where + ": expected " + type;
    return false;
  }
  if (schema.contains("required")) {
    for (const auto& req : schema["required"]) {
      if (!value.contains(req.get<std::string>())) {
        error = where + ": missing required field " + req.get<std::string>();
        return false;
      }
    }
  }
  if (schema.contains("properties") && value.is_object()) {
    for (auto it = schema["properties"].begin(); it != schema["properties"].end(); ++it) {
      if (!value.contains(it.key())) continue;
      if (!validate_against_schema(value[it.key()], it.value(), error, where + "." + it.key()))
        return false;
    }
  }
  if (schema.contains("items") && value.is_array()) {
    for (std::size_t i = 0; i < value.size(); ++i) {
      if (!validate_against_schema(value[i], schema["items"], error,
                                   where + "[" + std::to_string(i) + "]"))
        return false;
    }
  }
  return true;
}

void write_run_outputs(const fs::path& out_dir, const RunConfig& cfg,
                       const PipelineResult& result,
                       std::span<const LogSequence> sequences) {
  fs::create_directories(out_dir);
  cfg.write_snapshot(out_dir / "effective_config.json");

  std::vector<LogSequence> purified;
  purified.reserve(result.purified_ids.size());
  for (int id : result.purified_ids) purified.push_back(sequences[id]);
  io::write_sequences(out_dir / "purified.jsonl", purified);
  io::write_rules(out_dir / "rules.txt", result.rules);
  io::write_text_file(out_dir / "report.json", result.report.to_json().dump(2) + "\n");
  io::write_text_file(out_dir / "timings.json", result.report.timings_json().dump(2) + "\n");
  if (!result.layouts.empty()) {
    std::ofstream layout_out(out_dir / "layout.jsonl");
    for (const auto& row : result.layouts) {
      layout_out << json{{"seq_id", row.seq_id},
                         {"x", row.x},
                         {"y", row.y},
                         {"region_id", row.region_id}}
                        .dump()
                 << '\n';
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"log training-set purification pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalArgs global;
  app.add_option("--config", global.config_path, "JSON config file (flat namespaced keys)");
  app.add_option("--cache-dir", global.cache_dir, "directory for embedding/response caches");
  app.add_option("--workers", global.workers, "bound on parallel fan-out");
  app.add_option("--seed", global.seed_override, "override the config seed");

  // ── parse ──
  auto* parse_cmd = app.add_subcommand("parse", "mine templates from a raw log file");
  std::string parse_input, parse_out_dir = ".";
  FieldLayout layout;
  int label_index = -1;
  double sim_threshold = -1;
  int depth = -1;
  parse_cmd->add_option("--input", parse_input, "raw log file")->required();
  parse_cmd->add_option("--out-dir", parse_out_dir, "output directory");
  parse_cmd->add_option("--ts-index", layout.timestamp_index, "timestamp field index");
  parse_cmd->add_option("--msg-start", layout.message_start, "first message field index");
  parse_cmd->add_option("--label-index", label_index, "ground-truth field index (optional)");
  parse_cmd->add_option("--normal-token", layout.normal_token, "label value meaning normal");
  parse_cmd->add_option("--sim-threshold", sim_threshold, "template similarity threshold");
  parse_cmd->add_option("--depth", depth, "parse tree depth");

  // ── window ──
  auto* window_cmd = app.add_subcommand("window", "group records into sliding windows");
  std::string window_records, window_out = "sequences.jsonl";
  std::int64_t window_len = -1, stride = -1;
  window_cmd->add_option("--records", window_records, "records.jsonl input")->required();
  window_cmd->add_option("--out", window_out, "sequences output");
  window_cmd->add_option("--window-len", window_len, "window length, seconds (default 60)");
  window_cmd->add_option("--stride", stride, "stride, seconds (default 30)");

  // ── embed ──
  auto* embed_cmd = app.add_subcommand("embed", "embed sequences to vectors");
  std::string embed_seqs, embed_templates, embed_out = "embeddings.jsonl";
  embed_cmd->add_option("--sequences", embed_seqs, "sequences.jsonl")->required();
  embed_cmd->add_option("--templates", embed_templates, "templates.jsonl")->required();
  embed_cmd->add_option("--out", embed_out, "embedding dump output");

  // ── synth ──
  auto* synth_cmd = app.add_subcommand("synth", "generate a labeled synthetic corpus");
  std::string synth_out_dir = ".";
  std::size_t synth_n = 0;
  double synth_ratio = -1, synth_residual = -1;
  synth_cmd->add_option("--out-dir", synth_out_dir, "output directory");
  synth_cmd->add_option("--n", synth_n, "sequence count");
  synth_cmd->add_option("--anomaly-ratio", synth_ratio, "anomalous corpus fraction");
  synth_cmd->add_option("--residual-rate", synth_residual, "sparse-anomaly corpus fraction");

  // ── purge ──
  auto* purge_cmd = app.add_subcommand("purge", "run the purification pipeline");
  purge_cmd->alias("run");
  std::string purge_seqs, purge_templates, purge_raw, purge_out_dir = "purge_out";
  std::string strategy_flag, backend_flag;
  double alpha_flag = -1;
  bool with_labels = false, dump_layouts = false;
  purge_cmd->add_option("--sequences", purge_seqs, "sequences.jsonl input");
  purge_cmd->add_option("--templates", purge_templates, "templates.jsonl input");
  purge_cmd->add_option("--raw", purge_raw, "raw log file (parsed + windowed first)");
  purge_cmd->add_option("--ts-index", layout.timestamp_index, "timestamp field index (raw mode)");
  purge_cmd->add_option("--msg-start", layout.message_start, "message start index (raw mode)");
  purge_cmd->add_option("--label-index", label_index, "label field index (raw mode)");
  purge_cmd->add_option("--out-dir", purge_out_dir, "output directory");
  purge_cmd->add_option("--strategy", strategy_flag, "logpurge|pluto");
  purge_cmd->add_option("--backend", backend_flag, "deterministic|chat");
  purge_cmd->add_option("--alpha", alpha_flag, "dominance baseline scaling coefficient");
  bool no_stage2 = false;
  purge_cmd->add_flag("--no-stage2", no_stage2, "skip the subdivision stage (ablation)");
  purge_cmd->add_flag("--with-labels", with_labels, "use ground truth as reference labels");
  purge_cmd->add_flag("--dump-layouts", dump_layouts, "write stage-2 layout rows");
  purge_cmd->add_option("--window-len", window_len, "window length (raw mode)");
  purge_cmd->add_option("--stride", stride, "stride (raw mode)");

  // ── detect ──
  auto* detect_cmd = app.add_subcommand("detect", "train or apply the n-gram detector");
  std::string detect_train, detect_model, detect_input, detect_out = "predictions.jsonl";
  int detect_top_k = 0;
  detect_cmd->add_option("--train", detect_train, "purified sequences to train on");
  detect_cmd->add_option("--model", detect_model, "model file")->required();
  detect_cmd->add_option("--input", detect_input, "sequences to score");
  detect_cmd->add_option("--out", detect_out, "predictions output");
  detect_cmd->add_option("--top-k", detect_top_k, "prediction cut (default from model)");

  // ── eval ──
  auto* eval_cmd = app.add_subcommand("eval", "metrics over prediction files");
  std::string eval_predictions, eval_sequences;
  eval_cmd->add_option("--predictions", eval_predictions, "predictions.jsonl")->required();
  eval_cmd->add_option("--sequences", eval_sequences, "labeled sequences.jsonl")->required();

  // ── report ──
  auto* report_cmd = app.add_subcommand("report", "validate and summarize a report");
  std::string report_path, schema_path;
  report_cmd->add_option("--report", report_path, "report.json")->required();
  report_cmd->add_option("--schema", schema_path, "schema file (default: shipped schema)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  RunConfig cfg;
  try {
    cfg = load_config(global);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (label_index >= 0) layout.label_index = label_index;
  if (sim_threshold > 0) cfg.parser_sim_threshold = sim_threshold;
  if (depth > 0) cfg.parser_depth = depth;
  if (window_len > 0) cfg.pipeline.purge.window_len = window_len;
  if (stride > 0) cfg.pipeline.purge.stride = stride;

  try {
    if (parse_cmd->parsed()) {
      ParseTree tree(cfg.parser_depth, cfg.parser_sim_threshold, cfg.parser_max_children);
      const auto records = parse_file(parse_input, layout, tree);
      const auto summary = validate_dataset(records);
      io::write_records(fs::path(parse_out_dir) / "records.jsonl", records);
      io::write_templates(fs::path(parse_out_dir) / "templates.jsonl", tree.templates());
      std::cout << "parsed " << summary.count << " records into " << tree.templates().size()
                << " templates (span " << summary.time_span() << "s)\n";
      return kExitOk;
    }

    if (window_cmd->parsed()) {
      const auto records = io::read_records(window_records);
      const auto sequences =
          window_sequences(records, cfg.pipeline.purge.window_len, cfg.pipeline.purge.stride);
      io::write_sequences(window_out, sequences);
      std::cout << "windowed " << records.size() << " records into " << sequences.size()
                << " sequences\n";
      return kExitOk;
    }

    if (embed_cmd->parsed()) {
      const auto sequences = io::read_sequences(embed_seqs);
      const auto templates = io::read_templates(embed_templates);
      EmbedderConfig ecfg = cfg.pipeline.embedder;
      ecfg.seed = cfg.pipeline.purge.seed;
      auto provider = make_provider(ecfg, sequences, templates);
      const auto matrix = provider->embed_dataset(sequences);
      std::ofstream out(embed_out);
      for (std::size_t i = 0; i < matrix.rows(); ++i) {
        const auto row = matrix.row(i);
        out << json{{"seq_id", i}, {"v", std::vector<double>(row.begin(), row.end())}}.dump()
            << '\n';
      }
      std::cout << "embedded " << matrix.rows() << " sequences at dim " << matrix.dim << " ("
                << matrix.provider_tag << ")\n";
      return kExitOk;
    }

    if (synth_cmd->parsed()) {
      SynthConfig scfg = cfg.synth;
      if (synth_n > 0) scfg.n_sequences = synth_n;
      if (synth_ratio > 0) scfg.anomaly_ratio = synth_ratio;
      if (synth_residual >= 0) scfg.residual_rate = synth_residual;
      const auto corpus = generate(scfg);
      io::write_sequences(fs::path(synth_out_dir) / "sequences.jsonl", corpus.sequences);
      io::write_templates(fs::path(synth_out_dir) / "templates.jsonl", corpus.templates);
      cfg.write_snapshot(fs::path(synth_out_dir) / "effective_config.json");
      std::cout << "generated " << corpus.sequences.size() << " sequences over "
                << corpus.templates.size() << " templates\n";
      return kExitOk;
    }

    if (purge_cmd->parsed()) {
      std::vector<LogSequence> sequences;
      std::vector<Template> templates;
      if (!purge_raw.empty()) {
        ParseTree tree(cfg.parser_depth, cfg.parser_sim_threshold, cfg.parser_max_children);
        const auto records = parse_file(purge_raw, layout, tree);
        sequences = window_sequences(records, cfg.pipeline.purge.window_len,
                                     cfg.pipeline.purge.stride);
        templates = tree.templates();
      } else if (!purge_seqs.empty() && !purge_templates.empty()) {
        sequences = io::read_sequences(purge_seqs);
        templates = io::read_templates(purge_templates);
      } else {
        std::cerr << "purge needs either --raw or --sequences + --templates\n";
        return kExitUsage;
      }

      PipelineOptions opts = cfg.pipeline;
      if (!strategy_flag.empty()) opts.strategy = strategy_flag;
      if (!backend_flag.empty()) {
        if (backend_flag == "deterministic") {
          opts.backend.kind = BackendConfig::Kind::deterministic;
        } else if (backend_flag == "chat") {
          opts.backend.kind = BackendConfig::Kind::chat_service;
        } else {
          std::cerr << "unknown backend: " << backend_flag << "\n";
          return kExitUsage;
        }
      }
      if (alpha_flag > 0) opts.pluto.alpha = alpha_flag;
      opts.with_labels = opts.with_labels || with_labels;
      opts.dump_layouts = opts.dump_layouts || dump_layouts;
      if (no_stage2) opts.stage2_enabled = false;
      if (opts.strategy != "logpurge" && opts.strategy != "pluto") {
        std::cerr << "unknown strategy: " << opts.strategy << "\n";
        return kExitUsage;
      }

      RunConfig effective = cfg;
      effective.pipeline = opts;
      const auto result = run_pipeline(sequences, templates, opts);
      write_run_outputs(purge_out_dir, effective, result, sequences);
      std::cout << "retained " << result.report.retained << " of "
                << result.report.n_candidates << " candidate sequences";
      if (result.report.sp) std::cout << " (SP " << *result.report.sp << ")";
      if (result.report.crr) std::cout << " (CRR " << *result.report.crr << ")";
      std::cout << "\n";
      return kExitOk;
    }

    if (detect_cmd->parsed()) {
      if (!detect_train.empty()) {
        const auto train_seqs = io::read_sequences(detect_train);
        const auto model = NgramModel::train(train_seqs, cfg.pipeline.detector_order,
                                             cfg.pipeline.detector_top_k);
        model.save(detect_model);
        std::cout << "trained detector on " << train_seqs.size() << " sequences ("
                  << model.context_count() << " contexts)\n";
        return kExitOk;
      }
      if (detect_input.empty()) {
        std::cerr << "detect needs --train or --input\n";
        return kExitUsage;
      }
      const auto model = NgramModel::load(detect_model);
      const auto sequences = io::read_sequences(detect_input);
      std::vector<io::PredictionRow> rows;
      for (const auto& seq : sequences) {
        const auto pred = model.predict_sequence(seq, detect_top_k);
        rows.push_back({seq.seq_id, pred.label, pred.too_short});
      }
      io::write_predictions(detect_out, rows);
      std::cout << "scored " << rows.size() << " sequences\n";
      return kExitOk;
    }

    if (eval_cmd->parsed()) {
      const auto predictions = io::read_predictions(eval_predictions);
      const auto sequences = io::read_sequences(eval_sequences);
      std::vector<Label> pred, truth;
      for (const auto& row : predictions) {
        if (row.seq_id < 0 || static_cast<std::size_t>(row.seq_id) >= sequences.size())
          continue;
        if (!sequences[row.seq_id].ground_truth) continue;
        pred.push_back(row.predicted);
        truth.push_back(*sequences[row.seq_id].ground_truth);
      }
      if (truth.empty()) throw NoLabels();
      const auto r = prf1(pred, truth);
      json out{{"precision", r.precision},
               {"recall", r.recall},
               {"f1", r.f1},
               {"tp", r.tp},
               {"fp", r.fp},
               {"fn", r.fn},
               {"tn", r.tn},
               {"undefined_flags",
                {{"precision", r.precision_undefined},
                 {"recall", r.recall_undefined},
                 {"f1", r.f1_undefined}}}};
      std::cout << out.dump(2) << "\n";
      return kExitOk;
    }

    if (report_cmd->parsed()) {
      const json report = json::parse(io::read_text_file(report_path));
      fs::path schema_file = schema_path.empty()
                                 ? fs::path(LOGPURGE_SCHEMA_DIR) / "report.schema.json"
                                 : fs::path(schema_path);
      const json schema = json::parse(io::read_text_file(schema_file));
      std::string error;
      if (!validate_against_schema(report, schema, error)) {
        std::cerr << "report does not match schema: " << error << "\n";
        return kExitPhaseFailure;
      }
      std::cout << "report ok: strategy=" << report.value("strategy", std::string())
                << " retained=" << report["counts"].value("retained", 0)
                << " removed=" << report["counts"].value("removed", 0) << "\n";
      return kExitOk;
    }
  } catch (const InvalidConfig& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    return fail_phase(app.get_subcommands().front()->get_name(), e);
  }
  return kExitUsage;
}
