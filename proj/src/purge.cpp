#include "logpurge/purge.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "logpurge/detector.hpp"
#include "logpurge/metrics.hpp"
#include "logpurge/regions.hpp"
#include "logpurge/rng.hpp"

namespace logpurge {

using nlohmann::json;

namespace {

class PhaseClock {
 public:
  PhaseClock() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

double percentile_nearest_rank(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(p / 100.0 * static_cast<double>(values.size())));
  return values[std::min(values.size() - 1, std::max<std::size_t>(rank, 1) - 1)];
}

std::vector<Region> build_regions(const Partition& part,
                                  const std::vector<int>& candidates) {
  std::vector<Region> regions(part.k());
  for (int r = 0; r < part.k(); ++r) {
    regions[r].region_id = r;
    const auto c = part.centroid(r);
    regions[r].centroid.assign(c.begin(), c.end());
  }
  for (std::size_t i = 0; i < part.assignments.size(); ++i) {
    regions[part.assignments[i]].member_ids.push_back(candidates[i]);
  }
  regions.erase(std::remove_if(regions.begin(), regions.end(),
                               [](const Region& r) { return r.member_ids.empty(); }),
                regions.end());
  return regions;
}

std::vector<RenderedRepresentative> render_reps(const std::vector<int>& rep_ids,
                                                std::span<const LogSequence> sequences,
                                                std::span<const Template> vocabulary) {
  std::vector<RenderedRepresentative> out;
  out.reserve(rep_ids.size());
  for (int id : rep_ids) out.push_back(render_representative(sequences[id], vocabulary));
  return out;
}

std::optional<double> train_purity(const std::set<int>& train_set,
                                   std::span<const LogSequence> sequences) {
  if (train_set.empty()) return std::nullopt;
  std::size_t labeled = 0, normal = 0;
  for (int id : train_set) {
    if (!sequences[id].ground_truth) return std::nullopt;  // unlabeled corpus
    ++labeled;
    if (*sequences[id].ground_truth == Label::normal) ++normal;
  }
  return static_cast<double>(normal) / static_cast<double>(labeled);
}

/// Reference label for a validation sequence: its nearest region's
/// verdict (low -> normal). The unsupervised default; ground truth only
/// in the labeled research mode.
Label propagate_reference(const EmbeddingMatrix& embeddings, int seq_id,
                          const std::vector<Region>& regions) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < regions.size(); ++r) {
    const double d = squared_distance(
        embeddings.row(seq_id),
        {regions[r].centroid.data(), regions[r].centroid.size()});
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(r);
    }
  }
  return regions[best].verdict == ContaminationVerdict::high_contamination ? Label::anomalous
                                                                           : Label::normal;
}

}  // namespace

bool converged(const std::set<int>& prev_low_members, const std::set<int>& cur_low_members,
               const std::set<int>& universe) {
  auto inside = [&](const std::set<int>& s) {
    return std::includes(universe.begin(), universe.end(), s.begin(), s.end());
  };
  if (!inside(prev_low_members) || !inside(cur_low_members)) throw PartitionMismatch();
  return std::includes(prev_low_members.begin(), prev_low_members.end(),
                       cur_low_members.begin(), cur_low_members.end());
}

void split_validation(std::size_t n, const PurgeConfig& cfg, std::vector<int>& candidates,
                      std::vector<int>& validation) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, 0x5417));
  rng.shuffle(order);
  const std::size_t n_val = static_cast<std::size_t>(
      std::llround(cfg.validation_fraction * static_cast<double>(n)));
  validation.assign(order.begin(), order.begin() + n_val);
  candidates.assign(order.begin() + n_val, order.end());
  std::sort(validation.begin(), validation.end());
  std::sort(candidates.begin(), candidates.end());
}

StageState stage1_iterate(const PipelineContext& ctx, const PipelineOptions& opts,
                          EvaluatorBackend& backend, std::vector<IterationStats>* stats_out) {
  const PurgeConfig& cfg = opts.purge;
  const EmbeddingMatrix& embeddings = *ctx.embeddings;
  const std::set<int> universe(ctx.candidates.begin(), ctx.candidates.end());

  StageState state;
  EmbeddingMatrix candidate_matrix = gather_rows(embeddings, ctx.candidates);

  for (int t = 1; t <= cfg.n_max; ++t) {
    state.iteration = t;
    IterationStats stats;
    stats.iteration = t;

    // Rules can shift judgments, so the partition is rebuilt each pass.
    const int k = std::min<int>(cfg.K, static_cast<int>(ctx.candidates.size()));
    KmeansOptions kopts;
    kopts.workers = opts.workers;
    Partition part = kmeans(candidate_matrix, k, cfg.seed, kopts);
    state.regions = build_regions(part, ctx.candidates);

    std::set<int> cur_low;
    for (auto& region : state.regions) {
      const double r_min =
          cfg.r_min ? *cfg.r_min : auto_r_min(embeddings, region.member_ids);
      region.representatives = select_representatives(embeddings, region.member_ids, cfg.k_nn,
                                                      r_min, cfg.M, cfg.epsilon);
      const auto reps = render_reps(region.representatives.all(), ctx.sequences,
                                    ctx.vocabulary);
      const Verdict verdict =
          judge_region(reps, state.rules, backend, opts.backend.context_budget);
      region.verdict = verdict.label;
      if (verdict.label == ContaminationVerdict::low_contamination) {
        ++stats.regions_low;
        cur_low.insert(region.member_ids.begin(), region.member_ids.end());
      } else {
        ++stats.regions_high;
      }
    }

    // Train-set accumulation is monotone within the stage.
    state.train_set.insert(cur_low.begin(), cur_low.end());
    stats.train_size = state.train_set.size();
    stats.sp = train_purity(state.train_set, ctx.sequences);

    if (state.train_set.empty()) {
      if (t == 1) throw NoLowRegions(static_cast<int>(state.regions.size()));
      break;
    }

    // Lightweight detector on the accumulated train set.
    std::vector<LogSequence> train_seqs;
    train_seqs.reserve(state.train_set.size());
    for (int id : state.train_set) train_seqs.push_back(ctx.sequences[id]);
    const NgramModel model =
        NgramModel::train(train_seqs, opts.detector_order, opts.detector_top_k);

    // Validation disagreements become the error set.
    state.error_set.clear();
    std::vector<ErrorSample> samples;
    for (int vid : ctx.validation) {
      const Label predicted = model.predict_sequence(ctx.sequences[vid]).label;
      Label reference;
      if (opts.with_labels) {
        if (!ctx.sequences[vid].ground_truth)
          throw NoLabels();
        reference = *ctx.sequences[vid].ground_truth;
      } else {
        reference = propagate_reference(embeddings, vid, state.regions);
      }
      if (predicted != reference) {
        state.error_set.push_back(vid);
        ErrorSample sample;
        sample.seq_id = vid;
        sample.template_counts =
            render_representative(ctx.sequences[vid], ctx.vocabulary).template_counts;
        sample.detector_label = predicted;
        sample.reference_label = reference;
        samples.push_back(std::move(sample));
      }
    }
    stats.errors = state.error_set.size();

    if (!state.error_set.empty()) {
      const auto rep_ids = select_error_representatives(embeddings, state.error_set, cfg.k_nn,
                                                        cfg.r_min, cfg.M);
      std::vector<ErrorSample> rep_samples;
      for (const auto& s : samples) {
        if (std::binary_search(rep_ids.begin(), rep_ids.end(), s.seq_id))
          rep_samples.push_back(s);
      }
      for (auto& text : induce_rules(rep_samples, backend)) {
        Rule rule;
        rule.text = std::move(text);
        rule.iteration_added = t;
        rule.source_error_ids = rep_ids;
        if (state.rules.add(std::move(rule))) ++stats.rules_added;
      }
    }

    const bool fixed_point =
        t > 1 && converged(state.low_members, cur_low, universe);
    state.low_members = std::move(cur_low);
    if (stats_out) stats_out->push_back(stats);
    state.history.push_back(stats);
    if (fixed_point) {
      state.reached_fixed_point = true;
      break;
    }
  }
  return state;
}

std::set<int> stage2_subdivide_purify(const PipelineContext& ctx, const PipelineOptions& opts,
                                      StageState& state, EvaluatorBackend& backend,
                                      Stage2Stats& stats, std::vector<LayoutRow>* layouts) {
  const PurgeConfig& cfg = opts.purge;
  const EmbeddingMatrix& embeddings = *ctx.embeddings;
  DeterministicBackend* det = dynamic_cast<DeterministicBackend*>(&backend);

  struct Candidate {
    std::vector<int> member_ids;
    std::vector<RenderedRepresentative> reps;
    double score = 0.0;
    bool high = false;
  };
  std::vector<Candidate> pending;

  const int min_projectable = std::max(10, 2 * cfg.stage2_min_size);
  for (const auto& region : state.regions) {
    if (region.verdict != ContaminationVerdict::low_contamination) continue;
    const int size = static_cast<int>(region.member_ids.size());
    if (size < min_projectable) {
      ++stats.regions_kept_whole;
      continue;
    }
    ++stats.regions_processed;

    ProjectionConfig proj = opts.projection;
    proj.workers = opts.workers;
    proj.seed = derive_seed(cfg.seed, 0x7E2, region.region_id);
    const double max_perplexity = std::floor((size - 1) / 3.0);
    proj.perplexity = std::min(proj.perplexity, std::max(2.0, max_perplexity - 1));

    const EmbeddingMatrix sub = gather_rows(embeddings, region.member_ids);
    const TsneResult projected = tsne(sub, proj);
    const EmbeddingMatrix layout = projected.as_matrix();

    if (layouts) {
      for (std::size_t i = 0; i < region.member_ids.size(); ++i) {
        layouts->push_back({region.member_ids[i], layout.row(i)[0], layout.row(i)[1],
                            region.region_id});
      }
    }

    const SubdivisionResult sub_result =
        subdivide(layout, cfg.stage2_min_size, derive_seed(cfg.seed, 0x5D2, region.region_id));

    for (const auto& group : sub_result.groups) {
      Candidate cand;
      cand.member_ids.reserve(group.size());
      for (int local : group) cand.member_ids.push_back(region.member_ids[local]);

      if (static_cast<int>(cand.member_ids.size()) < cfg.stage2_min_size) {
        continue;  // inherits the parent's low verdict
      }

      // Density peaks in the projected plane pick the payload. The
      // plane has no distance concentration, so a wider center budget
      // lets minority lobes surface in the payload.
      std::vector<int> local_ids(group.begin(), group.end());
      const double r_min = auto_r_min(layout, local_ids);
      const RepresentativeSet rs = select_representatives(layout, local_ids, cfg.k_nn, r_min,
                                                          cfg.M, cfg.epsilon, 8);
      std::vector<int> rep_ids;
      for (int local : rs.all()) rep_ids.push_back(region.member_ids[local]);
      cand.reps = render_reps(rep_ids, ctx.sequences, ctx.vocabulary);

      if (det) {
        cand.score = det->region_score(cand.reps, state.rules);
      } else {
        cand.high =
            judge_region(cand.reps, state.rules, backend, opts.backend.context_budget)
                .label == ContaminationVerdict::high_contamination;
      }
      pending.push_back(std::move(cand));
    }
  }

  stats.subregions = static_cast<int>(pending.size());

  // The percentile knob anchors the deterministic severity cut across
  // all sub-regions of the pass; strict inequality keeps an all-clean
  // pass intact.
  if (det && !pending.empty()) {
    std::vector<double> scores;
    scores.reserve(pending.size());
    for (const auto& c : pending) scores.push_back(c.score);
    const double cut = percentile_nearest_rank(scores, cfg.percentile);
    for (auto& c : pending) c.high = c.score > cut;
  }

  std::set<int> final_train = state.train_set;
  for (const auto& c : pending) {
    if (!c.high) continue;
    ++stats.subregions_removed;
    for (int id : c.member_ids) {
      stats.sequences_removed += final_train.erase(id);
    }
  }
  return final_train;
}

// ─── Report serialization ─────────────────────────────────────

json PurgeReport::to_json() const {
  json j;
  j["schema_version"] = schema_version;
  j["strategy"] = strategy;
  j["backend"] = backend;
  j["seed"] = seed;
  j["counts"] = {{"input", n_input},
                 {"candidates", n_candidates},
                 {"validation", n_validation},
                 {"removed", removed},
                 {"retained", retained}};
  j["stage1"] = json::array();
  for (const auto& s : stage1) {
    json row{{"iteration", s.iteration}, {"regions_low", s.regions_low},
             {"regions_high", s.regions_high}, {"train_size", s.train_size},
             {"errors", s.errors}, {"rules_added", s.rules_added}};
    if (s.sp) row["sp"] = *s.sp;
    j["stage1"].push_back(row);
  }
  j["iterations"] = iterations;
  j["reached_fixed_point"] = reached_fixed_point;
  j["stage2"] = {{"regions_processed", stage2.regions_processed},
                 {"regions_kept_whole", stage2.regions_kept_whole},
                 {"subregions", stage2.subregions},
                 {"subregions_removed", stage2.subregions_removed},
                 {"sequences_removed", stage2.sequences_removed}};
  if (sp) j["metrics"]["sp"] = *sp;
  if (crr) j["metrics"]["crr"] = *crr;
  if (!j.contains("metrics")) j["metrics"] = json::object();
  j["rules"] = rule_texts;
  if (!pluto_clusters.empty()) {
    j["pluto_clusters"] = json::array();
    for (const auto& row : pluto_clusters) {
      j["pluto_clusters"].push_back({{"cluster", row.cluster},
                                     {"size", row.size},
                                     {"lambda1", row.lambda1},
                                     {"lambda2", row.lambda2},
                                     {"dom", std::isinf(row.dom) ? -1.0 : row.dom},
                                     {"infinite_dom", std::isinf(row.dom)},
                                     {"high", row.high},
                                     {"ratio", row.ratio},
                                     {"removed", row.removed}});
    }
  }
  return j;
}

json PurgeReport::timings_json() const {
  json j = json::array();
  for (const auto& t : timings) j.push_back({{"phase", t.phase}, {"ms", t.ms}});
  return j;
}

// ─── Full pipeline ────────────────────────────────────────────

PipelineResult run_pipeline(std::span<const LogSequence> sequences,
                            std::span<const Template> vocabulary,
                            const PipelineOptions& opts) {
  opts.purge.validate();
  if (sequences.empty()) throw EmptyDataset();

  PipelineResult result;
  PurgeReport& report = result.report;
  report.strategy = opts.strategy;
  report.seed = opts.purge.seed;
  report.n_input = sequences.size();

  PipelineContext ctx;
  ctx.sequences = sequences;
  ctx.vocabulary = vocabulary;
  split_validation(sequences.size(), opts.purge, ctx.candidates, ctx.validation);
  report.n_candidates = ctx.candidates.size();
  report.n_validation = ctx.validation.size();

  // Embedding
  PhaseClock embed_clock;
  EmbedderConfig embed_cfg = opts.embedder;
  embed_cfg.seed = embed_cfg.seed == 0 ? opts.purge.seed : embed_cfg.seed;
  embed_cfg.workers = opts.workers;
  auto provider = make_provider(embed_cfg, sequences,
                                std::vector<Template>(vocabulary.begin(), vocabulary.end()));
  const EmbeddingMatrix embeddings = provider->embed_dataset(sequences);
  ctx.embeddings = &embeddings;
  report.timings.push_back({"embed", embed_clock.ms()});

  std::set<int> final_train;

  if (opts.strategy == "pluto") {
    PhaseClock clock;
    final_train = [&] {
      opts.pluto.validate();
      const int k = std::min<int>(opts.purge.K, static_cast<int>(ctx.candidates.size()));
      EmbeddingMatrix candidate_matrix = gather_rows(embeddings, ctx.candidates);
      KmeansOptions kopts;
      kopts.workers = opts.workers;
      Partition part = kmeans(candidate_matrix, k, opts.purge.seed, kopts);
      auto regions = build_regions(part, ctx.candidates);

      std::vector<ClusterSpectrum> spectra(regions.size());
      std::vector<double> doms;
      std::vector<int> dom_region;  // spectra index per dom entry
      for (std::size_t r = 0; r < regions.size(); ++r) {
        if (regions[r].member_ids.size() < 2) {
          spectra[r].dom = 0.0;  // kept whole; excluded from the split
          continue;
        }
        EmbeddingMatrix sub = gather_rows(embeddings, regions[r].member_ids);
        if (opts.pluto.center_rows) mean_center_rows(sub);
        spectra[r] = dominance(sub);
        doms.push_back(spectra[r].dom);
        dom_region.push_back(static_cast<int>(r));
      }

      std::vector<bool> is_high(regions.size(), false);
      if (!doms.empty()) {
        const SpikeSplit split = spike_split(doms, opts.pluto);
        for (int i : split.high_ids) is_high[dom_region[i]] = true;
      }

      std::set<int> train(ctx.candidates.begin(), ctx.candidates.end());
      for (std::size_t r = 0; r < regions.size(); ++r) {
        PlutoClusterRow row;
        row.cluster = static_cast<int>(r);
        row.size = regions[r].member_ids.size();
        row.lambda1 = spectra[r].lambda1;
        row.lambda2 = spectra[r].lambda2;
        row.dom = spectra[r].dom;
        row.high = is_high[r];
        if (is_high[r]) {
          row.removed = regions[r].member_ids.size();
          for (int id : regions[r].member_ids) train.erase(id);
        } else if (regions[r].member_ids.size() >= 2 && !spectra[r].infinite() &&
                   spectra[r].dom > 0.0) {
          row.ratio = estimate_anomaly_ratio(spectra[r], opts.pluto, ContaminationKind::low);
          const auto removed = filter_low_contamination(embeddings, regions[r].member_ids,
                                                        spectra[r], row.ratio);
          row.removed = removed.size();
          for (int id : removed) train.erase(id);
        }
        report.pluto_clusters.push_back(row);
      }
      return train;
    }();
    report.timings.push_back({"pluto", clock.ms()});
  } else {
    auto backend = make_backend(opts.backend);
    if (auto* det = dynamic_cast<DeterministicBackend*>(backend.get())) {
      std::map<std::string, double> df;
      std::map<int, std::size_t> counts;
      for (const auto& seq : sequences) {
        std::vector<int> distinct(seq.template_ids.begin(), seq.template_ids.end());
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        for (int tid : distinct) ++counts[tid];
      }
      std::map<int, std::string> texts;
      for (const auto& t : vocabulary) texts[t.id] = t.text();
      for (const auto& [tid, c] : counts) {
        auto it = texts.find(tid);
        const std::string text =
            it == texts.end() ? "template_" + std::to_string(tid) : it->second;
        df[text] = static_cast<double>(c) / static_cast<double>(sequences.size());
      }
      det->set_corpus_frequencies(std::move(df));
    }

    PhaseClock stage1_clock;
    StageState state = stage1_iterate(ctx, opts, *backend, nullptr);
    report.stage1 = state.history;
    report.iterations = state.iteration;
    report.reached_fixed_point = state.reached_fixed_point;
    report.timings.push_back({"stage1", stage1_clock.ms()});

    if (opts.stage2_enabled) {
      PhaseClock stage2_clock;
      final_train = stage2_subdivide_purify(ctx, opts, state, *backend, report.stage2,
                                            opts.dump_layouts ? &result.layouts : nullptr);
      report.timings.push_back({"stage2", stage2_clock.ms()});
    } else {
      final_train = state.train_set;
    }

    result.rules = state.rules;
    for (const auto& rule : state.rules.rules()) report.rule_texts.push_back(rule.text);
  }

  result.purified_ids.assign(final_train.begin(), final_train.end());
  report.retained = result.purified_ids.size();
  report.removed = ctx.candidates.size() - report.retained;

  // Ground-truth metrics, when the whole universe is labeled.
  const bool all_labeled =
      std::all_of(ctx.candidates.begin(), ctx.candidates.end(),
                  [&](int id) { return sequences[id].ground_truth.has_value(); });
  if (all_labeled && !result.purified_ids.empty()) {
    SelectionOutcome outcome;
    outcome.selected = result.purified_ids;
    for (int id : ctx.candidates) {
      outcome.universe.push_back(id);
      if (*sequences[id].ground_truth == Label::normal) outcome.normal.push_back(id);
    }
    report.sp = subset_purity(outcome);
    if (!outcome.normal.empty()) report.crr = clean_retention(outcome);
  }
  report.backend =
      opts.strategy == "pluto"
          ? "none"
          : (opts.backend.kind == BackendConfig::Kind::deterministic ? "deterministic"
                                                                     : "chat");
  return result;
}

}  // namespace logpurge
