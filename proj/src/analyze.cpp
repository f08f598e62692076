#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "narrmem/errors.hpp"
#include "narrmem/io.hpp"
#include "narrmem/pipeline.hpp"
#include "narrmem/recall.hpp"
#include "narrmem/recognition.hpp"
#include "narrmem/rng.hpp"
#include "narrmem/similarity.hpp"
#include "narrmem/stats.hpp"
#include "pipeline_internal.hpp"

namespace narrmem::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using detail::csv;
using detail::num;
using detail::Run;

namespace detail {

Dataset load_dataset(Run& run, const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidArgument("dataset directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto& p = e.path();
    if (e.is_regular_file() && p.extension() == ".jsonl" && !p.string().ends_with(".errors.jsonl")) {
      files.push_back(p);
    }
  }
  std::sort(files.begin(), files.end());
  Dataset d;
  for (const auto& f : files) {
    run.input(f);
    std::size_t line_no = 0;
    for (const auto& line : io::split_lines(io::read_text_file(f))) {
      ++line_no;
      const std::string where = f.filename().string() + ":" + std::to_string(line_no);
      try {
        const auto j = json::parse(line);
        if (j.contains("probe_position")) {
          d.trials.push_back(recognition::trial_from_json(line));
        } else if (j.contains("scored_set")) {
          auto r = recall::record_from_json(line);
          if (r.scorer_id.empty()) {
            ++d.unscored_records;
          } else {
            d.records.push_back(std::move(r));
          }
        } else {
          run.warn(where + ": neither a recall record nor a recognition trial");
          d.had_errors = true;
        }
      } catch (const std::exception& e) {
        run.warn(where + ": " + e.what());
        d.had_errors = true;
      }
    }
  }
  if (d.unscored_records) {
    run.warn(std::to_string(d.unscored_records) +
             " recall records have no scorer (run `score` on them first); ignored");
  }
  return d;
}

std::map<std::string, std::vector<recall::RecallRecord>> records_by_narrative(
    Run& run, const std::vector<recall::RecallRecord>& records) {
  std::map<std::string, std::set<std::string>> scorers;
  for (const auto& r : records) scorers[r.narrative_id].insert(r.scorer_id);
  std::map<std::string, std::vector<recall::RecallRecord>> out;
  for (const auto& r : records) {
    const auto& s = scorers[r.narrative_id];
    if (r.scorer_id == *s.begin()) out[r.narrative_id].push_back(r);
  }
  for (const auto& [id, s] : scorers) {
    if (s.size() > 1) {
      run.warn(id + ": several scorers in the dataset; using " + *s.begin());
    }
  }
  return out;
}

}  // namespace detail

namespace {

json corr_json(const stats::CorrelationResult& c) {
  return {{"r", c.r}, {"p_value", c.p_value}, {"ci_low", c.ci_low}, {"ci_high", c.ci_high},
          {"n", c.n}};
}

std::vector<std::string> corr_fields(const stats::CorrelationResult& c) {
  return {std::to_string(c.n), num(c.r), num(c.p_value), num(c.ci_low), num(c.ci_high)};
}

std::string bins_csv_rows(const std::vector<std::string>& leading, const stats::BinnedTable& t) {
  std::string out;
  for (std::size_t b = 0; b < t.bins.size(); ++b) {
    const auto& x = t.bins[b];
    auto row = leading;
    for (auto f : {std::to_string(b + 1), num(x.x_low), num(x.x_high), num(x.x_center),
                   num(x.y_mean), num(x.y_stderr), std::to_string(x.count)}) {
      row.push_back(std::move(f));
    }
    out += csv(row);
  }
  return out;
}

// The intact narrative a scrambled one was made from: its id minus
// "-scrambled", when the corpus has it.
const Narrative* intact_source(const Corpus& corpus, const Narrative& n) {
  static constexpr std::string_view suffix = "-scrambled";
  if (!n.scrambled() || !n.id.ends_with(suffix)) return nullptr;
  return corpus.find_narrative(n.id.substr(0, n.id.size() - suffix.size()));
}

struct RecallPart {
  std::size_t participants = 0;
  std::vector<double> p_rec, p_rec_se;
  std::optional<recall::MeanWithError> R, C;
  std::vector<recall::OrderColumn> order;
  std::vector<recall::RecallRecord> records;
};

struct NarrativeRow {
  const Narrative* n = nullptr;
  std::optional<RecallPart> recall;
  std::optional<recognition::RecognitionSummary> recognition;
  std::size_t recognition_participants = 0;
};

}  // namespace

CommandResult cmd_analyze(RunContext& ctx, const AnalyzeOptions& o) {
  Run run(ctx, "analyze");
  const auto data = detail::load_dataset(run, o.dataset_dir);
  const fs::path manifest = o.out_dir / "analyze.manifest.json";
  if (data.records.empty() && data.trials.empty()) {
    run.warn("no scored recall records or recognition trials in " + o.dataset_dir.string());
    return run.finish(data.had_errors ? 1 : 0, manifest, true);
  }
  if (!fs::is_directory(o.corpus_dir)) {
    throw InvalidArgument("corpus directory not found: " + o.corpus_dir.string());
  }
  const Corpus corpus = Corpus::load_directory(o.corpus_dir);
  run.input(o.corpus_dir);
  bool partial = data.had_errors;

  std::map<std::string, NarrativeRow> rows;
  auto row_for = [&](const std::string& id) -> NarrativeRow* {
    const Narrative* n = corpus.find_narrative(id);
    if (!n) return nullptr;
    auto& r = rows[id];
    r.n = n;
    return &r;
  };

  // Recall side.
  for (const auto& [id, recs] : detail::records_by_narrative(run, data.records)) {
    NarrativeRow* row = row_for(id);
    if (!row) {
      run.warn(id + ": not in the corpus; its recall records are skipped");
      partial = true;
      continue;
    }
    RecallPart part;
    try {
      const auto m = recall::build_matrix(recs, *row->n);
      part.participants = m.participants.size();
      part.p_rec = recall::p_rec(m);
      part.p_rec_se = recall::p_rec_stderr(m);
      part.order = recall::order_columns(recs, *row->n);
    } catch (const Error& e) {
      run.warn(id + ": recall records rejected: " + e.what());
      partial = true;
      continue;
    }
    try {
      part.R = recall::mean_recall(recall::build_matrix(recs, *row->n));
    } catch (const Error& e) {
      run.warn(id + ": R not estimated: " + e.what());
    }
    try {
      part.C = recall::mean_recall_clause_count(recs);
    } catch (const Error& e) {
      run.warn(id + ": C not estimated: " + e.what());
    }
    part.records = recs;
    row->recall = std::move(part);
  }

  // Recognition side.
  std::map<std::string, std::vector<recognition::RecognitionTrial>> trials_by;
  for (const auto& t : data.trials) trials_by[t.narrative_id].push_back(t);
  for (const auto& [id, ts] : trials_by) {
    NarrativeRow* row = row_for(id);
    if (!row) {
      run.warn(id + ": not in the corpus; its recognition trials are skipped");
      partial = true;
      continue;
    }
    std::set<std::string> people;
    for (const auto& t : ts) people.insert(t.participant_id);
    row->recognition_participants = people.size();
    const auto seed = derive_seed(ctx.seed, "analyze/M/" + id);
    run.seed("analyze/M/" + id, seed);
    try {
      row->recognition = recognition::retained_with_bootstrap(
          ts, static_cast<int>(row->n->length()), o.resamples, seed);
      if (row->recognition->many_skipped) {
        run.warn(id + ": more than 1% of bootstrap resamples had no M estimate");
      }
    } catch (const Error& e) {
      run.warn(id + ": M not estimated: " + e.what());
    }
  }

  json summary;
  summary["narratives"] = json::array();
  std::vector<std::string> skipped;
  auto kind = [](const NarrativeRow& r) { return to_string(r.n->kind); };
  auto L = [](const NarrativeRow& r) { return std::to_string(r.n->length()); };

  for (const auto& [id, r] : rows) {
    json j = {{"narrative_id", id}, {"kind", kind(r)}, {"L", r.n->length()}};
    j["recall"] = nullptr;
    j["recognition"] = nullptr;
    if (r.recall) {
      json rj = {{"participants", r.recall->participants}};
      rj["R"] = r.recall->R ? json(r.recall->R->mean) : json(nullptr);
      rj["R_stderr"] = r.recall->R ? json(r.recall->R->std_error) : json(nullptr);
      rj["C"] = r.recall->C ? json(r.recall->C->mean) : json(nullptr);
      rj["C_stderr"] = r.recall->C ? json(r.recall->C->std_error) : json(nullptr);
      j["recall"] = rj;
    }
    if (r.recognition) {
      const auto& s = *r.recognition;
      j["recognition"] = {{"participants", s.participants},
                          {"P_h", s.p_h},
                          {"P_f", s.p_f},
                          {"M", s.m},
                          {"M_stderr", s.m_stderr},
                          {"negative_M", s.negative_m},
                          {"hits", s.counts.hits},
                          {"misses", s.counts.misses},
                          {"false_alarms", s.counts.false_alarms},
                          {"correct_rejections", s.counts.correct_rejections},
                          {"skipped_resamples", s.skipped_resamples}};
    }
    summary["narratives"].push_back(j);
  }

  // Fig. 2A: M against L.
  {
    std::string out = csv({"narrative_id", "kind", "L", "participants", "P_h", "P_f", "M", "M_stderr",
                           "negative_M"});
    bool any = false;
    for (const auto& [id, r] : rows) {
      if (!r.recognition) continue;
      const auto& s = *r.recognition;
      out += csv({id, kind(r), L(r), std::to_string(s.participants), num(s.p_h), num(s.p_f), num(s.m),
                  num(s.m_stderr), s.negative_m ? "1" : "0"});
      any = true;
    }
    if (any) run.write(o.out_dir / "fig2a_m_vs_l.csv", out);
    else skipped.push_back("fig2a_m_vs_l");
  }
  // Fig. 2B: R against L; Fig. B.2: C against R.
  {
    std::string b = csv({"narrative_id", "kind", "L", "participants", "R", "R_stderr"});
    std::string c = csv({"narrative_id", "kind", "L", "R", "R_stderr", "C", "C_stderr"});
    bool any_b = false, any_c = false;
    for (const auto& [id, r] : rows) {
      if (!r.recall || !r.recall->R) continue;
      const auto& R = *r.recall->R;
      b += csv({id, kind(r), L(r), std::to_string(R.n), num(R.mean), num(R.std_error)});
      any_b = true;
      if (r.recall->C) {
        c += csv({id, kind(r), L(r), num(R.mean), num(R.std_error), num(r.recall->C->mean),
                  num(r.recall->C->std_error)});
        any_c = true;
      }
    }
    if (any_b) run.write(o.out_dir / "fig2b_r_vs_l.csv", b);
    else skipped.push_back("fig2b_r_vs_l");
    if (any_c) run.write(o.out_dir / "figB2_c_vs_r.csv", c);
    else skipped.push_back("figB2_c_vs_r");
  }
  // Fig. 2C: R against M, with the random-list law over the observed M range.
  {
    std::string out = csv({"narrative_id", "kind", "L", "M", "M_stderr", "R", "R_stderr"});
    double max_m = 0.0;
    bool any = false;
    for (const auto& [id, r] : rows) {
      if (!r.recognition || !r.recall || !r.recall->R) continue;
      const auto& s = *r.recognition;
      out += csv({id, kind(r), L(r), num(s.m), num(s.m_stderr), num(r.recall->R->mean),
                  num(r.recall->R->std_error)});
      max_m = std::max(max_m, s.m);
      any = true;
    }
    if (any) {
      run.write(o.out_dir / "fig2c_r_vs_m.csv", out);
      std::string law = csv({"M", "R"});
      constexpr int kPoints = 100;
      for (int i = 0; i <= kPoints && max_m > 0.0; ++i) {
        const double m = max_m * i / kPoints;
        law += csv({num(m), num(stats::sqrt_law(m))});
      }
      run.write(o.out_dir / "fig2c_sqrt_law.csv", law);
    } else {
      skipped.push_back("fig2c_r_vs_m");
    }
  }
  // Fig. 3 and Fig. B.4 tables (recall only).
  {
    std::string order = csv({"narrative_id", "trial", "participant_id", "rank", "original_index"});
    std::string prec = csv({"narrative_id", "kind", "clause_index", "p_rec", "p_rec_stderr"});
    std::string serial = csv({"narrative_id", "kind", "position", "original_index", "p_rec"});
    std::string cdf = csv({"narrative_id", "kind", "p", "fraction_above"});
    std::string desc = csv({"scrambled_id", "intact_id", "n", "r", "p_value", "ci_low", "ci_high",
                            "tau_original", "tau_presented", "sequences"});
    bool any = false, any_desc = false;
    for (const auto& [id, r] : rows) {
      if (!r.recall) continue;
      any = true;
      const auto& part = *r.recall;
      for (const auto& col : part.order) {
        for (std::size_t k = 0; k < col.original_positions.size(); ++k) {
          order += csv({id, std::to_string(col.trial), col.participant_id, std::to_string(k + 1),
                        std::to_string(col.original_positions[k])});
        }
      }
      for (std::size_t c = 0; c < part.p_rec.size(); ++c) {
        prec += csv({id, kind(r), std::to_string(c + 1), num(part.p_rec[c]), num(part.p_rec_se[c])});
      }
      const auto curve = recall::serial_position_curve(part.p_rec, *r.n);
      for (std::size_t k = 0; k < curve.size(); ++k) {
        serial += csv({id, kind(r), std::to_string(k + 1),
                       std::to_string(r.n->original_index(static_cast<int>(k + 1))), num(curve[k])});
      }
      for (const auto& pt : recall::recall_cdf(part.p_rec)) {
        cdf += csv({id, kind(r), num(pt.p), num(pt.fraction_above)});
      }
      const Narrative* src = intact_source(corpus, *r.n);
      if (!r.n->scrambled()) continue;
      if (!src || !rows.count(src->id) || !rows.at(src->id).recall) {
        run.warn(id + ": no recall data for its intact source; descrambling skipped");
        continue;
      }
      const auto seed = derive_seed(ctx.seed, "analyze/descrambling/" + id);
      try {
        const auto corr = recall::descrambling_correlation(rows.at(src->id).recall->p_rec, curve,
                                                           *r.n->permutation, o.resamples, seed);
        const auto tend = recall::descramble_tendency(part.records, *r.n);
        auto f = corr_fields(corr);
        std::vector<std::string> row{id, src->id};
        row.insert(row.end(), f.begin(), f.end());
        row.push_back(num(tend.tau_original));
        row.push_back(num(tend.tau_presented));
        row.push_back(std::to_string(tend.sequences_used));
        desc += csv(row);
        any_desc = true;
      } catch (const Error& e) {
        run.warn(id + ": descrambling not computed: " + e.what());
      }
    }
    if (any) {
      run.write(o.out_dir / "fig3_order.csv", order);
      run.write(o.out_dir / "figB4_p_rec.csv", prec);
      run.write(o.out_dir / "figB4_serial_position.csv", serial);
      run.write(o.out_dir / "figB4_cdf.csv", cdf);
    } else {
      for (auto s : {"fig3_order", "figB4_p_rec", "figB4_serial_position", "figB4_cdf"}) {
        skipped.push_back(s);
      }
    }
    if (any_desc) run.write(o.out_dir / "figB4_descrambling.csv", desc);
    else skipped.push_back("figB4_descrambling");
  }
  // Fig. B.3 (d' by probe position) and Fig. 4 (P_h against P_rec), per condition.
  {
    std::map<std::string, std::vector<recognition::RecognitionTrial>> by_condition;
    for (const auto& [id, ts] : trials_by) {
      auto it = rows.find(id);
      if (it == rows.end()) continue;
      auto& v = by_condition[kind(it->second)];
      v.insert(v.end(), ts.begin(), ts.end());
    }
    std::map<std::string, std::vector<double>> p_rec;
    for (const auto& [id, r] : rows) {
      if (r.recall) p_rec[id] = r.recall->p_rec;
    }
    std::string dp = csv({"condition", "position", "P_h", "P_f", "d_prime", "n_old", "n_new"});
    std::string f4b = csv({"condition", "bin", "p_rec_low", "p_rec_high", "p_rec_center", "P_h_mean",
                           "P_h_stderr", "count"});
    std::string f4c = csv({"condition", "narrative_id", "clause_index", "p_rec", "P_h"});
    bool any_dp = false, any_f4 = false;
    json dj = json::object(), fj = json::object();
    for (const auto& [cond, ts] : by_condition) {
      const auto d = recognition::dprime_by_position(ts);
      for (const auto& pt : d.points) {
        dp += csv({cond, std::to_string(pt.position), num(pt.p_h), num(pt.p_f), num(pt.d_prime),
                   std::to_string(pt.n_old), std::to_string(pt.n_new)});
        any_dp = true;
      }
      json t = {{"omitted_positions", d.omitted}};
      t["slope"] = d.trend ? json(d.trend->slope) : json(nullptr);
      t["slope_stderr"] = d.trend ? json(d.trend->slope_stderr) : json(nullptr);
      t["intercept"] = d.trend ? json(d.trend->intercept) : json(nullptr);
      dj[cond] = t;

      std::vector<recognition::ClauseHitRate> hits;
      std::set<std::string> missing;
      for (const auto& h : recognition::clause_hit_rates(ts)) {
        if (p_rec.count(h.narrative_id)) hits.push_back(h);
        else missing.insert(h.narrative_id);
      }
      for (const auto& m : missing) {
        run.warn(m + ": recognition trials without recall data are left out of the P_h/P_rec join");
      }
      if (hits.empty()) continue;
      const auto seed = derive_seed(ctx.seed, "analyze/hit-rate/" + cond);
      try {
        const auto join = recognition::hit_rate_by_recall_bin(
            hits, p_rec,
            {std::clamp<std::size_t>(o.hit_rate_bins, 1, hits.size()), stats::BinMode::equal_count},
            o.resamples, seed);
        f4b += bins_csv_rows({cond}, join.bins);
        for (const auto& pt : join.points) {
          f4c += csv({cond, pt.narrative_id, std::to_string(pt.clause_index), num(pt.p_rec),
                      num(pt.p_h)});
        }
        json jj = {{"points", join.points.size()}, {"unprobed_excluded", join.unprobed_excluded}};
        jj["correlation"] = join.correlation ? corr_json(*join.correlation) : json(nullptr);
        jj["slope"] = join.fit ? json(join.fit->slope) : json(nullptr);
        jj["intercept"] = join.fit ? json(join.fit->intercept) : json(nullptr);
        fj[cond] = jj;
        any_f4 = true;
      } catch (const Error& e) {
        run.warn(cond + ": P_h/P_rec join failed: " + e.what());
        partial = true;
      }
    }
    if (any_dp) {
      run.write(o.out_dir / "figB3_dprime.csv", dp);
      summary["dprime_by_position"] = dj;
    } else {
      skipped.push_back("figB3_dprime");
    }
    if (any_f4) {
      run.write(o.out_dir / "fig4_bins.csv", f4b);
      run.write(o.out_dir / "fig4_clauses.csv", f4c);
      summary["hit_rate_vs_recall"] = fj;
    } else {
      skipped.push_back("fig4");
    }
  }

  for (const auto& s : skipped) run.warn(s + " skipped: no usable data for it");
  summary["skipped"] = skipped;
  summary["warnings"] = run.manifest().warnings;
  summary["seed"] = ctx.seed;
  summary["resamples"] = o.resamples;
  run.write(o.out_dir / "summary.json",
            summary.dump(2, ' ', false, json::error_handler_t::replace) + "\n");
  run.count("recall_records", static_cast<double>(data.records.size()));
  run.count("recognition_trials", static_cast<double>(data.trials.size()));
  run.count("narratives", static_cast<double>(rows.size()));
  return run.finish(partial ? 1 : 0, manifest);
}

CommandResult cmd_similarity(RunContext& ctx, const SimilarityOptions& o) {
  Run run(ctx, "similarity");
  std::vector<Narrative> narratives;
  if (o.narratives.empty()) {
    if (!fs::is_directory(o.corpus_dir)) {
      throw InvalidArgument("corpus directory not found: " + o.corpus_dir.string());
    }
    const Corpus corpus = Corpus::load_directory(o.corpus_dir);
    for (const auto& id : corpus.narrative_ids()) {
      const auto& n = corpus.narrative(id);
      if (!n.scrambled()) narratives.push_back(n);
    }
    run.input(o.corpus_dir);
  } else {
    for (const auto& ref : o.narratives) {
      Narrative n = resolve_narrative(ref, o.corpus_dir);
      if (n.scrambled()) {
        run.warn(n.id + ": scrambled narratives are scored against coherent prose only; skipped");
        continue;
      }
      run.input(ref);
      narratives.push_back(std::move(n));
    }
  }
  if (narratives.empty()) throw InvalidArgument("similarity: no intact narratives to score");

  std::map<std::string, std::vector<double>> p_rec;
  bool partial = false;
  if (o.dataset_dir) {
    const auto data = detail::load_dataset(run, *o.dataset_dir);
    partial = data.had_errors;
    for (const auto& [id, recs] : detail::records_by_narrative(run, data.records)) {
      auto it = std::find_if(narratives.begin(), narratives.end(),
                             [&](const Narrative& n) { return n.id == id; });
      if (it == narratives.end()) continue;
      try {
        p_rec[id] = recall::p_rec(recall::build_matrix(recs, *it));
      } catch (const Error& e) {
        run.warn(id + ": recall records rejected: " + e.what());
        partial = true;
      }
    }
  }

  const std::vector<std::string> models =
      o.models.empty() ? std::vector<std::string>{ctx.embedding_model()} : o.models;
  Gateway& gw = gateway(ctx);
  std::string scores = csv({"model", "narrative_id", "clause_index", "S", "p_rec"});
  std::string bins = csv({"model", "narrative_id", "bin", "S_low", "S_high", "S_center", "p_rec_mean",
                          "p_rec_stderr", "count"});
  std::string rvl = csv({"model", "narrative_id", "L", "n", "r", "p_value", "ci_low", "ci_high",
                         "significance"});
  std::string pooled = csv({"model", "narratives", "n", "r", "p_value", "ci_low", "ci_high",
                            "degenerate"});
  bool any_corr = false;
  std::map<std::string, std::map<std::string, std::vector<double>>> by_model;  // model -> narrative -> S

  for (const auto& model : models) {
    run.model("embedding/" + model, model);
    std::vector<similarity::NarrativeResult> results;
    std::vector<similarity::NarrativeSeries> series;
    for (const auto& n : narratives) {
      similarity::SimilarityProfile prof;
      try {
        prof = similarity::similarity_scores(n, gw, model);
      } catch (const Error& e) {
        run.warn(model + "/" + n.id + ": " + e.what());
        partial = true;
        continue;
      }
      by_model[model][n.id] = prof.scores;
      const auto pr = p_rec.find(n.id);
      for (std::size_t c = 0; c < prof.scores.size(); ++c) {
        scores += csv({model, n.id, std::to_string(c + 1), num(prof.scores[c]),
                       pr == p_rec.end() ? "" : num(pr->second[c])});
      }
      if (pr == p_rec.end()) continue;
      const std::string tag = "similarity/" + model + "/" + n.id;
      const auto seed = derive_seed(ctx.seed, tag);
      run.seed(tag, seed);
      try {
        const auto sc = similarity::recall_similarity_correlation(prof, pr->second, o.resamples, seed,
                                                                  o.bins);
        bins += bins_csv_rows({model, n.id}, sc.bins);
        results.push_back({n.id, n.length(), sc.correlation});
        series.push_back({n.id, prof.scores, pr->second});
      } catch (const Error& e) {
        run.warn(model + "/" + n.id + ": no correlation: " + e.what());
      }
    }
    for (const auto& row : similarity::r_vs_length_summary(results)) {
      std::vector<std::string> f{model, row.narrative_id, std::to_string(row.length)};
      const auto c = corr_fields(row.correlation);
      f.insert(f.end(), c.begin(), c.end());
      f.push_back(similarity::to_string(row.category));
      rvl += csv(f);
      any_corr = true;
    }
    if (!series.empty()) {
      const std::string tag = "similarity/pooled/" + model;
      const auto seed = derive_seed(ctx.seed, tag);
      run.seed(tag, seed);
      try {
        const auto p = similarity::pooled_z_analysis(series, o.resamples, seed);
        std::vector<std::string> f{model, std::to_string(p.narratives)};
        const auto c = corr_fields(p.correlation);
        f.insert(f.end(), c.begin(), c.end());
        f.push_back(p.degenerate ? "1" : "0");
        pooled += csv(f);
      } catch (const Error& e) {
        run.warn(model + ": pooled analysis failed: " + e.what());
      }
    }
  }

  run.write(o.out_dir / "similarity_scores.csv", scores);
  if (any_corr) {
    run.write(o.out_dir / "similarity_bins.csv", bins);
    run.write(o.out_dir / "similarity_r_vs_l.csv", rvl);
    run.write(o.out_dir / "similarity_pooled.csv", pooled);
  } else {
    run.warn("no P_rec data for the scored narratives; correlation tables skipped");
  }
  if (models.size() > 1) {
    std::string cross = csv({"model_a", "model_b", "n", "r"});
    for (std::size_t a = 0; a < models.size(); ++a) {
      for (std::size_t b = a + 1; b < models.size(); ++b) {
        std::vector<double> xa, xb;
        for (const auto& [id, s] : by_model[models[a]]) {
          auto it = by_model[models[b]].find(id);
          if (it == by_model[models[b]].end()) continue;
          xa.insert(xa.end(), s.begin(), s.end());
          xb.insert(xb.end(), it->second.begin(), it->second.end());
        }
        std::string r = "nan";
        try {
          r = num(stats::pearson_r(xa, xb));
        } catch (const Error& e) {
          run.warn(models[a] + " vs " + models[b] + ": " + e.what());
        }
        cross += csv({models[a], models[b], std::to_string(xa.size()), r});
      }
    }
    run.write(o.out_dir / "similarity_cross_model.csv", cross);
  }
  run.count("narratives", static_cast<double>(narratives.size()));
  run.count("models", static_cast<double>(models.size()));
  return run.finish(partial ? 1 : 0, o.out_dir / "similarity.manifest.json");
}

}  // namespace narrmem::pipeline
