#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <optional>

#include "narrmem/errors.hpp"
#include "narrmem/http_server.hpp"
#include "narrmem/io.hpp"
#include "narrmem/pipeline.hpp"
#include "narrmem/service.hpp"

namespace narrmem::cli {

namespace fs = std::filesystem;
namespace pl = narrmem::pipeline;

namespace {

int exit_code_for(const Error& e) {
  const auto& c = e.code();
  if (c == "config_error" || c == "invalid_argument" || c == "not_found" || c == "input_error") return 2;
  return 1;
}

void report(const pl::CommandResult& r, std::ostream& out) {
  for (const auto& p : r.outputs) out << "wrote " << p.string() << "\n";
  if (r.manifest) out << "manifest " << r.manifest->string() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Narrative memory experiments: stimuli, scoring, analysis and the experiment server"};
  app.require_subcommand(1);

  std::string config_path, provider = "mock", data_dir = ".";
  std::uint64_t seed = 0;
  std::string chat_model, embedding_model;
  app.add_option("--config", config_path, "Provider config (JSON)");
  app.add_option("--seed", seed, "Master seed")->capture_default_str();
  app.add_option("--provider", provider, "live, mock or replay")
      ->check(CLI::IsMember({"live", "mock", "replay"}))
      ->capture_default_str();
  app.add_option("--data-dir", data_dir, "Base for corpus, event log, audit log and cache")
      ->capture_default_str();
  app.add_option("--chat-model", chat_model, "Override the chat model id");
  app.add_option("--embedding-model", embedding_model, "Override the embedding model id");

  std::string corpus;  // default <data-dir>/corpus
  auto corpus_opt = [&](CLI::App* sub) {
    sub->add_option("--corpus", corpus, "Narrative/lure directory (default <data-dir>/corpus)");
  };

  pl::GenerateOptions gen;
  auto* c_gen = app.add_subcommand("generate", "Generate narrative variants from a template");
  c_gen->add_option("--template", gen.template_path, "Template narrative (JSON or numbered lines)")
      ->required();
  c_gen->add_option("--variants", gen.variants)->capture_default_str();
  c_gen->add_option("--out-dir", gen.out_dir)->required();
  c_gen->add_option("--prefix", gen.prefix, "Output id prefix (default: template id)");
  c_gen->add_option("--max-attempts", gen.max_attempts)->capture_default_str();

  pl::LureOptions lures;
  std::string lure_out;
  auto* c_lures = app.add_subcommand("lures", "Generate a lure pool for each narrative");
  c_lures->add_option("narratives", lures.narratives, "Narrative files or ids")->required();
  c_lures->add_option("--out-dir", lure_out, "Default: next to each narrative");
  c_lures->add_option("--max-attempts", lures.max_attempts)->capture_default_str();
  corpus_opt(c_lures);

  pl::ScrambleOptions scr;
  auto* c_scr = app.add_subcommand("scramble", "Write a clause-scrambled copy of a narrative");
  c_scr->add_option("narrative", scr.narrative, "Narrative file or id")->required();
  c_scr->add_option("--out-dir", scr.out_dir)->required();
  corpus_opt(c_scr);

  pl::ScoreOptions score;
  std::string score_narrative, score_dir, score_input;
  auto* c_score = app.add_subcommand("score", "Score free recalls with the chat model");
  c_score->add_option("--narrative", score_narrative, "Narrative file or id");
  c_score->add_option("--recalls-dir", score_dir, "Directory of <participant>.txt recalls");
  c_score->add_option("--input", score_input, "Recall JSONL, e.g. an export");
  c_score->add_option("--out", score.out, "Scored JSONL")->required();
  c_score->add_option("--workers", score.workers)->capture_default_str();
  corpus_opt(c_score);

  pl::AnalyzeOptions an;
  auto* c_an = app.add_subcommand("analyze", "Figure tables and summary from a dataset");
  c_an->add_option("--dataset", an.dataset_dir, "Directory of scored recall / trial JSONL")->required();
  c_an->add_option("--out-dir", an.out_dir)->required();
  c_an->add_option("--resamples", an.resamples)->capture_default_str();
  c_an->add_option("--bins", an.hit_rate_bins, "Bins for hit rate against P_rec")->capture_default_str();
  corpus_opt(c_an);

  pl::SimilarityOptions sim;
  std::string sim_dataset;
  auto* c_sim = app.add_subcommand("similarity", "Clause/narrative embedding similarity against P_rec");
  c_sim->add_option("--out-dir", sim.out_dir)->required();
  c_sim->add_option("--dataset", sim_dataset, "Scored recall JSONL directory");
  c_sim->add_option("--narrative", sim.narratives, "Narrative files or ids (default: all intact)");
  c_sim->add_option("--model", sim.models, "Embedding model id; repeat to compare models");
  c_sim->add_option("--resamples", sim.resamples)->capture_default_str();
  c_sim->add_option("--bins", sim.bins)->capture_default_str();
  corpus_opt(c_sim);

  pl::ReliabilityOptions rel;
  std::string rel_narrative;
  auto* c_rel = app.add_subcommand("reliability", "Scorer agreement table");
  c_rel->add_option("--matrices", rel.matrices_dir, "Directory of scorer CSV / scored JSONL")->required();
  c_rel->add_option("--out-dir", rel.out_dir)->required();
  c_rel->add_option("--narrative", rel_narrative, "Narrative file or id (gives L)");
  c_rel->add_option("--clauses", rel.clauses, "L, when no narrative is given");
  c_rel->add_option("--human", rel.humans, "Scorer id to treat as human");
  c_rel->add_option("--human-prefix", rel.human_prefix)->capture_default_str();
  corpus_opt(c_rel);

  pl::ExportOptions ex;
  std::string ex_log, ex_narrative, ex_participant, ex_task;
  auto* c_ex = app.add_subcommand("export", "Export completed sessions from the event log");
  c_ex->add_option("--out-dir", ex.out_dir)->required();
  c_ex->add_option("--event-log", ex_log, "Default <data-dir>/events.jsonl");
  c_ex->add_option("--narrative", ex_narrative);
  c_ex->add_option("--participant", ex_participant);
  c_ex->add_option("--task", ex_task)->check(CLI::IsMember({"recall", "recognition"}));
  corpus_opt(c_ex);

  service::ServerOptions srv;
  std::string srv_log, srv_static;
  auto* c_srv = app.add_subcommand("serve", "Run the experiment server");
  c_srv->add_option("--host", srv.host)->capture_default_str();
  c_srv->add_option("--port", srv.port)->capture_default_str();
  c_srv->add_option("--static-dir", srv_static, "Participant UI served at /app");
  c_srv->add_option("--event-log", srv_log, "Default <data-dir>/events.jsonl");
  corpus_opt(c_srv);

  std::string manifest_path;
  bool verify = false;
  auto* c_rerun = app.add_subcommand("rerun", "Re-run the command recorded in a manifest");
  c_rerun->add_option("manifest", manifest_path)->required();
  c_rerun->add_flag("--verify", verify, "Fail unless every recorded output is reproduced byte for byte");

  std::vector<const char*> cargv;
  for (const auto& a : args) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (c_rerun->parsed()) {
      const auto m = pl::manifest_from_json(io::read_text_file(manifest_path));
      if (m.argv.empty()) throw InvalidArgument("manifest has no recorded command line");
      // The recorded command line may itself be a rerun; it is replayed as is.
      const int code = run_cli(m.argv, out, err);
      if (!verify) return code;
      const auto changed = pl::changed_outputs(m);
      for (const auto& p : changed) err << "changed: " << p << "\n";
      if (!changed.empty()) return 1;
      out << "verified " << m.outputs.size() << " outputs\n";
      return code;
    }

    pl::RunContext ctx;
    ctx.mode = pl::provider_mode_from_string(provider);
    ctx.seed = seed;
    ctx.data_dir = data_dir;
    ctx.argv = args;
    ctx.log = &err;
    if (!config_path.empty()) ctx.config = provider_config_from_json(io::read_text_file(config_path));
    if (!chat_model.empty()) ctx.chat_model_override = chat_model;
    if (!embedding_model.empty()) ctx.embedding_model_override = embedding_model;
    const fs::path corpus_dir = corpus.empty() ? ctx.data_dir / "corpus" : fs::path(corpus);
    const fs::path default_log = ctx.data_dir / "events.jsonl";

    pl::CommandResult r;
    if (c_gen->parsed()) {
      r = pl::cmd_generate(ctx, gen);
    } else if (c_lures->parsed()) {
      lures.corpus_dir = corpus_dir;
      if (!lure_out.empty()) lures.out_dir = lure_out;
      r = pl::cmd_lures(ctx, lures);
    } else if (c_scr->parsed()) {
      scr.corpus_dir = corpus_dir;
      r = pl::cmd_scramble(ctx, scr);
    } else if (c_score->parsed()) {
      score.corpus_dir = corpus_dir;
      if (!score_narrative.empty()) score.narrative = score_narrative;
      if (!score_dir.empty()) score.recalls_dir = score_dir;
      if (!score_input.empty()) score.input = score_input;
      r = pl::cmd_score(ctx, score);
    } else if (c_an->parsed()) {
      an.corpus_dir = corpus_dir;
      r = pl::cmd_analyze(ctx, an);
    } else if (c_sim->parsed()) {
      sim.corpus_dir = corpus_dir;
      if (!sim_dataset.empty()) sim.dataset_dir = sim_dataset;
      r = pl::cmd_similarity(ctx, sim);
    } else if (c_rel->parsed()) {
      rel.corpus_dir = corpus_dir;
      if (!rel_narrative.empty()) rel.narrative = rel_narrative;
      r = pl::cmd_reliability(ctx, rel);
    } else if (c_ex->parsed()) {
      ex.corpus_dir = corpus_dir;
      ex.event_log = ex_log.empty() ? default_log : fs::path(ex_log);
      if (!ex_narrative.empty()) ex.filter.narrative_id = ex_narrative;
      if (!ex_participant.empty()) ex.filter.participant_id = ex_participant;
      if (!ex_task.empty()) ex.filter.task = service::task_from_string(ex_task);
      r = pl::cmd_export(ctx, ex);
    } else if (c_srv->parsed()) {
      service::ServiceOptions so;
      so.event_log = srv_log.empty() ? default_log : fs::path(srv_log);
      so.master_seed = seed;
      service::ExperimentService svc(Corpus::load_directory(corpus_dir), so);
      if (!srv_static.empty()) srv.static_dir = srv_static;
      service::HttpServer server(svc, srv);
      const int port = server.bind();
      out << "listening on http://" << srv.host << ":" << port << " (events: " << so.event_log->string()
          << ")" << std::endl;
      server.listen();
      return 0;
    }
    report(r, out);
    return r.exit_code;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace narrmem::cli
