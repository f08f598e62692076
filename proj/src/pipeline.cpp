#include "narrmem/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <set>
#include <thread>

#include <json.hpp>

#include "narrmem/errors.hpp"
#include "narrmem/io.hpp"
#include "narrmem/mock.hpp"
#include "narrmem/parsers.hpp"
#include "narrmem/prompts.hpp"
#include "narrmem/recall.hpp"
#include "narrmem/reliability.hpp"
#include "narrmem/rng.hpp"
#include "narrmem/text.hpp"
#include "pipeline_internal.hpp"

namespace narrmem::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ProviderMode mode) {
  switch (mode) {
    case ProviderMode::live: return "live";
    case ProviderMode::mock: return "mock";
    case ProviderMode::replay: return "replay";
  }
  return "?";
}

ProviderMode provider_mode_from_string(const std::string& s) {
  if (s == "live") return ProviderMode::live;
  if (s == "mock") return ProviderMode::mock;
  if (s == "replay") return ProviderMode::replay;
  throw ConfigError("provider must be live, mock or replay, got '" + s + "'");
}

std::vector<double> ModelKeyedMockEmbedder::embed(const std::string& text,
                                                  const std::string& model_id) {
  return mock::hashed_bag_of_words(text, fnv1a64(model_id));
}

std::string RunContext::chat_model() const {
  if (chat_model_override) return *chat_model_override;
  return mode == ProviderMode::mock ? kMockChatModel : config.chat_model;
}

std::string RunContext::embedding_model() const {
  if (embedding_model_override) return *embedding_model_override;
  return mode == ProviderMode::mock ? kMockEmbeddingModel : config.embedding_model;
}

fs::path RunContext::resolve(const fs::path& p) const {
  return p.is_absolute() ? p : data_dir / p;
}

Gateway& gateway(RunContext& ctx) {
  if (ctx.gateway) return *ctx.gateway;
  GatewayOptions o;
  o.embed_max_retries = ctx.config.max_retries;
  o.backoff_base = std::chrono::milliseconds(ctx.config.backoff_ms);
  o.max_in_flight = ctx.config.max_in_flight;
  o.max_chars = ctx.config.max_chars;
  o.clock = ctx.clock;
  o.cache_dir = ctx.resolve(ctx.config.cache_dir);
  const fs::path audit = ctx.resolve(ctx.config.audit_log);
  std::shared_ptr<ChatProvider> chat;
  std::shared_ptr<EmbeddingProvider> embedder;
  switch (ctx.mode) {
    case ProviderMode::mock:
      chat = std::make_shared<mock::MockChatProvider>();
      embedder = std::make_shared<ModelKeyedMockEmbedder>();
      o.audit_log = audit;
      break;
    case ProviderMode::replay:
      if (!fs::exists(audit)) throw ConfigError("replay mode: audit log not found: " + audit.string());
      chat = ReplayChatProvider::from_file(audit);
      embedder = std::make_shared<CacheOnlyEmbeddingProvider>();
      break;
    case ProviderMode::live: {
      auto http = std::make_shared<HttpProvider>(ctx.config);
      chat = http;
      embedder = http;
      o.audit_log = audit;
      break;
    }
  }
  ctx.gateway = std::make_shared<Gateway>(chat, embedder, std::move(o));
  return *ctx.gateway;
}

std::string manifest_to_json(const RunManifest& m) {
  json j;
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["provider_mode"] = m.provider_mode;
  j["config"] = m.config_json.empty() ? json::object() : json::parse(m.config_json);
  j["seeds"] = m.seeds;
  j["models"] = m.models;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["counts"] = m.counts;
  j["warnings"] = m.warnings;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["exit_code"] = m.exit_code;
  return j.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.provider_mode = j.value("provider_mode", "");
    m.config_json = j.contains("config") ? j["config"].dump() : "";
    m.seeds = j.value("seeds", std::map<std::string, std::uint64_t>{});
    m.models = j.value("models", std::map<std::string, std::string>{});
    m.inputs = j.value("inputs", std::vector<std::string>{});
    m.outputs = j.value("outputs", std::map<std::string, std::string>{});
    m.counts = j.value("counts", std::map<std::string, double>{});
    m.warnings = j.value("warnings", std::vector<std::string>{});
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    m.exit_code = j.value("exit_code", 0);
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
}

std::vector<std::string> changed_outputs(const RunManifest& manifest) {
  std::vector<std::string> out;
  for (const auto& [path, hash] : manifest.outputs) {
    if (!fs::exists(path) || io::sha256_hex(io::read_text_file(path)) != hash) out.push_back(path);
  }
  return out;
}

namespace detail {

Run::Run(RunContext& ctx, std::string command) : ctx_(ctx) {
  manifest_.command = std::move(command);
  manifest_.argv = ctx.argv;
  manifest_.provider_mode = to_string(ctx.mode);
  manifest_.config_json = provider_config_to_json(ctx.config);
  manifest_.started_at = io::iso8601(ctx.clock());
  manifest_.seeds["master"] = ctx.seed;
}

void Run::warn(const std::string& message) {
  if (ctx_.log) *ctx_.log << "warning: " << message << "\n";
  manifest_.warnings.push_back(message);
  result_.warnings.push_back(message);
}

void Run::input(const fs::path& p) { manifest_.inputs.push_back(p.string()); }

void Run::write(const fs::path& path, const std::string& content) {
  io::write_text_file(path, content);
  manifest_.outputs[path.string()] = io::sha256_hex(content);
  result_.outputs.push_back(path);
}

CommandResult Run::finish(int exit_code, const fs::path& manifest_path, bool skip_manifest) {
  manifest_.exit_code = exit_code;
  manifest_.finished_at = io::iso8601(ctx_.clock());
  result_.exit_code = exit_code;
  if (!skip_manifest) {
    io::write_text_file(manifest_path, manifest_to_json(manifest_));
    result_.manifest = manifest_path;
  }
  return result_;
}

std::string csv(const std::vector<std::string>& fields) { return io::csv_row(fields); }
std::string num(double v) { return io::format_double(v); }

}  // namespace detail

using detail::Run;

Narrative resolve_narrative(const std::string& ref, const fs::path& corpus_dir) {
  if (fs::is_regular_file(ref)) return load_narrative(ref);
  const fs::path candidate = corpus_dir / (ref + ".json");
  if (fs::is_regular_file(candidate)) return load_narrative(candidate);
  throw NotFoundError("narrative '" + ref + "' is neither a file nor in " + corpus_dir.string());
}

namespace {

std::optional<LurePool> sibling_lures(const std::string& ref, const fs::path& corpus_dir,
                                      const std::string& id) {
  const fs::path base = fs::is_regular_file(ref) ? fs::path(ref).parent_path() : corpus_dir;
  const fs::path p = base / (id + ".lures.json");
  if (!fs::is_regular_file(p)) return std::nullopt;
  return load_lure_pool(p);
}

Narrative load_template(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw InvalidArgument("template not found: " + path.string());
  if (path.extension() == ".json") return load_narrative(path);
  // Plain "1. clause" lines.
  Narrative n;
  n.id = path.stem().string();
  n.title = n.id;
  const auto clauses = parse::numbered_clauses(io::read_text_file(path));
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    n.clauses.push_back({static_cast<int>(i + 1), clauses[i]});
  }
  n.validate();
  return n;
}

ChatRequest chat_request(RunContext& ctx, PromptKind kind, std::string prompt,
                         std::optional<std::uint64_t> seed = std::nullopt) {
  ChatRequest r;
  r.model_id = ctx.chat_model();
  r.temperature = default_temperature(kind);
  r.prompt = std::move(prompt);
  r.max_retries = ctx.config.max_retries;
  r.seed = seed;
  r.kind = to_string(kind);
  return r;
}

std::string strip_suffix(std::string s, std::string_view suffix) {
  if (s.size() > suffix.size() && s.ends_with(suffix)) s.resize(s.size() - suffix.size());
  return s;
}

}  // namespace

CommandResult cmd_generate(RunContext& ctx, const GenerateOptions& o) {
  if (o.variants < 1) throw InvalidArgument("--variants must be at least 1");
  if (o.max_attempts < 1) throw InvalidArgument("--max-attempts must be at least 1");
  const Narrative tmpl = load_template(o.template_path);
  if (tmpl.scrambled()) throw InvalidArgument("template must be an intact narrative");
  Run run(ctx, "generate");
  run.input(o.template_path);
  run.model("chat", ctx.chat_model());
  const int N = static_cast<int>(tmpl.length());
  const std::string prefix = o.prefix.empty() ? strip_suffix(tmpl.id, "-template") : o.prefix;
  const std::string prompt = render_prompt(
      PromptKind::narrative_generation,
      {{"N", std::to_string(N)}, {"template_narrative", numbered_segmentation(tmpl)}});
  Gateway& gw = gateway(ctx);

  int failed = 0, rejected = 0;
  for (int k = 1; k <= o.variants; ++k) {
    const std::string id = prefix + "-v" + std::to_string(k);
    bool done = false;
    for (int a = 1; a <= o.max_attempts && !done; ++a) {
      const std::string tag = "generate/" + std::to_string(k) + "/" + std::to_string(a);
      const std::uint64_t seed = derive_seed(ctx.seed, tag);
      try {
        const auto c = gw.complete(chat_request(ctx, PromptKind::narrative_generation, prompt, seed));
        const auto clauses = parse::numbered_clauses(c.raw_text);
        if (static_cast<int>(clauses.size()) != N) {
          ++rejected;
          run.warn(id + " attempt " + std::to_string(a) + ": " + std::to_string(clauses.size()) +
                   " clauses, need " + std::to_string(N));
          continue;
        }
        Narrative n;
        n.id = id;
        n.title = id;
        n.source = "Generated from " + tmpl.id + " (" + ctx.chat_model() + ", attempt " +
                   std::to_string(a) + ").";
        for (int i = 0; i < N; ++i) n.clauses.push_back({i + 1, clauses[static_cast<std::size_t>(i)]});
        n.validate();
        run.seed(tag, seed);
        run.write(o.out_dir / (id + ".json"), narrative_to_json(n));
        done = true;
      } catch (const Error& e) {
        ++rejected;
        run.warn(id + " attempt " + std::to_string(a) + ": " + e.what());
      }
    }
    if (!done) {
      ++failed;
      run.warn(id + ": no valid variant after " + std::to_string(o.max_attempts) + " attempts");
    }
  }
  run.count("variants_written", o.variants - failed);
  run.count("attempts_rejected", rejected);
  return run.finish(failed ? 1 : 0, o.out_dir / "generate.manifest.json");
}

CommandResult cmd_lures(RunContext& ctx, const LureOptions& o) {
  if (o.narratives.empty()) throw InvalidArgument("lures: no narrative given");
  if (o.max_attempts < 1) throw InvalidArgument("--max-attempts must be at least 1");
  std::vector<std::pair<Narrative, fs::path>> todo;
  for (const auto& ref : o.narratives) {
    Narrative n = resolve_narrative(ref, o.corpus_dir);
    if (n.scrambled()) throw InvalidArgument(n.id + ": lures are generated from the intact narrative");
    const fs::path dir = o.out_dir ? *o.out_dir
                         : fs::is_regular_file(ref) ? fs::path(ref).parent_path()
                                                    : o.corpus_dir;
    todo.emplace_back(std::move(n), dir);
  }
  Run run(ctx, "lures");
  run.model("chat", ctx.chat_model());
  Gateway& gw = gateway(ctx);
  int failed = 0;
  for (const auto& [n, dir] : todo) {
    run.input(n.id);
    const std::size_t L = n.length();
    const auto prompt = render_prompt(PromptKind::lure_generation,
                                      {{"segmentation", numbered_segmentation(n)}});
    std::set<std::string> clause_texts;
    for (const auto& c : n.clauses) clause_texts.insert(text::trim(c.text));
    bool done = false;
    for (int a = 1; a <= o.max_attempts && !done; ++a) {
      const std::string tag = "lures/" + n.id + "/" + std::to_string(a);
      const std::uint64_t seed = derive_seed(ctx.seed, tag);
      try {
        const auto c = gw.complete(chat_request(ctx, PromptKind::lure_generation, prompt, seed));
        LurePool pool{n.id, {}};
        std::set<std::string> seen;
        for (auto& l : parse::lures(c.raw_text, static_cast<int>(L))) {
          const auto t = text::trim(l.text);
          if (clause_texts.count(t) || !seen.insert(t).second) continue;
          pool.lures.push_back(std::move(l));
        }
        if (pool.lures.size() < L) {
          run.warn(n.id + " attempt " + std::to_string(a) + ": " + std::to_string(pool.lures.size()) +
                   " usable lures, need " + std::to_string(L));
          continue;
        }
        pool.lures.resize(L);
        pool.validate(n);
        run.seed(tag, seed);
        run.write(dir / (n.id + ".lures.json"), lure_pool_to_json(pool));
        done = true;
      } catch (const Error& e) {
        run.warn(n.id + " attempt " + std::to_string(a) + ": " + e.what());
      }
    }
    if (!done) ++failed;
  }
  run.count("pools_written", static_cast<double>(todo.size()) - failed);
  const fs::path mdir = o.out_dir ? *o.out_dir : todo.front().second;
  return run.finish(failed ? 1 : 0, mdir / "lures.manifest.json");
}

CommandResult cmd_scramble(RunContext& ctx, const ScrambleOptions& o) {
  const Narrative n = resolve_narrative(o.narrative, o.corpus_dir);
  Run run(ctx, "scramble");
  run.input(o.narrative);
  const std::string tag = "scramble/" + n.id;
  const std::uint64_t seed = derive_seed(ctx.seed, tag);
  run.seed(tag, seed);
  Narrative s = scramble(n, seed);
  s.id = n.id + "-scrambled";
  s.title = n.title + " (scrambled)";
  s.source = "Clause-level scramble of " + n.id + ".";
  run.write(o.out_dir / (s.id + ".json"), narrative_to_json(s));
  if (auto pool = sibling_lures(o.narrative, o.corpus_dir, n.id)) {
    pool->narrative_id = s.id;
    pool->validate(s);
    run.write(o.out_dir / (s.id + ".lures.json"), lure_pool_to_json(*pool));
  } else {
    run.warn(n.id + " has no lure pool; the scrambled narrative cannot be used for recognition");
  }
  return run.finish(0, o.out_dir / "scramble.manifest.json");
}

namespace {

struct ScoreJob {
  recall::RecallRecord input;
  const Narrative* narrative = nullptr;
};

struct ScoreOutcome {
  std::optional<recall::RecallRecord> record;
  std::size_t dropped = 0;
  bool empty = false;
  std::string stage, code, message;
};

ScoreOutcome score_one(RunContext& ctx, Gateway& gw, const ScoreJob& job) {
  ScoreOutcome out;
  const Narrative& n = *job.narrative;
  const int L = static_cast<int>(n.length());
  recall::RecallRecord r = job.input;
  r.recall_text = text::trim(r.recall_text);
  r.scorer_id = ctx.chat_model();
  r.scored_set.clear();
  r.ordered_sequence.clear();
  if (r.recall_text.empty()) {
    r.recall_clause_count = 0;
    out.empty = true;
    out.record = std::move(r);
    return out;
  }
  out.stage = "recall_scoring";
  try {
    PromptArgs args{{"narrative", assemble_prose(n)},
                    {"segmentation", numbered_segmentation(n)},
                    {"recall", r.recall_text}};
    const auto scoring =
        gw.complete(chat_request(ctx, PromptKind::recall_scoring, render_prompt(PromptKind::recall_scoring, args)));
    r.scored_set = parse::scored_set(scoring.raw_text, L);

    out.stage = "ordered_scoring";
    args["scoring_completion"] = scoring.raw_text;
    const auto ordered = gw.complete(
        chat_request(ctx, PromptKind::ordered_scoring, render_prompt(PromptKind::ordered_scoring, args)));
    for (int k : parse::ordered_sequence(ordered.raw_text, L)) {
      if (r.scored_set.count(k)) {
        r.ordered_sequence.push_back(k);
      } else {
        ++out.dropped;
      }
    }

    out.stage = "recall_segmentation";
    const auto seg = gw.complete(chat_request(
        ctx, PromptKind::recall_segmentation,
        render_prompt(PromptKind::recall_segmentation, {{"narrative", r.recall_text}})));
    r.recall_clause_count = static_cast<int>(parse::numbered_clauses(seg.raw_text).size());
    r.validate(L);
    out.record = std::move(r);
  } catch (const Error& e) {
    out.code = e.code();
    out.message = e.what();
  } catch (const std::exception& e) {
    out.code = "internal";
    out.message = e.what();
  }
  return out;
}

}  // namespace

CommandResult cmd_score(RunContext& ctx, const ScoreOptions& o) {
  if (o.recalls_dir.has_value() == o.input.has_value()) {
    throw InvalidArgument("score needs exactly one of --recalls-dir or --input");
  }
  if (o.out.empty()) throw InvalidArgument("score needs --out");
  Run run(ctx, "score");
  run.model("chat", ctx.chat_model());
  std::map<std::string, Narrative> narratives;
  std::vector<ScoreJob> jobs;
  std::vector<ScoreOutcome> outcomes;

  if (o.recalls_dir) {
    if (!o.narrative) throw InvalidArgument("--recalls-dir needs --narrative");
    if (!fs::is_directory(*o.recalls_dir)) {
      throw InvalidArgument("recalls directory not found: " + o.recalls_dir->string());
    }
    Narrative n = resolve_narrative(*o.narrative, o.corpus_dir);
    const std::string id = n.id;
    narratives.emplace(id, std::move(n));
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(*o.recalls_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    run.input(*o.recalls_dir);
    for (const auto& f : files) {
      ScoreJob j;
      j.input.participant_id = f.stem().string();
      j.input.narrative_id = id;
      j.input.recall_text = io::read_text_file(f);
      j.narrative = &narratives.at(id);
      jobs.push_back(std::move(j));
    }
  } else {
    if (!fs::is_regular_file(*o.input)) throw InvalidArgument("input not found: " + o.input->string());
    run.input(*o.input);
    const auto records = recall::read_records(*o.input);
    for (const auto& r : records) {
      if (!narratives.count(r.narrative_id)) {
        const fs::path p = o.corpus_dir / (r.narrative_id + ".json");
        if (fs::is_regular_file(p)) narratives.emplace(r.narrative_id, load_narrative(p));
      }
    }
    for (const auto& r : records) {
      if (o.narrative && r.narrative_id != *o.narrative) continue;
      ScoreJob j;
      j.input = r;
      auto it = narratives.find(r.narrative_id);
      j.narrative = it == narratives.end() ? nullptr : &it->second;
      jobs.push_back(std::move(j));
    }
  }

  outcomes.resize(jobs.size());
  Gateway* gw = nullptr;
  const bool needs_llm = std::any_of(jobs.begin(), jobs.end(), [](const ScoreJob& j) {
    return j.narrative && !text::trim(j.input.recall_text).empty();
  });
  if (needs_llm) gw = &gateway(ctx);
  {
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t i = next++; i < jobs.size(); i = next++) {
        if (!jobs[i].narrative) {
          outcomes[i].stage = "lookup";
          outcomes[i].code = "not_found";
          outcomes[i].message = "narrative " + jobs[i].input.narrative_id + " is not in the corpus";
          continue;
        }
        outcomes[i] = score_one(ctx, *gw, jobs[i]);
      }
    };
    const std::size_t n_workers = std::clamp<std::size_t>(o.workers, 1, std::max<std::size_t>(jobs.size(), 1));
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(work);
    work();
  }

  std::vector<recall::RecallRecord> ok;
  std::string errors;
  std::size_t dropped = 0, empty = 0, failed = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    auto& oc = outcomes[i];
    dropped += oc.dropped;
    if (oc.record) {
      empty += oc.empty;
      ok.push_back(std::move(*oc.record));
      continue;
    }
    ++failed;
    json e = {{"participant_id", jobs[i].input.participant_id},
              {"narrative_id", jobs[i].input.narrative_id},
              {"stage", oc.stage},
              {"error", oc.code},
              {"message", oc.message}};
    errors += e.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    run.warn(jobs[i].input.participant_id + " (" + jobs[i].input.narrative_id + "): " + oc.stage +
             ": " + oc.message);
  }
  if (jobs.empty()) run.warn("no recalls to score");
  run.write(o.out, recall::records_to_jsonl(ok));
  const fs::path sidecar = fs::path(o.out.string() + ".errors.jsonl");
  if (failed) {
    run.write(sidecar, errors);
  } else {
    std::error_code ec;
    fs::remove(sidecar, ec);
  }
  run.count("recalls", static_cast<double>(jobs.size()));
  run.count("scored", static_cast<double>(ok.size()));
  run.count("empty_recalls", static_cast<double>(empty));
  run.count("failed", static_cast<double>(failed));
  run.count("ordered_items_dropped", static_cast<double>(dropped));
  return run.finish(failed ? 1 : 0, fs::path(o.out.string() + ".manifest.json"));
}

CommandResult cmd_export(RunContext& ctx, const ExportOptions& o) {
  if (!fs::is_regular_file(o.event_log)) {
    throw InvalidArgument("event log not found: " + o.event_log.string());
  }
  Run run(ctx, "export");
  run.input(o.event_log);
  run.input(o.corpus_dir);
  service::ServiceOptions so;
  so.event_log = o.event_log;
  so.master_seed = ctx.seed;
  so.clock = ctx.clock;
  service::ExperimentService svc(Corpus::load_directory(o.corpus_dir), so);
  const auto ex = svc.export_dataset(o.filter);
  run.write(o.out_dir / "recall.jsonl", ex.recall_jsonl);
  run.write(o.out_dir / "recognition.jsonl", ex.recognition_jsonl);
  run.count("recall_records", static_cast<double>(ex.recall_records));
  run.count("recognition_trials", static_cast<double>(ex.recognition_trials));
  run.count("events", static_cast<double>(svc.events().size()));
  return run.finish(0, o.out_dir / "export.manifest.json");
}

CommandResult cmd_reliability(RunContext& ctx, const ReliabilityOptions& o) {
  if (!fs::is_directory(o.matrices_dir)) {
    throw InvalidArgument("matrices directory not found: " + o.matrices_dir.string());
  }
  std::optional<Narrative> narrative;
  if (o.narrative) narrative = resolve_narrative(*o.narrative, o.corpus_dir);
  const int L = narrative ? static_cast<int>(narrative->length()) : o.clauses;
  if (L < 1) throw InvalidArgument("reliability needs --narrative or --clauses");

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(o.matrices_dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".csv" || ext == ".jsonl") &&
        !e.path().string().ends_with(".errors.jsonl")) {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.size() < 2) throw InvalidArgument("reliability needs at least two scorer files");

  Run run(ctx, "reliability");
  auto is_human = [&](const std::string& id) {
    return std::find(o.humans.begin(), o.humans.end(), id) != o.humans.end() ||
           (!o.human_prefix.empty() && id.starts_with(o.human_prefix));
  };

  // Recall ids: sorted union over every file, so all matrices share rows.
  std::set<std::string> ids;
  std::map<fs::path, std::vector<recall::RecallRecord>> jsonl;
  for (const auto& f : files) {
    run.input(f);
    if (f.extension() == ".csv") {
      const auto rows = io::parse_csv(io::read_text_file(f));
      for (std::size_t i = 1; i < rows.size(); ++i) {
        if (!rows[i].empty()) ids.insert(rows[i][0]);
      }
    } else {
      if (!narrative) throw InvalidArgument(f.string() + ": scored records need --narrative");
      auto& recs = jsonl[f];
      for (auto& r : recall::read_records(f)) {
        if (r.narrative_id != narrative->id) continue;
        ids.insert(r.participant_id);
        recs.push_back(std::move(r));
      }
    }
  }
  reliability::ScorerMatrixSet set;
  set.recall_ids.assign(ids.begin(), ids.end());
  set.L = L;
  for (const auto& f : files) {
    const std::string id = f.stem().string();
    if (f.extension() == ".csv") {
      set.scorers.push_back(
          reliability::read_scorer_csv(io::read_text_file(f), id, is_human(id), L, set.recall_ids));
    } else {
      auto m = reliability::from_records(jsonl[f], *narrative, id, set.recall_ids);
      m.human = is_human(id);
      set.scorers.push_back(std::move(m));
    }
  }
  set.validate();

  const auto table = reliability::scorer_correlations(set);
  run.write(o.out_dir / "reliability_table.csv", reliability::table_to_csv(table));

  std::vector<std::vector<double>> p;
  std::vector<std::string> header{"clause_index"};
  for (const auto& s : set.scorers) {
    header.push_back(s.scorer_id);
    p.push_back(reliability::scorer_p_rec(s));
  }
  std::string prec = detail::csv(header);
  for (int c = 0; c < L; ++c) {
    std::vector<std::string> row{std::to_string(c + 1)};
    for (const auto& v : p) row.push_back(detail::num(v[static_cast<std::size_t>(c)]));
    prec += detail::csv(row);
  }
  run.write(o.out_dir / "reliability_p_rec.csv", prec);

  const bool any_human = std::any_of(set.scorers.begin(), set.scorers.end(),
                                     [](const auto& s) { return s.human; });
  if (any_human) {
    const auto band = reliability::range_band(set);
    if (band.degenerate) run.warn("fewer than two human scorers; the band collapses to one line");
    std::string b = detail::csv({"clause_index", "human_min", "human_mean", "human_max"});
    for (std::size_t c = 0; c < band.clauses.size(); ++c) {
      const auto& pt = band.clauses[c];
      b += detail::csv({std::to_string(c + 1), detail::num(pt.min), detail::num(pt.mean),
                        detail::num(pt.max)});
    }
    run.write(o.out_dir / "reliability_band.csv", b);
  } else {
    run.warn("no human scorers; mean_human and the band are omitted");
  }
  run.count("scorers", static_cast<double>(set.scorers.size()));
  run.count("recalls", static_cast<double>(set.recall_ids.size()));
  return run.finish(0, o.out_dir / "reliability.manifest.json");
}

}  // namespace narrmem::pipeline
