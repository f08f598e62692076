#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "narrmem/corpus.hpp"
#include "narrmem/llm.hpp"
#include "narrmem/service.hpp"

// The batch commands behind the command-line tool. Each one writes its
// outputs plus a run manifest and reports an exit code: 0 success, 1 partial
// failure. Usage and configuration problems are thrown (ConfigError,
// InvalidArgument, NotFoundError, InputError) and map to exit code 2.
namespace narrmem::pipeline {

enum class ProviderMode { live, mock, replay };
std::string to_string(ProviderMode mode);
ProviderMode provider_mode_from_string(const std::string& s);

// Model ids used in mock mode unless overridden.
inline constexpr const char* kMockChatModel = "mock-chat";
inline constexpr const char* kMockEmbeddingModel = "mock-embedding";

// Mock embeddings keyed by model id: each id hashes words with its own seed,
// so different ids behave like different (related) embedding models.
class ModelKeyedMockEmbedder : public EmbeddingProvider {
 public:
  std::vector<double> embed(const std::string& text, const std::string& model_id) override;
};

struct RunContext {
  ProviderConfig config;
  ProviderMode mode = ProviderMode::mock;
  std::uint64_t seed = 0;
  std::filesystem::path data_dir = ".";
  std::vector<std::string> argv;  // recorded in manifests
  std::optional<std::string> chat_model_override;
  std::optional<std::string> embedding_model_override;
  Clock clock = [] { return std::chrono::system_clock::now(); };
  std::ostream* log = nullptr;  // warnings; none when null
  // Built on first use from the mode and config unless set by the caller.
  std::shared_ptr<Gateway> gateway;

  std::string chat_model() const;
  std::string embedding_model() const;
  // Relative config paths resolve against data_dir.
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

// Replay mode needs the audit log to exist (ConfigError otherwise); live mode
// needs the API key variable to be set.
Gateway& gateway(RunContext& ctx);

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string provider_mode;
  std::string config_json;  // ProviderConfig snapshot
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> models;
  std::vector<std::string> inputs;
  std::map<std::string, std::string> outputs;  // path -> sha256 of the written bytes
  std::map<std::string, double> counts;
  std::vector<std::string> warnings;
  std::string started_at;
  std::string finished_at;
  int exit_code = 0;
};

std::string manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text);

struct CommandResult {
  int exit_code = 0;
  std::vector<std::filesystem::path> outputs;
  std::vector<std::string> warnings;
  std::optional<std::filesystem::path> manifest;
};

// A file path is loaded directly; anything else is looked up as an id in
// corpus_dir.
Narrative resolve_narrative(const std::string& ref, const std::filesystem::path& corpus_dir);

struct GenerateOptions {
  std::filesystem::path template_path;  // narrative JSON or "1. clause" lines
  int variants = 2;
  std::filesystem::path out_dir;
  std::string prefix;  // default: template id without a trailing "-template"
  int max_attempts = 5;
};
// Variant k is written as <prefix>-v<k>.json once a completion parses into
// exactly as many clauses as the template has.
CommandResult cmd_generate(RunContext& ctx, const GenerateOptions& options);

struct LureOptions {
  std::vector<std::string> narratives;  // paths or ids
  std::filesystem::path corpus_dir;
  std::optional<std::filesystem::path> out_dir;  // default: next to each narrative
  int max_attempts = 3;
};
// Writes <id>.lures.json with the first L usable lures (by label).
CommandResult cmd_lures(RunContext& ctx, const LureOptions& options);

struct ScrambleOptions {
  std::string narrative;
  std::filesystem::path corpus_dir;
  std::filesystem::path out_dir;
};
// Writes <id>-scrambled.json and, when the source has a lure pool, a copy of
// it for the scrambled id.
CommandResult cmd_scramble(RunContext& ctx, const ScrambleOptions& options);

struct ScoreOptions {
  std::filesystem::path corpus_dir;
  // Either a directory of <participant>.txt recalls for one narrative, or a
  // recall JSONL (such as an export) covering any corpus narratives.
  std::optional<std::string> narrative;
  std::optional<std::filesystem::path> recalls_dir;
  std::optional<std::filesystem::path> input;
  std::filesystem::path out;
  std::size_t workers = 4;
};
// Scoring, ordered scoring and recall segmentation for each recall. Failures
// go to <out>.errors.jsonl and leave the others intact.
CommandResult cmd_score(RunContext& ctx, const ScoreOptions& options);

struct AnalyzeOptions {
  std::filesystem::path dataset_dir;
  std::filesystem::path corpus_dir;
  std::filesystem::path out_dir;
  std::size_t resamples = 1000;
  std::size_t hit_rate_bins = 15;
};
// Figure tables and summary.json from scored recall records and recognition
// trials (*.jsonl in dataset_dir). Missing data kinds skip their tables.
CommandResult cmd_analyze(RunContext& ctx, const AnalyzeOptions& options);

struct SimilarityOptions {
  std::filesystem::path corpus_dir;
  std::optional<std::filesystem::path> dataset_dir;  // scored recalls, for P_rec
  std::vector<std::string> narratives;               // default: every intact narrative
  std::vector<std::string> models;                   // default: the context's embedding model
  std::filesystem::path out_dir;
  std::size_t resamples = 1000;
  std::size_t bins = 5;
};
CommandResult cmd_similarity(RunContext& ctx, const SimilarityOptions& options);

struct ReliabilityOptions {
  // *.csv scorer matrices (scorer id = file stem) and *.jsonl scored recall
  // records (scored by their scorer, recall id = participant id).
  std::filesystem::path matrices_dir;
  std::optional<std::string> narrative;  // required for *.jsonl inputs
  std::filesystem::path corpus_dir;
  int clauses = 0;  // L when no narrative is given
  std::vector<std::string> humans;
  std::string human_prefix = "human";
  std::filesystem::path out_dir;
};
CommandResult cmd_reliability(RunContext& ctx, const ReliabilityOptions& options);

struct ExportOptions {
  std::filesystem::path event_log;
  std::filesystem::path corpus_dir;
  std::filesystem::path out_dir;
  service::ExportFilter filter;
};
// recall.jsonl and recognition.jsonl from the replayed event log.
CommandResult cmd_export(RunContext& ctx, const ExportOptions& options);

// Output files named in a manifest whose current bytes no longer match the
// recorded hash (missing files included).
std::vector<std::string> changed_outputs(const RunManifest& manifest);

}  // namespace narrmem::pipeline
