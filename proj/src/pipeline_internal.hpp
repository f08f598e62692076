#pragma once

// Shared by the pipeline command implementations; not installed.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "narrmem/pipeline.hpp"
#include "narrmem/recall.hpp"
#include "narrmem/recognition.hpp"

namespace narrmem::pipeline::detail {

// Bookkeeping for one command run: warnings, hashed outputs, the manifest.
class Run {
 public:
  Run(RunContext& ctx, std::string command);

  RunContext& ctx() { return ctx_; }
  RunManifest& manifest() { return manifest_; }

  void warn(const std::string& message);
  void input(const std::filesystem::path& p);
  void seed(const std::string& name, std::uint64_t value) { manifest_.seeds[name] = value; }
  void model(const std::string& role, const std::string& id) { manifest_.models[role] = id; }
  void count(const std::string& name, double value) { manifest_.counts[name] = value; }
  void write(const std::filesystem::path& path, const std::string& content);

  // Writes the manifest (unless `skip_manifest`) and returns the result.
  CommandResult finish(int exit_code, const std::filesystem::path& manifest_path,
                       bool skip_manifest = false);

 private:
  RunContext& ctx_;
  RunManifest manifest_;
  CommandResult result_;
};

struct Dataset {
  std::vector<recall::RecallRecord> records;  // scored only
  std::vector<recognition::RecognitionTrial> trials;
  std::size_t unscored_records = 0;
  bool had_errors = false;
};

// Every *.jsonl in `dir` (sidecar *.errors.jsonl excluded), sorted by name.
// Lines are classified by their fields; unreadable lines are warned about.
Dataset load_dataset(Run& run, const std::filesystem::path& dir);

// Scored records of one narrative, restricted to a single scorer when several
// scored the same recalls.
std::map<std::string, std::vector<recall::RecallRecord>> records_by_narrative(
    Run& run, const std::vector<recall::RecallRecord>& records);

std::string csv(const std::vector<std::string>& fields);
std::string num(double v);

}  // namespace narrmem::pipeline::detail
