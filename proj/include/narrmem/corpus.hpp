#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace narrmem {

enum class NarrativeKind { intact, scrambled };

std::string to_string(NarrativeKind kind);
NarrativeKind narrative_kind_from_string(const std::string& s);

struct Clause {
  int index = 0;  // 1-based position in the original (intact) narrative
  std::string text;

  friend bool operator==(const Clause&, const Clause&) = default;
};

// A stimulus. `clauses` are stored in presentation order; for a scrambled
// narrative `permutation[k]` is the original index of the clause presented at
// position k+1 (and always equals clauses[k].index).
struct Narrative {
  std::string id;
  std::string title;
  std::vector<Clause> clauses;
  NarrativeKind kind = NarrativeKind::intact;
  std::optional<std::vector<int>> permutation;
  std::string source;

  std::size_t length() const { return clauses.size(); }
  bool scrambled() const { return kind == NarrativeKind::scrambled; }

  // Original clause index shown at 1-based presentation position `position`.
  int original_index(int position) const;
  // Presentation position (1-based) of original clause `index`.
  int presentation_position(int index) const;

  // Throws DataError on any violated invariant.
  void validate() const;

  friend bool operator==(const Narrative&, const Narrative&) = default;
};

std::string assemble_prose(const Narrative& narrative);

// Throws InvalidArgument for an already scrambled narrative.
Narrative scramble(const Narrative& narrative, std::uint64_t seed);

// Inverse of scramble: restores original clause order and kind = intact.
Narrative unscramble(const Narrative& narrative);

// "1. text\n2. text\n..." in presentation order, as handed to the LLM.
std::string numbered_segmentation(const Narrative& narrative);

struct StimulusStats {
  int clauses = 0;
  int word_count = 0;
  int char_count = 0;
  double duration_s = 0.0;

  long rounded_duration_s() const;
  friend bool operator==(const StimulusStats&, const StimulusStats&) = default;
};

inline constexpr double kCharactersPerSecond = 12.0;

StimulusStats stimulus_stats(const Narrative& narrative);

struct Lure {
  std::string label;  // "1.5", "2.5", ...
  std::string text;

  double position() const;
  friend bool operator==(const Lure&, const Lure&) = default;
};

struct LurePool {
  std::string narrative_id;
  std::vector<Lure> lures;

  // Count equals L and no lure repeats a true clause.
  void validate(const Narrative& narrative) const;
  friend bool operator==(const LurePool&, const LurePool&) = default;
};

struct Probe {
  bool is_old = false;
  int clause_index = 0;    // original index, when is_old
  std::string lure_label;  // when !is_old
  std::string text;

  // Clause index or lure label, as written to trial records.
  std::string item() const;
  friend bool operator==(const Probe&, const Probe&) = default;
};

inline constexpr std::size_t kProbesPerSession = 10;

struct ProbeSet {
  std::vector<Probe> probes;
  friend bool operator==(const ProbeSet&, const ProbeSet&) = default;
};

// Draws kProbesPerSession items without replacement from the 2L pool of true
// clauses and lures. Throws ConfigError when the pool is smaller than that.
ProbeSet sample_probes(const Narrative& narrative, const LurePool& lures,
                       std::uint64_t seed);

// JSON (de)serialisation of the on-disk formats.
Narrative narrative_from_json(const std::string& json_text);
std::string narrative_to_json(const Narrative& narrative);
LurePool lure_pool_from_json(const std::string& json_text);
std::string lure_pool_to_json(const LurePool& pool);

Narrative load_narrative(const std::filesystem::path& path);
void save_narrative(const Narrative& narrative, const std::filesystem::path& path);
LurePool load_lure_pool(const std::filesystem::path& path);
void save_lure_pool(const LurePool& pool, const std::filesystem::path& path);

// All narratives (`<id>.json`) and lure pools (`<id>.lures.json`) in a
// directory. Immutable after load.
class Corpus {
 public:
  Corpus() = default;
  static Corpus load_directory(const std::filesystem::path& dir);

  void add(Narrative narrative);
  void add(LurePool pool);

  const Narrative& narrative(const std::string& id) const;
  const Narrative* find_narrative(const std::string& id) const;
  const LurePool* find_lures(const std::string& narrative_id) const;
  std::vector<std::string> narrative_ids() const;

 private:
  std::map<std::string, Narrative> narratives_;
  std::map<std::string, LurePool> lures_;
};

}  // namespace narrmem
