#include "narrmem/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <json.hpp>

#include "narrmem/errors.hpp"
#include "narrmem/io.hpp"
#include "narrmem/rng.hpp"
#include "narrmem/text.hpp"

namespace narrmem {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(NarrativeKind kind) {
  return kind == NarrativeKind::intact ? "intact" : "scrambled";
}

NarrativeKind narrative_kind_from_string(const std::string& s) {
  if (s == "intact") return NarrativeKind::intact;
  if (s == "scrambled") return NarrativeKind::scrambled;
  throw DataError("unknown narrative kind '" + s + "'");
}

int Narrative::original_index(int position) const {
  if (position < 1 || position > static_cast<int>(clauses.size())) {
    throw DataError("position " + std::to_string(position) +
                    " outside 1.." + std::to_string(clauses.size()) +
                    " for narrative " + id);
  }
  return clauses[static_cast<std::size_t>(position - 1)].index;
}

int Narrative::presentation_position(int index) const {
  for (std::size_t k = 0; k < clauses.size(); ++k) {
    if (clauses[k].index == index) return static_cast<int>(k) + 1;
  }
  throw DataError("clause index " + std::to_string(index) +
                  " not in narrative " + id);
}

void Narrative::validate() const {
  const std::size_t n = clauses.size();
  if (n == 0) throw DataError("narrative " + id + " has no clauses");
  std::vector<bool> seen(n + 1, false);
  for (const Clause& c : clauses) {
    if (text::trim(c.text).empty()) {
      throw DataError("narrative " + id + ": clause " +
                      std::to_string(c.index) + " has empty text");
    }
    if (c.index < 1 || static_cast<std::size_t>(c.index) > n ||
        seen[static_cast<std::size_t>(c.index)]) {
      throw DataError("narrative " + id + ": clause indices must be a "
                      "bijection on 1.." + std::to_string(n));
    }
    seen[static_cast<std::size_t>(c.index)] = true;
  }
  if (kind == NarrativeKind::intact) {
    if (permutation) {
      throw DataError("narrative " + id + ": intact narrative carries a permutation");
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (clauses[k].index != static_cast<int>(k) + 1) {
        throw DataError("narrative " + id + ": intact clauses out of order");
      }
    }
    return;
  }
  if (!permutation || permutation->size() != n) {
    throw DataError("narrative " + id + ": scrambled narrative needs a "
                    "permutation of length " + std::to_string(n));
  }
  for (std::size_t k = 0; k < n; ++k) {
    if ((*permutation)[k] != clauses[k].index) {
      throw DataError("narrative " + id + ": permutation disagrees with "
                      "clause indices at position " + std::to_string(k + 1));
    }
  }
}

std::string assemble_prose(const Narrative& narrative) {
  std::string out;
  for (std::size_t k = 0; k < narrative.clauses.size(); ++k) {
    if (k) out += ' ';
    out += narrative.clauses[k].text;
  }
  return out;
}

Narrative scramble(const Narrative& narrative, std::uint64_t seed) {
  if (narrative.scrambled()) {
    throw InvalidArgument("narrative " + narrative.id + " is already scrambled");
  }
  narrative.validate();
  Narrative out = narrative;
  Rng rng(seed);
  rng.shuffle(std::span<Clause>(out.clauses));
  std::vector<int> perm;
  perm.reserve(out.clauses.size());
  for (const Clause& c : out.clauses) perm.push_back(c.index);
  out.kind = NarrativeKind::scrambled;
  out.permutation = std::move(perm);
  return out;
}

Narrative unscramble(const Narrative& narrative) {
  narrative.validate();
  Narrative out = narrative;
  std::sort(out.clauses.begin(), out.clauses.end(),
            [](const Clause& a, const Clause& b) { return a.index < b.index; });
  out.kind = NarrativeKind::intact;
  out.permutation.reset();
  return out;
}

std::string numbered_segmentation(const Narrative& narrative) {
  std::string out;
  for (std::size_t k = 0; k < narrative.clauses.size(); ++k) {
    out += std::to_string(k + 1) + ". " + narrative.clauses[k].text + "\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

long StimulusStats::rounded_duration_s() const { return std::lround(duration_s); }

StimulusStats stimulus_stats(const Narrative& narrative) {
  const std::string prose = assemble_prose(narrative);
  StimulusStats s;
  s.clauses = static_cast<int>(narrative.clauses.size());
  s.word_count = static_cast<int>(
      text::split_whitespace(text::strip_punctuation(prose)).size());
  s.char_count = static_cast<int>(text::utf8_length(prose));
  s.duration_s = s.char_count / kCharactersPerSecond;
  return s;
}

double Lure::position() const {
  try {
    std::size_t used = 0;
    const double v = std::stod(label, &used);
    if (used != label.size()) throw std::invalid_argument(label);
    return v;
  } catch (const std::exception&) {
    throw DataError("malformed lure label '" + label + "'");
  }
}

void LurePool::validate(const Narrative& narrative) const {
  if (narrative_id != narrative.id) {
    throw DataError("lure pool for '" + narrative_id + "' used with narrative '" +
                    narrative.id + "'");
  }
  if (lures.size() != narrative.length()) {
    throw DataError("lure pool for " + narrative_id + " has " +
                    std::to_string(lures.size()) + " lures, expected L = " +
                    std::to_string(narrative.length()));
  }
  std::set<std::string> truths;
  for (const Clause& c : narrative.clauses) truths.insert(text::trim(c.text));
  std::set<std::string> labels;
  for (const Lure& l : lures) {
    l.position();
    if (!labels.insert(l.label).second) {
      throw DataError("duplicate lure label " + l.label);
    }
    if (text::trim(l.text).empty()) throw DataError("empty lure " + l.label);
    if (truths.count(text::trim(l.text))) {
      throw DataError("lure " + l.label + " repeats a true clause");
    }
  }
}

std::string Probe::item() const {
  return is_old ? std::to_string(clause_index) : lure_label;
}

ProbeSet sample_probes(const Narrative& narrative, const LurePool& lures,
                       std::uint64_t seed) {
  std::vector<Probe> pool;
  pool.reserve(narrative.length() + lures.lures.size());
  for (const Clause& c : narrative.clauses) {
    pool.push_back(Probe{true, c.index, {}, c.text});
  }
  for (const Lure& l : lures.lures) {
    pool.push_back(Probe{false, 0, l.label, l.text});
  }
  if (pool.size() < kProbesPerSession) {
    throw ConfigError("probe pool for " + narrative.id + " has " +
                      std::to_string(pool.size()) + " items; need at least " +
                      std::to_string(kProbesPerSession));
  }
  // Partial Fisher-Yates over indices: the first 10 slots are a uniform
  // ordered sample without replacement.
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < kProbesPerSession; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  ProbeSet out;
  for (std::size_t i = 0; i < kProbesPerSession; ++i) {
    out.probes.push_back(pool[idx[i]]);
  }
  return out;
}

Narrative narrative_from_json(const std::string& json_text) {
  Narrative n;
  try {
    const json j = json::parse(json_text);
    n.id = j.at("id").get<std::string>();
    n.title = j.value("title", "");
    n.kind = narrative_kind_from_string(j.value("kind", "intact"));
    for (const auto& c : j.at("clauses")) {
      n.clauses.push_back(Clause{c.at("index").get<int>(), c.at("text").get<std::string>()});
    }
    if (j.contains("permutation") && !j["permutation"].is_null()) {
      n.permutation = j["permutation"].get<std::vector<int>>();
    }
    n.source = j.value("source", "");
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed narrative JSON: ") + e.what());
  }
  n.validate();
  return n;
}

std::string narrative_to_json(const Narrative& n) {
  json j;
  j["id"] = n.id;
  j["title"] = n.title;
  j["kind"] = to_string(n.kind);
  j["clauses"] = json::array();
  for (const Clause& c : n.clauses) {
    j["clauses"].push_back({{"index", c.index}, {"text", c.text}});
  }
  j["permutation"] = n.permutation ? json(*n.permutation) : json(nullptr);
  j["source"] = n.source;
  return j.dump(2) + "\n";
}

LurePool lure_pool_from_json(const std::string& json_text) {
  LurePool p;
  try {
    const json j = json::parse(json_text);
    p.narrative_id = j.at("narrative_id").get<std::string>();
    for (const auto& l : j.at("lures")) {
      p.lures.push_back(Lure{l.at("label").get<std::string>(), l.at("text").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed lure JSON: ") + e.what());
  }
  return p;
}

std::string lure_pool_to_json(const LurePool& p) {
  json j;
  j["narrative_id"] = p.narrative_id;
  j["lures"] = json::array();
  for (const Lure& l : p.lures) j["lures"].push_back({{"label", l.label}, {"text", l.text}});
  return j.dump(2) + "\n";
}

Narrative load_narrative(const fs::path& path) {
  return narrative_from_json(io::read_text_file(path));
}

void save_narrative(const Narrative& narrative, const fs::path& path) {
  io::write_text_file(path, narrative_to_json(narrative));
}

LurePool load_lure_pool(const fs::path& path) {
  return lure_pool_from_json(io::read_text_file(path));
}

void save_lure_pool(const LurePool& pool, const fs::path& path) {
  io::write_text_file(path, lure_pool_to_json(pool));
}

Corpus Corpus::load_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("corpus directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  Corpus corpus;
  std::vector<LurePool> pools;
  for (const fs::path& f : files) {
    const std::string name = f.filename().string();
    if (name.size() > 11 && name.ends_with(".lures.json")) {
      pools.push_back(load_lure_pool(f));
    } else if (name != "manifest.json" && !name.ends_with(".manifest.json")) {
      corpus.add(load_narrative(f));
    }
  }
  for (LurePool& p : pools) corpus.add(std::move(p));
  return corpus;
}

void Corpus::add(Narrative narrative) {
  narrative.validate();
  const std::string id = narrative.id;
  narratives_.insert_or_assign(id, std::move(narrative));
}

void Corpus::add(LurePool pool) {
  const std::string id = pool.narrative_id;
  lures_.insert_or_assign(id, std::move(pool));
}

const Narrative& Corpus::narrative(const std::string& id) const {
  const Narrative* n = find_narrative(id);
  if (!n) throw NotFoundError("unknown narrative '" + id + "'");
  return *n;
}

const Narrative* Corpus::find_narrative(const std::string& id) const {
  auto it = narratives_.find(id);
  return it == narratives_.end() ? nullptr : &it->second;
}

const LurePool* Corpus::find_lures(const std::string& narrative_id) const {
  auto it = lures_.find(narrative_id);
  return it == lures_.end() ? nullptr : &it->second;
}

std::vector<std::string> Corpus::narrative_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : narratives_) ids.push_back(id);
  return ids;
}

}  // namespace narrmem
