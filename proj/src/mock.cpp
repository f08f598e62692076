#include "narrmem/mock.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "narrmem/errors.hpp"
#include "narrmem/parsers.hpp"
#include "narrmem/prompts.hpp"
#include "narrmem/rng.hpp"
#include "narrmem/text.hpp"

namespace narrmem::mock {

namespace pt = prompt_text;

namespace {

std::vector<std::string> scoring_words(const std::string& clause) {
  auto w = text::content_words(clause);
  if (w.empty()) w = text::words(clause);
  return w;
}

struct Decision {
  int number;
  std::size_t first_position;
  std::vector<std::string> matched;
};

std::vector<Decision> decide(const std::vector<std::string>& clauses, std::string_view recall) {
  const auto recall_words = text::words(recall);
  std::unordered_map<std::string, std::size_t> first_seen;
  for (std::size_t i = 0; i < recall_words.size(); ++i) first_seen.emplace(recall_words[i], i);

  std::vector<Decision> out;
  for (std::size_t c = 0; c < clauses.size(); ++c) {
    const auto cw = scoring_words(clauses[c]);
    if (cw.empty()) continue;
    Decision d{static_cast<int>(c + 1), recall_words.size(), {}};
    std::size_t hits = 0;
    for (const auto& w : cw) {
      auto it = first_seen.find(w);
      if (it == first_seen.end()) continue;
      ++hits;
      d.first_position = std::min(d.first_position, it->second);
      if (std::find(d.matched.begin(), d.matched.end(), w) == d.matched.end()) d.matched.push_back(w);
    }
    if (2 * hits >= cw.size()) out.push_back(std::move(d));
  }
  return out;
}

std::string list_text(const std::vector<int>& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + ")";
}

bool is_conjunction(const std::string& lowered) {
  static const std::set<std::string> kConj{"and", "but", "or", "so", "yet", "nor"};
  return kConj.count(lowered) > 0;
}

// Text between the first `open` (plus a newline) and the next `close`.
std::string between(const std::string& s, std::string_view open, std::string_view close,
                     std::size_t from = 0) {
  auto a = s.find(open, from);
  if (a == std::string::npos) throw ContentError("mock: prompt lacks expected section");
  a += open.size();
  if (a < s.size() && s[a] == '\n') ++a;
  auto b = s.find(close, a);
  if (b == std::string::npos) throw ContentError("mock: prompt lacks expected section");
  while (b > a && s[b - 1] == '\n') --b;
  return s.substr(a, b - a);
}

const std::vector<std::string_view> kSubjects{
    "I",          "my sister",   "my friend", "the neighbor", "my father", "the coach",
    "we",         "the driver",  "my cousin", "the teacher",  "my mother", "the old man",
    "the officer", "my brother", "the guide", "the baker"};
const std::vector<std::string_view> kVerbs{
    "carried", "found",   "dropped", "painted",  "followed", "opened",  "watched",
    "fixed",   "chased",  "borrowed", "lost",    "cleaned",  "pushed",  "lifted",
    "hid",     "noticed", "repaired", "dragged", "sold",     "climbed"};
const std::vector<std::string_view> kAdjectives{
    "old",  "red",    "broken", "quiet",  "heavy", "small", "wet",    "strange",
    "bright", "empty", "rusty", "narrow", "warm",  "cold",  "wooden", "green"};
const std::vector<std::string_view> kNouns{
    "boat",   "ladder", "garden", "lantern", "bicycle", "window", "kitchen", "river",
    "fence",  "basket", "radio",  "barn",    "train",   "letter", "dog",     "bridge",
    "wallet", "piano",  "tent",   "kettle",  "truck",   "roof",   "map",     "camera"};
const std::vector<std::string_view> kPlaces{
    "near the harbor",   "behind the school", "at the market",      "by the lake",
    "in the attic",      "on the highway",    "under the stairs",   "at the station",
    "in the backyard",   "across the street", "down by the docks",  "at the fairground",
    "in the basement",   "beside the church", "outside the bakery", "on the hill"};
const std::vector<std::string_view> kConnectives{"", "and", "but", "so", "then", "and then"};

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[static_cast<std::size_t>(rng.uniform_index(v.size()))];
}

std::string make_clause(Rng& rng, bool first, const std::vector<std::string_view>& topic) {
  std::string s;
  const auto conn = first ? std::string_view{} : pick(rng, kConnectives);
  const auto subj = pick(rng, kSubjects);
  if (!conn.empty()) {
    s += conn;
    s += ' ';
    s += subj;
  } else {
    s += subj;
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  }
  // Nouns come mostly from the narrative's topic so clauses share vocabulary.
  const auto noun = rng.bernoulli(0.7) ? pick(rng, topic) : pick(rng, kNouns);
  s += ' ';
  s += pick(rng, kVerbs);
  s += " the ";
  s += pick(rng, kAdjectives);
  s += ' ';
  s += noun;
  s += ' ';
  s += pick(rng, kPlaces);
  s += rng.bernoulli(0.5) ? "." : ",";
  return s;
}

}  // namespace

std::vector<int> recalled_clauses(const std::vector<std::string>& clauses,
                                  std::string_view recall) {
  std::vector<int> out;
  for (const auto& d : decide(clauses, recall)) out.push_back(d.number);
  return out;
}

std::vector<int> recall_order(const std::vector<std::string>& clauses, std::string_view recall) {
  auto ds = decide(clauses, recall);
  std::stable_sort(ds.begin(), ds.end(), [](const Decision& a, const Decision& b) {
    return a.first_position < b.first_position;
  });
  std::vector<int> out;
  for (const auto& d : ds) out.push_back(d.number);
  return out;
}

std::vector<std::string> segment_recall(std::string_view recall) {
  std::vector<std::string> segments;
  std::string current;
  auto flush = [&] {
    auto t = text::trim(current);
    if (!text::words(t).empty()) segments.push_back(std::move(t));
    current.clear();
  };
  std::string sentence;
  auto flush_sentence = [&] {
    for (const auto& tok : text::split_whitespace(sentence)) {
      if (is_conjunction(text::to_lower_ascii(text::strip_punctuation(tok)))) flush();
      if (!current.empty()) current += ' ';
      current += tok;
    }
    flush();
    sentence.clear();
  };
  for (char ch : recall) {
    sentence += ch;
    if (ch == '.' || ch == '!' || ch == '?' || ch == ';') flush_sentence();
  }
  flush_sentence();
  return segments;
}

std::string scoring_completion(const std::vector<std::string>& clauses, std::string_view recall) {
  const auto ds = decide(clauses, recall);
  std::map<int, const Decision*> by_number;
  for (const auto& d : ds) by_number[d.number] = &d;
  std::string out;
  std::vector<int> given;
  for (std::size_t c = 1; c <= clauses.size(); ++c) {
    out += std::to_string(c) + ". ";
    auto it = by_number.find(static_cast<int>(c));
    if (it == by_number.end()) {
      out += "Not given\n";
      continue;
    }
    given.push_back(static_cast<int>(c));
    out += "Given - \"";
    for (std::size_t i = 0; i < it->second->matched.size(); ++i) {
      out += (i ? " " : "") + it->second->matched[i];
    }
    out += "\"\n";
  }
  out += "\n" + list_text(given);
  return out;
}

std::string ordered_completion(const std::vector<std::string>& clauses, std::string_view recall) {
  return text::trim(recall) + "\n\n" + list_text(recall_order(clauses, recall));
}

std::string segmentation_completion(std::string_view text) {
  std::string out;
  const auto segs = segment_recall(text);
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (i) out += '\n';
    out += std::to_string(i + 1) + ". " + segs[i];
  }
  return out;
}

std::string generation_completion(int n_clauses, std::uint64_t seed) {
  if (n_clauses < 1) throw InvalidArgument("mock generation needs N >= 1");
  Rng rng(derive_seed(seed, "generate"));
  std::vector<std::string_view> topic;
  for (int i = 0; i < 5; ++i) topic.push_back(pick(rng, kNouns));
  std::unordered_set<std::string> seen;
  std::string out;
  for (int i = 1; i <= n_clauses; ++i) {
    std::string c;
    do {
      c = make_clause(rng, i == 1, topic);
    } while (!seen.insert(c).second);
    if (i == n_clauses && c.back() == ',') c.back() = '.';
    if (i > 1) out += '\n';
    out += std::to_string(i) + ". " + c;
  }
  return out;
}

std::string lure_completion(const std::vector<std::string>& clauses, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "lures"));
  std::vector<std::string_view> topic;
  for (int i = 0; i < 5; ++i) topic.push_back(pick(rng, kNouns));
  std::unordered_set<std::string> seen(clauses.begin(), clauses.end());
  std::string out;
  for (std::size_t k = 1; k <= clauses.size(); ++k) {
    std::string c;
    do {
      c = make_clause(rng, false, topic);
      c.back() = '.';
    } while (!seen.insert(c).second);
    if (k > 1) out += '\n';
    out += std::to_string(k) + ".5. " + c;
  }
  return out;
}

Completion MockChatProvider::complete(const ChatRequest& request) {
  const std::string& p = request.prompt;
  const std::uint64_t seed = request.seed ? *request.seed : fnv1a64(p);
  auto done = [&](std::string text) {
    return Completion{std::move(text), {{"provider", "mock"}, {"model", request.model_id}}};
  };
  if (p.find(pt::kOrderInstruction) != std::string::npos ||
      p.find(pt::kScoringInstruction) != std::string::npos) {
    const auto seg = between(p, pt::kScoringPieces, pt::kScoringAlternative);
    const auto recall = between(p, pt::kScoringAlternative, pt::kScoringInstruction);
    const auto clauses = parse::numbered_clauses(seg);
    if (p.find(pt::kOrderInstruction) != std::string::npos) {
      return done(ordered_completion(clauses, recall));
    }
    return done(scoring_completion(clauses, recall));
  }
  if (p.find(pt::kLureInstruction) != std::string::npos) {
    const auto seg = p.substr(0, p.find(pt::kLureInstruction));
    return done(lure_completion(parse::numbered_clauses(seg), seed));
  }
  if (p.rfind(pt::kGenerationHead, 0) == 0) {
    const auto rest = p.substr(pt::kGenerationHead.size());
    int n = 0;
    try {
      n = std::stoi(rest);
    } catch (const std::exception&) {
      throw ContentError("mock: generation prompt has no clause count");
    }
    return done(generation_completion(n, seed));
  }
  if (p.rfind(pt::kSegmentationInstruction, 0) == 0) {
    auto text = p.substr(pt::kSegmentationInstruction.size());
    auto out = segmentation_completion(text);
    if (out.empty()) throw ContentError("mock: nothing to segment");
    return done(out);
  }
  return done("mock echo: " + p);
}

std::vector<double> hashed_bag_of_words(std::string_view text, std::uint64_t hash_seed,
                                        std::size_t dim) {
  if (dim == 0) throw InvalidArgument("embedding dimension must be positive");
  auto ws = text::content_words(text);
  if (ws.empty()) ws = text::words(text);
  if (ws.empty()) throw InputError("mock embedder: text has no words");
  std::vector<double> v(dim, 0.0);
  for (const auto& w : ws) v[splitmix64(fnv1a64(w) ^ splitmix64(hash_seed)) % dim] += 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<double> MockEmbeddingProvider::embed(const std::string& text, const std::string&) {
  ++calls_;
  return hashed_bag_of_words(text, hash_seed_, dim_);
}

}  // namespace narrmem::mock
