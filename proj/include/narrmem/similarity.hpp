#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "narrmem/corpus.hpp"
#include "narrmem/llm.hpp"
#include "narrmem/stats.hpp"

namespace narrmem::similarity {

// Cosine of the angle between a and b. DomainError for mismatched lengths or
// a zero vector.
double cosine(std::span<const double> a, std::span<const double> b);

struct SimilarityProfile {
  std::string narrative_id;
  std::string model_id;
  std::vector<double> scores;  // S_i by original clause index
  std::size_t narrative_embedding_dim = 0;
};

struct ScoreOptions {
  // Scores are normally taken against the coherent prose. When set, a
  // scrambled narrative is scored against its own (scrambled) prose instead of
  // being rejected.
  bool allow_scrambled = false;
  std::size_t workers = 4;  // concurrent clause embeddings; the gateway still caps in-flight calls
};

// S_i = cosine(E(clause_i), E(prose)). The prose is embedded once. Clause
// texts are embedded verbatim. A failing embedding is rethrown with the clause
// index in the message.
SimilarityProfile similarity_scores(const Narrative& narrative, Gateway& gateway,
                                    const std::string& model_id, const ScoreOptions& options = {});

struct SimilarityCorrelation {
  stats::CorrelationResult correlation;
  stats::BinnedTable bins;
};

// r, Wald p and percentile bootstrap CI over clause pairs, plus equal-width
// bin means of P_rec against S.
SimilarityCorrelation recall_similarity_correlation(const SimilarityProfile& profile,
                                                    const std::vector<double>& p_rec,
                                                    std::size_t n_resamples = 1000,
                                                    std::uint64_t seed = 0,
                                                    std::size_t n_bins = 5);

enum class Significance { p001, p01, p05, none };

// Strict thresholds: p < 0.001, p < 0.01, p < 0.05.
Significance significance(double p);
// "***", "**", "*" or "ns".
std::string to_string(Significance s);

struct LengthRow {
  std::string narrative_id;
  std::size_t length = 0;
  stats::CorrelationResult correlation;
  Significance category = Significance::none;
};

struct NarrativeResult {
  std::string narrative_id;
  std::size_t length = 0;
  stats::CorrelationResult correlation;
};

// Rows sorted by length, then narrative id.
std::vector<LengthRow> r_vs_length_summary(const std::vector<NarrativeResult>& results);

struct NarrativeSeries {
  std::string narrative_id;
  std::vector<double> scores;
  std::vector<double> p_rec;
};

struct PooledResult {
  stats::CorrelationResult correlation;
  std::size_t narratives = 0;
  bool degenerate = false;  // only one narrative: equals its own r
};

// z-scores S and P_rec within each narrative, concatenates, correlates.
PooledResult pooled_z_analysis(const std::vector<NarrativeSeries>& series,
                               std::size_t n_resamples = 1000, std::uint64_t seed = 0);

struct Embedder {
  std::string label;
  Gateway* gateway = nullptr;
  std::string model_id;
};

struct ModelComparison {
  std::vector<std::string> models;                       // embedder labels, input order
  std::map<std::string, std::vector<LengthRow>> tables;  // per-model r-vs-L
  std::map<std::string, std::vector<SimilarityProfile>> profiles;
  // Pearson r between two models' raw scores pooled over all clauses, keyed
  // by (label_a, label_b) for every ordered pair a < b in input order.
  std::map<std::pair<std::string, std::string>, double> cross_model_r;
};

// p_rec is keyed by narrative id (original clause order).
ModelComparison compare_embedders(const std::vector<Narrative>& narratives,
                                  const std::map<std::string, std::vector<double>>& p_rec,
                                  const std::vector<Embedder>& embedders,
                                  std::size_t n_resamples = 1000, std::uint64_t seed = 0);

}  // namespace narrmem::similarity
