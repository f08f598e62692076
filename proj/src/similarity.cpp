#include "narrmem/similarity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "narrmem/errors.hpp"

namespace narrmem::similarity {

double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("cosine of vectors with different dimensions");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na <= 0.0 || nb <= 0.0) throw DomainError("cosine of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {

[[noreturn]] void rethrow_with_clause(const std::exception_ptr& ep, int clause) {
  const std::string where = "clause " + std::to_string(clause) + ": ";
  try {
    std::rethrow_exception(ep);
  } catch (const TransportError& e) {
    throw TransportError(where + e.what());
  } catch (const InputError& e) {
    throw InputError(where + e.what());
  } catch (const ContentError& e) {
    throw ContentError(where + e.what());
  } catch (const Error& e) {
    throw Error(e.code(), where + e.what());
  } catch (const std::exception& e) {
    throw TransportError(where + e.what());
  }
}

}  // namespace

SimilarityProfile similarity_scores(const Narrative& narrative, Gateway& gateway,
                                    const std::string& model_id, const ScoreOptions& options) {
  if (narrative.clauses.empty()) throw InvalidArgument("narrative has no clauses");
  if (narrative.scrambled() && !options.allow_scrambled) {
    throw InvalidArgument("similarity is defined on the intact narrative; '" + narrative.id +
                          "' is scrambled");
  }
  const EmbeddingVector whole = gateway.embed(assemble_prose(narrative), model_id);

  const std::size_t L = narrative.length();
  std::vector<EmbeddingVector> clause_vecs(L);
  std::vector<std::exception_ptr> failures(L);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next++) < L;) {
      try {
        clause_vecs[k] = gateway.embed(narrative.clauses[k].text, model_id);
      } catch (...) {
        failures[k] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(options.workers, 1, L);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
  }
  for (std::size_t k = 0; k < L; ++k) {
    if (failures[k]) rethrow_with_clause(failures[k], narrative.clauses[k].index);
  }

  SimilarityProfile out;
  out.narrative_id = narrative.id;
  out.model_id = model_id;
  out.narrative_embedding_dim = whole.values.size();
  out.scores.assign(L, 0.0);
  for (std::size_t k = 0; k < L; ++k) {
    const auto& v = clause_vecs[k].values;
    const int idx = narrative.clauses[k].index;
    if (v.size() != whole.values.size()) {
      throw DataError("clause " + std::to_string(idx) + ": embedding dimension " +
                      std::to_string(v.size()) + " differs from the narrative's " +
                      std::to_string(whole.values.size()) + " for model " + model_id);
    }
    out.scores[static_cast<std::size_t>(idx - 1)] = cosine(v, whole.values);
  }
  return out;
}

SimilarityCorrelation recall_similarity_correlation(const SimilarityProfile& profile,
                                                    const std::vector<double>& p_rec,
                                                    std::size_t n_resamples, std::uint64_t seed,
                                                    std::size_t n_bins) {
  if (profile.scores.size() != p_rec.size()) {
    throw InvalidArgument("similarity scores and P_rec differ in length (" +
                          std::to_string(profile.scores.size()) + " vs " +
                          std::to_string(p_rec.size()) + ")");
  }
  SimilarityCorrelation out;
  out.correlation = stats::correlate(profile.scores, p_rec, n_resamples, 0.05, seed);
  out.bins = stats::bin_means(profile.scores, p_rec, {n_bins, stats::BinMode::equal_width});
  return out;
}

Significance significance(double p) {
  if (p < 0.001) return Significance::p001;
  if (p < 0.01) return Significance::p01;
  if (p < 0.05) return Significance::p05;
  return Significance::none;
}

std::string to_string(Significance s) {
  switch (s) {
    case Significance::p001: return "***";
    case Significance::p01: return "**";
    case Significance::p05: return "*";
    case Significance::none: break;
  }
  return "ns";
}

std::vector<LengthRow> r_vs_length_summary(const std::vector<NarrativeResult>& results) {
  std::vector<LengthRow> rows;
  for (const auto& r : results) {
    rows.push_back({r.narrative_id, r.length, r.correlation, significance(r.correlation.p_value)});
  }
  std::sort(rows.begin(), rows.end(), [](const LengthRow& a, const LengthRow& b) {
    return std::tie(a.length, a.narrative_id) < std::tie(b.length, b.narrative_id);
  });
  return rows;
}

PooledResult pooled_z_analysis(const std::vector<NarrativeSeries>& series,
                               std::size_t n_resamples, std::uint64_t seed) {
  if (series.empty()) throw InvalidArgument("pooled analysis needs at least one narrative");
  std::vector<double> zs, zp;
  for (const auto& s : series) {
    if (s.scores.size() != s.p_rec.size()) {
      throw InvalidArgument("narrative '" + s.narrative_id + "': scores and P_rec differ in length");
    }
    try {
      const auto a = stats::zscores(s.scores);
      const auto b = stats::zscores(s.p_rec);
      zs.insert(zs.end(), a.begin(), a.end());
      zp.insert(zp.end(), b.begin(), b.end());
    } catch (const DomainError&) {
      throw DomainError("narrative '" + s.narrative_id + "' has zero variance in S or P_rec");
    }
  }
  PooledResult out;
  out.narratives = series.size();
  out.degenerate = series.size() < 2;
  out.correlation = stats::correlate(zs, zp, n_resamples, 0.05, seed);
  return out;
}

ModelComparison compare_embedders(const std::vector<Narrative>& narratives,
                                  const std::map<std::string, std::vector<double>>& p_rec,
                                  const std::vector<Embedder>& embedders,
                                  std::size_t n_resamples, std::uint64_t seed) {
  if (narratives.empty()) throw InvalidArgument("no narratives to compare");
  if (embedders.size() < 2) throw InvalidArgument("model comparison needs at least two embedders");
  ModelComparison out;
  std::map<std::string, std::vector<double>> pooled;
  for (const auto& e : embedders) {
    if (!e.gateway) throw InvalidArgument("embedder '" + e.label + "' has no gateway");
    if (out.tables.count(e.label)) throw InvalidArgument("duplicate embedder label '" + e.label + "'");
    out.models.push_back(e.label);
    std::vector<NarrativeResult> results;
    std::size_t dim = 0;
    for (const auto& n : narratives) {
      const auto it = p_rec.find(n.id);
      if (it == p_rec.end()) throw DataError("no P_rec for narrative '" + n.id + "'");
      auto profile = similarity_scores(n, *e.gateway, e.model_id);
      if (dim && profile.narrative_embedding_dim != dim) {
        throw DataError("embedder '" + e.label + "' returned vectors of dimension " +
                        std::to_string(profile.narrative_embedding_dim) + " and " +
                        std::to_string(dim));
      }
      dim = profile.narrative_embedding_dim;
      if (it->second.size() != profile.scores.size()) {
        throw InvalidArgument("narrative '" + n.id + "': P_rec length differs from L");
      }
      results.push_back(
          {n.id, n.length(), stats::correlate(profile.scores, it->second, n_resamples, 0.05, seed)});
      auto& all = pooled[e.label];
      all.insert(all.end(), profile.scores.begin(), profile.scores.end());
      out.profiles[e.label].push_back(std::move(profile));
    }
    out.tables[e.label] = r_vs_length_summary(results);
  }
  for (std::size_t a = 0; a < out.models.size(); ++a) {
    for (std::size_t b = a + 1; b < out.models.size(); ++b) {
      const auto& x = pooled[out.models[a]];
      const auto& y = pooled[out.models[b]];
      double r = std::nan("");
      try {
        r = stats::pearson_r(x, y);
      } catch (const Error&) {
      }
      out.cross_model_r[{out.models[a], out.models[b]}] = r;
    }
  }
  return out;
}

}  // namespace narrmem::similarity
