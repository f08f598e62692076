#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "narrmem/corpus.hpp"
#include "narrmem/stats.hpp"

namespace narrmem::recall {

// One scored recall. Clause numbers are the numbers the scorer saw, i.e.
// presentation positions; for an intact narrative those are the original
// indices. Conversion to original clause identity happens in build_matrix and
// order_columns.
struct RecallRecord {
  std::string participant_id;
  std::string narrative_id;
  std::string recall_text;
  std::set<int> scored_set;
  std::vector<int> ordered_sequence;
  std::optional<int> recall_clause_count;  // C_i, from segmenting the recall
  std::string scorer_id;
  std::string timestamp;  // when the recall was submitted, if known

  // scored_set within 1..L, ordered_sequence drawn from scored_set without repeats.
  void validate(int L) const;
  friend bool operator==(const RecallRecord&, const RecallRecord&) = default;
};

std::string record_to_json(const RecallRecord& r);
RecallRecord record_from_json(const std::string& line);
std::vector<RecallRecord> read_records(const std::filesystem::path& jsonl);
std::string records_to_jsonl(const std::vector<RecallRecord>& records);

// Participants x L, columns indexed by original clause (0-based).
struct RecallMatrix {
  std::string narrative_id;
  std::vector<std::string> participants;
  std::vector<std::vector<bool>> cells;

  std::size_t clauses() const { return cells.empty() ? 0 : cells.front().size(); }
};

// Rows follow record order. Throws DataError for records of another
// narrative or with clause numbers outside 1..L.
RecallMatrix build_matrix(const std::vector<RecallRecord>& records, const Narrative& narrative);

// Column means, by original clause.
std::vector<double> p_rec(const RecallMatrix& m);
// Standard error of each column mean (0 for a single participant).
std::vector<double> p_rec_stderr(const RecallMatrix& m);

struct MeanWithError {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

// R: mean clauses recalled per participant. Needs >= 2 participants.
MeanWithError mean_recall(const RecallMatrix& m);

// C: mean clause count of the recalls themselves. DataError names every
// record without a count.
MeanWithError mean_recall_clause_count(const std::vector<RecallRecord>& records);

struct OrderColumn {
  int trial = 0;  // 1-based, after sorting by participant id
  std::string participant_id;
  std::vector<int> original_positions;
};

// Each recall's order of recalled clauses, as original clause indices.
std::vector<OrderColumn> order_columns(const std::vector<RecallRecord>& records,
                                       const Narrative& narrative);

// P_rec by presentation position (k-th entry = clause shown k-th).
std::vector<double> serial_position_curve(const std::vector<double>& p_rec_original,
                                          const Narrative& narrative);

struct CdfPoint {
  double p = 0.0;
  double fraction_above = 0.0;
};

// F(p) = fraction of clauses with P_rec > p.
double cdf_at(const std::vector<double>& p_rec_values, double p);
// F on the grid p = 0, 0.01, ..., 1.
std::vector<CdfPoint> recall_cdf(const std::vector<double>& p_rec_values);

// Correlates intact P_rec (original order) with scrambled P_rec given by
// presentation position; the latter is realigned through the permutation.
stats::CorrelationResult descrambling_correlation(const std::vector<double>& p_rec_intact,
                                                  const std::vector<double>& p_rec_scrambled_presented,
                                                  const std::vector<int>& permutation,
                                                  std::size_t n_resamples, std::uint64_t seed);

struct OrderTendency {
  double tau_original = 0.0;
  double tau_presented = 0.0;
  std::size_t sequences_used = 0;
};

// Mean Kendall tau of recall order against original and presented order.
OrderTendency descramble_tendency(const std::vector<RecallRecord>& records,
                                  const Narrative& narrative);

}  // namespace narrmem::recall
