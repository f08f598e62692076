#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "narrmem/corpus.hpp"
#include "narrmem/recall.hpp"

namespace narrmem::reliability {

// One scorer's verdicts: rows follow the set's recall ids, columns are clauses
// 1..L.
struct ScorerMatrix {
  std::string scorer_id;
  bool human = false;
  std::vector<std::vector<bool>> cells;
};

struct ScorerMatrixSet {
  std::vector<std::string> recall_ids;
  int L = 0;
  std::vector<ScorerMatrix> scorers;

  // Every matrix must be recall_ids.size() x L and scorer ids unique.
  void validate() const;
};

// Parses "recall_id,clause_index,recalled" (header required, recalled in
// {0,1}). Every (recall, clause 1..L) cell must appear exactly once; the row
// order of the result is `recall_ids` when given, else first appearance.
ScorerMatrix read_scorer_csv(std::string_view csv, const std::string& scorer_id, bool human, int L,
                             const std::vector<std::string>& recall_ids = {});

// Inverse of read_scorer_csv.
std::string scorer_to_csv(const ScorerMatrix& m, const std::vector<std::string>& recall_ids);

// A scorer matrix from scored recall records; recall id = participant id.
// Rows follow `recall_ids`; a recall without a record is a DataError.
ScorerMatrix from_records(const std::vector<recall::RecallRecord>& records,
                          const Narrative& narrative, const std::string& scorer_id,
                          const std::vector<std::string>& recall_ids);

// Fraction of recalls in which each clause was marked recalled.
std::vector<double> scorer_p_rec(const ScorerMatrix& m);

inline constexpr const char* kMeanHumanLabel = "mean_human";

// Pairwise Pearson r of per-clause P_rec. Label order: non-human scorers in
// input order, then mean_human (when there is at least one human), then the
// humans in input order. NaN where a P_rec vector is constant.
struct CorrelationTable {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> r;

  double at(const std::string& a, const std::string& b) const;
};

CorrelationTable scorer_correlations(const ScorerMatrixSet& set);

// Square CSV: header ",label1,label2,..." then one row per label.
std::string table_to_csv(const CorrelationTable& table);

struct BandPoint {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

struct RangeBand {
  std::vector<BandPoint> clauses;
  bool degenerate = false;  // fewer than two human scorers
};

// Per-clause envelope of the human scorers' P_rec. InvalidArgument without humans.
RangeBand range_band(const ScorerMatrixSet& set);

}  // namespace narrmem::reliability
