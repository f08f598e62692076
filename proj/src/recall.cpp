#include "narrmem/recall.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "narrmem/errors.hpp"
#include "narrmem/io.hpp"

namespace narrmem::recall {

using nlohmann::json;

void RecallRecord::validate(int L) const {
  for (int c : scored_set) {
    if (c < 1 || c > L) {
      throw DataError("recall of " + participant_id + ": clause " + std::to_string(c) +
                      " outside 1.." + std::to_string(L));
    }
  }
  std::set<int> seen;
  for (int c : ordered_sequence) {
    if (!scored_set.count(c)) {
      throw DataError("recall of " + participant_id + ": ordered clause " + std::to_string(c) +
                      " is not in the scored set");
    }
    if (!seen.insert(c).second) {
      throw DataError("recall of " + participant_id + ": clause " + std::to_string(c) +
                      " repeated in order");
    }
  }
  if (recall_clause_count && *recall_clause_count < 0) {
    throw DataError("recall of " + participant_id + ": negative clause count");
  }
}

std::string record_to_json(const RecallRecord& r) {
  json j = {{"participant_id", r.participant_id},
            {"narrative_id", r.narrative_id},
            {"recall_text", r.recall_text},
            {"scored_set", std::vector<int>(r.scored_set.begin(), r.scored_set.end())},
            {"ordered_sequence", r.ordered_sequence},
            {"recall_clause_count", nullptr},
            {"scorer_id", r.scorer_id},
            {"timestamp", r.timestamp}};
  if (r.recall_clause_count) j["recall_clause_count"] = *r.recall_clause_count;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

RecallRecord record_from_json(const std::string& line) {
  try {
    const auto j = json::parse(line);
    RecallRecord r;
    r.participant_id = j.at("participant_id").get<std::string>();
    r.narrative_id = j.at("narrative_id").get<std::string>();
    r.recall_text = j.value("recall_text", "");
    for (int c : j.value("scored_set", std::vector<int>{})) r.scored_set.insert(c);
    r.ordered_sequence = j.value("ordered_sequence", std::vector<int>{});
    if (j.contains("recall_clause_count") && !j["recall_clause_count"].is_null()) {
      r.recall_clause_count = j["recall_clause_count"].get<int>();
    }
    r.scorer_id = j.value("scorer_id", "");
    r.timestamp = j.value("timestamp", "");
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad recall record: ") + e.what());
  }
}

std::vector<RecallRecord> read_records(const std::filesystem::path& jsonl) {
  std::vector<RecallRecord> out;
  std::size_t n = 0;
  for (const auto& line : io::split_lines(io::read_text_file(jsonl))) {
    ++n;
    try {
      out.push_back(record_from_json(line));
    } catch (const DataError& e) {
      throw DataError(jsonl.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::string records_to_jsonl(const std::vector<RecallRecord>& records) {
  std::string out;
  for (const auto& r : records) out += record_to_json(r) + "\n";
  return out;
}

RecallMatrix build_matrix(const std::vector<RecallRecord>& records, const Narrative& narrative) {
  const int L = static_cast<int>(narrative.length());
  RecallMatrix m;
  m.narrative_id = narrative.id;
  for (const auto& r : records) {
    if (r.narrative_id != narrative.id) {
      throw DataError("record for " + r.narrative_id + " in a matrix for " + narrative.id);
    }
    r.validate(L);
    std::vector<bool> row(static_cast<std::size_t>(L), false);
    for (int shown : r.scored_set) row[narrative.original_index(shown) - 1] = true;
    m.participants.push_back(r.participant_id);
    m.cells.push_back(std::move(row));
  }
  return m;
}

namespace {

std::vector<double> column(const RecallMatrix& m, std::size_t c) {
  std::vector<double> v;
  v.reserve(m.cells.size());
  for (const auto& row : m.cells) v.push_back(row[c] ? 1.0 : 0.0);
  return v;
}

}  // namespace

std::vector<double> p_rec(const RecallMatrix& m) {
  if (m.cells.empty()) throw InsufficientDataError("P_rec needs at least one participant");
  std::vector<double> out(m.clauses(), 0.0);
  for (const auto& row : m.cells) {
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c];
  }
  for (double& v : out) v /= static_cast<double>(m.cells.size());
  return out;
}

std::vector<double> p_rec_stderr(const RecallMatrix& m) {
  if (m.cells.empty()) throw InsufficientDataError("P_rec needs at least one participant");
  std::vector<double> out;
  for (std::size_t c = 0; c < m.clauses(); ++c) out.push_back(stats::standard_error(column(m, c)));
  return out;
}

MeanWithError mean_recall(const RecallMatrix& m) {
  if (m.cells.size() < 2) throw InsufficientDataError("R needs at least two participants");
  std::vector<double> sums;
  for (const auto& row : m.cells) sums.push_back(static_cast<double>(std::count(row.begin(), row.end(), true)));
  return {stats::mean(sums), stats::standard_error(sums), sums.size()};
}

MeanWithError mean_recall_clause_count(const std::vector<RecallRecord>& records) {
  if (records.empty()) throw InsufficientDataError("C needs at least one record");
  std::vector<double> counts;
  std::string missing;
  for (const auto& r : records) {
    if (r.recall_clause_count) {
      counts.push_back(*r.recall_clause_count);
    } else {
      missing += (missing.empty() ? "" : ", ") + r.participant_id;
    }
  }
  if (!missing.empty()) throw DataError("recall clause count missing for: " + missing);
  return {stats::mean(counts), stats::standard_error(counts), counts.size()};
}

std::vector<OrderColumn> order_columns(const std::vector<RecallRecord>& records,
                                       const Narrative& narrative) {
  const int L = static_cast<int>(narrative.length());
  std::vector<const RecallRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) {
    return a->participant_id < b->participant_id;
  });
  std::vector<OrderColumn> out;
  for (const auto* r : sorted) {
    OrderColumn col{static_cast<int>(out.size()) + 1, r->participant_id, {}};
    for (int shown : r->ordered_sequence) {
      if (shown < 1 || shown > L) {
        throw DataError("recall of " + r->participant_id + ": clause " + std::to_string(shown) +
                        " outside 1.." + std::to_string(L));
      }
      col.original_positions.push_back(narrative.original_index(shown));
    }
    out.push_back(std::move(col));
  }
  return out;
}

std::vector<double> serial_position_curve(const std::vector<double>& p_rec_original,
                                          const Narrative& narrative) {
  if (p_rec_original.size() != narrative.length()) {
    throw InvalidArgument("P_rec length does not match the narrative");
  }
  std::vector<double> out;
  for (int k = 1; k <= static_cast<int>(narrative.length()); ++k) {
    out.push_back(p_rec_original[narrative.original_index(k) - 1]);
  }
  return out;
}

double cdf_at(const std::vector<double>& values, double p) {
  if (values.empty()) throw InsufficientDataError("CDF of no clauses");
  std::size_t above = 0;
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("P_rec value outside [0, 1]");
    above += v > p;
  }
  return static_cast<double>(above) / static_cast<double>(values.size());
}

std::vector<CdfPoint> recall_cdf(const std::vector<double>& values) {
  std::vector<CdfPoint> out;
  for (int k = 0; k <= 100; ++k) {
    const double p = k / 100.0;
    out.push_back({p, cdf_at(values, p)});
  }
  return out;
}

stats::CorrelationResult descrambling_correlation(const std::vector<double>& intact,
                                                  const std::vector<double>& scrambled,
                                                  const std::vector<int>& permutation,
                                                  std::size_t n_resamples, std::uint64_t seed) {
  const std::size_t L = intact.size();
  if (scrambled.size() != L || permutation.size() != L) {
    throw InvalidArgument("descrambling inputs must all have length L");
  }
  std::vector<double> aligned(L, std::nan(""));
  for (std::size_t k = 0; k < L; ++k) {
    const int orig = permutation[k];
    if (orig < 1 || orig > static_cast<int>(L) || !std::isnan(aligned[orig - 1])) {
      throw DataError("permutation is not a bijection on 1..L");
    }
    aligned[orig - 1] = scrambled[k];
  }
  return stats::correlate(intact, aligned, n_resamples, 0.05, seed);
}

OrderTendency descramble_tendency(const std::vector<RecallRecord>& records,
                                  const Narrative& narrative) {
  if (!narrative.scrambled()) throw InvalidArgument("order tendency needs a scrambled narrative");
  const int L = static_cast<int>(narrative.length());
  double sum_orig = 0.0, sum_pres = 0.0;
  std::size_t used = 0;
  for (const auto& r : records) {
    if (r.ordered_sequence.size() < 2) continue;
    std::vector<double> rank, shown, orig;
    for (std::size_t i = 0; i < r.ordered_sequence.size(); ++i) {
      const int s = r.ordered_sequence[i];
      if (s < 1 || s > L) throw DataError("ordered clause outside 1..L");
      rank.push_back(static_cast<double>(i));
      shown.push_back(s);
      orig.push_back(narrative.original_index(s));
    }
    sum_orig += stats::kendall_tau_b(rank, orig);
    sum_pres += stats::kendall_tau_b(rank, shown);
    ++used;
  }
  if (used == 0) throw InsufficientDataError("no recall recalled two or more clauses in order");
  return {sum_orig / static_cast<double>(used), sum_pres / static_cast<double>(used), used};
}

}  // namespace narrmem::recall
