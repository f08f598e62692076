#include "narrmem/reliability.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "narrmem/errors.hpp"
#include "narrmem/io.hpp"
#include "narrmem/stats.hpp"

namespace narrmem::reliability {

void ScorerMatrixSet::validate() const {
  if (L <= 0) throw DataError("scorer set needs L > 0");
  std::set<std::string> ids;
  for (const auto& s : scorers) {
    if (!ids.insert(s.scorer_id).second) throw DataError("duplicate scorer id '" + s.scorer_id + "'");
    if (s.scorer_id == kMeanHumanLabel) throw DataError("scorer id '" + s.scorer_id + "' is reserved");
    if (s.cells.size() != recall_ids.size()) {
      throw DataError("scorer '" + s.scorer_id + "' has " + std::to_string(s.cells.size()) +
                      " rows, expected " + std::to_string(recall_ids.size()));
    }
    for (const auto& row : s.cells) {
      if (row.size() != static_cast<std::size_t>(L)) {
        throw DataError("scorer '" + s.scorer_id + "' has a row of length " +
                        std::to_string(row.size()) + ", expected " + std::to_string(L));
      }
    }
  }
}

namespace {

int parse_int(const std::string& s, const std::string& what, std::size_t line) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("row " + std::to_string(line) + ": " + what + " '" + s + "' is not an integer");
  }
  return v;
}

}  // namespace

ScorerMatrix read_scorer_csv(std::string_view csv, const std::string& scorer_id, bool human, int L,
                             const std::vector<std::string>& recall_ids) {
  if (L <= 0) throw InvalidArgument("L must be positive");
  const auto rows = io::parse_csv(csv);
  if (rows.empty() || rows[0] != std::vector<std::string>{"recall_id", "clause_index", "recalled"}) {
    throw DataError(scorer_id + ": expected header recall_id,clause_index,recalled");
  }
  std::vector<std::string> order = recall_ids;
  std::map<std::string, std::vector<int>> cells;  // -1 = missing
  for (const auto& id : order) cells[id].assign(static_cast<std::size_t>(L), -1);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::size_t line = i + 1;
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 3) throw DataError(scorer_id + " row " + std::to_string(line) + ": expected 3 fields");
    const int clause = parse_int(row[1], "clause_index", line);
    const int value = parse_int(row[2], "recalled", line);
    if (clause < 1 || clause > L) {
      throw DataError(scorer_id + " row " + std::to_string(line) + ": clause_index " +
                      std::to_string(clause) + " outside 1.." + std::to_string(L));
    }
    if (value != 0 && value != 1) {
      throw DataError(scorer_id + " row " + std::to_string(line) + ": recalled must be 0 or 1");
    }
    auto it = cells.find(row[0]);
    if (it == cells.end()) {
      if (!recall_ids.empty()) {
        throw DataError(scorer_id + " row " + std::to_string(line) + ": unknown recall id '" + row[0] + "'");
      }
      order.push_back(row[0]);
      it = cells.emplace(row[0], std::vector<int>(static_cast<std::size_t>(L), -1)).first;
    }
    int& cell = it->second[static_cast<std::size_t>(clause - 1)];
    if (cell != -1) {
      throw DataError(scorer_id + " row " + std::to_string(line) + ": duplicate cell (" + row[0] +
                      ", " + std::to_string(clause) + ")");
    }
    cell = value;
  }
  ScorerMatrix m{scorer_id, human, {}};
  std::string missing;
  std::size_t n_missing = 0;
  for (const auto& id : order) {
    std::vector<bool> row;
    for (int c = 0; c < L; ++c) {
      const int v = cells[id][static_cast<std::size_t>(c)];
      if (v < 0 && n_missing++ < 10) missing += " (" + id + ", " + std::to_string(c + 1) + ")";
      row.push_back(v == 1);
    }
    m.cells.push_back(std::move(row));
  }
  if (n_missing) {
    throw DataError(scorer_id + ": " + std::to_string(n_missing) + " missing cells:" + missing +
                    (n_missing > 10 ? " ..." : ""));
  }
  if (m.cells.empty()) throw DataError(scorer_id + ": no recalls");
  return m;
}

std::string scorer_to_csv(const ScorerMatrix& m, const std::vector<std::string>& recall_ids) {
  if (recall_ids.size() != m.cells.size()) throw InvalidArgument("recall id count differs from rows");
  std::string out = io::csv_row({"recall_id", "clause_index", "recalled"});
  for (std::size_t i = 0; i < m.cells.size(); ++i) {
    for (std::size_t c = 0; c < m.cells[i].size(); ++c) {
      out += io::csv_row({recall_ids[i], std::to_string(c + 1), m.cells[i][c] ? "1" : "0"});
    }
  }
  return out;
}

ScorerMatrix from_records(const std::vector<recall::RecallRecord>& records,
                          const Narrative& narrative, const std::string& scorer_id,
                          const std::vector<std::string>& recall_ids) {
  const auto matrix = recall::build_matrix(records, narrative);
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < matrix.participants.size(); ++i) {
    if (!row_of.emplace(matrix.participants[i], i).second) {
      throw DataError(scorer_id + ": more than one record for recall '" + matrix.participants[i] + "'");
    }
  }
  ScorerMatrix m{scorer_id, false, {}};
  for (const auto& id : recall_ids) {
    const auto it = row_of.find(id);
    if (it == row_of.end()) throw DataError(scorer_id + ": no record for recall '" + id + "'");
    m.cells.push_back(matrix.cells[it->second]);
  }
  return m;
}

std::vector<double> scorer_p_rec(const ScorerMatrix& m) {
  if (m.cells.empty()) throw InsufficientDataError("scorer '" + m.scorer_id + "' has no recalls");
  std::vector<double> p(m.cells.front().size(), 0.0);
  for (const auto& row : m.cells) {
    for (std::size_t c = 0; c < row.size(); ++c) p[c] += row[c] ? 1.0 : 0.0;
  }
  for (double& x : p) x /= static_cast<double>(m.cells.size());
  return p;
}

double CorrelationTable::at(const std::string& a, const std::string& b) const {
  const auto ia = std::find(labels.begin(), labels.end(), a);
  const auto ib = std::find(labels.begin(), labels.end(), b);
  if (ia == labels.end() || ib == labels.end()) throw NotFoundError("no table entry for " + a + "/" + b);
  return r[static_cast<std::size_t>(ia - labels.begin())][static_cast<std::size_t>(ib - labels.begin())];
}

CorrelationTable scorer_correlations(const ScorerMatrixSet& set) {
  set.validate();
  if (set.scorers.size() < 2) throw InvalidArgument("scorer correlations need at least two scorers");
  CorrelationTable t;
  std::vector<std::vector<double>> series;
  std::vector<std::vector<double>> humans;
  for (const auto& s : set.scorers) {
    if (s.human) {
      humans.push_back(scorer_p_rec(s));
    } else {
      t.labels.push_back(s.scorer_id);
      series.push_back(scorer_p_rec(s));
    }
  }
  if (!humans.empty()) {
    std::vector<double> mean(static_cast<std::size_t>(set.L), 0.0);
    for (const auto& h : humans) {
      for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += h[c];
    }
    for (double& x : mean) x /= static_cast<double>(humans.size());
    t.labels.push_back(kMeanHumanLabel);
    series.push_back(std::move(mean));
    for (const auto& s : set.scorers) {
      if (s.human) t.labels.push_back(s.scorer_id);
    }
    series.insert(series.end(), humans.begin(), humans.end());
  }
  const std::size_t n = series.size();
  t.r.assign(n, std::vector<double>(n, std::nan("")));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      double r = std::nan("");
      try {
        r = a == b ? (stats::pearson_r(series[a], series[a]), 1.0) : stats::pearson_r(series[a], series[b]);
      } catch (const UndefinedCorrelationError&) {
      }
      t.r[a][b] = t.r[b][a] = r;
    }
  }
  return t;
}

std::string table_to_csv(const CorrelationTable& table) {
  std::vector<std::string> header{""};
  header.insert(header.end(), table.labels.begin(), table.labels.end());
  std::string out = io::csv_row(header);
  for (std::size_t i = 0; i < table.labels.size(); ++i) {
    std::vector<std::string> row{table.labels[i]};
    for (double v : table.r[i]) row.push_back(io::format_double(v));
    out += io::csv_row(row);
  }
  return out;
}

RangeBand range_band(const ScorerMatrixSet& set) {
  set.validate();
  std::vector<std::vector<double>> humans;
  for (const auto& s : set.scorers) {
    if (s.human) humans.push_back(scorer_p_rec(s));
  }
  if (humans.empty()) throw InvalidArgument("range band needs at least one human scorer");
  RangeBand band;
  band.degenerate = humans.size() < 2;
  for (std::size_t c = 0; c < static_cast<std::size_t>(set.L); ++c) {
    BandPoint p{humans[0][c], 0.0, humans[0][c]};
    for (const auto& h : humans) {
      p.min = std::min(p.min, h[c]);
      p.max = std::max(p.max, h[c]);
      p.mean += h[c];
    }
    p.mean /= static_cast<double>(humans.size());
    // Keep the envelope closed under rounding of the mean.
    p.mean = std::clamp(p.mean, p.min, p.max);
    band.clauses.push_back(p);
  }
  return band;
}

}  // namespace narrmem::reliability
