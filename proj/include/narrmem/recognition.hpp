#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "narrmem/corpus.hpp"
#include "narrmem/stats.hpp"

namespace narrmem::recognition {

struct RecognitionTrial {
  std::string participant_id;
  std::string narrative_id;
  int probe_position = 0;  // 1..10
  std::string item;        // original clause index, or lure label such as "3.5"
  bool is_old = false;
  bool response_yes = false;
  std::string timestamp;

  friend bool operator==(const RecognitionTrial&, const RecognitionTrial&) = default;
};

std::string trial_to_json(const RecognitionTrial& t);
RecognitionTrial trial_from_json(const std::string& line);
std::vector<RecognitionTrial> read_trials(const std::filesystem::path& jsonl);
std::string trials_to_jsonl(const std::vector<RecognitionTrial>& trials);

struct Counts {
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::size_t false_alarms = 0;
  std::size_t correct_rejections = 0;
};

struct Rates {
  double p_h = 0.0;
  double p_f = 0.0;
  Counts counts;
};

// Pooled over participants and probe positions. Needs at least one old and
// one new trial (InsufficientDataError).
Rates rates(const std::vector<RecognitionTrial>& trials);

// M = L (P_h - P_f) / (1 - P_f). Negative values are returned unchanged.
// P_f = 1 is a DomainError.
double retained_estimate(double p_h, double p_f, int L);

struct RecognitionSummary {
  double p_h = 0.0;
  double p_f = 0.0;
  double p_g = 0.0;  // guessing rate, approximated by P_f
  double m = 0.0;
  double m_stderr = 0.0;
  Counts counts;
  std::size_t participants = 0;
  bool negative_m = false;
  std::size_t skipped_resamples = 0;
  bool many_skipped = false;  // more than 1% of resamples had no estimate
};

// Pooled estimate plus a participant-level bootstrap: M_stderr is the SD of
// M across resamples. Needs >= 2 participants.
RecognitionSummary retained_with_bootstrap(const std::vector<RecognitionTrial>& trials, int L,
                                           std::size_t n_resamples, std::uint64_t seed);

struct DprimePoint {
  int position = 0;
  double p_h = 0.0;
  double p_f = 0.0;
  double d_prime = 0.0;
  std::size_t n_old = 0;
  std::size_t n_new = 0;
};

struct DprimeByPosition {
  std::vector<DprimePoint> points;
  std::vector<int> omitted;  // positions lacking old or new trials
  std::optional<stats::LinearFit> trend;  // d' on position, when >= 3 points
};

// Rates at each position are clamped into [1/(2N), 1 - 1/(2N)] before the
// probit, with N the number of trials behind each rate.
DprimeByPosition dprime_by_position(const std::vector<RecognitionTrial>& trials);

double d_prime(double p_h, double p_f);

struct ClauseHitRate {
  std::string narrative_id;
  int clause_index = 0;
  double p_h = 0.0;
  std::size_t n_trials = 0;
};

// Per-clause hit rate from old-probe trials only, by original clause index.
std::vector<ClauseHitRate> clause_hit_rates(const std::vector<RecognitionTrial>& trials);

struct ClausePoint {
  std::string narrative_id;
  int clause_index = 0;
  double p_rec = 0.0;
  double p_h = 0.0;
};

struct HitRecallJoin {
  std::vector<ClausePoint> points;
  stats::BinnedTable bins;  // P_h binned on P_rec
  // On the unbinned points; absent when either variable has no variance.
  std::optional<stats::CorrelationResult> correlation;
  std::optional<stats::LinearFit> fit;  // P_h on P_rec
  std::size_t unprobed_excluded = 0;
};

// Joins per-clause P_h with P_rec (keyed by narrative id, original order).
// A probed clause with no matching P_rec is a DataError naming it.
HitRecallJoin hit_rate_by_recall_bin(const std::vector<ClauseHitRate>& hit_rates,
                                     const std::map<std::string, std::vector<double>>& p_rec,
                                     stats::BinSpec spec = {15, stats::BinMode::equal_count},
                                     std::size_t n_resamples = 3000, std::uint64_t seed = 0);

}  // namespace narrmem::recognition
