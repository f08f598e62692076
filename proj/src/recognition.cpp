#include "narrmem/recognition.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "narrmem/errors.hpp"
#include "narrmem/io.hpp"
#include "narrmem/rng.hpp"

namespace narrmem::recognition {

using nlohmann::json;

std::string trial_to_json(const RecognitionTrial& t) {
  json j = {{"participant_id", t.participant_id}, {"narrative_id", t.narrative_id},
            {"probe_position", t.probe_position}, {"item", t.item},
            {"is_old", t.is_old},                 {"response_yes", t.response_yes},
            {"timestamp", t.timestamp}};
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

RecognitionTrial trial_from_json(const std::string& line) {
  try {
    const auto j = json::parse(line);
    RecognitionTrial t;
    t.participant_id = j.at("participant_id").get<std::string>();
    t.narrative_id = j.at("narrative_id").get<std::string>();
    t.probe_position = j.at("probe_position").get<int>();
    t.item = j.at("item").get<std::string>();
    t.is_old = j.at("is_old").get<bool>();
    t.response_yes = j.at("response_yes").get<bool>();
    t.timestamp = j.value("timestamp", "");
    return t;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad recognition trial: ") + e.what());
  }
}

std::vector<RecognitionTrial> read_trials(const std::filesystem::path& jsonl) {
  std::vector<RecognitionTrial> out;
  std::size_t n = 0;
  for (const auto& line : io::split_lines(io::read_text_file(jsonl))) {
    ++n;
    try {
      out.push_back(trial_from_json(line));
    } catch (const DataError& e) {
      throw DataError(jsonl.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::string trials_to_jsonl(const std::vector<RecognitionTrial>& trials) {
  std::string out;
  for (const auto& t : trials) out += trial_to_json(t) + "\n";
  return out;
}

namespace {

Counts count(const std::vector<const RecognitionTrial*>& trials) {
  Counts c;
  for (const auto* t : trials) {
    if (t->is_old) {
      (t->response_yes ? c.hits : c.misses)++;
    } else {
      (t->response_yes ? c.false_alarms : c.correct_rejections)++;
    }
  }
  return c;
}

std::optional<Rates> rates_of(const Counts& c) {
  const auto n_old = c.hits + c.misses, n_new = c.false_alarms + c.correct_rejections;
  if (n_old == 0 || n_new == 0) return std::nullopt;
  return Rates{static_cast<double>(c.hits) / static_cast<double>(n_old),
               static_cast<double>(c.false_alarms) / static_cast<double>(n_new), c};
}

std::vector<const RecognitionTrial*> pointers(const std::vector<RecognitionTrial>& trials) {
  std::vector<const RecognitionTrial*> out;
  for (const auto& t : trials) out.push_back(&t);
  return out;
}

}  // namespace

Rates rates(const std::vector<RecognitionTrial>& trials) {
  auto r = rates_of(count(pointers(trials)));
  if (!r) throw InsufficientDataError("rates need at least one old and one new trial");
  return *r;
}

double retained_estimate(double p_h, double p_f, int L) {
  if (!(p_f < 1.0)) throw DomainError("M is undefined when the false-alarm rate is 1");
  return L * (p_h - p_f) / (1.0 - p_f);
}

RecognitionSummary retained_with_bootstrap(const std::vector<RecognitionTrial>& trials, int L,
                                           std::size_t n_resamples, std::uint64_t seed) {
  std::map<std::string, std::vector<const RecognitionTrial*>> by_participant;
  for (const auto& t : trials) by_participant[t.participant_id].push_back(&t);
  if (by_participant.size() < 2) {
    throw InsufficientDataError("bootstrap of M needs at least two participants");
  }
  const auto pooled = rates(trials);
  RecognitionSummary s;
  s.p_h = pooled.p_h;
  s.p_f = pooled.p_f;
  s.p_g = pooled.p_f;
  s.counts = pooled.counts;
  s.m = retained_estimate(pooled.p_h, pooled.p_f, L);
  s.negative_m = s.m < 0;
  s.participants = by_participant.size();

  std::vector<std::vector<const RecognitionTrial*>> groups;
  for (auto& [id, g] : by_participant) groups.push_back(std::move(g));
  auto dist = stats::bootstrap_distribution(
      std::span<const std::vector<const RecognitionTrial*>>(groups),
      [L](std::span<const std::vector<const RecognitionTrial*>> sample) -> std::optional<double> {
        std::vector<const RecognitionTrial*> all;
        for (const auto& g : sample) all.insert(all.end(), g.begin(), g.end());
        auto r = rates_of(count(all));
        if (!r || r->p_f >= 1.0) return std::nullopt;
        return retained_estimate(r->p_h, r->p_f, L);
      },
      n_resamples, seed);
  s.skipped_resamples = dist.skipped;
  s.many_skipped = static_cast<double>(dist.skipped) > 0.01 * static_cast<double>(n_resamples);
  s.m_stderr = dist.values.size() >= 2 ? stats::sample_sd(dist.values) : std::nan("");
  return s;
}

double d_prime(double p_h, double p_f) { return stats::probit(p_h) - stats::probit(p_f); }

DprimeByPosition dprime_by_position(const std::vector<RecognitionTrial>& trials) {
  std::map<int, std::vector<const RecognitionTrial*>> by_pos;
  for (const auto& t : trials) by_pos[t.probe_position].push_back(&t);
  DprimeByPosition out;
  for (int pos = 1; pos <= static_cast<int>(kProbesPerSession); ++pos) {
    const auto c = count(by_pos[pos]);
    const auto r = rates_of(c);
    if (!r) {
      out.omitted.push_back(pos);
      continue;
    }
    const auto n_old = c.hits + c.misses, n_new = c.false_alarms + c.correct_rejections;
    DprimePoint p{pos, r->p_h, r->p_f, 0.0, n_old, n_new};
    p.d_prime = d_prime(stats::clamp_rate(r->p_h, n_old), stats::clamp_rate(r->p_f, n_new));
    out.points.push_back(p);
  }
  if (out.points.empty()) throw InsufficientDataError("no probe position has both old and new trials");
  if (out.points.size() >= 3) {
    std::vector<double> x, y;
    for (const auto& p : out.points) {
      x.push_back(p.position);
      y.push_back(p.d_prime);
    }
    out.trend = stats::linear_fit(x, y);
  }
  return out;
}

std::vector<ClauseHitRate> clause_hit_rates(const std::vector<RecognitionTrial>& trials) {
  std::map<std::pair<std::string, int>, std::pair<std::size_t, std::size_t>> acc;
  for (const auto& t : trials) {
    if (!t.is_old) continue;
    int idx = 0;
    try {
      std::size_t used = 0;
      idx = std::stoi(t.item, &used);
      if (used != t.item.size()) idx = 0;
    } catch (const std::exception&) {
      idx = 0;
    }
    if (idx < 1) throw DataError("old trial with non-clause item '" + t.item + "'");
    auto& [yes, n] = acc[{t.narrative_id, idx}];
    yes += t.response_yes;
    ++n;
  }
  std::vector<ClauseHitRate> out;
  for (const auto& [key, v] : acc) {
    out.push_back({key.first, key.second,
                   static_cast<double>(v.first) / static_cast<double>(v.second), v.second});
  }
  return out;
}

HitRecallJoin hit_rate_by_recall_bin(const std::vector<ClauseHitRate>& hit_rates,
                                     const std::map<std::string, std::vector<double>>& p_rec,
                                     stats::BinSpec spec, std::size_t n_resamples,
                                     std::uint64_t seed) {
  HitRecallJoin out;
  std::string unmatched;
  std::set<std::pair<std::string, int>> probed;
  for (const auto& h : hit_rates) {
    auto it = p_rec.find(h.narrative_id);
    if (it == p_rec.end() || h.clause_index < 1 ||
        h.clause_index > static_cast<int>(it->second.size())) {
      unmatched += (unmatched.empty() ? "" : ", ") + h.narrative_id + "#" +
                   std::to_string(h.clause_index);
      continue;
    }
    probed.insert({h.narrative_id, h.clause_index});
    out.points.push_back({h.narrative_id, h.clause_index,
                          it->second[static_cast<std::size_t>(h.clause_index - 1)], h.p_h});
  }
  if (!unmatched.empty()) throw DataError("clauses with hit rates but no P_rec: " + unmatched);
  for (const auto& [id, v] : p_rec) {
    for (std::size_t c = 1; c <= v.size(); ++c) {
      out.unprobed_excluded += !probed.count({id, static_cast<int>(c)});
    }
  }
  std::vector<double> x, y;
  for (const auto& p : out.points) {
    x.push_back(p.p_rec);
    y.push_back(p.p_h);
  }
  out.bins = stats::bin_means(x, y, spec);
  try {
    out.fit = stats::linear_fit(x, y);
  } catch (const FitError&) {
  }
  try {
    out.correlation = stats::correlate(x, y, n_resamples, 0.05, seed);
  } catch (const UndefinedCorrelationError&) {
  }
  return out;
}

}  // namespace narrmem::recognition
