// Acceptance run: one PASS/FAIL line per criterion. Exits 0 only when every
// failure is a known, documented fixture deviation (see README).

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "narrmem/corpus.hpp"
#include "narrmem/io.hpp"
#include "narrmem/mock.hpp"
#include "narrmem/parsers.hpp"
#include "narrmem/pipeline.hpp"
#include "narrmem/recall.hpp"
#include "narrmem/recognition.hpp"
#include "narrmem/rng.hpp"
#include "narrmem/service.hpp"
#include "narrmem/similarity.hpp"
#include "narrmem/stats.hpp"
#include "support/fake_clock.hpp"
#include "support/oracles.hpp"
#include "support/paper_data.hpp"
#include "support/simulate.hpp"
#include "support/temp_dir.hpp"

using namespace narrmem;
namespace fs = std::filesystem;
using Wall = std::chrono::steady_clock;

namespace {

const fs::path kFixtures = NARRMEM_FIXTURE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
  // Names of failing items that are documented fixture deviations.
  std::vector<std::string> known;
  bool only_known = false;
};

double seconds_since(Wall::time_point t0) {
  return std::chrono::duration<double>(Wall::now() - t0).count();
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

Outcome parser_fidelity() {
  const auto t0 = Wall::now();
  std::vector<std::string> bad;
  if (parse::scored_set(paper::read("boyscout_score_completion.txt"), 19) !=
      std::set<int>{7, 8, 9, 14, 15, 16, 17, 19})
    bad.push_back("scored set");
  if (parse::ordered_sequence(paper::read("boyscout_order_completion.txt"), 19) !=
      std::vector<int>{14, 7, 8, 9, 15, 16, 17, 19})
    bad.push_back("ordered sequence");
  const auto lures = parse::lures(paper::read("schissel_lure_completion.txt"), 18);
  if (lures.size() != 18 || lures.front().label != "1.5" || lures.back().label != "18.5")
    bad.push_back("lures");
  if (parse::numbered_clauses(paper::read("pool_story_completion.txt")).size() != 18)
    bad.push_back("pool story");
  if (parse::numbered_clauses(paper::read("boyscout_recall_segmentation_completion.txt")).size() != 10)
    bad.push_back("recall segmentation");
  const double secs = seconds_since(t0);
  if (secs >= 1.0) bad.push_back("runtime " + fmt(secs) + " s");
  std::string d = bad.empty() ? "5/5 completions exact" : "mismatch:";
  for (const auto& b : bad) d += " " + b;
  return {bad.empty(), d + " (" + fmt(secs * 1000, 3) + " ms)"};
}

struct TableRow {
  const char* fixture;
  int clauses;
  long duration_s;
};

// Printed stimulus table, keyed by the bundled fixture ids.
const TableRow kTable[] = {
    {"schissel-v1-pool", 18, 67},          {"schissel-v2-lake", 18, 65},
    {"boyscout", 19, 59},                  {"triplett-v1-rookie", 32, 111},
    {"triplett-v2-catlady", 32, 108},      {"hester-v1-park", 54, 201},
    {"hester-v2-church", 54, 269},         {"panic", 56, 158},
    {"boyscout-scrambled", 19, 60},        {"triplett-v1-rookie-scrambled", 32, 111},
};

// hester-v1-park: the printed clauses are shorter than the presented prose.
// panic: the bundled segmentation is not the one the table counts.
const std::set<std::string> kKnownStimulusDeviations{"hester-v1-park", "panic"};

Outcome stimulus_stats_check() {
  const auto t0 = Wall::now();
  const auto corpus = Corpus::load_directory(kFixtures);
  std::vector<std::string> failing, notes;
  std::size_t checked = 0;
  for (const auto& id : corpus.narrative_ids()) {
    const auto* row = std::find_if(std::begin(kTable), std::end(kTable),
                                   [&](const TableRow& r) { return id == r.fixture; });
    if (row == std::end(kTable)) {
      notes.push_back(id + " has no table row");
      continue;
    }
    ++checked;
    const auto s = stimulus_stats(corpus.narrative(id));
    const long dur = s.rounded_duration_s();
    if (s.clauses != row->clauses || std::abs(dur - row->duration_s) > 1) {
      failing.push_back(id);
      notes.push_back(id + " L=" + std::to_string(s.clauses) + "/" + std::to_string(row->clauses) +
                      " T=" + std::to_string(dur) + "/" + std::to_string(row->duration_s) + " s");
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = failing.empty() && secs < 1.0 && checked == std::size(kTable);
  o.detail = std::to_string(checked - failing.size()) + "/" + std::to_string(checked) + " fixtures match";
  for (const auto& n : notes) o.detail += "; " + n;
  o.detail += " (" + fmt(secs * 1000) + " ms)";
  o.known = failing;
  o.only_known = secs < 1.0 && checked == std::size(kTable) &&
                 std::all_of(failing.begin(), failing.end(),
                             [](const std::string& f) { return kKnownStimulusDeviations.count(f) > 0; });
  return o;
}

Outcome retained_identity() {
  const auto t0 = Wall::now();
  double worst = 0.0;
  for (int L : {18, 32, 54, 130}) {
    for (int M = 0; M <= L; ++M) {
      for (int gi = 0; gi <= 9; ++gi) {
        const double g = gi / 10.0;
        const double ph = oracle::forward_hit_rate(M, L, g);
        worst = std::max(worst, std::abs(recognition::retained_estimate(ph, g, L) - M));
      }
    }
  }
  // Planted populations: 100 participants, 10 probes each.
  int inside = 0;
  const int lengths[] = {18, 32, 54, 130};
  for (std::uint64_t run = 0; run < 100; ++run) {
    const int L = lengths[run % 4];
    const int M = L / 2;
    const auto n = sim::toy_narrative(L);
    const auto t = sim::recognition_population(n, sim::toy_lures(n), M, 0.2, 100, 7000 + run);
    const auto s = recognition::retained_with_bootstrap(t, L, 500, run);
    inside += std::abs(s.m - M) <= 2 * s.m_stderr;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && inside >= 90 && secs < 30.0,
          "grid max |error| " + fmt(worst) + "; planted M within 2 SE in " + std::to_string(inside) +
              "/100 runs (" + fmt(secs) + " s)"};
}

Outcome probit_numerics() {
  double worst = 0.0;
  for (int i = 0; i <= 10000; ++i) {
    const double x = -5.0 + i * 1e-3;
    worst = std::max(worst, std::abs(stats::probit(stats::normal_cdf(x)) - x));
  }
  const double d0 = recognition::d_prime(0.5, 0.5);
  const auto n = sim::toy_narrative(40);
  const auto lures = sim::toy_lures(n);
  int flat = 0, runs = 0;
  for (std::uint64_t run = 0; run < 100; ++run, ++runs) {
    const auto d = recognition::dprime_by_position(sim::recognition_population(n, lures, 20, 0.3, 200, 500 + run));
    if (d.trend) flat += std::abs(d.trend->slope) <= 3 * d.trend->slope_stderr;
  }
  return {worst < 1e-6 && d0 == 0.0 && flat >= 95,
          "max |probit(Phi(x)) - x| " + fmt(worst) + "; d'(0.5,0.5) = " + fmt(d0) + "; flat slope in " +
              std::to_string(flat) + "/" + std::to_string(runs) + " runs"};
}

Outcome bootstrap_coverage() {
  const auto t0 = Wall::now();
  const double mu = 3.0, sd = 2.0;
  int covered = 0;
  for (std::uint64_t rep = 0; rep < 500; ++rep) {
    Rng rng(derive_seed(11, rep));
    std::vector<double> x(100);
    for (auto& v : x) v = rng.normal(mu, sd);
    const auto ci = stats::bootstrap_ci(std::span<const double>(x),
                                        [](std::span<const double> s) { return stats::mean(s); },
                                        1000, 0.05, rep);
    covered += ci.low <= mu && mu <= ci.high;
  }
  const double rate = covered / 500.0;
  const double secs = seconds_since(t0);
  return {rate >= 0.92 && rate <= 0.98 && secs < 30.0,
          "95% CI covered the mean in " + std::to_string(covered) + "/500 (" + fmt(100 * rate) + "%, " +
              fmt(secs) + " s)"};
}

Outcome similarity_check() {
  auto g = std::make_shared<Gateway>(std::make_shared<mock::MockChatProvider>(),
                                     std::make_shared<mock::MockEmbeddingProvider>(0));
  std::map<int, int> covered;
  for (int L : {19, 54}) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto p = similarity::similarity_scores(sim::mock_narrative(L, seed), *g, "mock-embedding");
      const auto planted = sim::planted_recall(p.scores, 0.8, 0.075, seed);
      const auto c = similarity::recall_similarity_correlation(p, planted.p_rec, 1000, seed);
      covered[L] += c.correlation.ci_low <= 0.8 && 0.8 <= c.correlation.ci_high;
    }
  }
  Rng rng(2024);
  int cosine_ok = 0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t dim = 1 + rng.uniform_index(512);
    std::vector<double> a(dim), b(dim);
    for (auto& x : a) x = rng.normal(0.0, 1.0 + 5 * rng.uniform01());
    for (auto& x : b) x = rng.normal(0.0, 1.0);
    if (c % 7 == 0) b = a;
    const double s = similarity::cosine(a, b);
    const double ka = std::exp(rng.normal(0.0, 4.0)), kb = std::exp(rng.normal(0.0, 4.0));
    auto a2 = a, b2 = b;
    for (auto& x : a2) x *= ka;
    for (auto& x : b2) x *= kb;
    cosine_ok += std::abs(s) <= 1.0 && std::abs(similarity::cosine(a2, b2) - s) <= 1e-12;
  }
  return {covered[19] >= 95 && covered[54] >= 95 && cosine_ok == 1000,
          "planted r inside CI: L=19 " + std::to_string(covered[19]) + "/100, L=54 " +
              std::to_string(covered[54]) + "/100; cosine invariants " + std::to_string(cosine_ok) +
              "/1000"};
}

// Everything under `dir` except the chat audit log and embedding cache.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    if (rel.starts_with("audit/") || rel.starts_with("cache/")) continue;
    out[rel] = io::read_text_file(e.path());
  }
  return out;
}

struct PipelineRun {
  std::map<std::string, std::string> files;
  std::vector<service::Session> sessions;
  bool replay_identical = false;
  std::vector<std::string> problems;
};

void require(PipelineRun& run, const std::string& step, const pipeline::CommandResult& r) {
  if (r.exit_code != 0) run.problems.push_back(step + " exited " + std::to_string(r.exit_code));
}

PipelineRun run_pipeline(const fs::path& root, std::uint64_t master) {
  PipelineRun out;
  pipeline::RunContext ctx;
  ctx.mode = pipeline::ProviderMode::mock;
  ctx.seed = master;
  ctx.data_dir = root;
  ctx.clock = testing_support::SteppingClock();
  const fs::path corpus = root / "corpus", data = root / "data", figs = root / "figures";
  const fs::path log = root / "events.jsonl";

  require(out, "generate", pipeline::cmd_generate(ctx, {kFixtures / "schissel-template.json", 2, corpus}));
  require(out, "lures", pipeline::cmd_lures(ctx, {{"schissel-v1", "schissel-v2"}, corpus}));
  require(out, "scramble", pipeline::cmd_scramble(ctx, {"schissel-v1", corpus, corpus}));
  if (!out.problems.empty()) return out;

  service::ServiceOptions so;
  so.event_log = log;
  so.master_seed = master;
  so.clock = testing_support::SteppingClock();
  {
    service::ExperimentService svc(Corpus::load_directory(corpus), so);
    int participant = 0;
    for (const std::string id : {"schissel-v1", "schissel-v2", "schissel-v1-scrambled"}) {
      const auto& n = svc.corpus().narrative(id);
      for (int k = 0; k < 24; ++k, ++participant) {
        Rng rng(derive_seed(master, "client/" + std::to_string(participant)));
        const std::string pid = "p" + std::to_string(100 + participant);
        // Free recall: each clause with a position-dependent probability.
        auto sid = svc.create_session(pid, id, service::Task::recall).session.session_id;
        svc.consent(sid);
        svc.get_stimulus(sid);
        svc.presentation_finished(sid);
        std::string text;
        for (std::size_t c = 0; c < n.length(); ++c) {
          if (rng.bernoulli(0.2 + 0.6 * static_cast<double>(c % 4) / 3.0)) {
            text += (text.empty() ? "" : " ") + n.clauses[c].text;
          }
        }
        svc.submit_recall(sid, text);
        // Recognition: retained clauses get "yes", everything else a guess.
        sid = svc.create_session(pid, id, service::Task::recognition).session.session_id;
        svc.consent(sid);
        svc.get_stimulus(sid);
        svc.presentation_finished(sid);
        std::set<std::string> kept;
        for (const auto& c : n.clauses)
          if (rng.bernoulli(0.6)) kept.insert(c.text);
        while (auto probe = svc.next_probe(sid)) {
          svc.answer_probe(sid, probe->position, kept.count(probe->text) > 0 || rng.bernoulli(0.2));
        }
      }
    }
    out.sessions = svc.sessions();
  }
  service::ExperimentService replayed(Corpus::load_directory(corpus), so);
  out.replay_identical = replayed.sessions() == out.sessions && !out.sessions.empty();

  require(out, "export", pipeline::cmd_export(ctx, {log, corpus, data, {}}));
  pipeline::ScoreOptions score;
  score.corpus_dir = corpus;
  score.input = data / "recall.jsonl";
  score.out = data / "scored.jsonl";
  require(out, "score", pipeline::cmd_score(ctx, score));
  require(out, "analyze", pipeline::cmd_analyze(ctx, {data, corpus, figs, 300}));
  if (!fs::exists(figs / "summary.json")) out.problems.push_back("analyze wrote no summary");
  out.files = snapshot(root);
  return out;
}

Outcome end_to_end() {
  const auto t0 = Wall::now();
  testing_support::TempDir dir;
  const auto root = dir / "run";
  auto first = run_pipeline(root, 42);
  fs::remove_all(root);
  auto second = run_pipeline(root, 42);
  const double secs = seconds_since(t0);

  std::vector<std::string> problems = first.problems;
  std::size_t differing = 0;
  for (const auto& [path, bytes] : first.files) {
    const auto it = second.files.find(path);
    if (it == second.files.end() || it->second != bytes) {
      ++differing;
      problems.push_back("differs: " + path);
    }
  }
  if (first.files.size() != second.files.size()) problems.push_back("file sets differ");
  if (!first.replay_identical || !second.replay_identical) problems.push_back("event replay differs");
  if (first.sessions != second.sessions) problems.push_back("sessions differ between runs");
  if (secs >= 120.0) problems.push_back("runtime " + fmt(secs) + " s");
  std::string d = std::to_string(first.files.size()) + " files byte-identical across re-run, " +
                  std::to_string(first.sessions.size()) + " sessions replayed (" + fmt(secs) + " s)";
  if (!problems.empty()) {
    d = std::to_string(differing) + " files differ;";
    for (std::size_t i = 0; i < std::min<std::size_t>(problems.size(), 6); ++i) d += " " + problems[i] + ";";
  }
  return {problems.empty(), d};
}

Outcome recognition_protocol() {
  service::ServiceOptions so;
  so.master_seed = 9;
  so.clock = testing_support::SteppingClock();
  service::ExperimentService svc(Corpus::load_directory(kFixtures), so);
  const std::string id = "schissel-template";
  const std::size_t L = svc.corpus().narrative(id).length();
  const std::size_t pool = L + svc.corpus().find_lures(id)->lures.size();
  std::map<std::string, double> counts;
  for (int i = 0; i < 1000; ++i) {
    const auto sid = svc.create_session("s" + std::to_string(1000 + i), id, service::Task::recognition)
                         .session.session_id;
    svc.consent(sid);
    svc.get_stimulus(sid);
    svc.presentation_finished(sid);
    Rng rng(static_cast<std::uint64_t>(i));
    while (auto p = svc.next_probe(sid)) svc.answer_probe(sid, p->position, rng.bernoulli(0.5));
  }
  std::map<std::string, int> per_participant;
  for (const auto& line : io::split_lines(svc.export_dataset().recognition_jsonl)) {
    const auto t = recognition::trial_from_json(line);
    ++per_participant[t.participant_id];
    counts[t.item] += 1;
  }
  const bool all_ten = per_participant.size() == 1000 &&
                       std::all_of(per_participant.begin(), per_participant.end(),
                                   [](const auto& kv) { return kv.second == 10; });
  const double expected = 1000.0 * 10.0 / static_cast<double>(pool);
  double chi2 = 0.0;
  for (const auto& [item, n] : counts) chi2 += (n - expected) * (n - expected) / expected;
  chi2 += static_cast<double>(pool - std::min(pool, counts.size())) * expected;  // items never drawn
  const boost::math::chi_squared dist(static_cast<double>(pool - 1));
  const double critical = boost::math::quantile(dist, 0.99);
  return {all_ten && counts.size() == pool && chi2 < critical,
          std::to_string(per_participant.size()) + " sessions, " + (all_ten ? "all" : "NOT all") +
              " with 10 trials; chi2 = " + fmt(chi2, 4) + " < " + fmt(critical, 4) + " (df " +
              std::to_string(pool - 1) + ", alpha 0.01)"};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Outcome()>> checks[] = {
      {"parser fidelity", parser_fidelity},
      {"stimulus stats", stimulus_stats_check},
      {"retained-clause inversion", retained_identity},
      {"probit and d'", probit_numerics},
      {"bootstrap coverage", bootstrap_coverage},
      {"similarity pipeline", similarity_check},
      {"end-to-end mock pipeline", end_to_end},
      {"recognition protocol", recognition_protocol},
  };
  int unexpected = 0, passed = 0;
  for (const auto& [name, check] : checks) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail;
    if (!o.pass && o.only_known) {
      std::cout << " [known fixture deviation:";
      for (const auto& k : o.known) std::cout << " " << k;
      std::cout << "]";
    }
    std::cout << std::endl;
    passed += o.pass;
    unexpected += !o.pass && !o.only_known;
  }
  std::cout << passed << "/" << std::size(checks) << " criteria pass";
  if (unexpected == 0 && passed < static_cast<int>(std::size(checks))) {
    std::cout << "; remaining failures are documented fixture deviations";
  }
  std::cout << std::endl;
  return unexpected == 0 ? 0 : 1;
}
