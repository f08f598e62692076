#include <gtest/gtest.h>

#include <json.hpp>

#include <numbers>
#include <sstream>

#include "cli.hpp"
#include "narrmem/errors.hpp"
#include "narrmem/io.hpp"
#include "narrmem/mock.hpp"
#include "narrmem/parsers.hpp"
#include "narrmem/pipeline.hpp"
#include "narrmem/prompts.hpp"
#include "narrmem/recall.hpp"
#include "narrmem/reliability.hpp"
#include "narrmem/rng.hpp"
#include "narrmem/service.hpp"
#include "narrmem/similarity.hpp"
#include "support/fake_clock.hpp"
#include "support/paper_data.hpp"
#include "support/simulate.hpp"
#include "support/temp_dir.hpp"

using namespace narrmem;
using namespace narrmem::pipeline;
using nlohmann::json;
using testing_support::SteppingClock;
using testing_support::TempDir;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = NARRMEM_FIXTURE_DIR;

RunContext mock_context(const fs::path& data_dir, std::uint64_t seed = 7) {
  RunContext ctx;
  ctx.mode = ProviderMode::mock;
  ctx.seed = seed;
  ctx.data_dir = data_dir;
  ctx.clock = SteppingClock();
  return ctx;
}

std::shared_ptr<Gateway> gateway_with(std::shared_ptr<ChatProvider> chat) {
  GatewayOptions o;
  o.sleep = [](std::chrono::milliseconds) {};
  return std::make_shared<Gateway>(std::move(chat), std::make_shared<ModelKeyedMockEmbedder>(), o);
}

std::string slurp(const fs::path& p) { return io::read_text_file(p); }

// Every output file of a directory tree, manifests excluded.
std::map<std::string, std::string> outputs_of(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().string().ends_with(".manifest.json")) continue;
    out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

int run(std::vector<std::string> args, std::string* out_text = nullptr,
        std::string* err_text = nullptr) {
  args.insert(args.begin(), "narrmem");
  std::ostringstream out, err;
  const int code = narrmem::cli::run_cli(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

class FixedReply : public ChatProvider {
 public:
  explicit FixedReply(std::string text) : text_(std::move(text)) {}
  Completion complete(const ChatRequest&) override { return {text_, {}}; }

 private:
  std::string text_;
};

// Replies with `bad` until `bad_replies` calls have been made, then with the
// mock provider's answer.
class ShortThenMock : public ChatProvider {
 public:
  ShortThenMock(int bad_replies, int clauses) : bad_(bad_replies), clauses_(clauses) {}
  Completion complete(const ChatRequest& r) override {
    if (calls_++ < bad_) return {mock::generation_completion(clauses_, 1), {}};
    return mock_.complete(r);
  }
  int calls() const { return calls_; }

 private:
  int bad_, clauses_;
  std::atomic<int> calls_{0};
  mock::MockChatProvider mock_;
};

// Refuses any prompt containing `marker`.
class RefusingProvider : public ChatProvider {
 public:
  explicit RefusingProvider(std::string marker) : marker_(std::move(marker)) {}
  Completion complete(const ChatRequest& r) override {
    if (r.prompt.find(marker_) != std::string::npos) throw ContentError("refused");
    return mock_.complete(r);
  }

 private:
  std::string marker_;
  mock::MockChatProvider mock_;
};

void write_corpus(const fs::path& dir, const Narrative& n, const std::optional<LurePool>& lures) {
  save_narrative(n, dir / (n.id + ".json"));
  if (lures) save_lure_pool(*lures, dir / (n.id + ".lures.json"));
}

}  // namespace

TEST(Generate, TwoVariantsOfTheTemplate) {
  TempDir dir;
  auto ctx = mock_context(dir.path());
  const auto r = cmd_generate(ctx, {kFixtures / "schissel-template.json", 2, dir / "out"});
  EXPECT_EQ(r.exit_code, 0);
  for (const char* id : {"schissel-v1", "schissel-v2"}) {
    const auto n = load_narrative(dir / "out" / (std::string(id) + ".json"));
    EXPECT_EQ(n.length(), 18u);
    EXPECT_EQ(n.id, id);
  }
  EXPECT_NE(slurp(dir / "out/schissel-v1.json"), slurp(dir / "out/schissel-v2.json"));
  ASSERT_TRUE(r.manifest);
  const auto m = manifest_from_json(slurp(*r.manifest));
  EXPECT_EQ(m.command, "generate");
  EXPECT_EQ(m.outputs.size(), 2u);
  EXPECT_EQ(m.models.at("chat"), kMockChatModel);
  EXPECT_TRUE(changed_outputs(m).empty());
}

TEST(Generate, RerunIsByteIdenticalAndSeedMatters) {
  TempDir a, b, c;
  auto ca = mock_context(a.path(), 11), cb = mock_context(b.path(), 11), cc = mock_context(c.path(), 12);
  cmd_generate(ca, {kFixtures / "schissel-template.json", 3, a / "out"});
  cmd_generate(cb, {kFixtures / "schissel-template.json", 3, b / "out"});
  cmd_generate(cc, {kFixtures / "schissel-template.json", 3, c / "out"});
  EXPECT_EQ(outputs_of(a / "out"), outputs_of(b / "out"));
  EXPECT_NE(outputs_of(a / "out"), outputs_of(c / "out"));
}

TEST(Generate, WrongClauseCountIsRejectedAndRetried) {
  TempDir dir;
  auto ctx = mock_context(dir.path());
  auto provider = std::make_shared<ShortThenMock>(1, 17);
  ctx.gateway = gateway_with(provider);
  const auto r = cmd_generate(ctx, {kFixtures / "schissel-template.json", 1, dir / "out"});
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(provider->calls(), 2);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("17 clauses, need 18"), std::string::npos);
  EXPECT_EQ(load_narrative(dir / "out/schissel-v1.json").length(), 18u);
}

TEST(Generate, ExhaustedRetriesGivePartialOutput) {
  TempDir dir;
  auto ctx = mock_context(dir.path());
  auto provider = std::make_shared<ShortThenMock>(3, 17);
  ctx.gateway = gateway_with(provider);
  GenerateOptions o{kFixtures / "schissel-template.json", 2, dir / "out"};
  o.max_attempts = 2;
  const auto r = cmd_generate(ctx, o);
  EXPECT_EQ(r.exit_code, 1);
  // Variant 1 burns both attempts; variant 2 fails once, then succeeds.
  EXPECT_FALSE(fs::exists(dir / "out/schissel-v1.json"));
  EXPECT_TRUE(fs::exists(dir / "out/schissel-v2.json"));
}

TEST(Generate, MissingTemplateIsAUsageError) {
  TempDir dir;
  auto ctx = mock_context(dir.path());
  EXPECT_THROW(cmd_generate(ctx, {dir / "nope.json", 1, dir / "out"}), InvalidArgument);
  EXPECT_EQ(run({"generate", "--template", (dir / "nope.json").string(), "--out-dir",
                 (dir / "out").string()}),
            2);
  EXPECT_EQ(run({"generate", "--out-dir", "x"}), 2);  // --template is required
  EXPECT_EQ(run({"--provider", "bogus", "generate", "--template", "t", "--out-dir", "x"}), 2);
}

TEST(Generate, PlainNumberedTemplate) {
  TempDir dir;
  io::write_text_file(dir / "tmpl.txt", "1. I went out.\n2. It rained.\n3. I came home.\n");
  auto ctx = mock_context(dir.path());
  const auto r = cmd_generate(ctx, {dir / "tmpl.txt", 1, dir / "out"});
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(load_narrative(dir / "out/tmpl-v1.json").length(), 3u);
}

TEST(Lures, PoolOfLValidLures) {
  TempDir dir;
  fs::copy_file(kFixtures / "boyscout.json", dir / "boyscout.json");
  auto ctx = mock_context(dir.path());
  const auto r = cmd_lures(ctx, {{"boyscout"}, dir.path()});
  EXPECT_EQ(r.exit_code, 0);
  const auto pool = load_lure_pool(dir / "boyscout.lures.json");
  const auto n = load_narrative(dir / "boyscout.json");
  EXPECT_EQ(pool.lures.size(), n.length());
  EXPECT_NO_THROW(pool.validate(n));
}

TEST(Lures, TooFewLuresFailAfterRetries) {
  TempDir dir;
  fs::copy_file(kFixtures / "boyscout.json", dir / "boyscout.json");
  auto ctx = mock_context(dir.path());
  // The printed schissel completion has 18 lures, one short for boyscout.
  ctx.gateway = gateway_with(std::make_shared<FixedReply>(paper::read("schissel_lure_completion.txt")));
  const auto r = cmd_lures(ctx, {{"boyscout"}, dir.path()});
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_FALSE(fs::exists(dir / "boyscout.lures.json"));
  EXPECT_EQ(r.warnings.size(), 3u);
}

TEST(Lures, ScrambledNarrativeIsRejected) {
  TempDir dir;
  auto ctx = mock_context(dir.path());
  EXPECT_THROW(cmd_lures(ctx, {{(kFixtures / "boyscout-scrambled.json").string()}, dir.path()}),
               InvalidArgument);
}

TEST(Scramble, BijectionWithLuresCarriedOver) {
  TempDir dir;
  const auto n = sim::toy_narrative(12, "toy");
  write_corpus(dir.path(), n, sim::toy_lures(n));
  auto ctx = mock_context(dir.path(), 3);
  const auto r = cmd_scramble(ctx, {"toy", dir.path(), dir / "out"});
  EXPECT_EQ(r.exit_code, 0);
  const auto s = load_narrative(dir / "out/toy-scrambled.json");
  EXPECT_TRUE(s.scrambled());
  EXPECT_EQ(unscramble(s).clauses, n.clauses);
  EXPECT_NE(s.clauses, n.clauses);
  const auto pool = load_lure_pool(dir / "out/toy-scrambled.lures.json");
  EXPECT_EQ(pool.narrative_id, "toy-scrambled");
  EXPECT_EQ(pool.lures, sim::toy_lures(n).lures);

  auto again = mock_context(dir.path(), 3);
  cmd_scramble(again, {"toy", dir.path(), dir / "again"});
  EXPECT_EQ(slurp(dir / "out/toy-scrambled.json"), slurp(dir / "again/toy-scrambled.json"));
}

TEST(Score, PaperBoyscoutRecallThroughReplayedAuditLog) {
  TempDir dir;
  fs::create_directories(dir / "corpus");
  fs::copy_file(kFixtures / "boyscout.json", dir / "corpus/boyscout.json");
  const auto n = load_narrative(kFixtures / "boyscout.json");
  const std::string recall = paper::read_trimmed("boyscout_recall.txt");
  io::write_text_file(dir / "recalls/p01.txt", recall + "\n");

  // The audit log a live run would have written, with the printed completions.
  PromptArgs args{{"narrative", assemble_prose(n)},
                  {"segmentation", numbered_segmentation(n)},
                  {"recall", recall}};
  const auto scoring = paper::read("boyscout_score_completion.txt");
  args["scoring_completion"] = scoring;
  std::string log;
  log += audit_record_to_json({"t", "recall_scoring", "gpt-4-0613",
                               render_prompt(PromptKind::recall_scoring, args), scoring, "", {}}) + "\n";
  log += audit_record_to_json({"t", "ordered_scoring", "gpt-4-0613",
                               render_prompt(PromptKind::ordered_scoring, args),
                               paper::read("boyscout_order_completion.txt"), "", {}}) + "\n";
  log += audit_record_to_json({"t", "recall_segmentation", "gpt-4-0613",
                               render_prompt(PromptKind::recall_segmentation, {{"narrative", recall}}),
                               paper::read("boyscout_recall_segmentation_completion.txt"), "", {}}) +
         "\n";
  io::write_text_file(dir / "audit/llm.jsonl", log);

  const auto out = dir / "scored.jsonl";
  ASSERT_EQ(run({"--provider", "replay", "--data-dir", dir.path().string(), "score", "--narrative",
                 "boyscout", "--recalls-dir", (dir / "recalls").string(), "--out", out.string()}),
            0);
  const auto records = recall::read_records(out);
  ASSERT_EQ(records.size(), 1u);
  const auto& r = records[0];
  EXPECT_EQ(r.participant_id, "p01");
  EXPECT_EQ(r.scored_set, (std::set<int>{7, 8, 9, 14, 15, 16, 17, 19}));
  EXPECT_EQ(r.ordered_sequence, (std::vector<int>{14, 7, 8, 9, 15, 16, 17, 19}));
  EXPECT_EQ(r.recall_clause_count, 10);
  EXPECT_EQ(r.scorer_id, "gpt-4-0613");
  // Replay mode never appends to the log it reads.
  EXPECT_EQ(slurp(dir / "audit/llm.jsonl"), log);
}

TEST(Score, EmptyRecallNeedsNoModelCall) {
  TempDir dir;
  io::write_text_file(dir / "recalls/p1.txt", "  \n");
  auto ctx = mock_context(dir.path());
  ctx.gateway = gateway_with(std::make_shared<RefusingProvider>(""));
  ScoreOptions o;
  o.corpus_dir = kFixtures;
  o.narrative = "boyscout";
  o.recalls_dir = dir / "recalls";
  o.out = dir / "scored.jsonl";
  const auto r = cmd_score(ctx, o);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(ctx.gateway->chat_attempts(), 0u);
  const auto recs = recall::read_records(o.out);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_TRUE(recs[0].scored_set.empty());
  EXPECT_TRUE(recs[0].ordered_sequence.empty());
  EXPECT_EQ(recs[0].recall_clause_count, 0);
}

TEST(Score, FailuresAreIsolatedInASidecar) {
  TempDir dir;
  const auto n = load_narrative(kFixtures / "boyscout.json");
  io::write_text_file(dir / "recalls/a.txt", n.clauses[0].text + " " + n.clauses[3].text);
  io::write_text_file(dir / "recalls/b.txt", "FORBIDDEN words about the pier");
  io::write_text_file(dir / "recalls/c.txt", n.clauses[10].text);
  auto ctx = mock_context(dir.path());
  ctx.gateway = gateway_with(std::make_shared<RefusingProvider>("FORBIDDEN"));
  ScoreOptions o;
  o.corpus_dir = kFixtures;
  o.narrative = "boyscout";
  o.recalls_dir = dir / "recalls";
  o.out = dir / "scored.jsonl";
  const auto r = cmd_score(ctx, o);
  EXPECT_EQ(r.exit_code, 1);
  const auto recs = recall::read_records(o.out);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].participant_id, "a");
  EXPECT_EQ(recs[1].participant_id, "c");
  EXPECT_TRUE(recs[0].scored_set.count(1));
  EXPECT_TRUE(recs[0].scored_set.count(4));
  const auto errors = io::split_lines(slurp(dir / "scored.jsonl.errors.jsonl"));
  ASSERT_EQ(errors.size(), 1u);
  const auto e = json::parse(errors[0]);
  EXPECT_EQ(e["participant_id"], "b");
  EXPECT_EQ(e["stage"], "recall_scoring");
  EXPECT_EQ(e["error"], "content_error");

  // Everything failing is still a nonzero exit.
  auto all_bad = mock_context(dir.path());
  all_bad.gateway = gateway_with(std::make_shared<RefusingProvider>(""));
  EXPECT_EQ(cmd_score(all_bad, o).exit_code, 1);
  EXPECT_EQ(slurp(o.out), "");
}

TEST(Score, OutputDoesNotDependOnWorkerCount) {
  TempDir dir;
  const auto n = load_narrative(kFixtures / "boyscout.json");
  Rng rng(5);
  for (int p = 0; p < 12; ++p) {
    std::string text;
    for (const auto& c : n.clauses) {
      if (rng.bernoulli(0.4)) text += c.text + " ";
    }
    io::write_text_file(dir / "recalls" / ("p" + std::to_string(p) + ".txt"), text);
  }
  std::string first;
  for (std::size_t workers : {1u, 4u}) {
    auto ctx = mock_context(dir.path());
    ScoreOptions o;
    o.corpus_dir = kFixtures;
    o.narrative = "boyscout";
    o.recalls_dir = dir / "recalls";
    o.out = dir / ("scored" + std::to_string(workers) + ".jsonl");
    o.workers = workers;
    EXPECT_EQ(cmd_score(ctx, o).exit_code, 0);
    if (first.empty()) first = slurp(o.out);
    else EXPECT_EQ(slurp(o.out), first);
  }
  EXPECT_EQ(io::split_lines(first).size(), 12u);
}

TEST(Score, ExportInputNeedsExactlyOneSource) {
  TempDir dir;
  auto ctx = mock_context(dir.path());
  ScoreOptions o;
  o.corpus_dir = kFixtures;
  o.out = dir / "x.jsonl";
  EXPECT_THROW(cmd_score(ctx, o), InvalidArgument);
  o.input = dir / "a.jsonl";
  o.recalls_dir = dir.path();
  EXPECT_THROW(cmd_score(ctx, o), InvalidArgument);
}

namespace {

struct PlantedDataset {
  std::vector<double> q;
  int retained = 0;
};

PlantedDataset write_planted(const fs::path& corpus, const fs::path& data, bool with_recall,
                             bool with_recognition, std::uint64_t seed) {
  const auto n = sim::toy_narrative(30, "toy");
  write_corpus(corpus, n, sim::toy_lures(n));
  PlantedDataset p;
  Rng rng(seed);
  for (int c = 0; c < 30; ++c) p.q.push_back(0.1 + 0.8 * rng.uniform01());
  p.retained = 12;
  if (with_recall) {
    io::write_text_file(data / "recall.jsonl",
                        recall::records_to_jsonl(sim::recall_population(n, p.q, 100, seed + 1)));
  }
  if (with_recognition) {
    io::write_text_file(data / "recognition.jsonl",
                        recognition::trials_to_jsonl(sim::recognition_population(
                            n, sim::toy_lures(n), p.retained, 0.2, 100, seed + 2)));
  }
  return p;
}

}  // namespace

TEST(Analyze, RecoversPlantedRAndM) {
  TempDir dir;
  const auto p = write_planted(dir / "corpus", dir / "data", true, true, 1);
  auto ctx = mock_context(dir.path());
  const auto r = cmd_analyze(ctx, {dir / "data", dir / "corpus", dir / "out", 500});
  EXPECT_EQ(r.exit_code, 0);
  const auto s = json::parse(slurp(dir / "out/summary.json"));
  ASSERT_EQ(s["narratives"].size(), 1u);
  const auto& row = s["narratives"][0];
  double planted_r = 0.0;
  for (double q : p.q) planted_r += q;
  const double R = row["recall"]["R"], R_se = row["recall"]["R_stderr"];
  const double M = row["recognition"]["M"], M_se = row["recognition"]["M_stderr"];
  EXPECT_LE(std::abs(R - planted_r), 2 * R_se) << R << " vs " << planted_r;
  EXPECT_LE(std::abs(M - p.retained), 2 * M_se) << M << " vs " << p.retained;
  for (const char* f : {"fig2a_m_vs_l.csv", "fig2b_r_vs_l.csv", "fig2c_r_vs_m.csv",
                        "fig2c_sqrt_law.csv", "fig3_order.csv", "fig4_bins.csv", "fig4_clauses.csv",
                        "figB2_c_vs_r.csv", "figB3_dprime.csv", "figB4_p_rec.csv",
                        "figB4_serial_position.csv", "figB4_cdf.csv"}) {
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  }
  // The reference curve spans the observed M range.
  const auto law = io::parse_csv(slurp(dir / "out/fig2c_sqrt_law.csv"));
  ASSERT_EQ(law.size(), 102u);
  EXPECT_EQ(std::stod(law[1][0]), 0.0);
  EXPECT_DOUBLE_EQ(std::stod(law.back()[0]), M);
  EXPECT_NEAR(std::stod(law.back()[1]), std::sqrt(1.5 * std::numbers::pi * M), 1e-9);
}

TEST(Analyze, RecognitionOnlyDataset) {
  TempDir dir;
  write_planted(dir / "corpus", dir / "data", false, true, 2);
  auto ctx = mock_context(dir.path());
  const auto r = cmd_analyze(ctx, {dir / "data", dir / "corpus", dir / "out", 200});
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_TRUE(fs::exists(dir / "out/fig2a_m_vs_l.csv"));
  EXPECT_TRUE(fs::exists(dir / "out/figB3_dprime.csv"));
  EXPECT_FALSE(fs::exists(dir / "out/fig2b_r_vs_l.csv"));
  EXPECT_FALSE(fs::exists(dir / "out/fig2c_r_vs_m.csv"));
  const auto s = json::parse(slurp(dir / "out/summary.json"));
  const auto skipped = s["skipped"].get<std::vector<std::string>>();
  EXPECT_NE(std::find(skipped.begin(), skipped.end(), "fig2b_r_vs_l"), skipped.end());
  EXPECT_NE(std::find(skipped.begin(), skipped.end(), "fig2c_r_vs_m"), skipped.end());
}

TEST(Analyze, EmptyDirectoryWarnsAndWritesNothing) {
  TempDir dir;
  fs::create_directories(dir / "data");
  auto ctx = mock_context(dir.path());
  const auto r = cmd_analyze(ctx, {dir / "data", dir / "corpus", dir / "out", 200});
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_FALSE(r.warnings.empty());
  EXPECT_TRUE(r.outputs.empty());
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Analyze, DeterministicAndRerunnableFromManifest) {
  TempDir dir;
  write_planted(dir / "corpus", dir / "data", true, true, 3);
  const std::vector<std::string> args{"--seed", "5", "analyze", "--dataset", (dir / "data").string(),
                                      "--corpus", (dir / "corpus").string(), "--out-dir",
                                      (dir / "out").string(), "--resamples", "200"};
  ASSERT_EQ(run(args), 0);
  const auto first = outputs_of(dir / "out");
  std::string out;
  ASSERT_EQ(run({"rerun", "--verify", (dir / "out/analyze.manifest.json").string()}, &out), 0) << out;
  EXPECT_EQ(outputs_of(dir / "out"), first);

  // A tampered output is reported.
  io::write_text_file(dir / "out/fig2a_m_vs_l.csv", "tampered\n");
  const auto m = manifest_from_json(slurp(dir / "out/analyze.manifest.json"));
  EXPECT_EQ(changed_outputs(m).size(), 1u);
}

TEST(Analyze, ScrambledPairGetsDescramblingTable) {
  TempDir dir;
  const auto n = sim::toy_narrative(20, "toy");
  const auto s = [&] {
    auto x = scramble(n, 9);
    x.id = "toy-scrambled";
    return x;
  }();
  write_corpus(dir / "corpus", n, std::nullopt);
  write_corpus(dir / "corpus", s, std::nullopt);
  std::vector<double> q;
  for (int c = 0; c < 20; ++c) q.push_back(0.2 + 0.03 * c);
  auto recs = sim::recall_population(n, q, 60, 4);
  const auto more = sim::recall_population(s, q, 60, 5);
  recs.insert(recs.end(), more.begin(), more.end());
  io::write_text_file(dir / "data/recall.jsonl", recall::records_to_jsonl(recs));
  auto ctx = mock_context(dir.path());
  EXPECT_EQ(cmd_analyze(ctx, {dir / "data", dir / "corpus", dir / "out", 200}).exit_code, 0);
  const auto rows = io::parse_csv(slurp(dir / "out/figB4_descrambling.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][0], "toy-scrambled");
  EXPECT_EQ(rows[1][1], "toy");
  EXPECT_GT(std::stod(rows[1][3]), 0.5);  // same planted q in both conditions
}

TEST(Reliability, ThreeHumansAndTheMockScorer) {
  TempDir dir;
  const auto n = load_narrative(kFixtures / "boyscout.json");
  const int L = static_cast<int>(n.length());
  Rng rng(21);
  std::vector<std::string> ids;
  std::vector<std::vector<bool>> truth;
  for (int p = 0; p < 20; ++p) {
    const std::string id = "r" + std::to_string(100 + p);
    ids.push_back(id);
    std::vector<bool> row;
    std::string text;
    for (const auto& c : n.clauses) {
      // Clause-dependent recall probability, so P_rec varies across clauses.
      row.push_back(rng.bernoulli(0.1 + 0.8 * (c.index % 5) / 4.0));
      if (row.back()) text += c.text + " ";
    }
    truth.push_back(row);
    io::write_text_file(dir / "recalls" / (id + ".txt"), text);
  }
  for (int h = 1; h <= 3; ++h) {
    reliability::ScorerMatrix m{"human" + std::to_string(h), true, {}};
    for (const auto& row : truth) {
      std::vector<bool> noisy;
      for (bool b : row) noisy.push_back(rng.bernoulli(0.05) ? !b : b);
      m.cells.push_back(noisy);
    }
    io::write_text_file(dir / "matrices" / (m.scorer_id + ".csv"), reliability::scorer_to_csv(m, ids));
  }
  auto ctx = mock_context(dir.path());
  ScoreOptions so;
  so.corpus_dir = kFixtures;
  so.narrative = "boyscout";
  so.recalls_dir = dir / "recalls";
  so.out = dir / "matrices/llm.jsonl";
  ASSERT_EQ(cmd_score(ctx, so).exit_code, 0);
  fs::remove(dir / "matrices/llm.jsonl.manifest.json");

  ReliabilityOptions ro;
  ro.matrices_dir = dir / "matrices";
  ro.narrative = "boyscout";
  ro.corpus_dir = kFixtures;
  ro.out_dir = dir / "out";
  const auto r = cmd_reliability(ctx, ro);
  EXPECT_EQ(r.exit_code, 0);
  const auto rows = io::parse_csv(slurp(dir / "out/reliability_table.csv"));
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"", "llm", "mean_human", "human1", "human2", "human3"}));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_DOUBLE_EQ(std::stod(rows[i][i]), 1.0);
    for (std::size_t j = 1; j < rows.size(); ++j) {
      EXPECT_EQ(rows[i][j], rows[j][i]);
      EXPECT_GT(std::stod(rows[i][j]), 0.7) << rows[i][0] << " " << rows[0][j];
    }
  }
  EXPECT_EQ(io::parse_csv(slurp(dir / "out/reliability_band.csv")).size(), static_cast<std::size_t>(L) + 1);
  EXPECT_EQ(io::parse_csv(slurp(dir / "out/reliability_p_rec.csv"))[0].size(), 5u);
}

TEST(Reliability, IdenticalScorersAndShapeMismatch) {
  TempDir dir;
  reliability::ScorerMatrix m{"a", false, {{true, false, true}, {false, false, true}, {true, false, true}}};
  const std::vector<std::string> ids{"x", "y", "z"};
  io::write_text_file(dir / "m/a.csv", reliability::scorer_to_csv(m, ids));
  io::write_text_file(dir / "m/b.csv", reliability::scorer_to_csv(m, ids));
  auto ctx = mock_context(dir.path());
  ReliabilityOptions o;
  o.matrices_dir = dir / "m";
  o.clauses = 3;
  o.out_dir = dir / "out";
  EXPECT_EQ(cmd_reliability(ctx, o).exit_code, 0);
  const auto t = io::parse_csv(slurp(dir / "out/reliability_table.csv"));
  for (std::size_t i = 1; i < t.size(); ++i) {
    for (std::size_t j = 1; j < t.size(); ++j) EXPECT_DOUBLE_EQ(std::stod(t[i][j]), 1.0);
  }
  // A scorer missing a recall no longer fits the shared shape.
  io::write_text_file(dir / "m/c.csv", reliability::scorer_to_csv(
                                           {"c", false, {{true, false, true}, {false, true, true}}},
                                           {"x", "y"}));
  EXPECT_THROW(cmd_reliability(ctx, o), DataError);
}

TEST(Similarity, ScoresCorrelationsAndModelComparison) {
  TempDir dir;
  const auto n = sim::mock_narrative(24, 5, "gen");
  write_corpus(dir / "corpus", n, std::nullopt);
  const auto scores = similarity::similarity_scores(n, *gateway_with(std::make_shared<mock::MockChatProvider>()),
                                                    "planting");
  const auto planted = sim::planted_recall(scores.scores, 0.8, 0.075, 3);
  // Turn the planted probabilities into a scored population.
  io::write_text_file(dir / "data/recall.jsonl",
                      recall::records_to_jsonl(sim::recall_population(n, planted.p_rec, 200, 4)));
  ASSERT_EQ(run({"--data-dir", dir.path().string(), "similarity", "--dataset", (dir / "data").string(),
                 "--out-dir", (dir / "out").string(), "--model", "planting", "--model", "other",
                 "--resamples", "300"}),
            0);
  const auto rows = io::parse_csv(slurp(dir / "out/similarity_r_vs_l.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][0], "planting");
  EXPECT_GT(std::stod(rows[1][4]), 0.5);
  EXPECT_EQ(io::parse_csv(slurp(dir / "out/similarity_scores.csv")).size(), 1u + 2 * 24);
  const auto cross = io::parse_csv(slurp(dir / "out/similarity_cross_model.csv"));
  ASSERT_EQ(cross.size(), 2u);
  EXPECT_EQ(cross[1][2], "24");
  EXPECT_LT(std::stod(cross[1][3]), 1.0);
}

TEST(Export, MatchesTheServiceView) {
  TempDir dir;
  const auto n = sim::toy_narrative(12, "toy");
  write_corpus(dir / "corpus", n, sim::toy_lures(n));
  service::ServiceOptions so;
  so.event_log = dir / "events.jsonl";
  so.master_seed = 4;
  so.clock = SteppingClock();
  std::string expected_recall, expected_recognition;
  {
    service::ExperimentService svc(Corpus::load_directory(dir / "corpus"), so);
    for (int p = 0; p < 3; ++p) {
      const std::string pid = "p" + std::to_string(p);
      auto id = svc.create_session(pid, "toy", service::Task::recall).session.session_id;
      svc.consent(id);
      svc.get_stimulus(id);
      svc.presentation_finished(id);
      svc.submit_recall(id, n.clauses[static_cast<std::size_t>(p)].text);
      id = svc.create_session(pid, "toy", service::Task::recognition).session.session_id;
      svc.consent(id);
      svc.get_stimulus(id);
      svc.presentation_finished(id);
      while (auto probe = svc.next_probe(id)) svc.answer_probe(id, probe->position, probe->position % 2);
    }
    const auto ex = svc.export_dataset();
    expected_recall = ex.recall_jsonl;
    expected_recognition = ex.recognition_jsonl;
  }
  ASSERT_EQ(run({"--seed", "4", "--data-dir", dir.path().string(), "export", "--out-dir",
                 (dir / "ds").string()}),
            0);
  EXPECT_EQ(slurp(dir / "ds/recall.jsonl"), expected_recall);
  EXPECT_EQ(slurp(dir / "ds/recognition.jsonl"), expected_recognition);
  EXPECT_EQ(io::split_lines(expected_recognition).size(), 30u);
  EXPECT_EQ(run({"--data-dir", dir.path().string(), "export", "--event-log", "missing.jsonl",
                 "--out-dir", (dir / "x").string()}),
            2);
}

TEST(Cli, HelpAndUnknownCommand) {
  std::string out;
  EXPECT_EQ(run({"--help"}, &out), 0);
  EXPECT_NE(out.find("analyze"), std::string::npos);
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_EQ(run({}), 2);
}

TEST(Cli, ConfigErrorsExitWithTwo) {
  TempDir dir;
  io::write_text_file(dir / "bad.json", R"({"chat_modle": "x"})");
  fs::create_directories(dir / "data");
  EXPECT_EQ(run({"--config", (dir / "bad.json").string(), "analyze", "--dataset",
                 (dir / "data").string(), "--out-dir", (dir / "o").string()}),
            2);
  // Replay mode without an audit log.
  io::write_text_file(dir / "recalls/a.txt", "some words");
  EXPECT_EQ(run({"--provider", "replay", "--data-dir", dir.path().string(), "score", "--narrative",
                 (kFixtures / "boyscout.json").string(), "--recalls-dir", (dir / "recalls").string(),
                 "--out", (dir / "s.jsonl").string()}),
            2);
}
