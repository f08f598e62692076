#include <gtest/gtest.h>

#include <cmath>
#include <memory>

#include "narrmem/errors.hpp"
#include "narrmem/mock.hpp"
#include "narrmem/similarity.hpp"
#include "support/simulate.hpp"

namespace narrmem::similarity {
namespace {

std::shared_ptr<Gateway> mock_gateway(std::uint64_t hash_seed = 0,
                                      std::shared_ptr<mock::MockEmbeddingProvider>* handle = nullptr) {
  auto emb = std::make_shared<mock::MockEmbeddingProvider>(hash_seed);
  if (handle) *handle = emb;
  return std::make_shared<Gateway>(std::make_shared<mock::MockChatProvider>(), emb);
}

Narrative make(std::vector<std::string> texts, std::string id = "toy") {
  Narrative n;
  n.id = std::move(id);
  for (std::size_t i = 0; i < texts.size(); ++i) n.clauses.push_back({static_cast<int>(i + 1), texts[i]});
  return n;
}

TEST(Cosine, BoundedAndScaleInvariantOnRandomVectors) {
  Rng rng(2024);
  for (int c = 0; c < 1000; ++c) {
    const std::size_t dim = 1 + rng.uniform_index(512);
    std::vector<double> a(dim), b(dim);
    for (auto& x : a) x = rng.normal(0.0, 1.0 + 5 * rng.uniform01());
    for (auto& x : b) x = rng.normal(0.0, 1.0);
    if (c % 7 == 0) b = a;  // parallel case
    const double s = cosine(a, b);
    ASSERT_LE(std::abs(s), 1.0);
    const double ka = std::exp(rng.normal(0.0, 4.0)), kb = std::exp(rng.normal(0.0, 4.0));
    auto a2 = a, b2 = b;
    for (auto& x : a2) x *= ka;
    for (auto& x : b2) x *= kb;
    ASSERT_NEAR(cosine(a2, b2), s, 1e-12) << c;
    auto neg = b;
    for (auto& x : neg) x = -x;
    ASSERT_NEAR(cosine(a, neg), -s, 1e-12);
  }
}

TEST(Cosine, Errors) {
  const std::vector<double> z{0, 0}, a{1, 2}, b{1, 2, 3};
  EXPECT_THROW(cosine(z, a), DomainError);
  EXPECT_THROW(cosine(a, b), DomainError);
}

TEST(Scores, SingleClauseIsSelfSimilar) {
  auto g = mock_gateway();
  const auto p = similarity_scores(make({"The boat drifted toward the harbor."}), *g, "m");
  ASSERT_EQ(p.scores.size(), 1u);
  EXPECT_NEAR(p.scores[0], 1.0, 1e-12);
  EXPECT_EQ(p.narrative_embedding_dim, 256u);
}

TEST(Scores, HandComputedBagOfWords) {
  // Whole text counts: dogs bark loudly cats sleep quietly sing = 1 each,
  // birds = 2; squared norm 7 + 4 = 11.
  auto g = mock_gateway();
  const auto p = similarity_scores(
      make({"Dogs bark loudly.", "Cats sleep quietly.", "Birds sing birds."}), *g, "m");
  EXPECT_NEAR(p.scores[0], 3.0 / std::sqrt(3.0 * 11.0), 1e-12);
  EXPECT_NEAR(p.scores[1], 3.0 / std::sqrt(3.0 * 11.0), 1e-12);
  EXPECT_NEAR(p.scores[2], 5.0 / std::sqrt(5.0 * 11.0), 1e-12);
  for (double s : p.scores) EXPECT_LT(s, 1.0);
}

TEST(Scores, ProseEmbeddedExactlyOnce) {
  std::shared_ptr<mock::MockEmbeddingProvider> emb;
  auto g = mock_gateway(0, &emb);
  const auto n = sim::mock_narrative(30, 5);
  similarity_scores(n, *g, "m", {false, 4});
  EXPECT_EQ(emb->calls(), 31u);
  EXPECT_EQ(g->embedding_calls(), 31u);
}

TEST(Scores, WorkerCountDoesNotChangeResult) {
  auto g = mock_gateway();
  const auto n = sim::mock_narrative(25, 8);
  EXPECT_EQ(similarity_scores(n, *g, "m", {false, 1}).scores,
            similarity_scores(n, *g, "m", {false, 8}).scores);
}

TEST(Scores, ScrambledNeedsFlagAndIsIndexedByOriginalClause) {
  auto g = mock_gateway();
  const auto n = sim::mock_narrative(20, 3);
  const auto s = scramble(n, 77);
  EXPECT_THROW(similarity_scores(s, *g, "m"), InvalidArgument);
  // A bag-of-words embedder cannot see order, so the flagged scrambled scores
  // must equal the intact ones clause by clause.
  const auto a = similarity_scores(n, *g, "m").scores;
  const auto b = similarity_scores(s, *g, "m", {true, 2}).scores;
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

class FailingEmbedder : public EmbeddingProvider {
 public:
  std::vector<double> embed(const std::string& text, const std::string&) override {
    if (text.find("boom") != std::string::npos && text.size() < 20) throw TransportError("refused");
    const double len = static_cast<double>(text.size());
    if (text.find("wide") != std::string::npos) return {1.0, len, 0.5};
    return {1.0, len};
  }
};

TEST(Scores, FailuresCarryClauseIndex) {
  Gateway g(std::make_shared<mock::MockChatProvider>(), std::make_shared<FailingEmbedder>());
  try {
    similarity_scores(make({"calm words", "boom goes here", "more calm"}), g, "m");
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_NE(std::string(e.what()).find("clause 2"), std::string::npos);
  }
  EXPECT_THROW(similarity_scores(make({"calm words", "a wide clause"}), g, "m"), DataError);
}

TEST(Correlation, AffineIsPerfect) {
  auto g = mock_gateway();
  const auto p = similarity_scores(sim::mock_narrative(19, 1), *g, "m");
  std::vector<double> rec;
  for (double s : p.scores) rec.push_back(0.1 + 0.7 * s);
  const auto c = recall_similarity_correlation(p, rec, 200, 1);
  EXPECT_NEAR(c.correlation.r, 1.0, 1e-12);
  EXPECT_EQ(c.correlation.n, 19u);
  EXPECT_LE(c.bins.bins.size(), 5u);
  for (const auto& b : c.bins.bins) {
    EXPECT_GE(b.x_center, b.x_low);
    EXPECT_LE(b.x_center, b.x_high);
  }
}

TEST(Correlation, Errors) {
  SimilarityProfile p{"n", "m", {0.3, 0.3, 0.3, 0.3}, 2};
  EXPECT_THROW(recall_similarity_correlation(p, {0.1, 0.2, 0.3, 0.4}), UndefinedCorrelationError);
  EXPECT_THROW(recall_similarity_correlation(p, {0.1, 0.2}), InvalidArgument);
}

TEST(Correlation, PlantedRelationCovered) {
  auto g = mock_gateway();
  int covered = 0;
  for (std::uint64_t run = 0; run < 40; ++run) {
    const auto p = similarity_scores(sim::mock_narrative(32, 3000 + run), *g, "m");
    const auto planted = sim::planted_recall(p.scores, 0.6, 0.1, run);
    const auto c = recall_similarity_correlation(p, planted.p_rec, 500, run);
    EXPECT_LE(c.correlation.ci_low, c.correlation.ci_high);
    covered += c.correlation.ci_low <= planted.planted_r && planted.planted_r <= c.correlation.ci_high;
  }
  EXPECT_GE(covered, 34);
}

TEST(Correlation, NullRarelySignificant) {
  auto g = mock_gateway();
  int quiet = 0;
  for (std::uint64_t run = 0; run < 200; ++run) {
    const auto p = similarity_scores(sim::mock_narrative(19, 9000 + run), *g, "m");
    Rng rng(run);
    std::vector<double> rec;
    for (std::size_t i = 0; i < p.scores.size(); ++i) rec.push_back(rng.uniform01());
    quiet += recall_similarity_correlation(p, rec, 50, run).correlation.p_value > 0.05;
  }
  EXPECT_GE(quiet, 180);
}

TEST(Significance, Thresholds) {
  EXPECT_EQ(to_string(significance(0.0005)), "***");
  EXPECT_EQ(to_string(significance(0.001)), "**");
  EXPECT_EQ(to_string(significance(0.005)), "**");
  EXPECT_EQ(to_string(significance(0.01)), "*");
  EXPECT_EQ(to_string(significance(0.049)), "*");
  EXPECT_EQ(to_string(significance(0.05)), "ns");
  EXPECT_EQ(to_string(significance(0.2)), "ns");
}

TEST(LengthSummary, SortedWithCategories) {
  stats::CorrelationResult a{0.8, 0.0001, 0.6, 0.9, 19}, b{0.3, 0.2, -0.1, 0.6, 54},
      c{0.58, 0.004, 0.3, 0.8, 32};
  const auto rows = r_vs_length_summary({{"long", 54, b}, {"short", 19, a}, {"mid", 32, c}});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].narrative_id, "short");
  EXPECT_EQ(rows[0].category, Significance::p001);
  EXPECT_EQ(rows[1].category, Significance::p01);
  EXPECT_EQ(rows[2].category, Significance::none);
}

TEST(Pooled, AlignedPerfectNarratives) {
  std::vector<NarrativeSeries> s{{"a", {0.1, 0.2, 0.4, 0.5}, {0.2, 0.4, 0.8, 1.0}},
                                 {"b", {0.6, 0.7, 0.9}, {0.0, 0.1, 0.3}}};
  const auto p = pooled_z_analysis(s, 100, 1);
  EXPECT_NEAR(p.correlation.r, 1.0, 1e-12);
  EXPECT_FALSE(p.degenerate);
  EXPECT_EQ(p.correlation.n, 7u);
}

TEST(Pooled, InvariantUnderPerNarrativeAffineMaps) {
  std::vector<NarrativeSeries> s;
  auto g = mock_gateway();
  for (int k = 0; k < 4; ++k) {
    const auto prof = similarity_scores(sim::mock_narrative(20 + 5 * k, 40 + k), *g, "m");
    s.push_back({"n" + std::to_string(k), prof.scores, sim::planted_recall(prof.scores, 0.5, 0.1, k).p_rec});
  }
  const double base = pooled_z_analysis(s, 10, 1).correlation.r;
  auto t = s;
  for (auto& x : t[1].scores) x += 0.37;
  for (auto& x : t[2].scores) x = 3.0 * x - 1.0;
  for (auto& x : t[3].p_rec) x = 0.5 * x + 0.2;
  EXPECT_NEAR(pooled_z_analysis(t, 10, 1).correlation.r, base, 1e-12);
}

TEST(Pooled, SingleNarrativeIsFlagged) {
  std::vector<NarrativeSeries> s{{"a", {0.1, 0.3, 0.2, 0.5, 0.4}, {0.3, 0.2, 0.6, 0.7, 0.5}}};
  const auto p = pooled_z_analysis(s, 100, 1);
  EXPECT_TRUE(p.degenerate);
  EXPECT_NEAR(p.correlation.r, stats::pearson_r(s[0].scores, s[0].p_rec), 1e-12);
  EXPECT_THROW(pooled_z_analysis({}), InvalidArgument);
  s.push_back({"flat", {0.2, 0.2, 0.2}, {0.1, 0.5, 0.9}});
  EXPECT_THROW(pooled_z_analysis(s), DomainError);
}

TEST(Pooled, SharedSlopeBeatsPerNarrativeNoise) {
  auto g = mock_gateway();
  std::vector<NarrativeSeries> s;
  std::vector<double> per;
  for (int k = 0; k < 8; ++k) {
    const auto prof = similarity_scores(sim::mock_narrative(20, 700 + k), *g, "m");
    auto rec = sim::planted_recall(prof.scores, 0.5, 0.1, 70 + k).p_rec;
    per.push_back(stats::pearson_r(prof.scores, rec));
    s.push_back({"n" + std::to_string(k), prof.scores, rec});
  }
  const auto p = pooled_z_analysis(s, 500, 2);
  EXPECT_LT(std::abs(p.correlation.r - 0.5), stats::sample_sd(per));
  EXPECT_LT(p.correlation.ci_high - p.correlation.ci_low, 4 * stats::sample_sd(per));
}

TEST(Compare, SameEmbedderTwiceGivesIdenticalColumns) {
  auto g = mock_gateway();
  std::vector<Narrative> ns{sim::mock_narrative(19, 1, "a"), sim::mock_narrative(32, 2, "b")};
  std::map<std::string, std::vector<double>> rec;
  for (const auto& n : ns) {
    rec[n.id] = sim::planted_recall(similarity_scores(n, *g, "m").scores, 0.6, 0.1, 1).p_rec;
  }
  const auto c = compare_embedders(ns, rec, {{"x", g.get(), "m"}, {"y", g.get(), "m"}}, 100, 1);
  ASSERT_EQ(c.models, (std::vector<std::string>{"x", "y"}));
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(c.tables.at("x")[i].correlation.r, c.tables.at("y")[i].correlation.r);
    EXPECT_EQ(c.tables.at("x")[i].correlation.ci_low, c.tables.at("y")[i].correlation.ci_low);
  }
  EXPECT_NEAR(c.cross_model_r.at({"x", "y"}), 1.0, 1e-12);
}

TEST(Compare, DifferentHashSeedsAgreeImperfectly) {
  auto g0 = mock_gateway(0), g1 = mock_gateway(1);
  std::vector<Narrative> ns;
  std::map<std::string, std::vector<double>> rec;
  for (int k = 0; k < 4; ++k) {
    ns.push_back(sim::mock_narrative(30, 50 + k, "n" + std::to_string(k)));
    rec[ns.back().id] = std::vector<double>(30);
    Rng rng(k);
    for (auto& x : rec[ns.back().id]) x = rng.uniform01();
  }
  const auto c = compare_embedders(ns, rec, {{"h0", g0.get(), "m"}, {"h1", g1.get(), "m"}}, 50, 1);
  const double r = c.cross_model_r.at({"h0", "h1"});
  EXPECT_GT(r, 0.5);
  EXPECT_LT(r, 0.9999);
}

TEST(Compare, Errors) {
  auto g = mock_gateway();
  EXPECT_THROW(compare_embedders({}, {}, {{"x", g.get(), "m"}, {"y", g.get(), "m"}}), InvalidArgument);
  const auto n = sim::mock_narrative(5, 1, "a");
  EXPECT_THROW(compare_embedders({n}, {{"a", {0, 0, 0, 0, 0}}}, {{"x", g.get(), "m"}}), InvalidArgument);
  EXPECT_THROW(compare_embedders({n}, {}, {{"x", g.get(), "m"}, {"y", g.get(), "m"}}), DataError);

  Gateway odd(std::make_shared<mock::MockChatProvider>(), std::make_shared<FailingEmbedder>());
  // Each narrative is internally consistent, but the two disagree on dimension.
  const auto a = make({"a wide clause", "wide again", "wide once more", "wide"}, "a"),
             b = make({"calm words", "more calm", "still calm", "calm"}, "b");
  EXPECT_THROW(compare_embedders({a, b}, {{"a", {0.1, 0.2, 0.3, 0.5}}, {"b", {0.3, 0.4, 0.1, 0.2}}},
                                 {{"odd", &odd, "m"}, {"mock", g.get(), "m"}}),
               DataError);
}

}  // namespace
}  // namespace narrmem::similarity
