#include <gtest/gtest.h>

#include <subj/fusion.hpp>
#include <subj/metrics.hpp>
#include <subj/rankers.hpp>

#include <random>

#include "fixtures.hpp"

using namespace subj;
using subj::testing::TempDir;

namespace {

/// Returns fixed scores per entity id; unknown ids score 0.
class StubRanker final : public Ranker {
  public:
    StubRanker(std::string name, std::map<std::string, double> scores) : name_(std::move(name)), scores_(std::move(scores)) {}
    std::string name() const override { return name_; }
    std::string kind() const override { return "stub"; }
    std::vector<double> score(const Query&, std::span<const Entity* const> cands) const override
    {
        std::vector<double> out;
        for (const auto* e : cands) {
            auto it = scores_.find(e->id);
            out.push_back(it == scores_.end() ? 0.0 : it->second);
        }
        return out;
    }

  private:
    std::string name_;
    std::map<std::string, double> scores_;
};

std::shared_ptr<const EmbeddingProvider> hashed() { return std::make_shared<HashedNgramProvider>(512); }

Schema two_attribute_schema(const EmbeddingProvider& p)
{
    return Schema::build({{"clean_room", {"clean room", "very clean room", "spotless room"}},
                          {"tasty_breakfast", {"delicious breakfast", "tasty breakfast"}}},
                         p);
}

RuleSet hotel_rules()
{
    auto r = RuleSet::defaults();
    r.aspects = {"room", "breakfast", "staff", "street", "location"};
    return r;
}

LogitModel logit(std::vector<double> w, double b)
{
    LogitModel m;
    m.weights = std::move(w);
    m.bias = b;
    return m;
}

LabeledRanking labeled(std::vector<std::string> ids, std::map<std::string, bool> j)
{
    return LabeledRanking{"q", std::move(ids), std::move(j)};
}

}  // namespace

// ---------------------------------------------------------------------------
// schema

TEST(Schema, AnchorIsNormalizedMeanOfPhraseVectors)
{
    auto p = hashed();
    auto s = two_attribute_schema(*p);
    const auto& a = s.at("clean_room");
    Vector mean(p->dimension(), 0.0);
    for (const auto& ph : a.linguistic_domain) {
        auto v = p->embed(ph);
        for (std::size_t i = 0; i < v.size(); ++i) mean[i] += v[i];
    }
    EXPECT_NEAR(cosine(mean, a.anchor), 1.0, 1e-12);
    EXPECT_NEAR(norm(a.anchor), 1.0, 1e-12);
    EXPECT_THROW(s.at("nope"), NotFoundError);
}

TEST(Schema, BuildRejectsEmptyDomainAndDuplicates)
{
    auto p = hashed();
    EXPECT_THROW(Schema::build({{"a", {}}}, *p), ValidationError);
    EXPECT_THROW(Schema::build({{"a", {"x"}}, {"a", {"y"}}}, *p), ValidationError);
}

TEST(Schema, FileRoundTrip)
{
    TempDir d;
    auto p = hashed();
    Schema::write_records(d / "schema.jsonl", {{"clean_room", {"clean room"}}, {"quiet", {"quiet street"}}});
    auto s = Schema::load(d / "schema.jsonl", *p);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.attributes()[1].name, "quiet");
}

TEST(Schema, InterpretIdenticalPhraseIsCoveredWithFullWeight)
{
    auto p = hashed();
    auto s = two_attribute_schema(*p);
    auto in = interpret_query("spotless room", s, *p, 0.6);
    EXPECT_TRUE(in.covered);
    ASSERT_EQ(in.matches.size(), 1u);
    EXPECT_EQ(in.matches[0].attribute, "clean_room");
    EXPECT_DOUBLE_EQ(in.matches[0].weight, 1.0);
    EXPECT_NEAR(in.best_similarity, 1.0, 1e-12);
}

TEST(Schema, InterpretDisjointTextIsUncoveredButKeepsBestAttribute)
{
    auto p = hashed();
    auto s = two_attribute_schema(*p);
    auto in = interpret_query("zzqx wvvk", s, *p, 0.6);
    EXPECT_FALSE(in.covered);
    ASSERT_EQ(in.matches.size(), 1u);
    EXPECT_DOUBLE_EQ(in.matches[0].weight, 1.0);
    EXPECT_LT(in.best_similarity, 0.6);
}

TEST(Schema, InterpretWeightsSumToOne)
{
    auto p = hashed();
    auto s = two_attribute_schema(*p);
    for (const char* q : {"clean room", "clean breakfast room", "tasty room", "breakfast", "hello"}) {
        for (double theta : {0.0, 0.2, 0.6, 0.99}) {
            auto in = interpret_query(q, s, *p, theta);
            double w = 0.0;
            for (const auto& m : in.matches) {
                w += m.weight;
                if (in.covered) {
                    EXPECT_GE(m.similarity, theta);
                }
            }
            EXPECT_NEAR(w, 1.0, 1e-12) << q << " theta " << theta;
        }
    }
    EXPECT_TRUE(interpret_query("x", Schema{}, *p, 0.6).matches.empty());
}

TEST(Schema, LexiconFallsBackToNearestEntry)
{
    auto p = hashed();
    IntensityLexicon lex({{"clean", 4}, {"very clean", 5}, {"dirty", 1}}, 5, *p);
    EXPECT_EQ(lex.bucket("very clean", *p), 5);
    EXPECT_EQ(lex.bucket("dirtyish", *p), 1);
    EXPECT_THROW(IntensityLexicon({{"x", 6}}, 5, *p), ValidationError);
    EXPECT_THROW(IntensityLexicon({}, 5, *p), ValidationError);
    EXPECT_THROW(IntensityLexicon({{"x", 1}}, 1, *p), ValidationError);
}

TEST(Schema, HistogramForVeryCleanRoom)
{
    auto p = hashed();
    Corpus c(subj::testing::small_forest(), {{"h", "H", "ueno", "", 3.0, {}, {}}}, {{"r", "h", "Very clean room.", {}}});
    auto s = two_attribute_schema(*p);
    IntensityLexicon lex({{"dirty", 1}, {"clean", 4}, {"very clean", 5}}, 5, *p);
    auto store = build_histograms(c, s, lex, hotel_rules(), *p, 0.5);
    EXPECT_EQ(store.get("h", "clean_room").counts, (std::vector<int>{0, 0, 0, 0, 1}));
    EXPECT_EQ(store.get("h", "tasty_breakfast").support(), 0);
}

TEST(Schema, HistogramSupportEqualsAssignedOpinionCount)
{
    auto p = hashed();
    auto c = subj::testing::small_corpus();
    auto s = two_attribute_schema(*p);
    IntensityLexicon lex({{"dirty", 1}, {"clean", 4}, {"very clean", 5}, {"delicious", 5}}, 5, *p);
    auto store = build_histograms(c, s, lex, hotel_rules(), *p, 0.0);
    // With theta_assign 0 every extracted opinion whose best anchor similarity is
    // non-negative lands in exactly one histogram.
    int opinions = 0;
    for (const auto& r : c.reviews()) opinions += static_cast<int>(extract_opinions(r, hotel_rules()).size());
    int support = 0;
    for (const auto& h : store.all()) support += h.support();
    EXPECT_EQ(support, opinions);
}

TEST(Schema, HistogramStoreRoundTripAndValidation)
{
    TempDir d;
    HistogramStore s(5);
    s.add("e1", "a", 3);
    s.add("e1", "a", 3);
    s.set("e2", "b", {1, 0, 0, 0, 2});
    s.save(d / "h.jsonl");
    auto back = HistogramStore::load(d / "h.jsonl", 5);
    EXPECT_EQ(back.get("e1", "a").counts, (std::vector<int>{0, 0, 2, 0, 0}));
    EXPECT_EQ(back.get("e2", "b").counts, (std::vector<int>{1, 0, 0, 0, 2}));
    EXPECT_EQ(back.get("e3", "a").support(), 0);
    EXPECT_THROW(HistogramStore::load(d / "h.jsonl", 4), ValidationError);
}

TEST(Schema, OpineDbScoreWorkedExample)
{
    HistogramStore s(5);
    s.set("e", "clean_room", {0, 0, 2, 0, 2});
    QueryInterpretation in{{{"clean_room", 1.0, 1.0}}, true, 1.0};
    // satisfaction (2*0.5 + 2*1)/4 = 0.75, confidence 4/7.
    EXPECT_NEAR(opinedb_score("e", in, s, 3.0), 0.75 * 4.0 / 7.0, 1e-12);
    EXPECT_NEAR(opinedb_score("e", in, s, 3.0), 0.4286, 5e-5);
    EXPECT_EQ(opinedb_score("nobody", in, s, 3.0), 0.0);
    EXPECT_THROW(opinedb_score("e", QueryInterpretation{}, s), ValidationError);
}

TEST(Schema, OpineDbScoreMonotonicity)
{
    // Moving one opinion up a bucket never lowers the score; adding one to the
    // top bucket never lowers it either.
    std::mt19937_64 g(12);
    std::uniform_int_distribution<int> cnt(0, 4);
    QueryInterpretation in{{{"a", 1.0, 1.0}}, true, 1.0};
    for (int t = 0; t < 300; ++t) {
        std::vector<int> c(5);
        for (auto& x : c) x = cnt(g);
        HistogramStore base(5);
        base.set("e", "a", c);
        double s0 = opinedb_score("e", in, base);
        for (std::size_t l = 0; l + 1 < 5; ++l) {
            if (c[l] == 0) continue;
            auto up = c;
            --up[l];
            ++up[l + 1];
            HistogramStore h(5);
            h.set("e", "a", up);
            EXPECT_GE(opinedb_score("e", in, h), s0 - 1e-12);
        }
        auto more = c;
        ++more[4];
        HistogramStore h(5);
        h.set("e", "a", more);
        EXPECT_GE(opinedb_score("e", in, h), s0 - 1e-12);
    }
}

// ---------------------------------------------------------------------------
// rankers

TEST(Rankers, Bm25IndexAgreesWithDirectFormula)
{
    std::vector<std::pair<std::string, std::vector<std::string>>> docs{
        {"a", {"clean", "room", "clean"}}, {"b", {"quiet", "room"}}, {"c", {"sauna", "gym", "sauna", "pool"}}};
    auto idx = Bm25Index::build(docs);
    EXPECT_EQ(idx.doc_count(), 3u);
    EXPECT_NEAR(idx.avgdl(), 3.0, 1e-12);
    auto df = [&](const std::string& t) { return idx.df(t); };
    for (const auto& [id, doc] : docs) {
        for (const auto& q : std::vector<std::vector<std::string>>{{"clean"}, {"room"}, {"sauna", "room"}, {"clean", "clean"}}) {
            EXPECT_NEAR(idx.score(q, id, {}), bm25_score(q, doc, 3, df, 3.0), 1e-12);
        }
    }
    EXPECT_EQ(idx.score({"karaoke"}, "a", {}), 0.0);
    EXPECT_EQ(idx.score({}, "a", {}), 0.0);
}

TEST(Rankers, Bm25TermMonotoneInTfAndIdfDecreasingInDf)
{
    Bm25Params p;
    for (int tf = 1; tf < 20; ++tf) {
        EXPECT_LT(bm25_term(1.0, tf, 10, 10, p), bm25_term(1.0, tf + 1, 10, 10, p));
    }
    for (std::size_t df = 1; df < 50; ++df) EXPECT_GT(bm25_idf(100, df), bm25_idf(100, df + 1));
    EXPECT_GT(bm25_idf(100, 100), 0.0);
}

TEST(Rankers, Bm25IndexRoundTrip)
{
    TempDir d;
    auto c = subj::testing::small_corpus();
    auto idx = Bm25Index::build(c);
    idx.save(d / "bm25.jsonl");
    auto back = Bm25Index::load(d / "bm25.jsonl");
    for (const auto& e : c.entities()) {
        EXPECT_DOUBLE_EQ(back.score({"room", "clean", "station"}, e.id, {}), idx.score({"room", "clean", "station"}, e.id, {}));
    }
    write_file(d / "bad.jsonl", "{\"term\":\"x\",\"df\":2,\"postings\":[[\"a\",1]]}\n");
    EXPECT_THROW(Bm25Index::load(d / "bad.jsonl"), Error);
}

TEST(Rankers, DenseVerbatimSentenceScoresOne)
{
    auto p = hashed();
    auto c = subj::testing::small_corpus();
    auto store = std::make_shared<SentenceStore>(SentenceStore::build(c, *p));
    DenseRanker r("dense", p, store, 1);
    Query q{"q", "The room was dirty", "kanto", 0};
    auto cands = c.candidates("kanto");
    auto scores = r.score(q, cands);
    for (std::size_t i = 0; i < cands.size(); ++i) {
        if (cands[i]->id == "h2") EXPECT_NEAR(scores[i], 1.0, 1e-6);
        else EXPECT_LT(scores[i], 1.0 - 1e-3);
    }
    EXPECT_EQ(dense_score(Vector(p->dimension(), 0.0), "h1", *store, 3), 0.0);
    EXPECT_EQ(dense_score(p->embed("room"), "ghost", *store, 3), 0.0);
    EXPECT_THROW(DenseRanker("d", p, store, 0), ValidationError);
}

TEST(Rankers, DenseScoreIsMeanOfTopM)
{
    auto p = hashed();
    auto c = subj::testing::small_corpus();
    auto store = SentenceStore::build(c, *p);
    auto q = p->embed("clean room");
    std::vector<double> sims;
    for (auto row : store.rows_of("h1")) {
        auto r = store.row(row);
        sims.push_back(cosine(q, Vector(r.begin(), r.end())));
    }
    std::sort(sims.rbegin(), sims.rend());
    EXPECT_NEAR(dense_score(q, "h1", store, 2), (sims[0] + sims[1]) / 2, 1e-9);
    EXPECT_NEAR(dense_score(q, "h1", store, 99), (sims[0] + sims[1] + sims[2]) / 3, 1e-9);
}

TEST(Rankers, RatingScoreConvexCombination)
{
    Entity e{"e", "E", "ueno", "", 3.3, {{"clean", 4.0}, {"quiet", 2.0}, {"value", 5.0}}, {}};
    Vector q{1.0, 0.0};
    std::vector<Vector> vs{{0.8, 0.6}, {0.2, std::sqrt(0.96)}, {-1.0, 0.0}};
    // Weights 0.8 and 0.2; the negative cosine contributes nothing.
    EXPECT_NEAR(rating_score(q, e, {"clean", "quiet", "value"}, vs), 3.6, 1e-12);
    EXPECT_EQ(rating_score(q, e, {"value"}, {{-1.0, 0.0}}), 3.3);
    EXPECT_EQ(rating_score(q, e, {"missing"}, {{1.0, 0.0}}), 3.3);
}

TEST(Rankers, RatingRankerPrefersMatchingAspect)
{
    auto p = hashed();
    auto c = subj::testing::small_corpus();
    RatingRanker r("rating", p, c.aspects());
    auto list = rank(r, Query{"q", "great location", "kanto", 0}, c, 2);
    EXPECT_EQ(list.entries[0].entity_id, "h2");  // location 4.8
    list = rank(r, Query{"q", "cleanliness", "kanto", 0}, c, 2);
    EXPECT_EQ(list.entries[0].entity_id, "h1");  // cleanliness 4.5
}

TEST(Rankers, RankIsPrefixOfFullOrderingAndRespectsArea)
{
    auto c = subj::testing::small_corpus();
    RandomRanker r("random", 3);
    Query q{"q", "anything", "kanto", 0};
    auto full = rank_all(r, q, c);
    for (int k = 1; k <= 4; ++k) {
        auto top = rank(r, q, c, k);
        ASSERT_EQ(top.entries.size(), std::min<std::size_t>(static_cast<std::size_t>(k), full.entries.size()));
        for (std::size_t i = 0; i < top.entries.size(); ++i) EXPECT_EQ(top.entries[i].entity_id, full.entries[i].entity_id);
    }
    for (const auto& e : full.entries) EXPECT_TRUE(c.areas().matches(c.entity(e.entity_id).area_id, "kanto"));
    EXPECT_TRUE(rank(r, Query{"q", "x", "osaka", 0}, c, 10).entries.size() == 1);
    EXPECT_THROW(rank(r, q, c, 0), ValidationError);
    EXPECT_THROW(rank(r, Query{"q", "x", "mars", 0}, c, 1), ReferenceError);
}

TEST(Rankers, TiesBreakByEntityId)
{
    auto c = subj::testing::small_corpus();
    StubRanker flat("flat", {});
    EXPECT_EQ(rank(flat, Query{"q", "x", "kanto", 0}, c, 10).ids(), (std::vector<std::string>{"h1", "h2"}));
    StubRanker mixed("m", {{"h3", 1.0}});
    auto all = rank(mixed, Query{"q", "x", "kanto", 0}, c, 10);
    EXPECT_EQ(all.ids(), (std::vector<std::string>{"h1", "h2"}));
    std::vector<RankedEntry> es{{"b", 1.0}, {"c", 2.0}, {"a", 1.0}};
    sort_ranked(es);
    EXPECT_EQ(es[0].entity_id, "c");
    EXPECT_EQ(es[1].entity_id, "a");
}

TEST(Rankers, RandomRankerIsSeeded)
{
    auto c = subj::testing::small_corpus();
    Query q{"q", "x", "kanto", 0};
    EXPECT_EQ(rank(RandomRanker("r", 1), q, c, 5).ids(), rank(RandomRanker("r", 1), q, c, 5).ids());
    auto cands = c.candidates("kanto");
    EXPECT_NE(RandomRanker("r", 1).score(q, cands), RandomRanker("r", 2).score(q, cands));
}

TEST(Rankers, OpineDbRankerUsesHistograms)
{
    auto p = hashed();
    auto c = subj::testing::small_corpus();
    auto s = std::make_shared<Schema>(two_attribute_schema(*p));
    IntensityLexicon lex({{"dirty", 1}, {"clean", 4}, {"very clean", 5}, {"delicious", 5}}, 5, *p);
    auto h = std::make_shared<HistogramStore>(build_histograms(c, *s, lex, hotel_rules(), *p, 0.5));
    OpineDbRanker r("opinedb", p, s, h);
    auto list = rank(r, Query{"q", "clean room", "kanto", 0}, c, 2);
    EXPECT_EQ(list.ids(), (std::vector<std::string>{"h1", "h2"}));
    EXPECT_GT(list.entries[0].score, list.entries[1].score);
}

// ---------------------------------------------------------------------------
// fusion

TEST(Fusion, MinMaxNormalize)
{
    EXPECT_EQ(minmax_normalize(std::vector<double>{7.0}), (std::vector<double>{0.5}));
    EXPECT_EQ(minmax_normalize(std::vector<double>{2, 2, 2}), (std::vector<double>{0.5, 0.5, 0.5}));
    EXPECT_EQ(minmax_normalize(std::vector<double>{2, 4, 3}), (std::vector<double>{0.0, 1.0, 0.5}));
    EXPECT_TRUE(minmax_normalize(std::vector<double>{}).empty());
}

TEST(Fusion, FeaturizeHandValues)
{
    auto c = subj::testing::small_corpus();
    FeatureSource src;
    src.base.push_back(std::make_shared<StubRanker>("a", std::map<std::string, double>{{"h1", 2}, {"h2", 4}, {"h3", 3}}));
    src.base.push_back(std::make_shared<StubRanker>("b", std::map<std::string, double>{{"h1", -1}, {"h2", -1}, {"h3", -1}}));
    Query q{"q", "clean room", "kanto", 0};
    std::vector<const Entity*> pool{&c.entity("h1"), &c.entity("h2"), &c.entity("h3")};
    auto fv = featurize(q, pool, src);
    ASSERT_EQ(fv.size(), 3u);
    EXPECT_EQ(fv[0].features, (std::vector<double>{0.0, 0.5, 0.0}));
    EXPECT_EQ(fv[1].features, (std::vector<double>{1.0, 0.5, 0.0}));
    EXPECT_EQ(fv[2].features, (std::vector<double>{0.5, 0.5, 0.0}));
    EXPECT_EQ(fv[2].entity_id, "h3");

    std::vector<const Entity*> one{&c.entity("h2")};
    EXPECT_EQ(featurize(q, one, src)[0].features, (std::vector<double>{0.5, 0.5, 0.0}));
    EXPECT_THROW(featurize(q, std::vector<const Entity*>{}, src), ValidationError);
}

TEST(Fusion, FeaturizeCoverageFlag)
{
    auto p = hashed();
    auto c = subj::testing::small_corpus();
    auto s = std::make_shared<Schema>(two_attribute_schema(*p));
    auto interp = std::make_shared<OpineDbRanker>("o", p, s, std::make_shared<HistogramStore>(5));
    FeatureSource src{{}, interp};
    std::vector<const Entity*> pool{&c.entity("h1")};
    EXPECT_EQ(featurize(Query{"q", "clean room", "kanto", 0}, pool, src)[0].features, (std::vector<double>{1.0}));
    EXPECT_EQ(featurize(Query{"q", "zzqx", "kanto", 0}, pool, src)[0].features, (std::vector<double>{0.0}));
}

TEST(Fusion, FeaturizeFeaturesStayInUnitInterval)
{
    std::mt19937_64 g(5);
    std::normal_distribution<double> n(0, 100);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> raw(1 + t % 9);
        for (auto& x : raw) x = n(g);
        for (double v : minmax_normalize(raw)) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        if (raw.size() > 1) {
            auto mm = minmax_normalize(raw);
            auto hi = static_cast<std::size_t>(std::max_element(raw.begin(), raw.end()) - raw.begin());
            auto lo = static_cast<std::size_t>(std::min_element(raw.begin(), raw.end()) - raw.begin());
            EXPECT_EQ(mm[hi], 1.0);
            EXPECT_EQ(mm[lo], 0.0);
        }
    }
}

TEST(Fusion, LogitScoring)
{
    auto zero = logit({0.0, 0.0}, 0.0);
    EXPECT_EQ(score_logit(zero, std::vector<double>{0.3, 0.9}), 0.5);
    auto one = logit({1.0, 0.0}, 0.0);
    EXPECT_NEAR(score_logit(one, std::vector<double>{1.0, 0.0}), 0.7311, 5e-5);
    EXPECT_THROW(score_logit(one, std::vector<double>{1.0}), ValidationError);
    EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
    EXPECT_EQ(sigmoid(800.0), 1.0);
    auto back = LogitModel::from_json(json::parse(one.to_json().dump()));
    EXPECT_EQ(back.weights, one.weights);
}

namespace {

std::vector<FeatureVector> separable_rows(int n, std::uint64_t seed)
{
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<FeatureVector> out;
    for (int i = 0; i < n; ++i) {
        double a = u(g), b = u(g);
        out.push_back({"q" + std::to_string(i / 10), "e" + std::to_string(i), {a, b}, a + 0.3 * b > 0.65});
    }
    return out;
}

}  // namespace

TEST(Fusion, LogitTrainingDecreasesLossAndDuplicationIsNeutral)
{
    auto rows = separable_rows(80, 3);
    LogitParams p;
    p.l2 = 0.0;
    p.max_epochs = 300;
    auto m = train_logit(rows, p);
    ASSERT_GE(m.loss_history.size(), 2u);
    for (std::size_t i = 1; i < m.loss_history.size(); ++i) EXPECT_LE(m.loss_history[i], m.loss_history[i - 1] + 1e-12);
    EXPECT_GT(m.weights[0], 0.0);

    auto doubled = rows;
    doubled.insert(doubled.end(), rows.begin(), rows.end());
    auto m2 = train_logit(doubled, p);
    for (std::size_t i = 0; i < m.weights.size(); ++i) EXPECT_NEAR(m.weights[i], m2.weights[i], 1e-9);
    EXPECT_NEAR(m.bias, m2.bias, 1e-9);
}

TEST(Fusion, LogitRejectsDegenerateData)
{
    auto rows = separable_rows(20, 1);
    for (auto& r : rows) r.label = true;
    EXPECT_THROW(train_logit(rows), ValidationError);
    EXPECT_THROW(train_logit(std::vector<FeatureVector>{}), ValidationError);
    auto ragged = separable_rows(20, 1);
    ragged[3].features.push_back(1.0);
    EXPECT_THROW(train_logit(ragged), ValidationError);
}

TEST(Fusion, LambdasPushRelevantUp)
{
    std::vector<double> s{0.0, 0.0, 0.0};
    std::vector<int> l{0, 1, 0};
    auto lam = compute_lambdas(s, l, 10);
    EXPECT_GT(lam[1], 0.0);
    EXPECT_LT(lam[0], 0.0);
    EXPECT_LT(lam[2], 0.0);
    EXPECT_NEAR(lam[0] + lam[1] + lam[2], 0.0, 1e-12);
    std::vector<int> none{0, 0, 0};
    EXPECT_EQ(compute_lambdas(s, none, 10), (std::vector<double>{0, 0, 0}));
}

TEST(Fusion, CountInversions)
{
    std::vector<double> s{3, 2, 1};
    EXPECT_EQ(count_inversions(s, std::vector<int>{0, 1, 1}), 2u);
    EXPECT_EQ(count_inversions(s, std::vector<int>{1, 1, 0}), 0u);
    EXPECT_EQ(count_inversions(s, std::vector<int>{0, 0, 1}), 2u);
}

TEST(Fusion, LambdaMartEmptyModelAndPersistence)
{
    LambdaMartModel empty;
    EXPECT_EQ(empty.score(std::vector<double>{1, 2}), 0.0);

    auto rows = separable_rows(60, 9);
    LambdaMartParams p;
    p.trees = 10;
    p.min_leaf = 2;
    auto m = train_lambdamart(rows, p);
    EXPECT_EQ(m.trees.size(), 10u);
    EXPECT_EQ(m.feature_count, 2u);
    TempDir d;
    m.save(d / "m.jsonl");
    auto back = LambdaMartModel::load(d / "m.jsonl");
    for (const auto& r : rows) EXPECT_DOUBLE_EQ(back.score(r.features), m.score(r.features));
    EXPECT_THROW(m.score(std::vector<double>{1.0}), ValidationError);

    write_file(d / "bad.jsonl",
               "{\"kind\":\"lambdamart\",\"learning_rate\":0.1,\"features\":2,\"trees\":1}\n"
               "{\"tree\":0,\"nodes\":[[7,0.5,0.0],[-1,0,1.0],[-1,0,-1.0]]}\n");
    EXPECT_THROW(LambdaMartModel::load(d / "bad.jsonl"), ValidationError);
    write_file(d / "trunc.jsonl", "{\"tree\":0,\"nodes\":[[0,0.5,0.0],[-1,0,1.0]]}\n");
    EXPECT_THROW(LambdaMartModel::load(d / "trunc.jsonl"), ValidationError);
}

TEST(Fusion, LambdaMartNeedsAMixedQuery)
{
    std::vector<FeatureVector> rows{{"q1", "a", {0.1}, true}, {"q1", "b", {0.2}, true}, {"q2", "c", {0.3}, false}};
    EXPECT_THROW(train_lambdamart(rows), ValidationError);
    rows.push_back({"q2", "d", {0.9}, true});
    EXPECT_NO_THROW(train_lambdamart(rows, LambdaMartParams{5, 0.1, 2, 1, 10}));
}

TEST(Fusion, FusedRankerChecksFeatureCount)
{
    FeatureSource src;
    src.base.push_back(std::make_shared<StubRanker>("a", std::map<std::string, double>{{"h1", 1.0}}));
    EXPECT_THROW(FusedRanker("f", src, logit({1.0}, 0.0)), ValidationError);
    FusedRanker ok("f", src, logit({2.0, 0.0}, -1.0));
    auto c = subj::testing::small_corpus();
    auto list = rank(ok, Query{"q", "x", "kanto", 0}, c, 2);
    EXPECT_EQ(list.ids(), (std::vector<std::string>{"h1", "h2"}));
    EXPECT_NEAR(list.entries[0].score, sigmoid(1.0), 1e-12);
    EXPECT_EQ(ok.kind(), "logit");
}

// ---------------------------------------------------------------------------
// metrics

TEST(Metrics, PrecisionExamples)
{
    auto r = labeled({"a", "b", "c"}, {{"a", true}, {"b", false}, {"c", true}});
    EXPECT_NEAR(precision_at_k(r, 3), 2.0 / 3.0, 1e-15);
    auto five = labeled({"a", "b", "c", "d", "e"}, {{"a", true}, {"c", true}, {"e", true}, {"b", false}});
    EXPECT_DOUBLE_EQ(precision_at_k(five, 5), 0.6);
    // Short list keeps the K denominator; unjudged counts as irrelevant.
    auto shortl = labeled({"a", "x"}, {{"a", true}});
    EXPECT_DOUBLE_EQ(precision_at_k(shortl, 10), 0.1);
    auto half = labeled({"1", "2", "3", "4", "5", "6", "7", "8", "9", "10"},
                        {{"1", true}, {"3", true}, {"5", true}, {"7", true}, {"9", true}});
    EXPECT_DOUBLE_EQ(precision_at_k(half, 10), 0.5);
    EXPECT_THROW(precision_at_k(r, 0), ValidationError);
}

TEST(Metrics, NdcgExamples)
{
    auto r = labeled({"a", "b", "c"}, {{"a", false}, {"b", true}, {"c", true}});
    // (1/log2 3 + 1/2) / (1 + 1/log2 3)
    EXPECT_NEAR(ndcg_at_k(r, 3), 0.6934, 5e-5);
    EXPECT_DOUBLE_EQ(ndcg_at_k(labeled({"b", "c", "a"}, r.judgments), 3), 1.0);
    EXPECT_EQ(ndcg_at_k(labeled({"a"}, {{"a", false}}), 10), 0.0);
    // The ideal list counts relevant labels outside the ranking.
    auto missing = labeled({"a"}, {{"a", true}, {"z", true}});
    EXPECT_NEAR(ndcg_at_k(missing, 10), 1.0 / (1.0 + 1.0 / std::log2(3.0)), 1e-12);
    EXPECT_THROW(ndcg_at_k(r, 0), ValidationError);
}

TEST(Metrics, AdjacentSwapRaisesNdcg)
{
    std::mt19937_64 g(2);
    std::bernoulli_distribution coin(0.4);
    for (int t = 0; t < 300; ++t) {
        std::vector<std::string> ids;
        std::map<std::string, bool> j;
        for (int i = 0; i < 12; ++i) {
            ids.push_back("e" + std::to_string(i));
            j[ids.back()] = coin(g);
        }
        for (std::size_t i = 0; i + 1 < 10; ++i) {
            if (j[ids[i]] || !j[ids[i + 1]]) continue;
            auto swapped = ids;
            std::swap(swapped[i], swapped[i + 1]);
            EXPECT_GT(ndcg_at_k(labeled(swapped, j), 10), ndcg_at_k(labeled(ids, j), 10));
            EXPECT_EQ(precision_at_k(labeled(swapped, j), 10), precision_at_k(labeled(ids, j), 10));
        }
    }
}

TEST(Metrics, MetricsBoundedAndMonotoneInK)
{
    std::mt19937_64 g(6);
    std::bernoulli_distribution coin(0.5);
    for (int t = 0; t < 100; ++t) {
        std::vector<std::string> ids;
        std::map<std::string, bool> j;
        for (int i = 0; i < 15; ++i) {
            ids.push_back("e" + std::to_string(i));
            if (coin(g)) j[ids.back()] = coin(g);
        }
        auto r = labeled(ids, j);
        for (int k = 1; k <= 20; ++k) {
            EXPECT_GE(ndcg_at_k(r, k), 0.0);
            EXPECT_LE(ndcg_at_k(r, k), 1.0 + 1e-12);
            // Coverage never rises above the share of judged entities within min(K, len).
            EXPECT_LE(judged_coverage_at_k(r, k), 1.0);
            EXPECT_LE(precision_at_k(r, k), judged_coverage_at_k(r, k) + 1e-12);
        }
    }
}

TEST(Metrics, SensitivityAndDistribution)
{
    std::vector<LabeledRanking> rs{labeled({"a", "b"}, {{"a", true}, {"b", false}}), labeled({"c", "d"}, {{"c", true}})};
    auto sweep = sensitivity_sweep(rs, {1, 2});
    EXPECT_DOUBLE_EQ(sweep[0].mean_precision, 1.0);
    EXPECT_DOUBLE_EQ(sweep[1].mean_precision, 0.5);
    EXPECT_DOUBLE_EQ(sweep[1].coverage, 0.75);
    EXPECT_THROW(sensitivity_sweep(rs, {}), ValidationError);

    auto d = precision_distribution(std::vector<double>{0.9, 1.0, 0.3, 0.0}, 10);
    EXPECT_EQ(d.counts[9], 1);
    EXPECT_EQ(d.counts[10], 1);
    EXPECT_EQ(d.counts[3], 1);
    EXPECT_EQ(d.counts[0], 1);
    EXPECT_DOUBLE_EQ(d.frac_at_least_090, 0.5);
    EXPECT_DOUBLE_EQ(d.frac_perfect, 0.25);
    // 0.7 computed as 7/10 lands in the 0.7 bucket despite rounding.
    auto d2 = precision_distribution(std::vector<double>{7.0 / 10.0, 0.1 * 7}, 10);
    EXPECT_EQ(d2.counts[7], 2);
}

TEST(Metrics, OrthogonalityFixture)
{
    std::map<std::string, std::map<std::string, double>> pq{
        {"opinedb", {{"q1", 0.2}, {"q2", 0.4}, {"q3", 0.9}}},
        {"dense", {{"q1", 0.6}, {"q2", 0.1}, {"q3", 0.1}}},
        {"bm25", {{"q1", 0.5}, {"q2", 0.5}, {"q3", 0.0}}},
    };
    auto t = orthogonality_table(pq, "opinedb", 0.5);
    EXPECT_EQ(t.failing, (std::vector<std::string>{"q1", "q2"}));
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[0].ranker, "bm25");
    EXPECT_EQ(t.rows[0].rescued, 2u);
    EXPECT_EQ(t.rows[1].rescued, 1u);
    EXPECT_THROW(orthogonality_table(pq, "nope"), ValidationError);
}

TEST(Metrics, SplitByFrequency)
{
    std::vector<Query> qs;
    for (int i = 0; i < 10; ++i) qs.push_back({"q" + std::to_string(i), "t", "a", static_cast<double>(i % 4)});
    auto s = split_queries(qs, 3);
    // Frequencies 3 belong to q3 and q7; the next 2 are q2, q6; ties by id.
    EXPECT_EQ(s.test, (std::vector<std::string>{"q2", "q3", "q7"}));
    EXPECT_EQ(s.train.size(), 7u);
    EXPECT_THROW(split_queries(qs, 10), ValidationError);
    EXPECT_EQ(default_test_size(664), 250u);
    EXPECT_EQ(split_queries(qs).test.size(), 4u);  // round(10 * 250 / 664) = 4
}
