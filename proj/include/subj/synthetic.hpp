#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "textproc.hpp"

namespace subj {

/// An attribute expressed through opinions in reviews ("the room was clean").
struct OpinionAttributeSpec {
    std::string name;
    std::vector<std::string> nouns;
    std::array<std::string, 5> ladder;  // modifiers from worst (bucket 1) to best (bucket 5)
    /// (query form, review form) pairs sharing character n-grams but no tokens,
    /// so only similarity-based rankers can connect them.
    std::vector<std::pair<std::string, std::string>> paraphrases;
};

/// An aspect carried only by structured ratings; reviews never discuss it.
struct RatingAspectSpec {
    std::string name;
    std::vector<std::string> queries;
};

/// A facility mentioned by keyword in reviews, outside the schema and the ratings.
struct FacilitySpec {
    std::string keyword;
    std::vector<std::string> queries;
};

struct GeneratorParams {
    int entities = 200;
    int queries = 120;
    int regions = 3;
    int prefectures_per_region = 3;
    int towns_per_prefecture = 3;
    int reviews_min = 3;
    int reviews_max = 6;
    int opinions_min = 3;
    int opinions_max = 6;
    /// Half-width of the window around latent quality from which modifier intensity is drawn.
    double modifier_spread = 0.15;
    /// Half-width of the uniform noise added to 1 + 4q aspect ratings.
    double rating_noise = 0.6;
    /// Fraction of candidate pairs that should be relevant.
    double target_positive_rate = 0.40;
    /// Query mix: in-schema, paraphrase, rating-only, facility keyword. Normalized.
    std::array<double, 4> query_mix{0.40, 0.20, 0.20, 0.20};
    /// Minimum candidates in an area for it to carry a query.
    int min_candidates = 15;

    std::vector<OpinionAttributeSpec> attributes = default_attributes();
    std::vector<RatingAspectSpec> rating_aspects = default_rating_aspects();
    std::vector<FacilitySpec> facilities = default_facilities();

    static std::vector<OpinionAttributeSpec> default_attributes()
    {
        return {
            {"cleanliness",
             {"room", "bathroom", "carpet"},
             {"filthy", "dirty", "acceptable", "clean", "very clean"},
             {{"immaculately tidied lodgings", "immaculate tidy lodging throughout"},
              {"sparkling hygienic quarters", "sparkly hygiene across the quarter"}}},
            {"staff",
             {"staff", "receptionist", "concierge"},
             {"rude", "unhelpful", "polite", "friendly", "extremely friendly"},
             {{"warmly hospitable hosts", "warm hospitality from the hostess"},
              {"attentively welcoming people", "attentive welcomes from everyone"}}},
            {"breakfast",
             {"breakfast", "buffet", "omelette"},
             {"inedible", "bland", "decent", "tasty", "delicious"},
             {{"scrumptiously feasting mornings", "scrumptious feast at dawn"},
              {"flavorsome homecooked dishes", "flavorful homecooking dish"}}},
            {"quietness",
             {"corridor", "neighborhood", "street"},
             {"deafening", "noisy", "tolerable", "calm", "silent"},
             {{"peacefully undisturbed slumber", "peaceful undisturbing slumbers"},
              {"tranquility for resting", "tranquil rest"}}},
            {"view",
             {"view", "scenery", "balcony"},
             {"ugly", "dull", "pleasant", "scenic", "breathtaking"},
             {{"panoramic vistas of mountains", "panorama vista over the mountain"},
              {"oceanfront sunsets", "ocean sunset spectacle"}}},
            {"bath",
             {"onsen", "bathtub", "spa"},
             {"freezing", "lukewarm", "adequate", "relaxing", "truly relaxing"},
             {{"soothingly steaming springs", "soothing steamy spring soak"},
              {"rejuvenating soaks", "rejuvenated by soaking"}}},
        };
    }

    static std::vector<RatingAspectSpec> default_rating_aspects()
    {
        return {{"location", {"convenient location", "great location", "good location near station"}},
                {"value", {"good value", "great value for money", "value for the price"}}};
    }

    static std::vector<FacilitySpec> default_facilities()
    {
        return {{"sauna", {"hotel with sauna", "sauna available"}},
                {"parking", {"free parking", "parking on site"}},
                {"karaoke", {"karaoke room", "hotel with karaoke"}},
                {"gym", {"gym access", "hotel with gym"}}};
    }
};

enum class QueryKind { in_schema, paraphrase, rating, keyword };

inline std::string to_string(QueryKind k)
{
    switch (k) {
    case QueryKind::in_schema: return "in_schema";
    case QueryKind::paraphrase: return "paraphrase";
    case QueryKind::rating: return "rating";
    case QueryKind::keyword: return "keyword";
    }
    return "?";
}

inline QueryKind parse_query_kind(const std::string& s)
{
    if (s == "in_schema") return QueryKind::in_schema;
    if (s == "paraphrase") return QueryKind::paraphrase;
    if (s == "rating") return QueryKind::rating;
    if (s == "keyword") return QueryKind::keyword;
    throw ValidationError("unknown query kind '" + s + "'");
}

struct QueryTruth {
    std::string attribute;
    double threshold = 0.5;
    QueryKind kind = QueryKind::in_schema;
};

/// Planted ground truth. relevance(q,e) holds iff quality(e, attribute(q)) >=
/// threshold(q) and e lies in q's area; only area candidates are listed.
struct SyntheticGroundTruth {
    std::map<std::pair<std::string, std::string>, double> quality;  // (entity, attribute)
    LabelMap relevance;
    std::map<std::string, QueryTruth> queries;

    double quality_of(const std::string& entity, const std::string& attribute) const
    {
        return quality.at({entity, attribute});
    }

    void save(const fs::path& dir) const
    {
        save_labels(dir / files::truth, relevance);
        std::vector<json> recs;
        for (const auto& [k, v] : quality) {
            recs.push_back({{"entity_id", k.first}, {"attribute", k.second}, {"quality", v}});
        }
        write_jsonl(dir / "quality.jsonl", recs);
        recs.clear();
        for (const auto& [q, t] : queries) {
            recs.push_back({{"query_id", q}, {"attribute", t.attribute}, {"threshold", t.threshold},
                            {"kind", to_string(t.kind)}});
        }
        write_jsonl(dir / "query_truth.jsonl", recs);
    }

    static SyntheticGroundTruth load(const fs::path& dir)
    {
        SyntheticGroundTruth t;
        t.relevance = load_labels(dir / files::truth);
        if (fs::exists(dir / "quality.jsonl")) {
            for_each_record(dir / "quality.jsonl", [&](const json& r, std::size_t) {
                t.quality[{r.at("entity_id").get<std::string>(), r.at("attribute").get<std::string>()}] =
                    r.at("quality").get<double>();
            });
        }
        if (fs::exists(dir / "query_truth.jsonl")) {
            for_each_record(dir / "query_truth.jsonl", [&](const json& r, std::size_t) {
                t.queries[r.at("query_id").get<std::string>()] = {r.at("attribute").get<std::string>(),
                                                                  r.at("threshold").get<double>(),
                                                                  parse_query_kind(r.at("kind").get<std::string>())};
            });
        }
        return t;
    }
};

struct PlantedOpinion {
    std::string review_id;
    int sentence_index = 0;
    std::string aspect_term;
    std::string modifier;
    std::string attribute;
};

struct SyntheticBenchmark {
    Corpus corpus;
    std::vector<Query> queries;
    SyntheticGroundTruth truth;
    std::vector<std::pair<std::string, std::vector<std::string>>> schema;
    std::map<std::string, int> lexicon;
    RuleSet rules;
    std::vector<PlantedOpinion> planted;
};

namespace detail {

inline std::string capitalize(std::string s)
{
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') {
        s[0] = static_cast<char>(s[0] - 'a' + 'A');
    }
    return s;
}

inline std::string pad(int v, int width)
{
    auto s = std::to_string(v);
    return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

/// Chance that a review of an entity with latent quality q mentions a signal.
inline double mention_probability(double q)
{
    double x = std::clamp((q - 0.25) / 0.75, 0.0, 1.0);
    return x * std::sqrt(x);
}

inline double round2(double x) { return std::round(x * 100.0) / 100.0; }

}  // namespace detail

/// Intensity bucket in 1..5 for a modifier drawn around latent quality q.
inline int sample_bucket(double q, double spread, Rng& rng)
{
    double u = std::clamp(rng.uniform(q - spread, q + spread), 0.0, 1.0);
    return std::min(5, 1 + static_cast<int>(u * 5.0));
}

/// Deterministic synthetic corpus, query set and planted ground truth.
inline SyntheticBenchmark generate_synthetic(std::uint64_t seed, const GeneratorParams& params = {})
{
    if (params.entities <= 0) {
        throw ValidationError("generator: entity count must be positive");
    }
    if (params.attributes.empty()) {
        throw ValidationError("generator: attribute list is empty");
    }
    if (params.queries < 0 || params.regions <= 0 || params.prefectures_per_region <= 0
        || params.towns_per_prefecture <= 0 || params.reviews_min < 1 || params.reviews_max < params.reviews_min
        || params.opinions_min < 1 || params.opinions_max < params.opinions_min) {
        throw ValidationError("generator: invalid size parameters");
    }
    if (!(params.target_positive_rate > 0.0 && params.target_positive_rate < 1.0)) {
        throw ValidationError("generator: target positive rate must lie in (0,1)");
    }
    Rng rng(seed);
    SyntheticBenchmark out;

    // Areas: regions > prefectures > towns.
    static const std::vector<std::string> region_names{"Kanto", "Kansai", "Kyushu", "Tohoku", "Chubu",
                                                       "Chugoku", "Shikoku", "Hokkaido", "Okinawa"};
    std::vector<Area> areas;
    std::vector<std::string> towns;
    for (int r = 0; r < params.regions; ++r) {
        std::string rid = "R" + std::to_string(r + 1);
        std::string rname = r < static_cast<int>(region_names.size()) ? region_names[static_cast<std::size_t>(r)]
                                                                        : "Region " + std::to_string(r + 1);
        areas.push_back({rid, rname, std::nullopt});
        for (int p = 0; p < params.prefectures_per_region; ++p) {
            std::string pid = rid + "-P" + std::to_string(p + 1);
            areas.push_back({pid, rname + " Prefecture " + std::to_string(p + 1), rid});
            for (int t = 0; t < params.towns_per_prefecture; ++t) {
                std::string tid = pid + "-T" + std::to_string(t + 1);
                areas.push_back({tid, rname + " Town " + std::to_string(p + 1) + "." + std::to_string(t + 1), pid});
                towns.push_back(tid);
            }
        }
    }
    AreaForest forest(areas);

    std::vector<std::string> latent;  // every attribute with a latent quality
    for (const auto& a : params.attributes) latent.push_back(a.name);
    for (const auto& a : params.rating_aspects) latent.push_back(a.name);
    for (const auto& f : params.facilities) latent.push_back(f.keyword);

    static const std::vector<std::string> copulas{"was", "is", "seemed", "felt"};
    static const std::vector<std::string> fillers{"We stayed two nights", "Check in went smoothly",
                                                  "Would come back next year", "Booked this trip last minute",
                                                  "Arrived late by train"};
    static const std::vector<std::string> facility_templates{"We enjoyed the {}", "The {} made our trip",
                                                             "Used the {} every evening"};

    const int id_width = static_cast<int>(std::to_string(params.entities).size());
    std::vector<Entity> entities;
    std::vector<Review> reviews;
    for (int i = 0; i < params.entities; ++i) {
        Entity e;
        e.id = "E" + detail::pad(i + 1, std::max(4, id_width));
        e.area_id = towns[rng.index(towns.size())];
        e.name = "Hotel " + e.id.substr(1);
        e.description = "A hotel in " + forest.at(e.area_id).name + ".";
        double mean_q = 0.0;
        std::map<std::string, double> q;
        for (const auto& a : latent) {
            q[a] = detail::round2(rng.uniform());
            out.truth.quality[{e.id, a}] = q[a];
        }
        for (const auto& a : params.attributes) mean_q += q[a.name];
        for (const auto& a : params.rating_aspects) mean_q += q[a.name];
        mean_q /= static_cast<double>(params.attributes.size() + params.rating_aspects.size());
        auto rating = [&](double quality) {
            return detail::round2(std::clamp(1.0 + 4.0 * quality + rng.uniform(-params.rating_noise, params.rating_noise),
                                             1.0, 5.0));
        };
        for (const auto& a : params.attributes) e.aspect_ratings[a.name] = rating(q[a.name]);
        for (const auto& a : params.rating_aspects) e.aspect_ratings[a.name] = rating(q[a.name]);
        e.overall_rating = rating(mean_q);

        int n_reviews = params.reviews_min + static_cast<int>(rng.index(static_cast<std::size_t>(params.reviews_max - params.reviews_min + 1)));
        for (int r = 0; r < n_reviews; ++r) {
            Review rv;
            rv.id = e.id + "-R" + std::to_string(r + 1);
            rv.entity_id = e.id;
            struct Sent {
                std::string text;
                std::optional<PlantedOpinion> opinion;
            };
            std::vector<Sent> sents;
            int n_ops = params.opinions_min + static_cast<int>(rng.index(static_cast<std::size_t>(params.opinions_max - params.opinions_min + 1)));
            for (int s = 0; s < n_ops; ++s) {
                const auto& attr = params.attributes[rng.index(params.attributes.size())];
                const auto& noun = rng.pick(attr.nouns);
                int bucket = sample_bucket(q[attr.name], params.modifier_spread, rng);
                const auto& mod = attr.ladder[static_cast<std::size_t>(bucket - 1)];
                std::string text = rng.bernoulli(0.8) ? "The " + noun + " " + rng.pick(copulas) + " " + mod
                                                      : detail::capitalize(mod) + " " + noun;
                sents.push_back({text, PlantedOpinion{rv.id, 0, noun, mod, attr.name}});
            }
            for (const auto& attr : params.attributes) {
                if (!attr.paraphrases.empty() && rng.bernoulli(detail::mention_probability(q[attr.name]))) {
                    sents.push_back({detail::capitalize(rng.pick(attr.paraphrases).second), std::nullopt});
                }
            }
            for (const auto& f : params.facilities) {
                if (rng.bernoulli(detail::mention_probability(q[f.keyword]))) {
                    auto t = rng.pick(facility_templates);
                    t.replace(t.find("{}"), 2, f.keyword);
                    sents.push_back({t, std::nullopt});
                }
            }
            if (rng.bernoulli(0.5)) {
                sents.push_back({rng.pick(fillers), std::nullopt});
            }
            rng.shuffle(sents);
            for (std::size_t s = 0; s < sents.size(); ++s) {
                if (!rv.text.empty()) rv.text += " ";
                rv.text += sents[s].text + ".";
                if (sents[s].opinion) {
                    auto op = *sents[s].opinion;
                    op.sentence_index = static_cast<int>(s);
                    out.planted.push_back(op);
                }
            }
            e.review_ids.push_back(rv.id);
            reviews.push_back(std::move(rv));
        }
        entities.push_back(std::move(e));
    }
    out.corpus = Corpus(forest, std::move(entities), std::move(reviews));

    // Query areas: regions and prefectures with enough candidates.
    std::vector<std::string> query_areas;
    for (const auto& a : forest.areas()) {
        if (a.id.find("-T") == std::string::npos
            && static_cast<int>(out.corpus.candidates(a.id).size()) >= params.min_candidates) {
            query_areas.push_back(a.id);
        }
    }
    if (query_areas.empty() && params.queries > 0) {
        throw ValidationError("generator: no area has enough candidates for queries");
    }

    double mix_total = 0.0;
    for (double m : params.query_mix) mix_total += m;
    const double base_threshold = 1.0 - params.target_positive_rate;
    const int qid_width = std::max(4, static_cast<int>(std::to_string(params.queries).size()));
    for (int i = 0; i < params.queries; ++i) {
        double u = rng.uniform() * mix_total;
        auto kind = QueryKind::in_schema;
        double acc = params.query_mix[0];
        if (u >= acc) {
            acc += params.query_mix[1];
            kind = u < acc ? QueryKind::paraphrase : (u < acc + params.query_mix[2] ? QueryKind::rating : QueryKind::keyword);
        }
        if (kind == QueryKind::rating && params.rating_aspects.empty()) kind = QueryKind::in_schema;
        if (kind == QueryKind::keyword && params.facilities.empty()) kind = QueryKind::in_schema;

        Query query;
        query.id = "Q" + detail::pad(i + 1, qid_width);
        query.area_id = query_areas[rng.index(query_areas.size())];
        query.frequency = std::floor(std::exp(rng.uniform(0.0, 6.0)));
        QueryTruth qt;
        qt.kind = kind;
        double shift = 0.0;
        switch (kind) {
        case QueryKind::in_schema: {
            const auto& attr = params.attributes[rng.index(params.attributes.size())];
            int level = rng.bernoulli(0.5) ? 4 : 5;
            query.text = attr.ladder[static_cast<std::size_t>(level - 1)] + " " + rng.pick(attr.nouns);
            qt.attribute = attr.name;
            shift = level == 5 ? 0.05 : -0.05;
            break;
        }
        case QueryKind::paraphrase: {
            const auto* attr = &params.attributes[rng.index(params.attributes.size())];
            while (attr->paraphrases.empty()) attr = &params.attributes[rng.index(params.attributes.size())];
            query.text = rng.pick(attr->paraphrases).first;
            qt.attribute = attr->name;
            break;
        }
        case QueryKind::rating: {
            const auto& a = params.rating_aspects[rng.index(params.rating_aspects.size())];
            query.text = rng.pick(a.queries);
            qt.attribute = a.name;
            break;
        }
        case QueryKind::keyword: {
            const auto& f = params.facilities[rng.index(params.facilities.size())];
            query.text = rng.pick(f.queries);
            qt.attribute = f.keyword;
            break;
        }
        }
        qt.threshold = detail::round2(std::clamp(base_threshold + shift + rng.uniform(-0.05, 0.05), 0.01, 0.99));
        for (const auto* e : out.corpus.candidates(query.area_id)) {
            out.truth.relevance[query.id][e->id] = out.truth.quality_of(e->id, qt.attribute) >= qt.threshold;
        }
        out.truth.relevance[query.id];  // queries with no candidates still appear
        out.truth.queries[query.id] = qt;
        out.queries.push_back(std::move(query));
    }

    // Schema, lexicon and extraction rules implied by the attribute specs.
    out.rules = RuleSet::defaults();
    for (const auto& attr : params.attributes) {
        std::vector<std::string> phrases;
        for (int level = 0; level < 5; ++level) {
            for (const auto& noun : attr.nouns) {
                phrases.push_back(attr.ladder[static_cast<std::size_t>(level)] + " " + noun);
            }
            out.lexicon[attr.ladder[static_cast<std::size_t>(level)]] = level + 1;
        }
        for (const auto& noun : attr.nouns) {
            out.rules.aspects.insert(noun);
        }
        out.schema.emplace_back(attr.name, std::move(phrases));
    }
    return out;
}

}  // namespace subj
