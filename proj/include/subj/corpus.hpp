#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "common.hpp"

namespace subj {

inline bool is_sentence_terminal(char32_t cp)
{
    return cp == U'.' || cp == U'!' || cp == U'?' || cp == U'。' || cp == U'！' || cp == U'？';
}

/// Splits on terminal punctuation (. ! ? and their full-width forms); drops empty pieces.
inline std::vector<std::string> split_sentences(std::string_view text)
{
    std::vector<std::string> out;
    std::size_t i = 0;
    std::size_t start = 0;
    while (i < text.size()) {
        std::size_t at = i;
        char32_t cp = utf8::next(text, i);
        if (is_sentence_terminal(cp)) {
            auto piece = trim(text.substr(start, at - start));
            if (!piece.empty()) {
                out.push_back(std::move(piece));
            }
            start = i;
        }
    }
    auto tail = trim(text.substr(start));
    if (!tail.empty()) {
        out.push_back(std::move(tail));
    }
    return out;
}

// ---------------------------------------------------------------------------

struct Area {
    std::string id;
    std::string name;
    std::optional<std::string> parent_id;
};

struct Entity {
    std::string id;
    std::string name;
    std::string area_id;
    std::string description;
    double overall_rating = 3.0;
    std::map<std::string, double> aspect_ratings;
    std::vector<std::string> review_ids;
};

struct Review {
    std::string id;
    std::string entity_id;
    std::string text;
    std::vector<std::string> sentences;
};

struct Query {
    std::string id;
    std::string text;
    std::string area_id;
    /// How often the query came up in (synthetic) dialogues; orders the test split.
    double frequency = 0.0;
};

/// Areas form a forest: towns under prefectures under regions.
class AreaForest {
  public:
    AreaForest() = default;

    explicit AreaForest(std::vector<Area> areas)
    {
        for (auto& a : areas) {
            if (!by_id_.emplace(a.id, a).second) {
                throw ValidationError("duplicate area id '" + a.id + "'");
            }
            order_.push_back(a.id);
        }
        for (const auto& id : order_) {
            const auto& a = by_id_.at(id);
            if (a.parent_id && !by_id_.count(*a.parent_id)) {
                throw ReferenceError("area '" + id + "' has unknown parent", *a.parent_id);
            }
        }
        // Walking up from any node must terminate within |areas| steps.
        for (const auto& id : order_) {
            std::size_t steps = 0;
            const Area* cur = &by_id_.at(id);
            while (cur->parent_id) {
                if (++steps > by_id_.size()) {
                    throw ValidationError("area parent links form a cycle through '" + id + "'");
                }
                cur = &by_id_.at(*cur->parent_id);
            }
        }
    }

    bool contains(const std::string& id) const { return by_id_.count(id) != 0; }

    const Area& at(const std::string& id) const
    {
        auto it = by_id_.find(id);
        if (it == by_id_.end()) {
            throw ReferenceError("unknown area", id);
        }
        return it->second;
    }

    std::vector<Area> areas() const
    {
        std::vector<Area> out;
        for (const auto& id : order_) {
            out.push_back(by_id_.at(id));
        }
        return out;
    }

    std::size_t size() const { return order_.size(); }

    /// True iff entity_area is query_area or lies beneath it.
    bool matches(const std::string& entity_area, const std::string& query_area) const
    {
        const Area* cur = &at(entity_area);
        at(query_area);
        while (true) {
            if (cur->id == query_area) {
                return true;
            }
            if (!cur->parent_id) {
                return false;
            }
            cur = &by_id_.at(*cur->parent_id);
        }
    }

  private:
    std::unordered_map<std::string, Area> by_id_;
    std::vector<std::string> order_;
};

inline bool area_matches(const std::string& entity_area, const std::string& query_area, const AreaForest& forest)
{
    return forest.matches(entity_area, query_area);
}

/// Immutable after load; lookups by id.
class Corpus {
  public:
    Corpus() = default;

    Corpus(AreaForest areas, std::vector<Entity> entities, std::vector<Review> reviews)
        : areas_(std::move(areas)), entities_(std::move(entities)), reviews_(std::move(reviews))
    {
        for (std::size_t i = 0; i < entities_.size(); ++i) {
            auto& e = entities_[i];
            if (!entity_index_.emplace(e.id, i).second) {
                throw ValidationError("duplicate entity id '" + e.id + "'");
            }
            if (!areas_.contains(e.area_id)) {
                throw ReferenceError("entity '" + e.id + "' references unknown area", e.area_id);
            }
            check_rating(e.id, "overall_rating", e.overall_rating);
            for (const auto& [name, r] : e.aspect_ratings) {
                check_rating(e.id, name, r);
                aspects_.insert(name);
            }
            e.review_ids.clear();
        }
        for (std::size_t i = 0; i < reviews_.size(); ++i) {
            auto& r = reviews_[i];
            if (!review_index_.emplace(r.id, i).second) {
                throw ValidationError("duplicate review id '" + r.id + "'");
            }
            auto it = entity_index_.find(r.entity_id);
            if (it == entity_index_.end()) {
                throw ReferenceError("review '" + r.id + "' references unknown entity", r.entity_id);
            }
            if (r.sentences.empty()) {
                r.sentences = split_sentences(r.text);
            }
            entities_[it->second].review_ids.push_back(r.id);
        }
    }

    const AreaForest& areas() const { return areas_; }
    const std::vector<Entity>& entities() const { return entities_; }
    const std::vector<Review>& reviews() const { return reviews_; }
    /// Corpus-level aspect list (sorted union of aspect rating names).
    std::vector<std::string> aspects() const { return {aspects_.begin(), aspects_.end()}; }

    const Entity& entity(const std::string& id) const
    {
        auto it = entity_index_.find(id);
        if (it == entity_index_.end()) {
            throw ReferenceError("unknown entity", id);
        }
        return entities_[it->second];
    }
    bool has_entity(const std::string& id) const { return entity_index_.count(id) != 0; }

    const Review& review(const std::string& id) const
    {
        auto it = review_index_.find(id);
        if (it == review_index_.end()) {
            throw ReferenceError("unknown review", id);
        }
        return reviews_[it->second];
    }

    /// Entities passing the area filter, in corpus order.
    std::vector<const Entity*> candidates(const std::string& query_area) const
    {
        std::vector<const Entity*> out;
        for (const auto& e : entities_) {
            if (areas_.matches(e.area_id, query_area)) {
                out.push_back(&e);
            }
        }
        return out;
    }

  private:
    static void check_rating(const std::string& id, const std::string& what, double r)
    {
        if (!(r >= 1.0 && r <= 5.0)) {
            throw ValidationError("entity '" + id + "': " + what + " outside [1,5]");
        }
    }

    AreaForest areas_;
    std::vector<Entity> entities_;
    std::vector<Review> reviews_;
    std::unordered_map<std::string, std::size_t> entity_index_;
    std::unordered_map<std::string, std::size_t> review_index_;
    std::set<std::string> aspects_;
};

// ---------------------------------------------------------------------------
// Relevance labels, keyed query -> entity. Shared by ground truth, labeling and metrics.

using LabelMap = std::map<std::string, std::map<std::string, bool>>;

inline std::size_t label_count(const LabelMap& labels)
{
    std::size_t n = 0;
    for (const auto& [q, m] : labels) {
        n += m.size();
    }
    return n;
}

inline LabelMap load_labels(const fs::path& path)
{
    LabelMap out;
    for_each_record(path, [&](const json& r, std::size_t) {
        out[r.at("query_id").get<std::string>()][r.at("entity_id").get<std::string>()] = r.at("relevant").get<bool>();
    });
    return out;
}

inline void save_labels(const fs::path& path, const LabelMap& labels)
{
    std::vector<json> recs;
    for (const auto& [q, m] : labels) {
        for (const auto& [e, rel] : m) {
            recs.push_back({{"query_id", q}, {"entity_id", e}, {"relevant", rel}});
        }
    }
    write_jsonl(path, recs);
}

// ---------------------------------------------------------------------------
// Record files

namespace files {
inline constexpr const char* areas = "areas.jsonl";
inline constexpr const char* entities = "entities.jsonl";
inline constexpr const char* reviews = "reviews.jsonl";
inline constexpr const char* queries = "queries.jsonl";
inline constexpr const char* truth = "truth.jsonl";
}  // namespace files

namespace detail {

inline void require_file(const fs::path& p)
{
    if (!fs::exists(p)) {
        throw Error("missing file " + p.string());
    }
}

}  // namespace detail

/// Reads areas/entities/reviews from dir and validates all references.
inline Corpus load_corpus(const fs::path& dir)
{
    const auto ap = dir / files::areas;
    const auto ep = dir / files::entities;
    const auto rp = dir / files::reviews;
    detail::require_file(ap);
    detail::require_file(ep);
    detail::require_file(rp);

    std::vector<Area> areas;
    for_each_record(ap, [&](const json& r, std::size_t) {
        Area a{r.at("id").get<std::string>(), r.value("name", ""), std::nullopt};
        if (r.contains("parent_id") && !r["parent_id"].is_null()) {
            a.parent_id = r["parent_id"].get<std::string>();
        }
        areas.push_back(std::move(a));
    });
    AreaForest forest(std::move(areas));

    std::vector<Entity> entities;
    for_each_record(ep, [&](const json& r, std::size_t line) {
        Entity e;
        e.id = r.at("id").get<std::string>();
        e.name = r.value("name", "");
        e.area_id = r.at("area_id").get<std::string>();
        e.description = r.value("description", "");
        e.overall_rating = r.at("overall_rating").get<double>();
        if (r.contains("aspect_ratings")) {
            e.aspect_ratings = r["aspect_ratings"].get<std::map<std::string, double>>();
        }
        if (!forest.contains(e.area_id)) {
            throw ReferenceError(ep.string() + ":" + std::to_string(line) + ": entity '" + e.id
                                     + "' references unknown area",
                                 e.area_id);
        }
        entities.push_back(std::move(e));
    });

    std::vector<Review> reviews;
    for_each_record(rp, [&](const json& r, std::size_t) {
        Review rv;
        rv.id = r.at("id").get<std::string>();
        rv.entity_id = r.at("entity_id").get<std::string>();
        rv.text = r.at("text").get<std::string>();
        reviews.push_back(std::move(rv));
    });
    return Corpus(std::move(forest), std::move(entities), std::move(reviews));
}

inline std::vector<Query> load_queries(const fs::path& path, const AreaForest& forest)
{
    detail::require_file(path);
    std::vector<Query> out;
    std::set<std::string> seen;
    for_each_record(path, [&](const json& r, std::size_t line) {
        Query q{r.at("id").get<std::string>(), r.at("text").get<std::string>(), r.at("area_id").get<std::string>(),
                r.value("frequency", 0.0)};
        if (trim(q.text).empty()) {
            throw ParseError(path.string(), line, "query '" + q.id + "' has empty text");
        }
        if (!forest.contains(q.area_id)) {
            throw ReferenceError("query '" + q.id + "' references unknown area", q.area_id);
        }
        if (!seen.insert(q.id).second) {
            throw ParseError(path.string(), line, "duplicate query id '" + q.id + "'");
        }
        out.push_back(std::move(q));
    });
    return out;
}

inline void save_corpus(const fs::path& dir, const Corpus& corpus)
{
    std::vector<json> recs;
    for (const auto& a : corpus.areas().areas()) {
        recs.push_back({{"id", a.id}, {"name", a.name}, {"parent_id", a.parent_id ? json(*a.parent_id) : json(nullptr)}});
    }
    write_jsonl(dir / files::areas, recs);
    recs.clear();
    for (const auto& e : corpus.entities()) {
        recs.push_back({{"id", e.id},
                        {"name", e.name},
                        {"area_id", e.area_id},
                        {"description", e.description},
                        {"overall_rating", e.overall_rating},
                        {"aspect_ratings", e.aspect_ratings}});
    }
    write_jsonl(dir / files::entities, recs);
    recs.clear();
    for (const auto& r : corpus.reviews()) {
        recs.push_back({{"id", r.id}, {"entity_id", r.entity_id}, {"text", r.text}});
    }
    write_jsonl(dir / files::reviews, recs);
}

inline void save_queries(const fs::path& path, const std::vector<Query>& queries)
{
    std::vector<json> recs;
    for (const auto& q : queries) {
        recs.push_back({{"id", q.id}, {"text", q.text}, {"area_id", q.area_id}, {"frequency", q.frequency}});
    }
    write_jsonl(path, recs);
}

}  // namespace subj
