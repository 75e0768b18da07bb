#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "embedding.hpp"
#include "schema.hpp"

namespace subj {

struct RankedEntry {
    std::string entity_id;
    double score = 0.0;
};

struct RankedList {
    std::string query_id;
    std::string ranker_name;
    std::vector<RankedEntry> entries;

    std::vector<std::string> ids() const
    {
        std::vector<std::string> out;
        for (const auto& e : entries) {
            out.push_back(e.entity_id);
        }
        return out;
    }
};

/// Scores every candidate of a query. Candidates have already passed the area filter.
class Ranker {
  public:
    virtual ~Ranker() = default;
    virtual std::string name() const = 0;
    virtual std::string kind() const = 0;
    virtual std::vector<double> score(const Query& query, std::span<const Entity* const> candidates) const = 0;
};

/// Score-descending, entity-id-ascending order.
inline void sort_ranked(std::vector<RankedEntry>& entries)
{
    std::sort(entries.begin(), entries.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.entity_id < b.entity_id;
    });
}

/// Full ordering of all area candidates.
inline RankedList rank_all(const Ranker& ranker, const Query& query, const Corpus& corpus)
{
    auto cands = corpus.candidates(query.area_id);
    auto scores = ranker.score(query, cands);
    RankedList out{query.id, ranker.name(), {}};
    out.entries.reserve(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
        out.entries.push_back({cands[i]->id, scores[i]});
    }
    sort_ranked(out.entries);
    return out;
}

inline RankedList rank(const Ranker& ranker, const Query& query, const Corpus& corpus, int k)
{
    if (k < 1) {
        throw ValidationError("k must be >= 1");
    }
    auto out = rank_all(ranker, query, corpus);
    if (out.entries.size() > static_cast<std::size_t>(k)) {
        out.entries.resize(static_cast<std::size_t>(k));
    }
    return out;
}

// ---------------------------------------------------------------------------
// BM25

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

inline double bm25_idf(std::size_t n_docs, std::size_t df)
{
    const double n = static_cast<double>(n_docs);
    const double d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

inline double bm25_term(double idf, double tf, double doc_len, double avgdl, const Bm25Params& p)
{
    double norm_len = avgdl > 0.0 ? doc_len / avgdl : 0.0;
    return idf * tf * (p.k1 + 1.0) / (tf + p.k1 * (1.0 - p.b + p.b * norm_len));
}

/// Inverted index over per-entity documents (all reviews of an entity). Corpus
/// statistics are computed without the area filter.
class Bm25Index {
  public:
    struct Posting {
        std::string entity_id;
        int tf = 0;
    };

    Bm25Index() = default;

    /// docs: entity id -> token list.
    static Bm25Index build(const std::vector<std::pair<std::string, std::vector<std::string>>>& docs)
    {
        Bm25Index idx;
        idx.n_docs_ = docs.size();
        double total = 0.0;
        for (const auto& [id, toks] : docs) {
            idx.doc_len_[id] = static_cast<double>(toks.size());
            total += static_cast<double>(toks.size());
            std::map<std::string, int> tf;
            for (const auto& t : toks) {
                ++tf[t];
            }
            for (const auto& [t, c] : tf) {
                idx.postings_[t].push_back({id, c});
            }
        }
        idx.avgdl_ = idx.n_docs_ ? total / static_cast<double>(idx.n_docs_) : 0.0;
        for (auto& [t, ps] : idx.postings_) {
            std::sort(ps.begin(), ps.end(), [](const Posting& a, const Posting& b) { return a.entity_id < b.entity_id; });
        }
        return idx;
    }

    static Bm25Index build(const Corpus& corpus)
    {
        std::vector<std::pair<std::string, std::vector<std::string>>> docs;
        for (const auto& e : corpus.entities()) {
            std::vector<std::string> toks;
            for (const auto& rid : e.review_ids) {
                for (auto& t : token_strings(corpus.review(rid).text)) {
                    toks.push_back(std::move(t));
                }
            }
            docs.emplace_back(e.id, std::move(toks));
        }
        return build(docs);
    }

    std::size_t doc_count() const { return n_docs_; }
    double avgdl() const { return avgdl_; }
    std::size_t df(const std::string& term) const
    {
        auto it = postings_.find(term);
        return it == postings_.end() ? 0 : it->second.size();
    }
    double doc_len(const std::string& entity) const
    {
        auto it = doc_len_.find(entity);
        return it == doc_len_.end() ? 0.0 : it->second;
    }

    /// Scores for every entity containing at least one query term. Query terms are a set.
    std::unordered_map<std::string, double> score_all(const std::vector<std::string>& terms, const Bm25Params& p) const
    {
        std::unordered_map<std::string, double> out;
        std::set<std::string> uniq(terms.begin(), terms.end());
        for (const auto& t : uniq) {
            auto it = postings_.find(t);
            if (it == postings_.end()) {
                continue;
            }
            double idf = bm25_idf(n_docs_, it->second.size());
            for (const auto& post : it->second) {
                out[post.entity_id] += bm25_term(idf, post.tf, doc_len(post.entity_id), avgdl_, p);
            }
        }
        return out;
    }

    double score(const std::vector<std::string>& terms, const std::string& entity, const Bm25Params& p) const
    {
        auto all = score_all(terms, p);
        auto it = all.find(entity);
        return it == all.end() ? 0.0 : it->second;
    }

    void save(const fs::path& path) const
    {
        std::vector<json> recs;
        json lens = json::object();
        for (const auto& [e, l] : doc_len_) {
            lens[e] = l;
        }
        recs.push_back({{"stats", {{"N", n_docs_}, {"avgdl", avgdl_}, {"doc_lengths", lens}}}});
        std::vector<std::string> terms;
        for (const auto& [t, ps] : postings_) {
            terms.push_back(t);
        }
        std::sort(terms.begin(), terms.end());
        for (const auto& t : terms) {
            json ps = json::array();
            for (const auto& p : postings_.at(t)) {
                ps.push_back({p.entity_id, p.tf});
            }
            recs.push_back({{"term", t}, {"df", postings_.at(t).size()}, {"postings", ps}});
        }
        write_jsonl(path, recs);
    }

    static Bm25Index load(const fs::path& path)
    {
        Bm25Index idx;
        bool have_stats = false;
        for_each_record(path, [&](const json& r, std::size_t line) {
            if (r.contains("stats")) {
                const auto& s = r["stats"];
                idx.n_docs_ = s.at("N").get<std::size_t>();
                idx.avgdl_ = s.at("avgdl").get<double>();
                for (const auto& [e, l] : s.at("doc_lengths").items()) {
                    idx.doc_len_[e] = l.get<double>();
                }
                have_stats = true;
                return;
            }
            auto& ps = idx.postings_[r.at("term").get<std::string>()];
            for (const auto& p : r.at("postings")) {
                ps.push_back({p.at(0).get<std::string>(), p.at(1).get<int>()});
            }
            if (ps.size() != r.at("df").get<std::size_t>()) {
                throw ParseError(path.string(), line, "df does not match posting count");
            }
        });
        if (!have_stats) {
            throw Error(path.string() + ": missing stats header record");
        }
        return idx;
    }

  private:
    std::size_t n_docs_ = 0;
    double avgdl_ = 0.0;
    std::unordered_map<std::string, double> doc_len_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

/// Direct evaluation of the BM25 sum for one document (no index).
inline double bm25_score(const std::vector<std::string>& query_terms, const std::vector<std::string>& document,
                         std::size_t n_docs, const std::function<std::size_t(const std::string&)>& df, double avgdl,
                         const Bm25Params& p = {})
{
    std::set<std::string> uniq(query_terms.begin(), query_terms.end());
    double s = 0.0;
    for (const auto& t : uniq) {
        auto tf = static_cast<double>(std::count(document.begin(), document.end(), t));
        if (tf == 0.0) {
            continue;
        }
        s += bm25_term(bm25_idf(n_docs, df(t)), tf, static_cast<double>(document.size()), avgdl, p);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Base rankers

class Bm25Ranker final : public Ranker {
  public:
    Bm25Ranker(std::string name, std::shared_ptr<const Bm25Index> index, Bm25Params params = {})
        : name_(std::move(name)), index_(std::move(index)), params_(params)
    {}
    std::string name() const override { return name_; }
    std::string kind() const override { return "bm25"; }

    std::vector<double> score(const Query& q, std::span<const Entity* const> cands) const override
    {
        auto all = index_->score_all(token_strings(q.text), params_);
        std::vector<double> out;
        out.reserve(cands.size());
        for (const auto* e : cands) {
            auto it = all.find(e->id);
            out.push_back(it == all.end() ? 0.0 : it->second);
        }
        return out;
    }

  private:
    std::string name_;
    std::shared_ptr<const Bm25Index> index_;
    Bm25Params params_;
};

/// Mean of the top-m cosines between the query and the entity's own sentences.
inline double dense_score(const Vector& query, const std::string& entity_id, const SentenceStore& store, int m)
{
    const auto& rows = store.rows_of(entity_id);
    if (rows.empty()) {
        return 0.0;
    }
    double qn = norm(query);
    std::vector<double> sims;
    sims.reserve(rows.size());
    for (auto r : rows) {
        sims.push_back(store.similarity(r, query, qn));
    }
    auto top = std::min<std::size_t>(static_cast<std::size_t>(std::max(m, 1)), sims.size());
    std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(top), sims.end(), std::greater<>());
    double s = 0.0;
    for (std::size_t i = 0; i < top; ++i) {
        s += sims[i];
    }
    return s / static_cast<double>(top);
}

class DenseRanker final : public Ranker {
  public:
    DenseRanker(std::string name, std::shared_ptr<const EmbeddingProvider> provider,
                std::shared_ptr<const SentenceStore> store, int m = 3)
        : name_(std::move(name)), provider_(std::move(provider)), store_(std::move(store)), m_(m)
    {
        if (m_ < 1) {
            throw ValidationError("dense ranker: m must be >= 1");
        }
    }
    std::string name() const override { return name_; }
    std::string kind() const override { return "dense"; }

    std::vector<double> score(const Query& q, std::span<const Entity* const> cands) const override
    {
        auto v = provider_->embed(q.text);
        std::vector<double> out;
        out.reserve(cands.size());
        for (const auto* e : cands) {
            out.push_back(dense_score(v, e->id, *store_, m_));
        }
        return out;
    }

    const SentenceStore& store() const { return *store_; }
    const EmbeddingProvider& provider() const { return *provider_; }

  private:
    std::string name_;
    std::shared_ptr<const EmbeddingProvider> provider_;
    std::shared_ptr<const SentenceStore> store_;
    int m_;
};

/// Convex combination of aspect ratings weighted by max(0, cosine(query, aspect phrase)).
inline double rating_score(const Vector& query, const Entity& e, const std::vector<std::string>& aspects,
                           const std::vector<Vector>& aspect_vectors)
{
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < aspects.size(); ++i) {
        auto it = e.aspect_ratings.find(aspects[i]);
        if (it == e.aspect_ratings.end()) {
            continue;
        }
        double w = std::max(0.0, cosine(query, aspect_vectors[i]));
        num += w * it->second;
        den += w;
    }
    return den > 0.0 ? num / den : e.overall_rating;
}

class RatingRanker final : public Ranker {
  public:
    /// aspect_phrases: aspect name -> text embedded for it (defaults to the name).
    RatingRanker(std::string name, std::shared_ptr<const EmbeddingProvider> provider, std::vector<std::string> aspects,
                 const std::map<std::string, std::string>& aspect_phrases = {})
        : name_(std::move(name)), provider_(std::move(provider)), aspects_(std::move(aspects))
    {
        for (const auto& a : aspects_) {
            auto it = aspect_phrases.find(a);
            std::string phrase = it != aspect_phrases.end() ? it->second : a;
            std::replace(phrase.begin(), phrase.end(), '_', ' ');
            vectors_.push_back(provider_->embed(phrase));
        }
    }
    std::string name() const override { return name_; }
    std::string kind() const override { return "rating"; }

    std::vector<double> score(const Query& q, std::span<const Entity* const> cands) const override
    {
        auto v = provider_->embed(q.text);
        std::vector<double> out;
        out.reserve(cands.size());
        for (const auto* e : cands) {
            out.push_back(rating_score(v, *e, aspects_, vectors_));
        }
        return out;
    }

  private:
    std::string name_;
    std::shared_ptr<const EmbeddingProvider> provider_;
    std::vector<std::string> aspects_;
    std::vector<Vector> vectors_;
};

struct OpineDbParams {
    double theta = 0.60;
    double k0 = 3.0;
};

class OpineDbRanker final : public Ranker {
  public:
    OpineDbRanker(std::string name, std::shared_ptr<const EmbeddingProvider> provider,
                  std::shared_ptr<const Schema> schema, std::shared_ptr<const HistogramStore> histograms,
                  OpineDbParams params = {})
        : name_(std::move(name)), provider_(std::move(provider)), schema_(std::move(schema)),
          histograms_(std::move(histograms)), params_(params)
    {}
    std::string name() const override { return name_; }
    std::string kind() const override { return "opinedb"; }

    QueryInterpretation interpret(std::string_view text) const
    {
        return interpret_query(text, *schema_, *provider_, params_.theta);
    }

    std::vector<double> score(const Query& q, std::span<const Entity* const> cands) const override
    {
        auto interp = interpret(q.text);
        std::vector<double> out(cands.size(), 0.0);
        if (interp.matches.empty()) {
            return out;
        }
        for (std::size_t i = 0; i < cands.size(); ++i) {
            out[i] = opinedb_score(cands[i]->id, interp, *histograms_, params_.k0);
        }
        return out;
    }

  private:
    std::string name_;
    std::shared_ptr<const EmbeddingProvider> provider_;
    std::shared_ptr<const Schema> schema_;
    std::shared_ptr<const HistogramStore> histograms_;
    OpineDbParams params_;
};

/// Baseline: a seeded pseudo-random score per (query, entity).
class RandomRanker final : public Ranker {
  public:
    RandomRanker(std::string name, std::uint64_t seed) : name_(std::move(name)), seed_(seed) {}
    std::string name() const override { return name_; }
    std::string kind() const override { return "random"; }

    std::vector<double> score(const Query& q, std::span<const Entity* const> cands) const override
    {
        std::vector<double> out;
        out.reserve(cands.size());
        for (const auto* e : cands) {
            out.push_back(hashed_uniform(seed_, q.id + '\x1f' + e->id));
        }
        return out;
    }

  private:
    std::string name_;
    std::uint64_t seed_;
};

}  // namespace subj
