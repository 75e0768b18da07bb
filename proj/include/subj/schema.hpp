#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "embedding.hpp"
#include "textproc.hpp"

namespace subj {

struct SubjectiveAttribute {
    std::string name;
    std::vector<std::string> linguistic_domain;
    Vector anchor;
    std::vector<Vector> phrase_vectors;
};

/// Subjective attributes and their linguistic domains. Editable data, not code.
class Schema {
  public:
    Schema() = default;

    /// records: (name, phrases) pairs in file order.
    static Schema build(const std::vector<std::pair<std::string, std::vector<std::string>>>& records,
                        const EmbeddingProvider& provider)
    {
        Schema s;
        for (const auto& [name, phrases] : records) {
            if (phrases.empty()) {
                throw ValidationError("attribute '" + name + "' has an empty linguistic domain");
            }
            if (s.index_.count(name)) {
                throw ValidationError("duplicate attribute '" + name + "'");
            }
            SubjectiveAttribute a{name, phrases, Vector(provider.dimension(), 0.0), {}};
            for (const auto& p : phrases) {
                a.phrase_vectors.push_back(provider.embed(p));
                for (std::size_t i = 0; i < a.anchor.size(); ++i) {
                    a.anchor[i] += a.phrase_vectors.back()[i];
                }
            }
            normalize(a.anchor);
            s.index_[name] = s.attrs_.size();
            s.attrs_.push_back(std::move(a));
        }
        return s;
    }

    static std::vector<std::pair<std::string, std::vector<std::string>>> read_records(const fs::path& path)
    {
        std::vector<std::pair<std::string, std::vector<std::string>>> out;
        for_each_record(path, [&](const json& r, std::size_t) {
            out.emplace_back(r.at("name").get<std::string>(), r.at("phrases").get<std::vector<std::string>>());
        });
        return out;
    }

    static void write_records(const fs::path& path,
                              const std::vector<std::pair<std::string, std::vector<std::string>>>& recs)
    {
        std::vector<json> out;
        for (const auto& [n, p] : recs) {
            out.push_back({{"name", n}, {"phrases", p}});
        }
        write_jsonl(path, out);
    }

    static Schema load(const fs::path& path, const EmbeddingProvider& provider)
    {
        return build(read_records(path), provider);
    }

    const std::vector<SubjectiveAttribute>& attributes() const { return attrs_; }
    std::size_t size() const { return attrs_.size(); }
    const SubjectiveAttribute& at(const std::string& name) const
    {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw NotFoundError("unknown attribute '" + name + "'");
        }
        return attrs_[it->second];
    }

  private:
    std::vector<SubjectiveAttribute> attrs_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline Schema build_schema(const fs::path& attribute_file, const EmbeddingProvider& provider)
{
    return Schema::load(attribute_file, provider);
}

// ---------------------------------------------------------------------------

/// Modifier phrase -> intensity bucket in 1..B. Unknown modifiers fall back to
/// the bucket of the most similar entry under the provider.
class IntensityLexicon {
  public:
    IntensityLexicon(std::map<std::string, int> entries, int bucket_count, const EmbeddingProvider& provider)
        : entries_(std::move(entries)), buckets_(bucket_count)
    {
        if (buckets_ < 2) {
            throw ValidationError("bucket count must be >= 2");
        }
        if (entries_.empty()) {
            throw ValidationError("intensity lexicon is empty");
        }
        for (const auto& [m, b] : entries_) {
            if (b < 1 || b > buckets_) {
                throw ValidationError("lexicon entry '" + m + "' bucket " + std::to_string(b) + " outside 1.."
                                      + std::to_string(buckets_));
            }
            keys_.push_back(m);
            vectors_.push_back(provider.embed(m));
        }
    }

    static std::map<std::string, int> read_entries(const fs::path& path)
    {
        std::map<std::string, int> out;
        for_each_record(path, [&](const json& r, std::size_t) {
            out[r.at("modifier").get<std::string>()] = r.at("bucket").get<int>();
        });
        return out;
    }

    static void write_entries(const fs::path& path, const std::map<std::string, int>& entries)
    {
        std::vector<json> out;
        for (const auto& [m, b] : entries) {
            out.push_back({{"modifier", m}, {"bucket", b}});
        }
        write_jsonl(path, out);
    }

    int bucket_count() const { return buckets_; }
    const std::map<std::string, int>& entries() const { return entries_; }

    int bucket(const std::string& modifier, const EmbeddingProvider& provider) const
    {
        auto it = entries_.find(modifier);
        if (it != entries_.end()) {
            return it->second;
        }
        auto v = provider.embed(modifier);
        std::size_t best = 0;
        double best_sim = -2.0;
        for (std::size_t i = 0; i < keys_.size(); ++i) {
            double s = cosine(v, vectors_[i]);
            if (s > best_sim) {
                best_sim = s;
                best = i;
            }
        }
        return entries_.at(keys_[best]);
    }

  private:
    std::map<std::string, int> entries_;
    int buckets_;
    std::vector<std::string> keys_;
    std::vector<Vector> vectors_;
};

// ---------------------------------------------------------------------------

struct AttributeMatch {
    std::string attribute;
    double weight = 0.0;
    double similarity = 0.0;
};

struct QueryInterpretation {
    std::vector<AttributeMatch> matches;
    bool covered = false;
    double best_similarity = 0.0;
};

/// similarity(query, attribute) is the best cosine against any domain phrase.
/// Attributes clearing theta share weight in proportion to similarity; when
/// none clears it, the single best attribute is carried with covered=false.
inline QueryInterpretation interpret_query(std::string_view query_text, const Schema& schema,
                                           const EmbeddingProvider& provider, double theta)
{
    QueryInterpretation out;
    if (schema.size() == 0) {
        return out;
    }
    auto q = provider.embed(query_text);
    std::vector<AttributeMatch> sims;
    for (const auto& a : schema.attributes()) {
        double best = -1.0;
        for (const auto& pv : a.phrase_vectors) {
            best = std::max(best, cosine(q, pv));
        }
        sims.push_back({a.name, 0.0, best});
    }
    std::stable_sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) { return a.similarity > b.similarity; });
    out.best_similarity = sims.front().similarity;
    double total = 0.0;
    for (const auto& s : sims) {
        if (s.similarity >= theta) {
            out.matches.push_back(s);
            total += s.similarity;
        }
    }
    out.covered = !out.matches.empty();
    if (!out.covered) {
        out.matches.push_back(sims.front());
        total = 0.0;
    }
    for (auto& m : out.matches) {
        m.weight = total > 0.0 ? m.similarity / total : 1.0 / static_cast<double>(out.matches.size());
    }
    return out;
}

// ---------------------------------------------------------------------------

struct AttributeHistogram {
    std::string entity_id;
    std::string attribute;
    std::vector<int> counts;

    int support() const
    {
        int s = 0;
        for (int c : counts) {
            s += c;
        }
        return s;
    }
};

/// (entity, attribute) -> bucket counts. Missing pairs read as all-zero.
class HistogramStore {
  public:
    explicit HistogramStore(int bucket_count = 5) : buckets_(bucket_count) {}

    int bucket_count() const { return buckets_; }
    bool empty() const { return data_.empty(); }

    void add(const std::string& entity, const std::string& attribute, int bucket)
    {
        auto& c = data_[entity][attribute];
        if (c.empty()) {
            c.assign(static_cast<std::size_t>(buckets_), 0);
        }
        c[static_cast<std::size_t>(bucket - 1)] += 1;
    }

    void set(const std::string& entity, const std::string& attribute, std::vector<int> counts)
    {
        if (counts.size() != static_cast<std::size_t>(buckets_)) {
            throw ValidationError("histogram for '" + entity + "' has wrong bucket count");
        }
        data_[entity][attribute] = std::move(counts);
    }

    AttributeHistogram get(const std::string& entity, const std::string& attribute) const
    {
        AttributeHistogram h{entity, attribute, std::vector<int>(static_cast<std::size_t>(buckets_), 0)};
        auto e = data_.find(entity);
        if (e != data_.end()) {
            auto a = e->second.find(attribute);
            if (a != e->second.end()) {
                h.counts = a->second;
            }
        }
        return h;
    }

    std::vector<AttributeHistogram> all() const
    {
        std::vector<AttributeHistogram> out;
        for (const auto& [e, m] : data_) {
            for (const auto& [a, c] : m) {
                out.push_back({e, a, c});
            }
        }
        return out;
    }

    void save(const fs::path& path) const
    {
        std::vector<json> recs;
        for (const auto& h : all()) {
            recs.push_back({{"entity_id", h.entity_id}, {"attribute", h.attribute}, {"counts", h.counts}});
        }
        write_jsonl(path, recs);
    }

    static HistogramStore load(const fs::path& path, int bucket_count)
    {
        HistogramStore s(bucket_count);
        for_each_record(path, [&](const json& r, std::size_t) {
            s.set(r.at("entity_id").get<std::string>(), r.at("attribute").get<std::string>(),
                  r.at("counts").get<std::vector<int>>());
        });
        return s;
    }

  private:
    int buckets_;
    std::map<std::string, std::map<std::string, std::vector<int>>> data_;
};

/// Assigns each extracted opinion to the attribute whose anchor is closest
/// (dropping those under theta_assign) and counts it in its intensity bucket.
inline HistogramStore build_histograms(const Corpus& corpus, const Schema& schema, const IntensityLexicon& lexicon,
                                       const RuleSet& rules, const EmbeddingProvider& provider,
                                       double theta_assign = 0.5)
{
    HistogramStore store(lexicon.bucket_count());
    std::unordered_map<std::string, std::pair<int, double>> assign_cache;  // phrase -> (attr index, sim)
    std::unordered_map<std::string, int> bucket_cache;
    for (const auto& review : corpus.reviews()) {
        for (const auto& op : extract_opinions(review, rules)) {
            auto phrase = op.phrase();
            auto it = assign_cache.find(phrase);
            if (it == assign_cache.end()) {
                auto v = provider.embed(phrase);
                int best = -1;
                double best_sim = -2.0;
                for (std::size_t i = 0; i < schema.size(); ++i) {
                    double s = cosine(v, schema.attributes()[i].anchor);
                    if (s > best_sim) {
                        best_sim = s;
                        best = static_cast<int>(i);
                    }
                }
                it = assign_cache.emplace(phrase, std::pair{best, best_sim}).first;
            }
            auto [attr, sim] = it->second;
            if (attr < 0 || sim < theta_assign) {
                continue;
            }
            auto bit = bucket_cache.find(op.modifier);
            if (bit == bucket_cache.end()) {
                bit = bucket_cache.emplace(op.modifier, lexicon.bucket(op.modifier, provider)).first;
            }
            store.add(review.entity_id, schema.attributes()[static_cast<std::size_t>(attr)].name, bit->second);
        }
    }
    return store;
}

/// Normalized mean bucket in [0,1]: bucket l contributes (l-1)/(B-1).
inline double satisfaction(const std::vector<int>& counts)
{
    const auto b = counts.size();
    double num = 0.0;
    int support = 0;
    for (std::size_t l = 0; l < b; ++l) {
        num += counts[l] * static_cast<double>(l) / static_cast<double>(b - 1);
        support += counts[l];
    }
    return support == 0 ? 0.0 : num / support;
}

/// Sum over matched attributes of weight * satisfaction * support/(support+k0).
inline double opinedb_score(const std::string& entity_id, const QueryInterpretation& interp,
                            const HistogramStore& store, double k0 = 3.0)
{
    if (interp.matches.empty()) {
        throw ValidationError("opinedb_score: empty interpretation");
    }
    double score = 0.0;
    for (const auto& m : interp.matches) {
        auto h = store.get(entity_id, m.attribute);
        int support = h.support();
        if (support == 0) {
            continue;
        }
        double confidence = support / (support + k0);
        score += m.weight * satisfaction(h.counts) * confidence;
    }
    return score;
}

}  // namespace subj
