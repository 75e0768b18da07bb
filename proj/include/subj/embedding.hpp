#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"
#include "textproc.hpp"

namespace subj {

using Vector = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Scales v to unit L2 norm; the zero vector stays zero.
inline void normalize(Vector& v)
{
    double n = norm(v);
    if (n > 0.0) {
        for (auto& x : v) {
            x /= n;
        }
    }
}

/// dot(a,b)/(|a||b|), 0 when either side is the zero vector.
inline double cosine(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) {
        throw ValidationError("cosine: dimension mismatch (" + std::to_string(a.size()) + " vs "
                              + std::to_string(b.size()) + ")");
    }
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) {
        return 0.0;
    }
    return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------

/// Maps text to a fixed-dimension vector. Outputs are unit norm or exactly zero.
class EmbeddingProvider {
  public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string name() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual Vector embed(std::string_view text) const = 0;
};

/// Character 2- and 3-grams of each token (with boundary markers), feature-hashed
/// into `dimension` buckets and L2-normalized. Needs no external data.
class HashedNgramProvider final : public EmbeddingProvider {
  public:
    explicit HashedNgramProvider(std::size_t dimension = 1024) : dim_(dimension)
    {
        if (dim_ == 0) {
            throw ValidationError("embedding dimension must be > 0");
        }
    }

    std::string name() const override { return "hashed-ngram"; }
    std::size_t dimension() const override { return dim_; }

    Vector embed(std::string_view text) const override
    {
        Vector v(dim_, 0.0);
        for (const auto& tok : tokenize(text)) {
            auto cps = utf8::code_points(tok.surface);
            cps.insert(cps.begin(), "<");
            cps.push_back(">");
            for (std::size_t n = 2; n <= 3; ++n) {
                for (std::size_t i = 0; i + n <= cps.size(); ++i) {
                    std::string gram;
                    for (std::size_t k = 0; k < n; ++k) {
                        gram += cps[i + k];
                    }
                    v[fnv1a(gram) % dim_] += 1.0;
                }
            }
        }
        normalize(v);
        return v;
    }

  private:
    std::size_t dim_;
};

/// Mean-pools pretrained word vectors ("word v1 ... vD" per line, optional "count dim" header).
class WordVectorProvider final : public EmbeddingProvider {
  public:
    static WordVectorProvider from_file(const fs::path& path)
    {
        std::ifstream in(path);
        if (!in) {
            throw Error("cannot open " + path.string());
        }
        WordVectorProvider p;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::istringstream ss(line);
            std::string word;
            if (!(ss >> word)) {
                continue;
            }
            std::vector<double> vals;
            double x;
            while (ss >> x) {
                vals.push_back(x);
            }
            if (lineno == 1 && vals.size() == 1 && word.find_first_not_of("0123456789") == std::string::npos) {
                continue;  // "count dim" header
            }
            if (p.dim_ == 0) {
                p.dim_ = vals.size();
            }
            if (vals.empty() || vals.size() != p.dim_) {
                throw ParseError(path.string(), lineno, "expected " + std::to_string(p.dim_) + " components");
            }
            p.table_[word] = std::move(vals);
        }
        if (p.dim_ == 0) {
            throw ParseError(path.string(), lineno, "no vectors");
        }
        return p;
    }

    std::string name() const override { return "word-vectors"; }
    std::size_t dimension() const override { return dim_; }

    Vector embed(std::string_view text) const override
    {
        Vector v(dim_, 0.0);
        for (const auto& tok : tokenize(text)) {
            auto it = table_.find(tok.surface);
            if (it == table_.end()) {
                continue;
            }
            for (std::size_t i = 0; i < dim_; ++i) {
                v[i] += it->second[i];
            }
        }
        normalize(v);
        return v;
    }

    /// Number of tokens of `text` found in the table; 0 means embed() returns the zero vector.
    std::size_t known_tokens(std::string_view text) const
    {
        std::size_t n = 0;
        for (const auto& tok : tokenize(text)) {
            n += table_.count(tok.surface);
        }
        return n;
    }

  private:
    WordVectorProvider() = default;
    std::size_t dim_ = 0;
    std::unordered_map<std::string, std::vector<double>> table_;
};

inline Vector embed(const EmbeddingProvider& provider, std::string_view text) { return provider.embed(text); }

/// Provider from a config record: {"kind": "hashed-ngram", "dimension": N} or
/// {"kind": "word-vectors", "path": "..."} (path relative to base).
inline std::shared_ptr<const EmbeddingProvider> make_provider(const json& cfg, const fs::path& base = {})
{
    auto kind = cfg.value("kind", std::string("hashed-ngram"));
    if (kind == "hashed-ngram") {
        return std::make_shared<HashedNgramProvider>(cfg.value("dimension", std::size_t{1024}));
    }
    if (kind == "word-vectors") {
        fs::path p = cfg.at("path").get<std::string>();
        if (p.is_relative()) {
            p = base / p;
        }
        return std::make_shared<WordVectorProvider>(WordVectorProvider::from_file(p));
    }
    throw ValidationError("unknown embedding provider '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Sentence store

struct SentenceRef {
    std::string review_id;
    int sentence_index = 0;
    std::string entity_id;
};

struct SentenceHit {
    std::string review_id;
    int sentence_index = 0;
    double similarity = 0.0;
};

/// Row-major float32 sentence vectors plus their ids. Immutable once built.
class SentenceStore {
  public:
    static constexpr char magic[8] = {'S', 'U', 'B', 'J', 'S', 'V', 'E', 'C'};
    static constexpr std::uint32_t version = 1;

    SentenceStore() = default;
    SentenceStore(std::size_t dim, std::vector<float> data, std::vector<SentenceRef> refs)
        : dim_(dim), data_(std::move(data)), refs_(std::move(refs))
    {
        if (dim_ == 0 || data_.size() != dim_ * refs_.size()) {
            throw ValidationError("sentence store: data size does not match dimension x rows");
        }
        finish();
    }

    static SentenceStore build(const Corpus& corpus, const EmbeddingProvider& provider)
    {
        std::vector<float> data;
        std::vector<SentenceRef> refs;
        for (const auto& r : corpus.reviews()) {
            for (std::size_t s = 0; s < r.sentences.size(); ++s) {
                auto v = provider.embed(r.sentences[s]);
                for (double x : v) {
                    data.push_back(static_cast<float>(x));
                }
                refs.push_back({r.id, static_cast<int>(s), r.entity_id});
            }
        }
        return SentenceStore(provider.dimension(), std::move(data), std::move(refs));
    }

    std::size_t dimension() const { return dim_; }
    std::size_t size() const { return refs_.size(); }
    const SentenceRef& ref(std::size_t row) const { return refs_[row]; }
    const std::vector<SentenceRef>& refs() const { return refs_; }
    std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

    /// Row indices belonging to an entity (empty if none).
    const std::vector<std::size_t>& rows_of(const std::string& entity_id) const
    {
        static const std::vector<std::size_t> none;
        auto it = by_entity_.find(entity_id);
        return it == by_entity_.end() ? none : it->second;
    }

    double similarity(std::size_t row_index, std::span<const double> q, double q_norm) const
    {
        auto r = row(row_index);
        double d = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) {
            d += q[i] * static_cast<double>(r[i]);
        }
        double n = norms_[row_index];
        if (n == 0.0 || q_norm == 0.0) {
            return 0.0;
        }
        return std::clamp(d / (n * q_norm), -1.0, 1.0);
    }

    /// Multiplies every stored vector by c (used to check scale invariance).
    SentenceStore scaled(float c) const
    {
        auto d = data_;
        for (auto& x : d) {
            x *= c;
        }
        return SentenceStore(dim_, std::move(d), refs_);
    }

    void save(const fs::path& bin_path, const fs::path& ids_path) const
    {
        std::string buf(magic, sizeof(magic));
        auto put32 = [&](std::uint32_t v) {
            for (int k = 0; k < 4; ++k) {
                buf.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
            }
        };
        put32(version);
        put32(static_cast<std::uint32_t>(dim_));
        for (float f : data_) {
            put32(std::bit_cast<std::uint32_t>(f));
        }
        write_file(bin_path, buf);
        std::vector<json> recs;
        for (const auto& r : refs_) {
            recs.push_back({{"review_id", r.review_id}, {"sentence_index", r.sentence_index}, {"entity_id", r.entity_id}});
        }
        write_jsonl(ids_path, recs);
    }

    static SentenceStore load(const fs::path& bin_path, const fs::path& ids_path)
    {
        auto buf = read_file(bin_path);
        if (buf.size() < 16 || std::memcmp(buf.data(), magic, sizeof(magic)) != 0) {
            throw Error(bin_path.string() + ": not a sentence store");
        }
        auto get32 = [&](std::size_t off) {
            std::uint32_t v = 0;
            for (int k = 0; k < 4; ++k) {
                v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[off + k])) << (8 * k);
            }
            return v;
        };
        if (get32(8) != version) {
            throw Error(bin_path.string() + ": unsupported store version " + std::to_string(get32(8)));
        }
        std::size_t dim = get32(12);
        if (dim == 0 || (buf.size() - 16) % (4 * dim) != 0) {
            throw Error(bin_path.string() + ": truncated store");
        }
        std::vector<float> data((buf.size() - 16) / 4);
        for (std::size_t i = 0; i < data.size(); ++i) {
            data[i] = std::bit_cast<float>(get32(16 + 4 * i));
        }
        std::vector<SentenceRef> refs;
        for_each_record(ids_path, [&](const json& r, std::size_t) {
            refs.push_back({r.at("review_id").get<std::string>(), r.at("sentence_index").get<int>(),
                            r.value("entity_id", std::string())});
        });
        return SentenceStore(dim, std::move(data), std::move(refs));
    }

  private:
    void finish()
    {
        norms_.resize(refs_.size());
        for (std::size_t i = 0; i < refs_.size(); ++i) {
            double s = 0.0;
            for (float x : row(i)) {
                s += static_cast<double>(x) * x;
            }
            norms_[i] = std::sqrt(s);
            by_entity_[refs_[i].entity_id].push_back(i);
        }
    }

    std::size_t dim_ = 0;
    std::vector<float> data_;
    std::vector<SentenceRef> refs_;
    std::vector<double> norms_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_entity_;
};

/// Exhaustive top-m by cosine; ties by (review_id, sentence_index) ascending.
inline std::vector<SentenceHit> nearest_sentences(const Vector& query, const SentenceStore& store, int m)
{
    if (m < 1) {
        throw ValidationError("nearest_sentences: m must be >= 1");
    }
    if (query.size() != store.dimension()) {
        throw ValidationError("nearest_sentences: dimension mismatch");
    }
    double qn = norm(query);
    std::vector<SentenceHit> hits;
    hits.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        hits.push_back({store.ref(i).review_id, store.ref(i).sentence_index, store.similarity(i, query, qn)});
    }
    auto better = [](const SentenceHit& a, const SentenceHit& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        if (a.review_id != b.review_id) return a.review_id < b.review_id;
        return a.sentence_index < b.sentence_index;
    };
    auto top = std::min<std::size_t>(static_cast<std::size_t>(m), hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(top), hits.end(), better);
    hits.resize(top);
    return hits;
}

inline std::vector<SentenceHit> nearest_sentences(const EmbeddingProvider& provider, std::string_view query,
                                                  const SentenceStore& store, int m)
{
    return nearest_sentences(provider.embed(query), store, m);
}

}  // namespace subj
