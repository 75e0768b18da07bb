#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "embedding.hpp"
#include "fusion.hpp"
#include "rankers.hpp"
#include "schema.hpp"
#include "textproc.hpp"

namespace subj {

/// Data directory layout.
namespace layout {
inline constexpr const char* config = "config.json";
inline constexpr const char* rankers = "rankers.json";
inline constexpr const char* schema = "schema.jsonl";
inline constexpr const char* lexicon = "lexicon.jsonl";
inline constexpr const char* index_dir = "index";
inline constexpr const char* bm25 = "index/bm25.jsonl";
inline constexpr const char* sentences_bin = "index/sentences.bin";
inline constexpr const char* sentences_ids = "index/sentences.ids";
inline constexpr const char* histograms = "index/histograms.jsonl";
inline constexpr const char* manifest = "index/manifest.json";
inline constexpr const char* labels_dir = "labels";
inline constexpr const char* labels = "labels/labels.jsonl";
inline constexpr const char* models_dir = "models";
inline constexpr const char* reports_dir = "reports";
}  // namespace layout

struct Settings {
    json embedding{{"kind", "hashed-ngram"}, {"dimension", 1024}};
    double theta = 0.60;
    double theta_assign = 0.50;
    double k0 = 3.0;
    int bucket_count = 5;
    int dense_m = 3;
    Bm25Params bm25;
    std::uint64_t random_seed = 0;

    json to_json() const
    {
        return {{"embedding", embedding}, {"theta", theta},   {"theta_assign", theta_assign},
                {"k0", k0},               {"bucket_count", bucket_count}, {"dense_m", dense_m},
                {"bm25", {{"k1", bm25.k1}, {"b", bm25.b}}}, {"random_seed", random_seed}};
    }

    static Settings from_json(const json& j)
    {
        Settings s;
        if (j.contains("embedding")) s.embedding = j["embedding"];
        s.theta = j.value("theta", s.theta);
        s.theta_assign = j.value("theta_assign", s.theta_assign);
        s.k0 = j.value("k0", s.k0);
        s.bucket_count = j.value("bucket_count", s.bucket_count);
        s.dense_m = j.value("dense_m", s.dense_m);
        if (j.contains("bm25")) {
            s.bm25.k1 = j["bm25"].value("k1", s.bm25.k1);
            s.bm25.b = j["bm25"].value("b", s.bm25.b);
        }
        s.random_seed = j.value("random_seed", s.random_seed);
        if (!(s.theta > 0.0 && s.theta <= 1.0) || !(s.theta_assign >= 0.0 && s.theta_assign <= 1.0)) {
            throw ValidationError("config: thresholds must lie in (0,1]");
        }
        if (s.dense_m < 1 || s.k0 < 0.0) {
            throw ValidationError("config: dense_m must be >= 1 and k0 >= 0");
        }
        return s;
    }

    /// config.json when present, defaults otherwise.
    static Settings load(const fs::path& data)
    {
        auto p = data / layout::config;
        if (!fs::exists(p)) {
            return {};
        }
        try {
            return from_json(json::parse(read_file(p)));
        } catch (const json::exception& e) {
            throw ParseError(p.string(), 0, e.what());
        }
    }
};

/// Named ranker configurations: name -> {"kind": ..., params}.
inline json default_ranker_registry()
{
    return {{"opinedb", {{"kind", "opinedb"}}},
            {"dense", {{"kind", "dense"}}},
            {"rating", {{"kind", "rating"}}},
            {"bm25", {{"kind", "bm25"}}},
            {"random", {{"kind", "random"}}},
            {"logit", {{"kind", "logit"}, {"model", "models/logit.json"}}},
            {"lambdamart", {{"kind", "lambdamart"}, {"model", "models/lambdamart.jsonl"}}}};
}

inline json load_ranker_registry(const fs::path& data)
{
    auto p = data / layout::rankers;
    json reg = default_ranker_registry();
    if (fs::exists(p)) {
        json user;
        try {
            user = json::parse(read_file(p));
        } catch (const json::exception& e) {
            throw ParseError(p.string(), 0, e.what());
        }
        for (const auto& [name, cfg] : user.items()) {
            reg[name] = cfg;
        }
    }
    return reg;
}

/// The immutable state every ranker reads: corpus, queries, schema and indexes.
/// Rankers are built on first use and cached.
class Snapshot {
  public:
    static std::shared_ptr<Snapshot> open(const fs::path& data)
    {
        if (!fs::is_directory(data)) {
            throw ValidationError("data directory '" + data.string() + "' does not exist");
        }
        auto s = std::shared_ptr<Snapshot>(new Snapshot());
        s->data_ = data;
        s->settings_ = Settings::load(data);
        s->registry_ = load_ranker_registry(data);
        s->corpus_ = std::make_shared<const Corpus>(load_corpus(data));
        if (fs::exists(data / files::queries)) {
            s->queries_ = load_queries(data / files::queries, s->corpus_->areas());
        }
        for (std::size_t i = 0; i < s->queries_.size(); ++i) {
            s->query_index_[s->queries_[i].id] = i;
        }
        s->rules_ = RuleSet::load(data);
        s->provider_ = make_provider(s->settings_.embedding, data);
        return s;
    }

    const fs::path& data_dir() const { return data_; }
    const Settings& settings() const { return settings_; }
    const Corpus& corpus() const { return *corpus_; }
    const std::vector<Query>& queries() const { return queries_; }
    const RuleSet& rules() const { return rules_; }
    const EmbeddingProvider& provider() const { return *provider_; }
    std::shared_ptr<const EmbeddingProvider> provider_ptr() const { return provider_; }
    const json& registry() const { return registry_; }

    const Query& query(const std::string& id) const
    {
        auto it = query_index_.find(id);
        if (it == query_index_.end()) {
            throw NotFoundError("unknown query '" + id + "'");
        }
        return queries_[it->second];
    }

    bool has_ranker(const std::string& name) const { return registry_.contains(name); }

    std::vector<std::string> ranker_names() const
    {
        std::vector<std::string> out;
        for (const auto& [k, v] : registry_.items()) out.push_back(k);
        return out;
    }

    std::shared_ptr<const Schema> schema() const
    {
        std::lock_guard lock(mu_);
        return schema_locked();
    }

    std::shared_ptr<const SentenceStore> sentences() const
    {
        std::lock_guard lock(mu_);
        return sentences_locked();
    }

    /// Resolves a ranker by name through the registry (rankers.json over defaults).
    std::shared_ptr<const Ranker> ranker(const std::string& name) const
    {
        std::lock_guard lock(mu_);
        return ranker_locked(name, 0);
    }

    std::vector<std::shared_ptr<const Ranker>> rankers(const std::vector<std::string>& names) const
    {
        std::vector<std::shared_ptr<const Ranker>> out;
        for (const auto& n : names) out.push_back(ranker(n));
        return out;
    }

    /// A fused ranker straight from a model file; the kind is read from the file.
    std::shared_ptr<const Ranker> fused_from_file(const std::string& name, const fs::path& model) const
    {
        if (!fs::exists(model)) {
            throw ValidationError("model file '" + model.string() + "' does not exist");
        }
        std::string first;
        {
            std::ifstream in(model);
            std::getline(in, first);
        }
        std::string kind = "logit";
        try {
            auto head = json::parse(first);
            kind = head.value("kind", kind);
        } catch (const json::exception&) {
            // pretty-printed logit models do not parse line by line
        }
        std::lock_guard lock(mu_);
        return load_fused(name, model, kind);
    }

    /// Base rankers and interpreter feeding the fused models, in feature order.
    FeatureSource feature_source() const
    {
        std::lock_guard lock(mu_);
        return feature_source_locked();
    }

  private:
    Snapshot() = default;

    void require(const char* rel) const
    {
        if (!fs::exists(data_ / rel)) {
            throw ValidationError("index file '" + (data_ / rel).string() + "' is missing; run `subj index --data "
                                  + data_.string() + "` first");
        }
    }

    void check_manifest() const
    {
        require(layout::manifest);
        auto m = json::parse(read_file(data_ / layout::manifest));
        if (m.value("provider", std::string()) != provider_->name()
            || m.value("dimension", std::size_t{0}) != provider_->dimension()) {
            throw ValidationError("index was built with provider " + m.value("provider", std::string("?")) + "/"
                                  + std::to_string(m.value("dimension", 0)) + " but config asks for "
                                  + provider_->name() + "/" + std::to_string(provider_->dimension())
                                  + "; re-run `subj index`");
        }
    }

    std::shared_ptr<const Schema> schema_locked() const
    {
        if (!schema_) {
            if (!fs::exists(data_ / layout::schema)) {
                throw ValidationError("'" + (data_ / layout::schema).string() + "' is missing");
            }
            schema_ = std::make_shared<const Schema>(Schema::load(data_ / layout::schema, *provider_));
        }
        return schema_;
    }

    std::shared_ptr<const SentenceStore> sentences_locked() const
    {
        if (!sentences_) {
            check_manifest();
            require(layout::sentences_bin);
            require(layout::sentences_ids);
            auto s = SentenceStore::load(data_ / layout::sentences_bin, data_ / layout::sentences_ids);
            if (s.dimension() != provider_->dimension()) {
                throw ValidationError("sentence store dimension does not match the embedding provider");
            }
            sentences_ = std::make_shared<const SentenceStore>(std::move(s));
        }
        return sentences_;
    }

    std::shared_ptr<const Ranker> ranker_locked(const std::string& name, int depth) const
    {
        if (auto it = cache_.find(name); it != cache_.end()) {
            return it->second;
        }
        if (!registry_.contains(name)) {
            throw ValidationError("unknown ranker '" + name + "'");
        }
        if (depth > 2) {
            throw ValidationError("ranker '" + name + "' nests fused rankers too deeply");
        }
        const json& cfg = registry_.at(name);
        const auto kind = cfg.value("kind", std::string());
        std::shared_ptr<const Ranker> r;
        if (kind == "bm25") {
            check_manifest();
            require(layout::bm25);
            auto idx = std::make_shared<const Bm25Index>(Bm25Index::load(data_ / layout::bm25));
            Bm25Params p = settings_.bm25;
            p.k1 = cfg.value("k1", p.k1);
            p.b = cfg.value("b", p.b);
            r = std::make_shared<Bm25Ranker>(name, idx, p);
        } else if (kind == "dense") {
            r = std::make_shared<DenseRanker>(name, provider_, sentences_locked(), cfg.value("m", settings_.dense_m));
        } else if (kind == "rating") {
            std::map<std::string, std::string> phrases;
            if (cfg.contains("aspect_phrases")) {
                phrases = cfg["aspect_phrases"].get<std::map<std::string, std::string>>();
            }
            r = std::make_shared<RatingRanker>(name, provider_, corpus_->aspects(), phrases);
        } else if (kind == "opinedb") {
            check_manifest();
            require(layout::histograms);
            auto hist = std::make_shared<const HistogramStore>(
                HistogramStore::load(data_ / layout::histograms, settings_.bucket_count));
            OpineDbParams p{cfg.value("theta", settings_.theta), cfg.value("k0", settings_.k0)};
            r = std::make_shared<OpineDbRanker>(name, provider_, schema_locked(), hist, p);
        } else if (kind == "random") {
            r = std::make_shared<RandomRanker>(name, cfg.value("seed", settings_.random_seed));
        } else if (kind == "logit" || kind == "lambdamart") {
            fs::path model = cfg.value("model", std::string());
            if (model.empty()) {
                throw ValidationError("fused ranker '" + name + "' has no model path");
            }
            if (model.is_relative()) model = data_ / model;
            if (!fs::exists(model)) {
                throw ValidationError("model file '" + model.string() + "' for ranker '" + name
                                      + "' is missing; run `subj train` first");
            }
            r = load_fused(name, model, kind);
        } else {
            throw ValidationError("ranker '" + name + "' has unknown kind '" + kind + "'");
        }
        cache_[name] = r;
        return r;
    }

    FeatureSource feature_source_locked() const
    {
        FeatureSource src;
        for (const char* base : {"opinedb", "dense", "rating", "bm25"}) {
            src.base.push_back(ranker_locked(base, 1));
        }
        src.interpreter = std::dynamic_pointer_cast<const OpineDbRanker>(src.base.front());
        if (!src.interpreter) {
            throw ValidationError("fusion needs ranker 'opinedb' to be of kind opinedb");
        }
        return src;
    }

    std::shared_ptr<const Ranker> load_fused(const std::string& name, const fs::path& model, const std::string& kind) const
    {
        if (kind == "logit") {
            json j;
            try {
                j = json::parse(read_file(model));
            } catch (const json::exception& e) {
                throw ParseError(model.string(), 0, e.what());
            }
            return std::make_shared<FusedRanker>(name, feature_source_locked(), LogitModel::from_json(j));
        }
        return std::make_shared<FusedRanker>(name, feature_source_locked(), LambdaMartModel::load(model));
    }

    fs::path data_;
    Settings settings_;
    json registry_;
    std::shared_ptr<const Corpus> corpus_;
    std::vector<Query> queries_;
    std::map<std::string, std::size_t> query_index_;
    RuleSet rules_;
    std::shared_ptr<const EmbeddingProvider> provider_;

    mutable std::mutex mu_;
    mutable std::shared_ptr<const Schema> schema_;
    mutable std::shared_ptr<const SentenceStore> sentences_;
    mutable std::map<std::string, std::shared_ptr<const Ranker>> cache_;
};

/// Writes every index the rankers read: BM25 postings, sentence vectors and
/// attribute histograms, plus a manifest naming the embedding provider.
inline json build_indexes(const fs::path& data, const std::vector<std::string>& components = {"bm25", "dense", "opinedb"})
{
    auto settings = Settings::load(data);
    auto corpus = load_corpus(data);
    auto provider = make_provider(settings.embedding, data);
    fs::create_directories(data / layout::index_dir);
    auto wants = [&](const char* c) { return std::find(components.begin(), components.end(), c) != components.end(); };
    json summary{{"provider", provider->name()}, {"dimension", provider->dimension()}, {"entities", corpus.entities().size()}};
    if (wants("bm25")) {
        auto idx = Bm25Index::build(corpus);
        idx.save(data / layout::bm25);
        summary["bm25_docs"] = idx.doc_count();
    }
    if (wants("dense")) {
        auto store = SentenceStore::build(corpus, *provider);
        store.save(data / layout::sentences_bin, data / layout::sentences_ids);
        summary["sentences"] = store.size();
    }
    if (wants("opinedb")) {
        if (!fs::exists(data / layout::schema) || !fs::exists(data / layout::lexicon)) {
            throw ValidationError("opinedb index needs '" + std::string(layout::schema) + "' and '" + layout::lexicon
                                  + "' in " + data.string());
        }
        auto schema = Schema::load(data / layout::schema, *provider);
        IntensityLexicon lex(IntensityLexicon::read_entries(data / layout::lexicon), settings.bucket_count, *provider);
        auto rules = RuleSet::load(data);
        auto hist = build_histograms(corpus, schema, lex, rules, *provider, settings.theta_assign);
        hist.save(data / layout::histograms);
        summary["histograms"] = hist.all().size();
    }
    write_file(data / layout::manifest, json{{"provider", provider->name()}, {"dimension", provider->dimension()}}.dump(2) + "\n");
    return summary;
}

/// The entity's sentences most similar to the query text, best first.
inline std::vector<SentenceHit> entity_evidence(const SentenceStore& store, const Vector& query,
                                                const std::string& entity_id, std::size_t n)
{
    const double qn = norm(query);
    std::vector<SentenceHit> hits;
    for (auto row : store.rows_of(entity_id)) {
        const auto& ref = store.ref(row);
        hits.push_back({ref.review_id, ref.sentence_index, store.similarity(row, query, qn)});
    }
    std::stable_sort(hits.begin(), hits.end(), [](const SentenceHit& a, const SentenceHit& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        if (a.review_id != b.review_id) return a.review_id < b.review_id;
        return a.sentence_index < b.sentence_index;
    });
    if (hits.size() > n) hits.resize(n);
    return hits;
}

}  // namespace subj
