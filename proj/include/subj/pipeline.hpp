#pragma once

#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "labeling.hpp"
#include "metrics.hpp"
#include "snapshot.hpp"
#include "synthetic.hpp"

namespace subj {

/// Writes a generated benchmark as a complete data directory.
inline void write_benchmark(const fs::path& dir, const SyntheticBenchmark& b, const Settings& settings = {})
{
    fs::create_directories(dir);
    save_corpus(dir, b.corpus);
    save_queries(dir / files::queries, b.queries);
    b.truth.save(dir);
    Schema::write_records(dir / layout::schema, b.schema);
    IntensityLexicon::write_entries(dir / layout::lexicon, b.lexicon);
    b.rules.save(dir);
    write_file(dir / layout::config, settings.to_json().dump(2) + "\n");
    write_file(dir / layout::rankers, default_ranker_registry().dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Labeling rounds

inline void export_labels(const LabelStore& store, const fs::path& path)
{
    save_labels(path, store.aggregated_labels());
}

struct RoundSummary {
    int round = 0;
    std::size_t pairs = 0;
    std::size_t judgments = 0;
    std::size_t labeled_total = 0;
    double positive_rate = 0.0;  // over this round's aggregated pairs

    json to_json() const
    {
        return {{"round", round}, {"pairs", pairs}, {"judgments", judgments}, {"labeled_total", labeled_total},
                {"positive_rate", positive_rate}};
    }
};

/// Pools the rankers' top-k, simulates three annotators per new pair against
/// the ground truth, and exports the aggregated labels.
inline RoundSummary run_simulated_round(const Snapshot& snap, int round, const std::vector<std::string>& ranker_names,
                                        int k, double noise, std::uint64_t seed)
{
    if (!fs::exists(snap.data_dir() / files::truth)) {
        throw ValidationError("simulated labeling needs ground truth '" + (snap.data_dir() / files::truth).string() + "'");
    }
    auto truth = load_labels(snap.data_dir() / files::truth);
    LabelStore store(snap.data_dir() / layout::labels_dir);
    auto rankers = snap.rankers(ranker_names);
    auto pool = build_pool(snap.queries(), rankers, snap.corpus(), k, store);
    store.open_round(round, ranker_names, k, pool);

    auto sentences = snap.sentences();
    EvidenceFn evidence = [&](const QueryEntityPair& p) {
        auto qv = snap.provider().embed(snap.query(p.first).text);
        auto hits = entity_evidence(*sentences, qv, p.second, 1);
        if (hits.empty()) {
            return std::string();
        }
        const auto& review = snap.corpus().review(hits.front().review_id);
        return review.sentences.at(static_cast<std::size_t>(hits.front().sentence_index));
    };
    auto judgments = simulate_annotators(pool, truth, noise, seed, round, evidence);
    for (const auto& j : judgments) {
        store.submit(j);
    }
    export_labels(store, snap.data_dir() / layout::labels);

    RoundSummary s{round, pool.size(), judgments.size(), 0, 0.0};
    std::size_t pos = 0;
    for (const auto& p : pool) {
        pos += store.aggregate(p).relevant;
    }
    s.positive_rate = pool.empty() ? 0.0 : static_cast<double>(pos) / static_cast<double>(pool.size());
    s.labeled_total = label_count(store.aggregated_labels());
    return s;
}

// ---------------------------------------------------------------------------
// Training

/// Feature rows for the given queries. Each query is featurized over all of its
/// area candidates (the same normalization the fused rankers see at query time);
/// only labeled rows are kept.
inline std::vector<FeatureVector> training_rows(const Snapshot& snap, const std::vector<std::string>& query_ids,
                                                const LabelMap& labels)
{
    auto source = snap.feature_source();
    std::vector<FeatureVector> out;
    for (const auto& qid : query_ids) {
        auto lit = labels.find(qid);
        if (lit == labels.end()) continue;
        const auto& q = snap.query(qid);
        auto cands = snap.corpus().candidates(q.area_id);
        if (cands.empty()) continue;
        for (auto& fv : featurize(q, cands, source)) {
            auto it = lit->second.find(fv.entity_id);
            if (it != lit->second.end()) {
                fv.label = it->second;
                out.push_back(std::move(fv));
            }
        }
    }
    return out;
}

inline LabelMap load_pooled_labels(const Snapshot& snap)
{
    auto p = snap.data_dir() / layout::labels;
    if (!fs::exists(p)) {
        throw ValidationError("no aggregated labels at '" + p.string() + "'; run `subj label-sim` first");
    }
    return load_labels(p);
}

struct TrainSummary {
    std::string model;
    std::size_t queries = 0;
    std::size_t rows = 0;
    std::size_t positives = 0;
    json detail;

    json to_json() const
    {
        return {{"model", model}, {"queries", queries}, {"rows", rows}, {"positives", positives}, {"detail", detail}};
    }
};

/// Trains a fusion model on the training split and writes it to `out`.
inline TrainSummary train_model(const Snapshot& snap, const std::string& kind, const fs::path& out,
                                const LogitParams& lp = {}, const LambdaMartParams& mp = {})
{
    if (kind != "logit" && kind != "lambdamart") {
        throw ValidationError("unknown model kind '" + kind + "' (expected logit or lambdamart)");
    }
    auto labels = load_pooled_labels(snap);
    auto split = split_queries(snap.queries());
    auto rows = training_rows(snap, split.train, labels);
    TrainSummary s{kind, split.train.size(), rows.size(), 0, json::object()};
    for (const auto& r : rows) s.positives += *r.label;
    if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
    if (kind == "logit") {
        auto m = train_logit(rows, lp);
        write_file(out, m.to_json().dump(2) + "\n");
        s.detail = {{"epochs", m.epochs}, {"final_loss", m.final_loss}, {"weights", m.weights}, {"bias", m.bias}};
    } else {
        auto m = train_lambdamart(rows, mp);
        m.save(out);
        s.detail = {{"trees", m.trees.size()}, {"learning_rate", m.learning_rate}};
    }
    return s;
}

// ---------------------------------------------------------------------------
// Evaluation

struct RankerReport {
    std::string ranker;
    std::size_t queries = 0;
    double p10 = 0.0, p3 = 0.0, ndcg10 = 0.0, ndcg3 = 0.0;
    std::vector<LabeledRanking> rankings;  // test queries, top max_k
    std::vector<SensitivityPoint> sensitivity;
    PrecisionDistribution dist10;
    PrecisionDistribution dist3;
};

struct EvalReport {
    std::vector<std::string> test_queries;
    std::vector<RankerReport> rankers;
    std::optional<OrthogonalityTable> orthogonality;
    int max_k = 30;

    const RankerReport& at(const std::string& name) const
    {
        for (const auto& r : rankers) {
            if (r.ranker == name) return r;
        }
        throw NotFoundError("no report for ranker '" + name + "'");
    }

    std::map<std::string, std::map<std::string, double>> per_query_p10() const
    {
        std::map<std::string, std::map<std::string, double>> out;
        for (const auto& r : rankers) {
            for (const auto& lr : r.rankings) out[r.ranker][lr.query_id] = precision_at_k(lr, 10);
        }
        return out;
    }
};

inline RankerReport evaluate_ranker(const Snapshot& snap, const Ranker& ranker, const std::vector<std::string>& query_ids,
                                    const LabelMap& labels, int max_k = 30)
{
    RankerReport rep;
    rep.ranker = ranker.name();
    rep.queries = query_ids.size();
    std::vector<double> p10s, p3s;
    for (const auto& qid : query_ids) {
        auto list = rank(ranker, snap.query(qid), snap.corpus(), max_k);
        auto lr = make_labeled(qid, list.ids(), labels);
        double p10 = precision_at_k(lr, 10), p3 = precision_at_k(lr, 3);
        p10s.push_back(p10);
        p3s.push_back(p3);
        rep.p10 += p10;
        rep.p3 += p3;
        rep.ndcg10 += ndcg_at_k(lr, 10);
        rep.ndcg3 += ndcg_at_k(lr, 3);
        rep.rankings.push_back(std::move(lr));
    }
    if (!query_ids.empty()) {
        const double n = static_cast<double>(query_ids.size());
        rep.p10 /= n;
        rep.p3 /= n;
        rep.ndcg10 /= n;
        rep.ndcg3 /= n;
    }
    std::vector<int> ks;
    for (int k = 1; k <= max_k; ++k) ks.push_back(k);
    rep.sensitivity = sensitivity_sweep(rep.rankings, ks);
    rep.dist10 = precision_distribution(p10s, 10);
    rep.dist3 = precision_distribution(p3s, 3);
    return rep;
}

inline EvalReport evaluate(const Snapshot& snap, const std::vector<std::string>& ranker_names, const LabelMap& labels,
                           const std::vector<std::string>& query_ids, const std::string& pivot = "opinedb")
{
    EvalReport report;
    report.test_queries = query_ids;
    for (const auto& name : ranker_names) {
        report.rankers.push_back(evaluate_ranker(snap, *snap.ranker(name), query_ids, labels, report.max_k));
    }
    auto pq = report.per_query_p10();
    if (pq.count(pivot)) {
        report.orthogonality = orthogonality_table(pq, pivot, 0.5);
    }
    return report;
}

/// CSV files plus summary.json. Numbers use fixed precision so equal inputs
/// give byte-identical files.
inline json write_report(const EvalReport& r, const fs::path& dir)
{
    fs::create_directories(dir);
    std::ostringstream precision, sensitivity, distribution, orth, per_query;
    precision << "ranker,queries,p_at_10,p_at_3,ndcg_at_10,ndcg_at_3\n";
    sensitivity << "ranker,k,mean_precision,coverage\n";
    distribution << "ranker,k,bucket_lower,bucket_upper,queries\n";
    per_query << "ranker,query_id,p_at_10,p_at_3,ndcg_at_10,ndcg_at_3\n";
    json summary{{"test_queries", r.test_queries.size()}, {"rankers", json::object()}};
    for (const auto& rr : r.rankers) {
        precision << rr.ranker << ',' << rr.queries << ',' << fmt_real(rr.p10) << ',' << fmt_real(rr.p3) << ','
                  << fmt_real(rr.ndcg10) << ',' << fmt_real(rr.ndcg3) << '\n';
        for (const auto& p : rr.sensitivity) {
            sensitivity << rr.ranker << ',' << p.k << ',' << fmt_real(p.mean_precision) << ',' << fmt_real(p.coverage)
                        << '\n';
        }
        for (const auto* d : {&rr.dist10, &rr.dist3}) {
            for (std::size_t i = 0; i < d->edges.size(); ++i) {
                double upper = i + 1 < d->edges.size() ? d->edges[i + 1] : 1.0;
                distribution << rr.ranker << ',' << d->k << ',' << fmt_real(d->edges[i]) << ',' << fmt_real(upper) << ','
                             << d->counts[i] << '\n';
            }
        }
        for (const auto& lr : rr.rankings) {
            per_query << rr.ranker << ',' << lr.query_id << ',' << fmt_real(precision_at_k(lr, 10)) << ','
                      << fmt_real(precision_at_k(lr, 3)) << ',' << fmt_real(ndcg_at_k(lr, 10)) << ','
                      << fmt_real(ndcg_at_k(lr, 3)) << '\n';
        }
        summary["rankers"][rr.ranker] = {{"p_at_10", std::stod(fmt_real(rr.p10))},
                                         {"p_at_3", std::stod(fmt_real(rr.p3))},
                                         {"ndcg_at_10", std::stod(fmt_real(rr.ndcg10))},
                                         {"ndcg_at_3", std::stod(fmt_real(rr.ndcg3))},
                                         {"frac_p10_at_least_0_9", std::stod(fmt_real(rr.dist10.frac_at_least_090))},
                                         {"frac_p3_perfect", std::stod(fmt_real(rr.dist3.frac_perfect))}};
    }
    orth << "pivot,ranker,failing_queries,rescued\n";
    if (r.orthogonality) {
        const auto& t = *r.orthogonality;
        for (const auto& row : t.rows) {
            orth << t.pivot << ',' << row.ranker << ',' << t.failing.size() << ',' << row.rescued << '\n';
        }
        summary["orthogonality"] = {{"pivot", t.pivot}, {"failing_queries", t.failing.size()}};
    }
    write_file(dir / "precision.csv", precision.str());
    write_file(dir / "sensitivity.csv", sensitivity.str());
    write_file(dir / "distribution.csv", distribution.str());
    write_file(dir / "orthogonality.csv", orth.str());
    write_file(dir / "per_query.csv", per_query.str());
    write_file(dir / "summary.json", summary.dump(2) + "\n");
    return summary;
}

}  // namespace subj
