#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "corpus.hpp"

namespace subj {

enum class Relevance { relevant, irrelevant, unjudged };

/// A ranked list joined with the query's judgments. Entities without a
/// judgment read as Relevance::unjudged.
struct LabeledRanking {
    std::string query_id;
    std::vector<std::string> entity_ids;
    std::map<std::string, bool> judgments;

    Relevance relevance(const std::string& id) const
    {
        auto it = judgments.find(id);
        if (it == judgments.end()) {
            return Relevance::unjudged;
        }
        return it->second ? Relevance::relevant : Relevance::irrelevant;
    }

    std::size_t relevant_count() const
    {
        return static_cast<std::size_t>(std::count_if(judgments.begin(), judgments.end(), [](auto& p) { return p.second; }));
    }
};

inline LabeledRanking make_labeled(const std::string& query_id, std::vector<std::string> ids, const LabelMap& labels)
{
    LabeledRanking r{query_id, std::move(ids), {}};
    auto it = labels.find(query_id);
    if (it != labels.end()) {
        r.judgments = it->second;
    }
    return r;
}

/// M/K; unjudged counts as irrelevant and short lists keep denominator K.
inline double precision_at_k(const LabeledRanking& r, int k)
{
    if (k < 1) {
        throw ValidationError("precision_at_k: K must be >= 1");
    }
    int m = 0;
    const auto n = std::min<std::size_t>(r.entity_ids.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
        m += r.relevance(r.entity_ids[i]) == Relevance::relevant;
    }
    return static_cast<double>(m) / k;
}

/// Binary-gain NDCG@K. The ideal list is every labeled-relevant entity of the
/// query, truncated at K; NDCG is 0 when the query has no relevant label.
inline double ndcg_at_k(const LabeledRanking& r, int k)
{
    if (k < 1) {
        throw ValidationError("ndcg_at_k: K must be >= 1");
    }
    double dcg = 0.0;
    const auto n = std::min<std::size_t>(r.entity_ids.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
        if (r.relevance(r.entity_ids[i]) == Relevance::relevant) {
            dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
        }
    }
    double idcg = 0.0;
    const auto ideal = std::min<std::size_t>(r.relevant_count(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < ideal; ++i) {
        idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    return idcg == 0.0 ? 0.0 : dcg / idcg;
}

/// Fraction of the top-K slots holding a judged entity (empty slots count as unjudged).
inline double judged_coverage_at_k(const LabeledRanking& r, int k)
{
    int j = 0;
    const auto n = std::min<std::size_t>(r.entity_ids.size(), static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < n; ++i) {
        j += r.relevance(r.entity_ids[i]) != Relevance::unjudged;
    }
    return static_cast<double>(j) / k;
}

// ---------------------------------------------------------------------------

struct QuerySplit {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

/// Test-set size that maps the 664-query benchmark onto 250 test queries.
inline std::size_t default_test_size(std::size_t n_queries)
{
    return static_cast<std::size_t>(std::llround(static_cast<double>(n_queries) * 250.0 / 664.0));
}

/// The n_test most frequent queries (ties by id) form the test split; the rest train.
inline QuerySplit split_queries(const std::vector<Query>& queries, std::size_t n_test)
{
    if (n_test >= queries.size()) {
        throw ValidationError("split_queries: test size " + std::to_string(n_test) + " must be below query count "
                              + std::to_string(queries.size()));
    }
    std::vector<const Query*> order;
    for (const auto& q : queries) {
        order.push_back(&q);
    }
    std::sort(order.begin(), order.end(), [](const Query* a, const Query* b) {
        if (a->frequency != b->frequency) return a->frequency > b->frequency;
        return a->id < b->id;
    });
    QuerySplit s;
    for (std::size_t i = 0; i < order.size(); ++i) {
        (i < n_test ? s.test : s.train).push_back(order[i]->id);
    }
    std::sort(s.test.begin(), s.test.end());
    std::sort(s.train.begin(), s.train.end());
    return s;
}

inline QuerySplit split_queries(const std::vector<Query>& queries)
{
    return split_queries(queries, default_test_size(queries.size()));
}

// ---------------------------------------------------------------------------

struct SensitivityPoint {
    int k = 0;
    double mean_precision = 0.0;
    double coverage = 0.0;
};

inline std::vector<SensitivityPoint> sensitivity_sweep(const std::vector<LabeledRanking>& rankings,
                                                       const std::vector<int>& ks)
{
    if (ks.empty()) {
        throw ValidationError("sensitivity_sweep: empty K range");
    }
    std::vector<SensitivityPoint> out;
    for (int k : ks) {
        SensitivityPoint p{k, 0.0, 0.0};
        for (const auto& r : rankings) {
            p.mean_precision += precision_at_k(r, k);
            p.coverage += judged_coverage_at_k(r, k);
        }
        if (!rankings.empty()) {
            p.mean_precision /= static_cast<double>(rankings.size());
            p.coverage /= static_cast<double>(rankings.size());
        }
        out.push_back(p);
    }
    return out;
}

struct PrecisionDistribution {
    int k = 10;
    std::vector<double> edges;   // bucket i covers [edges[i], edges[i+1]); the last is open-ended
    std::vector<int> counts;
    double frac_at_least_090 = 0.0;
    double frac_perfect = 0.0;
    std::size_t queries = 0;
};

/// Edges {0, 1/K, ..., 1}: one bucket per achievable precision value.
inline std::vector<double> default_edges(int k)
{
    std::vector<double> e;
    for (int m = 0; m <= k; ++m) {
        e.push_back(static_cast<double>(m) / k);
    }
    return e;
}

inline PrecisionDistribution precision_distribution(const std::vector<double>& per_query_precision, int k,
                                                    std::vector<double> edges = {})
{
    constexpr double eps = 1e-12;
    if (edges.empty()) {
        edges = default_edges(k);
    }
    PrecisionDistribution d{k, edges, std::vector<int>(edges.size(), 0), 0.0, 0.0, per_query_precision.size()};
    for (double p : per_query_precision) {
        std::size_t b = 0;
        for (std::size_t i = 0; i < edges.size(); ++i) {
            if (p + eps >= edges[i]) {
                b = i;
            }
        }
        ++d.counts[b];
        d.frac_at_least_090 += p + eps >= 0.9;
        d.frac_perfect += p + eps >= 1.0;
    }
    if (!per_query_precision.empty()) {
        d.frac_at_least_090 /= static_cast<double>(per_query_precision.size());
        d.frac_perfect /= static_cast<double>(per_query_precision.size());
    }
    return d;
}

inline PrecisionDistribution precision_distribution(const std::vector<LabeledRanking>& rankings, int k,
                                                    std::vector<double> edges = {})
{
    std::vector<double> ps;
    for (const auto& r : rankings) {
        ps.push_back(precision_at_k(r, k));
    }
    return precision_distribution(ps, k, std::move(edges));
}

struct OrthogonalityRow {
    std::string ranker;
    std::size_t rescued = 0;
};

struct OrthogonalityTable {
    std::string pivot;
    double threshold = 0.5;
    std::vector<std::string> failing;  // queries where the pivot is below threshold
    std::vector<OrthogonalityRow> rows;
};

/// per_query: ranker -> query -> P@10. For every query the pivot fails, counts
/// each other ranker that reaches the threshold.
inline OrthogonalityTable orthogonality_table(const std::map<std::string, std::map<std::string, double>>& per_query,
                                              const std::string& pivot, double threshold = 0.5)
{
    auto pit = per_query.find(pivot);
    if (pit == per_query.end()) {
        throw ValidationError("orthogonality_table: unknown pivot ranker '" + pivot + "'");
    }
    OrthogonalityTable t{pivot, threshold, {}, {}};
    for (const auto& [q, p] : pit->second) {
        if (p < threshold) {
            t.failing.push_back(q);
        }
    }
    for (const auto& [name, scores] : per_query) {
        if (name == pivot) {
            continue;
        }
        OrthogonalityRow row{name, 0};
        for (const auto& q : t.failing) {
            auto it = scores.find(q);
            row.rescued += it != scores.end() && it->second >= threshold;
        }
        t.rows.push_back(row);
    }
    return t;
}

}  // namespace subj
