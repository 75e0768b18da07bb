#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rankers.hpp"

namespace subj {

/// Feature order: opinedb, dense, rating, bm25 (per-query min-max normalized),
/// then the schema-coverage indicator.
inline const std::vector<std::string>& feature_names()
{
    static const std::vector<std::string> names{"opinedb", "dense", "rating", "bm25", "coverage"};
    return names;
}

struct FeatureVector {
    std::string query_id;
    std::string entity_id;
    std::vector<double> features;
    std::optional<bool> label;
};

/// Rescales values to [0,1]; a constant column maps to 0.5.
inline std::vector<double> minmax_normalize(std::span<const double> raw)
{
    std::vector<double> out(raw.size(), 0.5);
    if (raw.empty()) {
        return out;
    }
    auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double range = *hi - *lo;
    if (range > 0.0) {
        for (std::size_t i = 0; i < raw.size(); ++i) {
            out[i] = raw[i] == *hi ? 1.0 : (raw[i] - *lo) / range;
        }
    }
    return out;
}

/// Base rankers whose scores become features, plus the interpreter used for coverage.
struct FeatureSource {
    std::vector<std::shared_ptr<const Ranker>> base;
    std::shared_ptr<const OpineDbRanker> interpreter;

    std::size_t feature_count() const { return base.size() + 1; }
};

inline std::vector<FeatureVector> featurize(const Query& query, std::span<const Entity* const> pool,
                                            const FeatureSource& source)
{
    if (pool.empty()) {
        throw ValidationError("featurize: empty candidate pool for query '" + query.id + "'");
    }
    std::vector<FeatureVector> out(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        out[i].query_id = query.id;
        out[i].entity_id = pool[i]->id;
        out[i].features.reserve(source.feature_count());
    }
    for (const auto& r : source.base) {
        auto col = minmax_normalize(r->score(query, pool));
        for (std::size_t i = 0; i < pool.size(); ++i) {
            out[i].features.push_back(col[i]);
        }
    }
    const double covered = source.interpreter && source.interpreter->interpret(query.text).covered ? 1.0 : 0.0;
    for (auto& fv : out) {
        fv.features.push_back(covered);
    }
    return out;
}

inline json to_json(const FeatureVector& fv)
{
    return {{"query_id", fv.query_id},
            {"entity_id", fv.entity_id},
            {"features", fv.features},
            {"label", fv.label ? json(*fv.label) : json(nullptr)}};
}

// ---------------------------------------------------------------------------
// Logit

struct LogitParams {
    double l2 = 1e-4;
    double learning_rate = 0.1;
    int max_epochs = 2000;
    double tolerance = 1e-8;
};

struct LogitModel {
    std::vector<double> weights;
    double bias = 0.0;
    int epochs = 0;
    double final_loss = 0.0;
    /// Objective before the first update and after every epoch.
    std::vector<double> loss_history;

    json to_json() const
    {
        return {{"kind", "logit"},
                {"weights", weights},
                {"bias", bias},
                {"meta", {{"epochs", epochs}, {"final_loss", final_loss}}}};
    }

    static LogitModel from_json(const json& j)
    {
        LogitModel m;
        m.weights = j.at("weights").get<std::vector<double>>();
        m.bias = j.at("bias").get<double>();
        if (j.contains("meta")) {
            m.epochs = j["meta"].value("epochs", 0);
            m.final_loss = j["meta"].value("final_loss", 0.0);
        }
        return m;
    }
};

inline double sigmoid(double z)
{
    if (z >= 0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

inline double score_logit(const LogitModel& model, std::span<const double> x)
{
    if (x.size() != model.weights.size()) {
        throw ValidationError("score_logit: expected " + std::to_string(model.weights.size()) + " features, got "
                              + std::to_string(x.size()));
    }
    return sigmoid(dot(model.weights, x) + model.bias);
}

namespace detail {

inline double logit_objective(const std::vector<const FeatureVector*>& rows, const std::vector<double>& w, double b,
                              double l2)
{
    double loss = 0.0;
    for (const auto* r : rows) {
        double z = dot(w, r->features) + b;
        loss += *r->label ? softplus(-z) : softplus(z);
    }
    loss /= static_cast<double>(rows.size());
    return loss + 0.5 * l2 * dot(w, w);
}

}  // namespace detail

/// Full-batch gradient descent on mean log-loss + (l2/2)|w|^2 from zero weights.
inline LogitModel train_logit(std::span<const FeatureVector> data, const LogitParams& params = {})
{
    std::vector<const FeatureVector*> rows;
    bool pos = false, neg = false;
    for (const auto& fv : data) {
        if (!fv.label) {
            continue;
        }
        rows.push_back(&fv);
        (*fv.label ? pos : neg) = true;
    }
    if (!pos || !neg) {
        throw ValidationError("train_logit: need at least one positive and one negative label");
    }
    const std::size_t dim = rows.front()->features.size();
    for (const auto* r : rows) {
        if (r->features.size() != dim) {
            throw ValidationError("train_logit: inconsistent feature count");
        }
    }
    LogitModel m;
    m.weights.assign(dim, 0.0);
    const double n = static_cast<double>(rows.size());
    double loss = detail::logit_objective(rows, m.weights, m.bias, params.l2);
    m.loss_history.push_back(loss);
    std::vector<double> grad(dim);
    for (int epoch = 0; epoch < params.max_epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double gb = 0.0;
        for (const auto* r : rows) {
            double err = sigmoid(dot(m.weights, r->features) + m.bias) - (*r->label ? 1.0 : 0.0);
            for (std::size_t i = 0; i < dim; ++i) {
                grad[i] += err * r->features[i];
            }
            gb += err;
        }
        for (std::size_t i = 0; i < dim; ++i) {
            m.weights[i] -= params.learning_rate * (grad[i] / n + params.l2 * m.weights[i]);
        }
        m.bias -= params.learning_rate * gb / n;
        double next = detail::logit_objective(rows, m.weights, m.bias, params.l2);
        m.loss_history.push_back(next);
        m.epochs = epoch + 1;
        bool done = std::abs(loss - next) < params.tolerance;
        loss = next;
        if (done) {
            break;
        }
    }
    m.final_loss = loss;
    return m;
}

// ---------------------------------------------------------------------------
// LambdaMART

/// Axis-aligned regression tree stored in preorder: x[feature] <= threshold goes left.
struct RegressionTree {
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        double value = 0.0;
        int left = -1;
        int right = -1;
    };
    std::vector<Node> nodes;

    double predict(std::span<const double> x) const
    {
        if (nodes.empty()) {
            return 0.0;
        }
        int i = 0;
        while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
            const auto& n = nodes[static_cast<std::size_t>(i)];
            i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }

    json to_json() const
    {
        json out = json::array();
        for (const auto& n : nodes) {
            out.push_back({n.feature, n.threshold, n.value});
        }
        return out;
    }

    /// Rebuilds child links from a preorder (feature, threshold, value) list.
    static RegressionTree from_json(const json& j)
    {
        RegressionTree t;
        for (const auto& n : j) {
            t.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<double>(), -1, -1});
        }
        std::size_t pos = 0;
        std::function<int()> link = [&]() -> int {
            if (pos >= t.nodes.size()) {
                throw ValidationError("regression tree: truncated preorder list");
            }
            int me = static_cast<int>(pos++);
            if (t.nodes[static_cast<std::size_t>(me)].feature >= 0) {
                int l = link();
                int r = link();
                t.nodes[static_cast<std::size_t>(me)].left = l;
                t.nodes[static_cast<std::size_t>(me)].right = r;
            }
            return me;
        };
        if (!t.nodes.empty()) {
            link();
        }
        return t;
    }
};

struct LambdaMartParams {
    int trees = 100;
    double learning_rate = 0.1;
    int max_depth = 3;
    int min_leaf = 5;
    int ndcg_k = 10;
};

struct LambdaMartModel {
    std::vector<RegressionTree> trees;
    double learning_rate = 0.1;
    std::size_t feature_count = 0;

    double score(std::span<const double> x) const
    {
        if (feature_count && x.size() != feature_count) {
            throw ValidationError("lambdamart: expected " + std::to_string(feature_count) + " features, got "
                                  + std::to_string(x.size()));
        }
        double s = 0.0;
        for (const auto& t : trees) {
            s += learning_rate * t.predict(x);
        }
        return s;
    }

    void save(const fs::path& path) const
    {
        std::vector<json> recs;
        recs.push_back({{"kind", "lambdamart"}, {"learning_rate", learning_rate}, {"features", feature_count},
                        {"trees", trees.size()}});
        for (std::size_t i = 0; i < trees.size(); ++i) {
            recs.push_back({{"tree", i}, {"nodes", trees[i].to_json()}});
        }
        write_jsonl(path, recs);
    }

    static LambdaMartModel load(const fs::path& path)
    {
        LambdaMartModel m;
        for_each_record(path, [&](const json& r, std::size_t) {
            if (r.contains("kind")) {
                m.learning_rate = r.at("learning_rate").get<double>();
                m.feature_count = r.value("features", std::size_t{0});
                return;
            }
            auto t = RegressionTree::from_json(r.at("nodes"));
            for (const auto& n : t.nodes) {
                if (n.feature >= 0 && m.feature_count && static_cast<std::size_t>(n.feature) >= m.feature_count) {
                    throw ValidationError("lambdamart: split feature out of range");
                }
            }
            m.trees.push_back(std::move(t));
        });
        return m;
    }
};

/// Positions after sorting by score descending; ties keep input order.
inline std::vector<std::size_t> rank_positions(std::span<const double> scores)
{
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::size_t> pos(scores.size());
    for (std::size_t p = 0; p < order.size(); ++p) {
        pos[order[p]] = p;
    }
    return pos;
}

/// Per-document lambda gradients for one query: for every (relevant i,
/// irrelevant j) pair, |dNDCG@K(swap i,j)| * sigmoid(s_j - s_i) is added to i
/// and subtracted from j. Positive lambda pushes a document up.
inline std::vector<double> compute_lambdas(std::span<const double> scores, std::span<const int> labels, int k)
{
    const std::size_t n = scores.size();
    std::vector<double> lambdas(n, 0.0);
    auto pos = rank_positions(scores);
    auto discount = [k](std::size_t p) {
        return p < static_cast<std::size_t>(k) ? 1.0 / std::log2(static_cast<double>(p) + 2.0) : 0.0;
    };
    std::size_t n_rel = 0;
    for (int l : labels) {
        n_rel += l > 0;
    }
    double idcg = 0.0;
    for (std::size_t p = 0; p < std::min<std::size_t>(n_rel, static_cast<std::size_t>(k)); ++p) {
        idcg += discount(p);
    }
    if (idcg == 0.0) {
        return lambdas;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] <= 0) {
            continue;
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (labels[j] > 0) {
                continue;
            }
            double delta = std::abs(discount(pos[i]) - discount(pos[j])) / idcg;
            double rho = sigmoid(scores[j] - scores[i]);
            lambdas[i] += delta * rho;
            lambdas[j] -= delta * rho;
        }
    }
    return lambdas;
}

namespace detail {

struct TreeBuilder {
    const std::vector<const std::vector<double>*>& x;
    const std::vector<double>& y;
    const LambdaMartParams& p;
    std::size_t n_features;
    RegressionTree tree;

    int build(std::vector<std::size_t> idx, int depth)
    {
        double sum = 0.0;
        for (auto i : idx) {
            sum += y[i];
        }
        const double n = static_cast<double>(idx.size());
        int me = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({-1, 0.0, n > 0 ? sum / n : 0.0, -1, -1});
        if (depth >= p.max_depth || idx.size() < 2 * static_cast<std::size_t>(p.min_leaf)) {
            return me;
        }
        const double parent = sum * sum / n;
        double best_gain = 1e-12;
        int best_f = -1;
        double best_t = 0.0;
        for (std::size_t f = 0; f < n_features; ++f) {
            auto sorted = idx;
            std::stable_sort(sorted.begin(), sorted.end(),
                             [&](std::size_t a, std::size_t b) { return (*x[a])[f] < (*x[b])[f]; });
            double left = 0.0;
            for (std::size_t c = 0; c + 1 < sorted.size(); ++c) {
                left += y[sorted[c]];
                double va = (*x[sorted[c]])[f];
                double vb = (*x[sorted[c + 1]])[f];
                std::size_t nl = c + 1;
                std::size_t nr = sorted.size() - nl;
                if (va == vb || nl < static_cast<std::size_t>(p.min_leaf) || nr < static_cast<std::size_t>(p.min_leaf)) {
                    continue;
                }
                double right = sum - left;
                double gain = left * left / static_cast<double>(nl) + right * right / static_cast<double>(nr) - parent;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_f = static_cast<int>(f);
                    best_t = va + (vb - va) / 2.0;
                }
            }
        }
        if (best_f < 0) {
            return me;
        }
        std::vector<std::size_t> l, r;
        for (auto i : idx) {
            ((*x[i])[static_cast<std::size_t>(best_f)] <= best_t ? l : r).push_back(i);
        }
        tree.nodes[static_cast<std::size_t>(me)].feature = best_f;
        tree.nodes[static_cast<std::size_t>(me)].threshold = best_t;
        int li = build(std::move(l), depth + 1);
        int ri = build(std::move(r), depth + 1);
        tree.nodes[static_cast<std::size_t>(me)].left = li;
        tree.nodes[static_cast<std::size_t>(me)].right = ri;
        return me;
    }
};

}  // namespace detail

/// Groups labeled rows by query_id, keeping first-appearance order of queries and rows.
inline std::vector<std::vector<const FeatureVector*>> group_by_query(std::span<const FeatureVector> data)
{
    std::vector<std::vector<const FeatureVector*>> groups;
    std::map<std::string, std::size_t> index;
    for (const auto& fv : data) {
        if (!fv.label) {
            continue;
        }
        auto [it, fresh] = index.emplace(fv.query_id, groups.size());
        if (fresh) {
            groups.emplace_back();
        }
        groups[it->second].push_back(&fv);
    }
    return groups;
}

/// Gradient boosting of least-squares regression trees on lambda gradients.
inline LambdaMartModel train_lambdamart(std::span<const FeatureVector> data, const LambdaMartParams& params = {})
{
    auto groups = group_by_query(data);
    bool mixed = false;
    for (const auto& g : groups) {
        bool pos = false, neg = false;
        for (const auto* r : g) {
            (*r->label ? pos : neg) = true;
        }
        mixed = mixed || (pos && neg);
    }
    if (!mixed) {
        throw ValidationError("train_lambdamart: no query with both relevant and irrelevant labels");
    }
    LambdaMartModel model;
    model.learning_rate = params.learning_rate;
    std::vector<const std::vector<double>*> x;
    std::vector<int> labels;
    std::vector<std::pair<std::size_t, std::size_t>> spans;  // [begin, end) per group
    for (const auto& g : groups) {
        std::size_t b = x.size();
        for (const auto* r : g) {
            x.push_back(&r->features);
            labels.push_back(*r->label ? 1 : 0);
        }
        spans.emplace_back(b, x.size());
    }
    model.feature_count = x.front()->size();
    std::vector<double> scores(x.size(), 0.0);
    std::vector<double> lambdas(x.size(), 0.0);
    std::vector<std::size_t> all(x.size());
    std::iota(all.begin(), all.end(), 0);
    for (int t = 0; t < params.trees; ++t) {
        for (auto [b, e] : spans) {
            auto l = compute_lambdas(std::span(scores).subspan(b, e - b), std::span(labels).subspan(b, e - b),
                                     params.ndcg_k);
            std::copy(l.begin(), l.end(), lambdas.begin() + static_cast<std::ptrdiff_t>(b));
        }
        detail::TreeBuilder builder{x, lambdas, params, model.feature_count, {}};
        builder.build(all, 0);
        for (std::size_t i = 0; i < x.size(); ++i) {
            scores[i] += params.learning_rate * builder.tree.predict(*x[i]);
        }
        model.trees.push_back(std::move(builder.tree));
    }
    return model;
}

/// Pairs (relevant, irrelevant) where the irrelevant item is ordered first
/// (score descending, ties in input order).
inline std::size_t count_inversions(std::span<const double> scores, std::span<const int> labels)
{
    auto pos = rank_positions(scores);
    std::size_t inv = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[i] > 0 && labels[j] <= 0 && pos[j] < pos[i]) {
                ++inv;
            }
        }
    }
    return inv;
}

// ---------------------------------------------------------------------------

/// A learned model as a ranker over base-ranker features.
class FusedRanker final : public Ranker {
  public:
    FusedRanker(std::string name, FeatureSource source, LogitModel model)
        : name_(std::move(name)), source_(std::move(source)), logit_(std::move(model))
    {
        check(logit_->weights.size());
    }
    FusedRanker(std::string name, FeatureSource source, LambdaMartModel model)
        : name_(std::move(name)), source_(std::move(source)), mart_(std::move(model))
    {
        if (mart_->feature_count) {
            check(mart_->feature_count);
        }
    }

    std::string name() const override { return name_; }
    std::string kind() const override { return logit_ ? "logit" : "lambdamart"; }
    const FeatureSource& source() const { return source_; }

    std::vector<double> score(const Query& q, std::span<const Entity* const> cands) const override
    {
        std::vector<double> out;
        if (cands.empty()) {
            return out;
        }
        for (const auto& fv : featurize(q, cands, source_)) {
            out.push_back(logit_ ? score_logit(*logit_, fv.features) : mart_->score(fv.features));
        }
        return out;
    }

  private:
    void check(std::size_t n) const
    {
        if (n != source_.feature_count()) {
            throw ValidationError("model '" + name_ + "' expects " + std::to_string(n) + " features, source provides "
                                  + std::to_string(source_.feature_count()));
        }
    }

    std::string name_;
    FeatureSource source_;
    std::optional<LogitModel> logit_;
    std::optional<LambdaMartModel> mart_;
};

}  // namespace subj
