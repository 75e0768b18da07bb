#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "corpus.hpp"
#include "rankers.hpp"

namespace subj {

using QueryEntityPair = std::pair<std::string, std::string>;

struct Judgment {
    std::string query_id;
    std::string entity_id;
    std::string worker_id;
    bool label = false;
    std::string evidence;
    int round = 0;
    double elapsed_seconds = 0.0;

    json to_json() const
    {
        return {{"query_id", query_id}, {"entity_id", entity_id}, {"worker_id", worker_id},
                {"label", label},       {"evidence", evidence},   {"round", round},
                {"elapsed_seconds", elapsed_seconds}};
    }

    static Judgment from_json(const json& j)
    {
        return {j.at("query_id").get<std::string>(),
                j.at("entity_id").get<std::string>(),
                j.at("worker_id").get<std::string>(),
                j.at("label").get<bool>(),
                j.value("evidence", std::string()),
                j.value("round", 0),
                j.value("elapsed_seconds", 0.0)};
    }
};

struct AggregatedLabel {
    std::string query_id;
    std::string entity_id;
    bool relevant = false;
    int positive = 0;
    int total = 0;
};

struct LabelingRound {
    int number = 0;
    std::vector<std::string> rankers;
    int k = 10;
    std::vector<QueryEntityPair> pairs;
};

/// Relevant iff at least 2 of the 3 votes are positive.
inline bool majority_vote(std::span<const bool> votes)
{
    if (votes.size() != 3) {
        throw ValidationError("majority vote needs exactly 3 judgments, got " + std::to_string(votes.size()));
    }
    return std::count(votes.begin(), votes.end(), true) >= 2;
}

/// Rounds plus the append-only judgment log. Backed by a directory when one is
/// given (rounds.jsonl, judgments.jsonl), in memory otherwise. Not synchronized:
/// callers serialize writes.
class LabelStore {
  public:
    static constexpr int workers_per_pair = 3;

    LabelStore() = default;

    explicit LabelStore(fs::path dir) : dir_(std::move(dir))
    {
        if (dir_.empty()) {
            return;
        }
        fs::create_directories(dir_);
        if (fs::exists(dir_ / "rounds.jsonl")) {
            for_each_record(dir_ / "rounds.jsonl", [&](const json& r, std::size_t) {
                LabelingRound round{r.at("round").get<int>(), r.at("rankers").get<std::vector<std::string>>(),
                                    r.at("k").get<int>(), {}};
                for (const auto& p : r.at("pairs")) {
                    round.pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
                }
                index_round(round);
                rounds_.push_back(std::move(round));
            });
        }
        if (fs::exists(dir_ / "judgments.jsonl")) {
            for_each_record(dir_ / "judgments.jsonl", [&](const json& r, std::size_t) { record(Judgment::from_json(r)); });
        }
    }

    const std::vector<LabelingRound>& rounds() const { return rounds_; }
    const std::vector<Judgment>& judgments() const { return judgments_; }
    const fs::path& directory() const { return dir_; }

    bool assigned(const QueryEntityPair& p) const { return assigned_.count(p) != 0; }

    std::size_t judgment_count(const QueryEntityPair& p) const
    {
        auto it = by_pair_.find(p);
        return it == by_pair_.end() ? 0 : it->second.size();
    }

    bool labeled(const QueryEntityPair& p) const { return judgment_count(p) == workers_per_pair; }

    /// Registers a new round; its pairs must not overlap any earlier round.
    const LabelingRound& open_round(int number, std::vector<std::string> rankers, int k,
                                    std::vector<QueryEntityPair> pairs)
    {
        if (!rounds_.empty() && number <= rounds_.back().number) {
            throw ValidationError("round " + std::to_string(number) + " must be after round "
                                  + std::to_string(rounds_.back().number));
        }
        for (const auto& p : pairs) {
            if (assigned(p)) {
                throw DuplicateError("pair (" + p.first + ", " + p.second + ") already assigned in an earlier round");
            }
        }
        LabelingRound round{number, std::move(rankers), k, std::move(pairs)};
        if (!dir_.empty()) {
            json ps = json::array();
            for (const auto& p : round.pairs) {
                ps.push_back({p.first, p.second});
            }
            append_jsonl(dir_ / "rounds.jsonl", {{"round", round.number}, {"rankers", round.rankers}, {"k", round.k},
                                                 {"pairs", ps}});
        }
        index_round(round);
        rounds_.push_back(std::move(round));
        return rounds_.back();
    }

    /// Validates and appends a judgment.
    void submit(const Judgment& j)
    {
        if (trim(j.evidence).empty()) {
            throw ValidationError("judgment evidence must not be empty");
        }
        if (j.worker_id.empty()) {
            throw ValidationError("judgment worker_id must not be empty");
        }
        QueryEntityPair p{j.query_id, j.entity_id};
        auto rit = assigned_.find(p);
        if (rit == assigned_.end()) {
            throw NotFoundError("pair (" + j.query_id + ", " + j.entity_id + ") is not assigned in any round");
        }
        if (worker_seen_.count({p, j.worker_id})) {
            throw DuplicateError("worker '" + j.worker_id + "' already judged (" + j.query_id + ", " + j.entity_id + ")");
        }
        if (labeled(p)) {
            throw DuplicateError("pair (" + j.query_id + ", " + j.entity_id + ") already has "
                                 + std::to_string(workers_per_pair) + " judgments");
        }
        Judgment stored = j;
        stored.round = rit->second;
        if (!dir_.empty()) {
            append_jsonl(dir_ / "judgments.jsonl", stored.to_json());
        }
        record(std::move(stored));
    }

    AggregatedLabel aggregate(const QueryEntityPair& p) const
    {
        auto it = by_pair_.find(p);
        std::size_t n = it == by_pair_.end() ? 0 : it->second.size();
        if (n != workers_per_pair) {
            throw ValidationError("pair (" + p.first + ", " + p.second + ") has " + std::to_string(n)
                                  + " judgments, aggregation needs " + std::to_string(workers_per_pair));
        }
        AggregatedLabel out{p.first, p.second, false, 0, static_cast<int>(n)};
        bool v[3];
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = judgments_[it->second[i]].label;
            out.positive += v[i];
        }
        out.relevant = majority_vote(std::span<const bool>(v, 3));
        return out;
    }

    /// Majority-vote labels for every fully judged pair.
    LabelMap aggregated_labels() const
    {
        LabelMap out;
        for (const auto& [p, idx] : by_pair_) {
            if (idx.size() == workers_per_pair) {
                out[p.first][p.second] = aggregate(p).relevant;
            }
        }
        return out;
    }

    /// Latest round that still has pairs short of three judgments.
    const LabelingRound* current_round() const
    {
        for (auto it = rounds_.rbegin(); it != rounds_.rend(); ++it) {
            for (const auto& p : it->pairs) {
                if (!labeled(p)) {
                    return &*it;
                }
            }
        }
        return nullptr;
    }

    /// Least-judged pair of the open round this worker has not judged yet;
    /// ties by (query_id, entity_id). nullopt when nothing is left for the worker.
    std::optional<QueryEntityPair> next_for(const std::string& worker) const
    {
        const auto* round = current_round();
        if (!round) {
            throw NotFoundError("no open labeling round");
        }
        std::optional<QueryEntityPair> best;
        std::size_t best_n = workers_per_pair;
        for (const auto& p : round->pairs) {
            auto n = judgment_count(p);
            if (n >= workers_per_pair || worker_seen_.count({p, worker})) {
                continue;
            }
            if (!best || n < best_n || (n == best_n && p < *best)) {
                best = p;
                best_n = n;
            }
        }
        return best;
    }

    std::pair<std::size_t, std::size_t> progress(const LabelingRound& round) const
    {
        std::size_t done = 0;
        for (const auto& p : round.pairs) {
            done += labeled(p);
        }
        return {done, round.pairs.size()};
    }

  private:
    void index_round(const LabelingRound& r)
    {
        for (const auto& p : r.pairs) {
            assigned_.emplace(p, r.number);
        }
    }

    void record(Judgment j)
    {
        QueryEntityPair p{j.query_id, j.entity_id};
        worker_seen_.insert({p, j.worker_id});
        by_pair_[p].push_back(judgments_.size());
        judgments_.push_back(std::move(j));
    }

    fs::path dir_;
    std::vector<LabelingRound> rounds_;
    std::vector<Judgment> judgments_;
    std::map<QueryEntityPair, int> assigned_;
    std::map<QueryEntityPair, std::vector<std::size_t>> by_pair_;
    std::set<std::pair<QueryEntityPair, std::string>> worker_seen_;
};

inline void submit_judgment(LabelStore& store, const Judgment& j) { store.submit(j); }

/// Union over queries and rankers of the top-k entities, minus pairs already
/// assigned in an earlier round. Sorted by (query_id, entity_id).
inline std::vector<QueryEntityPair> build_pool(const std::vector<Query>& queries,
                                               const std::vector<std::shared_ptr<const Ranker>>& rankers,
                                               const Corpus& corpus, int k, const LabelStore& store)
{
    if (k < 1) {
        throw ValidationError("build_pool: k must be >= 1");
    }
    std::set<QueryEntityPair> pool;
    for (const auto& q : queries) {
        for (const auto& r : rankers) {
            for (const auto& e : rank(*r, q, corpus, k).entries) {
                QueryEntityPair p{q.id, e.entity_id};
                if (!store.assigned(p)) {
                    pool.insert(p);
                }
            }
        }
    }
    return {pool.begin(), pool.end()};
}

using EvidenceFn = std::function<std::string(const QueryEntityPair&)>;

/// Three synthetic workers per pair, each flipping the true label with probability p.
inline std::vector<Judgment> simulate_annotators(const std::vector<QueryEntityPair>& pool, const LabelMap& truth,
                                                 double noise, std::uint64_t seed, int round = 0,
                                                 const EvidenceFn& evidence = {})
{
    if (!(noise >= 0.0 && noise < 0.5)) {
        throw ValidationError("annotator noise must lie in [0, 0.5)");
    }
    Rng rng(seed);
    std::vector<Judgment> out;
    out.reserve(pool.size() * LabelStore::workers_per_pair);
    for (const auto& p : pool) {
        auto qit = truth.find(p.first);
        if (qit == truth.end() || !qit->second.count(p.second)) {
            throw NotFoundError("ground truth has no label for (" + p.first + ", " + p.second + ")");
        }
        const bool truth_label = qit->second.at(p.second);
        std::string ev = evidence ? evidence(p) : std::string();
        if (trim(ev).empty()) {
            ev = "reviewed entity card";
        }
        for (int w = 1; w <= LabelStore::workers_per_pair; ++w) {
            bool flip = rng.bernoulli(noise);
            double elapsed = rng.uniform(20.0, 90.0);
            out.push_back({p.first, p.second, "sim-" + std::to_string(w), flip ? !truth_label : truth_label, ev, round,
                           elapsed});
        }
    }
    return out;
}

}  // namespace subj
