#pragma once

#include <httplib.h>

#include <memory>
#include <mutex>
#include <string>

#include "labeling.hpp"
#include "pipeline.hpp"
#include "snapshot.hpp"

namespace subj {

struct ApiResponse {
    int status = 200;
    json body;
};

inline ApiResponse api_error(int status, std::string message, json detail = nullptr)
{
    static const std::map<int, std::string> codes{{400, "bad_request"}, {404, "not_found"}, {409, "conflict"},
                                                  {500, "internal"},    {503, "unavailable"}};
    auto it = codes.find(status);
    return {status, {{"code", it == codes.end() ? "error" : it->second}, {"message", std::move(message)}, {"detail", detail}}};
}

/// HTTP facade over one immutable snapshot and the shared judgment log. Each
/// handler is a plain function of the request body so it can be exercised
/// without a socket; attach() wires them into an httplib server.
class Service {
  public:
    /// snapshot may be null: search then answers 503 while labeling and reports still work.
    Service(std::shared_ptr<const Snapshot> snapshot, fs::path data_dir)
        : snap_(std::move(snapshot)), data_(std::move(data_dir)), store_(data_ / layout::labels_dir)
    {}

    ApiResponse search(const json& body) const
    {
        if (!snap_) {
            return api_error(503, "index not loaded");
        }
        if (!body.is_object()) {
            return api_error(400, "request body must be an object");
        }
        std::string text, area, ranker_name;
        int k = 10;
        try {
            text = body.at("query_text").get<std::string>();
            area = body.at("area_id").get<std::string>();
            k = body.value("k", 10);
            ranker_name = body.value("ranker", std::string("opinedb"));
        } catch (const json::exception& e) {
            return api_error(400, "malformed search request", e.what());
        }
        if (trim(text).empty()) {
            return api_error(400, "query_text must not be empty");
        }
        if (k < 1) {
            return api_error(400, "k must be >= 1", {{"k", k}});
        }
        if (!snap_->corpus().areas().contains(area)) {
            return api_error(400, "unknown area '" + area + "'", {{"area_id", area}});
        }
        if (!snap_->has_ranker(ranker_name)) {
            return api_error(400, "unknown ranker '" + ranker_name + "'", {{"ranker", ranker_name}});
        }
        std::shared_ptr<const Ranker> ranker;
        try {
            ranker = snap_->ranker(ranker_name);
        } catch (const Error& e) {
            return api_error(503, "ranker '" + ranker_name + "' is not available", e.what());
        }
        Query q{"search", text, area, 0.0};
        auto list = rank(*ranker, q, snap_->corpus(), k);

        const auto kind = ranker->kind();
        const bool explain = kind == "opinedb" || kind == "dense" || kind == "logit" || kind == "lambdamart";
        json attributes = json::array();
        bool covered = false;
        std::shared_ptr<const SentenceStore> sentences;
        Vector qv;
        if (explain) {
            if (auto od = interpreter()) {
                auto interp = od->interpret(text);
                covered = interp.covered;
                for (const auto& m : interp.matches) {
                    attributes.push_back({{"name", m.attribute}, {"weight", m.weight}, {"similarity", m.similarity}});
                }
            }
            try {
                sentences = snap_->sentences();
                qv = snap_->provider().embed(text);
            } catch (const Error&) {
                sentences.reset();
            }
        }
        json results = json::array();
        for (const auto& e : list.entries) {
            const auto& ent = snap_->corpus().entity(e.entity_id);
            json item{{"entity",
                       {{"id", ent.id},
                        {"name", ent.name},
                        {"area_id", ent.area_id},
                        {"area_name", snap_->corpus().areas().at(ent.area_id).name},
                        {"overall_rating", ent.overall_rating}}},
                      {"score", e.score}};
            if (explain) {
                json evidence = json::array();
                if (sentences) {
                    for (const auto& h : entity_evidence(*sentences, qv, ent.id, 3)) {
                        const auto& rv = snap_->corpus().review(h.review_id);
                        evidence.push_back({{"review_id", h.review_id},
                                            {"sentence_index", h.sentence_index},
                                            {"similarity", h.similarity},
                                            {"text", rv.sentences.at(static_cast<std::size_t>(h.sentence_index))}});
                    }
                }
                item["explanation"] = {{"covered", covered}, {"attributes", attributes}, {"evidence", evidence}};
            }
            results.push_back(std::move(item));
        }
        return {200, {{"ranker", ranker_name}, {"query_text", text}, {"area_id", area}, {"k", k}, {"results", results}}};
    }

    ApiResponse next_assignment(const std::string& worker) const
    {
        if (trim(worker).empty()) {
            return api_error(400, "worker_id is required");
        }
        std::lock_guard lock(mu_);
        if (store_.rounds().empty()) {
            return api_error(404, "no open labeling round");
        }
        const auto* round = store_.current_round();
        if (!round) {
            return {200, {{"assignment", nullptr}, {"round", store_.rounds().back().number},
                          {"progress", progress_json(store_.rounds().back())}}};
        }
        auto pair = store_.next_for(worker);
        json out{{"round", round->number}, {"progress", progress_json(*round)}, {"assignment", nullptr}};
        if (pair) {
            out["assignment"] = assignment_json(*pair);
        }
        return {200, out};
    }

    ApiResponse submit(const json& body)
    {
        Judgment j;
        try {
            j.query_id = body.at("query_id").get<std::string>();
            j.entity_id = body.at("entity_id").get<std::string>();
            j.worker_id = body.at("worker_id").get<std::string>();
            j.label = body.at("label").get<bool>();
            j.evidence = body.value("evidence", std::string());
            j.elapsed_seconds = body.value("elapsed_seconds", 0.0);
        } catch (const json::exception& e) {
            return api_error(400, "malformed judgment", e.what());
        }
        std::lock_guard lock(mu_);
        try {
            store_.submit(j);
        } catch (const DuplicateError& e) {
            return api_error(409, e.what());
        } catch (const NotFoundError& e) {
            return api_error(404, e.what());
        } catch (const ValidationError& e) {
            return api_error(400, e.what());
        }
        QueryEntityPair p{j.query_id, j.entity_id};
        json out{{"status", "accepted"}, {"aggregated", nullptr}};
        if (store_.labeled(p)) {
            auto a = store_.aggregate(p);
            out["aggregated"] = {{"query_id", a.query_id}, {"entity_id", a.entity_id}, {"relevant", a.relevant},
                                 {"positive", a.positive}, {"total", a.total}};
            export_labels(store_, data_ / layout::labels);
        }
        return {200, out};
    }

    ApiResponse progress() const
    {
        std::lock_guard lock(mu_);
        json rounds = json::array();
        for (const auto& r : store_.rounds()) {
            json pj = progress_json(r);
            pj["round"] = r.number;
            pj["rankers"] = r.rankers;
            rounds.push_back(pj);
        }
        return {200, {{"rounds", rounds}}};
    }

    /// Most recently written summary.json under reports/ (ties by path).
    ApiResponse latest_report() const
    {
        auto root = data_ / layout::reports_dir;
        std::optional<std::pair<fs::file_time_type, fs::path>> best;
        if (fs::is_directory(root)) {
            for (const auto& entry : fs::recursive_directory_iterator(root)) {
                if (!entry.is_regular_file() || entry.path().filename() != "summary.json") continue;
                std::pair cand{entry.last_write_time(), entry.path()};
                if (!best || cand > *best) best = cand;
            }
        }
        if (!best) {
            return api_error(404, "no evaluation report has been written");
        }
        json summary;
        try {
            summary = json::parse(read_file(best->second));
        } catch (const json::exception& e) {
            return api_error(500, "report is unreadable", e.what());
        }
        return {200, {{"report", fs::relative(best->second.parent_path(), root).generic_string()}, {"summary", summary}}};
    }

    ApiResponse areas() const
    {
        if (!snap_) {
            return api_error(503, "index not loaded");
        }
        json out = json::array();
        for (const auto& a : snap_->corpus().areas().areas()) {
            out.push_back({{"id", a.id}, {"name", a.name}, {"parent_id", a.parent_id ? json(*a.parent_id) : json(nullptr)}});
        }
        return {200, {{"areas", out}}};
    }

    void attach(httplib::Server& server)
    {
        auto send = [](httplib::Response& res, const ApiResponse& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json");
        };
        auto parse = [](const httplib::Request& req) -> std::optional<json> {
            try {
                return json::parse(req.body);
            } catch (const json::exception&) {
                return std::nullopt;
            }
        };
        server.Post("/search", [=, this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse(req);
            send(res, body ? search(*body) : api_error(400, "request body is not valid JSON"));
        });
        server.Get("/labeling/next", [=, this](const httplib::Request& req, httplib::Response& res) {
            send(res, next_assignment(req.get_param_value("worker_id")));
        });
        server.Post("/labeling/judgment", [=, this](const httplib::Request& req, httplib::Response& res) {
            auto body = parse(req);
            send(res, body ? submit(*body) : api_error(400, "request body is not valid JSON"));
        });
        server.Get("/labeling/progress",
                   [=, this](const httplib::Request&, httplib::Response& res) { send(res, progress()); });
        server.Get("/reports/latest",
                   [=, this](const httplib::Request&, httplib::Response& res) { send(res, latest_report()); });
        server.Get("/areas", [=, this](const httplib::Request&, httplib::Response& res) { send(res, areas()); });
        server.set_exception_handler([=](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
            std::string what = "unknown error";
            try {
                std::rethrow_exception(ep);
            } catch (const std::exception& e) {
                what = e.what();
            } catch (...) {
            }
            send(res, api_error(500, "internal error", what));
        });
    }

  private:
    std::shared_ptr<const OpineDbRanker> interpreter() const
    {
        if (!snap_->has_ranker("opinedb")) return nullptr;
        try {
            return std::dynamic_pointer_cast<const OpineDbRanker>(snap_->ranker("opinedb"));
        } catch (const Error&) {
            return nullptr;
        }
    }

    json progress_json(const LabelingRound& r) const
    {
        auto [done, total] = store_.progress(r);
        return {{"completed", done}, {"assigned", total}};
    }

    json assignment_json(const QueryEntityPair& p) const
    {
        json out{{"query_id", p.first}, {"entity_id", p.second}};
        if (!snap_) return out;
        const auto& q = snap_->query(p.first);
        const auto& e = snap_->corpus().entity(p.second);
        json reviews = json::array();
        for (const auto& rid : e.review_ids) {
            reviews.push_back({{"id", rid}, {"text", snap_->corpus().review(rid).text}});
        }
        out["query"] = {{"id", q.id}, {"text", q.text}, {"area_id", q.area_id}};
        out["entity"] = {{"id", e.id},
                         {"name", e.name},
                         {"area_id", e.area_id},
                         {"description", e.description},
                         {"overall_rating", e.overall_rating},
                         {"aspect_ratings", e.aspect_ratings},
                         {"reviews", reviews}};
        return out;
    }

    std::shared_ptr<const Snapshot> snap_;
    fs::path data_;
    mutable std::mutex mu_;
    LabelStore store_;
};

}  // namespace subj
