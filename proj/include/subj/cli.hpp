#pragma once

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "pipeline.hpp"
#include "service.hpp"

namespace subj {

namespace detail {

inline void echo(std::ostream& out, const std::string& command, const json& config)
{
    out << json{{"command", command}, {"config", config}}.dump() << '\n';
}

inline void copy_if_present(const fs::path& from, const fs::path& to)
{
    if (fs::exists(from)) {
        fs::copy_file(from, to, fs::copy_options::overwrite_existing);
    }
}

/// Fused-model arguments to eval are registry names or model file paths.
inline std::vector<std::shared_ptr<const Ranker>> resolve_models(const Snapshot& snap, const std::vector<std::string>& models)
{
    std::vector<std::shared_ptr<const Ranker>> out;
    for (const auto& m : models) {
        if (snap.has_ranker(m)) {
            out.push_back(snap.ranker(m));
        } else {
            fs::path p = m;
            out.push_back(snap.fused_from_file(p.stem().string(), p));
        }
    }
    return out;
}

inline std::vector<std::string> index_components(const Snapshot* snap, const std::vector<std::string>& rankers)
{
    std::set<std::string> out;
    for (const auto& r : rankers) {
        std::string kind = r;
        if (snap && snap->has_ranker(r)) kind = snap->registry().at(r).value("kind", r);
        if (kind == "bm25" || kind == "dense" || kind == "opinedb") {
            out.insert(kind);
        } else if (kind == "logit" || kind == "lambdamart") {
            out.insert({"bm25", "dense", "opinedb"});
        } else if (kind != "rating" && kind != "random") {
            throw ValidationError("unknown ranker '" + r + "'");
        }
    }
    return {out.begin(), out.end()};
}

}  // namespace detail

/// Entry point of the `subj` tool. Exit codes: 0 success, 1 usage or
/// validation error, 2 internal error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Subjective search: corpus generation, indexing, labeling, training, evaluation and serving", "subj"};
    app.set_config("--config", "", "Optional config file (TOML/INI); flags override it");
    app.require_subcommand(1);

    std::string data, out_dir, in_dir, model_kind, model_out, pivot = "opinedb";
    std::uint64_t seed = 0;
    int entities = 200, queries = 120, round = 1, k = 10, port = 8080;
    double noise = 0.1, positive_rate = GeneratorParams{}.target_positive_rate;
    std::vector<std::string> ranker_list, model_list;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with planted ground truth");
    synth->add_option("--seed", seed, "Random seed")->required();
    synth->add_option("--out", out_dir, "Output data directory")->required();
    synth->add_option("--entities", entities, "Entity count")->check(CLI::PositiveNumber);
    synth->add_option("--queries", queries, "Query count")->check(CLI::NonNegativeNumber);
    synth->add_option("--positive-rate", positive_rate, "Target fraction of relevant candidate pairs")
        ->check(CLI::Range(0.01, 0.99));

    auto* ingest = app.add_subcommand("ingest", "Validate and normalize a provided corpus");
    ingest->add_option("--in", in_dir, "Input directory")->required();
    ingest->add_option("--out", out_dir, "Output data directory")->required();

    auto* index = app.add_subcommand("index", "Build BM25 postings, sentence vectors and attribute histograms");
    index->add_option("--data", data, "Data directory")->required();
    index->add_option("--rankers", ranker_list, "Rankers to index for (default: all)")->delimiter(',');

    auto* label = app.add_subcommand("label-sim", "Pool top-k results and label them with simulated annotators");
    label->add_option("--data", data, "Data directory")->required();
    label->add_option("--round", round, "Round number")->required();
    label->add_option("--rankers", ranker_list, "Rankers to pool")->required()->delimiter(',');
    label->add_option("--k", k, "Pool depth")->check(CLI::PositiveNumber);
    label->add_option("--noise", noise, "Per-worker flip probability")->check(CLI::Range(0.0, 0.4999999));
    label->add_option("--seed", seed, "Random seed");

    auto* train = app.add_subcommand("train", "Train a fusion model on the training split");
    train->add_option("--data", data, "Data directory")->required();
    train->add_option("--model", model_kind, "logit or lambdamart")->required()->check(CLI::IsMember({"logit", "lambdamart"}));
    train->add_option("--out", model_out, "Model file (default: the path registered for the model)");

    auto* eval = app.add_subcommand("eval", "Evaluate rankers on the test split and write reports");
    eval->add_option("--data", data, "Data directory")->required();
    eval->add_option("--rankers", ranker_list, "Base rankers")->delimiter(',');
    eval->add_option("--models", model_list, "Fused rankers: registry names or model files")->delimiter(',');
    eval->add_option("--out", out_dir, "Report directory")->required();
    eval->add_option("--pivot", pivot, "Pivot ranker for the orthogonality table");

    auto* serve = app.add_subcommand("serve", "Serve search, labeling and reports over HTTP");
    serve->add_option("--data", data, "Data directory")->envname("SUBJ_DATA_DIR")->required();
    serve->add_option("--port", port, "Port")->envname("SUBJ_PORT")->check(CLI::Range(0, 65535));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        err << app.help();
        return 1;
    }

    try {
        if (synth->parsed()) {
            GeneratorParams p;
            p.entities = entities;
            p.queries = queries;
            p.target_positive_rate = positive_rate;
            detail::echo(out, "synth", {{"seed", seed}, {"out", out_dir}, {"entities", entities}, {"queries", queries},
                                        {"positive_rate", positive_rate}});
            auto bench = generate_synthetic(seed, p);
            write_benchmark(out_dir, bench);
            out << json{{"entities", bench.corpus.entities().size()}, {"reviews", bench.corpus.reviews().size()},
                        {"queries", bench.queries.size()}}
                       .dump()
                << '\n';
        } else if (ingest->parsed()) {
            detail::echo(out, "ingest", {{"in", in_dir}, {"out", out_dir}});
            auto corpus = load_corpus(in_dir);
            std::vector<Query> qs;
            if (fs::exists(fs::path(in_dir) / files::queries)) {
                qs = load_queries(fs::path(in_dir) / files::queries, corpus.areas());
            }
            fs::create_directories(out_dir);
            save_corpus(out_dir, corpus);
            save_queries(fs::path(out_dir) / files::queries, qs);
            for (const char* f : {files::truth, layout::schema, layout::lexicon, layout::config, layout::rankers,
                                  "rules.jsonl", "aspects.txt", "copulas.txt", "intensifiers.txt", "negations.txt",
                                  "stopwords.txt", "quality.jsonl", "query_truth.jsonl"}) {
                detail::copy_if_present(fs::path(in_dir) / f, fs::path(out_dir) / f);
            }
            if (fs::exists(fs::path(out_dir) / files::truth)) {
                load_labels(fs::path(out_dir) / files::truth);  // validates the record shape
            }
            out << json{{"entities", corpus.entities().size()}, {"reviews", corpus.reviews().size()},
                        {"queries", qs.size()}}
                       .dump()
                << '\n';
        } else if (index->parsed()) {
            auto snap = Snapshot::open(data);
            auto comps = ranker_list.empty() ? std::vector<std::string>{"bm25", "dense", "opinedb"}
                                             : detail::index_components(snap.get(), ranker_list);
            detail::echo(out, "index", {{"data", data}, {"components", comps}, {"settings", snap->settings().to_json()}});
            out << build_indexes(data, comps).dump() << '\n';
        } else if (label->parsed()) {
            auto snap = Snapshot::open(data);
            detail::echo(out, "label-sim", {{"data", data}, {"round", round}, {"rankers", ranker_list}, {"k", k},
                                            {"noise", noise}, {"seed", seed}});
            out << run_simulated_round(*snap, round, ranker_list, k, noise, seed).to_json().dump() << '\n';
        } else if (train->parsed()) {
            auto snap = Snapshot::open(data);
            fs::path dest = model_out;
            if (dest.empty()) {
                dest = fs::path(data) / snap->registry().at(model_kind).value("model", std::string("models/" + model_kind));
            }
            detail::echo(out, "train", {{"data", data}, {"model", model_kind}, {"out", dest.string()},
                                        {"settings", snap->settings().to_json()}});
            out << train_model(*snap, model_kind, dest).to_json().dump() << '\n';
        } else if (eval->parsed()) {
            auto snap = Snapshot::open(data);
            if (!fs::exists(fs::path(data) / layout::manifest)) {
                throw ValidationError("no index in '" + data + "'; run `subj index --data " + data + "` first");
            }
            if (ranker_list.empty() && model_list.empty()) {
                throw ValidationError("eval needs --rankers and/or --models");
            }
            detail::echo(out, "eval", {{"data", data}, {"rankers", ranker_list}, {"models", model_list}, {"out", out_dir},
                                       {"pivot", pivot}, {"settings", snap->settings().to_json()}});
            auto labels = load_pooled_labels(*snap);
            auto split = split_queries(snap->queries());
            std::vector<std::shared_ptr<const Ranker>> rs = snap->rankers(ranker_list);
            for (auto& m : detail::resolve_models(*snap, model_list)) rs.push_back(m);
            EvalReport report;
            report.test_queries = split.test;
            for (const auto& r : rs) {
                report.rankers.push_back(evaluate_ranker(*snap, *r, split.test, labels, report.max_k));
            }
            auto pq = report.per_query_p10();
            if (pq.count(pivot)) report.orthogonality = orthogonality_table(pq, pivot, 0.5);
            out << write_report(report, out_dir).dump() << '\n';
        } else if (serve->parsed()) {
            std::shared_ptr<const Snapshot> snap;
            try {
                snap = Snapshot::open(data);
            } catch (const Error& e) {
                err << "warning: serving without a snapshot: " << e.what() << '\n';
            }
            detail::echo(out, "serve", {{"data", data}, {"port", port}});
            Service service(snap, data);
            httplib::Server server;
            service.attach(server);
            out << "listening on port " << port << std::endl;
            if (!server.listen("0.0.0.0", port)) {
                throw Error("could not bind port " + std::to_string(port));
            }
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

}  // namespace subj
