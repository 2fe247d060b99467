#include "vulnlink/error.hpp"
#include "vulnlink/pipeline.hpp"
#include "vulnlink/service.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <iostream>

namespace {

using json = nlohmann::json;

int report_error(const std::string& code, const std::string& message, const json& extra = json::object()) {
    json err = {{"code", code}, {"message", message}};
    err.update(extra);
    std::cerr << json{{"error", err}}.dump() << '\n';
    return code == "dependency" ? 3 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    vulnlink::RunConfig config;
    CLI::App app{"Link attack descriptions to CVEs by embedding similarity"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    std::string sim = "cosine";
    app.add_option("--corpus", config.corpus, "Corpus JSONL file(s)")->envname("VULNLINK_CORPUS")->delimiter(',');
    app.add_option("--provider", config.provider, "Embedding provider: test:<dim>[:<max_tokens>] or remote:<dim>@<url>")
        ->envname("VULNLINK_PROVIDER");
    app.add_option("--sim", sim, "Similarity function")
        ->check(CLI::IsMember({"cosine", "dot"}))
        ->envname("VULNLINK_SIM");
    app.add_option("--rho", config.rho, "Decision threshold on the 0-100 scale")
        ->check(CLI::Range(0.0, 100.0))
        ->envname("VULNLINK_RHO");
    app.add_option("--k", config.k, "Top-K truncation")->check(CLI::PositiveNumber)->envname("VULNLINK_K");
    app.add_option("--grid", config.grid, "Sweep grid: a:b[:step] or a comma list (default 1:100)")
        ->envname("VULNLINK_GRID");
    app.add_option("--out", config.out, "Artifact directory")->envname("VULNLINK_OUT");
    app.add_option("--seed", config.seed, "Seed for sampled fixtures")->envname("VULNLINK_SEED");
    app.add_flag("--inclusive", config.inclusive, "Use >= instead of > for the prediction threshold")
        ->envname("VULNLINK_INCLUSIVE");
    app.add_flag("--direction-strict", config.direction_strict, "Follow links only in chain order")
        ->envname("VULNLINK_DIRECTION_STRICT");
    app.add_flag("--title-concat", config.title_concat, "Prepend titles to descriptions before embedding")
        ->envname("VULNLINK_TITLE_CONCAT");

    auto* ingest = app.add_subcommand("ingest", "Validate and clean the corpus");
    auto* annotate = app.add_subcommand("annotate", "Derive ground truth and link statistics");
    auto* embed = app.add_subcommand("embed", "Build the vector store");
    auto* predict = app.add_subcommand("predict", "Rank CVEs for every attack");
    auto* calibrate = app.add_subcommand("calibrate", "ROC, PR and top-K sweeps");
    calibrate->add_option("--balanced", config.balanced, "Sample this many positive and negative attacks")
        ->envname("VULNLINK_BALANCED");
    calibrate->add_option("--topk-max", config.topk_max, "Largest k of the top-K sweep")
        ->check(CLI::PositiveNumber)
        ->envname("VULNLINK_TOPK_MAX");
    auto* evaluate = app.add_subcommand("evaluate", "Precision, recall, F1 and overlap tables");
    auto* news = app.add_subcommand("news", "Predict for news reports and run the M2-M4 oracles");
    news->add_option("--news-rho", config.news_rho, "Oracle threshold")
        ->check(CLI::Range(0.0, 100.0))
        ->envname("VULNLINK_NEWS_RHO");
    news->add_flag("--m3-full-store", config.m3_full_store, "M3 filters the whole ranking instead of the top-K list");

    auto* serve = app.add_subcommand("serve", "Serve predictions and the verdict store over HTTP");
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string token;
    std::size_t min_reviewers = 2;
    serve->add_option("--host", host)->envname("VULNLINK_HOST");
    serve->add_option("--port", port)->check(CLI::Range(0, 65535))->envname("VULNLINK_PORT");
    serve->add_option("--reviewer-token", token, "Require this X-Reviewer-Token on verdicts")
        ->envname("VULNLINK_REVIEWER_TOKEN");
    serve->add_option("--min-reviewers", min_reviewers)->check(CLI::PositiveNumber)->envname("VULNLINK_MIN_REVIEWERS");

    for (auto* sub : {ingest, annotate, embed, predict, calibrate, evaluate, news, serve}) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("usage", e.what());
    }

    try {
        config.sim = *vulnlink::parse_similarity(sim);
        auto* chosen = app.get_subcommands().front();
        if (chosen == serve) {
            vulnlink::ServiceConfig sc;
            sc.rho = config.rho;
            sc.k = config.k;
            sc.mode = config.inclusive ? vulnlink::ThresholdMode::Inclusive : vulnlink::ThresholdMode::Strict;
            sc.sim = config.sim;
            if (!token.empty()) {
                sc.reviewer_token = token;
            }
            sc.consensus.min_reviewers = min_reviewers;
            sc.verdict_log = (std::filesystem::path(config.out) / "verdicts.jsonl").string();
            sc.snapshot_path = (std::filesystem::path(config.out) / "validation_snapshot.json").string();
            vulnlink::ServiceApi api(vulnlink::load_service_data(config), sc);
            vulnlink::serve(api, host, port, [&](int bound, const std::function<void()>&) {
                std::cout << json{{"listening", host + ":" + std::to_string(bound)}}.dump() << std::endl;
            });
            return 0;
        }
        auto summary = vulnlink::run_stage(chosen->get_name(), config);
        std::cout << json{{"stage", summary.stage},
                          {"config_digest", vulnlink::config_digest(config)},
                          {"artifacts", summary.artifacts},
                          {"summary", json::parse(summary.summary_json)}}
                         .dump()
                  << '\n';
        return 0;
    } catch (const vulnlink::DependencyError& e) {
        return report_error(e.code(), e.what(), {{"missing_stage", e.stage()}, {"path", e.path()}});
    } catch (const vulnlink::Error& e) {
        return report_error(e.code(), e.what());
    } catch (const std::exception& e) {
        return report_error("internal", e.what());
    }
}
