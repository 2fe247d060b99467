/**
 * @file pipeline.hpp
 *
 * @brief Batch stages behind the command line.
 *
 * Each stage reads the artifacts of earlier stages from the output
 * directory and writes its own there. Running a stage before the stage that
 * produces its input raises DependencyError naming that stage. Every
 * artifact carries the digest of the configuration that produced it and no
 * artifact contains wall-clock data, so identical runs are byte-identical.
 *
 *   ingest     corpus.jsonl, ingest_report.json
 *   annotate   ground_truth.jsonl, link_stats.json
 *   embed      vectors.vlvs, embed_report.json
 *   predict    predictions.jsonl
 *   calibrate  roc.csv, pr.csv, topk.csv, calibration.json
 *   evaluate   report.tsv, overlap.jsonl
 *   news       news_predictions.jsonl, news_evaluation.json
 */
#pragma once

#include "vulnlink/service.hpp"
#include "vulnlink/similarity.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vulnlink {

struct RunConfig {
    std::vector<std::string> corpus;
    std::string provider = "test:384";
    SimilarityKind sim = SimilarityKind::Cosine;
    double rho = 58.0;
    std::size_t k = 20;
    /// "a:b[:step]" or a comma list; empty means integers 1..100.
    std::string grid;
    std::string out = "out";
    std::uint64_t seed = 42;
    /// Strict `>` for predictions and sweeps unless set.
    bool inclusive = false;
    bool direction_strict = false;
    /// Prepend each entry's title to its description before cleaning.
    bool title_concat = false;
    /// Positives and negatives each sampled for calibration; 0 uses every attack.
    std::size_t balanced = 0;
    /// Largest k of the top-k sweep.
    std::size_t topk_max = 50;
    double news_rho = 58.0;
    bool m3_full_store = false;
};

/// Checks the invariants: rho in [0,100], k >= 1, parsable grid.
void validate(const RunConfig& config);

std::vector<double> parse_grid(const std::string& spec);

/// Canonical JSON of every field that affects artifacts (`out` excluded).
std::string canonical_config(const RunConfig& config);

/// 16 hex digits of FNV-1a 64 over the canonical config.
std::string config_digest(const RunConfig& config);

/// JSON object stored in each artifact's metadata slot.
std::string artifact_meta(const RunConfig& config, const std::string& stage);

struct StageSummary {
    std::string stage;
    std::vector<std::string> artifacts;
    /// Small JSON object with the stage's headline numbers.
    std::string summary_json;
};

StageSummary run_ingest(const RunConfig& config);
StageSummary run_annotate(const RunConfig& config);
StageSummary run_embed(const RunConfig& config);
StageSummary run_predict(const RunConfig& config);
StageSummary run_calibrate(const RunConfig& config);
StageSummary run_evaluate(const RunConfig& config);
StageSummary run_news(const RunConfig& config);

/// Dispatches by stage name; throws PreconditionError for unknown names.
StageSummary run_stage(const std::string& stage, const RunConfig& config);

/// Loads what the service needs from the output directory.
ServiceData load_service_data(const RunConfig& config);

}  // namespace vulnlink
