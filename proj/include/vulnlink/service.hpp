/**
 * @file service.hpp
 *
 * @brief Request/response surface of the long-running service.
 *
 * ServiceApi owns the loaded corpus, vectors, ground truth, stored
 * predictions and the verdict store, and answers requests without knowing
 * about the transport. `serve` binds it to HTTP.
 *
 *   POST /predict     {"text"|"entry_id", "k", "rho", "inclusive"} → ranked top-k
 *   GET  /calibration                                                → operating point + sweep summary
 *   GET  /queue?attack=ID                                            → pending pairs
 *   POST /verdict     ValidationRecord as JSON                       → {"id", "duplicate", "state"}
 *   GET  /enrichment                                                 → one JSON line per accepted pair
 */
#pragma once

#include "vulnlink/annotate.hpp"
#include "vulnlink/corpus.hpp"
#include "vulnlink/embedding.hpp"
#include "vulnlink/similarity.hpp"
#include "vulnlink/validation.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace vulnlink {

struct ServiceConfig {
    double rho = 58.0;
    std::size_t k = 20;
    ThresholdMode mode = ThresholdMode::Strict;
    SimilarityKind sim = SimilarityKind::Cosine;
    /// When set, POST /verdict requires a matching X-Reviewer-Token header.
    std::optional<std::string> reviewer_token;
    ConsensusConfig consensus;
    /// Verdict log; empty keeps verdicts in memory only.
    std::string verdict_log;
    std::string snapshot_path;
};

struct ServiceData {
    Corpus corpus;
    EmbeddingStore store;
    std::unique_ptr<EmbeddingProvider> provider;
    GroundTruthMap truth;
    std::vector<PredictionSet> predictions;
    /// Contents of the calibration artifact, if one was produced.
    std::optional<std::string> calibration_json;
};

struct ServiceRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::map<std::string, std::string> headers;
    std::string body;
};

struct ServiceResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

class ServiceApi {
public:
    ServiceApi(ServiceData data, ServiceConfig config);

    ServiceApi(const ServiceApi&) = delete;
    ServiceApi& operator=(const ServiceApi&) = delete;

    /// Never throws; library errors become JSON error responses.
    ServiceResponse handle(const ServiceRequest& request);

    std::string predict(const std::string& body) const;
    std::string calibration() const;
    std::string queue(const std::optional<std::string>& attack) const;
    std::string verdict(const std::string& body, const std::optional<std::string>& token);
    std::string enrichment() const;

    const ValidationStore& validation() const { return *validation_; }

private:
    EntryId resolve(const std::string& raw) const;

    ServiceData data_;
    ServiceConfig config_;
    std::unique_ptr<ValidationStore> validation_;
};

/// Called once the listener is bound, with the bound port and a callable
/// that stops the server from any thread.
using ServeReady = std::function<void(int port, std::function<void()> stop)>;

/// Blocks serving `api` over HTTP until stopped. Port 0 binds a free port.
void serve(ServiceApi& api, const std::string& host, int port, const ServeReady& on_ready = {});

}  // namespace vulnlink
