#include "vulnlink/service.hpp"

#include "vulnlink/error.hpp"
#include "vulnlink/preproc.hpp"

#include "json.hpp"

#include <chrono>
#include <ctime>

namespace vulnlink {

namespace {

using json = nlohmann::json;

std::string utc_now() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

int status_for(const Error& e) {
    const auto& code = e.code();
    if (code == "lookup") {
        return 404;
    }
    if (code == "validation") {
        return 409;
    }
    if (code == "embedding" || code == "dependency") {
        return 503;
    }
    return 400;
}

ServiceResponse error_response(int status, const std::string& code, const std::string& message) {
    return {status, json{{"error", {{"code", code}, {"message", message}}}}.dump()};
}

}  // namespace

ServiceApi::ServiceApi(ServiceData data, ServiceConfig config) : data_(std::move(data)), config_(std::move(config)) {
    validation_ = std::make_unique<ValidationStore>(data_.predictions, data_.truth, config_.consensus,
                                                    config_.verdict_log);
}

EntryId ServiceApi::resolve(const std::string& raw) const {
    const auto* entry = data_.corpus.find_raw(raw);
    if (entry == nullptr) {
        throw LookupError("unknown entry '" + raw + "'");
    }
    return entry->id;
}

std::string ServiceApi::predict(const std::string& body) const {
    json req;
    try {
        req = json::parse(body);
    } catch (const json::exception& e) {
        throw PreconditionError(std::string("request body is not JSON: ") + e.what());
    }
    auto k = req.value("k", static_cast<long long>(config_.k));
    auto rho = req.value("rho", config_.rho);
    if (k < 1) {
        throw PreconditionError("k must be >= 1");
    }
    if (rho < 0.0 || rho > 100.0) {
        throw PreconditionError("rho must lie in [0, 100]");
    }
    auto mode = config_.mode;
    if (req.contains("inclusive")) {
        mode = req.at("inclusive").get<bool>() ? ThresholdMode::Inclusive : ThresholdMode::Strict;
    }

    std::optional<EntryId> subject;
    EmbeddingVector query;
    if (req.contains("entry_id")) {
        subject = resolve(req.at("entry_id").get<std::string>());
        if (const auto* stored = data_.store.find(*subject)) {
            query = *stored;
        } else {
            const auto& entry = data_.corpus.at(*subject);
            auto text = entry.clean_text.empty() ? clean_text(entry.raw_text).text : entry.clean_text;
            if (text.empty()) {
                throw PreconditionError("entry '" + subject->raw + "' has no text to embed");
            }
            if (!data_.provider) {
                throw PreconditionError("no embedding provider configured");
            }
            std::vector<std::string> batch{text};
            query = std::move(embed_batch(*data_.provider, batch).front());
        }
    } else if (req.contains("text")) {
        auto text = clean_text(req.at("text").get<std::string>()).text;
        if (text.empty()) {
            throw PreconditionError("query text is empty after cleaning");
        }
        if (!data_.provider) {
            throw PreconditionError("no embedding provider configured");
        }
        std::vector<std::string> batch{text};
        query = std::move(embed_batch(*data_.provider, batch).front());
    } else {
        throw PreconditionError("predict needs \"text\" or \"entry_id\"");
    }
    if (data_.store.is_normalized()) {
        query = normalized(std::move(query));
    }

    auto ranking = rank_cves(query, data_.store, config_.sim);
    auto set = predict_set(subject.value_or(EntryId{EntryKind::NewsReport, "query"}), std::move(ranking), rho,
                           static_cast<std::size_t>(k), mode);
    auto limit = std::min<std::size_t>(static_cast<std::size_t>(k), set.ranked.size());
    bool has_truth = subject && data_.truth.contains(*subject);

    auto items = json::array();
    for (std::size_t i = 0; i < limit; ++i) {
        const auto& item = set.ranked[i];
        json row = {{"cve", item.cve.raw},
                    {"score", item.score},
                    {"display", display_score(item.score)},
                    {"kept", passes_threshold(item.score, rho, mode)}};
        row["in_truth"] = has_truth ? json(data_.truth.has_pair(*subject, item.cve)) : json(nullptr);
        if (subject && validation_->is_candidate(*subject, item.cve)) {
            row["state"] = to_string(validation_->state(*subject, item.cve));
        } else {
            row["state"] = nullptr;
        }
        items.push_back(std::move(row));
    }
    json out = {{"rho", rho}, {"k", k}, {"inclusive", mode == ThresholdMode::Inclusive}, {"items", std::move(items)}};
    out["entry_id"] = subject ? json(subject->raw) : json(nullptr);
    return out.dump();
}

std::string ServiceApi::calibration() const {
    json out = {{"rho", config_.rho},
                {"k", config_.k},
                {"inclusive", config_.mode == ThresholdMode::Inclusive},
                {"sim", to_string(config_.sim)}};
    out["calibration"] = data_.calibration_json ? json::parse(*data_.calibration_json) : json(nullptr);
    return out.dump();
}

std::string ServiceApi::queue(const std::optional<std::string>& attack) const {
    std::optional<EntryId> filter;
    if (attack && !attack->empty()) {
        filter = resolve(*attack);
    }
    auto pairs = json::array();
    for (const auto& p : validation_->pending(filter)) {
        pairs.push_back({{"attack", p.subject.raw},
                         {"cve", p.cve.raw},
                         {"score", p.score},
                         {"display", display_score(p.score)},
                         {"round", validation_->current_round(p.subject, p.cve)}});
    }
    return json{{"pending", std::move(pairs)}}.dump();
}

std::string ServiceApi::verdict(const std::string& body, const std::optional<std::string>& token) {
    if (config_.reviewer_token && token != config_.reviewer_token) {
        throw PreconditionError("unauthorized");
    }
    json req;
    try {
        req = json::parse(body);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("request body is not JSON: ") + e.what());
    }
    if (!req.is_object() || !req.contains("attack")) {
        throw ValidationError("verdict needs \"attack\"");
    }
    if (!req.contains("kind")) {
        req["kind"] = to_string(resolve(req.at("attack").get<std::string>()).kind);
    }
    if (!req.contains("timestamp")) {
        req["timestamp"] = utc_now();
    }
    auto result = validation_->submit(record_from_json(req.dump()));
    if (!config_.snapshot_path.empty() && result.state != PairState::Open) {
        validation_->snapshot(config_.snapshot_path);
    }
    return json{{"id", result.id}, {"duplicate", result.duplicate}, {"state", to_string(result.state)}}.dump();
}

std::string ServiceApi::enrichment() const {
    return enrichment_jsonl(validation_->enrichment());
}

ServiceResponse ServiceApi::handle(const ServiceRequest& request) {
    auto param = [&](const std::map<std::string, std::string>& m, const std::string& key) {
        auto it = m.find(key);
        return it == m.end() ? std::optional<std::string>{} : std::optional<std::string>{it->second};
    };
    try {
        if (request.method == "POST" && request.path == "/predict") {
            return {200, predict(request.body)};
        }
        if (request.method == "GET" && request.path == "/calibration") {
            return {200, calibration()};
        }
        if (request.method == "GET" && request.path == "/queue") {
            return {200, queue(param(request.query, "attack"))};
        }
        if (request.method == "POST" && request.path == "/verdict") {
            auto token = param(request.headers, "X-Reviewer-Token");
            if (config_.reviewer_token && token != config_.reviewer_token) {
                return error_response(401, "unauthorized", "missing or wrong reviewer token");
            }
            return {200, verdict(request.body, token)};
        }
        if (request.method == "GET" && request.path == "/enrichment") {
            return {200, enrichment(), "application/x-ndjson"};
        }
        if (request.method == "GET" && request.path == "/health") {
            return {200, R"({"status":"ok"})"};
        }
        return error_response(404, "not_found", request.method + " " + request.path);
    } catch (const Error& e) {
        return error_response(status_for(e), e.code(), e.what());
    } catch (const std::exception& e) {
        return error_response(400, "bad_request", e.what());
    }
}

}  // namespace vulnlink
