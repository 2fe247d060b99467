#include "vulnlink/news.hpp"

#include "vulnlink/error.hpp"
#include "vulnlink/preproc.hpp"

#include "json.hpp"

#include <set>

namespace vulnlink {

namespace {

using json = nlohmann::json;

EmbeddingVector embed_one(EmbeddingProvider& provider, const EmbeddingStore& store, const std::string& text) {
    std::vector<std::string> batch{text};
    auto v = std::move(embed_batch(provider, batch).front());
    return store.is_normalized() ? normalized(std::move(v)) : v;
}

std::string cve_text(const Corpus& corpus, const EntryId& cve) {
    const auto* entry = corpus.find(cve);
    if (entry == nullptr) {
        throw LookupError("referenced " + cve.raw + " is not in the corpus");
    }
    return entry->clean_text.empty() ? clean_text(entry->raw_text).text : entry->clean_text;
}

NewsValidation filter_against(const EntryId& report, NewsMethod method, const Ranking& candidates,
                              const EmbeddingVector& reference, const EmbeddingStore& store,
                              const NewsOracleConfig& config) {
    NewsValidation out;
    out.report = report;
    out.method = method;
    for (const auto& c : candidates) {
        double s = similarity(config.sim, reference, store.at(c.cve));
        (passes_threshold(s, config.rho, config.mode) ? out.kept : out.dropped).push_back({c.cve, s});
    }
    return out;
}

json ranking_json(const Ranking& r) {
    auto arr = json::array();
    for (const auto& item : r) {
        arr.push_back({{"cve", item.cve.raw}, {"score", item.score}, {"display", display_score(item.score)}});
    }
    return arr;
}

}  // namespace

std::string_view to_string(NewsMethod method) {
    switch (method) {
        case NewsMethod::M1: return "M1";
        case NewsMethod::M2: return "M2";
        case NewsMethod::M3: return "M3";
        case NewsMethod::M4: return "M4";
    }
    return "?";
}

std::string_view to_string(MatchCategory category) {
    switch (category) {
        case MatchCategory::MatchingCveId: return "matching_cve_id";
        case MatchCategory::NoMatchingCveId: return "no_matching_cve_id";
        case MatchCategory::NoCveIdInReport: return "no_cve_id_in_report";
    }
    return "?";
}

PredictionSet predict_from_news(const NewsReport& report, EmbeddingProvider& provider, const EmbeddingStore& store,
                                std::size_t k, SimilarityKind sim) {
    auto cleaned = clean_text(report.body).text;
    if (cleaned.empty()) {
        throw PreconditionError("news report " + report.id.raw + " is empty after cleaning");
    }
    auto query = embed_one(provider, store, cleaned);
    // rho 0 inclusive keeps the whole top-k list
    return predict_set(report.id, rank_cves(query, store, sim), 0.0, k, ThresholdMode::Inclusive);
}

NewsValidation m2_threshold(const PredictionSet& preds, double rho, ThresholdMode mode) {
    NewsValidation out;
    out.report = preds.attack;
    out.method = NewsMethod::M2;
    for (const auto& c : preds.cut) {
        (passes_threshold(c.score, rho, mode) ? out.kept : out.dropped).push_back(c);
    }
    return out;
}

std::optional<NewsValidation> m3_first_cve(const PredictionSet& preds, const NewsReport& report, const Corpus& corpus,
                                           EmbeddingProvider& provider, const EmbeddingStore& store,
                                           const NewsOracleConfig& config) {
    if (report.mentioned_cves.empty()) {
        return std::nullopt;
    }
    const auto& first = report.mentioned_cves.front();
    auto reference = embed_one(provider, store, cve_text(corpus, first));
    const auto& candidates = config.m3_full_store ? preds.ranked : preds.cut;
    auto out = filter_against(report.id, NewsMethod::M3, candidates, reference, store, config);
    out.reference = first.raw;
    return out;
}

std::optional<NewsValidation> m4_all_cves(const PredictionSet& preds, const NewsReport& report, const Corpus& corpus,
                                          EmbeddingProvider& provider, const EmbeddingStore& store,
                                          const NewsOracleConfig& config) {
    if (report.mentioned_cves.empty()) {
        return std::nullopt;
    }
    std::string joined;
    std::string label;
    for (const auto& cve : report.mentioned_cves) {
        if (!joined.empty()) {
            joined.push_back(' ');
            label.push_back('+');
        }
        joined += cve_text(corpus, cve);
        label += cve.raw;
    }
    auto reference = embed_one(provider, store, joined);
    auto out = filter_against(report.id, NewsMethod::M4, preds.cut, reference, store, config);
    out.reference = label;
    return out;
}

MatchCategory match_mentions(const PredictionSet& preds, const NewsReport& report) {
    if (report.mentioned_cves.empty()) {
        return MatchCategory::NoCveIdInReport;
    }
    std::set<EntryId> mentioned(report.mentioned_cves.begin(), report.mentioned_cves.end());
    for (const auto& c : preds.cut) {
        if (mentioned.count(c.cve) != 0) {
            return MatchCategory::MatchingCveId;
        }
    }
    return MatchCategory::NoMatchingCveId;
}

NewsEvaluation evaluate_news(const std::vector<std::pair<NewsReport, PredictionSet>>& predictions,
                             const Corpus& corpus, EmbeddingProvider& provider, const EmbeddingStore& store,
                             const NewsOracleConfig& config, const ManualVerdicts* manual) {
    NewsEvaluation eval;
    for (auto m : {NewsMethod::M1, NewsMethod::M2, NewsMethod::M3, NewsMethod::M4}) {
        eval.methods[m] = {};
    }
    for (auto c : {MatchCategory::MatchingCveId, MatchCategory::NoMatchingCveId, MatchCategory::NoCveIdInReport}) {
        eval.categories[c] = 0;
    }
    auto tally = [&](const NewsValidation& v) {
        auto& t = eval.methods[v.method];
        t.relevant += v.kept.size();
        t.not_relevant += v.dropped.size();
        t.total += v.kept.size() + v.dropped.size();
    };
    for (const auto& [report, preds] : predictions) {
        ReportOutcome outcome;
        outcome.report = report.id;

        auto m2 = m2_threshold(preds, config.rho, config.mode);
        tally(m2);
        outcome.validations.emplace(NewsMethod::M2, std::move(m2));
        for (auto method : {NewsMethod::M3, NewsMethod::M4}) {
            auto v = method == NewsMethod::M3 ? m3_first_cve(preds, report, corpus, provider, store, config)
                                              : m4_all_cves(preds, report, corpus, provider, store, config);
            if (v) {
                tally(*v);
                outcome.validations.emplace(method, std::move(*v));
            } else {
                ++eval.methods[method].inapplicable;
            }
        }
        if (manual != nullptr) {
            NewsValidation m1;
            m1.report = report.id;
            m1.method = NewsMethod::M1;
            auto& t = eval.methods[NewsMethod::M1];
            for (const auto& c : preds.cut) {
                ++t.total;
                auto it = manual->find({report.id, c.cve});
                if (it == manual->end()) {
                    ++t.unreviewed;
                } else if (it->second) {
                    ++t.relevant;
                    m1.kept.push_back(c);
                } else {
                    ++t.not_relevant;
                    m1.dropped.push_back(c);
                }
            }
            outcome.validations.emplace(NewsMethod::M1, std::move(m1));
        }
        outcome.category = match_mentions(preds, report);
        ++eval.categories[outcome.category];
        eval.reports.push_back(std::move(outcome));
    }
    return eval;
}

std::string news_evaluation_json(const NewsEvaluation& evaluation, const NewsOracleConfig& config,
                                 const std::string& meta_json) {
    json out;
    if (!meta_json.empty()) {
        out["_meta"] = json::parse(meta_json);
    }
    out["rho"] = config.rho;
    out["inclusive"] = config.mode == ThresholdMode::Inclusive;
    out["m3_full_store"] = config.m3_full_store;

    auto methods = json::array();
    for (const auto& [method, t] : evaluation.methods) {
        json row = {{"method", to_string(method)},
                    {"total", t.total},
                    {"relevant", t.relevant},
                    {"not_relevant", t.not_relevant},
                    {"inapplicable_reports", t.inapplicable}};
        if (method == NewsMethod::M1) {
            row["unreviewed"] = t.unreviewed;
        }
        methods.push_back(std::move(row));
    }
    out["methods"] = std::move(methods);

    json categories = json::object();
    std::size_t total = 0;
    for (const auto& [category, n] : evaluation.categories) {
        categories[std::string(to_string(category))] = n;
        total += n;
    }
    categories["total"] = total;
    out["match_summary"] = std::move(categories);

    auto reports = json::array();
    for (const auto& r : evaluation.reports) {
        json row = {{"report", r.report.raw}, {"category", to_string(r.category)}};
        json per_method = json::object();
        for (const auto& [method, v] : r.validations) {
            json m = {{"kept", ranking_json(v.kept)},
                      {"dropped", ranking_json(v.dropped)},
                      {"kept_count", v.kept.size()},
                      {"dropped_count", v.dropped.size()}};
            if (v.reference) {
                m["reference"] = *v.reference;
            }
            per_method[std::string(to_string(method))] = std::move(m);
        }
        row["methods"] = std::move(per_method);
        reports.push_back(std::move(row));
    }
    out["reports"] = std::move(reports);
    return out.dump(2);
}

}  // namespace vulnlink
