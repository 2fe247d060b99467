/**
 * @file news.hpp
 *
 * @brief Predictions for free-text attack news and their automated oracles.
 *
 * A report is embedded and ranked against every CVE; the top-k list is then
 * filtered by one of three oracles:
 *
 *   M2  keep c if sim(report, c) ≥ ρ
 *   M3  keep c if sim(first mentioned CVE, c) ≥ ρ
 *   M4  keep c if sim(concat(all mentioned CVE texts), c) ≥ ρ
 *
 * M1 (manual review) is not automated; its outcome comes from the
 * validation store and is only summarized here.
 */
#pragma once

#include "vulnlink/corpus.hpp"
#include "vulnlink/embedding.hpp"
#include "vulnlink/similarity.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vulnlink {

enum class NewsMethod { M1, M2, M3, M4 };

std::string_view to_string(NewsMethod method);

struct NewsValidation {
    EntryId report;
    NewsMethod method = NewsMethod::M2;
    /// Candidates passing the rule, with the score the rule compared.
    Ranking kept;
    Ranking dropped;
    /// M3: ID of the first mentioned CVE; M4: the mentioned IDs joined by '+'.
    std::optional<std::string> reference;
};

struct NewsOracleConfig {
    double rho = 58.0;
    ThresholdMode mode = ThresholdMode::Inclusive;
    SimilarityKind sim = SimilarityKind::Cosine;
    /// M3 filters the whole store ranking instead of the top-k list.
    bool m3_full_store = false;
};

/// Ranks every CVE in `store` against the cleaned report body. `ranked`
/// holds the full ranking and `cut` its first k items, with no threshold.
/// Throws PreconditionError when the body is empty after cleaning.
PredictionSet predict_from_news(const NewsReport& report, EmbeddingProvider& provider, const EmbeddingStore& store,
                                std::size_t k = 20, SimilarityKind sim = SimilarityKind::Cosine);

NewsValidation m2_threshold(const PredictionSet& preds, double rho,
                            ThresholdMode mode = ThresholdMode::Inclusive);

/// nullopt when the report mentions no CVE (method inapplicable). Throws
/// LookupError when a referenced CVE is missing from the corpus or a
/// candidate has no stored vector.
std::optional<NewsValidation> m3_first_cve(const PredictionSet& preds, const NewsReport& report, const Corpus& corpus,
                                           EmbeddingProvider& provider, const EmbeddingStore& store,
                                           const NewsOracleConfig& config = {});

std::optional<NewsValidation> m4_all_cves(const PredictionSet& preds, const NewsReport& report, const Corpus& corpus,
                                          EmbeddingProvider& provider, const EmbeddingStore& store,
                                          const NewsOracleConfig& config = {});

enum class MatchCategory { MatchingCveId, NoMatchingCveId, NoCveIdInReport };

std::string_view to_string(MatchCategory category);

MatchCategory match_mentions(const PredictionSet& preds, const NewsReport& report);

struct MethodTally {
    std::size_t total = 0;
    std::size_t relevant = 0;
    std::size_t not_relevant = 0;
    /// Reports the method could not be applied to.
    std::size_t inapplicable = 0;
    /// M1 only: candidates without a consensus verdict yet.
    std::size_t unreviewed = 0;
};

struct ReportOutcome {
    EntryId report;
    std::map<NewsMethod, NewsValidation> validations;
    MatchCategory category = MatchCategory::NoCveIdInReport;
};

struct NewsEvaluation {
    std::vector<ReportOutcome> reports;
    std::map<NewsMethod, MethodTally> methods;
    std::map<MatchCategory, std::size_t> categories;
};

/// Consensus verdicts for (report, cve) pairs: true = relevant.
using ManualVerdicts = std::map<std::pair<EntryId, EntryId>, bool>;

/// Runs M2–M4 and the mention match over every report and tallies them.
/// M1 totals come from `manual` when given.
NewsEvaluation evaluate_news(const std::vector<std::pair<NewsReport, PredictionSet>>& predictions,
                             const Corpus& corpus, EmbeddingProvider& provider, const EmbeddingStore& store,
                             const NewsOracleConfig& config = {}, const ManualVerdicts* manual = nullptr);

std::string news_evaluation_json(const NewsEvaluation& evaluation, const NewsOracleConfig& config,
                                 const std::string& meta_json = {});

}  // namespace vulnlink
