/**
 * @file similarity.hpp
 *
 * @brief Exact attack → CVE ranking and the threshold / top-K cut.
 *
 * Scores are kept as raw similarities; thresholds live on the 0–100 display
 * scale, where a score s maps to 100 · max(0, s). Rankings are full scans
 * over the store, ordered by score descending with ties broken by CVE ID.
 */
#pragma once

#include "vulnlink/corpus.hpp"
#include "vulnlink/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vulnlink {

enum class SimilarityKind { Cosine, Dot };

std::string_view to_string(SimilarityKind kind);
std::optional<SimilarityKind> parse_similarity(std::string_view tag);

/// Whether a score must be strictly above (`Strict`) or at least (`Inclusive`)
/// the threshold.
enum class ThresholdMode { Strict, Inclusive };

/// Score on the 0–100 threshold scale (negative similarities clamp to 0).
inline double scaled_score(double value) {
    return 100.0 * (value > 0.0 ? value : 0.0);
}

/// Integer display score.
inline int display_score(double value) {
    return static_cast<int>(std::lround(scaled_score(value)));
}

/// Compares on the unit scale: 0.58 * 100 rounds to 57.999..., while
/// 58 / 100 is the same double as 0.58, so decimal thresholds behave.
inline bool passes_threshold(double value, double rho, ThresholdMode mode) {
    auto s = std::max(0.0, value);
    auto t = rho / 100.0;
    return mode == ThresholdMode::Strict ? s > t : s >= t;
}

/// Cosine similarity computed in double precision. Throws SimilarityError on
/// dimension mismatch or a zero-norm operand.
double cosine(std::span<const float> p, std::span<const float> q);
double cosine(const EmbeddingVector& p, const EmbeddingVector& q);

double dot(std::span<const float> p, std::span<const float> q);

double similarity(SimilarityKind kind, const EmbeddingVector& p, const EmbeddingVector& q);

struct RankedCve {
    EntryId cve;
    double score = 0.0;

    bool operator==(const RankedCve&) const = default;
};

using Ranking = std::vector<RankedCve>;

/// Orders by score descending, then CVE ID ascending.
void sort_ranking(Ranking& ranking);

/// Every Vulnerability vector in `store`, ranked against `query`.
/// Throws SimilarityError when the store holds no CVE vectors or dims differ.
Ranking rank_cves(const EmbeddingVector& query, const EmbeddingStore& store,
                  SimilarityKind kind = SimilarityKind::Cosine);

/// First min(k, |ranking|) items, then those passing the threshold.
/// `k == nullopt` means unbounded.
Ranking cut_ranking(const Ranking& ranking, double rho, std::optional<std::size_t> k,
                    ThresholdMode mode = ThresholdMode::Strict);

struct PredictionSet {
    EntryId attack;
    Ranking ranked;
    double rho = 58.0;
    std::optional<std::size_t> k;
    ThresholdMode mode = ThresholdMode::Strict;
    Ranking cut;

    std::vector<EntryId> cut_ids() const;
};

PredictionSet predict_set(EntryId attack, Ranking ranking, double rho, std::optional<std::size_t> k,
                          ThresholdMode mode = ThresholdMode::Strict);

/// One JSON object per attack. `ranked` is truncated at k and carries both
/// the raw score and the display score; `cut` lists the retained IDs.
void write_predictions(const std::vector<PredictionSet>& predictions, std::ostream& out,
                       const std::string& meta_json = {});
std::vector<PredictionSet> read_predictions(std::istream& in);

}  // namespace vulnlink
