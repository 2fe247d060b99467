/**
 * @file metrics.hpp
 *
 * @brief Attack-level classification, P/R/F1, threshold sweeps, set overlap
 * and the top-K sensitivity sweep.
 *
 * An attack a with prediction set L and ground truth M is classified as
 *
 *   TP  L ∩ M ≠ ∅        FP  L ≠ ∅, M = ∅
 *   FN  L = ∅, M ≠ ∅     TN  L = ∅, M = ∅
 *
 * The remaining case (both non-empty, disjoint) is assigned by a
 * DisjointPolicy and always tallied in `unclassified`.
 *
 * Degenerate ratios (zero denominators) evaluate to 0 and raise a flag
 * instead of producing NaN.
 */
#pragma once

#include "vulnlink/annotate.hpp"
#include "vulnlink/similarity.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace vulnlink {

using PredictionMap = std::map<EntryId, std::set<EntryId>>;

enum class DisjointPolicy { FalsePositive, FalseNegative, Exclude };

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
    /// Attacks whose non-empty L and M do not intersect. Under FalsePositive
    /// and FalseNegative this is a sub-tally of fp / fn; under Exclude those
    /// attacks are counted here only.
    std::size_t unclassified = 0;
    DisjointPolicy policy = DisjointPolicy::FalsePositive;

    std::size_t evaluated() const {
        return tp + fp + fn + tn + (policy == DisjointPolicy::Exclude ? unclassified : 0);
    }
    bool operator==(const ConfusionCounts&) const = default;
};

/// Throws LookupError if a predicted attack has no ground-truth record.
ConfusionCounts classify_attacks(const PredictionMap& predictions, const GroundTruthMap& truth,
                                 DisjointPolicy policy = DisjointPolicy::FalsePositive);

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool degenerate = false;
};

Prf prf(const ConfusionCounts& counts);
/// Harmonic mean; 0 when p + r == 0.
double f1_score(double precision, double recall);

struct ScoredAttack {
    EntryId attack;
    Ranking ranking;
};

struct SweepConfig {
    std::vector<double> grid;  ///< empty → integers 1..100
    std::optional<std::size_t> k;
    ThresholdMode mode = ThresholdMode::Strict;
    DisjointPolicy policy = DisjointPolicy::FalsePositive;
};

std::vector<double> default_grid();

struct CurvePoint {
    double rho = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    ConfusionCounts counts;
};

struct RocResult {
    std::vector<CurvePoint> curve;
    double auc = 0.0;
    /// Grid point closest to (fpr, tpr) = (0, 1); ties go to the larger ρ.
    double rho_star = 0.0;
};

struct PrResult {
    std::vector<CurvePoint> curve;
    /// Grid point minimizing |P − R| over points where neither is
    /// degenerate; ties go to the larger ρ.
    double eer_rho = 0.0;
};

/// One point per grid value. Throws MetricError if the truth has no
/// positives or no negatives (AUC undefined).
RocResult roc_sweep(std::span<const ScoredAttack> attacks, const GroundTruthMap& truth, const SweepConfig& config = {});

/// Throws MetricError if every grid point is degenerate.
PrResult pr_sweep(std::span<const ScoredAttack> attacks, const GroundTruthMap& truth, const SweepConfig& config = {});

/// Shared sweep core: confusion counts at every grid point.
std::vector<CurvePoint> sweep_points(std::span<const ScoredAttack> attacks, const GroundTruthMap& truth,
                                     const SweepConfig& config);

/// Trapezoidal area under (fpr, tpr) points, anchored at (0,0) and (1,1).
double trapezoid_auc(std::span<const CurvePoint> curve);

struct OverlapMetrics {
    double jaccard = 0.0;
    double mapping_acc = 0.0;
    double detection_acc = 0.0;
    std::size_t size_l = 0;
    std::size_t size_m = 0;
    std::size_t size_intersection = 0;
    bool degenerate = false;
};

OverlapMetrics overlap(const std::set<EntryId>& predicted, const std::set<EntryId>& truth);
OverlapMetrics overlap_from_sizes(std::size_t size_l, std::size_t size_m, std::size_t size_intersection);

/// Five-number summary with Tukey hinges, plus the mean.
struct Summary {
    std::size_t count = 0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
    double mean = 0.0;
};

inline constexpr std::string_view kQuantileMethod = "tukey_hinges";

Summary summarize(std::vector<double> values);

struct TopKPoint {
    std::size_t k = 0;
    Summary precision;  ///< over attacks with a non-empty top-k list
    Summary recall;     ///< over attacks with non-empty ground truth
};

struct TopKResult {
    std::vector<TopKPoint> points;
    /// k minimizing |mean P − mean R|; ties go to the smaller k.
    std::size_t crossing_k = 0;
};

TopKResult topk_sweep(std::span<const ScoredAttack> attacks, const GroundTruthMap& truth,
                      std::span<const std::size_t> ks);

/// rho,tpr,fpr,precision,recall rows.
void write_curve_csv(std::span<const CurvePoint> curve, std::ostream& out);

}  // namespace vulnlink
