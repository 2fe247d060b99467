#include "vulnlink/metrics.hpp"

#include "vulnlink/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace vulnlink {

namespace {

double ratio(std::size_t num, std::size_t den, bool& degenerate) {
    if (den == 0) {
        degenerate = true;
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

double ratio(std::size_t num, std::size_t den) {
    bool ignored = false;
    return ratio(num, den, ignored);
}

void assign(ConfusionCounts& c, bool predicted, bool positive, bool hit) {
    if (hit) {
        ++c.tp;
    } else if (predicted && !positive) {
        ++c.fp;
    } else if (!predicted && positive) {
        ++c.fn;
    } else if (!predicted && !positive) {
        ++c.tn;
    } else {
        ++c.unclassified;
        if (c.policy == DisjointPolicy::FalsePositive) {
            ++c.fp;
        } else if (c.policy == DisjointPolicy::FalseNegative) {
            ++c.fn;
        }
    }
}

double median_of(std::span<const double> sorted) {
    auto n = sorted.size();
    if (n == 0) {
        return 0.0;
    }
    return n % 2 == 1 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
}

// Per-attack summary of a top-k prefix: the best score anywhere in the
// prefix and the best score of a ground-truth CVE in the prefix. Whether L
// and L ∩ M are empty at any threshold follows from these two numbers alone.
struct PrefixExtremes {
    std::optional<double> best_any;
    std::optional<double> best_hit;
    bool positive = false;
};

PrefixExtremes extremes(const ScoredAttack& attack, const std::set<EntryId>& truth, std::optional<std::size_t> k) {
    PrefixExtremes e;
    e.positive = !truth.empty();
    auto limit = std::min(k.value_or(attack.ranking.size()), attack.ranking.size());
    for (std::size_t i = 0; i < limit; ++i) {
        const auto& r = attack.ranking[i];
        if (!e.best_any || r.score > *e.best_any) {
            e.best_any = r.score;
        }
        if (truth.count(r.cve) != 0 && (!e.best_hit || r.score > *e.best_hit)) {
            e.best_hit = r.score;
        }
    }
    return e;
}

std::vector<double> sorted_grid(const SweepConfig& config) {
    auto grid = config.grid.empty() ? default_grid() : config.grid;
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

}  // namespace

ConfusionCounts classify_attacks(const PredictionMap& predictions, const GroundTruthMap& truth,
                                 DisjointPolicy policy) {
    ConfusionCounts counts;
    counts.policy = policy;
    for (const auto& [attack, predicted] : predictions) {
        const auto& linked = truth.at(attack);
        bool hit = std::any_of(predicted.begin(), predicted.end(),
                               [&](const EntryId& c) { return linked.count(c) != 0; });
        assign(counts, !predicted.empty(), !linked.empty(), hit);
    }
    return counts;
}

double f1_score(double precision, double recall) {
    auto sum = precision + recall;
    return sum == 0.0 ? 0.0 : 2.0 * precision * recall / sum;
}

Prf prf(const ConfusionCounts& counts) {
    Prf out;
    out.precision = ratio(counts.tp, counts.tp + counts.fp, out.degenerate);
    out.recall = ratio(counts.tp, counts.tp + counts.fn, out.degenerate);
    if (out.precision + out.recall == 0.0) {
        out.degenerate = true;
    }
    out.f1 = f1_score(out.precision, out.recall);
    return out;
}

std::vector<double> default_grid() {
    std::vector<double> grid(100);
    std::iota(grid.begin(), grid.end(), 1.0);
    return grid;
}

std::vector<CurvePoint> sweep_points(std::span<const ScoredAttack> attacks, const GroundTruthMap& truth,
                                     const SweepConfig& config) {
    std::vector<PrefixExtremes> summary;
    summary.reserve(attacks.size());
    for (const auto& a : attacks) {
        summary.push_back(extremes(a, truth.at(a.attack), config.k));
    }
    std::vector<CurvePoint> curve;
    for (double rho : sorted_grid(config)) {
        CurvePoint point;
        point.rho = rho;
        point.counts.policy = config.policy;
        for (const auto& e : summary) {
            bool predicted = e.best_any && passes_threshold(*e.best_any, rho, config.mode);
            bool hit = e.best_hit && passes_threshold(*e.best_hit, rho, config.mode);
            assign(point.counts, predicted, e.positive, hit);
        }
        const auto& c = point.counts;
        point.tpr = ratio(c.tp, c.tp + c.fn);
        point.fpr = ratio(c.fp, c.fp + c.tn);
        point.precision = ratio(c.tp, c.tp + c.fp);
        point.recall = point.tpr;
        curve.push_back(point);
    }
    return curve;
}

double trapezoid_auc(std::span<const CurvePoint> curve) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(curve.size() + 2);
    pts.emplace_back(0.0, 0.0);
    pts.emplace_back(1.0, 1.0);
    for (const auto& p : curve) {
        pts.emplace_back(p.fpr, p.tpr);
    }
    std::sort(pts.begin(), pts.end());
    double area = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        area += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2.0;
    }
    return area;
}

RocResult roc_sweep(std::span<const ScoredAttack> attacks, const GroundTruthMap& truth, const SweepConfig& config) {
    std::size_t positives = 0;
    for (const auto& a : attacks) {
        positives += truth.at(a.attack).empty() ? 0 : 1;
    }
    if (positives == 0 || positives == attacks.size()) {
        throw MetricError("AUC is undefined when every attack is " +
                          std::string(positives == 0 ? "negative" : "positive"));
    }
    RocResult result;
    result.curve = sweep_points(attacks, truth, config);
    result.auc = trapezoid_auc(result.curve);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : result.curve) {
        double d = std::hypot(p.fpr, 1.0 - p.tpr);
        if (d <= best) {
            best = d;
            result.rho_star = p.rho;
        }
    }
    return result;
}

PrResult pr_sweep(std::span<const ScoredAttack> attacks, const GroundTruthMap& truth, const SweepConfig& config) {
    PrResult result;
    result.curve = sweep_points(attacks, truth, config);
    double best = std::numeric_limits<double>::infinity();
    bool found = false;
    for (const auto& p : result.curve) {
        const auto& c = p.counts;
        if (c.tp + c.fp == 0 || c.tp + c.fn == 0) {
            continue;
        }
        double d = std::abs(p.precision - p.recall);
        if (d <= best) {
            best = d;
            result.eer_rho = p.rho;
            found = true;
        }
    }
    if (!found) {
        throw MetricError("precision/recall are degenerate at every threshold");
    }
    return result;
}

OverlapMetrics overlap_from_sizes(std::size_t size_l, std::size_t size_m, std::size_t size_intersection) {
    OverlapMetrics o;
    o.size_l = size_l;
    o.size_m = size_m;
    o.size_intersection = size_intersection;
    o.jaccard = ratio(size_intersection, size_l + size_m - size_intersection, o.degenerate);
    o.mapping_acc = ratio(size_intersection, size_m, o.degenerate);
    o.detection_acc = ratio(size_intersection, size_l, o.degenerate);
    return o;
}

OverlapMetrics overlap(const std::set<EntryId>& predicted, const std::set<EntryId>& truth) {
    std::size_t inter = 0;
    for (const auto& id : predicted) {
        inter += truth.count(id);
    }
    return overlap_from_sizes(predicted.size(), truth.size(), inter);
}

Summary summarize(std::vector<double> values) {
    Summary s;
    s.count = values.size();
    if (values.empty()) {
        return s;
    }
    std::sort(values.begin(), values.end());
    std::span<const double> all(values);
    auto n = values.size();
    s.min = values.front();
    s.max = values.back();
    s.median = median_of(all);
    auto half = (n + 1) / 2;  // odd n: both halves include the median
    s.q1 = median_of(all.subspan(0, half));
    s.q3 = median_of(all.subspan(n - half));
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    return s;
}

TopKResult topk_sweep(std::span<const ScoredAttack> attacks, const GroundTruthMap& truth,
                      std::span<const std::size_t> ks) {
    std::vector<std::size_t> sorted_ks(ks.begin(), ks.end());
    std::sort(sorted_ks.begin(), sorted_ks.end());
    sorted_ks.erase(std::unique(sorted_ks.begin(), sorted_ks.end()), sorted_ks.end());

    TopKResult result;
    double best = std::numeric_limits<double>::infinity();
    for (auto k : sorted_ks) {
        if (k == 0) {
            throw PreconditionError("top-k sweep needs k >= 1");
        }
        std::vector<double> precisions;
        std::vector<double> recalls;
        for (const auto& a : attacks) {
            const auto& linked = truth.at(a.attack);
            auto limit = std::min(k, a.ranking.size());
            std::size_t hits = 0;
            for (std::size_t i = 0; i < limit; ++i) {
                hits += linked.count(a.ranking[i].cve);
            }
            if (limit > 0) {
                precisions.push_back(ratio(hits, limit));
            }
            if (!linked.empty()) {
                recalls.push_back(ratio(hits, linked.size()));
            }
        }
        TopKPoint point{k, summarize(std::move(precisions)), summarize(std::move(recalls))};
        double gap = std::abs(point.precision.mean - point.recall.mean);
        if (gap < best) {
            best = gap;
            result.crossing_k = k;
        }
        result.points.push_back(point);
    }
    return result;
}

void write_curve_csv(std::span<const CurvePoint> curve, std::ostream& out) {
    out << "rho,tpr,fpr,precision,recall\n";
    auto old = out.precision(17);
    for (const auto& p : curve) {
        out << p.rho << ',' << p.tpr << ',' << p.fpr << ',' << p.precision << ',' << p.recall << '\n';
    }
    out.precision(old);
}

}  // namespace vulnlink
