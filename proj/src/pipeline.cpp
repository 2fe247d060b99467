#include "vulnlink/pipeline.hpp"

#include "vulnlink/annotate.hpp"
#include "vulnlink/error.hpp"
#include "vulnlink/metrics.hpp"
#include "vulnlink/news.hpp"
#include "vulnlink/preproc.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace vulnlink {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr const char* kCorpus = "corpus.jsonl";
constexpr const char* kIngestReport = "ingest_report.json";
constexpr const char* kTruth = "ground_truth.jsonl";
constexpr const char* kLinkStats = "link_stats.json";
constexpr const char* kVectors = "vectors.vlvs";
constexpr const char* kEmbedReport = "embed_report.json";
constexpr const char* kPredictions = "predictions.jsonl";
constexpr const char* kRoc = "roc.csv";
constexpr const char* kPr = "pr.csv";
constexpr const char* kTopK = "topk.csv";
constexpr const char* kCalibration = "calibration.json";
constexpr const char* kReport = "report.tsv";
constexpr const char* kOverlap = "overlap.jsonl";
constexpr const char* kNewsPredictions = "news_predictions.jsonl";
constexpr const char* kNewsEvaluation = "news_evaluation.json";
constexpr const char* kVerdicts = "verdicts.jsonl";

constexpr std::size_t kEmbedChunk = 256;

std::string artifact(const RunConfig& config, const char* name) {
    return (fs::path(config.out) / name).string();
}

std::string require(const RunConfig& config, const char* name, const char* stage) {
    auto path = artifact(config, name);
    if (!fs::exists(path)) {
        throw DependencyError(stage, path);
    }
    return path;
}

void write_file(const std::string& path, const std::string& content) {
    fs::create_directories(fs::path(path).parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw PreconditionError("cannot write '" + path + "'");
    }
    out << content;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw PreconditionError("cannot read '" + path + "'");
    }
    return in;
}

std::string read_file(const std::string& path) {
    auto in = open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string with_meta(const std::string& body_json, const std::string& meta) {
    auto obj = json::parse(body_json);
    json out = {{"_meta", json::parse(meta)}};
    out.update(obj);
    return out.dump(2) + "\n";
}

std::string csv_header(const RunConfig& config, const std::string& stage) {
    return "# config_digest=" + config_digest(config) + " stage=" + stage + "\n";
}

std::string fixed(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

Corpus load_corpus(const RunConfig& config) {
    auto path = require(config, kCorpus, "ingest");
    auto in = open_in(path);
    return parse_corpus(in).corpus;
}

GroundTruthMap load_truth(const RunConfig& config) {
    auto path = require(config, kTruth, "annotate");
    auto in = open_in(path);
    return read_ground_truth(in);
}

EmbeddingStore load_vectors(const RunConfig& config) {
    return load_store(require(config, kVectors, "embed"));
}

std::vector<PredictionSet> load_prediction_file(const std::string& path) {
    auto in = open_in(path);
    return read_predictions(in);
}

std::unique_ptr<EmbeddingProvider> provider_for(const RunConfig& config, const EmbeddingStore& store) {
    auto provider = make_provider(config.provider);
    if (provider->name() != store.provider_name() || provider->dim() != store.dim()) {
        throw StoreError("vectors were made by '" + store.provider_name() + "' (dim " + std::to_string(store.dim()) +
                         ") but the configured provider is '" + provider->name() + "' (dim " +
                         std::to_string(provider->dim()) + ")");
    }
    return provider;
}

ThresholdMode mode_of(const RunConfig& config) {
    return config.inclusive ? ThresholdMode::Inclusive : ThresholdMode::Strict;
}

std::vector<ScoredAttack> scored_attacks(const EmbeddingStore& store, const GroundTruthMap& truth, SimilarityKind sim) {
    std::vector<ScoredAttack> out;
    for (const auto& [id, v] : store.vectors()) {
        if (is_attack_kind(id.kind) && truth.contains(id)) {
            out.push_back({id, rank_cves(v, store, sim)});
        }
    }
    return out;
}

std::vector<ScoredAttack> balanced_sample(std::vector<ScoredAttack> attacks, const GroundTruthMap& truth,
                                          std::size_t n, std::uint64_t seed) {
    std::vector<ScoredAttack> positives;
    std::vector<ScoredAttack> negatives;
    for (auto& a : attacks) {
        (truth.at(a.attack).empty() ? negatives : positives).push_back(std::move(a));
    }
    std::mt19937_64 rng(seed);
    auto take = [&](std::vector<ScoredAttack>& pool) {
        // Fisher-Yates with explicit draws so the sample does not depend on
        // the standard library's shuffle implementation.
        for (std::size_t i = pool.size(); i > 1; --i) {
            std::swap(pool[i - 1], pool[rng() % i]);
        }
        pool.resize(std::min(n, pool.size()));
    };
    take(positives);
    take(negatives);
    std::vector<ScoredAttack> out;
    for (auto* pool : {&positives, &negatives}) {
        std::move(pool->begin(), pool->end(), std::back_inserter(out));
    }
    std::sort(out.begin(), out.end(), [](const ScoredAttack& a, const ScoredAttack& b) { return a.attack < b.attack; });
    return out;
}

json summary_json(const Summary& s) {
    return {{"count", s.count}, {"min", s.min}, {"q1", s.q1},     {"median", s.median},
            {"q3", s.q3},       {"max", s.max}, {"mean", s.mean}};
}

}  // namespace

void validate(const RunConfig& config) {
    if (!(config.rho >= 0.0 && config.rho <= 100.0)) {
        throw PreconditionError("rho must lie in [0, 100]");
    }
    if (!(config.news_rho >= 0.0 && config.news_rho <= 100.0)) {
        throw PreconditionError("news rho must lie in [0, 100]");
    }
    if (config.k < 1) {
        throw PreconditionError("k must be >= 1");
    }
    if (config.topk_max < 1) {
        throw PreconditionError("top-k sweep bound must be >= 1");
    }
    parse_grid(config.grid);
}

std::vector<double> parse_grid(const std::string& spec) {
    if (spec.empty()) {
        return default_grid();
    }
    std::vector<double> grid;
    auto number = [&](const std::string& s) {
        try {
            std::size_t used = 0;
            double v = std::stod(s, &used);
            if (used != s.size() || !std::isfinite(v)) {
                throw std::invalid_argument(s);
            }
            return v;
        } catch (const std::exception&) {
            throw PreconditionError("bad grid value '" + s + "'");
        }
    };
    if (spec.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(spec);
        for (std::string part; std::getline(ss, part, ':');) {
            parts.push_back(part);
        }
        if (parts.size() < 2 || parts.size() > 3) {
            throw PreconditionError("grid range must be a:b or a:b:step");
        }
        double lo = number(parts[0]);
        double hi = number(parts[1]);
        double step = parts.size() == 3 ? number(parts[2]) : 1.0;
        if (step <= 0.0 || hi < lo) {
            throw PreconditionError("grid range needs lo <= hi and step > 0");
        }
        for (std::size_t i = 0;; ++i) {
            double v = lo + static_cast<double>(i) * step;
            if (v > hi + 1e-9) {
                break;
            }
            grid.push_back(v);
        }
    } else {
        std::stringstream ss(spec);
        for (std::string part; std::getline(ss, part, ',');) {
            grid.push_back(number(part));
        }
    }
    for (double v : grid) {
        if (v < 0.0 || v > 100.0) {
            throw PreconditionError("grid values must lie in [0, 100]");
        }
    }
    if (grid.empty()) {
        throw PreconditionError("grid is empty");
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

std::string canonical_config(const RunConfig& config) {
    json c = {{"corpus", config.corpus},
              {"provider", config.provider},
              {"sim", to_string(config.sim)},
              {"rho", config.rho},
              {"k", config.k},
              {"grid", config.grid},
              {"seed", config.seed},
              {"inclusive", config.inclusive},
              {"direction_strict", config.direction_strict},
              {"title_concat", config.title_concat},
              {"balanced", config.balanced},
              {"topk_max", config.topk_max},
              {"news_rho", config.news_rho},
              {"m3_full_store", config.m3_full_store}};
    return c.dump();
}

std::string config_digest(const RunConfig& config) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical_config(config))));
    return buf;
}

std::string artifact_meta(const RunConfig& config, const std::string& stage) {
    return json{{"tool", "vulnlink"},
                {"stage", stage},
                {"config_digest", config_digest(config)},
                {"config", json::parse(canonical_config(config))}}
        .dump();
}

StageSummary run_ingest(const RunConfig& config) {
    validate(config);
    if (config.corpus.empty()) {
        throw PreconditionError("ingest needs at least one --corpus file");
    }
    Corpus corpus;
    json issues = json::array();
    for (const auto& path : config.corpus) {
        auto parsed = parse_corpus_file(path);
        for (const auto& issue : parsed.issues) {
            issues.push_back({{"file", path}, {"line", issue.line}, {"message", issue.message}});
        }
        for (auto& [id, entry] : parsed.corpus.mutable_entries()) {
            if (corpus.find_raw(id.raw) != nullptr) {
                throw CorpusError("duplicate id '" + id.raw + "' across corpus files (second in " + path + ")");
            }
            corpus.add(std::move(entry));
        }
    }
    CleaningReport total;
    std::size_t empty_after_cleaning = 0;
    for (auto& [id, entry] : corpus.mutable_entries()) {
        auto cleaned = config.title_concat && !entry.title.empty() ? clean_text(entry.title + ". " + entry.raw_text)
                                                                   : clean_text(entry.raw_text);
        entry.clean_text = std::move(cleaned.text);
        total.removed_urls += cleaned.report.removed_urls;
        total.removed_citations += cleaned.report.removed_citations;
        total.removed_markup += cleaned.report.removed_markup;
        total.removed_symbols += cleaned.report.removed_symbols;
        total.chars_in += cleaned.report.chars_in;
        total.chars_out += cleaned.report.chars_out;
        empty_after_cleaning += entry.clean_text.empty() ? 1 : 0;
    }

    auto meta = artifact_meta(config, "ingest");
    std::ostringstream body;
    serialize_corpus(corpus, body, meta);
    write_file(artifact(config, kCorpus), body.str());

    json counts = json::object();
    for (const auto& [kind, n] : corpus.counts()) {
        counts[std::string(to_string(kind))] = n;
    }
    json report = {{"entries", corpus.size()},
                   {"counts", counts},
                   {"issues", issues},
                   {"empty_after_cleaning", empty_after_cleaning},
                   {"cleaning",
                    {{"removed_urls", total.removed_urls},
                     {"removed_citations", total.removed_citations},
                     {"removed_markup", total.removed_markup},
                     {"removed_symbols", total.removed_symbols},
                     {"chars_in", total.chars_in},
                     {"chars_out", total.chars_out}}}};
    write_file(artifact(config, kIngestReport), with_meta(report.dump(), meta));
    json summary = {{"entries", corpus.size()}, {"issues", issues.size()}};
    return {"ingest", {artifact(config, kCorpus), artifact(config, kIngestReport)}, summary.dump()};
}

StageSummary run_annotate(const RunConfig& config) {
    validate(config);
    auto corpus = load_corpus(config);
    auto graph = build_link_graph(corpus);
    auto result = annotate_all(graph, corpus, AnnotateOptions{config.direction_strict, true});
    auto meta = artifact_meta(config, "annotate");
    std::ostringstream body;
    write_ground_truth(result.truth, body, true, meta);
    write_file(artifact(config, kTruth), body.str());
    write_file(artifact(config, kLinkStats), with_meta(link_stats_json(result.stats), meta));
    std::size_t linked = 0;
    for (const auto& [attack, cves] : result.truth.links) {
        linked += cves.empty() ? 0 : 1;
    }
    json summary = {{"attacks", result.truth.links.size()},
                    {"linked_attacks", linked},
                    {"union_linked_cves", result.stats.union_linked_cves}};
    return {"annotate", {artifact(config, kTruth), artifact(config, kLinkStats)}, summary.dump()};
}

StageSummary run_embed(const RunConfig& config) {
    validate(config);
    auto corpus = load_corpus(config);
    auto provider = make_provider(config.provider);
    EmbeddingStore store(provider->name(), provider->dim(), config.sim == SimilarityKind::Cosine);
    store.set_metadata(artifact_meta(config, "embed"));

    std::vector<EntryId> ids;
    std::vector<std::string> texts;
    json skipped = json::array();
    for (const auto& [id, entry] : corpus.entries()) {
        if (id.kind == EntryKind::Weakness) {
            continue;
        }
        if (entry.clean_text.empty()) {
            skipped.push_back(id.raw);
            continue;
        }
        ids.push_back(id);
        texts.push_back(entry.clean_text);
    }
    for (std::size_t begin = 0; begin < texts.size(); begin += kEmbedChunk) {
        auto end = std::min(texts.size(), begin + kEmbedChunk);
        auto vectors = embed_batch(*provider, std::span<const std::string>(texts).subspan(begin, end - begin));
        for (std::size_t i = begin; i < end; ++i) {
            store.put(ids[i], std::move(vectors[i - begin]));
        }
    }
    save_store(store, artifact(config, kVectors));

    json counts = json::object();
    for (auto kind : kAllKinds) {
        if (auto n = store.count(kind); n > 0) {
            counts[std::string(to_string(kind))] = n;
        }
    }
    json report = {{"provider", store.provider_name()},
                   {"dim", store.dim()},
                   {"normalized", store.is_normalized()},
                   {"vectors", store.size()},
                   {"counts", counts},
                   {"skipped_empty", skipped}};
    write_file(artifact(config, kEmbedReport), with_meta(report.dump(), store.metadata()));
    json summary = {{"vectors", store.size()}, {"skipped", skipped.size()}};
    return {"embed", {artifact(config, kVectors), artifact(config, kEmbedReport)}, summary.dump()};
}

StageSummary run_predict(const RunConfig& config) {
    validate(config);
    auto store = load_vectors(config);
    provider_for(config, store);  // refuse vectors from another provider
    std::vector<PredictionSet> predictions;
    for (const auto& [id, v] : store.vectors()) {
        if (!is_attack_kind(id.kind)) {
            continue;
        }
        predictions.push_back(predict_set(id, rank_cves(v, store, config.sim), config.rho, config.k, mode_of(config)));
    }
    std::ostringstream body;
    write_predictions(predictions, body, artifact_meta(config, "predict"));
    write_file(artifact(config, kPredictions), body.str());
    std::size_t nonempty = 0;
    for (const auto& p : predictions) {
        nonempty += p.cut.empty() ? 0 : 1;
    }
    json summary = {{"attacks", predictions.size()}, {"nonempty_cuts", nonempty}};
    return {"predict", {artifact(config, kPredictions)}, summary.dump()};
}

StageSummary run_calibrate(const RunConfig& config) {
    validate(config);
    auto truth = load_truth(config);
    auto store = load_vectors(config);
    auto attacks = scored_attacks(store, truth, config.sim);
    if (config.balanced > 0) {
        attacks = balanced_sample(std::move(attacks), truth, config.balanced, config.seed);
    }
    if (attacks.empty()) {
        throw PreconditionError("no attack has both a vector and a ground-truth entry");
    }
    SweepConfig sweep;
    sweep.grid = parse_grid(config.grid);
    sweep.mode = mode_of(config);

    std::size_t positives = 0;
    for (const auto& a : attacks) {
        positives += truth.at(a.attack).empty() ? 0 : 1;
    }
    auto meta = artifact_meta(config, "calibrate");
    json cal = {{"attacks", attacks.size()},
                {"positives", positives},
                {"negatives", attacks.size() - positives},
                {"grid_points", sweep.grid.size()},
                {"inclusive", config.inclusive},
                {"quantile_method", kQuantileMethod}};

    auto curve = sweep_points(attacks, truth, sweep);
    std::ostringstream curve_csv;
    curve_csv << csv_header(config, "calibrate");
    write_curve_csv(curve, curve_csv);
    write_file(artifact(config, kRoc), curve_csv.str());
    write_file(artifact(config, kPr), curve_csv.str());
    try {
        auto roc = roc_sweep(attacks, truth, sweep);
        cal["auc"] = roc.auc;
        cal["rho_star"] = roc.rho_star;
    } catch (const MetricError& e) {
        cal["auc"] = nullptr;
        cal["rho_star"] = nullptr;
        cal["roc_error"] = e.what();
    }
    try {
        cal["eer_rho"] = pr_sweep(attacks, truth, sweep).eer_rho;
    } catch (const MetricError& e) {
        cal["eer_rho"] = nullptr;
        cal["pr_error"] = e.what();
    }

    std::vector<std::size_t> ks(config.topk_max);
    std::iota(ks.begin(), ks.end(), std::size_t{1});
    auto topk = topk_sweep(attacks, truth, ks);
    cal["crossing_k"] = topk.crossing_k;
    for (const auto& p : topk.points) {
        if (p.k == config.k) {
            cal["topk_at_k"] = {{"k", p.k}, {"precision", summary_json(p.precision)}, {"recall", summary_json(p.recall)}};
        }
    }
    std::ostringstream topk_csv;
    topk_csv << csv_header(config, "calibrate");
    topk_csv << "k,p_min,p_q1,p_median,p_q3,p_max,p_mean,r_min,r_q1,r_median,r_q3,r_max,r_mean\n";
    topk_csv.precision(17);
    for (const auto& p : topk.points) {
        topk_csv << p.k;
        for (const auto* s : {&p.precision, &p.recall}) {
            topk_csv << ',' << s->min << ',' << s->q1 << ',' << s->median << ',' << s->q3 << ',' << s->max << ','
                     << s->mean;
        }
        topk_csv << '\n';
    }
    write_file(artifact(config, kTopK), topk_csv.str());
    write_file(artifact(config, kCalibration), with_meta(cal.dump(), meta));
    return {"calibrate",
            {artifact(config, kRoc), artifact(config, kPr), artifact(config, kTopK), artifact(config, kCalibration)},
            cal.dump()};
}

StageSummary run_evaluate(const RunConfig& config) {
    validate(config);
    auto predictions = load_prediction_file(require(config, kPredictions, "predict"));
    auto truth = load_truth(config);
    auto model = make_provider(config.provider)->name();

    std::map<EntryKind, PredictionMap> by_kind;
    std::ostringstream overlap_out;
    overlap_out << json{{"_meta", json::parse(artifact_meta(config, "evaluate"))}}.dump() << '\n';
    for (const auto& p : predictions) {
        auto ids = p.cut_ids();
        std::set<EntryId> predicted(ids.begin(), ids.end());
        const auto& linked = truth.at(p.attack);
        by_kind[p.attack.kind][p.attack] = predicted;
        if (predicted.empty() && linked.empty()) {
            continue;
        }
        auto o = overlap(predicted, linked);
        overlap_out << json{{"attack", p.attack.raw},
                            {"kind", to_string(p.attack.kind)},
                            {"size_l", o.size_l},
                            {"size_m", o.size_m},
                            {"size_intersection", o.size_intersection},
                            {"jaccard", o.jaccard},
                            {"mapping_acc", o.mapping_acc},
                            {"detection_acc", o.detection_acc},
                            {"degenerate", o.degenerate}}
                           .dump()
                    << '\n';
    }

    std::ostringstream tsv;
    tsv << csv_header(config, "evaluate");
    tsv << "model\tattack_kind\tprecision\trecall\tf1\ttp\tfp\tfn\ttn\tunclassified\tdegenerate\n";
    json summary = json::object();
    for (const auto& [kind, preds] : by_kind) {
        auto counts = classify_attacks(preds, truth);
        auto m = prf(counts);
        tsv << model << '\t' << to_string(kind) << '\t' << fixed(m.precision) << '\t' << fixed(m.recall) << '\t'
            << fixed(m.f1) << '\t' << counts.tp << '\t' << counts.fp << '\t' << counts.fn << '\t' << counts.tn << '\t'
            << counts.unclassified << '\t' << (m.degenerate ? "yes" : "no") << '\n';
        summary[std::string(to_string(kind))] = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
    }
    write_file(artifact(config, kReport), tsv.str());
    write_file(artifact(config, kOverlap), overlap_out.str());
    return {"evaluate", {artifact(config, kReport), artifact(config, kOverlap)}, summary.dump()};
}

StageSummary run_news(const RunConfig& config) {
    validate(config);
    auto corpus = load_corpus(config);
    auto store = load_vectors(config);
    auto provider = provider_for(config, store);

    std::vector<std::pair<NewsReport, PredictionSet>> runs;
    json skipped = json::array();
    for (const auto& id : corpus.ids_of_kind(EntryKind::NewsReport)) {
        auto report = as_news_report(corpus.at(id));
        try {
            runs.emplace_back(report, predict_from_news(report, *provider, store, config.k, config.sim));
        } catch (const PreconditionError& e) {
            skipped.push_back({{"report", id.raw}, {"reason", e.what()}});
        }
    }

    std::vector<PredictionSet> news_preds;
    for (const auto& [report, preds] : runs) {
        news_preds.push_back(preds);
    }
    auto meta = artifact_meta(config, "news");
    std::ostringstream preds_out;
    write_predictions(news_preds, preds_out, meta);
    write_file(artifact(config, kNewsPredictions), preds_out.str());

    // M1 verdicts come from the service's verdict log, replayed over the same
    // candidate set the service uses.
    std::optional<ManualVerdicts> manual;
    if (auto log = artifact(config, kVerdicts); fs::exists(log)) {
        std::vector<PredictionSet> candidates = news_preds;
        GroundTruthMap truth;
        if (auto path = artifact(config, kPredictions); fs::exists(path)) {
            auto attack_preds = load_prediction_file(path);
            candidates.insert(candidates.end(), attack_preds.begin(), attack_preds.end());
        }
        if (fs::exists(artifact(config, kTruth))) {
            truth = load_truth(config);
        }
        ValidationStore verdicts(candidates, truth, {}, "");
        for (const auto& r : ValidationStore::read_log(log)) {
            verdicts.submit(r);
        }
        manual = verdicts.consensus();
    }

    NewsOracleConfig oracle{config.news_rho, ThresholdMode::Inclusive, config.sim, config.m3_full_store};
    auto evaluation = evaluate_news(runs, corpus, *provider, store, oracle, manual ? &*manual : nullptr);
    auto report = json::parse(news_evaluation_json(evaluation, oracle, meta));
    report["skipped"] = skipped;
    write_file(artifact(config, kNewsEvaluation), report.dump(2) + "\n");

    json summary = {{"reports", runs.size()}, {"skipped", skipped.size()}, {"match_summary", report["match_summary"]}};
    return {"news", {artifact(config, kNewsPredictions), artifact(config, kNewsEvaluation)}, summary.dump()};
}

StageSummary run_stage(const std::string& stage, const RunConfig& config) {
    if (stage == "ingest") return run_ingest(config);
    if (stage == "annotate") return run_annotate(config);
    if (stage == "embed") return run_embed(config);
    if (stage == "predict") return run_predict(config);
    if (stage == "calibrate") return run_calibrate(config);
    if (stage == "evaluate") return run_evaluate(config);
    if (stage == "news") return run_news(config);
    throw PreconditionError("unknown stage '" + stage + "'");
}

ServiceData load_service_data(const RunConfig& config) {
    validate(config);
    ServiceData data;
    data.corpus = load_corpus(config);
    data.truth = load_truth(config);
    data.store = load_vectors(config);
    data.provider = provider_for(config, data.store);
    data.predictions = load_prediction_file(require(config, kPredictions, "predict"));
    if (auto path = artifact(config, kNewsPredictions); fs::exists(path)) {
        auto news = load_prediction_file(path);
        data.predictions.insert(data.predictions.end(), news.begin(), news.end());
    }
    if (auto path = artifact(config, kCalibration); fs::exists(path)) {
        data.calibration_json = read_file(path);
    }
    return data;
}

}  // namespace vulnlink
