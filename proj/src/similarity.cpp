#include "vulnlink/similarity.hpp"

#include "vulnlink/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

namespace vulnlink {

namespace {

using json = nlohmann::json;

void check_dims(std::span<const float> p, std::span<const float> q) {
    if (p.size() != q.size()) {
        throw SimilarityError("dimension mismatch: " + std::to_string(p.size()) + " vs " + std::to_string(q.size()));
    }
}

}  // namespace

std::string_view to_string(SimilarityKind kind) {
    return kind == SimilarityKind::Cosine ? "cosine" : "dot";
}

std::optional<SimilarityKind> parse_similarity(std::string_view tag) {
    if (tag == "cosine") {
        return SimilarityKind::Cosine;
    }
    if (tag == "dot") {
        return SimilarityKind::Dot;
    }
    return std::nullopt;
}

double dot(std::span<const float> p, std::span<const float> q) {
    check_dims(p, q);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        sum += static_cast<double>(p[i]) * static_cast<double>(q[i]);
    }
    return sum;
}

double cosine(std::span<const float> p, std::span<const float> q) {
    check_dims(p, q);
    double pq = 0.0;
    double pp = 0.0;
    double qq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto a = static_cast<double>(p[i]);
        auto b = static_cast<double>(q[i]);
        pq += a * b;
        pp += a * a;
        qq += b * b;
    }
    if (pp == 0.0 || qq == 0.0) {
        throw SimilarityError("cosine similarity is undefined for a zero-norm vector");
    }
    return pq / (std::sqrt(pp) * std::sqrt(qq));
}

double cosine(const EmbeddingVector& p, const EmbeddingVector& q) {
    return cosine(std::span<const float>(p.values), std::span<const float>(q.values));
}

double similarity(SimilarityKind kind, const EmbeddingVector& p, const EmbeddingVector& q) {
    return kind == SimilarityKind::Cosine ? cosine(p, q) : dot(p.values, q.values);
}

void sort_ranking(Ranking& ranking) {
    std::sort(ranking.begin(), ranking.end(), [](const RankedCve& a, const RankedCve& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.cve.raw < b.cve.raw;
    });
}

Ranking rank_cves(const EmbeddingVector& query, const EmbeddingStore& store, SimilarityKind kind) {
    if (query.dim() != store.dim()) {
        throw SimilarityError("query dimension " + std::to_string(query.dim()) + " does not match store dimension " +
                              std::to_string(store.dim()));
    }
    Ranking ranking;
    for (const auto& [id, v] : store.vectors()) {
        if (id.kind == EntryKind::Vulnerability) {
            ranking.push_back({id, similarity(kind, query, v)});
        }
    }
    if (ranking.empty()) {
        throw SimilarityError("vector store holds no CVE vectors");
    }
    sort_ranking(ranking);
    return ranking;
}

Ranking cut_ranking(const Ranking& ranking, double rho, std::optional<std::size_t> k, ThresholdMode mode) {
    auto limit = std::min(k.value_or(ranking.size()), ranking.size());
    Ranking cut;
    for (std::size_t i = 0; i < limit; ++i) {
        if (passes_threshold(ranking[i].score, rho, mode)) {
            cut.push_back(ranking[i]);
        }
    }
    return cut;
}

std::vector<EntryId> PredictionSet::cut_ids() const {
    std::vector<EntryId> ids;
    ids.reserve(cut.size());
    for (const auto& r : cut) {
        ids.push_back(r.cve);
    }
    return ids;
}

PredictionSet predict_set(EntryId attack, Ranking ranking, double rho, std::optional<std::size_t> k,
                          ThresholdMode mode) {
    PredictionSet set;
    set.attack = std::move(attack);
    set.cut = cut_ranking(ranking, rho, k, mode);
    set.ranked = std::move(ranking);
    set.rho = rho;
    set.k = k;
    set.mode = mode;
    return set;
}

void write_predictions(const std::vector<PredictionSet>& predictions, std::ostream& out,
                       const std::string& meta_json) {
    if (!meta_json.empty()) {
        out << json{{"_meta", json::parse(meta_json)}}.dump() << '\n';
    }
    for (const auto& p : predictions) {
        json obj;
        obj["attack"] = p.attack.raw;
        obj["kind"] = to_string(p.attack.kind);
        obj["rho"] = p.rho;
        obj["k"] = p.k ? json(*p.k) : json(nullptr);
        obj["inclusive"] = p.mode == ThresholdMode::Inclusive;
        auto ranked = json::array();
        auto limit = std::min(p.k.value_or(p.ranked.size()), p.ranked.size());
        for (std::size_t i = 0; i < limit; ++i) {
            ranked.push_back({{"cve", p.ranked[i].cve.raw},
                              {"score", p.ranked[i].score},
                              {"display", display_score(p.ranked[i].score)}});
        }
        obj["ranked"] = std::move(ranked);
        auto cut = json::array();
        for (const auto& r : p.cut) {
            cut.push_back(r.cve.raw);
        }
        obj["cut"] = std::move(cut);
        out << obj.dump() << '\n';
    }
}

std::vector<PredictionSet> read_predictions(std::istream& in) {
    std::vector<PredictionSet> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            auto obj = json::parse(line);
            if (obj.contains("_meta")) {
                continue;
            }
            auto kind = parse_kind(obj.at("kind").get<std::string>());
            if (!kind) {
                throw CorpusError("unknown kind");
            }
            Ranking ranking;
            for (const auto& r : obj.at("ranked")) {
                ranking.push_back({EntryId::cve(r.at("cve").get<std::string>()), r.at("score").get<double>()});
            }
            std::optional<std::size_t> k;
            if (!obj.at("k").is_null()) {
                k = obj.at("k").get<std::size_t>();
            }
            auto mode = obj.value("inclusive", false) ? ThresholdMode::Inclusive : ThresholdMode::Strict;
            out.push_back(predict_set(EntryId::make(*kind, obj.at("attack").get<std::string>()), std::move(ranking),
                                      obj.at("rho").get<double>(), k, mode));
        } catch (const json::exception& e) {
            throw CorpusError("predictions line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace vulnlink
