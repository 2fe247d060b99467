#include "vulnlink/annotate.hpp"

#include "vulnlink/error.hpp"

#include "json.hpp"

#include <istream>
#include <ostream>

namespace vulnlink {

namespace {

using json = nlohmann::json;

const std::set<EntryId>& empty_set() {
    static const std::set<EntryId> empty;
    return empty;
}

enum class Hop { Forward, Backward };

class ChainWalker {
public:
    ChainWalker(const LinkGraph& graph, const AnnotateOptions& options) : graph_(graph), options_(options) {}

    // Neighbours of `from` with the given kind. In strict mode only the
    // page-listed direction `hop` is followed.
    std::vector<EntryId> step(const EntryId& from, EntryKind kind, Hop hop) const {
        std::set<EntryId> found;
        auto take = [&](const std::set<EntryId>& ids) {
            for (const auto& id : ids) {
                if (id.kind == kind) {
                    found.insert(id);
                }
            }
        };
        if (!options_.direction_strict || hop == Hop::Forward) {
            take(graph_.outgoing(from));
        }
        if (!options_.direction_strict || hop == Hop::Backward) {
            take(graph_.incoming(from));
        }
        return {found.begin(), found.end()};
    }

    void from_pattern(Chain& prefix, Annotation& out) const {
        for (const auto& cwe : step(prefix.back(), EntryKind::Weakness, Hop::Forward)) {
            prefix.push_back(cwe);
            for (const auto& cve : step(cwe, EntryKind::Vulnerability, Hop::Forward)) {
                out.cves.insert(cve);
                if (options_.record_provenance) {
                    prefix.push_back(cve);
                    out.provenance[cve].push_back(prefix);
                    prefix.pop_back();
                }
            }
            prefix.pop_back();
        }
    }

    void from_technique(Chain& prefix, Annotation& out) const {
        for (const auto& pattern : step(prefix.back(), EntryKind::AttackPattern, Hop::Forward)) {
            prefix.push_back(pattern);
            from_pattern(prefix, out);
            prefix.pop_back();
        }
    }

    void via_techniques(Chain& prefix, Hop hop, Annotation& out) const {
        for (const auto& technique : step(prefix.back(), EntryKind::Technique, hop)) {
            prefix.push_back(technique);
            from_technique(prefix, out);
            prefix.pop_back();
        }
    }

private:
    const LinkGraph& graph_;
    const AnnotateOptions& options_;
};

}  // namespace

void LinkGraph::add_node(const EntryId& id) {
    nodes_.insert(id);
    dangling_.erase(id);
}

void LinkGraph::add_edge(const EntryId& src, const EntryId& dst) {
    if (src == dst) {
        return;
    }
    for (const auto* id : {&src, &dst}) {
        if (nodes_.count(*id) == 0) {
            dangling_.insert(*id);
        }
    }
    if (edges_.insert(LinkEdge{src, dst}).second) {
        out_[src].insert(dst);
        in_[dst].insert(src);
    }
}

const std::set<EntryId>& LinkGraph::outgoing(const EntryId& id) const {
    auto it = out_.find(id);
    return it == out_.end() ? empty_set() : it->second;
}

const std::set<EntryId>& LinkGraph::incoming(const EntryId& id) const {
    auto it = in_.find(id);
    return it == in_.end() ? empty_set() : it->second;
}

LinkGraph build_link_graph(const Corpus& corpus) {
    LinkGraph graph;
    for (const auto& [id, entry] : corpus.entries()) {
        graph.add_node(id);
    }
    for (const auto& [id, entry] : corpus.entries()) {
        for (const auto& target : entry.explicit_links) {
            graph.add_edge(id, target);
        }
    }
    return graph;
}

Annotation annotate_attack(const LinkGraph& graph, const EntryId& attack, const AnnotateOptions& options) {
    if (!graph.contains(attack)) {
        throw LookupError("unknown attack '" + attack.raw + "'");
    }
    if (!is_attack_kind(attack.kind)) {
        throw PreconditionError("'" + attack.raw + "' is a " + std::string(to_string(attack.kind)) +
                                ", not an attack");
    }
    Annotation out;
    out.attack = attack;
    ChainWalker walker(graph, options);
    Chain prefix{attack};
    switch (attack.kind) {
        case EntryKind::Technique: walker.from_technique(prefix, out); break;
        case EntryKind::AttackPattern: walker.from_pattern(prefix, out); break;
        case EntryKind::Tactic: walker.via_techniques(prefix, Hop::Forward, out); break;
        // technique pages list their procedures
        case EntryKind::Procedure: walker.via_techniques(prefix, Hop::Backward, out); break;
        default: break;
    }
    return out;
}

const std::set<EntryId>& GroundTruthMap::at(const EntryId& attack) const {
    auto it = links.find(attack);
    if (it == links.end()) {
        throw LookupError("attack '" + attack.raw + "' has no ground-truth record");
    }
    return it->second;
}

bool GroundTruthMap::has_pair(const EntryId& attack, const EntryId& cve) const {
    auto it = links.find(attack);
    return it != links.end() && it->second.count(cve) != 0;
}

AnnotationResult annotate_all(const LinkGraph& graph, const Corpus& corpus, const AnnotateOptions& options) {
    AnnotationResult result;
    auto& stats = result.stats;
    stats.corpus_cves = corpus.count(EntryKind::Vulnerability);
    stats.corpus_cwes = corpus.count(EntryKind::Weakness);

    std::map<EntryKind, std::set<EntryId>> cves_by_kind;
    std::map<EntryKind, std::set<EntryId>> cwes_by_kind;
    std::set<EntryId> all_cves;

    for (auto kind : kAttackKinds) {
        stats.per_kind[kind] = {};
    }
    for (const auto& [id, entry] : corpus.entries()) {
        if (!is_attack_kind(id.kind)) {
            continue;
        }
        auto annotation = annotate_attack(graph, id, AnnotateOptions{options.direction_strict, true});
        auto& ks = stats.per_kind[id.kind];
        ++ks.total;
        (annotation.cves.empty() ? ks.not_linked : ks.linked) += 1;

        for (const auto& [cve, chains] : annotation.provenance) {
            for (const auto& chain : chains) {
                for (const auto& hop : chain) {
                    if (hop.kind == EntryKind::Weakness) {
                        cwes_by_kind[id.kind].insert(hop);
                    }
                }
            }
            if (options.record_provenance) {
                result.truth.provenance[{id, cve}] = chains;
            }
        }
        cves_by_kind[id.kind].insert(annotation.cves.begin(), annotation.cves.end());
        all_cves.insert(annotation.cves.begin(), annotation.cves.end());
        result.truth.links[id] = std::move(annotation.cves);
    }

    auto in_corpus = [&](const std::set<EntryId>& ids) {
        return static_cast<std::size_t>(
            std::count_if(ids.begin(), ids.end(), [&](const EntryId& i) { return corpus.find(i) != nullptr; }));
    };
    for (auto& [kind, ks] : stats.per_kind) {
        ks.linked_cves = cves_by_kind[kind].size();
        ks.not_linked_cves = stats.corpus_cves - in_corpus(cves_by_kind[kind]);
        ks.linked_cwes = cwes_by_kind[kind].size();
        ks.not_linked_cwes = stats.corpus_cwes - in_corpus(cwes_by_kind[kind]);
    }
    stats.union_linked_cves = all_cves.size();
    return result;
}

void write_ground_truth(const GroundTruthMap& truth, std::ostream& out, bool with_provenance,
                        const std::string& meta_json) {
    if (!meta_json.empty()) {
        out << json{{"_meta", json::parse(meta_json)}}.dump() << '\n';
    }
    for (const auto& [attack, cves] : truth.links) {
        json obj;
        obj["attack"] = attack.raw;
        obj["kind"] = to_string(attack.kind);
        auto ids = json::array();
        for (const auto& c : cves) {
            ids.push_back(c.raw);
        }
        obj["cves"] = std::move(ids);
        if (with_provenance) {
            json prov = json::object();
            for (const auto& c : cves) {
                auto it = truth.provenance.find({attack, c});
                if (it == truth.provenance.end()) {
                    continue;
                }
                auto chains = json::array();
                for (const auto& chain : it->second) {
                    auto arr = json::array();
                    for (const auto& hop : chain) {
                        arr.push_back(hop.raw);
                    }
                    chains.push_back(std::move(arr));
                }
                prov[c.raw] = std::move(chains);
            }
            obj["provenance"] = std::move(prov);
        }
        out << obj.dump() << '\n';
    }
}

GroundTruthMap read_ground_truth(std::istream& in) {
    GroundTruthMap truth;
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
            auto attack = EntryId::make(*kind, obj.at("attack").get<std::string>());
            auto& set = truth.links[attack];
            for (const auto& c : obj.at("cves")) {
                set.insert(EntryId::cve(c.get<std::string>()));
            }
            if (auto prov = obj.find("provenance"); prov != obj.end()) {
                for (const auto& [cve, chains] : prov->items()) {
                    auto& stored = truth.provenance[{attack, EntryId::cve(cve)}];
                    for (const auto& chain : chains) {
                        Chain c;
                        for (const auto& hop : chain) {
                            auto raw = hop.get<std::string>();
                            auto hop_kind = raw == attack.raw ? std::optional(attack.kind) : infer_kind(raw);
                            // procedures carry no prefix; they only appear as chain heads
                            c.push_back(EntryId{hop_kind.value_or(EntryKind::Procedure), raw});
                        }
                        stored.push_back(std::move(c));
                    }
                }
            }
        } catch (const nlohmann::json::exception& e) {
            throw CorpusError("ground truth line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return truth;
}

std::string link_stats_json(const LinkStats& stats) {
    json obj;
    json kinds = json::object();
    for (const auto& [kind, ks] : stats.per_kind) {
        kinds[std::string(to_string(kind))] = {
            {"linked", ks.linked},
            {"not_linked", ks.not_linked},
            {"total", ks.total},
            {"cwe", {{"linked", ks.linked_cwes}, {"not_linked", ks.not_linked_cwes}}},
            {"cve", {{"linked", ks.linked_cves}, {"not_linked", ks.not_linked_cves}}},
        };
    }
    obj["per_kind"] = std::move(kinds);
    obj["union_linked_cves"] = stats.union_linked_cves;
    obj["corpus_cves"] = stats.corpus_cves;
    obj["corpus_cwes"] = stats.corpus_cwes;
    return obj.dump(2);
}

}  // namespace vulnlink
