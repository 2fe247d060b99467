/**
 * @file annotate.hpp
 *
 * @brief Explicit-link graph and chain-derived attack → CVE ground truth.
 *
 * An attack is linked to a CVE when a chain of explicit links connects them
 * following the canonical kind sequence
 *
 *     Tactic → Technique → AttackPattern → Weakness → Vulnerability
 *
 * Attack patterns start at the third element, techniques at the second, and a
 * procedure inherits the chains of the technique(s) that list it. By default
 * a link counts as a mention on either page, so edge direction is ignored.
 */
#pragma once

#include "vulnlink/corpus.hpp"

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace vulnlink {

struct LinkEdge {
    EntryId src;
    EntryId dst;

    auto operator<=>(const LinkEdge&) const = default;
    bool operator==(const LinkEdge&) const = default;
};

class LinkGraph {
public:
    LinkGraph() = default;

    /// Adds an edge; endpoints absent from the node set become dangling.
    /// Self-loops are ignored. Only used while building.
    void add_node(const EntryId& id);
    void add_edge(const EntryId& src, const EntryId& dst);

    const std::set<EntryId>& nodes() const { return nodes_; }
    const std::set<LinkEdge>& edges() const { return edges_; }
    const std::set<EntryId>& dangling() const { return dangling_; }

    bool contains(const EntryId& id) const { return nodes_.count(id) != 0 || dangling_.count(id) != 0; }

    /// Targets listed on `id`'s page.
    const std::set<EntryId>& outgoing(const EntryId& id) const;
    /// Pages that list `id`.
    const std::set<EntryId>& incoming(const EntryId& id) const;

private:
    std::set<EntryId> nodes_;
    std::set<LinkEdge> edges_;
    std::set<EntryId> dangling_;
    std::map<EntryId, std::set<EntryId>> out_;
    std::map<EntryId, std::set<EntryId>> in_;
};

LinkGraph build_link_graph(const Corpus& corpus);

struct AnnotateOptions {
    /// Follow links only in page-listed direction (ablation mode).
    bool direction_strict = false;
    bool record_provenance = true;
};

/// Sequence of IDs from the attack to the CVE, both inclusive.
using Chain = std::vector<EntryId>;

struct Annotation {
    EntryId attack;
    std::set<EntryId> cves;
    std::map<EntryId, std::vector<Chain>> provenance;
};

/// Derives M(a) for one attack. Throws LookupError for unknown IDs and
/// PreconditionError for non-attack kinds.
Annotation annotate_attack(const LinkGraph& graph, const EntryId& attack, const AnnotateOptions& options = {});

struct GroundTruthMap {
    std::map<EntryId, std::set<EntryId>> links;
    std::map<std::pair<EntryId, EntryId>, std::vector<Chain>> provenance;

    /// Throws LookupError when `attack` is outside the map's domain.
    const std::set<EntryId>& at(const EntryId& attack) const;
    bool contains(const EntryId& attack) const { return links.count(attack) != 0; }
    bool has_pair(const EntryId& attack, const EntryId& cve) const;
};

struct KindLinkStats {
    std::size_t linked = 0;
    std::size_t not_linked = 0;
    std::size_t total = 0;
    std::size_t linked_cwes = 0;
    std::size_t not_linked_cwes = 0;
    std::size_t linked_cves = 0;
    std::size_t not_linked_cves = 0;
};

struct LinkStats {
    std::map<EntryKind, KindLinkStats> per_kind;
    /// Distinct CVEs linked to any attack kind.
    std::size_t union_linked_cves = 0;
    std::size_t corpus_cves = 0;
    std::size_t corpus_cwes = 0;
};

struct AnnotationResult {
    GroundTruthMap truth;
    LinkStats stats;
};

AnnotationResult annotate_all(const LinkGraph& graph, const Corpus& corpus, const AnnotateOptions& options = {});

/// One JSON object per attack: {"attack", "kind", "cves", optional "provenance"}.
void write_ground_truth(const GroundTruthMap& truth, std::ostream& out, bool with_provenance = true,
                        const std::string& meta_json = {});
GroundTruthMap read_ground_truth(std::istream& in);

std::string link_stats_json(const LinkStats& stats);

}  // namespace vulnlink
