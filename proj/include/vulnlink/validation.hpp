/**
 * @file validation.hpp
 *
 * @brief Append-only store of analyst verdicts on predicted-but-unlinked pairs.
 *
 * Candidates are the pairs (attack or report, CVE) that appear in a stored
 * prediction cut but not in the ground truth. Reviewers vote per round; a
 * round reaches consensus when at least `min_reviewers` final verdicts agree
 * and none disagrees. Disagreement opens the next round; after
 * `max_rounds` without consensus the pair stays unresolved for good.
 * The consensus state is a pure function of the verdict log.
 */
#pragma once

#include "vulnlink/annotate.hpp"
#include "vulnlink/similarity.hpp"

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace vulnlink {

enum class Verdict { Linked, NotLinked, Undecided };

std::string_view to_string(Verdict verdict);
std::optional<Verdict> parse_verdict(std::string_view tag);

struct ValidationRecord {
    EntryId subject;
    EntryId cve;
    Verdict verdict = Verdict::Undecided;
    int round = 1;
    std::string reviewer;
    std::string timestamp;
    std::string note;

    bool operator==(const ValidationRecord&) const = default;
};

enum class PairState { Open, Enriched, Rejected, Unresolved };

std::string_view to_string(PairState state);

struct ConsensusConfig {
    std::size_t min_reviewers = 2;
    int max_rounds = 2;
};

struct CandidatePair {
    EntryId subject;
    EntryId cve;
    double score = 0.0;
};

struct SubmitResult {
    std::size_t id = 0;
    bool duplicate = false;
    PairState state = PairState::Open;
};

struct EnrichmentEntry {
    EntryId subject;
    EntryId cve;
    std::vector<std::string> reviewers;
    int rounds = 0;

    bool operator==(const EnrichmentEntry&) const = default;
};

class ValidationStore {
public:
    /// Candidates are taken from every prediction cut minus the ground truth.
    /// When `log_path` names an existing log it is replayed; new verdicts
    /// are appended to it.
    ValidationStore(const std::vector<PredictionSet>& predictions, const GroundTruthMap& truth,
                    ConsensusConfig config = {}, std::string log_path = {});

    ValidationStore(const ValidationStore&) = delete;
    ValidationStore& operator=(const ValidationStore&) = delete;

    /// Throws ValidationError for unknown pairs, pairs already in the
    /// ground truth, resolved pairs, wrong rounds and conflicting duplicates.
    /// An identical repeat of a final verdict is not stored again and comes
    /// back with `duplicate` set.
    SubmitResult submit(const ValidationRecord& record);

    /// Open pairs, highest score first.
    std::vector<CandidatePair> pending(const std::optional<EntryId>& subject = std::nullopt) const;
    std::vector<EnrichmentEntry> enrichment() const;
    PairState state(const EntryId& subject, const EntryId& cve) const;
    int current_round(const EntryId& subject, const EntryId& cve) const;
    bool is_candidate(const EntryId& subject, const EntryId& cve) const;

    std::vector<ValidationRecord> log() const;

    /// Consensus verdicts keyed by pair: true for Enriched, false for Rejected.
    std::map<std::pair<EntryId, EntryId>, bool> consensus() const;

    /// Writes the current enrichment set and pair states as JSON.
    void snapshot(const std::string& path) const;

    static std::vector<ValidationRecord> read_log(const std::string& path);

private:
    struct PairStatus {
        double score = 0.0;
        PairState state = PairState::Open;
        int round = 1;
        int resolved_round = 0;
        // reviewer → final verdict, per round
        std::map<int, std::map<std::string, Verdict>> finals;
        std::map<std::pair<int, std::string>, std::size_t> record_ids;
    };

    SubmitResult apply(const ValidationRecord& record);
    const PairStatus& status(const EntryId& subject, const EntryId& cve) const;

    ConsensusConfig config_;
    std::string log_path_;
    std::map<std::pair<EntryId, EntryId>, PairStatus> pairs_;
    std::vector<ValidationRecord> log_;
    mutable std::mutex mutex_;
};

std::string record_to_json(const ValidationRecord& record);
ValidationRecord record_from_json(const std::string& line);

/// One JSON object per accepted pair: attack, cve, reviewers, rounds.
std::string enrichment_jsonl(const std::vector<EnrichmentEntry>& entries);

}  // namespace vulnlink
