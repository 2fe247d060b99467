#include "vulnlink/validation.hpp"

#include "vulnlink/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

namespace vulnlink {

namespace {

using json = nlohmann::json;

bool is_final(Verdict v) {
    return v != Verdict::Undecided;
}

}  // namespace

std::string_view to_string(Verdict verdict) {
    switch (verdict) {
        case Verdict::Linked: return "Linked";
        case Verdict::NotLinked: return "NotLinked";
        case Verdict::Undecided: return "Undecided";
    }
    return "?";
}

std::optional<Verdict> parse_verdict(std::string_view tag) {
    for (auto v : {Verdict::Linked, Verdict::NotLinked, Verdict::Undecided}) {
        if (to_string(v) == tag) {
            return v;
        }
    }
    return std::nullopt;
}

std::string_view to_string(PairState state) {
    switch (state) {
        case PairState::Open: return "open";
        case PairState::Enriched: return "enriched";
        case PairState::Rejected: return "rejected";
        case PairState::Unresolved: return "unresolved";
    }
    return "?";
}

std::string record_to_json(const ValidationRecord& r) {
    return json{{"attack", r.subject.raw},
                {"kind", to_string(r.subject.kind)},
                {"cve", r.cve.raw},
                {"verdict", to_string(r.verdict)},
                {"round", r.round},
                {"reviewer", r.reviewer},
                {"timestamp", r.timestamp},
                {"note", r.note}}
        .dump();
}

ValidationRecord record_from_json(const std::string& line) {
    try {
        auto obj = json::parse(line);
        ValidationRecord r;
        auto raw = obj.at("attack").get<std::string>();
        std::optional<EntryKind> kind =
            obj.contains("kind") ? parse_kind(obj.at("kind").get<std::string>()) : infer_kind(raw);
        if (!kind) {
            throw ValidationError("cannot determine the kind of '" + raw + "'; pass \"kind\"");
        }
        r.subject = EntryId::make(*kind, raw);
        r.cve = EntryId::cve(obj.at("cve").get<std::string>());
        auto verdict = parse_verdict(obj.at("verdict").get<std::string>());
        if (!verdict) {
            throw ValidationError("unknown verdict '" + obj.at("verdict").get<std::string>() + "'");
        }
        r.verdict = *verdict;
        r.round = obj.value("round", 1);
        r.reviewer = obj.at("reviewer").get<std::string>();
        r.timestamp = obj.value("timestamp", std::string{});
        r.note = obj.value("note", std::string{});
        return r;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed verdict record: ") + e.what());
    } catch (const CorpusError& e) {
        throw ValidationError(e.what());
    }
}

ValidationStore::ValidationStore(const std::vector<PredictionSet>& predictions, const GroundTruthMap& truth,
                                 ConsensusConfig config, std::string log_path)
    : config_(config), log_path_(std::move(log_path)) {
    if (config_.min_reviewers == 0 || config_.max_rounds < 1) {
        throw PreconditionError("consensus needs at least one reviewer and one round");
    }
    for (const auto& p : predictions) {
        for (const auto& c : p.cut) {
            if (truth.has_pair(p.attack, c.cve)) {
                continue;
            }
            auto& status = pairs_[{p.attack, c.cve}];
            status.score = std::max(status.score, c.score);
        }
    }
    if (!log_path_.empty() && std::filesystem::exists(log_path_)) {
        for (const auto& r : read_log(log_path_)) {
            apply(r);
        }
    }
}

const ValidationStore::PairStatus& ValidationStore::status(const EntryId& subject, const EntryId& cve) const {
    auto it = pairs_.find({subject, cve});
    if (it == pairs_.end()) {
        throw ValidationError("(" + subject.raw + ", " + cve.raw + ") is not a pending candidate");
    }
    return it->second;
}

SubmitResult ValidationStore::apply(const ValidationRecord& record) {
    auto it = pairs_.find({record.subject, record.cve});
    if (it == pairs_.end()) {
        throw ValidationError("(" + record.subject.raw + ", " + record.cve.raw +
                              ") is not a predicted pair outside the ground truth");
    }
    if (record.reviewer.empty()) {
        throw ValidationError("verdict needs a reviewer");
    }
    auto& st = it->second;
    if (st.state != PairState::Open) {
        throw ValidationError("pair already " + std::string(to_string(st.state)));
    }
    if (record.round != st.round) {
        throw ValidationError("pair is in round " + std::to_string(st.round) + ", verdict is for round " +
                              std::to_string(record.round));
    }
    auto& finals = st.finals[record.round];
    if (is_final(record.verdict)) {
        if (auto prev = finals.find(record.reviewer); prev != finals.end()) {
            if (prev->second != record.verdict) {
                throw ValidationError("reviewer '" + record.reviewer + "' already gave a different verdict in round " +
                                      std::to_string(record.round));
            }
            return {st.record_ids.at({record.round, record.reviewer}), true, st.state};
        }
    }

    log_.push_back(record);
    std::size_t id = log_.size();
    if (!is_final(record.verdict)) {
        return {id, false, st.state};
    }
    finals[record.reviewer] = record.verdict;
    st.record_ids[{record.round, record.reviewer}] = id;

    std::set<Verdict> distinct;
    for (const auto& [reviewer, v] : finals) {
        distinct.insert(v);
    }
    if (distinct.size() > 1) {
        if (st.round < config_.max_rounds) {
            ++st.round;
        } else {
            st.state = PairState::Unresolved;
        }
    } else if (finals.size() >= config_.min_reviewers) {
        st.state = *distinct.begin() == Verdict::Linked ? PairState::Enriched : PairState::Rejected;
        st.resolved_round = st.round;
    }
    return {id, false, st.state};
}

SubmitResult ValidationStore::submit(const ValidationRecord& record) {
    std::lock_guard lock(mutex_);
    auto before = log_.size();
    auto result = apply(record);
    if (log_.size() > before && !log_path_.empty()) {
        std::ofstream out(log_path_, std::ios::app);
        if (!out) {
            log_.pop_back();
            throw ValidationError("cannot append to verdict log '" + log_path_ + "'");
        }
        out << record_to_json(record) << '\n';
        out.flush();
    }
    return result;
}

std::vector<CandidatePair> ValidationStore::pending(const std::optional<EntryId>& subject) const {
    std::lock_guard lock(mutex_);
    std::vector<CandidatePair> out;
    for (const auto& [key, st] : pairs_) {
        if (st.state != PairState::Open || (subject && key.first != *subject)) {
            continue;
        }
        out.push_back({key.first, key.second, st.score});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const CandidatePair& a, const CandidatePair& b) { return a.score > b.score; });
    return out;
}

std::vector<EnrichmentEntry> ValidationStore::enrichment() const {
    std::lock_guard lock(mutex_);
    std::vector<EnrichmentEntry> out;
    for (const auto& [key, st] : pairs_) {
        if (st.state != PairState::Enriched) {
            continue;
        }
        EnrichmentEntry e{key.first, key.second, {}, st.resolved_round};
        for (const auto& [reviewer, v] : st.finals.at(st.resolved_round)) {
            e.reviewers.push_back(reviewer);
        }
        out.push_back(std::move(e));
    }
    return out;
}

PairState ValidationStore::state(const EntryId& subject, const EntryId& cve) const {
    std::lock_guard lock(mutex_);
    return status(subject, cve).state;
}

int ValidationStore::current_round(const EntryId& subject, const EntryId& cve) const {
    std::lock_guard lock(mutex_);
    return status(subject, cve).round;
}

bool ValidationStore::is_candidate(const EntryId& subject, const EntryId& cve) const {
    std::lock_guard lock(mutex_);
    return pairs_.count({subject, cve}) != 0;
}

std::vector<ValidationRecord> ValidationStore::log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

std::map<std::pair<EntryId, EntryId>, bool> ValidationStore::consensus() const {
    std::lock_guard lock(mutex_);
    std::map<std::pair<EntryId, EntryId>, bool> out;
    for (const auto& [key, st] : pairs_) {
        if (st.state == PairState::Enriched || st.state == PairState::Rejected) {
            out[key] = st.state == PairState::Enriched;
        }
    }
    return out;
}

void ValidationStore::snapshot(const std::string& path) const {
    auto entries = enrichment();
    std::lock_guard lock(mutex_);
    json states = json::array();
    for (const auto& [key, st] : pairs_) {
        states.push_back({{"attack", key.first.raw},
                          {"cve", key.second.raw},
                          {"state", to_string(st.state)},
                          {"round", st.round}});
    }
    json enriched = json::array();
    for (const auto& e : entries) {
        enriched.push_back({{"attack", e.subject.raw}, {"cve", e.cve.raw}, {"reviewers", e.reviewers}, {"rounds", e.rounds}});
    }
    json out = {{"log_records", log_.size()}, {"pairs", std::move(states)}, {"enrichment", std::move(enriched)}};
    auto tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        f << out.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

std::vector<ValidationRecord> ValidationStore::read_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot read verdict log '" + path + "'");
    }
    std::vector<ValidationRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") != std::string::npos) {
            out.push_back(record_from_json(line));
        }
    }
    return out;
}

std::string enrichment_jsonl(const std::vector<EnrichmentEntry>& entries) {
    std::string out;
    for (const auto& e : entries) {
        out += json{{"attack", e.subject.raw}, {"cve", e.cve.raw}, {"reviewers", e.reviewers}, {"rounds", e.rounds}}
                   .dump();
        out.push_back('\n');
    }
    return out;
}

}  // namespace vulnlink
