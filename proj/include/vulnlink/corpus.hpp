/**
 * @file corpus.hpp
 *
 * @brief Canonical data model for attack, weakness, vulnerability and news entries.
 *
 * A corpus file holds one JSON object per line with the fields `kind`, `id`,
 * `title`, `text` and `links` (array of ID strings). An optional `clean`
 * field carries preprocessed text, and a line of the form `{"_meta": {...}}`
 * carries artifact metadata and is skipped by the parser.
 */
#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace vulnlink {

enum class EntryKind {
    Tactic,
    Technique,
    Procedure,
    AttackPattern,
    Weakness,
    Vulnerability,
    NewsReport,
};

inline constexpr std::array<EntryKind, 7> kAllKinds = {
    EntryKind::Tactic,        EntryKind::Technique, EntryKind::Procedure,     EntryKind::AttackPattern,
    EntryKind::Weakness,      EntryKind::Vulnerability, EntryKind::NewsReport,
};

inline constexpr std::array<EntryKind, 4> kAttackKinds = {
    EntryKind::Tactic, EntryKind::Technique, EntryKind::Procedure, EntryKind::AttackPattern};

std::string_view to_string(EntryKind kind);
std::optional<EntryKind> parse_kind(std::string_view tag);
bool is_attack_kind(EntryKind kind);

/// Kind implied by a well-known ID prefix (TA…, T…, CAPEC-, CWE-, CVE-, NEWS-).
/// Procedures have no reserved prefix and are never inferred.
std::optional<EntryKind> infer_kind(std::string_view raw_id);

/// True when `raw_id` is `CVE-<4 digit year>-<4..7 digits>` (upper-case prefix).
bool is_cve_id(std::string_view raw_id);

struct EntryId {
    EntryKind kind = EntryKind::Vulnerability;
    std::string raw;

    /// Validates the ID against its kind; throws CorpusError on violation.
    static EntryId make(EntryKind kind, std::string raw);
    static EntryId cve(std::string raw) { return make(EntryKind::Vulnerability, std::move(raw)); }

    bool operator==(const EntryId& other) const = default;
    std::strong_ordering operator<=>(const EntryId& other) const {
        if (auto c = raw <=> other.raw; c != 0) {
            return c;
        }
        return kind <=> other.kind;
    }
};

std::ostream& operator<<(std::ostream& os, const EntryId& id);

struct CorpusEntry {
    EntryId id;
    std::string title;
    std::string raw_text;
    std::string clean_text;
    std::vector<EntryId> explicit_links;
    /// NewsReport only: CVE IDs in order of first mention in `raw_text`.
    std::vector<EntryId> mentioned_cves;

    bool operator==(const CorpusEntry& other) const = default;
};

/// A news report view over a corpus entry.
struct NewsReport {
    EntryId id;
    std::string body;
    std::vector<EntryId> mentioned_cves;
};

NewsReport as_news_report(const CorpusEntry& entry);

class Corpus {
public:
    using EntryMap = std::map<EntryId, CorpusEntry>;

    /// Throws CorpusError if an entry with the same raw ID is already present.
    void add(CorpusEntry entry);

    const CorpusEntry* find(const EntryId& id) const;
    const CorpusEntry* find_raw(std::string_view raw_id) const;
    const CorpusEntry& at(const EntryId& id) const;

    const EntryMap& entries() const { return entries_; }
    EntryMap& mutable_entries() { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    std::size_t count(EntryKind kind) const;
    std::map<EntryKind, std::size_t> counts() const;

    std::vector<EntryId> ids_of_kind(EntryKind kind) const;

    bool operator==(const Corpus& other) const { return entries_ == other.entries_; }

private:
    EntryMap entries_;
    std::map<std::string, EntryId, std::less<>> by_raw_;
};

struct ParseIssue {
    std::size_t line = 0;
    std::string message;
};

struct ParseResult {
    Corpus corpus;
    std::vector<ParseIssue> issues;
};

/// Parses line-delimited canonical records. A duplicate ID aborts the whole
/// load with CorpusError; every other malformed line is skipped and reported.
ParseResult parse_corpus(std::istream& in);
ParseResult parse_corpus_file(const std::string& path);

/// Writes the corpus in canonical form, entries in ID order. An optional
/// metadata object is emitted as a leading `_meta` line.
void serialize_corpus(const Corpus& corpus, std::ostream& out, const std::string& meta_json = {});

/// All CVE identifiers in `text`, upper-cased, de-duplicated, in first-occurrence order.
std::vector<EntryId> extract_cve_ids(std::string_view text);

/// Replaces invalid UTF-8 sequences with U+FFFD.
std::string sanitize_utf8(std::string_view text);

}  // namespace vulnlink

template <>
struct std::hash<vulnlink::EntryId> {
    std::size_t operator()(const vulnlink::EntryId& id) const noexcept {
        return std::hash<std::string>{}(id.raw) ^ (static_cast<std::size_t>(id.kind) * 0x9e3779b97f4a7c15ULL);
    }
};
