#include "vulnlink/corpus.hpp"

#include "vulnlink/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <set>
#include <unordered_set>

namespace vulnlink {

namespace {

using json = nlohmann::json;

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

// T1574 or T1574.007
bool is_technique_id(std::string_view s) {
    if (s.size() < 5 || s[0] != 'T' || !all_digits(s.substr(1, 4))) {
        return false;
    }
    if (s.size() == 5) {
        return true;
    }
    return s.size() == 9 && s[5] == '.' && all_digits(s.substr(6));
}

}  // namespace

std::string_view to_string(EntryKind kind) {
    switch (kind) {
        case EntryKind::Tactic: return "Tactic";
        case EntryKind::Technique: return "Technique";
        case EntryKind::Procedure: return "Procedure";
        case EntryKind::AttackPattern: return "AttackPattern";
        case EntryKind::Weakness: return "Weakness";
        case EntryKind::Vulnerability: return "Vulnerability";
        case EntryKind::NewsReport: return "NewsReport";
    }
    return "?";
}

std::optional<EntryKind> parse_kind(std::string_view tag) {
    for (auto kind : kAllKinds) {
        if (to_string(kind) == tag) {
            return kind;
        }
    }
    return std::nullopt;
}

bool is_attack_kind(EntryKind kind) {
    return std::find(kAttackKinds.begin(), kAttackKinds.end(), kind) != kAttackKinds.end();
}

bool is_cve_id(std::string_view s) {
    if (!starts_with(s, "CVE-") || s.size() < 13) {
        return false;
    }
    auto rest = s.substr(4);
    if (!all_digits(rest.substr(0, 4)) || rest[4] != '-') {
        return false;
    }
    auto seq = rest.substr(5);
    return seq.size() >= 4 && seq.size() <= 7 && all_digits(seq);
}

std::optional<EntryKind> infer_kind(std::string_view raw_id) {
    if (starts_with(raw_id, "CVE-")) {
        return EntryKind::Vulnerability;
    }
    if (starts_with(raw_id, "CWE-")) {
        return EntryKind::Weakness;
    }
    if (starts_with(raw_id, "CAPEC-")) {
        return EntryKind::AttackPattern;
    }
    if (starts_with(raw_id, "NEWS-")) {
        return EntryKind::NewsReport;
    }
    if (raw_id.size() == 6 && starts_with(raw_id, "TA") && all_digits(raw_id.substr(2))) {
        return EntryKind::Tactic;
    }
    if (is_technique_id(raw_id)) {
        return EntryKind::Technique;
    }
    return std::nullopt;
}

EntryId EntryId::make(EntryKind kind, std::string raw) {
    if (raw.empty()) {
        throw CorpusError("empty entry id");
    }
    if (kind == EntryKind::Vulnerability && !is_cve_id(raw)) {
        throw CorpusError("'" + raw + "' is not a valid CVE identifier");
    }
    if (auto implied = infer_kind(raw); implied && *implied != kind) {
        throw CorpusError("id '" + raw + "' implies kind " + std::string(to_string(*implied)) + ", declared " +
                          std::string(to_string(kind)));
    }
    return EntryId{kind, std::move(raw)};
}

std::ostream& operator<<(std::ostream& os, const EntryId& id) {
    return os << id.raw;
}

NewsReport as_news_report(const CorpusEntry& entry) {
    if (entry.id.kind != EntryKind::NewsReport) {
        throw PreconditionError("entry " + entry.id.raw + " is not a news report");
    }
    return NewsReport{entry.id, entry.raw_text, entry.mentioned_cves};
}

void Corpus::add(CorpusEntry entry) {
    if (by_raw_.count(entry.id.raw) != 0) {
        throw CorpusError("duplicate entry id '" + entry.id.raw + "'");
    }
    by_raw_.emplace(entry.id.raw, entry.id);
    auto id = entry.id;
    entries_.emplace(std::move(id), std::move(entry));
}

const CorpusEntry* Corpus::find(const EntryId& id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
}

const CorpusEntry* Corpus::find_raw(std::string_view raw_id) const {
    auto it = by_raw_.find(raw_id);
    return it == by_raw_.end() ? nullptr : find(it->second);
}

const CorpusEntry& Corpus::at(const EntryId& id) const {
    if (const auto* entry = find(id)) {
        return *entry;
    }
    throw LookupError("unknown entry '" + id.raw + "'");
}

std::size_t Corpus::count(EntryKind kind) const {
    return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(),
                                                  [kind](const auto& kv) { return kv.first.kind == kind; }));
}

std::map<EntryKind, std::size_t> Corpus::counts() const {
    std::map<EntryKind, std::size_t> out;
    for (auto kind : kAllKinds) {
        out[kind] = 0;
    }
    for (const auto& [id, entry] : entries_) {
        ++out[id.kind];
    }
    return out;
}

std::vector<EntryId> Corpus::ids_of_kind(EntryKind kind) const {
    std::vector<EntryId> out;
    for (const auto& [id, entry] : entries_) {
        if (id.kind == kind) {
            out.push_back(id);
        }
    }
    return out;
}

std::string sanitize_utf8(std::string_view text) {
    static constexpr std::string_view kReplacement = "\xEF\xBF\xBD";
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        auto c = static_cast<unsigned char>(text[i]);
        std::size_t len = 0;
        std::uint32_t cp = 0;
        if (c < 0x80) {
            out.push_back(static_cast<char>(c));
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            len = 2;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
            cp = c & 0x07;
        }
        bool ok = len != 0 && i + len <= text.size();
        for (std::size_t j = 1; ok && j < len; ++j) {
            auto cc = static_cast<unsigned char>(text[i + j]);
            if ((cc & 0xC0) != 0x80) {
                ok = false;
            } else {
                cp = (cp << 6) | (cc & 0x3F);
            }
        }
        if (ok) {
            // overlong encodings, surrogates and out-of-range code points
            static constexpr std::uint32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
            ok = cp >= kMin[len] && cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF);
        }
        if (ok) {
            out.append(text.substr(i, len));
            i += len;
        } else {
            out.append(kReplacement);
            ++i;
        }
    }
    return out;
}

std::vector<EntryId> extract_cve_ids(std::string_view text) {
    static const std::regex pattern("[Cc][Vv][Ee]-([0-9]{4})-([0-9]{4,7})(?![0-9])");
    std::vector<EntryId> out;
    std::unordered_set<std::string> seen;
    const std::string haystack(text);
    for (auto it = std::sregex_iterator(haystack.begin(), haystack.end(), pattern); it != std::sregex_iterator();
         ++it) {
        auto pos = static_cast<std::size_t>(it->position(0));
        if (pos > 0 && std::isalnum(static_cast<unsigned char>(haystack[pos - 1])) != 0) {
            continue;
        }
        std::string id = "CVE-" + (*it)[1].str() + "-" + (*it)[2].str();
        if (seen.insert(id).second) {
            out.push_back(EntryId{EntryKind::Vulnerability, std::move(id)});
        }
    }
    return out;
}

namespace {

struct PendingRecord {
    std::size_t line = 0;
    EntryKind kind{};
    std::string id;
    std::string title;
    std::string text;
    std::string clean;
    std::vector<std::string> links;
};

std::string string_field(const json& obj, const char* name, bool required) {
    auto it = obj.find(name);
    if (it == obj.end() || it->is_null()) {
        if (required) {
            throw CorpusError(std::string("missing field '") + name + "'");
        }
        return {};
    }
    if (!it->is_string()) {
        throw CorpusError(std::string("field '") + name + "' must be a string");
    }
    return it->get<std::string>();
}

}  // namespace

ParseResult parse_corpus(std::istream& in) {
    ParseResult result;
    std::vector<PendingRecord> pending;
    std::map<std::string, std::size_t> first_line;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        PendingRecord rec;
        rec.line = line_no;
        try {
            auto obj = json::parse(sanitize_utf8(line));
            if (!obj.is_object()) {
                throw CorpusError("record is not a JSON object");
            }
            if (obj.contains("_meta")) {
                continue;
            }
            auto tag = string_field(obj, "kind", true);
            auto kind = parse_kind(tag);
            if (!kind) {
                throw CorpusError("unknown kind '" + tag + "'");
            }
            rec.kind = *kind;
            rec.id = EntryId::make(rec.kind, string_field(obj, "id", true)).raw;
            rec.title = string_field(obj, "title", false);
            rec.text = string_field(obj, "text", false);
            rec.clean = string_field(obj, "clean", false);
            if (auto links = obj.find("links"); links != obj.end() && !links->is_null()) {
                if (!links->is_array()) {
                    throw CorpusError("field 'links' must be an array");
                }
                for (const auto& l : *links) {
                    if (!l.is_string()) {
                        throw CorpusError("link targets must be strings");
                    }
                    rec.links.push_back(l.get<std::string>());
                }
            }
        } catch (const json::exception& e) {
            result.issues.push_back({line_no, std::string("malformed JSON: ") + e.what()});
            continue;
        } catch (const CorpusError& e) {
            result.issues.push_back({line_no, e.what()});
            continue;
        }
        if (auto [it, inserted] = first_line.emplace(rec.id, line_no); !inserted) {
            throw CorpusError("duplicate entry id '" + rec.id + "' on lines " + std::to_string(it->second) +
                              " and " + std::to_string(line_no));
        }
        pending.push_back(std::move(rec));
    }

    std::map<std::string, EntryKind> declared;
    for (const auto& rec : pending) {
        declared.emplace(rec.id, rec.kind);
    }

    for (auto& rec : pending) {
        CorpusEntry entry;
        entry.id = EntryId{rec.kind, rec.id};
        entry.title = std::move(rec.title);
        entry.raw_text = std::move(rec.text);
        entry.clean_text = std::move(rec.clean);
        std::set<std::string> seen;
        for (auto& target : rec.links) {
            if (target == rec.id) {
                result.issues.push_back({rec.line, "self link on '" + rec.id + "' dropped"});
                continue;
            }
            if (!seen.insert(target).second) {
                continue;
            }
            std::optional<EntryKind> kind;
            if (auto it = declared.find(target); it != declared.end()) {
                kind = it->second;
            } else {
                kind = infer_kind(target);
            }
            if (!kind) {
                result.issues.push_back({rec.line, "cannot determine kind of link target '" + target + "'"});
                continue;
            }
            try {
                entry.explicit_links.push_back(EntryId::make(*kind, target));
            } catch (const CorpusError& e) {
                result.issues.push_back({rec.line, e.what()});
            }
        }
        if (entry.id.kind == EntryKind::NewsReport) {
            entry.mentioned_cves = extract_cve_ids(entry.raw_text);
        }
        result.corpus.add(std::move(entry));
    }
    return result;
}

ParseResult parse_corpus_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CorpusError("cannot open corpus file '" + path + "'");
    }
    return parse_corpus(in);
}

void serialize_corpus(const Corpus& corpus, std::ostream& out, const std::string& meta_json) {
    if (!meta_json.empty()) {
        out << json{{"_meta", json::parse(meta_json)}}.dump() << '\n';
    }
    for (const auto& [id, entry] : corpus.entries()) {
        json obj;
        obj["kind"] = to_string(id.kind);
        obj["id"] = id.raw;
        obj["title"] = entry.title;
        obj["text"] = entry.raw_text;
        auto links = json::array();
        for (const auto& l : entry.explicit_links) {
            links.push_back(l.raw);
        }
        obj["links"] = std::move(links);
        if (!entry.clean_text.empty()) {
            obj["clean"] = entry.clean_text;
        }
        out << obj.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    }
}

}  // namespace vulnlink
