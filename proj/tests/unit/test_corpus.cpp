#include "vulnlink/corpus.hpp"
#include "vulnlink/error.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

using namespace vulnlink;

namespace {

ParseResult parse(const std::string& text) {
    std::istringstream in(text);
    return parse_corpus(in);
}

std::vector<std::string> raws(const std::vector<EntryId>& ids) {
    std::vector<std::string> out;
    for (const auto& id : ids) {
        out.push_back(id.raw);
    }
    return out;
}

const char* kPathHijack =
    R"({"kind":"Technique","id":"T1574.007","title":"t","text":"hijack PATH","links":["CAPEC-38"]}
{"kind":"AttackPattern","id":"CAPEC-38","title":"p","text":"load malicious resource","links":["CWE-427"]}
{"kind":"Weakness","id":"CWE-427","title":"w","text":"uncontrolled search path","links":["CVE-2022-4826"]}
{"kind":"Vulnerability","id":"CVE-2022-4826","title":"","text":"Simple Tooltips plugin before 2.1.4","links":[]}
)";

}  // namespace

TEST(EntryKind, RoundTripsThroughText) {
    for (auto kind : kAllKinds) {
        EXPECT_EQ(parse_kind(to_string(kind)), kind);
    }
    EXPECT_FALSE(parse_kind("Malware").has_value());
}

TEST(EntryKind, InferredFromPrefix) {
    EXPECT_EQ(infer_kind("TA0006"), EntryKind::Tactic);
    EXPECT_EQ(infer_kind("T1574.007"), EntryKind::Technique);
    EXPECT_EQ(infer_kind("T1539"), EntryKind::Technique);
    EXPECT_EQ(infer_kind("CAPEC-38"), EntryKind::AttackPattern);
    EXPECT_EQ(infer_kind("CWE-427"), EntryKind::Weakness);
    EXPECT_EQ(infer_kind("CVE-2022-4826"), EntryKind::Vulnerability);
    EXPECT_EQ(infer_kind("NEWS-0001"), EntryKind::NewsReport);
    EXPECT_FALSE(infer_kind("G0016-T1539").has_value());
}

TEST(EntryId, ValidatesCveGrammar) {
    EXPECT_NO_THROW(EntryId::cve("CVE-2005-1205"));
    EXPECT_NO_THROW(EntryId::cve("CVE-2021-1234567"));
    EXPECT_THROW(EntryId::cve("CVE-2021-123"), CorpusError);
    EXPECT_THROW(EntryId::cve("CVE-2021-12345678"), CorpusError);
    EXPECT_THROW(EntryId::cve("CVE-21-1234"), CorpusError);
    EXPECT_THROW(EntryId::make(EntryKind::Technique, ""), CorpusError);
}

TEST(EntryId, KindMustAgreeWithKnownPrefix) {
    EXPECT_THROW(EntryId::make(EntryKind::Weakness, "CAPEC-38"), CorpusError);
    EXPECT_NO_THROW(EntryId::make(EntryKind::Procedure, "G0016-T1539"));
}

TEST(ParseCorpus, EmptyInputGivesEmptyCorpus) {
    auto r = parse("");
    EXPECT_TRUE(r.corpus.empty());
    for (auto kind : kAllKinds) {
        EXPECT_EQ(r.corpus.count(kind), 0u);
    }
    EXPECT_TRUE(r.issues.empty());
}

TEST(ParseCorpus, PathHijackFourLines) {
    auto r = parse(kPathHijack);
    EXPECT_TRUE(r.issues.empty());
    EXPECT_EQ(r.corpus.size(), 4u);
    EXPECT_EQ(r.corpus.count(EntryKind::Technique), 1u);
    EXPECT_EQ(r.corpus.count(EntryKind::AttackPattern), 1u);
    EXPECT_EQ(r.corpus.count(EntryKind::Weakness), 1u);
    EXPECT_EQ(r.corpus.count(EntryKind::Vulnerability), 1u);
    const auto& t = r.corpus.at(EntryId::make(EntryKind::Technique, "T1574.007"));
    ASSERT_EQ(t.explicit_links.size(), 1u);
    EXPECT_EQ(t.explicit_links[0], EntryId::make(EntryKind::AttackPattern, "CAPEC-38"));
}

TEST(ParseCorpus, DuplicateIdRejectsWholeLoad) {
    std::string text = std::string(kPathHijack) +
                       R"({"kind":"Weakness","id":"CWE-427","title":"again","text":"x","links":[]})" + "\n";
    try {
        parse(text);
        FAIL() << "duplicate accepted";
    } catch (const CorpusError& e) {
        EXPECT_NE(std::string(e.what()).find("CWE-427"), std::string::npos);
    }
}

TEST(ParseCorpus, UnknownKindSkipsLineAndReportsIt) {
    auto r = parse(R"({"kind":"Malware","id":"S0001","title":"","text":"x","links":[]}
{"kind":"Weakness","id":"CWE-79","title":"","text":"xss","links":[]}
not json at all
)");
    EXPECT_EQ(r.corpus.size(), 1u);
    ASSERT_EQ(r.issues.size(), 2u);
    EXPECT_EQ(r.issues[0].line, 1u);
    EXPECT_EQ(r.issues[1].line, 3u);
}

TEST(ParseCorpus, LinksDeduplicatedAndSelfLinkDropped) {
    auto r = parse(
        R"({"kind":"AttackPattern","id":"CAPEC-1","title":"","text":"x","links":["CWE-1","CWE-1","CAPEC-1"]})"
        "\n");
    const auto& e = r.corpus.at(EntryId::make(EntryKind::AttackPattern, "CAPEC-1"));
    EXPECT_EQ(raws(e.explicit_links), std::vector<std::string>{"CWE-1"});
    EXPECT_EQ(r.issues.size(), 1u);
}

TEST(ParseCorpus, LinkKindComesFromDeclaredEntry) {
    auto r = parse(R"({"kind":"Technique","id":"T1539","title":"","text":"x","links":["G0016-T1539"]}
{"kind":"Procedure","id":"G0016-T1539","title":"","text":"y","links":[]}
)");
    const auto& t = r.corpus.at(EntryId::make(EntryKind::Technique, "T1539"));
    ASSERT_EQ(t.explicit_links.size(), 1u);
    EXPECT_EQ(t.explicit_links[0].kind, EntryKind::Procedure);
}

TEST(ParseCorpus, InvalidUtf8IsReplacedNotFatal) {
    std::string text = "{\"kind\":\"Weakness\",\"id\":\"CWE-1\",\"title\":\"\",\"text\":\"bad \xff byte\",\"links\":[]}\n";
    auto r = parse(text);
    ASSERT_EQ(r.corpus.size(), 1u);
    EXPECT_EQ(r.corpus.at(EntryId::make(EntryKind::Weakness, "CWE-1")).raw_text, "bad \xEF\xBF\xBD byte");
}

TEST(ParseCorpus, NewsMentionsDerivedAtLoad) {
    auto r = parse(
        R"({"kind":"NewsReport","id":"NEWS-0001","title":"","text":"uses cve-2021-1002, then CVE-2019-3002 and CVE-2021-1002 again","links":[]})"
        "\n");
    auto report = as_news_report(r.corpus.at(EntryId::make(EntryKind::NewsReport, "NEWS-0001")));
    EXPECT_EQ(raws(report.mentioned_cves), (std::vector<std::string>{"CVE-2021-1002", "CVE-2019-3002"}));
}

TEST(SerializeCorpus, RoundTripIsIdentity) {
    auto original = parse(kPathHijack).corpus;
    original.mutable_entries().begin()->second.clean_text = "cleaned form";
    std::ostringstream out;
    serialize_corpus(original, out, R"({"stage":"test"})");
    std::istringstream in(out.str());
    auto again = parse_corpus(in);
    EXPECT_TRUE(again.issues.empty());
    EXPECT_EQ(again.corpus, original);
}

TEST(ExtractCveIds, Examples) {
    EXPECT_EQ(raws(extract_cve_ids("The Simple Tooltips WordPress plugin before 2.1.4 ... CVE-2022-4826")),
              std::vector<std::string>{"CVE-2022-4826"});
    EXPECT_TRUE(extract_cve_ids("").empty());
    EXPECT_EQ(raws(extract_cve_ids("CVE-2008-1700 and CVE-2020-7218 are explicitly cited")),
              (std::vector<std::string>{"CVE-2008-1700", "CVE-2020-7218"}));
}

TEST(ExtractCveIds, BoundariesAndCase) {
    EXPECT_EQ(raws(extract_cve_ids("see cVe-2021-44228.")), std::vector<std::string>{"CVE-2021-44228"});
    EXPECT_TRUE(extract_cve_ids("CVE-2021-123").empty());
    EXPECT_TRUE(extract_cve_ids("CVE-2021-12345678").empty());
    EXPECT_TRUE(extract_cve_ids("XCVE-2021-1234").empty());
}

TEST(ExtractCveIds, ConcatenationPreservesFirstAppearance) {
    std::mt19937_64 rng(7);
    const std::vector<std::string> pool = {"CVE-2020-1111", "CVE-2021-22222", "CVE-2019-333333", "CVE-2018-4444"};
    for (int trial = 0; trial < 200; ++trial) {
        std::string a;
        std::string b;
        for (int i = 0; i < 4; ++i) {
            a += "x " + pool[rng() % pool.size()] + " ";
            b += "y " + pool[rng() % pool.size()] + " ";
        }
        auto ia = extract_cve_ids(a);
        auto ib = extract_cve_ids(b);
        auto iab = extract_cve_ids(a + b);
        std::set<EntryId> sab(iab.begin(), iab.end());
        for (const auto& id : ia) {
            EXPECT_TRUE(sab.count(id));
        }
        for (const auto& id : ib) {
            EXPECT_TRUE(sab.count(id));
        }
        // ids(a) is a prefix of ids(a + b)
        ASSERT_GE(iab.size(), ia.size());
        EXPECT_TRUE(std::equal(ia.begin(), ia.end(), iab.begin()));
    }
}
