#include "vulnlink/error.hpp"
#include "vulnlink/news.hpp"

#include "json.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace vulnlink;

namespace {

constexpr std::size_t kDim = 64;

EntryId cve(int n) {
    return EntryId::cve("CVE-2021-" + std::to_string(1000 + n));
}

EntryId news(int n) {
    return EntryId::make(EntryKind::NewsReport, "NEWS-" + std::to_string(1000 + n));
}

Ranking scores(std::initializer_list<double> s) {
    Ranking r;
    int i = 0;
    for (double x : s) {
        r.push_back({cve(i++), x});
    }
    sort_ranking(r);
    return r;
}

const std::vector<std::string> kWords = {"remote", "code",    "execution", "buffer",  "overflow", "kernel",
                                         "driver", "session", "cookie",    "steal",   "plugin",   "sql",
                                         "inject", "path",    "search",    "library", "token",    "phishing"};

std::string random_words(std::mt19937_64& rng, std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        out += (i ? " " : "") + kWords[rng() % kWords.size()];
    }
    return out;
}

// A corpus of CVEs with test embeddings in a matching store.
struct Fixture {
    Corpus corpus;
    EmbeddingStore store{"test:64", kDim};
    TestProvider provider{kDim};

    Fixture(std::mt19937_64& rng, int n_cves) {
        for (int i = 0; i < n_cves; ++i) {
            auto text = random_words(rng, 3 + rng() % 6);
            corpus.add({cve(i), "", text, text, {}, {}});
            store.put(cve(i), test_embed(text, kDim));
        }
    }

    NewsReport report(int n, const std::string& body, std::vector<EntryId> mentions) {
        return NewsReport{news(n), body, std::move(mentions)};
    }
};

}  // namespace

TEST(M2, KeepsScoresAtOrAboveThreshold) {
    auto preds = predict_set(news(0), scores({0.70, 0.55}), 0.0, 20, ThresholdMode::Inclusive);
    auto v = m2_threshold(preds, 58);
    ASSERT_EQ(v.kept.size(), 1u);
    EXPECT_DOUBLE_EQ(v.kept[0].score, 0.70);
    ASSERT_EQ(v.dropped.size(), 1u);
    EXPECT_DOUBLE_EQ(v.dropped[0].score, 0.55);
    // Exactly on the threshold is kept by default.
    EXPECT_EQ(m2_threshold(predict_set(news(0), scores({0.58}), 0.0, 20, ThresholdMode::Inclusive), 58).kept.size(),
              1u);
}

TEST(M2, KeptShrinksAsThresholdRises) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 500; ++t) {
        Ranking r;
        for (int i = 0; i < 20; ++i) {
            r.push_back({cve(i), u(rng)});
        }
        sort_ranking(r);
        auto preds = predict_set(news(0), r, 0.0, 20, ThresholdMode::Inclusive);
        std::size_t prev = preds.cut.size();
        for (double rho = 0; rho <= 100; rho += 5) {
            auto v = m2_threshold(preds, rho);
            ASSERT_LE(v.kept.size(), prev);
            ASSERT_EQ(v.kept.size() + v.dropped.size(), preds.cut.size());
            prev = v.kept.size();
        }
    }
}

TEST(PredictFromNews, TopKOverSmallStore) {
    std::mt19937_64 rng(32);
    Fixture f(rng, 5);
    auto preds = predict_from_news(f.report(0, "remote code execution in kernel driver", {}), f.provider, f.store, 20);
    EXPECT_EQ(preds.cut.size(), 5u);
    EXPECT_EQ(preds.ranked.size(), 5u);
}

TEST(PredictFromNews, Errors) {
    std::mt19937_64 rng(33);
    Fixture f(rng, 3);
    EXPECT_THROW(predict_from_news(f.report(0, "<p></p> (Citation: x)", {}), f.provider, f.store), PreconditionError);
    EmbeddingStore empty("test:64", kDim);
    EXPECT_THROW(predict_from_news(f.report(0, "kernel driver", {}), f.provider, empty), SimilarityError);
}

TEST(M3M4, NoMentionMeansInapplicable) {
    std::mt19937_64 rng(34);
    Fixture f(rng, 6);
    auto r = f.report(0, "phishing token steal", {});
    auto preds = predict_from_news(r, f.provider, f.store, 4);
    EXPECT_FALSE(m3_first_cve(preds, r, f.corpus, f.provider, f.store).has_value());
    EXPECT_FALSE(m4_all_cves(preds, r, f.corpus, f.provider, f.store).has_value());
    EXPECT_EQ(match_mentions(preds, r), MatchCategory::NoCveIdInReport);
}

TEST(M3M4, UnknownMentionIsLookupError) {
    std::mt19937_64 rng(35);
    Fixture f(rng, 6);
    auto r = f.report(0, "kernel driver CVE-2030-0001", {EntryId::cve("CVE-2030-0001")});
    auto preds = predict_from_news(r, f.provider, f.store, 4);
    EXPECT_THROW(m3_first_cve(preds, r, f.corpus, f.provider, f.store), LookupError);
}

TEST(M3M4, AgreeWhenExactlyOneCveIsMentioned) {
    std::mt19937_64 rng(36);
    for (int t = 0; t < 100; ++t) {
        Fixture f(rng, 12);
        auto mentioned = cve(static_cast<int>(rng() % 12));
        auto r = f.report(t, random_words(rng, 6) + " " + mentioned.raw, {mentioned});
        auto preds = predict_from_news(r, f.provider, f.store, 1 + rng() % 12);
        NewsOracleConfig config;
        config.rho = static_cast<double>(rng() % 80);
        auto m3 = m3_first_cve(preds, r, f.corpus, f.provider, f.store, config);
        auto m4 = m4_all_cves(preds, r, f.corpus, f.provider, f.store, config);
        ASSERT_TRUE(m3 && m4);
        ASSERT_EQ(m3->kept, m4->kept);
        ASSERT_EQ(m3->dropped, m4->dropped);
        ASSERT_EQ(m3->reference, m4->reference);
    }
}

TEST(M3M4, PartitionTheCandidates) {
    std::mt19937_64 rng(37);
    for (int t = 0; t < 50; ++t) {
        Fixture f(rng, 15);
        std::vector<EntryId> mentions = {cve(static_cast<int>(rng() % 15)), cve(static_cast<int>(rng() % 15))};
        if (mentions[0] == mentions[1]) {
            mentions.pop_back();
        }
        auto r = f.report(t, random_words(rng, 8), mentions);
        auto preds = predict_from_news(r, f.provider, f.store, 6);
        for (bool full : {false, true}) {
            NewsOracleConfig config;
            config.rho = 30;
            config.m3_full_store = full;
            auto m3 = m3_first_cve(preds, r, f.corpus, f.provider, f.store, config);
            ASSERT_EQ(m3->kept.size() + m3->dropped.size(), full ? 15u : 6u);
            EXPECT_EQ(*m3->reference, mentions[0].raw);
        }
        auto m4 = m4_all_cves(preds, r, f.corpus, f.provider, f.store);
        ASSERT_EQ(m4->kept.size() + m4->dropped.size(), 6u);
        if (mentions.size() == 2) {
            EXPECT_EQ(*m4->reference, mentions[0].raw + "+" + mentions[1].raw);
        }
    }
}

TEST(M3, MentionedCveScoresOneAgainstItself) {
    std::mt19937_64 rng(38);
    Fixture f(rng, 8);
    auto r = f.report(0, f.corpus.at(cve(3)).raw_text + " see CVE-2021-1003", {cve(3)});
    auto preds = predict_from_news(r, f.provider, f.store, 8);
    auto m3 = m3_first_cve(preds, r, f.corpus, f.provider, f.store);
    auto it = std::find_if(m3->kept.begin(), m3->kept.end(), [](const RankedCve& c) { return c.cve == cve(3); });
    ASSERT_NE(it, m3->kept.end());
    EXPECT_NEAR(it->score, 1.0, 1e-6);
    EXPECT_EQ(match_mentions(preds, r), MatchCategory::MatchingCveId);
}

TEST(MatchMentions, NoMatchWhenMentionOutsideTopK) {
    auto preds = predict_set(news(0), scores({0.9, 0.8, 0.1}), 0.0, 2, ThresholdMode::Inclusive);
    NewsReport r{news(0), "x", {cve(2)}};
    EXPECT_EQ(match_mentions(preds, r), MatchCategory::NoMatchingCveId);
}

TEST(EvaluateNews, TalliesAndCategories) {
    std::mt19937_64 rng(39);
    Fixture f(rng, 10);
    std::vector<std::pair<NewsReport, PredictionSet>> items;
    std::vector<NewsReport> reports = {f.report(0, "kernel driver overflow", {cve(1)}),
                                       f.report(1, "session cookie steal", {}),
                                       f.report(2, "sql inject plugin", {cve(2), cve(4)})};
    for (const auto& r : reports) {
        items.emplace_back(r, predict_from_news(r, f.provider, f.store, 5));
    }
    ManualVerdicts manual;
    manual[{news(0), items[0].second.cut[0].cve}] = true;
    manual[{news(0), items[0].second.cut[1].cve}] = false;
    auto eval = evaluate_news(items, f.corpus, f.provider, f.store, {}, &manual);
    ASSERT_EQ(eval.reports.size(), 3u);
    EXPECT_EQ(eval.methods.at(NewsMethod::M2).total, 15u);
    EXPECT_EQ(eval.methods.at(NewsMethod::M3).inapplicable, 1u);
    EXPECT_EQ(eval.methods.at(NewsMethod::M3).total, 10u);
    const auto& m1 = eval.methods.at(NewsMethod::M1);
    EXPECT_EQ(m1.relevant, 1u);
    EXPECT_EQ(m1.not_relevant, 1u);
    EXPECT_EQ(m1.unreviewed, 13u);
    std::size_t categorized = 0;
    for (const auto& [c, n] : eval.categories) {
        categorized += n;
    }
    EXPECT_EQ(categorized, 3u);
    EXPECT_EQ(eval.categories.at(MatchCategory::NoCveIdInReport), 1u);
    for (const auto& [m, t] : eval.methods) {
        EXPECT_EQ(t.relevant + t.not_relevant + t.unreviewed, t.total) << to_string(m);
    }

    auto doc = nlohmann::json::parse(news_evaluation_json(eval, {}));
    EXPECT_EQ(doc["match_summary"]["total"], 3);
    EXPECT_EQ(doc["methods"].size(), 4u);
}
