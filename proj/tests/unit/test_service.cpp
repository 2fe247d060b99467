#include "vulnlink/service.hpp"

#include "httplib.h"
#include "json.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <future>
#include <thread>

using namespace vulnlink;
using nlohmann::json;

namespace {

constexpr std::size_t kDim = 64;

EntryId tq(const std::string& raw) {
    return EntryId::make(EntryKind::Technique, raw);
}

// One technique predicted against three CVEs; CVE-2021-0001 is the linked one.
ServiceData make_data() {
    ServiceData d;
    d.corpus.add({tq("T1539"), "Steal Web Session Cookie", "steal web session cookie", "steal web session cookie",
                  {},
                  {}});
    d.corpus.add({tq("T1000"), "Unembedded", "kernel driver load", "", {}, {}});
    const std::vector<std::pair<std::string, std::string>> cves = {
        {"CVE-2021-0001", "session cookie theft in web login"},
        {"CVE-2021-0002", "web session cookie steal via xss"},
        {"CVE-2021-0003", "buffer overflow in kernel driver"}};
    d.store = EmbeddingStore("test:64", kDim);
    for (const auto& [id, text] : cves) {
        d.corpus.add({EntryId::cve(id), "", text, text, {}, {}});
        d.store.put(EntryId::cve(id), test_embed(text, kDim));
    }
    d.store.put(tq("T1539"), test_embed("steal web session cookie", kDim));
    d.provider = std::make_unique<TestProvider>(kDim);
    d.truth.links[tq("T1539")] = {EntryId::cve("CVE-2021-0001")};
    d.truth.links[tq("T1000")] = {};
    auto ranking = rank_cves(d.store.at(tq("T1539")), d.store);
    d.predictions.push_back(predict_set(tq("T1539"), ranking, 10, 20));
    d.calibration_json = R"({"auc":0.8,"rho_star":61})";
    return d;
}

ServiceRequest get(const std::string& path, std::map<std::string, std::string> query = {}) {
    return {"GET", path, std::move(query), {}, ""};
}

ServiceRequest post(const std::string& path, const json& body, std::map<std::string, std::string> headers = {}) {
    return {"POST", path, {}, std::move(headers), body.dump()};
}

json body_of(const ServiceResponse& r) {
    return json::parse(r.body);
}

}  // namespace

TEST(Service, HealthAndUnknownRoute) {
    ServiceApi api(make_data(), {});
    EXPECT_EQ(api.handle(get("/health")).status, 200);
    auto r = api.handle(get("/nope"));
    EXPECT_EQ(r.status, 404);
    EXPECT_EQ(body_of(r)["error"]["code"], "not_found");
}

TEST(Service, PredictByEntryUsesStoredVectorAndTruth) {
    ServiceApi api(make_data(), {});
    auto r = api.handle(post("/predict", {{"entry_id", "T1539"}, {"k", 2}, {"rho", 10}}));
    ASSERT_EQ(r.status, 200);
    auto b = body_of(r);
    EXPECT_EQ(b["entry_id"], "T1539");
    ASSERT_EQ(b["items"].size(), 2u);
    double prev = 2.0;
    for (const auto& item : b["items"]) {
        EXPECT_LE(item["score"].get<double>(), prev);
        prev = item["score"].get<double>();
        EXPECT_TRUE(item["in_truth"].is_boolean());
        if (item["cve"] == "CVE-2021-0001") {
            EXPECT_TRUE(item["in_truth"].get<bool>());
            EXPECT_TRUE(item["state"].is_null());
        } else {
            EXPECT_EQ(item["state"], "open");
        }
    }
}

TEST(Service, PredictByEntryEmbedsWhenNotStored) {
    ServiceApi api(make_data(), {});
    auto b = body_of(api.handle(post("/predict", {{"entry_id", "T1000"}})));
    ASSERT_EQ(b["items"].size(), 3u);
    EXPECT_EQ(b["items"][0]["cve"], "CVE-2021-0003");
    EXPECT_FALSE(b["items"][0]["in_truth"].get<bool>());
}

TEST(Service, PredictByTextMatchesLibraryRanking) {
    auto data = make_data();
    auto expected = rank_cves(test_embed("steal web session cookie", kDim), data.store);
    ServiceApi api(std::move(data), {});
    auto b = body_of(api.handle(post("/predict", {{"text", "<b>steal</b> web session cookie"}, {"rho", 58}})));
    ASSERT_EQ(b["items"].size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_EQ(b["items"][i]["cve"], expected[i].cve.raw);
        EXPECT_NEAR(b["items"][i]["score"].get<double>(), expected[i].score, 1e-12);
        EXPECT_EQ(b["items"][i]["kept"].get<bool>(), expected[i].score * 100.0 > 58.0);
        EXPECT_TRUE(b["items"][i]["in_truth"].is_null());
    }
}

TEST(Service, PredictErrors) {
    ServiceApi api(make_data(), {});
    EXPECT_EQ(api.handle(post("/predict", json::object())).status, 400);
    EXPECT_EQ(api.handle(post("/predict", {{"text", "x"}, {"k", 0}})).status, 400);
    EXPECT_EQ(api.handle(post("/predict", {{"text", "x"}, {"rho", 101}})).status, 400);
    EXPECT_EQ(api.handle(post("/predict", {{"text", "<p></p>"}})).status, 400);
    EXPECT_EQ(api.handle(post("/predict", {{"entry_id", "T9999"}})).status, 404);
    EXPECT_EQ(api.handle({"POST", "/predict", {}, {}, "not json"}).status, 400);
}

TEST(Service, Calibration) {
    ServiceConfig config;
    config.rho = 61;
    ServiceApi api(make_data(), config);
    auto b = body_of(api.handle(get("/calibration")));
    EXPECT_EQ(b["rho"], 61.0);
    EXPECT_EQ(b["k"], 20);
    EXPECT_EQ(b["calibration"]["rho_star"], 61);
}

TEST(Service, ReviewFlowThroughQueueVerdictAndEnrichment) {
    ServiceApi api(make_data(), {});
    auto queue = body_of(api.handle(get("/queue", {{"attack", "T1539"}})));
    ASSERT_EQ(queue["pending"].size(), 2u);
    auto top = queue["pending"][0];
    EXPECT_GE(top["score"].get<double>(), queue["pending"][1]["score"].get<double>());

    json vote = {{"attack", "T1539"}, {"cve", top["cve"]}, {"verdict", "Linked"}, {"round", 1}, {"reviewer", "alice"}};
    auto first = api.handle(post("/verdict", vote));
    ASSERT_EQ(first.status, 200) << first.body;
    EXPECT_EQ(body_of(first)["state"], "open");
    auto dup = body_of(api.handle(post("/verdict", vote)));
    EXPECT_TRUE(dup["duplicate"].get<bool>());
    vote["reviewer"] = "bob";
    EXPECT_EQ(body_of(api.handle(post("/verdict", vote)))["state"], "enriched");

    EXPECT_EQ(body_of(api.handle(get("/queue")))["pending"].size(), 1u);
    auto e = api.handle(get("/enrichment"));
    EXPECT_EQ(e.content_type, "application/x-ndjson");
    auto line = json::parse(e.body.substr(0, e.body.find('\n')));
    EXPECT_EQ(line["cve"], top["cve"]);
    EXPECT_EQ(line["reviewers"], json::array({"alice", "bob"}));
}

TEST(Service, VerdictErrors) {
    ServiceApi api(make_data(), {});
    json linked = {{"attack", "T1539"}, {"cve", "CVE-2021-0001"}, {"verdict", "Linked"}, {"round", 1},
                   {"reviewer", "alice"}};
    EXPECT_EQ(api.handle(post("/verdict", linked)).status, 409);
    EXPECT_EQ(api.handle(post("/verdict", {{"cve", "CVE-2021-0002"}})).status, 409);
    EXPECT_EQ(api.handle(post("/verdict", {{"attack", "T4242"}, {"cve", "CVE-2021-0002"}})).status, 404);
    EXPECT_EQ(api.handle(get("/queue", {{"attack", "T4242"}})).status, 404);
}

TEST(Service, ReviewerTokenIsEnforced) {
    ServiceConfig config;
    config.reviewer_token = "s3cret";
    ServiceApi api(make_data(), config);
    json vote = {{"attack", "T1539"}, {"cve", "CVE-2021-0002"}, {"verdict", "Linked"}, {"round", 1},
                 {"reviewer", "alice"}};
    EXPECT_EQ(api.handle(post("/verdict", vote)).status, 401);
    EXPECT_EQ(api.handle(post("/verdict", vote, {{"X-Reviewer-Token", "wrong"}})).status, 401);
    EXPECT_EQ(api.handle(post("/verdict", vote, {{"X-Reviewer-Token", "s3cret"}})).status, 200);
}

TEST(Service, VerdictLogAndSnapshotPersist) {
    auto dir = std::filesystem::temp_directory_path() / "vulnlink_service_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    ServiceConfig config;
    config.verdict_log = (dir / "verdicts.jsonl").string();
    config.snapshot_path = (dir / "snapshot.json").string();
    {
        ServiceApi api(make_data(), config);
        for (const char* who : {"alice", "bob"}) {
            api.handle(post("/verdict", {{"attack", "T1539"},
                                         {"cve", "CVE-2021-0003"},
                                         {"verdict", "NotLinked"},
                                         {"round", 1},
                                         {"reviewer", who}}));
        }
    }
    EXPECT_TRUE(std::filesystem::exists(config.snapshot_path));
    ServiceApi reopened(make_data(), config);
    auto queue = body_of(reopened.handle(get("/queue")));
    ASSERT_EQ(queue["pending"].size(), 1u);
    EXPECT_EQ(queue["pending"][0]["cve"], "CVE-2021-0002");
    std::filesystem::remove_all(dir);
}

TEST(Service, ServesOverHttp) {
    ServiceApi api(make_data(), {});
    std::promise<std::pair<int, std::function<void()>>> ready;
    auto ready_future = ready.get_future();
    std::thread server([&] {
        serve(api, "127.0.0.1", 0, [&](int port, std::function<void()> stop) { ready.set_value({port, stop}); });
    });
    auto [port, stop] = ready_future.get();
    httplib::Client client("127.0.0.1", port);
    client.set_connection_timeout(5);
    auto health = client.Get("/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);
    auto predict = client.Post("/predict", R"({"text":"steal web session cookie","k":1})", "application/json");
    ASSERT_TRUE(predict);
    EXPECT_EQ(predict->status, 200);
    EXPECT_EQ(json::parse(predict->body)["items"].size(), 1u);
    auto queue = client.Get("/queue?attack=T1539");
    ASSERT_TRUE(queue);
    EXPECT_EQ(json::parse(queue->body)["pending"].size(), 2u);
    auto bad = client.Post("/verdict", "{}", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 409);
    stop();
    server.join();
}
