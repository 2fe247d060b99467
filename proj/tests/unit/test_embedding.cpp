#include "vulnlink/embedding.hpp"
#include "vulnlink/error.hpp"
#include "vulnlink/similarity.hpp"

#include "httplib.h"
#include "json.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <thread>

using namespace vulnlink;

namespace {

EmbeddingStore random_store(std::size_t dim, std::size_t n, bool normalize, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    EmbeddingStore store("test:" + std::to_string(dim), dim, normalize);
    for (std::size_t i = 0; i < n; ++i) {
        EmbeddingVector v;
        for (std::size_t d = 0; d < dim; ++d) {
            v.values.push_back(dist(rng));
        }
        auto kind = i % 3 == 0 ? EntryKind::Technique : EntryKind::Vulnerability;
        auto raw = kind == EntryKind::Technique ? "T" + std::to_string(1000 + i) : "CVE-2020-" + std::to_string(10000 + i);
        store.put(EntryId::make(kind, raw), std::move(v));
    }
    store.set_metadata(R"({"config_digest":"abc"})");
    return store;
}

bool bitwise_equal(const EmbeddingStore& a, const EmbeddingStore& b) {
    if (a.vectors().size() != b.vectors().size()) {
        return false;
    }
    auto ia = a.vectors().begin();
    auto ib = b.vectors().begin();
    for (; ia != a.vectors().end(); ++ia, ++ib) {
        if (ia->first != ib->first || ia->second.dim() != ib->second.dim()) {
            return false;
        }
        if (std::memcmp(ia->second.values.data(), ib->second.values.data(), ia->second.dim() * sizeof(float)) != 0) {
            return false;
        }
    }
    return true;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("vulnlink_test_" + name)).string();
}

// Local stand-in for an embedding service: answers with the test embedding,
// optionally echoing a wrong dimension.
class FakeEmbeddingServer {
public:
    explicit FakeEmbeddingServer(std::size_t dim, std::size_t echo_dim) {
        server_.Post("/embed", [=, this](const httplib::Request& req, httplib::Response& res) {
            ++requests_;
            auto body = nlohmann::json::parse(req.body);
            nlohmann::json out = {{"dim", echo_dim}, {"vectors", nlohmann::json::array()}};
            for (const auto& t : body.at("texts")) {
                out["vectors"].push_back(test_embed(t.get<std::string>(), dim).values);
            }
            res.set_content(out.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeEmbeddingServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/embed"; }
    int requests() const { return requests_; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::atomic<int> requests_{0};
    std::thread thread_;
};

}  // namespace

TEST(TestEmbed, KnownCosines) {
    auto a = test_embed("steal session cookie", 64);
    EXPECT_NEAR(cosine(a, test_embed("steal cookie", 64)), 2.0 / std::sqrt(6.0), 1e-7);
    EXPECT_NEAR(cosine(a, test_embed("kernel driver load", 64)), 1.0 / 3.0, 1e-7);
    EXPECT_GT(cosine(a, test_embed("steal cookie", 64)), cosine(a, test_embed("kernel driver load", 64)));
    EXPECT_NEAR(cosine(test_embed("steal cookie", 64), test_embed("steal cookie", 64)), 1.0, 1e-12);
}

TEST(TestEmbed, DeterministicBitwise) {
    auto a = test_embed("Adversaries may steal web session cookies", 384);
    auto b = test_embed("Adversaries may steal web session cookies", 384);
    EXPECT_EQ(std::memcmp(a.values.data(), b.values.data(), 384 * sizeof(float)), 0);
    EXPECT_NEAR(l2_norm(a.values), 1.0, 1e-6);
}

TEST(TestEmbed, Errors) {
    EXPECT_THROW(test_embed("", 8), EmbeddingError);
    EXPECT_THROW(test_embed(" \t ", 8), EmbeddingError);
    EXPECT_THROW(test_embed("x", 1), PreconditionError);
}

TEST(EmbedBatch, ShapeOrderDeterminism) {
    TestProvider p(8);
    std::vector<std::string> one = {"a"};
    auto v = embed_batch(p, one);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].dim(), 8u);

    std::vector<std::string> twice = {"same text", "same text"};
    auto t = embed_batch(p, twice);
    EXPECT_EQ(t[0], t[1]);

    std::vector<std::string> three = {"alpha beta", "gamma", "delta epsilon zeta"};
    auto batch = embed_batch(p, three);
    ASSERT_EQ(batch.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        std::vector<std::string> single = {three[i]};
        EXPECT_EQ(batch[i], embed_batch(p, single)[0]);
    }
}

TEST(EmbedBatch, OverLongTextIsTruncatedNotRejected) {
    TestProvider p(64, 3);
    std::vector<std::string> texts = {"one two three four five"};
    auto v = embed_batch(p, texts);
    EXPECT_EQ(v[0], test_embed("one two three", 64));
}

TEST(MakeProvider, ParsesSpecs) {
    auto p = make_provider("test:384");
    EXPECT_EQ(p->name(), "test:384");
    EXPECT_EQ(p->dim(), 384u);
    EXPECT_EQ(make_provider("test:64:128")->max_tokens(), 128u);
    EXPECT_EQ(make_provider("remote:768@http://localhost:9000/embed")->dim(), 768u);
    EXPECT_THROW(make_provider("sbert:384"), PreconditionError);
    EXPECT_THROW(make_provider("test:abc"), PreconditionError);
    EXPECT_THROW(make_provider("remote:768"), PreconditionError);
}

TEST(EmbeddingStore, PutNormalizesAndChecksDim) {
    EmbeddingStore s("test:3", 3);
    s.put(EntryId::cve("CVE-2020-0001"), {{3.0f, 4.0f, 0.0f}});
    EXPECT_NEAR(l2_norm(s.at(EntryId::cve("CVE-2020-0001")).values), 1.0, 1e-6);
    EXPECT_THROW(s.put(EntryId::cve("CVE-2020-0002"), {{1.0f, 2.0f}}), StoreError);
    EXPECT_THROW(s.at(EntryId::cve("CVE-2020-0003")), LookupError);
}

TEST(EmbeddingStore, NormalizedInvariantOnRandomVectors) {
    auto s = random_store(384, 50, true, 3);
    for (const auto& [id, v] : s.vectors()) {
        EXPECT_NEAR(l2_norm(v.values), 1.0, 1e-6);
    }
}

TEST(EmbeddingStore, RoundTripBitExactAcrossDims) {
    for (std::size_t dim : {384u, 768u, 4096u}) {
        for (bool normalize : {true, false}) {
            auto store = random_store(dim, 20, normalize, dim);
            auto path = temp_path("store_" + std::to_string(dim) + ".vlvs");
            save_store(store, path);
            auto back = load_store(path);
            EXPECT_TRUE(bitwise_equal(store, back)) << dim;
            EXPECT_EQ(back.dim(), dim);
            EXPECT_EQ(back.provider_name(), store.provider_name());
            EXPECT_EQ(back.is_normalized(), normalize);
            EXPECT_EQ(back.metadata(), store.metadata());
            std::filesystem::remove(path);
        }
    }
}

TEST(EmbeddingStore, EmptyRoundTrip) {
    EmbeddingStore s("test:8", 8);
    auto back = decode_store(encode_store(s));
    EXPECT_TRUE(back.empty());
    EXPECT_EQ(back, s);
}

TEST(EmbeddingStore, CorruptionDetected) {
    auto bytes = encode_store(random_store(16, 5, true, 1));
    for (std::size_t pos : {std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
        auto bad = bytes;
        bad[pos] ^= 0x5A;
        EXPECT_THROW(decode_store(bad), StoreError) << pos;
    }
    EXPECT_THROW(decode_store(bytes.substr(0, bytes.size() - 3)), StoreError);
    EXPECT_THROW(decode_store("NOTASTORE"), StoreError);
    EXPECT_THROW(load_store(temp_path("missing.vlvs")), StoreError);
}

TEST(EmbeddingStore, MergeRules) {
    auto a = random_store(384, 4, true, 1);
    auto b = random_store(768, 4, true, 2);
    EXPECT_THROW(a.merge(b), StoreError);
    EmbeddingStore other_provider("remote:384@http://x/", 384);
    EXPECT_THROW(a.merge(other_provider), StoreError);
    EmbeddingStore extra("test:384", 384);
    extra.put(EntryId::cve("CVE-2024-0001"), test_embed("new cve", 384));
    a.merge(extra);
    EXPECT_EQ(a.size(), 5u);
}

TEST(RemoteProvider, MatchesLocalProviderThroughFakeService) {
    FakeEmbeddingServer server(64, 64);
    RemoteProvider remote(server.url(), 64, 384, 2);
    TestProvider local(64);
    std::vector<std::string> texts = {"steal session cookie", "kernel driver load", "buffer overflow", "x y z", "w"};
    auto got = embed_batch(remote, texts);
    auto want = embed_batch(local, texts);
    EXPECT_EQ(got, want);
    EXPECT_EQ(server.requests(), 3);  // batches of two
}

TEST(RemoteProvider, DimensionMismatchIsAnError) {
    FakeEmbeddingServer server(64, 32);
    RemoteProvider remote(server.url(), 64);
    std::vector<std::string> texts = {"a b"};
    EXPECT_THROW(embed_batch(remote, texts), EmbeddingError);
}

TEST(RemoteProvider, WrongVectorLengthIsAnError) {
    FakeEmbeddingServer server(32, 64);  // echoes 64 but sends length-32 vectors
    RemoteProvider remote(server.url(), 64);
    std::vector<std::string> texts = {"a b"};
    EXPECT_THROW(embed_batch(remote, texts), EmbeddingError);
}

TEST(RemoteProvider, UnreachableServiceIsAnError) {
    // Nothing listens on port 1, so the connection is refused at once.
    RemoteProvider remote("http://127.0.0.1:1/embed", 8);
    std::vector<std::string> texts = {"a"};
    EXPECT_THROW(embed_batch(remote, texts), EmbeddingError);
}
