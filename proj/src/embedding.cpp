#include "vulnlink/embedding.hpp"

#include "vulnlink/error.hpp"

#include "json.hpp"
#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>

namespace vulnlink {

namespace {

constexpr std::string_view kMagic = "VLVSTOR1";

std::vector<std::string_view> whitespace_tokens(std::string_view text) {
    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) {
            ++i;
        }
        auto start = i;
        while (i < text.size() && !is_space(text[i])) {
            ++i;
        }
        if (i > start) {
            tokens.push_back(text.substr(start, i - start));
        }
    }
    return tokens;
}

std::string truncate_tokens(const std::string& text, std::size_t max_tokens, bool& truncated) {
    auto tokens = whitespace_tokens(text);
    truncated = tokens.size() > max_tokens;
    if (!truncated) {
        return text;
    }
    std::string out;
    for (std::size_t i = 0; i < max_tokens; ++i) {
        if (i != 0) {
            out.push_back(' ');
        }
        out.append(tokens[i]);
    }
    return out;
}

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    void raw(std::string_view s) { buf_.append(s); }
    std::string& buffer() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
        }
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes_[pos_++])) << (8 * i);
        }
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str() {
        auto len = u32();
        need(len);
        std::string s(bytes_.substr(pos_, len));
        pos_ += len;
        return s;
    }
    std::string_view raw(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw StoreError("vector store truncated");
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view a, std::string_view b) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(a.data()), static_cast<uInt>(a.size()));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(b.data()), static_cast<uInt>(b.size()));
    return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

double l2_norm(std::span<const float> values) {
    double sum = 0.0;
    for (float v : values) {
        sum += static_cast<double>(v) * static_cast<double>(v);
    }
    return std::sqrt(sum);
}

EmbeddingVector normalized(EmbeddingVector v) {
    double norm = l2_norm(v.values);
    if (norm == 0.0) {
        throw EmbeddingError("cannot normalize a zero vector");
    }
    for (auto& x : v.values) {
        x = static_cast<float>(static_cast<double>(x) / norm);
    }
    return v;
}

EmbeddingVector test_embed(std::string_view text, std::size_t dim) {
    if (dim < 2) {
        throw PreconditionError("test embedding dimension must be at least 2");
    }
    auto tokens = whitespace_tokens(text);
    if (tokens.empty()) {
        throw EmbeddingError("cannot embed text with zero tokens");
    }
    std::vector<double> acc(dim, 0.0);
    for (auto token : tokens) {
        acc[fnv1a64(token) % dim] += 1.0;
    }
    double norm = 0.0;
    for (double x : acc) {
        norm += x * x;
    }
    norm = std::sqrt(norm);
    EmbeddingVector out;
    out.values.reserve(dim);
    for (double x : acc) {
        out.values.push_back(static_cast<float>(x / norm));
    }
    return out;
}

TestProvider::TestProvider(std::size_t dim, std::size_t max_tokens) : dim_(dim), max_tokens_(max_tokens) {
    if (dim < 2) {
        throw PreconditionError("test embedding dimension must be at least 2");
    }
}

std::string TestProvider::name() const {
    return "test:" + std::to_string(dim_);
}

std::vector<EmbeddingVector> TestProvider::embed(std::span<const std::string> texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        out.push_back(test_embed(t, dim_));
    }
    return out;
}

std::vector<EmbeddingVector> embed_batch(EmbeddingProvider& provider, std::span<const std::string> texts) {
    std::vector<std::string> prepared;
    prepared.reserve(texts.size());
    for (const auto& t : texts) {
        bool truncated = false;
        prepared.push_back(truncate_tokens(t, provider.max_tokens(), truncated));
        if (truncated) {
            std::clog << "warning: text truncated to " << provider.max_tokens() << " tokens for provider "
                      << provider.name() << '\n';
        }
    }
    auto vectors = provider.embed(prepared);
    if (vectors.size() != texts.size()) {
        throw EmbeddingError("provider returned " + std::to_string(vectors.size()) + " vectors for " +
                             std::to_string(texts.size()) + " texts");
    }
    for (const auto& v : vectors) {
        if (v.dim() != provider.dim()) {
            throw EmbeddingError("provider returned dimension " + std::to_string(v.dim()) + ", expected " +
                                 std::to_string(provider.dim()));
        }
        for (float x : v.values) {
            if (!std::isfinite(x)) {
                throw EmbeddingError("provider returned a non-finite component");
            }
        }
    }
    return vectors;
}

std::unique_ptr<EmbeddingProvider> make_provider(const std::string& spec) {
    auto fail = [&]() -> std::unique_ptr<EmbeddingProvider> {
        throw PreconditionError("bad provider spec '" + spec + "' (expected test:<dim> or remote:<dim>@<url>)");
    };
    auto parse_size = [&](const std::string& s) -> std::size_t {
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(s, &used);
        } catch (const std::exception&) {
            fail();
        }
        if (used != s.size()) {
            fail();
        }
        return static_cast<std::size_t>(v);
    };
    if (spec.rfind("test:", 0) == 0) {
        auto rest = spec.substr(5);
        auto colon = rest.find(':');
        if (colon == std::string::npos) {
            return std::make_unique<TestProvider>(parse_size(rest));
        }
        return std::make_unique<TestProvider>(parse_size(rest.substr(0, colon)), parse_size(rest.substr(colon + 1)));
    }
    if (spec.rfind("remote:", 0) == 0) {
        auto rest = spec.substr(7);
        auto at = rest.find('@');
        if (at == std::string::npos) {
            return fail();
        }
        return std::make_unique<RemoteProvider>(rest.substr(at + 1), parse_size(rest.substr(0, at)));
    }
    return fail();
}

EmbeddingStore::EmbeddingStore(std::string provider_name, std::size_t dim, bool normalized)
    : provider_name_(std::move(provider_name)), dim_(dim), normalized_(normalized) {}

void EmbeddingStore::put(const EntryId& id, EmbeddingVector v) {
    if (v.dim() != dim_) {
        throw StoreError("vector for '" + id.raw + "' has dimension " + std::to_string(v.dim()) + ", store has " +
                         std::to_string(dim_));
    }
    if (normalized_) {
        v = normalized(std::move(v));
    }
    vectors_[id] = std::move(v);
}

const EmbeddingVector* EmbeddingStore::find(const EntryId& id) const {
    auto it = vectors_.find(id);
    return it == vectors_.end() ? nullptr : &it->second;
}

const EmbeddingVector& EmbeddingStore::at(const EntryId& id) const {
    if (const auto* v = find(id)) {
        return *v;
    }
    throw LookupError("no vector stored for '" + id.raw + "'");
}

std::size_t EmbeddingStore::count(EntryKind kind) const {
    std::size_t n = 0;
    for (const auto& [id, v] : vectors_) {
        n += id.kind == kind ? 1 : 0;
    }
    return n;
}

void EmbeddingStore::merge(const EmbeddingStore& other) {
    if (other.dim_ != dim_) {
        throw StoreError("cannot merge stores of dimension " + std::to_string(dim_) + " and " +
                         std::to_string(other.dim_));
    }
    if (other.provider_name_ != provider_name_ || other.normalized_ != normalized_) {
        throw StoreError("cannot merge stores from provider '" + provider_name_ + "' and '" + other.provider_name_ +
                         "'");
    }
    for (const auto& [id, v] : other.vectors_) {
        vectors_[id] = v;
    }
}

std::string encode_store(const EmbeddingStore& store) {
    Writer head;
    head.raw(kMagic);
    head.str(store.provider_name());
    head.str(store.metadata());
    head.u32(static_cast<std::uint32_t>(store.dim()));
    head.u8(store.is_normalized() ? 1 : 0);
    head.u64(store.size());

    Writer body;
    for (const auto& [id, v] : store.vectors()) {
        body.u8(static_cast<std::uint8_t>(id.kind));
        body.str(id.raw);
    }
    for (const auto& [id, v] : store.vectors()) {
        for (float x : v.values) {
            body.f32(x);
        }
    }
    auto crc = crc_of(head.buffer(), body.buffer());
    head.u32(crc);
    head.raw(body.buffer());
    return std::move(head.buffer());
}

EmbeddingStore decode_store(std::string_view bytes) {
    Reader r(bytes);
    if (r.raw(kMagic.size()) != kMagic) {
        throw StoreError("not a vector store (bad magic)");
    }
    auto provider = r.str();
    auto meta = r.str();
    auto dim = r.u32();
    auto norm = r.u8();
    auto count = r.u64();
    auto head_end = r.pos();
    auto crc = r.u32();
    if (crc != crc_of(bytes.substr(0, head_end), bytes.substr(r.pos()))) {
        throw StoreError("vector store checksum mismatch");
    }
    if (norm > 1) {
        throw StoreError("vector store has an invalid normalization flag");
    }

    EmbeddingStore store(provider, dim, norm == 1);
    store.set_metadata(meta);
    std::vector<EntryId> ids;
    ids.reserve(static_cast<std::size_t>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
        auto kind = r.u8();
        if (kind >= kAllKinds.size()) {
            throw StoreError("vector store has an invalid entry kind");
        }
        ids.push_back(EntryId{static_cast<EntryKind>(kind), r.str()});
    }
    for (const auto& id : ids) {
        EmbeddingVector v;
        v.values.resize(dim);
        for (auto& x : v.values) {
            x = r.f32();
        }
        // stored rows were normalized before saving; keep their exact bits
        store.vectors_[id] = std::move(v);
    }
    if (!r.done()) {
        throw StoreError("trailing bytes after vector store");
    }
    return store;
}

void save_store(const EmbeddingStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw StoreError("cannot write vector store '" + path + "'");
    }
    auto bytes = encode_store(store);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw StoreError("failed writing vector store '" + path + "'");
    }
}

EmbeddingStore load_store(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw StoreError("cannot open vector store '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_store(ss.str());
}

}  // namespace vulnlink
