/**
 * @file embedding.hpp
 *
 * @brief Embedding providers and the persistent vector store.
 *
 * Providers turn cleaned texts into fixed-dimension vectors. Real sentence
 * encoders live out of process and are reached through `RemoteProvider`;
 * `TestProvider` is a deterministic bag-of-words double so that the whole
 * pipeline runs without a model runtime.
 */
#pragma once

#include "vulnlink/corpus.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vulnlink {

struct EmbeddingVector {
    std::vector<float> values;

    std::size_t dim() const { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

double l2_norm(std::span<const float> values);

/// Scales to unit length; throws EmbeddingError for a zero vector.
EmbeddingVector normalized(EmbeddingVector v);

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    /// Identifier recorded in vector stores, e.g. "test:64".
    virtual std::string name() const = 0;
    virtual std::size_t dim() const = 0;
    /// Token budget per text; longer inputs are truncated with a warning.
    virtual std::size_t max_tokens() const = 0;

    /// One vector per text, in order. Implementations may throw EmbeddingError.
    virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
};

/// 64-bit FNV-1a over the bytes of `s`.
std::uint64_t fnv1a64(std::string_view s);

/// Hashes each whitespace token (FNV-1a 64) to a basis index, sums the
/// bumps and L2-normalizes. Throws PreconditionError for dim < 2 and
/// EmbeddingError for text without tokens.
EmbeddingVector test_embed(std::string_view text, std::size_t dim);

class TestProvider final : public EmbeddingProvider {
public:
    explicit TestProvider(std::size_t dim, std::size_t max_tokens = 384);

    std::string name() const override;
    std::size_t dim() const override { return dim_; }
    std::size_t max_tokens() const override { return max_tokens_; }
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;

private:
    std::size_t dim_;
    std::size_t max_tokens_;
};

/// HTTP client for an out-of-process encoder.
///
/// Wire contract: `POST <path>` with `{"texts": [...]}`; the response is
/// `{"dim": N, "vectors": [[...], ...]}` with one length-N vector per text.
/// Texts are sent in chunks of at most `batch_size`.
class RemoteProvider final : public EmbeddingProvider {
public:
    RemoteProvider(std::string url, std::size_t dim, std::size_t max_tokens = 384, std::size_t batch_size = 64);

    std::string name() const override;
    std::size_t dim() const override { return dim_; }
    std::size_t max_tokens() const override { return max_tokens_; }
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;

private:
    std::string url_;
    std::string host_;
    std::string path_;
    std::size_t dim_;
    std::size_t max_tokens_;
    std::size_t batch_size_;
};

/// "test:<dim>[:<max_tokens>]" or "remote:<dim>@<url>".
std::unique_ptr<EmbeddingProvider> make_provider(const std::string& spec);

/// Embeds a batch through `provider`, truncating over-long texts and
/// checking count, dimension and finiteness of the answer. Any failure
/// throws EmbeddingError before a single vector is returned.
std::vector<EmbeddingVector> embed_batch(EmbeddingProvider& provider, std::span<const std::string> texts);

class EmbeddingStore {
public:
    EmbeddingStore() = default;
    EmbeddingStore(std::string provider_name, std::size_t dim, bool normalized = true);

    const std::string& provider_name() const { return provider_name_; }
    std::size_t dim() const { return dim_; }
    bool is_normalized() const { return normalized_; }
    const std::string& metadata() const { return metadata_; }
    void set_metadata(std::string meta) { metadata_ = std::move(meta); }

    /// Inserts or replaces; normalizes first when the store is normalized.
    void put(const EntryId& id, EmbeddingVector v);
    const EmbeddingVector* find(const EntryId& id) const;
    const EmbeddingVector& at(const EntryId& id) const;

    const std::map<EntryId, EmbeddingVector>& vectors() const { return vectors_; }
    std::size_t size() const { return vectors_.size(); }
    bool empty() const { return vectors_.empty(); }
    std::size_t count(EntryKind kind) const;

    /// Throws StoreError when dims, provider or normalization differ.
    void merge(const EmbeddingStore& other);

    bool operator==(const EmbeddingStore&) const = default;

private:
    friend EmbeddingStore decode_store(std::string_view bytes);

    std::string provider_name_;
    std::size_t dim_ = 0;
    bool normalized_ = true;
    std::string metadata_;
    std::map<EntryId, EmbeddingVector> vectors_;
};

/// Binary layout (little endian):
///   magic "VLVSTOR1" | u32 len + provider | u32 len + metadata | u32 dim |
///   u8 normalized | u64 count | u32 crc32 | ID table (u8 kind, u32 len, bytes)
///   | count × dim float32 rows.
/// The CRC covers every byte of the file except the CRC field itself.
void save_store(const EmbeddingStore& store, const std::string& path);
EmbeddingStore load_store(const std::string& path);

std::string encode_store(const EmbeddingStore& store);
EmbeddingStore decode_store(std::string_view bytes);

}  // namespace vulnlink
