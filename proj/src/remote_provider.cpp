#include "vulnlink/embedding.hpp"
#include "vulnlink/error.hpp"

#include "httplib.h"
#include "json.hpp"

namespace vulnlink {

RemoteProvider::RemoteProvider(std::string url, std::size_t dim, std::size_t max_tokens, std::size_t batch_size)
    : url_(std::move(url)), dim_(dim), max_tokens_(max_tokens), batch_size_(batch_size == 0 ? 1 : batch_size) {
    auto scheme = url_.find("://");
    if (scheme == std::string::npos) {
        throw PreconditionError("remote provider url needs a scheme: '" + url_ + "'");
    }
    auto slash = url_.find('/', scheme + 3);
    host_ = url_.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : url_.substr(slash);
    if (dim_ == 0) {
        throw PreconditionError("remote provider dimension must be positive");
    }
}

std::string RemoteProvider::name() const {
    return "remote:" + std::to_string(dim_) + "@" + url_;
}

std::vector<EmbeddingVector> RemoteProvider::embed(std::span<const std::string> texts) {
    using json = nlohmann::json;
    httplib::Client client(host_);
    client.set_connection_timeout(5);
    client.set_read_timeout(120);

    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
        auto chunk = texts.subspan(start, std::min(batch_size_, texts.size() - start));
        json request = {{"texts", json::array()}};
        for (const auto& t : chunk) {
            request["texts"].push_back(t);
        }
        auto res = client.Post(path_, request.dump(), "application/json");
        if (!res) {
            throw EmbeddingError("embedding service unreachable at " + url_ + ": " + httplib::to_string(res.error()));
        }
        if (res->status != 200) {
            throw EmbeddingError("embedding service returned HTTP " + std::to_string(res->status));
        }
        try {
            auto body = json::parse(res->body);
            if (body.at("dim").get<std::size_t>() != dim_) {
                throw EmbeddingError("embedding service echoed dimension " + body.at("dim").dump() + ", expected " +
                                     std::to_string(dim_));
            }
            const auto& vectors = body.at("vectors");
            if (vectors.size() != chunk.size()) {
                throw EmbeddingError("embedding service returned " + std::to_string(vectors.size()) +
                                     " vectors for " + std::to_string(chunk.size()) + " texts");
            }
            for (const auto& v : vectors) {
                EmbeddingVector ev;
                ev.values = v.get<std::vector<float>>();
                out.push_back(std::move(ev));
            }
        } catch (const json::exception& e) {
            throw EmbeddingError(std::string("malformed embedding service response: ") + e.what());
        }
    }
    return out;
}

}  // namespace vulnlink
