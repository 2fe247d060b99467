#pragma once

#include <stdexcept>
#include <string>

namespace vulnlink {

/// Base class for every error raised by the library. `code()` is a stable
/// machine-readable tag used by the CLI error report and the service.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

class CorpusError : public Error {
public:
    explicit CorpusError(const std::string& message) : Error("corpus", message) {}
};

class LookupError : public Error {
public:
    explicit LookupError(const std::string& message) : Error("lookup", message) {}
};

class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& message) : Error("precondition", message) {}
};

class EmbeddingError : public Error {
public:
    explicit EmbeddingError(const std::string& message) : Error("embedding", message) {}
};

class StoreError : public Error {
public:
    explicit StoreError(const std::string& message) : Error("store", message) {}
};

class SimilarityError : public Error {
public:
    explicit SimilarityError(const std::string& message) : Error("similarity", message) {}
};

class MetricError : public Error {
public:
    explicit MetricError(const std::string& message) : Error("metric", message) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& message) : Error("validation", message) {}
};

/// Raised when a pipeline stage runs before the stage that produces its input.
class DependencyError : public Error {
public:
    DependencyError(std::string stage, std::string path)
        : Error("dependency", "missing artifact '" + path + "' (run stage '" + stage + "' first)"),
          stage_(std::move(stage)),
          path_(std::move(path)) {}

    const std::string& stage() const noexcept { return stage_; }
    const std::string& path() const noexcept { return path_; }

private:
    std::string stage_;
    std::string path_;
};

}  // namespace vulnlink
