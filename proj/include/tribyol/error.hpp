#pragma once

#include <stdexcept>
#include <string>

namespace tribyol {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Embedding with (near-)zero norm; usually means the model collapsed.
struct DegenerateEmbeddingError : Error {
    explicit DegenerateEmbeddingError(const std::string& msg) : Error(msg) {}
};

// Shape or dimension mismatch between tensors/embeddings.
struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Bad or inconsistent run configuration (also covers unknown config keys).
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Dataset ingestion / integrity problems (unknown id, checksum mismatch, ...).
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Training aborted (non-finite loss). Carries a short diagnostic.
struct TrainAbortError : Error {
    explicit TrainAbortError(const std::string& msg) : Error(msg) {}
};

} // namespace tribyol
