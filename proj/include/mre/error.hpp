#pragma once

#include <stdexcept>
#include <string>

namespace mre {

// Base for everything this library throws on invalid input or state.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset / file ingestion
struct ParseError : Error {
    ParseError(const std::string& file, int line, const std::string& what)
        : Error(file + ":" + std::to_string(line) + ": " + what) {}
    explicit ParseError(const std::string& what) : Error(what) {}
};
struct MissingModality : Error {
    explicit MissingModality(const std::string& entity)
        : Error("entity '" + entity + "' lacks an image or a text description") {}
};
struct DanglingReference : Error {
    explicit DanglingReference(const std::string& what) : Error(what) {}
};

// Sampling / splitting
struct InfeasibleSplit : Error {
    explicit InfeasibleSplit(const std::string& what) : Error(what) {}
};
struct ExhaustedCandidates : Error {
    explicit ExhaustedCandidates(const std::string& what) : Error(what) {}
};
struct TooFewTriples : Error {
    explicit TooFewTriples(const std::string& what) : Error(what) {}
};

// Shapes and model state
struct DimensionMismatch : Error {
    explicit DimensionMismatch(const std::string& what) : Error(what) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error(what) {}
};
struct BatchTooSmall : Error {
    explicit BatchTooSmall(const std::string& what) : Error(what) {}
};
struct UnknownRelation : Error {
    explicit UnknownRelation(const std::string& what) : Error(what) {}
};
struct EmptySet : Error {
    explicit EmptySet(const std::string& what) : Error(what) {}
};
struct MissingCenter : Error {
    explicit MissingCenter(const std::string& what) : Error(what) {}
};
struct UnknownQuery : Error {
    explicit UnknownQuery(const std::string& what) : Error(what) {}
};

// Training
struct NonFiniteLoss : Error {
    explicit NonFiniteLoss(const std::string& what) : Error(what) {}
};

// Checkpoints
struct VersionMismatch : Error {
    explicit VersionMismatch(const std::string& what) : Error(what) {}
};
struct CorruptCheckpoint : Error {
    explicit CorruptCheckpoint(const std::string& what) : Error(what) {}
};

}  // namespace mre
