#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dyneformer {

/// Base class for every error raised by the library. The CLI maps these to
/// exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define DYNEFORMER_DEFINE_ERROR(Name)          \
    class Name : public Error {                \
    public:                                    \
        using Error::Error;                    \
    }

DYNEFORMER_DEFINE_ERROR(ConfigError);
DYNEFORMER_DEFINE_ERROR(DuplicateError);
DYNEFORMER_DEFINE_ERROR(GapError);
DYNEFORMER_DEFINE_ERROR(FitError);
DYNEFORMER_DEFINE_ERROR(InputTooShort);
DYNEFORMER_DEFINE_ERROR(DataError);
DYNEFORMER_DEFINE_ERROR(TrainingDiverged);
DYNEFORMER_DEFINE_ERROR(DimensionError);
DYNEFORMER_DEFINE_ERROR(StateError);
DYNEFORMER_DEFINE_ERROR(ProvenanceError);
DYNEFORMER_DEFINE_ERROR(EmptySubset);
DYNEFORMER_DEFINE_ERROR(DegenerateBilling);
DYNEFORMER_DEFINE_ERROR(CoverageError);
DYNEFORMER_DEFINE_ERROR(KeyError);
DYNEFORMER_DEFINE_ERROR(IoError);

#undef DYNEFORMER_DEFINE_ERROR

/// Malformed input row. `line()` is 1-based and counts the header.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace dyneformer
