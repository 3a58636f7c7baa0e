#pragma once

#include <stdexcept>
#include <string>

namespace rasper {

enum class ErrorCode {
    EmptyData,
    ConstantColumn,
    NonFiniteScore,
    ParseError,
    SchemaMismatch,
    MissingValue,
    DimensionMismatch,
    DegenerateWeights,
    InvalidArgument,
    SingularDesign,
    NonpositiveConcordance,
    NonSPDSystem,
    InvalidBounds,
    FoldFailure,
    SingularSystem,
    IoError,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace rasper
