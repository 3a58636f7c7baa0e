#include "rasper/error.hpp"

namespace rasper {

const char* to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::ConstantColumn: return "ConstantColumn";
    case ErrorCode::NonFiniteScore: return "NonFiniteScore";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::MissingValue: return "MissingValue";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateWeights: return "DegenerateWeights";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::NonpositiveConcordance: return "NonpositiveConcordance";
    case ErrorCode::NonSPDSystem: return "NonSPDSystem";
    case ErrorCode::InvalidBounds: return "InvalidBounds";
    case ErrorCode::FoldFailure: return "FoldFailure";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

} // namespace rasper
