#include "drport/error.hpp"

namespace drport {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooFewObservations: return "TooFewObservations";
    case ErrorCode::MissingValues: return "MissingValues";
    case ErrorCode::NonPositiveAlpha: return "NonPositiveAlpha";
    case ErrorCode::UnsortedPoints: return "UnsortedPoints";
    case ErrorCode::NonPositiveMuMax: return "NonPositiveMuMax";
    case ErrorCode::AssumptionViolation: return "AssumptionViolation";
    case ErrorCode::InvalidUtility: return "InvalidUtility";
    case ErrorCode::InvalidCardinality: return "InvalidCardinality";
    case ErrorCode::InvalidGamma: return "InvalidGamma";
    case ErrorCode::InvalidSelection: return "InvalidSelection";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::LiftInfeasible: return "LiftInfeasible";
    case ErrorCode::GloballyInfeasible: return "GloballyInfeasible";
    case ErrorCode::TimeLimit: return "TimeLimit";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::NoUsableColumns: return "NoUsableColumns";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::MissingCorrelation: return "MissingCorrelation";
    case ErrorCode::CorrelationOutOfRange: return "CorrelationOutOfRange";
    case ErrorCode::CorrelationConflict: return "CorrelationConflict";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

} // namespace drport
