#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drport {

enum class ErrorCode {
    NotPositiveDefinite,
    DimensionMismatch,
    // model validation
    TooFewObservations,
    MissingValues,
    NonPositiveAlpha,
    UnsortedPoints,
    NonPositiveMuMax,
    AssumptionViolation,
    InvalidUtility,
    InvalidCardinality,
    InvalidGamma,
    InvalidSelection,
    // solver side
    SolverFailure,
    LiftInfeasible,
    GloballyInfeasible,
    TimeLimit,
    // data ingestion
    EmptyFile,
    NoUsableColumns,
    MalformedHeader,
    MissingCorrelation,
    CorrelationOutOfRange,
    CorrelationConflict,
    IoFailure,
    InsufficientData,
    InvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; `code()` says which failure it is and
/// `detail()` carries the offending field name where one applies (e.g. "kappa1").
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::string detail = {})
        : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    std::string detail_;
};

} // namespace drport
