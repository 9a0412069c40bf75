#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace blochdec {

enum class ErrorCode {
    NonIntegerCellCount,
    ResolutionTooSmall,
    ShapeMismatch,
    InsufficientSamples,
    OutOfDomain,
    TruncationTooSmall,
    TruncationMismatch,
    EigensolverFailure,
    BandCountExceedsTruncation,
    BandIndexOutOfRange,
    BandGapTooSmall,
    DegenerateCurvature,
    CFLViolation,
    CausticReached,
    NonSmoothForce,
    NonFinite,
    ReferenceTooCoarse,
    InvalidConfig,
    IoFailure,
    CacheMismatch,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::NonIntegerCellCount: return "NonIntegerCellCount";
        case ErrorCode::ResolutionTooSmall: return "ResolutionTooSmall";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::InsufficientSamples: return "InsufficientSamples";
        case ErrorCode::OutOfDomain: return "OutOfDomain";
        case ErrorCode::TruncationTooSmall: return "TruncationTooSmall";
        case ErrorCode::TruncationMismatch: return "TruncationMismatch";
        case ErrorCode::EigensolverFailure: return "EigensolverFailure";
        case ErrorCode::BandCountExceedsTruncation: return "BandCountExceedsTruncation";
        case ErrorCode::BandIndexOutOfRange: return "BandIndexOutOfRange";
        case ErrorCode::BandGapTooSmall: return "BandGapTooSmall";
        case ErrorCode::DegenerateCurvature: return "DegenerateCurvature";
        case ErrorCode::CFLViolation: return "CFLViolation";
        case ErrorCode::CausticReached: return "CausticReached";
        case ErrorCode::NonSmoothForce: return "NonSmoothForce";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::ReferenceTooCoarse: return "ReferenceTooCoarse";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::CacheMismatch: return "CacheMismatch";
    }
    return "Unknown";
}

/// Exception type thrown by every module; `code()` identifies the failure class.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace blochdec
