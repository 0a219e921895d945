#include "wafl/error.hpp"

namespace wafl {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidInterval: return "InvalidInterval";
        case ErrorCode::OverlappingTokens: return "OverlappingTokens";
        case ErrorCode::EmptySequence: return "EmptySequence";
        case ErrorCode::FormatError: return "FormatError";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::MissingFeatures: return "MissingFeatures";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::DegenerateClass: return "DegenerateClass";
        case ErrorCode::InvalidRank: return "InvalidRank";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::StaleMask: return "StaleMask";
        case ErrorCode::InvalidLabel: return "InvalidLabel";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::DegenerateDataset: return "DegenerateDataset";
        case ErrorCode::ScoreCountMismatch: return "ScoreCountMismatch";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace wafl
