#include "scribtex/error.hpp"

namespace scribtex {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::Io: return "Io";
        case ErrorCode::Validation: return "Validation";
        case ErrorCode::MissingUVs: return "MissingUVs";
        case ErrorCode::NonTriangleFace: return "NonTriangleFace";
        case ErrorCode::MultiAtlasUnsupported: return "MultiAtlasUnsupported";
        case ErrorCode::CorruptImage: return "CorruptImage";
        case ErrorCode::EmptyScribble: return "EmptyScribble";
        case ErrorCode::EmptyMask: return "EmptyMask";
        case ErrorCode::EmptyPrompt: return "EmptyPrompt";
        case ErrorCode::PatchLargerThanRegion: return "PatchLargerThanRegion";
        case ErrorCode::Timeout: return "Timeout";
        case ErrorCode::AuthFailure: return "AuthFailure";
        case ErrorCode::MalformedResponse: return "MalformedResponse";
        case ErrorCode::BackendUnavailable: return "BackendUnavailable";
        case ErrorCode::SegmentationBackendError: return "SegmentationBackendError";
        case ErrorCode::InpaintBackendError: return "InpaintBackendError";
        case ErrorCode::NoCandidate: return "NoCandidate";
        case ErrorCode::OverlappingRegions: return "OverlappingRegions";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::Halted: return "Halted";
        case ErrorCode::Pipeline: return "Pipeline";
    }
    return "Unknown";
}

ErrorCategory category_of(ErrorCode code) {
    switch (code) {
        case ErrorCode::Io:
            return ErrorCategory::Io;
        case ErrorCode::Validation:
        case ErrorCode::MissingUVs:
        case ErrorCode::NonTriangleFace:
        case ErrorCode::MultiAtlasUnsupported:
        case ErrorCode::CorruptImage:
        case ErrorCode::EmptyScribble:
        case ErrorCode::EmptyMask:
        case ErrorCode::EmptyPrompt:
        case ErrorCode::NotFound:
            return ErrorCategory::Validation;
        case ErrorCode::Timeout:
        case ErrorCode::AuthFailure:
        case ErrorCode::MalformedResponse:
        case ErrorCode::BackendUnavailable:
        case ErrorCode::SegmentationBackendError:
        case ErrorCode::InpaintBackendError:
            return ErrorCategory::Backend;
        case ErrorCode::PatchLargerThanRegion:
        case ErrorCode::NoCandidate:
        case ErrorCode::OverlappingRegions:
        case ErrorCode::Halted:
        case ErrorCode::Pipeline:
            return ErrorCategory::Pipeline;
    }
    return ErrorCategory::Pipeline;
}

}  // namespace scribtex
