#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scribtex {

enum class ErrorCode {
    Io,
    Validation,
    MissingUVs,
    NonTriangleFace,
    MultiAtlasUnsupported,
    CorruptImage,
    EmptyScribble,
    EmptyMask,
    EmptyPrompt,
    PatchLargerThanRegion,
    Timeout,
    AuthFailure,
    MalformedResponse,
    BackendUnavailable,
    SegmentationBackendError,
    InpaintBackendError,
    NoCandidate,
    OverlappingRegions,
    NotFound,
    Halted,
    Pipeline,
};

std::string_view to_string(ErrorCode code);

/// Coarse category used for CLI exit codes and HTTP status mapping.
enum class ErrorCategory { Io = 1, Validation = 2, Backend = 3, Pipeline = 4 };

ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::string payload = {})
        : std::runtime_error(message), code_(code), payload_(std::move(payload)) {}

    ErrorCode code() const noexcept { return code_; }
    ErrorCategory category() const noexcept { return category_of(code_); }
    /// Raw backend payload (response body, malformed completion), if any.
    const std::string& payload() const noexcept { return payload_; }

private:
    ErrorCode code_;
    std::string payload_;
};

}  // namespace scribtex
