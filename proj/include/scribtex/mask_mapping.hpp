#pragma once

#include <string>
#include <vector>

#include "scribtex/backends.hpp"
#include "scribtex/error.hpp"
#include "scribtex/image.hpp"
#include "scribtex/mesh.hpp"
#include "scribtex/renderer.hpp"
#include "scribtex/scribble.hpp"

namespace scribtex {

/// Lifts a screen mask into the atlas: every masked foreground pixel sets the
/// texel at its interpolated UV; the result is closed with a 3x3 kernel, and
/// texels added by the closing are kept only inside the UV charts of the
/// islands that were hit.
TexelMask screen_to_texel(const Image& mask, const ViewFrame& frame, const TexturedMesh& mesh);

/// Raw lift without closing (monotone in the input mask).
TexelMask screen_to_texel_raw(const Image& mask, const ViewFrame& frame, int atlas_w, int atlas_h);

/// Foreground pixels whose UV lands on a set texel.
Image texel_to_screen(const TexelMask& tmask, const ViewFrame& frame);

struct RefinementStep {
    std::string view_id;
    Image input_mask;         // prompt sent to segmentation
    Image segmentation;       // accepted segment
    TexelMask texel_mask;     // accumulated region after this step
};

struct RefinementTrace {
    std::vector<RefinementStep> steps;
    TexelMask final;
};

/// Smallest-area candidate containing >= 90% of the prompt; if none qualifies,
/// the candidate with the largest overlap (ties: smaller area). Candidates must
/// be sorted by area ascending.
std::size_t select_minimal_enclosing(const std::vector<SegmentCandidate>& candidates, const Image& prompt);

inline constexpr double kMinEnclosingFraction = 0.9;
inline constexpr double kMinViewCoverage = 0.005;

/// Raised when the segmentation backend fails mid-refinement.
class RefinementError : public Error {
public:
    RefinementError(const Error& cause, RefinementTrace partial)
        : Error(ErrorCode::SegmentationBackendError, cause.what(), cause.payload()),
          partial_(std::move(partial)) {}
    const RefinementTrace& partial() const { return partial_; }

private:
    RefinementTrace partial_;
};

/// Geometry-guided refinement: segment the scribble on the textureless render of
/// its own view, then project the accumulated region into each further view,
/// segment again and union the accepted segment back into the atlas.
RefinementTrace refine_region(const TexturedMesh& mesh, const ScribbleRegion& region, const NamedView& source,
                              const std::vector<NamedView>& views, SegmentBackend& seg);

/// Strict scribble: the closed lift of the raw screen mask.
TexelMask bypass_refinement(const TexturedMesh& mesh, const ScribbleRegion& region, const ViewFrame& frame);

}  // namespace scribtex
