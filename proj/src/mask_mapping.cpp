#include "scribtex/mask_mapping.hpp"

#include <algorithm>
#include <set>

#include "scribtex/morphology.hpp"

namespace scribtex {

TexelMask screen_to_texel_raw(const Image& mask, const ViewFrame& frame, int atlas_w, int atlas_h) {
    if (mask.width != frame.width() || mask.height != frame.height())
        throw Error(ErrorCode::Validation, "mask dimensions differ from the frame resolution");
    TexelMask out(atlas_w, atlas_h);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.set(x, y) || !frame.foreground(x, y)) continue;
            const auto t = uv_to_texel(frame.uv_at(x, y), atlas_w, atlas_h);
            out.set(t.x, t.y);
        }
    return out;
}

TexelMask screen_to_texel(const Image& mask, const ViewFrame& frame, const TexturedMesh& mesh) {
    const TexelMask raw = screen_to_texel_raw(mask, frame, mesh.atlas_width(), mesh.atlas_height());
    std::set<std::uint32_t> islands;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.set(x, y) && frame.foreground(x, y))
                islands.insert(mesh.triangle_island[frame.face_id[frame.pixel(x, y)]]);
    if (islands.empty()) return raw;
    const std::vector<std::uint32_t> ids(islands.begin(), islands.end());
    TexelMask closed = close_square(raw, 1);
    closed &= island_coverage(mesh, ids);
    closed |= raw;
    return closed;
}

Image texel_to_screen(const TexelMask& tmask, const ViewFrame& frame) {
    Image out = make_mask(frame.width(), frame.height());
    for (int y = 0; y < frame.height(); ++y)
        for (int x = 0; x < frame.width(); ++x) {
            if (!frame.foreground(x, y)) continue;
            const auto t = uv_to_texel(frame.uv_at(x, y), tmask.width, tmask.height);
            if (tmask.get(t.x, t.y)) out.at(x, y) = 255;
        }
    return out;
}

std::size_t select_minimal_enclosing(const std::vector<SegmentCandidate>& candidates, const Image& prompt) {
    if (candidates.empty()) throw Error(ErrorCode::MalformedResponse, "no segmentation candidates");
    const std::size_t prompt_area = count_set(prompt);
    std::size_t best_overlap_idx = 0, best_overlap = 0;
    bool have_overlap = false;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& c = candidates[i];
        std::size_t overlap = 0;
        for (std::size_t p = 0; p < prompt.pixel_count(); ++p)
            if (prompt.data[p] && c.mask.data[p]) ++overlap;
        if (prompt_area > 0 && static_cast<double>(overlap) >= kMinEnclosingFraction * static_cast<double>(prompt_area))
            return i;  // sorted ascending, so the first qualifying is the smallest
        if (!have_overlap || overlap > best_overlap ||
            (overlap == best_overlap && c.area < candidates[best_overlap_idx].area)) {
            best_overlap = overlap;
            best_overlap_idx = i;
            have_overlap = true;
        }
    }
    return best_overlap_idx;
}

namespace {

Image accepted_segment(const Image& geometry, const Image& prompt, SegmentBackend& seg) {
    SegmentRequest req{geometry, prompt, mask_bbox(prompt)};
    const auto cands = segment(req, seg);
    return cands[select_minimal_enclosing(cands, prompt)].mask;
}

}  // namespace

RefinementTrace refine_region(const TexturedMesh& mesh, const ScribbleRegion& region, const NamedView& source,
                              const std::vector<NamedView>& views, SegmentBackend& seg) {
    if (count_set(region.screen_mask) == 0) throw Error(ErrorCode::EmptyScribble, "region mask is empty");
    RefinementTrace trace;
    try {
        const ViewFrame first = render(mesh, source.spec, RenderMode::Geometry);
        Image prompt = region.screen_mask;
        for (std::size_t i = 0; i < prompt.pixel_count(); ++i)
            if (first.face_id[i] == kBackground) prompt.data[i] = 0;
        if (count_set(prompt) == 0) throw Error(ErrorCode::EmptyScribble, "scribble lies entirely off the object");
        Image accepted = accepted_segment(first.color, prompt, seg);
        TexelMask current = screen_to_texel(accepted, first, mesh);
        trace.steps.push_back({source.id, prompt, accepted, current});

        const double frame_pixels_min = kMinViewCoverage;
        for (const auto& view : views) {
            const ViewFrame frame = render(mesh, view.spec, RenderMode::Geometry);
            Image projected = texel_to_screen(current, frame);
            const double coverage = static_cast<double>(count_set(projected)) / static_cast<double>(projected.pixel_count());
            if (coverage < frame_pixels_min) continue;
            accepted = accepted_segment(frame.color, projected, seg);
            current |= screen_to_texel(accepted, frame, mesh);
            trace.steps.push_back({view.id, std::move(projected), accepted, current});
        }
    } catch (const RefinementError&) {
        throw;
    } catch (const Error& e) {
        if (e.category() != ErrorCategory::Backend) throw;
        if (!trace.steps.empty()) trace.final = trace.steps.back().texel_mask;
        throw RefinementError(e, std::move(trace));
    }
    trace.final = trace.steps.back().texel_mask;
    return trace;
}

TexelMask bypass_refinement(const TexturedMesh& mesh, const ScribbleRegion& region, const ViewFrame& frame) {
    if (count_set(region.screen_mask) == 0) throw Error(ErrorCode::EmptyScribble, "region mask is empty");
    return screen_to_texel(region.screen_mask, frame, mesh);
}

}  // namespace scribtex
