#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scribtex/backends.hpp"
#include "scribtex/image.hpp"
#include "scribtex/mesh.hpp"
#include "scribtex/renderer.hpp"

namespace scribtex {

struct TexturePatch {
    Image pixels;  // RGB
    Rgb mean_color;
    std::string source = "global";  // "global" or "atlas"
    int image_index = 0;
    Rect box;

    static TexturePatch from_crop(const Image& img, const Rect& box, std::string source, int image_index);
    /// Bilinear resize; the source reference is kept.
    TexturePatch resized(int w, int h) const;
};

enum class PatchClass { Full, Partial, Discarded };
std::string to_string(PatchClass c);

/// Uniform patch grid inside the bounding box B of a region.
struct PlacementPlan {
    Rect bbox;  // B in atlas texels
    int patch_w = 0, patch_h = 0;
    int n_w = 0, n_h = 0;
    double dx = 0.0, dy = 0.0;
    /// Origins relative to B, row-major over (j, i): x_i = i*w + (i+1)*dx.
    std::vector<Vec2> positions;
    std::vector<PatchClass> kept;

    /// Atlas rectangle of position k with its origin rounded to the nearest texel.
    Rect snapped(std::size_t k) const;
};

/// Counts, spacing and positions on the bounding box; classes are decided on the
/// snapped rectangles. Throws PatchLargerThanRegion when w > W or h > H.
PlacementPlan plan_placement(const TexelMask& region, int w, int h);

/// clamp(min(W, H) / 2, 16, 256).
int default_patch_side(const Rect& bbox);

/// Region split by UV island label (labels from island_texel_labels; texels
/// without a label form one extra part). Parts are ordered by label.
std::vector<TexelMask> split_by_island(const TexelMask& region, const std::vector<int>& labels);

struct StampResult {
    Image atlas;
    TexelMask stamped;
    TexelMask gap;  // region minus stamped
};

/// Copies the patch into each kept footprint (rect, or rect ∩ region for
/// Partial) eroded by a disk. Texels outside the region are never written.
StampResult stamp_patches(const Image& atlas, const PlacementPlan& plan, const TexelMask& region,
                          const TexturePatch& patch, int erosion_radius);

struct IslandStamp {
    PlacementPlan plan;
    TexturePatch patch;  // resized to the plan's patch dims
};

/// Per-island planning and stamping of one source patch at the default side,
/// shrunk to the island box when larger.
struct RegionStamp {
    StampResult result;
    std::vector<IslandStamp> islands;
};
RegionStamp stamp_region(const Image& atlas, const TexelMask& region, const std::vector<int>& labels,
                         const TexturePatch& patch, int erosion_radius);

inline constexpr double kMinInpaintFraction = 0.002;
inline constexpr double kOverwriteMargin = 0.1;

/// Progress of the multi-view gap fill; persisted between passes.
struct IntegrateState {
    Image atlas;
    TexelMask gap;               // the gap texels to fill (fixed during integration)
    std::vector<float> weight;   // per texel; < 0 when not yet written
    std::size_t next_view = 0;
};

struct IntegratePass {
    std::string view_id;
    std::size_t mask_pixels = 0;
    bool skipped = false;
    std::size_t texels_written = 0;
};

struct IntegrateResult {
    Image atlas;
    std::vector<IntegratePass> passes;
    std::size_t fallback_texels = 0;  // filled by texture-space diffusion
};

IntegrateState begin_integrate(const Image& atlas, const TexelMask& gap);

/// Renders each view, inpaints the screen pixels of gap texels that are unwritten
/// or seen at an obliquity weight better by more than 0.1, and writes back the
/// per-texel mean. Residual texels get a texture-space diffusion fill.
/// `on_pass` runs after every view with the updated state.
IntegrateResult integrate(const TexturedMesh& mesh, IntegrateState state, const std::string& prompt,
                          const std::vector<NamedView>& views, InpaintBackend& inpainter, std::uint64_t seed,
                          const std::function<void(const IntegrateState&, const IntegratePass&)>& on_pass = {});

nlohmann::json plan_to_json(const PlacementPlan& plan);
PlacementPlan plan_from_json(const nlohmann::json& j);

}  // namespace scribtex
