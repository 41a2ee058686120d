#include "scribtex/texturing.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "scribtex/error.hpp"
#include "scribtex/morphology.hpp"

namespace scribtex {

TexturePatch TexturePatch::from_crop(const Image& img, const Rect& box, std::string source, int image_index) {
    const Rect b = box.intersect(Rect{0, 0, img.width, img.height});
    if (b.empty()) throw Error(ErrorCode::Validation, "patch box is empty");
    TexturePatch p;
    p.pixels = to_rgb(crop(img, b));
    const auto m = mean_rgb(p.pixels, Rect{0, 0, b.w, b.h});
    p.mean_color = Rgb{static_cast<std::uint8_t>(std::lround(m[0])), static_cast<std::uint8_t>(std::lround(m[1])),
                       static_cast<std::uint8_t>(std::lround(m[2]))};
    p.source = std::move(source);
    p.image_index = image_index;
    p.box = b;
    return p;
}

TexturePatch TexturePatch::resized(int w, int h) const {
    TexturePatch p = *this;
    if (w != pixels.width || h != pixels.height) p.pixels = resample_bilinear(pixels, w, h);
    const auto m = mean_rgb(p.pixels, Rect{0, 0, w, h});
    p.mean_color = Rgb{static_cast<std::uint8_t>(std::lround(m[0])), static_cast<std::uint8_t>(std::lround(m[1])),
                       static_cast<std::uint8_t>(std::lround(m[2]))};
    return p;
}

std::string to_string(PatchClass c) {
    switch (c) {
        case PatchClass::Full: return "full";
        case PatchClass::Partial: return "partial";
        case PatchClass::Discarded: return "discarded";
    }
    return "?";
}

Rect PlacementPlan::snapped(std::size_t k) const {
    const Vec2 p = positions.at(k);
    return Rect{bbox.x + static_cast<int>(std::floor(p.x + 0.5)), bbox.y + static_cast<int>(std::floor(p.y + 0.5)),
                patch_w, patch_h};
}

PlacementPlan plan_placement(const TexelMask& region, int w, int h) {
    if (w < 1 || h < 1) throw Error(ErrorCode::Validation, "patch dims must be >= 1");
    const Rect B = region.bbox();
    if (B.empty()) throw Error(ErrorCode::EmptyMask, "placement region is empty");
    if (w > B.w || h > B.h)
        throw Error(ErrorCode::PatchLargerThanRegion, "patch " + std::to_string(w) + "x" + std::to_string(h) +
                                                          " exceeds region " + std::to_string(B.w) + "x" +
                                                          std::to_string(B.h));
    PlacementPlan plan;
    plan.bbox = B;
    plan.patch_w = w;
    plan.patch_h = h;
    plan.n_w = B.w / w;
    plan.n_h = B.h / h;
    plan.dx = double(B.w - plan.n_w * w) / (plan.n_w + 1);
    plan.dy = double(B.h - plan.n_h * h) / (plan.n_h + 1);
    for (int j = 0; j < plan.n_h; ++j)
        for (int i = 0; i < plan.n_w; ++i) plan.positions.push_back({i * w + (i + 1) * plan.dx, j * h + (j + 1) * plan.dy});
    for (std::size_t k = 0; k < plan.positions.size(); ++k) {
        const Rect r = plan.snapped(k);
        std::size_t inside = 0;
        for (int y = r.y; y < r.y + r.h; ++y)
            for (int x = r.x; x < r.x + r.w; ++x) inside += region.get(x, y) ? 1 : 0;
        plan.kept.push_back(inside == 0                                  ? PatchClass::Discarded
                            : inside == static_cast<std::size_t>(r.area()) ? PatchClass::Full
                                                                           : PatchClass::Partial);
    }
    return plan;
}

int default_patch_side(const Rect& bbox) { return std::clamp(std::min(bbox.w, bbox.h) / 2, 16, 256); }

std::vector<TexelMask> split_by_island(const TexelMask& region, const std::vector<int>& labels) {
    std::map<int, TexelMask> parts;
    for (int y = 0; y < region.height; ++y)
        for (int x = 0; x < region.width; ++x) {
            if (!region.get(x, y)) continue;
            const int label = labels[static_cast<std::size_t>(y) * region.width + x];
            auto [it, fresh] = parts.try_emplace(label < 0 ? INT32_MAX : label, region.width, region.height);
            it->second.set(x, y);
        }
    std::vector<TexelMask> out;
    for (auto& [label, m] : parts) out.push_back(std::move(m));
    return out;
}

StampResult stamp_patches(const Image& atlas, const PlacementPlan& plan, const TexelMask& region,
                          const TexturePatch& patch, int erosion_radius) {
    if (erosion_radius < 0) throw Error(ErrorCode::Validation, "erosion radius must be >= 0");
    if (patch.pixels.width != plan.patch_w || patch.pixels.height != plan.patch_h)
        throw Error(ErrorCode::Validation, "patch pixels do not match the plan's patch dims");
    StampResult out{atlas, TexelMask(region.width, region.height), {}};
    for (std::size_t k = 0; k < plan.positions.size(); ++k) {
        if (plan.kept[k] == PatchClass::Discarded) continue;
        const Rect r = plan.snapped(k);
        TexelMask local(r.w, r.h);
        for (int y = 0; y < r.h; ++y)
            for (int x = 0; x < r.w; ++x) local.set(x, y, region.get(r.x + x, r.y + y));
        const TexelMask eroded = erosion_radius > 0 ? erode_disk(local, erosion_radius) : local;
        for (int y = 0; y < r.h; ++y)
            for (int x = 0; x < r.w; ++x) {
                if (!eroded.get(x, y)) continue;
                out.atlas.put(r.x + x, r.y + y, patch.pixels.rgb(x, y));
                out.stamped.set(r.x + x, r.y + y);
            }
    }
    out.gap = region.minus(out.stamped);
    return out;
}

RegionStamp stamp_region(const Image& atlas, const TexelMask& region, const std::vector<int>& labels,
                         const TexturePatch& patch, int erosion_radius) {
    RegionStamp out;
    out.result = {atlas, TexelMask(region.width, region.height), TexelMask(region.width, region.height)};
    for (const TexelMask& part : split_by_island(region, labels)) {
        const Rect B = part.bbox();
        const int side = default_patch_side(B);
        const int w = std::min(side, B.w), h = std::min(side, B.h);
        TexturePatch sized = patch.resized(w, h);
        PlacementPlan plan = plan_placement(part, w, h);
        StampResult s = stamp_patches(out.result.atlas, plan, part, sized, erosion_radius);
        out.result.atlas = std::move(s.atlas);
        out.result.stamped |= s.stamped;
        out.result.gap |= s.gap;
        out.islands.push_back({std::move(plan), std::move(sized)});
    }
    return out;
}

IntegrateState begin_integrate(const Image& atlas, const TexelMask& gap) {
    IntegrateState s;
    s.atlas = atlas;
    s.gap = gap;
    s.weight.assign(static_cast<std::size_t>(gap.width) * gap.height, -1.0f);
    return s;
}

IntegrateResult integrate(const TexturedMesh& mesh, IntegrateState state, const std::string& prompt,
                          const std::vector<NamedView>& views, InpaintBackend& inpainter, std::uint64_t seed,
                          const std::function<void(const IntegrateState&, const IntegratePass&)>& on_pass) {
    const int W = state.gap.width, H = state.gap.height;
    if (W != state.atlas.width || H != state.atlas.height)
        throw Error(ErrorCode::Validation, "gap mask and atlas dimensions differ");
    IntegrateResult result;
    if (state.gap.empty()) {
        result.atlas = std::move(state.atlas);
        return result;
    }
    for (; state.next_view < views.size();) {
        const NamedView& view = views[state.next_view];
        IntegratePass pass;
        pass.view_id = view.id;
        const ViewFrame frame = render_with_atlas(mesh, state.atlas, view.spec, RenderMode::Textured);
        const int R = frame.width();
        Image mask = make_mask(R, R);
        std::vector<double> cosine(frame.face_id.size(), 0.0);
        for (int y = 0; y < R; ++y)
            for (int x = 0; x < R; ++x) {
                if (!frame.foreground(x, y)) continue;
                const TexelCoord t = uv_to_texel(frame.uv_at(x, y), W, H);
                if (!state.gap.get(t.x, t.y)) continue;
                const double c = view_cosine(mesh, frame, x, y);
                cosine[frame.pixel(x, y)] = c;
                const float stored = state.weight[static_cast<std::size_t>(t.y) * W + t.x];
                if (stored < 0.0f || c > stored + kOverwriteMargin) {
                    mask.at(x, y) = 255;
                    ++pass.mask_pixels;
                }
            }
        if (pass.mask_pixels < kMinInpaintFraction * double(R) * R) {
            pass.skipped = true;
        } else {
            InpaintRequest req{frame.color, mask, prompt, seed + state.next_view};
            const Image filled = inpaint(req, inpainter);
            std::map<std::size_t, std::array<double, 5>> acc;  // r, g, b, count, max cos
            for (int y = 0; y < R; ++y)
                for (int x = 0; x < R; ++x) {
                    if (!mask.set(x, y)) continue;
                    const TexelCoord t = uv_to_texel(frame.uv_at(x, y), W, H);
                    auto& a = acc[static_cast<std::size_t>(t.y) * W + t.x];
                    const Rgb p = filled.rgb(x, y);
                    a[0] += p.r;
                    a[1] += p.g;
                    a[2] += p.b;
                    a[3] += 1;
                    a[4] = std::max(a[4], cosine[frame.pixel(x, y)]);
                }
            for (const auto& [idx, a] : acc) {
                float& stored = state.weight[idx];
                if (stored >= 0.0f && !(a[4] > stored + kOverwriteMargin)) continue;
                const int x = static_cast<int>(idx % W), y = static_cast<int>(idx / W);
                state.atlas.put(x, y, Rgb{static_cast<std::uint8_t>(std::lround(a[0] / a[3])),
                                          static_cast<std::uint8_t>(std::lround(a[1] / a[3])),
                                          static_cast<std::uint8_t>(std::lround(a[2] / a[3]))});
                stored = static_cast<float>(a[4]);
                ++pass.texels_written;
            }
        }
        ++state.next_view;
        result.passes.push_back(pass);
        if (on_pass) on_pass(state, pass);
    }
    TexelMask residual(W, H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (state.gap.get(x, y) && state.weight[static_cast<std::size_t>(y) * W + x] < 0.0f) residual.set(x, y);
    result.fallback_texels = residual.count();
    result.atlas = result.fallback_texels ? diffusion_fill(state.atlas, residual) : std::move(state.atlas);
    return result;
}

nlohmann::json plan_to_json(const PlacementPlan& plan) {
    nlohmann::json pos = nlohmann::json::array(), kept = nlohmann::json::array();
    for (const auto& p : plan.positions) pos.push_back({p.x, p.y});
    for (auto k : plan.kept) kept.push_back(to_string(k));
    return {{"bbox", {plan.bbox.x, plan.bbox.y, plan.bbox.w, plan.bbox.h}},
            {"patch", {plan.patch_w, plan.patch_h}},
            {"counts", {plan.n_w, plan.n_h}},
            {"spacing", {plan.dx, plan.dy}},
            {"positions", pos},
            {"kept", kept}};
}

PlacementPlan plan_from_json(const nlohmann::json& j) {
    PlacementPlan p;
    const auto& b = j.at("bbox");
    p.bbox = Rect{b[0], b[1], b[2], b[3]};
    p.patch_w = j.at("patch")[0];
    p.patch_h = j.at("patch")[1];
    p.n_w = j.at("counts")[0];
    p.n_h = j.at("counts")[1];
    p.dx = j.at("spacing")[0];
    p.dy = j.at("spacing")[1];
    for (const auto& q : j.at("positions")) p.positions.push_back({q[0].get<double>(), q[1].get<double>()});
    for (const auto& k : j.at("kept")) {
        const std::string s = k;
        p.kept.push_back(s == "full" ? PatchClass::Full : s == "partial" ? PatchClass::Partial : PatchClass::Discarded);
    }
    return p;
}

}  // namespace scribtex
