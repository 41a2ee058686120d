#include "scribtex/scribble.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "scribtex/error.hpp"
#include "scribtex/morphology.hpp"

namespace scribtex {

void Stroke::validate(int resolution) const {
    if (points.empty()) throw Error(ErrorCode::Validation, "stroke has no points");
    if (!(radius >= 1.0)) throw Error(ErrorCode::Validation, "stroke radius must be >= 1");
    for (const auto& p : points)
        if (!(p.x >= 0 && p.y >= 0 && p.x < resolution && p.y < resolution))
            throw Error(ErrorCode::Validation, "stroke point outside the view");
}

namespace {

double segment_distance2(double px, double py, StrokePoint a, StrokePoint b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((px - a.x) * vx + (py - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
    return dx * dx + dy * dy;
}

}  // namespace

Image stamp_stroke(const Stroke& stroke, int width, int height) {
    Image mask = make_mask(width, height);
    const double r2 = stroke.radius * stroke.radius;
    const auto& pts = stroke.points;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const StrokePoint a = pts[k];
        const StrokePoint b = k + 1 < pts.size() ? pts[k + 1] : pts[k];
        if (k + 1 == pts.size() && pts.size() > 1) break;
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - stroke.radius)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + stroke.radius)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - stroke.radius)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + stroke.radius)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if (segment_distance2(x, y, a, b) <= r2) mask.at(x, y) = 255;
    }
    return mask;
}

std::vector<ScribbleRegion> rasterize_strokes(const std::vector<Stroke>& strokes, const ViewFrame& view,
                                              const std::string& view_id,
                                              const std::optional<std::string>& hint,
                                              const std::string& id_prefix) {
    const int w = view.width(), h = view.height();
    if (strokes.empty()) throw Error(ErrorCode::EmptyScribble, "no strokes");
    std::vector<Image> stamps;
    TexelMask uni(w, h);
    for (const auto& s : strokes) {
        if (s.view_id != view_id)
            throw Error(ErrorCode::Validation, "stroke references view '" + s.view_id + "', expected '" + view_id + "'");
        s.validate(w);
        Image m = stamp_stroke(s, w, h);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (!view.foreground(x, y)) m.at(x, y) = 0;
                if (m.set(x, y)) uni.set(x, y);
            }
        stamps.push_back(std::move(m));
    }
    const Components cc = connected_components(uni);
    if (cc.count == 0) throw Error(ErrorCode::EmptyScribble, "every stamped pixel fell on the background");

    std::vector<std::map<Rgb, std::size_t>> area(cc.count);
    for (std::size_t s = 0; s < strokes.size(); ++s)
        for (std::size_t i = 0; i < stamps[s].data.size(); ++i)
            if (stamps[s].data[i]) ++area[cc.labels[i]][strokes[s].color];

    std::vector<ScribbleRegion> regions(cc.count);
    for (int r = 0; r < cc.count; ++r) {
        auto& reg = regions[r];
        reg.id = id_prefix + std::to_string(r);
        reg.view_id = view_id;
        reg.hint = hint;
        reg.screen_mask = make_mask(w, h);
        std::size_t best = 0;
        for (const auto& [color, a] : area[r])
            if (a > best) {  // map order gives the smallest RGB on ties
                best = a;
                reg.color = color;
            }
    }
    for (std::size_t i = 0; i < cc.labels.size(); ++i)
        if (cc.labels[i] >= 0) regions[cc.labels[i]].screen_mask.data[i] = 255;
    return regions;
}

Rgb dominant_color(const Image& mask, const Image& overlay) {
    if (mask.width != overlay.width || mask.height != overlay.height)
        throw Error(ErrorCode::Validation, "mask and overlay dimensions differ");
    struct Bucket {
        std::size_t n = 0;
        std::array<std::size_t, 3> sum{};
    };
    std::map<int, Bucket> buckets;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            if (!mask.set(x, y)) continue;
            const Rgb c = overlay.rgb(x, y);
            auto& b = buckets[(c.r / 8) << 10 | (c.g / 8) << 5 | (c.b / 8)];
            ++b.n;
            b.sum[0] += c.r;
            b.sum[1] += c.g;
            b.sum[2] += c.b;
        }
    if (buckets.empty()) throw Error(ErrorCode::EmptyMask, "mask selects no pixels");
    const Bucket* best = nullptr;
    for (const auto& [key, b] : buckets)
        if (!best || b.n > best->n) best = &b;
    auto mean = [&](int c) {
        return static_cast<std::uint8_t>((best->sum[c] + best->n / 2) / best->n);
    };
    return {mean(0), mean(1), mean(2)};
}

std::vector<ScribbleRegion> regions_from_overlay(const Image& overlay, const ViewFrame& view,
                                                 const std::string& view_id,
                                                 const std::optional<std::string>& hint,
                                                 const std::string& id_prefix) {
    const int w = view.width(), h = view.height();
    if (overlay.width != w || overlay.height != h)
        throw Error(ErrorCode::Validation, "overlay dimensions differ from the view");
    TexelMask uni(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool painted = overlay.channels == 4 ? overlay.at(x, y, 3) != 0 : overlay.set(x, y);
            if (painted && view.foreground(x, y)) uni.set(x, y);
        }
    const Components cc = connected_components(uni);
    if (cc.count == 0) throw Error(ErrorCode::EmptyScribble, "overlay paints no foreground pixel");
    std::vector<ScribbleRegion> regions(cc.count);
    for (int r = 0; r < cc.count; ++r) {
        regions[r].id = id_prefix + std::to_string(r);
        regions[r].view_id = view_id;
        regions[r].hint = hint;
        regions[r].screen_mask = make_mask(w, h);
    }
    for (std::size_t i = 0; i < cc.labels.size(); ++i)
        if (cc.labels[i] >= 0) regions[cc.labels[i]].screen_mask.data[i] = 255;
    for (auto& r : regions) r.color = dominant_color(r.screen_mask, overlay);
    return regions;
}

Image scribble_overlay(const Image& base, const std::vector<const ScribbleRegion*>& regions) {
    Image out = to_rgb(base);
    for (const auto* r : regions) {
        if (r->screen_mask.width != out.width || r->screen_mask.height != out.height)
            throw Error(ErrorCode::Validation, "region mask dimensions differ from the view");
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x)
                if (r->screen_mask.set(x, y)) out.put(x, y, r->color);
    }
    return out;
}

nlohmann::json stroke_to_json(const Stroke& s) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : s.points) pts.push_back({p.x, p.y});
    return {{"view_id", s.view_id}, {"color", {s.color.r, s.color.g, s.color.b}}, {"radius", s.radius}, {"points", pts}};
}

Stroke stroke_from_json(const nlohmann::json& j) {
    try {
        Stroke s;
        s.view_id = j.at("view_id").get<std::string>();
        const auto& c = j.at("color");
        if (!c.is_array() || c.size() != 3) throw Error(ErrorCode::Validation, "stroke color must be [r,g,b]");
        auto channel = [&](int k) {
            const int v = c[k].get<int>();
            if (v < 0 || v > 255) throw Error(ErrorCode::Validation, "stroke color channel out of range");
            return static_cast<std::uint8_t>(v);
        };
        s.color = {channel(0), channel(1), channel(2)};
        s.radius = j.at("radius").get<double>();
        for (const auto& p : j.at("points")) {
            if (!p.is_array() || p.size() != 2) throw Error(ErrorCode::Validation, "stroke point must be [x,y]");
            s.points.push_back({p[0].get<double>(), p[1].get<double>()});
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Validation, std::string("malformed stroke: ") + e.what());
    }
}

StrokeSubmission parse_stroke_submission(const nlohmann::json& j) {
    StrokeSubmission sub;
    const nlohmann::json* arr = &j;
    if (j.is_object()) {
        if (!j.contains("strokes")) throw Error(ErrorCode::Validation, "missing 'strokes'");
        arr = &j.at("strokes");
        if (j.contains("hint") && !j.at("hint").is_null()) sub.hint = j.at("hint").get<std::string>();
    }
    if (!arr->is_array()) throw Error(ErrorCode::Validation, "'strokes' must be an array");
    for (const auto& s : *arr) sub.strokes.push_back(stroke_from_json(s));
    if (sub.strokes.empty()) throw Error(ErrorCode::Validation, "no strokes submitted");
    return sub;
}

}  // namespace scribtex
