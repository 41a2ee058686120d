#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "scribtex/image.hpp"
#include "scribtex/renderer.hpp"

namespace scribtex {

struct StrokePoint {
    double x = 0, y = 0;
    friend bool operator==(const StrokePoint&, const StrokePoint&) = default;
};

/// A brush polyline painted on one rendered view. Pixel (i, j) is covered when
/// its integer coordinate lies within `radius` of the polyline.
struct Stroke {
    std::string view_id;
    std::vector<StrokePoint> points;
    double radius = 1.0;
    Rgb color;

    void validate(int resolution) const;
    friend bool operator==(const Stroke&, const Stroke&) = default;
};

struct ScribbleRegion {
    std::string id;
    Rgb color;
    Image screen_mask;  // 1 channel, 0/255, frame resolution
    std::string view_id;
    std::optional<std::string> hint;
};

/// Stamps strokes as swept disks, drops background pixels, and splits the union
/// into 8-connected regions. Each region takes the color with the largest
/// stamped area inside it (ties: smallest RGB). Regions are ordered by their
/// first pixel in raster order and named "<prefix><k>".
std::vector<ScribbleRegion> rasterize_strokes(const std::vector<Stroke>& strokes, const ViewFrame& view,
                                              const std::string& view_id,
                                              const std::optional<std::string>& hint = std::nullopt,
                                              const std::string& id_prefix = "region-");

/// Swept-disk stamp of one stroke (not clipped to the foreground).
Image stamp_stroke(const Stroke& stroke, int width, int height);

/// Modal color among masked overlay pixels with channels quantized to 32
/// levels; returns the mean of the winning bucket.
Rgb dominant_color(const Image& mask, const Image& overlay);

/// Regions from a painted overlay PNG: non-transparent pixels are scribble.
std::vector<ScribbleRegion> regions_from_overlay(const Image& overlay, const ViewFrame& view,
                                                 const std::string& view_id,
                                                 const std::optional<std::string>& hint = std::nullopt,
                                                 const std::string& id_prefix = "region-");

/// View render with each region painted in its color.
Image scribble_overlay(const Image& base, const std::vector<const ScribbleRegion*>& regions);

// Stroke wire format: {view_id, color:[r,g,b], radius, points:[[x,y],...]}.
nlohmann::json stroke_to_json(const Stroke& s);
Stroke stroke_from_json(const nlohmann::json& j);

/// Accepts either an array of strokes or {"strokes": [...], "hint": "..."}.
struct StrokeSubmission {
    std::vector<Stroke> strokes;
    std::optional<std::string> hint;
};
StrokeSubmission parse_stroke_submission(const nlohmann::json& j);

}  // namespace scribtex
