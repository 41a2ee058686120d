#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "scribtex/image.hpp"
#include "scribtex/mesh.hpp"

namespace scribtex {

/// Orbit camera looking at the origin. theta is elevation, phi azimuth, both in
/// degrees; phi = 0 looks down -Z from +Z, phi = 90 sits on +X.
struct ViewSpec {
    double theta = 0.0;
    double phi = 0.0;
    double fov = 45.0;
    double distance = 2.8;
    int resolution = 512;

    void validate() const;
    friend bool operator==(const ViewSpec&, const ViewSpec&) = default;
};

inline constexpr double kDefaultFov = 45.0;
inline constexpr double kDefaultDistance = 2.8;
inline constexpr int kDefaultResolution = 512;

/// A named view preset; ids are stable keys for strokes and artifacts.
struct NamedView {
    std::string id;
    ViewSpec spec;
};

/// theta 0 at phi 0/90/180/270, used for intent prediction ("intent-0".."intent-3").
std::vector<NamedView> intent_views(double fov = kDefaultFov, double distance = kDefaultDistance,
                                    int resolution = kDefaultResolution);
/// six side views every 60 degrees plus top and bottom ("cover-0".."cover-7").
std::vector<NamedView> coverage_views(double fov = kDefaultFov, double distance = kDefaultDistance,
                                      int resolution = kDefaultResolution);

/// Looks up an intent or coverage preset by id; throws NotFound.
NamedView preset_view(const std::string& id, double fov = kDefaultFov, double distance = kDefaultDistance,
                      int resolution = kDefaultResolution);

struct Camera {
    Vec3 eye, forward, right, up;
    double tan_half_fov = 0;
    int resolution = 0;

    explicit Camera(const ViewSpec& spec);

    struct Projected {
        double x, y;   // continuous pixel coordinates, pixel centres at +0.5
        double depth;  // distance along the view axis
    };
    Projected project(Vec3 p) const;
};

enum class RenderMode { Textured, Geometry };

inline constexpr std::uint32_t kBackground = 0xFFFFFFFFu;

/// One render plus the per-pixel correspondence buffers.
struct ViewFrame {
    ViewSpec spec;
    Image color;                               // RGB
    std::vector<std::uint32_t> face_id;        // kBackground off-object
    std::vector<std::array<float, 3>> bary;    // perspective-correct
    std::vector<std::array<float, 2>> uv;
    std::vector<float> depth;                  // +inf off-object

    int width() const { return spec.resolution; }
    int height() const { return spec.resolution; }
    std::size_t pixel(int x, int y) const { return static_cast<std::size_t>(y) * spec.resolution + x; }
    bool foreground(int x, int y) const { return face_id[pixel(x, y)] != kBackground; }
    std::size_t foreground_count() const;
    Vec2 uv_at(int x, int y) const {
        const auto& t = uv[pixel(x, y)];
        return {t[0], t[1]};
    }
};

/// Depth-tested rasterization without back-face culling. Textured mode samples
/// the atlas (nearest); Geometry mode is Lambertian gray lit from the camera.
ViewFrame render(const TexturedMesh& mesh, const ViewSpec& spec, RenderMode mode);
/// Same G-buffers, textured with a different atlas of the mesh's dimensions.
ViewFrame render_with_atlas(const TexturedMesh& mesh, const Image& atlas, const ViewSpec& spec,
                            RenderMode mode);

/// |cos| between the face normal and the view ray at a foreground pixel.
double view_cosine(const TexturedMesh& mesh, const ViewFrame& frame, int x, int y);

/// color.png, faceid.u32, uv.f32, depth.f32, bary.f32 (little-endian row-major) and spec.json.
void save_frame(const std::filesystem::path& dir, const ViewFrame& frame);
ViewFrame load_frame(const std::filesystem::path& dir);

}  // namespace scribtex
