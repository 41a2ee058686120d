#include "scribtex/renderer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "scribtex/error.hpp"

namespace scribtex {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

void ViewSpec::validate() const {
    if (!(theta >= -90.0 && theta <= 90.0)) throw Error(ErrorCode::Validation, "theta must lie in [-90, 90]");
    if (!(phi >= 0.0 && phi < 360.0)) throw Error(ErrorCode::Validation, "phi must lie in [0, 360)");
    if (!(fov > 0.0 && fov < 180.0)) throw Error(ErrorCode::Validation, "fov must lie in (0, 180)");
    if (!(distance > 0.0)) throw Error(ErrorCode::Validation, "distance must be positive");
    if (resolution < 1) throw Error(ErrorCode::Validation, "resolution must be >= 1");
}

std::vector<NamedView> intent_views(double fov, double distance, int resolution) {
    std::vector<NamedView> views;
    for (int i = 0; i < 4; ++i)
        views.push_back({"intent-" + std::to_string(i), {0.0, 90.0 * i, fov, distance, resolution}});
    return views;
}

std::vector<NamedView> coverage_views(double fov, double distance, int resolution) {
    std::vector<NamedView> views;
    for (int i = 0; i < 6; ++i)
        views.push_back({"cover-" + std::to_string(i), {0.0, 60.0 * i, fov, distance, resolution}});
    views.push_back({"cover-6", {90.0, 0.0, fov, distance, resolution}});
    views.push_back({"cover-7", {-90.0, 0.0, fov, distance, resolution}});
    return views;
}

NamedView preset_view(const std::string& id, double fov, double distance, int resolution) {
    for (auto& v : intent_views(fov, distance, resolution))
        if (v.id == id) return v;
    for (auto& v : coverage_views(fov, distance, resolution))
        if (v.id == id) return v;
    throw Error(ErrorCode::NotFound, "unknown view '" + id + "'");
}

Camera::Camera(const ViewSpec& spec) : tan_half_fov(std::tan(spec.fov * kDeg / 2)), resolution(spec.resolution) {
    const double th = spec.theta * kDeg, ph = spec.phi * kDeg;
    eye = Vec3{std::cos(th) * std::sin(ph), std::sin(th), std::cos(th) * std::cos(ph)} * spec.distance;
    forward = normalize(eye * -1.0);
    // d(eye)/d(theta): well defined at the poles, equals +Y at the equator.
    const Vec3 up_hint{-std::sin(th) * std::sin(ph), std::cos(th), -std::sin(th) * std::cos(ph)};
    right = normalize(cross(forward, up_hint));
    up = cross(right, forward);
}

Camera::Projected Camera::project(Vec3 p) const {
    const Vec3 rel = p - eye;
    const double depth = dot(rel, forward);
    const double nx = dot(rel, right) / (depth * tan_half_fov);
    const double ny = dot(rel, up) / (depth * tan_half_fov);
    return {(nx + 1.0) * 0.5 * resolution, (1.0 - ny) * 0.5 * resolution, depth};
}

std::size_t ViewFrame::foreground_count() const {
    return static_cast<std::size_t>(std::count_if(face_id.begin(), face_id.end(), [](auto f) { return f != kBackground; }));
}

ViewFrame render(const TexturedMesh& mesh, const ViewSpec& spec, RenderMode mode) {
    return render_with_atlas(mesh, mesh.atlas, spec, mode);
}

ViewFrame render_with_atlas(const TexturedMesh& mesh, const Image& atlas, const ViewSpec& spec,
                            RenderMode mode) {
    spec.validate();
    double radius = 0;
    for (const auto& v : mesh.vertices) radius = std::max(radius, length(v));
    if (!(spec.distance > radius))
        throw Error(ErrorCode::Validation, "camera distance must exceed the mesh bounding radius");
    if (atlas.width != mesh.atlas_width() || atlas.height != mesh.atlas_height())
        throw Error(ErrorCode::Validation, "atlas dimensions differ from the mesh atlas");

    const int res = spec.resolution;
    const std::size_t n = static_cast<std::size_t>(res) * res;
    ViewFrame f;
    f.spec = spec;
    f.color = Image(res, res, 3, 255);
    f.face_id.assign(n, kBackground);
    f.bary.assign(n, {0.f, 0.f, 0.f});
    f.uv.assign(n, {0.f, 0.f});
    f.depth.assign(n, std::numeric_limits<float>::infinity());
    std::vector<double> zbuf(n, std::numeric_limits<double>::infinity());

    const Camera cam(spec);
    for (std::uint32_t t = 0; t < mesh.triangles.size(); ++t) {
        Camera::Projected p[3];
        bool behind = false;
        for (int k = 0; k < 3; ++k) {
            p[k] = cam.project(mesh.corner(t, k));
            behind |= !(p[k].depth > 1e-9);
        }
        if (behind) continue;
        const double area = (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[1].y - p[0].y) * (p[2].x - p[0].x);
        if (std::abs(area) < 1e-12) continue;
        const double minx = std::min({p[0].x, p[1].x, p[2].x}), maxx = std::max({p[0].x, p[1].x, p[2].x});
        const double miny = std::min({p[0].y, p[1].y, p[2].y}), maxy = std::max({p[0].y, p[1].y, p[2].y});
        const int x0 = std::max(0, static_cast<int>(std::ceil(minx - 0.5)));
        const int x1 = std::min(res - 1, static_cast<int>(std::floor(maxx - 0.5)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(miny - 0.5)));
        const int y1 = std::min(res - 1, static_cast<int>(std::floor(maxy - 0.5)));
        if (x0 > x1 || y0 > y1) continue;

        const Vec3 normal = mesh.face_normal(t);
        for (int y = y0; y <= y1; ++y) {
            const double py = y + 0.5;
            for (int x = x0; x <= x1; ++x) {
                const double px = x + 0.5;
                double l[3];
                for (int k = 0; k < 3; ++k) {
                    const auto& a = p[(k + 1) % 3];
                    const auto& b = p[(k + 2) % 3];
                    l[k] = ((b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)) / area;
                }
                if (l[0] < 0 || l[1] < 0 || l[2] < 0) continue;
                const double w0 = l[0] / p[0].depth, w1 = l[1] / p[1].depth, w2 = l[2] / p[2].depth;
                const double wsum = w0 + w1 + w2;
                const double depth = 1.0 / wsum;
                const std::size_t i = static_cast<std::size_t>(y) * res + x;
                if (!(depth < zbuf[i])) continue;
                zbuf[i] = depth;
                const double b[3] = {w0 / wsum, w1 / wsum, w2 / wsum};
                Vec2 uv{};
                for (int k = 0; k < 3; ++k) uv = uv + mesh.corner_uv(t, k) * b[k];
                f.face_id[i] = t;
                f.bary[i] = {static_cast<float>(b[0]), static_cast<float>(b[1]), static_cast<float>(b[2])};
                f.uv[i] = {static_cast<float>(uv.x), static_cast<float>(uv.y)};
                f.depth[i] = static_cast<float>(depth);
                if (mode == RenderMode::Textured) {
                    const auto tc = uv_to_texel({f.uv[i][0], f.uv[i][1]}, atlas.width, atlas.height);
                    f.color.put(x, y, atlas.rgb(tc.x, tc.y));
                } else {
                    Vec3 pos{};
                    for (int k = 0; k < 3; ++k) pos = pos + mesh.corner(t, k) * b[k];
                    const double c = std::abs(dot(normal, normalize(cam.eye - pos)));
                    const auto g = static_cast<std::uint8_t>(std::lround(40.0 + 200.0 * c));
                    f.color.put(x, y, {g, g, g});
                }
            }
        }
    }
    return f;
}

double view_cosine(const TexturedMesh& mesh, const ViewFrame& frame, int x, int y) {
    const std::size_t i = frame.pixel(x, y);
    const auto t = frame.face_id[i];
    if (t == kBackground) return 0.0;
    const Camera cam(frame.spec);
    Vec3 pos{};
    for (int k = 0; k < 3; ++k) pos = pos + mesh.corner(t, k) * frame.bary[i][k];
    return std::abs(dot(mesh.face_normal(t), normalize(cam.eye - pos)));
}

namespace {

template <typename T>
void write_raw(const std::filesystem::path& path, const T* data, std::size_t count) {
    static_assert(sizeof(T) == 4);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    for (std::size_t i = 0; i < count; ++i) {
        auto bits = std::bit_cast<std::uint32_t>(data[i]);
        const char le[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                            static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
        out.write(le, 4);
    }
    if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

template <typename T>
void read_raw(const std::filesystem::path& path, T* data, std::size_t count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    for (std::size_t i = 0; i < count; ++i) {
        unsigned char le[4];
        if (!in.read(reinterpret_cast<char*>(le), 4)) throw Error(ErrorCode::Io, "truncated " + path.string());
        const std::uint32_t bits = le[0] | (le[1] << 8) | (le[2] << 16) | (static_cast<std::uint32_t>(le[3]) << 24);
        data[i] = std::bit_cast<T>(bits);
    }
}

}  // namespace

void save_frame(const std::filesystem::path& dir, const ViewFrame& frame) {
    std::filesystem::create_directories(dir);
    const std::size_t n = frame.face_id.size();
    write_png(dir / "color.png", frame.color);
    write_raw(dir / "faceid.u32", frame.face_id.data(), n);
    write_raw(dir / "uv.f32", frame.uv.data()->data(), n * 2);
    write_raw(dir / "depth.f32", frame.depth.data(), n);
    write_raw(dir / "bary.f32", frame.bary.data()->data(), n * 3);
    const nlohmann::json spec = {{"theta", frame.spec.theta},   {"phi", frame.spec.phi},
                                 {"fov", frame.spec.fov},       {"distance", frame.spec.distance},
                                 {"resolution", frame.spec.resolution}};
    std::ofstream(dir / "spec.json") << spec.dump(2) << "\n";
}

ViewFrame load_frame(const std::filesystem::path& dir) {
    std::ifstream in(dir / "spec.json");
    if (!in) throw Error(ErrorCode::Io, "cannot open " + (dir / "spec.json").string());
    const auto j = nlohmann::json::parse(in);
    ViewFrame f;
    f.spec = {j.at("theta").get<double>(), j.at("phi").get<double>(), j.at("fov").get<double>(),
              j.at("distance").get<double>(), j.at("resolution").get<int>()};
    f.spec.validate();
    const std::size_t n = static_cast<std::size_t>(f.spec.resolution) * f.spec.resolution;
    f.color = to_rgb(read_png(dir / "color.png"));
    f.face_id.resize(n);
    f.uv.resize(n);
    f.depth.resize(n);
    f.bary.resize(n);
    read_raw(dir / "faceid.u32", f.face_id.data(), n);
    read_raw(dir / "uv.f32", f.uv.data()->data(), n * 2);
    read_raw(dir / "depth.f32", f.depth.data(), n);
    read_raw(dir / "bary.f32", f.bary.data()->data(), n * 3);
    return f;
}

}  // namespace scribtex
