#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "scribtex/mesh.hpp"
#include "scribtex/renderer.hpp"

namespace testing {

/// Brute-force ray caster: one ray per pixel centre against every triangle
/// (Moller-Trumbore). Camera basis derived numerically from the orbit
/// parametrisation.
struct RayFrame {
    int resolution = 0;
    std::vector<std::uint32_t> face;
    std::vector<std::array<double, 3>> bary;
    std::vector<double> t;
};

inline scribtex::Vec3 orbit_eye(double theta_deg, double phi_deg, double r) {
    const double th = theta_deg * M_PI / 180.0, ph = phi_deg * M_PI / 180.0;
    return {r * std::cos(th) * std::sin(ph), r * std::sin(th), r * std::cos(th) * std::cos(ph)};
}

inline RayFrame raycast(const scribtex::TexturedMesh& mesh, const scribtex::ViewSpec& spec) {
    using namespace scribtex;
    const Vec3 eye = orbit_eye(spec.theta, spec.phi, spec.distance);
    const Vec3 fwd = normalize(eye * -1.0);
    const double eps = 1e-4;
    Vec3 up = orbit_eye(spec.theta + eps, spec.phi, 1.0) - orbit_eye(spec.theta - eps, spec.phi, 1.0);
    up = normalize(up - fwd * dot(up, fwd));
    const Vec3 right = cross(fwd, up);
    const double tf = std::tan(spec.fov * M_PI / 360.0);
    const int n = spec.resolution;

    RayFrame out;
    out.resolution = n;
    out.face.assign(static_cast<std::size_t>(n) * n, kBackground);
    out.bary.assign(out.face.size(), {0, 0, 0});
    out.t.assign(out.face.size(), std::numeric_limits<double>::infinity());
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const double sx = (2.0 * (x + 0.5) / n - 1.0) * tf;
            const double sy = (1.0 - 2.0 * (y + 0.5) / n) * tf;
            const Vec3 dir = normalize(fwd + right * sx + up * sy);
            const std::size_t p = static_cast<std::size_t>(y) * n + x;
            for (std::uint32_t f = 0; f < mesh.triangles.size(); ++f) {
                const Vec3 a = mesh.corner(f, 0), b = mesh.corner(f, 1), c = mesh.corner(f, 2);
                const Vec3 e1 = b - a, e2 = c - a;
                const Vec3 pv = cross(dir, e2);
                const double det = dot(e1, pv);
                if (std::abs(det) < 1e-12) continue;
                const double inv = 1.0 / det;
                const Vec3 tv = eye - a;
                const double u = dot(tv, pv) * inv;
                if (u < 0 || u > 1) continue;
                const Vec3 qv = cross(tv, e1);
                const double v = dot(dir, qv) * inv;
                if (v < 0 || u + v > 1) continue;
                const double t = dot(e2, qv) * inv;
                if (t > 1e-9 && t < out.t[p]) {
                    out.t[p] = t;
                    out.face[p] = f;
                    out.bary[p] = {1 - u - v, u, v};
                }
            }
        }
    return out;
}

struct RasterAgreement {
    double coverage_mismatch = 0;  // fraction of all pixels
    double surface_mismatch = 0;   // fraction of pixels covered by both whose hit points differ
    double max_bary_error = 0;     // over pixels with the same face
    double max_bary_sum_error = 0;
};

inline scribtex::Vec3 hit_point(const scribtex::TexturedMesh& mesh, std::uint32_t f, double b0, double b1, double b2) {
    return mesh.corner(f, 0) * b0 + mesh.corner(f, 1) * b1 + mesh.corner(f, 2) * b2;
}

inline RasterAgreement compare(const scribtex::TexturedMesh& mesh, const scribtex::ViewFrame& frame,
                               const RayFrame& ray) {
    RasterAgreement a;
    std::size_t both = 0, cover_diff = 0, face_diff = 0;
    for (std::size_t p = 0; p < ray.face.size(); ++p) {
        const bool fr = frame.face_id[p] != scribtex::kBackground, rr = ray.face[p] != scribtex::kBackground;
        if (fr != rr) ++cover_diff;
        if (fr) {
            const auto& b = frame.bary[p];
            a.max_bary_sum_error = std::max(a.max_bary_sum_error, std::abs(b[0] + b[1] + b[2] - 1.0));
        }
        if (!(fr && rr)) continue;
        ++both;
        const auto& fb = frame.bary[p];
        const auto& rb = ray.bary[p];
        const scribtex::Vec3 hf = hit_point(mesh, frame.face_id[p], fb[0], fb[1], fb[2]);
        const scribtex::Vec3 hr = hit_point(mesh, ray.face[p], rb[0], rb[1], rb[2]);
        if (scribtex::length(hf - hr) > 1e-3) ++face_diff;
        if (frame.face_id[p] != ray.face[p]) continue;
        for (int k = 0; k < 3; ++k)
            a.max_bary_error = std::max(a.max_bary_error, std::abs(frame.bary[p][k] - ray.bary[p][k]));
    }
    a.coverage_mismatch = double(cover_diff) / ray.face.size();
    a.surface_mismatch = both ? double(face_diff) / both : 0.0;
    return a;
}

}  // namespace testing
