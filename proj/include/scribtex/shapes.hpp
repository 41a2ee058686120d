#pragma once

#include <vector>

#include "scribtex/mesh.hpp"

namespace scribtex {

// Procedural textured meshes for demos and tests. All are returned unnormalized
// (make_mesh with normalize = false); callers normalize as needed.

/// Unit-half-size cube, each face its own chart in a 3x2 grid with `margin`
/// texels of padding. Face order +x, -x, +y, -y, +z, -z.
TexturedMesh make_cube_charts(const Image& atlas, int margin = 4);
/// Cube with a single cross-shaped UV island (14 UV points).
TexturedMesh make_cube_cross(const Image& atlas);
/// Cube whose faces are quads in the OBJ sense (written as text for parser tests).
std::string cube_quads_obj();
/// Latitude-longitude sphere with a UV seam.
TexturedMesh make_uv_sphere(const Image& atlas, int n_lon = 32, int n_lat = 16);
TexturedMesh make_torus(const Image& atlas, double major = 1.0, double minor = 0.4, int n_major = 32,
                        int n_minor = 16);
/// Square in the z = 0 plane spanning [-s, s]^2 with UVs covering [0,1]^2.
TexturedMesh make_quad(const Image& atlas, double s = 1.0);

/// Checkerboard with `cells` squares per side alternating between two colors.
Image checker_atlas(int size, int cells, Rgb a, Rgb b);
/// Smooth two-tone gradient with mild deterministic variation.
Image gradient_atlas(int size, Rgb a, Rgb b);

}  // namespace scribtex
