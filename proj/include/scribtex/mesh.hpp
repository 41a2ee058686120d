#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <span>
#include <vector>

#include "scribtex/image.hpp"
#include "scribtex/vec.hpp"

namespace scribtex {

struct Triangle {
    std::array<std::uint32_t, 3> v{};  // vertex indices
    std::array<std::uint32_t, 3> t{};  // uv indices
    friend bool operator==(const Triangle&, const Triangle&) = default;
};

using Island = std::vector<std::uint32_t>;

/// Triangle mesh with per-corner UVs and a single RGBA atlas. Immutable once
/// built by load_mesh / make_mesh; edits produce new atlas images.
struct TexturedMesh {
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    std::vector<Vec2> uvs;
    Image atlas;
    std::vector<Island> islands;
    /// island index of every triangle
    std::vector<std::uint32_t> triangle_island;

    int atlas_width() const { return atlas.width; }
    int atlas_height() const { return atlas.height; }
    Vec3 corner(std::uint32_t tri, int k) const { return vertices[triangles[tri].v[k]]; }
    Vec2 corner_uv(std::uint32_t tri, int k) const { return uvs[triangles[tri].t[k]]; }
    Vec3 face_normal(std::uint32_t tri) const;
};

struct MeshOptions {
    /// center at the origin and scale to a unit bounding sphere
    bool normalize = true;
};

/// Validates indices, wraps UVs outside [0,1] by their fractional part, optionally
/// normalizes, converts the atlas to RGBA and computes UV islands.
TexturedMesh make_mesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles,
                       std::vector<Vec2> uvs, Image atlas, MeshOptions opts = {});

/// Raw OBJ content before validation. Polygons are fan-triangulated from their
/// first corner.
struct ObjData {
    std::vector<Vec3> vertices;
    std::vector<Vec2> uvs;
    std::vector<Triangle> triangles;
};
ObjData parse_obj(std::istream& in);

TexturedMesh load_mesh(const std::filesystem::path& obj_path,
                       const std::filesystem::path& atlas_path, MeshOptions opts = {});

/// Writes <obj_path>, a sibling .mtl referencing the atlas, and the atlas PNG.
void save_mesh(const TexturedMesh& mesh, const std::filesystem::path& obj_path,
               const std::filesystem::path& atlas_path);

/// Union-find over triangles joined by a UV edge whose endpoints match within
/// 1e-6. Islands are sorted by their smallest triangle index.
std::vector<Island> compute_islands(const TexturedMesh& mesh);

struct TexelCoord {
    int x = 0, y = 0;
};

/// Texel containing a UV; v = 0 is the bottom row of the atlas image.
inline TexelCoord uv_to_texel(Vec2 uv, int w, int h) {
    int x = static_cast<int>(std::floor(uv.x * w));
    int y = static_cast<int>(std::floor((1.0 - uv.y) * h));
    x = x < 0 ? 0 : (x >= w ? w - 1 : x);
    y = y < 0 ? 0 : (y >= h ? h - 1 : y);
    return {x, y};
}

/// UV position in continuous texel coordinates (x right, y down).
inline Vec2 uv_to_texel_space(Vec2 uv, int w, int h) { return {uv.x * w, (1.0 - uv.y) * h}; }

/// Texels whose square overlaps (or touches) any of the given triangles in UV space.
TexelMask chart_coverage(const TexturedMesh& mesh, std::span<const std::uint32_t> triangles);
/// chart_coverage over every triangle of the given islands.
TexelMask island_coverage(const TexturedMesh& mesh, std::span<const std::uint32_t> islands);

/// Island label per texel (-1 where no chart). Texel centres inside a triangle take
/// that triangle's island; remaining overlapped texels take the lowest island.
std::vector<int> island_texel_labels(const TexturedMesh& mesh);

}  // namespace scribtex
