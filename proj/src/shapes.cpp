#include "scribtex/shapes.hpp"

#include <cmath>
#include <algorithm>
#include <map>
#include <numbers>

namespace scribtex {

namespace {

struct Builder {
    std::vector<Vec3> v;
    std::vector<Vec2> t;
    std::vector<Triangle> f;

    std::uint32_t vert(Vec3 p) {
        v.push_back(p);
        return static_cast<std::uint32_t>(v.size() - 1);
    }
    std::uint32_t uv(Vec2 p) {
        t.push_back(p);
        return static_cast<std::uint32_t>(t.size() - 1);
    }
    // quad a b c d counter-clockwise seen from outside
    void quad(std::array<std::uint32_t, 4> vi, std::array<std::uint32_t, 4> ti) {
        f.push_back({{vi[0], vi[1], vi[2]}, {ti[0], ti[1], ti[2]}});
        f.push_back({{vi[0], vi[2], vi[3]}, {ti[0], ti[2], ti[3]}});
    }
    TexturedMesh build(const Image& atlas) {
        return make_mesh(std::move(v), std::move(f), std::move(t), atlas, MeshOptions{false});
    }
};

// Corner order per face: bottom-left, bottom-right, top-right, top-left as seen from outside.
const std::array<std::array<Vec3, 4>, 6> kCubeFaces = {{
    {{{1, -1, 1}, {1, -1, -1}, {1, 1, -1}, {1, 1, 1}}},      // +x
    {{{-1, -1, -1}, {-1, -1, 1}, {-1, 1, 1}, {-1, 1, -1}}},  // -x
    {{{-1, 1, 1}, {1, 1, 1}, {1, 1, -1}, {-1, 1, -1}}},      // +y
    {{{-1, -1, -1}, {1, -1, -1}, {1, -1, 1}, {-1, -1, 1}}},  // -y
    {{{-1, -1, 1}, {1, -1, 1}, {1, 1, 1}, {-1, 1, 1}}},      // +z
    {{{1, -1, -1}, {-1, -1, -1}, {-1, 1, -1}, {1, 1, -1}}},  // -z
}};

}  // namespace

TexturedMesh make_cube_charts(const Image& atlas, int margin) {
    Builder b;
    std::array<std::uint32_t, 8> corner{};
    for (int i = 0; i < 8; ++i) corner[i] = b.vert({i & 1 ? 1.0 : -1.0, i & 2 ? 1.0 : -1.0, i & 4 ? 1.0 : -1.0});
    auto corner_index = [&](Vec3 p) { return corner[(p.x > 0 ? 1 : 0) | (p.y > 0 ? 2 : 0) | (p.z > 0 ? 4 : 0)]; };
    const double W = atlas.width, H = atlas.height;
    for (int face = 0; face < 6; ++face) {
        const int col = face % 3, row = face / 3;
        // cell in texel space (y down); UV v is up
        const double x0 = col * W / 3 + margin, x1 = (col + 1) * W / 3 - margin;
        const double y0 = row * H / 2 + margin, y1 = (row + 1) * H / 2 - margin;
        const double u0 = x0 / W, u1 = x1 / W, v0 = 1.0 - y1 / H, v1 = 1.0 - y0 / H;
        std::array<std::uint32_t, 4> vi, ti;
        const Vec2 uvs[4] = {{u0, v0}, {u1, v0}, {u1, v1}, {u0, v1}};
        for (int k = 0; k < 4; ++k) {
            vi[k] = corner_index(kCubeFaces[face][k]);
            ti[k] = b.uv(uvs[k]);
        }
        b.quad(vi, ti);
    }
    return b.build(atlas);
}

TexturedMesh make_cube_cross(const Image& atlas) {
    // Cross layout on a 4x3 grid of cells:
    //        [+y]
    //   [-x] [+z] [+x] [-z]
    //        [-y]
    Builder b;
    std::array<std::uint32_t, 8> corner{};
    for (int i = 0; i < 8; ++i) corner[i] = b.vert({i & 1 ? 1.0 : -1.0, i & 2 ? 1.0 : -1.0, i & 4 ? 1.0 : -1.0});
    auto ci = [&](double x, double y, double z) { return corner[(x > 0 ? 1 : 0) | (y > 0 ? 2 : 0) | (z > 0 ? 4 : 0)]; };
    std::map<std::pair<int, int>, std::uint32_t> grid;  // lattice point -> uv index
    auto uv = [&](int gx, int gy) {
        auto [it, fresh] = grid.try_emplace({gx, gy}, 0);
        if (fresh) it->second = b.uv({gx / 4.0, gy / 3.0});
        return it->second;
    };
    // lattice (gx, gy) with gy up. Each face: bl, br, tr, tl.
    b.quad({ci(-1, -1, 1), ci(1, -1, 1), ci(1, 1, 1), ci(-1, 1, 1)}, {uv(1, 1), uv(2, 1), uv(2, 2), uv(1, 2)});     // +z
    b.quad({ci(1, -1, 1), ci(1, -1, -1), ci(1, 1, -1), ci(1, 1, 1)}, {uv(2, 1), uv(3, 1), uv(3, 2), uv(2, 2)});     // +x
    b.quad({ci(1, -1, -1), ci(-1, -1, -1), ci(-1, 1, -1), ci(1, 1, -1)}, {uv(3, 1), uv(4, 1), uv(4, 2), uv(3, 2)}); // -z
    b.quad({ci(-1, -1, -1), ci(-1, -1, 1), ci(-1, 1, 1), ci(-1, 1, -1)}, {uv(0, 1), uv(1, 1), uv(1, 2), uv(0, 2)}); // -x
    b.quad({ci(-1, 1, 1), ci(1, 1, 1), ci(1, 1, -1), ci(-1, 1, -1)}, {uv(1, 2), uv(2, 2), uv(2, 3), uv(1, 3)});     // +y
    b.quad({ci(-1, -1, -1), ci(1, -1, -1), ci(1, -1, 1), ci(-1, -1, 1)}, {uv(1, 0), uv(2, 0), uv(2, 1), uv(1, 1)}); // -y
    return b.build(atlas);
}

std::string cube_quads_obj() {
    return "# cube with quad faces\n"
           "v -1 -1 -1\nv 1 -1 -1\nv -1 1 -1\nv 1 1 -1\nv -1 -1 1\nv 1 -1 1\nv -1 1 1\nv 1 1 1\n"
           "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\n"
           "f 5/1 6/2 8/3 7/4\n"
           "f 6/1 2/2 4/3 8/4\n"
           "f 2/1 1/2 3/3 4/4\n"
           "f 1/1 5/2 7/3 3/4\n"
           "f 7/1 8/2 4/3 3/4\n"
           "f 1/1 2/2 6/3 5/4\n";
}

TexturedMesh make_uv_sphere(const Image& atlas, int n_lon, int n_lat) {
    Builder b;
    const double pi = std::numbers::pi;
    std::vector<std::uint32_t> vid((n_lon + 1) * (n_lat + 1)), tid((n_lon + 1) * (n_lat + 1));
    for (int j = 0; j <= n_lat; ++j)
        for (int i = 0; i <= n_lon; ++i) {
            const double lon = 2 * pi * i / n_lon, lat = pi * j / n_lat - pi / 2;
            const int k = j * (n_lon + 1) + i;
            if (i == n_lon) vid[k] = vid[j * (n_lon + 1)];
            else if ((j == 0 || j == n_lat) && i > 0) vid[k] = vid[j * (n_lon + 1)];
            else vid[k] = b.vert({std::cos(lat) * std::sin(lon), std::sin(lat), std::cos(lat) * std::cos(lon)});
            tid[k] = b.uv({double(i) / n_lon, double(j) / n_lat});
        }
    for (int j = 0; j < n_lat; ++j)
        for (int i = 0; i < n_lon; ++i) {
            const int a = j * (n_lon + 1) + i, c = a + n_lon + 1;
            if (j > 0) b.f.push_back({{vid[a], vid[a + 1], vid[c + 1]}, {tid[a], tid[a + 1], tid[c + 1]}});
            if (j < n_lat - 1) b.f.push_back({{vid[a], vid[c + 1], vid[c]}, {tid[a], tid[c + 1], tid[c]}});
        }
    return b.build(atlas);
}

TexturedMesh make_torus(const Image& atlas, double major, double minor, int n_major, int n_minor) {
    Builder b;
    const double pi = std::numbers::pi;
    std::vector<std::uint32_t> vid(n_major * n_minor);
    for (int i = 0; i < n_major; ++i)
        for (int j = 0; j < n_minor; ++j) {
            const double a = 2 * pi * i / n_major, c = 2 * pi * j / n_minor;
            const double r = major + minor * std::cos(c);
            vid[i * n_minor + j] = b.vert({r * std::sin(a), minor * std::sin(c), r * std::cos(a)});
        }
    std::vector<std::uint32_t> tid((n_major + 1) * (n_minor + 1));
    for (int i = 0; i <= n_major; ++i)
        for (int j = 0; j <= n_minor; ++j) tid[i * (n_minor + 1) + j] = b.uv({double(i) / n_major, double(j) / n_minor});
    for (int i = 0; i < n_major; ++i)
        for (int j = 0; j < n_minor; ++j) {
            auto V = [&](int ii, int jj) { return vid[(ii % n_major) * n_minor + (jj % n_minor)]; };
            auto T = [&](int ii, int jj) { return tid[ii * (n_minor + 1) + jj]; };
            b.quad({V(i, j), V(i + 1, j), V(i + 1, j + 1), V(i, j + 1)}, {T(i, j), T(i + 1, j), T(i + 1, j + 1), T(i, j + 1)});
        }
    return b.build(atlas);
}

TexturedMesh make_quad(const Image& atlas, double s) {
    Builder b;
    const auto v0 = b.vert({-s, -s, 0}), v1 = b.vert({s, -s, 0}), v2 = b.vert({s, s, 0}), v3 = b.vert({-s, s, 0});
    const auto t0 = b.uv({0, 0}), t1 = b.uv({1, 0}), t2 = b.uv({1, 1}), t3 = b.uv({0, 1});
    b.quad({v0, v1, v2, v3}, {t0, t1, t2, t3});
    return b.build(atlas);
}

Image checker_atlas(int size, int cells, Rgb a, Rgb b) {
    Image img(size, size, 3);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) img.put(x, y, ((x * cells / size) + (y * cells / size)) % 2 ? b : a);
    return img;
}

Image gradient_atlas(int size, Rgb a, Rgb b) {
    Image img(size, size, 3);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double t = double(y) / std::max(1, size - 1);
            const double wobble = 6.0 * std::sin(x * 0.21) * std::cos(y * 0.17);
            auto mix = [&](int p, int q) {
                return static_cast<std::uint8_t>(std::clamp(std::lround(p + (q - p) * t + wobble), 0L, 255L));
            };
            img.put(x, y, Rgb{mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)});
        }
    return img;
}

}  // namespace scribtex
