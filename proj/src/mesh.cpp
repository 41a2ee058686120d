#include "scribtex/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>

#include "scribtex/error.hpp"

namespace scribtex {

namespace {

constexpr double kUvTolerance = 1e-6;

struct UnionFind {
    std::vector<std::uint32_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
    std::uint32_t find(std::uint32_t a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    }
    void unite(std::uint32_t a, std::uint32_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

double wrap_unit(double v) {
    if (v >= 0.0 && v <= 1.0) return v;
    return v - std::floor(v);
}

}  // namespace

Vec3 TexturedMesh::face_normal(std::uint32_t tri) const {
    const Vec3 a = corner(tri, 0), b = corner(tri, 1), c = corner(tri, 2);
    return normalize(cross(b - a, c - a));
}

TexturedMesh make_mesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles,
                       std::vector<Vec2> uvs, Image atlas, MeshOptions opts) {
    if (atlas.width < 1 || atlas.height < 1)
        throw Error(ErrorCode::CorruptImage, "atlas must be at least 1x1");
    for (const auto& t : triangles)
        for (int k = 0; k < 3; ++k) {
            if (t.v[k] >= vertices.size())
                throw Error(ErrorCode::Validation, "triangle vertex index out of range");
            if (t.t[k] >= uvs.size())
                throw Error(ErrorCode::Validation, "triangle uv index out of range");
        }
    for (auto& uv : uvs) {
        if (!std::isfinite(uv.x) || !std::isfinite(uv.y))
            throw Error(ErrorCode::Validation, "non-finite texture coordinate");
        uv = {wrap_unit(uv.x), wrap_unit(uv.y)};
    }
    if (opts.normalize && !vertices.empty()) {
        Vec3 lo = vertices.front(), hi = vertices.front();
        for (const auto& p : vertices) {
            lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
            hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
        }
        const Vec3 center = (lo + hi) * 0.5;
        double radius = 0;
        for (auto& p : vertices) {
            p = p - center;
            radius = std::max(radius, length(p));
        }
        if (radius > 0)
            for (auto& p : vertices) p = p * (1.0 / radius);
    }
    TexturedMesh mesh;
    mesh.vertices = std::move(vertices);
    mesh.triangles = std::move(triangles);
    mesh.uvs = std::move(uvs);
    mesh.atlas = to_rgba(atlas);
    mesh.islands = compute_islands(mesh);
    mesh.triangle_island.assign(mesh.triangles.size(), 0);
    for (std::uint32_t i = 0; i < mesh.islands.size(); ++i)
        for (auto t : mesh.islands[i]) mesh.triangle_island[t] = i;
    return mesh;
}

std::vector<Island> compute_islands(const TexturedMesh& mesh) {
    const auto& uvs = mesh.uvs;
    // Cluster uv indices that coincide within tolerance.
    UnionFind uv_sets(uvs.size());
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> cells;
    auto cell_key = [](long long cx, long long cy) {
        return (static_cast<std::uint64_t>(cx) << 32) ^ static_cast<std::uint64_t>(cy & 0xFFFFFFFF);
    };
    for (std::uint32_t i = 0; i < uvs.size(); ++i) {
        const long long cx = std::llround(uvs[i].x / kUvTolerance);
        const long long cy = std::llround(uvs[i].y / kUvTolerance);
        for (long long dx = -1; dx <= 1; ++dx)
            for (long long dy = -1; dy <= 1; ++dy) {
                auto it = cells.find(cell_key(cx + dx, cy + dy));
                if (it == cells.end()) continue;
                for (auto j : it->second)
                    if (std::abs(uvs[i].x - uvs[j].x) <= kUvTolerance &&
                        std::abs(uvs[i].y - uvs[j].y) <= kUvTolerance)
                        uv_sets.unite(i, j);
            }
        cells[cell_key(cx, cy)].push_back(i);
    }

    UnionFind tris(mesh.triangles.size());
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> edge_owner;
    for (std::uint32_t t = 0; t < mesh.triangles.size(); ++t)
        for (int k = 0; k < 3; ++k) {
            std::uint32_t a = uv_sets.find(mesh.triangles[t].t[k]);
            std::uint32_t b = uv_sets.find(mesh.triangles[t].t[(k + 1) % 3]);
            if (a == b) continue;
            if (a > b) std::swap(a, b);
            auto [it, inserted] = edge_owner.emplace(std::pair{a, b}, t);
            if (!inserted) tris.unite(t, it->second);
        }

    std::map<std::uint32_t, Island> by_root;
    for (std::uint32_t t = 0; t < mesh.triangles.size(); ++t) by_root[tris.find(t)].push_back(t);
    // Roots are the smallest member, so map order is the smallest-triangle order.
    std::vector<Island> islands;
    islands.reserve(by_root.size());
    for (auto& [root, members] : by_root) islands.push_back(std::move(members));
    return islands;
}

namespace {

bool parse_double(std::string_view tok, double& out) {
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> toks;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
        if (i > start) toks.push_back(line.substr(start, i - start));
    }
    return toks;
}

std::uint32_t resolve_index(std::string_view tok, std::size_t count, int line_no) {
    long long idx = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), idx);
    if (ec != std::errc{} || ptr != tok.data() + tok.size() || idx == 0)
        throw Error(ErrorCode::Validation, "bad face index at line " + std::to_string(line_no));
    if (idx < 0) idx += static_cast<long long>(count);
    else idx -= 1;
    if (idx < 0 || idx >= static_cast<long long>(count))
        throw Error(ErrorCode::Validation, "face index out of range at line " + std::to_string(line_no));
    return static_cast<std::uint32_t>(idx);
}

}  // namespace

ObjData parse_obj(std::istream& in) {
    ObjData obj;
    std::set<std::string> materials_with_faces;
    std::string material;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const auto toks = split_ws(line);
        if (toks.empty()) continue;
        const auto& kw = toks[0];
        if (kw == "v") {
            Vec3 p;
            if (toks.size() < 4 || !parse_double(toks[1], p.x) || !parse_double(toks[2], p.y) ||
                !parse_double(toks[3], p.z))
                throw Error(ErrorCode::Validation, "bad vertex at line " + std::to_string(line_no));
            obj.vertices.push_back(p);
        } else if (kw == "vt") {
            Vec2 uv;
            if (toks.size() < 2 || !parse_double(toks[1], uv.x))
                throw Error(ErrorCode::Validation, "bad texture coordinate at line " + std::to_string(line_no));
            if (toks.size() >= 3 && !parse_double(toks[2], uv.y))
                throw Error(ErrorCode::Validation, "bad texture coordinate at line " + std::to_string(line_no));
            obj.uvs.push_back(uv);
        } else if (kw == "usemtl") {
            material = toks.size() > 1 ? std::string(toks[1]) : std::string();
        } else if (kw == "f") {
            if (toks.size() < 4)
                throw Error(ErrorCode::NonTriangleFace,
                            "face with fewer than 3 corners at line " + std::to_string(line_no));
            std::vector<std::pair<std::uint32_t, std::uint32_t>> corners;
            for (std::size_t k = 1; k < toks.size(); ++k) {
                const auto tok = toks[k];
                const auto s1 = tok.find('/');
                if (s1 == std::string_view::npos)
                    throw Error(ErrorCode::MissingUVs, "face corner without uv at line " + std::to_string(line_no));
                const auto s2 = tok.find('/', s1 + 1);
                const auto vt = tok.substr(s1 + 1, s2 == std::string_view::npos ? std::string_view::npos : s2 - s1 - 1);
                if (vt.empty())
                    throw Error(ErrorCode::MissingUVs, "face corner without uv at line " + std::to_string(line_no));
                corners.emplace_back(resolve_index(tok.substr(0, s1), obj.vertices.size(), line_no),
                                     resolve_index(vt, obj.uvs.size(), line_no));
            }
            for (std::size_t k = 1; k + 1 < corners.size(); ++k) {
                Triangle t;
                t.v = {corners[0].first, corners[k].first, corners[k + 1].first};
                t.t = {corners[0].second, corners[k].second, corners[k + 1].second};
                obj.triangles.push_back(t);
            }
            materials_with_faces.insert(material);
        }
    }
    if (materials_with_faces.size() > 1)
        throw Error(ErrorCode::MultiAtlasUnsupported, "mesh uses more than one material");
    if (obj.uvs.empty()) throw Error(ErrorCode::MissingUVs, "mesh has no texture coordinates");
    return obj;
}

TexturedMesh load_mesh(const std::filesystem::path& obj_path,
                       const std::filesystem::path& atlas_path, MeshOptions opts) {
    std::ifstream in(obj_path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + obj_path.string());
    ObjData obj = parse_obj(in);
    Image atlas = read_png(atlas_path);
    return make_mesh(std::move(obj.vertices), std::move(obj.triangles), std::move(obj.uvs),
                     std::move(atlas), opts);
}

void save_mesh(const TexturedMesh& mesh, const std::filesystem::path& obj_path,
               const std::filesystem::path& atlas_path) {
    auto mtl_path = obj_path;
    mtl_path.replace_extension(".mtl");
    {
        std::ofstream mtl(mtl_path);
        if (!mtl) throw Error(ErrorCode::Io, "cannot write " + mtl_path.string());
        mtl << "newmtl atlas\nKd 1 1 1\nmap_Kd " << atlas_path.filename().string() << "\n";
    }
    std::ofstream out(obj_path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + obj_path.string());
    out << "mtllib " << mtl_path.filename().string() << "\n";
    char buf[128];
    for (const auto& p : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", p.x, p.y, p.z);
        out << buf;
    }
    for (const auto& uv : mesh.uvs) {
        std::snprintf(buf, sizeof buf, "vt %.17g %.17g\n", uv.x, uv.y);
        out << buf;
    }
    out << "usemtl atlas\n";
    for (const auto& t : mesh.triangles)
        out << "f " << t.v[0] + 1 << '/' << t.t[0] + 1 << ' ' << t.v[1] + 1 << '/' << t.t[1] + 1
            << ' ' << t.v[2] + 1 << '/' << t.t[2] + 1 << "\n";
    if (!out) throw Error(ErrorCode::Io, "short write to " + obj_path.string());
    write_png(atlas_path, mesh.atlas);
}

namespace {

// Separating-axis test between texel square [x,x+1]x[y,y+1] and a triangle,
// closed on both sides so touching counts.
bool square_overlaps_triangle(int x, int y, const std::array<Vec2, 3>& p) {
    const Vec2 corners[4] = {{double(x), double(y)}, {x + 1.0, double(y)}, {double(x), y + 1.0}, {x + 1.0, y + 1.0}};
    for (int e = 0; e < 3; ++e) {
        const Vec2 a = p[e], b = p[(e + 1) % 3], c = p[(e + 2) % 3];
        const Vec2 n{-(b.y - a.y), b.x - a.x};
        if (n.x == 0 && n.y == 0) continue;
        const double ta = n.x * a.x + n.y * a.y, tc = n.x * c.x + n.y * c.y;
        const double tri_lo = std::min(ta, tc), tri_hi = std::max(ta, tc);
        double lo = 1e300, hi = -1e300;
        for (const auto& q : corners) {
            const double t = n.x * q.x + n.y * q.y;
            lo = std::min(lo, t);
            hi = std::max(hi, t);
        }
        if (hi < tri_lo || lo > tri_hi) return false;
    }
    return true;
}

template <typename F>
void for_each_overlapped_texel(const TexturedMesh& mesh, std::uint32_t tri, F&& f) {
    const int w = mesh.atlas_width(), h = mesh.atlas_height();
    std::array<Vec2, 3> p;
    for (int k = 0; k < 3; ++k) p[k] = uv_to_texel_space(mesh.corner_uv(tri, k), w, h);
    const double minx = std::min({p[0].x, p[1].x, p[2].x}), maxx = std::max({p[0].x, p[1].x, p[2].x});
    const double miny = std::min({p[0].y, p[1].y, p[2].y}), maxy = std::max({p[0].y, p[1].y, p[2].y});
    const int x0 = std::max(0, static_cast<int>(std::floor(minx)) - 1);
    const int x1 = std::min(w - 1, static_cast<int>(std::floor(maxx)));
    const int y0 = std::max(0, static_cast<int>(std::floor(miny)) - 1);
    const int y1 = std::min(h - 1, static_cast<int>(std::floor(maxy)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            if (x + 1 < minx || x > maxx || y + 1 < miny || y > maxy) continue;
            if (square_overlaps_triangle(x, y, p)) f(x, y);
        }
}

bool center_inside(double cx, double cy, const std::array<Vec2, 3>& p) {
    double d[3];
    for (int e = 0; e < 3; ++e) {
        const Vec2 a = p[e], b = p[(e + 1) % 3];
        d[e] = (b.x - a.x) * (cy - a.y) - (b.y - a.y) * (cx - a.x);
    }
    const bool neg = d[0] < 0 || d[1] < 0 || d[2] < 0;
    const bool pos = d[0] > 0 || d[1] > 0 || d[2] > 0;
    return !(neg && pos);
}

}  // namespace

TexelMask chart_coverage(const TexturedMesh& mesh, std::span<const std::uint32_t> triangles) {
    TexelMask out(mesh.atlas_width(), mesh.atlas_height());
    for (auto t : triangles) for_each_overlapped_texel(mesh, t, [&](int x, int y) { out.set(x, y); });
    return out;
}

TexelMask island_coverage(const TexturedMesh& mesh, std::span<const std::uint32_t> islands) {
    TexelMask out(mesh.atlas_width(), mesh.atlas_height());
    for (auto i : islands)
        for (auto t : mesh.islands.at(i)) for_each_overlapped_texel(mesh, t, [&](int x, int y) { out.set(x, y); });
    return out;
}

std::vector<int> island_texel_labels(const TexturedMesh& mesh) {
    const int w = mesh.atlas_width(), h = mesh.atlas_height();
    std::vector<int> labels(static_cast<std::size_t>(w) * h, -1);
    for (std::uint32_t t = 0; t < mesh.triangles.size(); ++t) {
        std::array<Vec2, 3> p;
        for (int k = 0; k < 3; ++k) p[k] = uv_to_texel_space(mesh.corner_uv(t, k), w, h);
        const int island = static_cast<int>(mesh.triangle_island[t]);
        for_each_overlapped_texel(mesh, t, [&](int x, int y) {
            auto& l = labels[static_cast<std::size_t>(y) * w + x];
            if (l < 0 && center_inside(x + 0.5, y + 0.5, p)) l = island;
        });
    }
    for (std::uint32_t i = 0; i < mesh.islands.size(); ++i)
        for (auto t : mesh.islands[i])
            for_each_overlapped_texel(mesh, t, [&](int x, int y) {
                auto& l = labels[static_cast<std::size_t>(y) * w + x];
                if (l < 0) l = static_cast<int>(i);
            });
    return labels;
}

}  // namespace scribtex
