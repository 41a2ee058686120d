#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <random>
#include <string>

#include "scribtex/image.hpp"
#include "scribtex/mesh.hpp"
#include "scribtex/shapes.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
    fs::path path;
    TempDir() {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path = fs::temp_directory_path() /
               ("scribtex-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    fs::path operator/(const std::string& s) const { return path / s; }
};

inline scribtex::Image solid(int w, int h, scribtex::Rgb c) {
    scribtex::Image img(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img.put(x, y, c);
    return img;
}

/// Normalized cube with six separate charts on a 256^2 brown gradient atlas.
inline scribtex::TexturedMesh cube(int atlas_size = 256) {
    using namespace scribtex;
    TexturedMesh m = make_cube_charts(gradient_atlas(atlas_size, Rgb{150, 110, 70}, Rgb{95, 70, 45}));
    return make_mesh(m.vertices, m.triangles, m.uvs, m.atlas);
}

inline scribtex::TexturedMesh normalized(const scribtex::TexturedMesh& m) {
    return scribtex::make_mesh(m.vertices, m.triangles, m.uvs, m.atlas);
}

inline scribtex::TexelMask random_mask(std::mt19937& rng, int w, int h, double density) {
    scribtex::TexelMask m(w, h);
    std::bernoulli_distribution coin(density);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.set(x, y, coin(rng));
    return m;
}

/// Writes the demo cube (OBJ + atlas) and a red-scribble strokes file.
void write_cube_inputs(const fs::path& dir);

/// All-mock configuration with seed 42 and 256^2 generated images.
inline constexpr const char* kMockConfigToml =
    "seed = 42\nimage_size = 256\n"
    "[backends.chat]\nkind = \"mock\"\n[backends.gen]\nkind = \"mock\"\n"
    "[backends.inpaint]\nkind = \"mock\"\n[backends.seg]\nkind = \"mock\"\n";

/// Runs the scribtex CLI with `args` (shell syntax) and returns its exit status.
/// Output goes to `log` when given.
int run_cli(const std::string& args, const fs::path& log = {}, const std::string& env = {});

std::string read_text(const fs::path& p);

}  // namespace testing
