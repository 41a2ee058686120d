#include <doctest.h>

#include <queue>
#include <random>

#include "scribtex/morphology.hpp"
#include "support.hpp"

using namespace scribtex;

namespace {

// Oracles written directly from the definitions.
TexelMask brute_erode_disk(const TexelMask& m, int r) {
    TexelMask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            bool keep = true;
            for (int dy = -r; dy <= r && keep; ++dy)
                for (int dx = -r; dx <= r && keep; ++dx) {
                    if (dx * dx + dy * dy > r * r) continue;
                    const int xx = x + dx, yy = y + dy;
                    keep = xx >= 0 && yy >= 0 && xx < m.width && yy < m.height && m.get(xx, yy);
                }
            out.set(x, y, keep);
        }
    return out;
}

TexelMask brute_square(const TexelMask& m, int r, bool dilate) {
    TexelMask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            bool any = false, all = true;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    const int xx = x + dx, yy = y + dy;
                    if (xx < 0 || yy < 0 || xx >= m.width || yy >= m.height) continue;
                    any |= m.get(xx, yy);
                    all &= m.get(xx, yy);
                }
            out.set(x, y, dilate ? any : all);
        }
    return out;
}

int bfs_components(const TexelMask& m) {
    std::vector<int> seen(m.bits.size(), 0);
    int n = 0;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            if (!m.get(x, y) || seen[y * m.width + x]) continue;
            ++n;
            std::queue<std::pair<int, int>> q;
            q.push({x, y});
            seen[y * m.width + x] = 1;
            while (!q.empty()) {
                auto [cx, cy] = q.front();
                q.pop();
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xx = cx + dx, yy = cy + dy;
                        if (xx < 0 || yy < 0 || xx >= m.width || yy >= m.height) continue;
                        if (m.get(xx, yy) && !seen[yy * m.width + xx]) {
                            seen[yy * m.width + xx] = 1;
                            q.push({xx, yy});
                        }
                    }
            }
        }
    return n;
}

}  // namespace

TEST_CASE("disk erosion matches the definition") {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        TexelMask m = testing::random_mask(rng, 31, 17, 0.85);
        const int r = trial % 4;
        CHECK(erode_disk(m, r) == brute_erode_disk(m, r));
    }
}

TEST_CASE("disk erosion of a 30x20 rectangle leaves the 26x16 interior") {
    TexelMask m(40, 30);
    for (int y = 5; y < 25; ++y)
        for (int x = 5; x < 35; ++x) m.set(x, y);
    const TexelMask e = erode_disk(m, 2);
    CHECK(e.count() == 26 * 16);
    CHECK(e.bbox() == Rect{7, 7, 26, 16});
    CHECK(e == brute_erode_disk(m, 2));
}

TEST_CASE("square dilation and erosion ignore out-of-bounds samples") {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        TexelMask m = testing::random_mask(rng, 23, 19, 0.3 + 0.05 * trial);
        CHECK(dilate_square(m, 1) == brute_square(m, 1, true));
        CHECK(erode_square(m, 2) == brute_square(m, 2, false));
        CHECK(m.subset_of(close_square(m)));
    }
}

TEST_CASE("closing fills single-texel holes, including at the border") {
    TexelMask m(5, 5);
    for (auto& b : m.bits) b = 1;
    m.set(2, 2, false);
    m.set(0, 0, false);
    const TexelMask c = close_square(m);
    CHECK(c.get(2, 2));
    CHECK(c.get(0, 0));
}

TEST_CASE("connected components are 8-connected and raster ordered") {
    std::mt19937 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        TexelMask m = testing::random_mask(rng, 25, 25, 0.35);
        CHECK(connected_components(m).count == bfs_components(m));
    }
    TexelMask diag(3, 3);
    diag.set(0, 0);
    diag.set(1, 1);
    diag.set(2, 0);
    const Components c = connected_components(diag);
    CHECK(c.count == 1);
    CHECK(c.labels[0] == 0);
}

TEST_CASE("diffusion fill: a single hole in uniform gray becomes gray") {
    Image img = testing::solid(9, 9, Rgb{128, 128, 128});
    img.put(4, 4, Rgb{255, 0, 0});
    TexelMask hole(9, 9);
    hole.set(4, 4);
    const Image out = diffusion_fill(img, hole);
    CHECK(out.rgb(4, 4) == Rgb{128, 128, 128});
}

TEST_CASE("diffusion fill leaves unmasked pixels alone and falls back to the mean") {
    std::mt19937 rng(2);
    Image img(16, 16, 3);
    for (auto& b : img.data) b = static_cast<std::uint8_t>(rng());
    TexelMask ring(16, 16);
    for (int y = 4; y < 12; ++y)
        for (int x = 4; x < 12; ++x) ring.set(x, y);
    const Image out = diffusion_fill(img, ring);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            if (!ring.get(x, y)) CHECK(out.rgb(x, y) == img.rgb(x, y));

    TexelMask all(16, 16);
    for (auto& b : all.bits) b = 1;
    const Image flat = diffusion_fill(img, all);
    const auto m = mean_rgb(img, Rect{0, 0, 16, 16});
    CHECK(std::abs(flat.rgb(3, 3).r - m[0]) <= 1.0);
}
