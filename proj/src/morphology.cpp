#include "scribtex/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "scribtex/error.hpp"

namespace scribtex {

namespace {

// Separable running max/min over rows then columns.
TexelMask square_filter(const TexelMask& m, int radius, bool dilate) {
    if (radius <= 0) return m;
    const int w = m.width, h = m.height;
    TexelMask tmp(w, h), out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
            bool v = !dilate;
            for (int k = x0; k <= x1; ++k) {
                const bool s = m.get(k, y);
                if (dilate && s) { v = true; break; }
                if (!dilate && !s) { v = false; break; }
            }
            tmp.set(x, y, v);
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
            bool v = !dilate;
            for (int k = y0; k <= y1; ++k) {
                const bool s = tmp.get(x, k);
                if (dilate && s) { v = true; break; }
                if (!dilate && !s) { v = false; break; }
            }
            out.set(x, y, v);
        }
    return out;
}

}  // namespace

TexelMask dilate_square(const TexelMask& m, int radius) { return square_filter(m, radius, true); }
TexelMask erode_square(const TexelMask& m, int radius) { return square_filter(m, radius, false); }

TexelMask close_square(const TexelMask& m, int radius) {
    return erode_square(dilate_square(m, radius), radius);
}

TexelMask erode_disk(const TexelMask& m, int radius) {
    if (radius < 0) throw Error(ErrorCode::Validation, "erosion radius must be >= 0");
    if (radius == 0) return m;
    std::vector<std::pair<int, int>> offsets;
    for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx)
            if (dx * dx + dy * dy <= radius * radius) offsets.emplace_back(dx, dy);
    TexelMask out(m.width, m.height);
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            if (!m.get(x, y)) continue;
            bool keep = true;
            for (auto [dx, dy] : offsets) {
                const int sx = x + dx, sy = y + dy;
                if (sx < 0 || sy < 0 || sx >= m.width || sy >= m.height || !m.get(sx, sy)) {
                    keep = false;
                    break;
                }
            }
            out.set(x, y, keep);
        }
    return out;
}

Components connected_components(const TexelMask& m) {
    Components cc;
    cc.labels.assign(m.bits.size(), -1);
    std::vector<int> stack;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x) {
            const int start = y * m.width + x;
            if (!m.bits[start] || cc.labels[start] >= 0) continue;
            const int label = cc.count++;
            cc.labels[start] = label;
            stack.push_back(start);
            while (!stack.empty()) {
                const int i = stack.back();
                stack.pop_back();
                const int cx = i % m.width, cy = i / m.width;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= m.width || ny >= m.height) continue;
                        const int j = ny * m.width + nx;
                        if (m.bits[j] && cc.labels[j] < 0) {
                            cc.labels[j] = label;
                            stack.push_back(j);
                        }
                    }
            }
        }
    return cc;
}

Image diffusion_fill(const Image& img, const TexelMask& fill, int relax_iterations) {
    if (fill.width != img.width || fill.height != img.height)
        throw Error(ErrorCode::Validation, "fill mask dimensions differ from image");
    const int w = img.width, h = img.height, nc = std::min(img.channels, 3);
    const std::size_t n = img.pixel_count();
    std::vector<float> value(n * 3, 0.0f);
    std::vector<std::uint8_t> known(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (fill.bits[i]) continue;
        known[i] = 1;
        for (int c = 0; c < nc; ++c) value[i * 3 + c] = img.data[i * img.channels + c];
    }
    const bool any_known = std::any_of(known.begin(), known.end(), [](auto k) { return k != 0; });
    if (!any_known) {
        std::array<double, 3> mean{};
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < nc; ++c) mean[c] += img.data[i * img.channels + c];
        for (std::size_t i = 0; i < n; ++i)
            for (int c = 0; c < nc; ++c) value[i * 3 + c] = static_cast<float>(mean[c] / static_cast<double>(n));
    } else {
        // Onion peel: each layer is the set of unknown pixels touching a known one.
        std::vector<int> frontier, next;
        auto touches_known = [&](int x, int y) {
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if ((dx || dy) && nx >= 0 && ny >= 0 && nx < w && ny < h && known[ny * w + nx]) return true;
                }
            return false;
        };
        std::vector<std::uint8_t> queued(n, 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int i = y * w + x;
                if (!known[i] && touches_known(x, y)) {
                    frontier.push_back(i);
                    queued[i] = 1;
                }
            }
        while (!frontier.empty()) {
            std::vector<std::array<float, 3>> layer(frontier.size());
            for (std::size_t k = 0; k < frontier.size(); ++k) {
                const int x = frontier[k] % w, y = frontier[k] / w;
                std::array<float, 3> sum{};
                int cnt = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        const int j = ny * w + nx;
                        if (!known[j]) continue;
                        for (int c = 0; c < 3; ++c) sum[c] += value[j * 3 + c];
                        ++cnt;
                    }
                for (int c = 0; c < 3; ++c) layer[k][c] = sum[c] / static_cast<float>(cnt);
            }
            for (std::size_t k = 0; k < frontier.size(); ++k) {
                known[frontier[k]] = 1;
                for (int c = 0; c < 3; ++c) value[frontier[k] * 3 + c] = layer[k][c];
            }
            next.clear();
            for (int i : frontier) {
                const int x = i % w, y = i / w;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx, ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        const int j = ny * w + nx;
                        if (!known[j] && !queued[j]) {
                            queued[j] = 1;
                            next.push_back(j);
                        }
                    }
            }
            std::sort(next.begin(), next.end());
            frontier.swap(next);
        }
        // Jacobi relaxation over the filled pixels, known pixels fixed.
        std::vector<int> filled;
        for (std::size_t i = 0; i < n; ++i)
            if (fill.bits[i]) filled.push_back(static_cast<int>(i));
        std::vector<float> scratch(filled.size() * 3);
        for (int it = 0; it < relax_iterations; ++it) {
            for (std::size_t k = 0; k < filled.size(); ++k) {
                const int x = filled[k] % w, y = filled[k] / w;
                std::array<float, 3> sum{};
                int cnt = 0;
                for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const int j = ny * w + nx;
                    for (int c = 0; c < 3; ++c) sum[c] += value[j * 3 + c];
                    ++cnt;
                }
                for (int c = 0; c < 3; ++c) scratch[k * 3 + c] = sum[c] / static_cast<float>(cnt);
            }
            for (std::size_t k = 0; k < filled.size(); ++k)
                for (int c = 0; c < 3; ++c) value[filled[k] * 3 + c] = scratch[k * 3 + c];
        }
    }
    Image out = img;
    for (std::size_t i = 0; i < n; ++i) {
        if (!fill.bits[i]) continue;
        for (int c = 0; c < nc; ++c)
            out.data[i * img.channels + c] =
                static_cast<std::uint8_t>(std::clamp(std::lround(value[i * 3 + c]), 0L, 255L));
        if (img.channels == 4) out.data[i * 4 + 3] = 255;
    }
    return out;
}

}  // namespace scribtex
