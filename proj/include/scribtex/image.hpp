#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace scribtex {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
    friend auto operator<=>(const Rgb&, const Rgb&) = default;
};

/// Euclidean distance on the 0-255 scale.
double color_distance(double r0, double g0, double b0, Rgb c);
inline double color_distance(Rgb a, Rgb b) { return color_distance(a.r, a.g, a.b, b); }

/// Integer pixel rectangle, half-open: [x, x + w) x [y, y + h).
struct Rect {
    int x = 0, y = 0, w = 0, h = 0;
    int area() const { return w > 0 && h > 0 ? w * h : 0; }
    bool empty() const { return area() == 0; }
    bool contains(int px, int py) const { return px >= x && py >= y && px < x + w && py < y + h; }
    Rect intersect(const Rect& o) const;
    friend bool operator==(const Rect&, const Rect&) = default;
};

/// Row-major 8-bit image with 1 (mask), 3 (RGB) or 4 (RGBA) channels.
/// Masks store 0 or 255; any nonzero sample counts as set.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> data;

    Image() = default;
    Image(int w, int h, int c, std::uint8_t fill = 0);

    bool empty() const { return data.empty(); }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    std::size_t index(int x, int y) const {
        return (static_cast<std::size_t>(y) * width + x) * channels;
    }
    std::uint8_t& at(int x, int y, int c = 0) { return data[index(x, y) + c]; }
    std::uint8_t at(int x, int y, int c = 0) const { return data[index(x, y) + c]; }
    bool set(int x, int y) const { return data[index(x, y)] != 0; }

    Rgb rgb(int x, int y) const;
    void put(int x, int y, Rgb c);

    friend bool operator==(const Image&, const Image&) = default;
};

Image make_mask(int w, int h);
std::size_t count_set(const Image& mask);
/// Bounding box of nonzero samples (channel 0); empty Rect when none.
Rect mask_bbox(const Image& mask);

Image to_rgb(const Image& img);
Image to_rgba(const Image& img);
Image crop(const Image& img, const Rect& r);
Image resample_bilinear(const Image& img, int w, int h);
/// Per-channel mean over a rectangle (RGB of a 3/4-channel image).
std::array<double, 3> mean_rgb(const Image& img, const Rect& r);

/// One boolean per atlas texel.
struct TexelMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    TexelMask() = default;
    TexelMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

    bool get(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v = true) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    std::size_t count() const;
    bool empty() const { return count() == 0; }
    Rect bbox() const;

    TexelMask& operator|=(const TexelMask& o);
    TexelMask& operator&=(const TexelMask& o);
    /// this \ o
    TexelMask minus(const TexelMask& o) const;
    bool subset_of(const TexelMask& o) const;
    bool intersects(const TexelMask& o) const;

    Image to_image() const;
    static TexelMask from_image(const Image& mask);

    friend bool operator==(const TexelMask&, const TexelMask&) = default;
};

// PNG codec (libpng).
Image read_png(const std::filesystem::path& path);
Image decode_png(std::span<const std::uint8_t> bytes);
void write_png(const std::filesystem::path& path, const Image& img);
std::vector<std::uint8_t> encode_png(const Image& img);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace scribtex
