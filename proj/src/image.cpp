#include "scribtex/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "scribtex/error.hpp"

namespace scribtex {

double color_distance(double r0, double g0, double b0, Rgb c) {
    const double dr = r0 - c.r, dg = g0 - c.g, db = b0 - c.b;
    return std::sqrt(dr * dr + dg * dg + db * db);
}

Rect Rect::intersect(const Rect& o) const {
    const int x0 = std::max(x, o.x), y0 = std::max(y, o.y);
    const int x1 = std::min(x + w, o.x + o.w), y1 = std::min(y + h, o.y + o.h);
    if (x1 <= x0 || y1 <= y0) return {};
    return {x0, y0, x1 - x0, y1 - y0};
}

Image::Image(int w, int h, int c, std::uint8_t fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * h * c, fill) {
    if (w < 0 || h < 0 || (c != 1 && c != 3 && c != 4))
        throw Error(ErrorCode::Validation, "invalid image shape");
}

Rgb Image::rgb(int x, int y) const {
    const auto i = index(x, y);
    if (channels < 3) return {data[i], data[i], data[i]};
    return {data[i], data[i + 1], data[i + 2]};
}

void Image::put(int x, int y, Rgb c) {
    const auto i = index(x, y);
    if (channels < 3) {
        data[i] = static_cast<std::uint8_t>((c.r + c.g + c.b) / 3);
        return;
    }
    data[i] = c.r;
    data[i + 1] = c.g;
    data[i + 2] = c.b;
    if (channels == 4) data[i + 3] = 255;
}

Image make_mask(int w, int h) { return Image(w, h, 1, 0); }

std::size_t count_set(const Image& mask) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.pixel_count(); ++i)
        if (mask.data[i * mask.channels] != 0) ++n;
    return n;
}

Rect mask_bbox(const Image& mask) {
    int x0 = mask.width, y0 = mask.height, x1 = -1, y1 = -1;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.set(x, y)) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) return {};
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

Image to_rgb(const Image& img) {
    if (img.channels == 3) return img;
    Image out(img.width, img.height, 3);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.put(x, y, img.rgb(x, y));
    return out;
}

Image to_rgba(const Image& img) {
    if (img.channels == 4) return img;
    Image out(img.width, img.height, 4, 255);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.put(x, y, img.rgb(x, y));
    return out;
}

Image crop(const Image& img, const Rect& r) {
    const Rect c = r.intersect({0, 0, img.width, img.height});
    Image out(c.w, c.h, img.channels);
    for (int y = 0; y < c.h; ++y)
        std::copy_n(img.data.begin() + static_cast<std::ptrdiff_t>(img.index(c.x, c.y + y)),
                    static_cast<std::size_t>(c.w) * img.channels,
                    out.data.begin() + static_cast<std::ptrdiff_t>(out.index(0, y)));
    return out;
}

Image resample_bilinear(const Image& img, int w, int h) {
    if (img.width == w && img.height == h) return img;
    Image out(w, h, img.channels);
    const double sx = static_cast<double>(img.width) / w;
    const double sy = static_cast<double>(img.height) / h;
    for (int y = 0; y < h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double ty = fy - y0;
        for (int x = 0; x < w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double tx = fx - x0;
            for (int c = 0; c < img.channels; ++c) {
                const double top = img.at(x0, y0, c) * (1 - tx) + img.at(x1, y0, c) * tx;
                const double bot = img.at(x0, y1, c) * (1 - tx) + img.at(x1, y1, c) * tx;
                out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(top * (1 - ty) + bot * ty));
            }
        }
    }
    return out;
}

std::array<double, 3> mean_rgb(const Image& img, const Rect& r) {
    const Rect c = r.intersect({0, 0, img.width, img.height});
    std::array<double, 3> sum{};
    if (c.empty()) return sum;
    for (int y = c.y; y < c.y + c.h; ++y)
        for (int x = c.x; x < c.x + c.w; ++x) {
            const Rgb p = img.rgb(x, y);
            sum[0] += p.r;
            sum[1] += p.g;
            sum[2] += p.b;
        }
    for (auto& s : sum) s /= c.area();
    return sum;
}

std::size_t TexelMask::count() const {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
}

Rect TexelMask::bbox() const {
    int x0 = width, y0 = height, x1 = -1, y1 = -1;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            if (get(x, y)) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
    if (x1 < 0) return {};
    return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

static void require_same_dims(const TexelMask& a, const TexelMask& b) {
    if (a.width != b.width || a.height != b.height)
        throw Error(ErrorCode::Validation, "texel mask dimensions differ");
}

TexelMask& TexelMask::operator|=(const TexelMask& o) {
    require_same_dims(*this, o);
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = (bits[i] || o.bits[i]) ? 1 : 0;
    return *this;
}

TexelMask& TexelMask::operator&=(const TexelMask& o) {
    require_same_dims(*this, o);
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = (bits[i] && o.bits[i]) ? 1 : 0;
    return *this;
}

TexelMask TexelMask::minus(const TexelMask& o) const {
    require_same_dims(*this, o);
    TexelMask out = *this;
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (o.bits[i]) out.bits[i] = 0;
    return out;
}

bool TexelMask::subset_of(const TexelMask& o) const {
    require_same_dims(*this, o);
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i] && !o.bits[i]) return false;
    return true;
}

bool TexelMask::intersects(const TexelMask& o) const {
    require_same_dims(*this, o);
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i] && o.bits[i]) return true;
    return false;
}

Image TexelMask::to_image() const {
    Image out(width, height, 1);
    for (std::size_t i = 0; i < bits.size(); ++i) out.data[i] = bits[i] ? 255 : 0;
    return out;
}

TexelMask TexelMask::from_image(const Image& mask) {
    TexelMask out(mask.width, mask.height);
    for (std::size_t i = 0; i < mask.pixel_count(); ++i)
        out.bits[i] = mask.data[i * mask.channels] != 0 ? 1 : 0;
    return out;
}

namespace {

png_uint_32 png_format_for(int channels) {
    switch (channels) {
        case 1: return PNG_FORMAT_GRAY;
        case 3: return PNG_FORMAT_RGB;
        case 4: return PNG_FORMAT_RGBA;
    }
    throw Error(ErrorCode::Validation, "unsupported channel count for PNG");
}

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes) {
    png_image pimg{};
    pimg.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&pimg, bytes.data(), bytes.size()))
        throw Error(ErrorCode::CorruptImage, std::string("cannot decode PNG: ") + pimg.message);
    int channels = 4;
    if (!(pimg.format & PNG_FORMAT_FLAG_COLOR) && !(pimg.format & PNG_FORMAT_FLAG_ALPHA))
        channels = 1;
    else if (!(pimg.format & PNG_FORMAT_FLAG_ALPHA))
        channels = 3;
    pimg.format = png_format_for(channels);
    Image out(static_cast<int>(pimg.width), static_cast<int>(pimg.height), channels);
    if (!png_image_finish_read(&pimg, nullptr, out.data.data(), 0, nullptr)) {
        png_image_free(&pimg);
        throw Error(ErrorCode::CorruptImage, std::string("cannot decode PNG: ") + pimg.message);
    }
    if (out.width < 1 || out.height < 1) throw Error(ErrorCode::CorruptImage, "PNG has no pixels");
    return out;
}

Image read_png(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_png(bytes);
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_png(const Image& img) {
    png_image pimg{};
    pimg.version = PNG_IMAGE_VERSION;
    pimg.width = static_cast<png_uint_32>(img.width);
    pimg.height = static_cast<png_uint_32>(img.height);
    pimg.format = png_format_for(img.channels);
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&pimg, nullptr, &size, 0, img.data.data(), 0, nullptr))
        throw Error(ErrorCode::Io, std::string("PNG encode failed: ") + pimg.message);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&pimg, out.data(), &size, 0, img.data.data(), 0, nullptr))
        throw Error(ErrorCode::Io, std::string("PNG encode failed: ") + pimg.message);
    out.resize(size);
    return out;
}

void write_png(const std::filesystem::path& path, const Image& img) {
    const auto bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += kB64[(v >> 6) & 63];
        out += kB64[v & 63];
    }
    if (i < bytes.size()) {
        std::uint32_t v = bytes[i] << 16;
        if (i + 1 < bytes.size()) v |= bytes[i + 1] << 8;
        out += kB64[(v >> 18) & 63];
        out += kB64[(v >> 12) & 63];
        out += (i + 1 < bytes.size()) ? kB64[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    // Accept data URLs ("data:image/png;base64,...").
    if (auto comma = text.find(','); text.starts_with("data:") && comma != std::string_view::npos)
        text.remove_prefix(comma + 1);
    std::vector<std::uint8_t> out;
    out.reserve(text.size() * 3 / 4);
    std::uint32_t acc = 0;
    int bits = 0;
    for (char ch : text) {
        int v;
        if (ch >= 'A' && ch <= 'Z') v = ch - 'A';
        else if (ch >= 'a' && ch <= 'z') v = ch - 'a' + 26;
        else if (ch >= '0' && ch <= '9') v = ch - '0' + 52;
        else if (ch == '+' || ch == '-') v = 62;
        else if (ch == '/' || ch == '_') v = 63;
        else if (ch == '=' || ch == '\n' || ch == '\r' || ch == ' ') continue;
        else throw Error(ErrorCode::MalformedResponse, "invalid base64 character");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

}  // namespace scribtex
