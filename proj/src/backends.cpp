#include "scribtex/backends.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "scribtex/error.hpp"
#include "scribtex/morphology.hpp"

namespace scribtex {

void BackendConfig::validate() const {
    if (kind != "mock" && kind != "http") throw Error(ErrorCode::Validation, "backend kind must be 'mock' or 'http'");
    if (!(timeout_s > 0)) throw Error(ErrorCode::Validation, "backend timeout must be positive");
    if (retries < 0) throw Error(ErrorCode::Validation, "backend retries must be >= 0");
    if (max_in_flight < 1) throw Error(ErrorCode::Validation, "backend in-flight cap must be >= 1");
    if (kind == "http" && endpoint.empty()) throw Error(ErrorCode::Validation, "http backend needs an endpoint URL");
}

void ChatRequest::validate() const {
    if (images.size() > 8) throw Error(ErrorCode::Validation, "chat requests carry at most 8 images");
    if (max_candidates < 1) throw Error(ErrorCode::Validation, "max_candidates must be >= 1");
}

void GenImageRequest::validate() const {
    if (prompt.find_first_not_of(" \t\r\n") == std::string::npos)
        throw Error(ErrorCode::Validation, "generation prompt is empty");
    if (!(guidance_scale > 0)) throw Error(ErrorCode::Validation, "guidance_scale must be positive");
    if (count < 1) throw Error(ErrorCode::Validation, "count must be >= 1");
    if (width < 1 || height < 1) throw Error(ErrorCode::Validation, "image size must be positive");
}

void InpaintRequest::validate() const {
    if (image.width != mask.width || image.height != mask.height)
        throw Error(ErrorCode::Validation, "inpaint image and mask dimensions differ");
    if (count_set(mask) == 0) throw Error(ErrorCode::EmptyMask, "inpaint mask is empty");
}

void SegmentRequest::validate() const {
    if (image.width != prompt_mask.width || image.height != prompt_mask.height)
        throw Error(ErrorCode::Validation, "segment image and prompt dimensions differ");
    if (count_set(prompt_mask) == 0) throw Error(ErrorCode::EmptyPrompt, "segmentation prompt mask is empty");
}

namespace {

std::string timestamp() {
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms << 'Z';
    return os.str();
}

void log_call(const Backend& b, const std::string& service, nlohmann::json detail) {
    if (auto* t = b.transcript()) {
        detail["event"] = "call";
        detail["service"] = service;
        detail["backend"] = b.kind();
        t->append(std::move(detail));
    }
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

}  // namespace

void Transcript::append(nlohmann::json entry) {
    if (path_.empty()) return;
    entry["ts"] = timestamp();
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::app);
    out << entry.dump() << "\n";
}

std::size_t Transcript::count(const std::string& service) const {
    std::lock_guard lock(mu_);
    std::ifstream in(path_);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_object() && j.value("event", "") == "call" && j.value("service", "") == service) ++n;
    }
    return n;
}

std::string request_key(const ChatRequest& req) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = fnv1a(h, req.system_text.data(), req.system_text.size());
    h = fnv1a(h, "\x1f", 1);
    h = fnv1a(h, req.user_text.data(), req.user_text.size());
    const std::int32_t n = req.max_candidates;
    h = fnv1a(h, &n, sizeof n);
    for (const auto& img : req.images) {
        const std::int32_t dims[3] = {img.width, img.height, img.channels};
        h = fnv1a(h, dims, sizeof dims);
        h = fnv1a(h, img.data.data(), img.data.size());
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

std::vector<std::string> chat(const ChatRequest& req, ChatBackend& backend) {
    req.validate();
    auto out = backend.complete(req);
    log_call(backend, "chat",
             {{"key", request_key(req)}, {"images", req.images.size()}, {"n", req.max_candidates},
              {"user_text", req.user_text}, {"completions", out}});
    if (static_cast<int>(out.size()) < req.max_candidates)
        throw Error(ErrorCode::MalformedResponse, "chat backend returned too few completions");
    out.resize(static_cast<std::size_t>(req.max_candidates));
    return out;
}

std::vector<Image> generate_images(const GenImageRequest& req, ImageGenBackend& backend) {
    req.validate();
    auto imgs = backend.generate(req);
    log_call(backend, "gen",
             {{"prompt", req.prompt}, {"negative_prompt", req.negative_prompt}, {"guidance_scale", req.guidance_scale},
              {"seed", req.seed}, {"count", req.count}, {"width", req.width}, {"height", req.height},
              {"returned", imgs.size()}});
    if (static_cast<int>(imgs.size()) < req.count)
        throw Error(ErrorCode::MalformedResponse, "image backend returned too few images");
    imgs.resize(static_cast<std::size_t>(req.count));
    for (auto& img : imgs) img = resample_bilinear(to_rgb(img), req.width, req.height);
    return imgs;
}

Image inpaint(const InpaintRequest& req, InpaintBackend& backend) {
    req.validate();
    Image result = backend.fill(req);
    log_call(backend, "inpaint",
             {{"prompt", req.prompt}, {"seed", req.seed}, {"width", req.image.width}, {"height", req.image.height},
              {"masked", count_set(req.mask)}});
    result = resample_bilinear(to_rgb(result), req.image.width, req.image.height);
    const Image input = to_rgb(req.image);
    for (int y = 0; y < input.height; ++y)
        for (int x = 0; x < input.width; ++x)
            if (!req.mask.set(x, y)) result.put(x, y, input.rgb(x, y));
    if (req.image.channels == 4) {
        Image rgba = req.image;
        for (int y = 0; y < input.height; ++y)
            for (int x = 0; x < input.width; ++x)
                if (req.mask.set(x, y)) rgba.put(x, y, result.rgb(x, y));
        return rgba;
    }
    return result;
}

std::vector<SegmentCandidate> segment(const SegmentRequest& req, SegmentBackend& backend) {
    req.validate();
    auto cands = backend.propose(req);
    for (auto& c : cands) {
        if (c.mask.width != req.image.width || c.mask.height != req.image.height)
            throw Error(ErrorCode::MalformedResponse, "segmentation mask dimensions differ from the image");
        Image bin = make_mask(c.mask.width, c.mask.height);
        for (std::size_t i = 0; i < bin.pixel_count(); ++i)
            bin.data[i] = c.mask.data[i * c.mask.channels] ? 255 : 0;
        c.mask = std::move(bin);
        c.area = count_set(c.mask);
    }
    std::erase_if(cands, [](const SegmentCandidate& c) { return c.area == 0; });
    std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) { return a.area < b.area; });
    nlohmann::json areas = nlohmann::json::array();
    for (const auto& c : cands) areas.push_back(c.area);
    log_call(backend, "segment", {{"prompt_area", count_set(req.prompt_mask)},
                                  {"prompt_box", {req.prompt_box.x, req.prompt_box.y, req.prompt_box.w, req.prompt_box.h}},
                                  {"candidate_areas", areas}});
    if (cands.empty()) throw Error(ErrorCode::MalformedResponse, "segmentation backend returned no candidates");
    return cands;
}

// ---- mocks -------------------------------------------------------------------

std::vector<std::string> MockChatBackend::complete(const ChatRequest& req) {
    const std::string key = request_key(req);
    {
        std::lock_guard lock(mu_);
        if (auto it = canned_.find(key); it != canned_.end()) {
            std::vector<std::string> out;
            for (int i = 0; i < req.max_candidates; ++i) out.push_back(it->second[i % it->second.size()]);
            return out;
        }
    }
    if (!responder_) throw Error(ErrorCode::BackendUnavailable, "mock chat has no completion for request " + key);
    std::vector<std::string> out;
    for (int i = 0; i < req.max_candidates; ++i) out.push_back(responder_(req, i));
    return out;
}

void MockChatBackend::add_canned(const std::string& key, std::vector<std::string> completions) {
    if (completions.empty()) throw Error(ErrorCode::Validation, "canned completion list is empty");
    std::lock_guard lock(mu_);
    canned_[key] = std::move(completions);
}

void MockChatBackend::load_canned(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (!j.is_object()) throw Error(ErrorCode::Validation, "canned completions must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        std::vector<std::string> list;
        if (v.is_string()) list.push_back(v.get<std::string>());
        else
            for (const auto& s : v) list.push_back(s.get<std::string>());
        add_canned(key, std::move(list));
    }
}

const std::vector<NamedColor>& color_names() {
    static const std::vector<NamedColor> names = {
        {"red", {220, 30, 30}},     {"green", {40, 160, 60}},    {"blue", {40, 80, 210}},
        {"yellow", {235, 215, 40}}, {"orange", {240, 140, 30}},  {"pink", {240, 150, 190}},
        {"purple", {130, 60, 170}}, {"brown", {120, 75, 40}},    {"black", {20, 20, 20}},
        {"white", {240, 240, 240}}, {"gray", {128, 128, 128}},   {"grey", {128, 128, 128}},
        {"cyan", {40, 200, 220}},   {"magenta", {210, 40, 180}}, {"gold", {212, 175, 55}},
        {"silver", {190, 190, 195}}, {"beige", {225, 205, 165}}, {"teal", {30, 128, 128}},
        {"navy", {25, 35, 110}},    {"maroon", {120, 20, 30}},   {"olive", {120, 120, 40}},
    };
    return names;
}

std::string nearest_color_name(Rgb c) {
    const NamedColor* best = nullptr;
    double best_d = 1e300;
    for (const auto& nc : color_names()) {
        const double d = color_distance(nc.rgb, c);
        if (d < best_d) {
            best_d = d;
            best = &nc;
        }
    }
    return best->name;
}

namespace {

std::optional<Rgb> color_in_prompt(const std::string& prompt) {
    const std::string text = lower(prompt);
    std::size_t best_pos = std::string::npos;
    std::optional<Rgb> best;
    for (const auto& nc : color_names()) {
        const std::string name = nc.name;
        for (std::size_t pos = text.find(name); pos != std::string::npos; pos = text.find(name, pos + 1)) {
            const bool left = pos == 0 || !is_word_char(text[pos - 1]);
            const bool right = pos + name.size() >= text.size() || !is_word_char(text[pos + name.size()]);
            if (left && right) {
                if (pos < best_pos) {
                    best_pos = pos;
                    best = nc.rgb;
                }
                break;
            }
        }
    }
    return best;
}

}  // namespace

std::vector<Image> MockImageGenBackend::generate(const GenImageRequest& req) {
    const Rgb tint = color_in_prompt(req.prompt).value_or(Rgb{128, 128, 128});
    std::vector<Image> out;
    constexpr int kCell = 32;
    for (int k = 0; k < req.count; ++k) {
        std::uint64_t state = req.seed ^ (0xA0761D6478BD642FULL * static_cast<std::uint64_t>(k + 1));
        const int gw = req.width / kCell + 2, gh = req.height / kCell + 2;
        std::vector<double> grid(static_cast<std::size_t>(gw) * gh);
        for (auto& g : grid) g = static_cast<double>(splitmix64(state) >> 11) / 9007199254740992.0;
        Image img(req.width, req.height, 3);
        for (int y = 0; y < req.height; ++y)
            for (int x = 0; x < req.width; ++x) {
                const double fx = static_cast<double>(x) / kCell, fy = static_cast<double>(y) / kCell;
                const int gx = static_cast<int>(fx), gy = static_cast<int>(fy);
                const double tx = fx - gx, ty = fy - gy;
                const double sx = tx * tx * (3 - 2 * tx), sy = ty * ty * (3 - 2 * ty);
                auto at = [&](int i, int j) { return grid[static_cast<std::size_t>(j) * gw + i]; };
                const double coarse = (at(gx, gy) * (1 - sx) + at(gx + 1, gy) * sx) * (1 - sy) +
                                      (at(gx, gy + 1) * (1 - sx) + at(gx + 1, gy + 1) * sx) * sy;
                const double fine = static_cast<double>(splitmix64(state) >> 11) / 9007199254740992.0;
                const double factor = 0.6 + 0.8 * (0.8 * coarse + 0.2 * fine);
                auto ch = [&](std::uint8_t v) {
                    return static_cast<std::uint8_t>(std::clamp(std::lround(v * factor), 0L, 255L));
                };
                img.put(x, y, {ch(tint.r), ch(tint.g), ch(tint.b)});
            }
        out.push_back(std::move(img));
    }
    return out;
}

Image MockInpaintBackend::fill(const InpaintRequest& req) {
    return diffusion_fill(to_rgb(req.image), TexelMask::from_image(req.mask));
}

std::vector<SegmentCandidate> MockSegmentBackend::propose(const SegmentRequest& req) {
    SegmentCandidate exact{req.prompt_mask, count_set(req.prompt_mask)};
    const Rect box = mask_bbox(req.prompt_mask);
    Image fill = make_mask(req.prompt_mask.width, req.prompt_mask.height);
    for (int y = box.y; y < box.y + box.h; ++y)
        for (int x = box.x; x < box.x + box.w; ++x) fill.at(x, y) = 255;
    return {exact, {fill, static_cast<std::size_t>(box.area())}};
}

}  // namespace scribtex
