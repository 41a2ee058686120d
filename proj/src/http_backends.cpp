// HTTP clients for the model services. Kept in one translation unit so the
// (large) httplib header is compiled once for the client side.
#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <semaphore>
#include <thread>

#include "scribtex/backends.hpp"
#include "scribtex/error.hpp"

namespace scribtex {

class HttpTransport {
public:
    HttpTransport(const BackendConfig& cfg, std::string service)
        : cfg_(cfg), service_(std::move(service)), slots_(cfg.max_in_flight) {
        cfg_.validate();
        const auto scheme_end = cfg_.endpoint.find("://");
        if (scheme_end == std::string::npos)
            throw Error(ErrorCode::Validation, "endpoint must be an absolute http(s) URL: " + cfg_.endpoint);
        const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
        origin_ = cfg_.endpoint.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/" : cfg_.endpoint.substr(path_start);
    }

    nlohmann::json post(const nlohmann::json& body, Transcript* transcript) {
        slots_.acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{slots_};

        httplib::Client cli(origin_);
        const auto timeout = std::chrono::duration<double>(cfg_.timeout_s);
        cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        httplib::Headers headers;
        bool has_auth = false;
        if (!cfg_.auth_env.empty())
            if (const char* key = std::getenv(cfg_.auth_env.c_str()); key && *key) {
                headers.emplace("Authorization", std::string("Bearer ") + key);
                has_auth = true;
            }
        const std::string payload = body.dump();

        ErrorCode last_code = ErrorCode::BackendUnavailable;
        std::string last_message, last_payload;
        for (int attempt = 0; attempt <= cfg_.retries; ++attempt) {
            if (attempt > 0) {
                const double delay = cfg_.backoff_s * std::pow(2.0, attempt - 1);
                std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            }
            const auto start = std::chrono::steady_clock::now();
            auto res = cli.Post(path_, headers, payload, "application/json");
            const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            nlohmann::json entry = {{"event", "http"},   {"service", service_},         {"url", cfg_.endpoint},
                                    {"attempt", attempt}, {"request_bytes", payload.size()},
                                    {"headers", has_auth ? nlohmann::json{{"Authorization", "Bearer ***"}}
                                                         : nlohmann::json::object()}};
            if (!res) {
                const auto err = res.error();
                entry["error"] = httplib::to_string(err);
                if (transcript) transcript->append(entry);
                const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                                       (err == httplib::Error::Read && elapsed >= cfg_.timeout_s * 0.9);
                last_code = timed_out ? ErrorCode::Timeout : ErrorCode::BackendUnavailable;
                last_message = service_ + " backend " + (timed_out ? "timed out" : "unreachable") + ": " +
                               httplib::to_string(err);
                last_payload.clear();
                continue;
            }
            entry["status"] = res->status;
            entry["response"] = res->body.size() > 2000 ? res->body.substr(0, 2000) + "..." : res->body;
            if (transcript) transcript->append(entry);
            if (res->status == 401 || res->status == 403)
                throw Error(ErrorCode::AuthFailure, service_ + " backend rejected credentials (HTTP " +
                                                        std::to_string(res->status) + ")", res->body);
            if (res->status == 429 || res->status >= 500) {
                last_code = ErrorCode::BackendUnavailable;
                last_message = service_ + " backend HTTP " + std::to_string(res->status);
                last_payload = res->body;
                continue;
            }
            if (res->status < 200 || res->status >= 300)
                throw Error(ErrorCode::BackendUnavailable,
                            service_ + " backend HTTP " + std::to_string(res->status), res->body);
            auto j = nlohmann::json::parse(res->body, nullptr, false);
            if (j.is_discarded())
                throw Error(ErrorCode::MalformedResponse, service_ + " backend returned invalid JSON", res->body);
            return j;
        }
        throw Error(last_code, last_message + " after " + std::to_string(cfg_.retries + 1) + " attempts",
                    last_payload);
    }

private:
    BackendConfig cfg_;
    std::string service_;
    std::string origin_, path_;
    std::counting_semaphore<> slots_;
};

namespace {

std::string png_b64(const Image& img) {
    const auto bytes = encode_png(img);
    return base64_encode(bytes);
}

Image image_from_b64(const nlohmann::json& j, const std::string& raw) {
    if (!j.is_string()) throw Error(ErrorCode::MalformedResponse, "expected a base64 PNG string", raw);
    const auto bytes = base64_decode(j.get<std::string>());
    try {
        return decode_png(bytes);
    } catch (const Error& e) {
        throw Error(ErrorCode::MalformedResponse, std::string("undecodable image: ") + e.what(), raw);
    }
}

void merge_extra(nlohmann::json& body, const nlohmann::json& extra) {
    if (!extra.is_object()) return;
    for (const auto& [k, v] : extra.items())
        if (!body.contains(k)) body[k] = v;
}

std::string message_text(const nlohmann::json& content) {
    if (content.is_string()) return content.get<std::string>();
    std::string text;
    if (content.is_array())
        for (const auto& part : content)
            if (part.is_object() && part.value("type", "") == "text") text += part.value("text", "");
    return text;
}

}  // namespace

HttpChatBackend::HttpChatBackend(BackendConfig cfg)
    : cfg_(std::move(cfg)), http_(std::make_unique<HttpTransport>(cfg_, "chat")) {}
HttpChatBackend::~HttpChatBackend() = default;

nlohmann::json HttpChatBackend::build_body(const ChatRequest& req, int n) const {
    nlohmann::json user_content = nlohmann::json::array();
    user_content.push_back({{"type", "text"}, {"text", req.user_text}});
    for (const auto& img : req.images) {
        const std::string b64 = png_b64(img);
        if (cfg_.openai_image_parts)
            user_content.push_back({{"type", "image_url"}, {"image_url", {{"url", "data:image/png;base64," + b64}}}});
        else
            user_content.push_back({{"type", "image"}, {"image", b64}, {"mime_type", "image/png"}});
    }
    nlohmann::json messages = nlohmann::json::array();
    messages.push_back({{"role", "system"}, {"content", {{{"type", "text"}, {"text", req.system_text}}}}});
    messages.push_back({{"role", "user"}, {"content", user_content}});
    nlohmann::json body = {{"model", cfg_.model}, {"messages", messages}, {"n", n}};
    merge_extra(body, cfg_.extra);
    return body;
}

std::vector<std::string> HttpChatBackend::complete(const ChatRequest& req) {
    std::vector<std::string> out;
    // Some servers ignore n; top up with further requests.
    for (int round = 0; round < 4 && static_cast<int>(out.size()) < req.max_candidates; ++round) {
        const int want = req.max_candidates - static_cast<int>(out.size());
        const auto j = http_->post(build_body(req, want), transcript());
        const std::string raw = j.dump();
        if (!j.contains("choices") || !j["choices"].is_array())
            throw Error(ErrorCode::MalformedResponse, "chat response has no choices", raw);
        for (const auto& c : j["choices"]) {
            if (!c.contains("message") || !c["message"].contains("content"))
                throw Error(ErrorCode::MalformedResponse, "chat choice without message content", raw);
            out.push_back(message_text(c["message"]["content"]));
        }
        if (j["choices"].empty()) break;
    }
    if (static_cast<int>(out.size()) < req.max_candidates)
        throw Error(ErrorCode::MalformedResponse, "chat backend returned too few choices");
    out.resize(static_cast<std::size_t>(req.max_candidates));
    return out;
}

HttpImageGenBackend::HttpImageGenBackend(BackendConfig cfg)
    : cfg_(std::move(cfg)), http_(std::make_unique<HttpTransport>(cfg_, "gen")) {}
HttpImageGenBackend::~HttpImageGenBackend() = default;

std::vector<Image> HttpImageGenBackend::generate(const GenImageRequest& req) {
    nlohmann::json body = {{"prompt", req.prompt},   {"negative_prompt", req.negative_prompt},
                           {"guidance_scale", req.guidance_scale}, {"seed", req.seed},
                           {"count", req.count},     {"width", req.width}, {"height", req.height}};
    if (!cfg_.model.empty()) body["model"] = cfg_.model;
    merge_extra(body, cfg_.extra);
    const auto j = http_->post(body, transcript());
    const std::string raw = j.dump().substr(0, 2000);
    if (!j.contains("images") || !j["images"].is_array())
        throw Error(ErrorCode::MalformedResponse, "image response has no images", raw);
    std::vector<Image> out;
    for (const auto& img : j["images"]) out.push_back(image_from_b64(img, raw));
    return out;
}

HttpInpaintBackend::HttpInpaintBackend(BackendConfig cfg)
    : cfg_(std::move(cfg)), http_(std::make_unique<HttpTransport>(cfg_, "inpaint")) {}
HttpInpaintBackend::~HttpInpaintBackend() = default;

Image HttpInpaintBackend::fill(const InpaintRequest& req) {
    nlohmann::json body = {{"image", png_b64(req.image)}, {"mask", png_b64(req.mask)},
                           {"prompt", req.prompt},        {"seed", req.seed}};
    if (!cfg_.model.empty()) body["model"] = cfg_.model;
    merge_extra(body, cfg_.extra);
    const auto j = http_->post(body, transcript());
    const std::string raw = j.dump().substr(0, 2000);
    if (!j.contains("image")) throw Error(ErrorCode::MalformedResponse, "inpaint response has no image", raw);
    return image_from_b64(j["image"], raw);
}

HttpSegmentBackend::HttpSegmentBackend(BackendConfig cfg)
    : cfg_(std::move(cfg)), http_(std::make_unique<HttpTransport>(cfg_, "segment")) {}
HttpSegmentBackend::~HttpSegmentBackend() = default;

std::vector<SegmentCandidate> HttpSegmentBackend::propose(const SegmentRequest& req) {
    nlohmann::json body = {
        {"image", png_b64(req.image)},
        {"prompt_mask", png_b64(req.prompt_mask)},
        {"prompt_box", {req.prompt_box.x, req.prompt_box.y, req.prompt_box.w, req.prompt_box.h}}};
    if (!cfg_.model.empty()) body["model"] = cfg_.model;
    merge_extra(body, cfg_.extra);
    const auto j = http_->post(body, transcript());
    const std::string raw = j.dump().substr(0, 2000);
    if (!j.contains("masks") || !j["masks"].is_array())
        throw Error(ErrorCode::MalformedResponse, "segment response has no masks", raw);
    std::vector<SegmentCandidate> out;
    for (const auto& m : j["masks"]) {
        if (!m.is_object() || !m.contains("mask"))
            throw Error(ErrorCode::MalformedResponse, "segment entry without mask", raw);
        out.push_back({image_from_b64(m["mask"], raw), m.value("area", std::size_t{0})});
    }
    return out;
}

}  // namespace scribtex
