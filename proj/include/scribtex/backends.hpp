#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scribtex/image.hpp"

namespace scribtex {

inline constexpr double kDefaultGuidanceScale = 7.5;
inline constexpr int kDefaultGenSize = 1024;

struct BackendConfig {
    std::string kind = "mock";  // "mock" or "http"
    std::string endpoint;       // http://host:port/path
    std::string auth_env;       // environment variable holding the bearer token
    double timeout_s = 120.0;
    int retries = 3;
    double backoff_s = 0.5;  // first retry delay, doubled per attempt
    std::string model;
    int max_in_flight = 2;
    /// Chat: send OpenAI "image_url" data-URL parts instead of {type:"image"}.
    bool openai_image_parts = false;
    /// Mock chat: JSON file {"<request key>": ["completion", ...]}.
    std::string canned_path;
    /// Forwarded verbatim into request bodies (temperature, steps, strength...).
    nlohmann::json extra = nlohmann::json::object();

    void validate() const;
};

struct ChatRequest {
    std::string system_text;
    std::string user_text;
    std::vector<Image> images;
    int max_candidates = 1;

    void validate() const;
};

struct GenImageRequest {
    std::string prompt;
    std::string negative_prompt;
    double guidance_scale = kDefaultGuidanceScale;
    std::uint64_t seed = 0;
    int count = 1;
    int width = kDefaultGenSize;
    int height = kDefaultGenSize;

    void validate() const;
};

struct InpaintRequest {
    Image image;  // RGB
    Image mask;   // 1 channel, nonzero = fill
    std::string prompt;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SegmentRequest {
    Image image;
    Image prompt_mask;
    Rect prompt_box;

    void validate() const;
};

struct SegmentCandidate {
    Image mask;  // 1 channel 0/255
    std::size_t area = 0;
};

/// Append-only JSON-lines log of backend traffic for one session.
class Transcript {
public:
    Transcript() = default;
    explicit Transcript(std::filesystem::path path) : path_(std::move(path)) {}

    void append(nlohmann::json entry);
    /// Calls recorded in this file for a service ("chat", "gen", "inpaint", "segment").
    std::size_t count(const std::string& service) const;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    mutable std::mutex mu_;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string kind() const = 0;
    void set_transcript(std::shared_ptr<Transcript> t) { transcript_ = std::move(t); }
    Transcript* transcript() const { return transcript_.get(); }

private:
    std::shared_ptr<Transcript> transcript_;
};

class ChatBackend : public Backend {
public:
    virtual std::vector<std::string> complete(const ChatRequest& req) = 0;
};

class ImageGenBackend : public Backend {
public:
    virtual std::vector<Image> generate(const GenImageRequest& req) = 0;
};

class InpaintBackend : public Backend {
public:
    virtual Image fill(const InpaintRequest& req) = 0;
};

class SegmentBackend : public Backend {
public:
    virtual std::vector<SegmentCandidate> propose(const SegmentRequest& req) = 0;
};

// Contract-enforcing entry points used by the pipeline. Each validates the
// request, logs the call to the backend's transcript and normalizes the reply.

/// Exactly req.max_candidates completions.
std::vector<std::string> chat(const ChatRequest& req, ChatBackend& backend);
/// Exactly req.count images of req.width x req.height (RGB).
std::vector<Image> generate_images(const GenImageRequest& req, ImageGenBackend& backend);
/// Pixels outside the mask are copied back from req.image whatever the backend returned.
Image inpaint(const InpaintRequest& req, InpaintBackend& backend);
/// At least one candidate, sorted by area ascending.
std::vector<SegmentCandidate> segment(const SegmentRequest& req, SegmentBackend& backend);

/// Stable FNV-1a key of a chat request (texts, candidate count, image bytes).
std::string request_key(const ChatRequest& req);

// ---- mocks ---------------------------------------------------------------

/// Produces completion `index` for a request.
using ChatResponder = std::function<std::string(const ChatRequest&, int index)>;

class MockChatBackend : public ChatBackend {
public:
    explicit MockChatBackend(ChatResponder responder = {}) : responder_(std::move(responder)) {}
    std::string kind() const override { return "mock"; }
    std::vector<std::string> complete(const ChatRequest& req) override;

    void add_canned(const std::string& key, std::vector<std::string> completions);
    void load_canned(const std::filesystem::path& path);

private:
    ChatResponder responder_;
    std::map<std::string, std::vector<std::string>> canned_;
    std::mutex mu_;
};

/// Seeded value noise tinted by the first color name found in the prompt.
class MockImageGenBackend : public ImageGenBackend {
public:
    std::string kind() const override { return "mock"; }
    std::vector<Image> generate(const GenImageRequest& req) override;
};

/// Diffusion fill of the masked pixels.
class MockInpaintBackend : public InpaintBackend {
public:
    std::string kind() const override { return "mock"; }
    Image fill(const InpaintRequest& req) override;
};

/// Returns the prompt mask itself and its bounding-box fill.
class MockSegmentBackend : public SegmentBackend {
public:
    std::string kind() const override { return "mock"; }
    std::vector<SegmentCandidate> propose(const SegmentRequest& req) override;
};

// ---- HTTP clients ----------------------------------------------------------

class HttpTransport;

class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(BackendConfig cfg);
    ~HttpChatBackend() override;
    std::string kind() const override { return "http"; }
    std::vector<std::string> complete(const ChatRequest& req) override;
    nlohmann::json build_body(const ChatRequest& req, int n) const;

private:
    BackendConfig cfg_;
    std::unique_ptr<HttpTransport> http_;
};

class HttpImageGenBackend : public ImageGenBackend {
public:
    explicit HttpImageGenBackend(BackendConfig cfg);
    ~HttpImageGenBackend() override;
    std::string kind() const override { return "http"; }
    std::vector<Image> generate(const GenImageRequest& req) override;

private:
    BackendConfig cfg_;
    std::unique_ptr<HttpTransport> http_;
};

class HttpInpaintBackend : public InpaintBackend {
public:
    explicit HttpInpaintBackend(BackendConfig cfg);
    ~HttpInpaintBackend() override;
    std::string kind() const override { return "http"; }
    Image fill(const InpaintRequest& req) override;

private:
    BackendConfig cfg_;
    std::unique_ptr<HttpTransport> http_;
};

class HttpSegmentBackend : public SegmentBackend {
public:
    explicit HttpSegmentBackend(BackendConfig cfg);
    ~HttpSegmentBackend() override;
    std::string kind() const override { return "http"; }
    std::vector<SegmentCandidate> propose(const SegmentRequest& req) override;

private:
    BackendConfig cfg_;
    std::unique_ptr<HttpTransport> http_;
};

/// Named colors used to tint mock images and to describe scribble colors.
struct NamedColor {
    const char* name;
    Rgb rgb;
};
const std::vector<NamedColor>& color_names();
/// Closest named color (Euclidean RGB).
std::string nearest_color_name(Rgb c);

}  // namespace scribtex
