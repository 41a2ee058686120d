#include <doctest.h>

#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include "scribtex/backends.hpp"
#include "scribtex/error.hpp"
#include "support.hpp"

using namespace scribtex;

namespace {

/// httplib server on an ephemeral port, torn down with the object.
struct LocalServer {
    httplib::Server svr;
    int port = 0;
    std::thread thread;

    void start() {
        port = svr.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { svr.listen_after_bind(); });
        svr.wait_until_ready();
    }
    std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port) + path; }
    ~LocalServer() {
        svr.stop();
        if (thread.joinable()) thread.join();
    }
};

BackendConfig http_cfg(const std::string& url) {
    BackendConfig c;
    c.kind = "http";
    c.endpoint = url;
    c.retries = 3;
    c.backoff_s = 0.01;
    c.timeout_s = 5;
    return c;
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Pipeline;
}

std::string read_all(const std::filesystem::path& p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), {}};
}

Image noise(int w, int h, unsigned seed) {
    std::mt19937 rng(seed);
    Image img(w, h, 3);
    for (auto& b : img.data) b = static_cast<std::uint8_t>(rng());
    return img;
}

class WildInpaint : public InpaintBackend {
public:
    std::string kind() const override { return "wild"; }
    Image fill(const InpaintRequest& req) override { return noise(req.image.width / 2, req.image.height / 2, 77); }
};

}  // namespace

TEST_CASE("inpaint keeps every unmasked pixel whatever the backend returns") {
    std::mt19937 rng(1);
    for (int trial = 0; trial < 5; ++trial) {
        InpaintRequest req;
        req.image = noise(40 + trial, 30, trial);
        req.mask = testing::random_mask(rng, req.image.width, 30, 0.3).to_image();
        req.prompt = "moss";
        WildInpaint wild;
        MockInpaintBackend mock;
        for (InpaintBackend* b : std::initializer_list<InpaintBackend*>{&wild, &mock}) {
            const Image out = inpaint(req, *b);
            REQUIRE(out.width == req.image.width);
            for (int y = 0; y < out.height; ++y)
                for (int x = 0; x < out.width; ++x)
                    if (!req.mask.set(x, y)) CHECK(out.rgb(x, y) == req.image.rgb(x, y));
        }
    }
}

TEST_CASE("generation request defaults") {
    GenImageRequest req;
    CHECK(req.guidance_scale == 7.5);
    CHECK(req.width == 1024);
    req.prompt = "  ";
    CHECK(code_of([&] { req.validate(); }) == ErrorCode::Validation);
    req.prompt = "brick wall in red tones";
    req.count = 3;
    req.width = req.height = 64;
    MockImageGenBackend gen;
    const auto a = generate_images(req, gen);
    const auto b = generate_images(req, gen);
    REQUIRE(a.size() == 3);
    CHECK(a == b);
    CHECK(a[0] != a[1]);
    CHECK(a[0].channels == 3);
    const auto m = mean_rgb(a[0], Rect{0, 0, 64, 64});
    CHECK(m[0] > m[2]);
}

TEST_CASE("segment contract sorts by area and binarizes") {
    class Shuffled : public SegmentBackend {
    public:
        std::string kind() const override { return "shuffled"; }
        std::vector<SegmentCandidate> propose(const SegmentRequest& req) override {
            Image big = make_mask(req.image.width, req.image.height);
            for (auto& b : big.data) b = 7;
            return {{big, 0}, {req.prompt_mask, 0}, {make_mask(req.image.width, req.image.height), 0}};
        }
    } seg;
    SegmentRequest req;
    req.image = noise(16, 16, 3);
    req.prompt_mask = make_mask(16, 16);
    req.prompt_mask.at(3, 3) = 255;
    req.prompt_box = Rect{3, 3, 1, 1};
    const auto c = segment(req, seg);
    REQUIRE(c.size() == 2);
    CHECK(c[0].area == 1);
    CHECK(c[1].area == 256);
    CHECK(c[1].mask.data[0] == 255);

    MockSegmentBackend mock;
    const auto m = segment(req, mock);
    CHECK(m.front().mask == req.prompt_mask);
    req.prompt_mask = make_mask(16, 16);
    CHECK(code_of([&] { segment(req, mock); }) == ErrorCode::EmptyPrompt);
}

TEST_CASE("chat contract and mock canned completions") {
    MockChatBackend mock([](const ChatRequest&, int i) { return "answer " + std::to_string(i); });
    ChatRequest req;
    req.user_text = "what is this";
    req.max_candidates = 2;
    CHECK(chat(req, mock) == std::vector<std::string>{"answer 0", "answer 1"});
    mock.add_canned(request_key(req), {"canned"});
    CHECK(chat(req, mock)[0] == "canned");
    ChatRequest other = req;
    other.images.push_back(noise(4, 4, 1));
    CHECK(request_key(other) != request_key(req));
}

TEST_CASE("http client retries 429 then succeeds, and redacts credentials") {
    LocalServer s;
    std::atomic<int> hits{0};
    std::string seen_auth;
    s.svr.Post("/gen", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        if (++hits <= 2) {
            res.status = 429;
            return;
        }
        const auto body = nlohmann::json::parse(req.body);
        CHECK(body["guidance_scale"] == 7.5);
        CHECK(body["steps"] == 30);
        const auto png = encode_png(testing::solid(8, 8, Rgb{1, 2, 3}));
        res.set_content(nlohmann::json{{"images", {base64_encode(png)}}}.dump(), "application/json");
    });
    s.start();
    testing::TempDir dir;
    ::setenv("SCRIBTEX_TEST_SECRET", "sk-very-secret", 1);
    BackendConfig cfg = http_cfg(s.url("/gen"));
    cfg.auth_env = "SCRIBTEX_TEST_SECRET";
    cfg.extra = {{"steps", 30}};
    HttpImageGenBackend gen(cfg);
    gen.set_transcript(std::make_shared<Transcript>(dir / "t.jsonl"));
    GenImageRequest req;
    req.prompt = "lava";
    req.width = req.height = 16;
    const auto imgs = generate_images(req, gen);
    CHECK(hits == 3);
    CHECK(imgs[0].width == 16);
    CHECK(seen_auth == "Bearer sk-very-secret");
    const std::string log = read_all(dir / "t.jsonl");
    CHECK(log.find("sk-very-secret") == std::string::npos);
    CHECK(log.find("Bearer ***") != std::string::npos);
    CHECK(gen.transcript()->count("gen") == 1);
}

TEST_CASE("http error mapping") {
    LocalServer s;
    s.svr.Post("/auth", [](const httplib::Request&, httplib::Response& res) { res.status = 401; });
    s.svr.Post("/junk", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("not json {", "application/json");
    });
    s.svr.Post("/shape", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices":"nope"})", "application/json");
    });
    s.svr.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(1500));
        res.set_content("{}", "application/json");
    });
    s.svr.Post("/down", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    s.start();

    ChatRequest req;
    req.user_text = "hi";
    CHECK(code_of([&] { HttpChatBackend b(http_cfg(s.url("/auth"))); chat(req, b); }) == ErrorCode::AuthFailure);
    CHECK(code_of([&] { HttpChatBackend b(http_cfg(s.url("/junk"))); chat(req, b); }) == ErrorCode::MalformedResponse);
    CHECK(code_of([&] { HttpChatBackend b(http_cfg(s.url("/shape"))); chat(req, b); }) == ErrorCode::MalformedResponse);
    CHECK(code_of([&] { HttpChatBackend b(http_cfg(s.url("/down"))); chat(req, b); }) == ErrorCode::BackendUnavailable);
    BackendConfig slow = http_cfg(s.url("/slow"));
    slow.timeout_s = 0.3;
    slow.retries = 0;
    CHECK(code_of([&] { HttpChatBackend b(slow); chat(req, b); }) == ErrorCode::Timeout);
    BackendConfig closed = http_cfg("http://127.0.0.1:1/x");
    closed.retries = 0;
    const ErrorCode unreachable = code_of([&] { HttpChatBackend b(closed); chat(req, b); });
    CHECK(category_of(unreachable) == ErrorCategory::Backend);
}

TEST_CASE("chat body carries images in the configured format") {
    ChatRequest req;
    req.system_text = "sys";
    req.user_text = "look";
    req.images.push_back(testing::solid(2, 2, Rgb{0, 0, 0}));
    BackendConfig cfg = http_cfg("http://127.0.0.1:9/chat");
    cfg.model = "m";
    HttpChatBackend plain(cfg);
    const auto body = plain.build_body(req, 3);
    CHECK(body["n"] == 3);
    CHECK(body["messages"][1]["content"][1]["type"] == "image");
    cfg.openai_image_parts = true;
    HttpChatBackend openai(cfg);
    const auto ob = openai.build_body(req, 1);
    const std::string url = ob["messages"][1]["content"][1]["image_url"]["url"];
    CHECK(url.rfind("data:image/png;base64,", 0) == 0);
}

TEST_CASE("http chat parses completions") {
    LocalServer s;
    s.svr.Post("/chat", [](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        nlohmann::json choices = nlohmann::json::array();
        for (int i = 0; i < body["n"].get<int>(); ++i)
            choices.push_back({{"message", {{"content", "c" + std::to_string(i)}}}});
        res.set_content(nlohmann::json{{"choices", choices}}.dump(), "application/json");
    });
    s.start();
    HttpChatBackend b(http_cfg(s.url("/chat")));
    ChatRequest req;
    req.user_text = "hi";
    req.max_candidates = 3;
    CHECK(chat(req, b) == std::vector<std::string>{"c0", "c1", "c2"});
}
