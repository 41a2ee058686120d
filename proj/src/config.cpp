#include "scribtex/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "scribtex/error.hpp"
#include "scribtex/intent.hpp"

namespace scribtex {

namespace {

class TomlReader {
public:
    explicit TomlReader(std::string_view text) : s_(text) {}

    nlohmann::json parse() {
        nlohmann::json root = nlohmann::json::object();
        nlohmann::json* table = &root;
        while (true) {
            skip_blank_lines();
            if (eof()) break;
            if (peek() == '[') {
                ++i_;
                if (peek() == '[') fail("arrays of tables are not supported");
                const auto path = key_path(']');
                expect(']');
                table = &descend(root, path, true);
            } else {
                const auto path = key_path('=');
                expect('=');
                skip_ws();
                nlohmann::json& parent = descend(*table, {path.begin(), path.end() - 1}, false);
                if (parent.contains(path.back())) fail("duplicate key '" + path.back() + "'");
                parent[path.back()] = value();
            }
            end_of_line();
        }
        return root;
    }

private:
    std::string_view s_;
    std::size_t i_ = 0;
    int line_ = 1;

    bool eof() const { return i_ >= s_.size(); }
    char peek() const { return eof() ? '\0' : s_[i_]; }
    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorCode::Validation, "config line " + std::to_string(line_) + ": " + what);
    }
    void expect(char c) {
        skip_ws();
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++i_;
    }
    void skip_ws() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) ++i_;
    }
    void skip_comment() {
        if (peek() == '#')
            while (!eof() && peek() != '\n') ++i_;
    }
    void skip_blank_lines() {
        while (!eof()) {
            skip_ws();
            skip_comment();
            if (peek() == '\r') ++i_;
            if (peek() == '\n') {
                ++i_;
                ++line_;
            } else {
                break;
            }
        }
    }
    // whitespace, newlines and comments inside arrays / between values
    void skip_space_nl() {
        while (true) {
            skip_blank_lines();
            skip_ws();
            if (eof() || (peek() != '\n' && peek() != '#' && peek() != '\r')) break;
        }
    }
    void end_of_line() {
        skip_ws();
        skip_comment();
        if (peek() == '\r') ++i_;
        if (!eof() && peek() != '\n') fail("unexpected trailing content");
    }

    std::vector<std::string> key_path(char terminator) {
        std::vector<std::string> parts;
        while (true) {
            skip_ws();
            if (peek() == '"') parts.push_back(basic_string());
            else if (peek() == '\'') parts.push_back(literal_string());
            else {
                std::string k;
                while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-'))
                    k += s_[i_++];
                if (k.empty()) fail("expected a key");
                parts.push_back(k);
            }
            skip_ws();
            if (peek() == '.') {
                ++i_;
                continue;
            }
            if (peek() != terminator) fail(std::string("expected '") + terminator + "' after key");
            return parts;
        }
    }

    nlohmann::json& descend(nlohmann::json& from, const std::vector<std::string>& path, bool header) {
        nlohmann::json* cur = &from;
        for (const auto& p : path) {
            if (!cur->contains(p)) (*cur)[p] = nlohmann::json::object();
            cur = &(*cur)[p];
            if (!cur->is_object()) fail("key '" + p + "' is not a table");
        }
        (void)header;
        return *cur;
    }

    std::string basic_string() {
        ++i_;  // opening quote
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            char c = s_[i_++];
            if (c == '"') return out;
            if (c != '\\') {
                out += c;
                continue;
            }
            if (eof()) fail("unterminated escape");
            c = s_[i_++];
            switch (c) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case 'r': out += '\r'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                case 'u': {
                    if (i_ + 4 > s_.size()) fail("bad \\u escape");
                    const unsigned cp = std::stoul(std::string(s_.substr(i_, 4)), nullptr, 16);
                    i_ += 4;
                    if (cp < 0x80) out += static_cast<char>(cp);
                    else if (cp < 0x800) {
                        out += static_cast<char>(0xC0 | (cp >> 6));
                        out += static_cast<char>(0x80 | (cp & 0x3F));
                    } else {
                        out += static_cast<char>(0xE0 | (cp >> 12));
                        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
                        out += static_cast<char>(0x80 | (cp & 0x3F));
                    }
                    break;
                }
                default: fail(std::string("unknown escape \\") + c);
            }
        }
    }

    std::string literal_string() {
        ++i_;
        const auto end = s_.find('\'', i_);
        if (end == std::string_view::npos || s_.substr(i_, end - i_).find('\n') != std::string_view::npos)
            fail("unterminated string");
        std::string out(s_.substr(i_, end - i_));
        i_ = end + 1;
        return out;
    }

    nlohmann::json value() {
        skip_ws();
        const char c = peek();
        if (c == '"') return basic_string();
        if (c == '\'') return literal_string();
        if (c == '[') {
            ++i_;
            nlohmann::json arr = nlohmann::json::array();
            while (true) {
                skip_space_nl();
                if (peek() == ']') {
                    ++i_;
                    return arr;
                }
                arr.push_back(value());
                skip_space_nl();
                if (peek() == ',') ++i_;
                else if (peek() != ']') fail("expected ',' or ']' in array");
            }
        }
        if (c == '{') {
            ++i_;
            nlohmann::json obj = nlohmann::json::object();
            skip_ws();
            if (peek() == '}') {
                ++i_;
                return obj;
            }
            while (true) {
                const auto path = key_path('=');
                expect('=');
                nlohmann::json& parent = descend(obj, {path.begin(), path.end() - 1}, false);
                parent[path.back()] = value();
                skip_ws();
                if (peek() == ',') {
                    ++i_;
                    continue;
                }
                expect('}');
                return obj;
            }
        }
        std::string tok;
        while (!eof() && std::string_view(" \t\r\n,]}#").find(peek()) == std::string_view::npos) tok += s_[i_++];
        if (tok == "true") return true;
        if (tok == "false") return false;
        if (tok.empty()) fail("missing value");
        std::string digits;
        for (char ch : tok)
            if (ch != '_') digits += ch;
        const bool is_float = digits.find_first_of(".eE") != std::string::npos;
        char* end = nullptr;
        if (is_float) {
            const double d = std::strtod(digits.c_str(), &end);
            if (*end) fail("bad number '" + tok + "'");
            return d;
        }
        const long long v = std::strtoll(digits.c_str(), &end, 10);
        if (*end) fail("bad value '" + tok + "'");
        return v;
    }
};

struct ServiceEnv {
    const char* name;
    BackendConfig PipelineConfig::*field;
    const char* prefix;
};

const ServiceEnv kServices[] = {
    {"chat", &PipelineConfig::chat, "SCRIBBLESENSE_CHAT"},
    {"gen", &PipelineConfig::gen, "SCRIBBLESENSE_GEN"},
    {"inpaint", &PipelineConfig::inpaint, "SCRIBBLESENSE_INPAINT"},
    {"seg", &PipelineConfig::seg, "SCRIBBLESENSE_SEG"},
};

std::string env_or_empty(const std::string& name) {
    const char* v = std::getenv(name.c_str());
    return v ? v : "";
}

BackendConfig backend_from_json(const nlohmann::json& j) {
    BackendConfig b;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto& k = it.key();
        const auto& v = it.value();
        if (k == "kind") b.kind = v.get<std::string>();
        else if (k == "url" || k == "endpoint") b.endpoint = v.get<std::string>();
        else if (k == "auth_env") b.auth_env = v.get<std::string>();
        else if (k == "timeout_s") b.timeout_s = v.get<double>();
        else if (k == "retries") b.retries = v.get<int>();
        else if (k == "backoff_s") b.backoff_s = v.get<double>();
        else if (k == "model") b.model = v.get<std::string>();
        else if (k == "max_in_flight") b.max_in_flight = v.get<int>();
        else if (k == "openai_image_parts") b.openai_image_parts = v.get<bool>();
        else if (k == "canned") b.canned_path = v.get<std::string>();
        else if (k == "extra") b.extra = v;
        else throw Error(ErrorCode::Validation, "unknown backend key '" + k + "'");
    }
    return b;
}

nlohmann::json backend_to_json(const BackendConfig& b) {
    return {{"kind", b.kind},       {"url", b.endpoint},           {"auth_env", b.auth_env},
            {"timeout_s", b.timeout_s}, {"retries", b.retries},    {"backoff_s", b.backoff_s},
            {"model", b.model},     {"max_in_flight", b.max_in_flight}, {"openai_image_parts", b.openai_image_parts},
            {"canned", b.canned_path}, {"extra", b.extra}};
}

}  // namespace

nlohmann::json parse_toml(std::string_view text) { return TomlReader(text).parse(); }

void PipelineConfig::validate() const {
    if (n_intents < 1) throw Error(ErrorCode::Validation, "n_intents must be >= 1");
    if (n_global_prompts < 1) throw Error(ErrorCode::Validation, "n_global_prompts must be >= 1");
    if (!(guidance_scale > 0)) throw Error(ErrorCode::Validation, "guidance_scale must be > 0");
    if (erosion_radius < 0) throw Error(ErrorCode::Validation, "erosion_radius must be >= 0");
    if (image_size < 8) throw Error(ErrorCode::Validation, "image_size must be >= 8");
    ViewSpec{0, 0, fov, distance, resolution}.validate();
    for (const auto& s : kServices) (this->*s.field).validate();
}

nlohmann::json PipelineConfig::to_json() const {
    nlohmann::json j = {{"n_intents", n_intents},
                        {"n_global_prompts", n_global_prompts},
                        {"guidance_scale", guidance_scale},
                        {"refinement_enabled", refinement_enabled},
                        {"erosion_radius", erosion_radius},
                        {"seed", seed},
                        {"image_size", image_size},
                        {"atlas_priority_threshold", atlas_priority_threshold},
                        {"views", {{"fov", fov}, {"distance", distance}, {"resolution", resolution}}},
                        {"templates_dir", templates_dir},
                        {"synonyms", synonyms_path}};
    for (const auto& s : kServices) j["backends"][s.name] = backend_to_json(this->*s.field);
    return j;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    PipelineConfig c;
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const auto& k = it.key();
            const auto& v = it.value();
            if (k == "n_intents") c.n_intents = v.get<int>();
            else if (k == "n_global_prompts") c.n_global_prompts = v.get<int>();
            else if (k == "guidance_scale") c.guidance_scale = v.get<double>();
            else if (k == "refinement_enabled") c.refinement_enabled = v.get<bool>();
            else if (k == "erosion_radius") c.erosion_radius = v.get<int>();
            else if (k == "seed") c.seed = v.get<std::uint64_t>();
            else if (k == "image_size") c.image_size = v.get<int>();
            else if (k == "atlas_priority_threshold") c.atlas_priority_threshold = v.get<double>();
            else if (k == "templates_dir") c.templates_dir = v.get<std::string>();
            else if (k == "synonyms") c.synonyms_path = v.get<std::string>();
            else if (k == "views") {
                for (auto vi = v.begin(); vi != v.end(); ++vi) {
                    if (vi.key() == "fov") c.fov = vi.value().get<double>();
                    else if (vi.key() == "distance") c.distance = vi.value().get<double>();
                    else if (vi.key() == "resolution") c.resolution = vi.value().get<int>();
                    else throw Error(ErrorCode::Validation, "unknown views key '" + vi.key() + "'");
                }
            } else if (k == "backends") {
                for (auto b = v.begin(); b != v.end(); ++b) {
                    const ServiceEnv* s = nullptr;
                    for (const auto& cand : kServices)
                        if (b.key() == cand.name) s = &cand;
                    if (!s) throw Error(ErrorCode::Validation, "unknown backend '" + b.key() + "'");
                    c.*(s->field) = backend_from_json(b.value());
                }
            } else {
                throw Error(ErrorCode::Validation, "unknown config key '" + k + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Validation, std::string("config: ") + e.what());
    }
    apply_environment(c, j.contains("backends") ? j["backends"] : nlohmann::json::object());
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open config " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    PipelineConfig c = from_json(parse_toml(os.str()));
    const auto base = path.parent_path();
    auto rebase = [&](std::string& p) {
        if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).string();
    };
    rebase(c.templates_dir);
    rebase(c.synonyms_path);
    for (const auto& s : kServices) rebase((c.*s.field).canned_path);
    return c;
}

PipelineConfig PipelineConfig::defaults() {
    PipelineConfig c;
    apply_environment(c);
    return c;
}

void apply_environment(PipelineConfig& cfg, const nlohmann::json& explicit_backends) {
    for (const auto& s : kServices) {
        BackendConfig& b = cfg.*s.field;
        const bool has_kind = explicit_backends.contains(s.name) && explicit_backends[s.name].contains("kind");
        const std::string url = env_or_empty(std::string(s.prefix) + "_URL");
        if (!has_kind) b.kind = url.empty() ? "mock" : "http";
        if (b.kind == "http" && b.endpoint.empty()) b.endpoint = url;
        if (b.auth_env.empty()) b.auth_env = std::string(s.prefix) + "_KEY";
    }
}

void Backends::set_transcript(const std::shared_ptr<Transcript>& t) {
    chat->set_transcript(t);
    gen->set_transcript(t);
    inpaint->set_transcript(t);
    seg->set_transcript(t);
}

Backends make_backends(const PipelineConfig& cfg) {
    Backends b;
    if (cfg.chat.kind == "http") {
        b.chat = std::make_unique<HttpChatBackend>(cfg.chat);
    } else {
        auto mock = std::make_unique<MockChatBackend>(default_mock_responder());
        if (!cfg.chat.canned_path.empty()) mock->load_canned(cfg.chat.canned_path);
        b.chat = std::move(mock);
    }
    if (cfg.gen.kind == "http") b.gen = std::make_unique<HttpImageGenBackend>(cfg.gen);
    else b.gen = std::make_unique<MockImageGenBackend>();
    if (cfg.inpaint.kind == "http") b.inpaint = std::make_unique<HttpInpaintBackend>(cfg.inpaint);
    else b.inpaint = std::make_unique<MockInpaintBackend>();
    if (cfg.seg.kind == "http") b.seg = std::make_unique<HttpSegmentBackend>(cfg.seg);
    else b.seg = std::make_unique<MockSegmentBackend>();
    return b;
}

}  // namespace scribtex
