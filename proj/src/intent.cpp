#include "scribtex/intent.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>
#include <type_traits>

#include "scribtex/error.hpp"
#include "scribtex/mesh.hpp"
#include "scribtex/scribble.hpp"

#ifndef SCRIBTEX_ASSET_DIR
#define SCRIBTEX_ASSET_DIR "assets"
#endif

namespace scribtex {

namespace {

std::filesystem::path asset_dir() {
    if (const char* env = std::getenv("SCRIBTEX_ASSETS"); env && *env) return env;
    return SCRIBTEX_ASSET_DIR;
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

const std::set<std::string>& stopwords() {
    static const std::set<std::string> words = {"a",    "an", "the", "and", "or", "of",   "with", "on",
                                                "in",   "to", "for", "by",  "at", "from", "into", "its"};
    return words;
}

}  // namespace

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir) {
    PromptTemplates t;
    const auto version_file = dir / "VERSION";
    t.version = std::filesystem::exists(version_file) ? trim(read_text(version_file)) : dir.filename().string();
    t.intent_system = read_text(dir / "intent_system.txt");
    t.intent_user = read_text(dir / "intent_user.txt");
    t.global_system = read_text(dir / "global_system.txt");
    t.global_user = read_text(dir / "global_user.txt");
    t.patch_system = read_text(dir / "patch_system.txt");
    t.patch_user = read_text(dir / "patch_user.txt");
    t.reprompt = read_text(dir / "reprompt.txt");
    return t;
}

const PromptTemplates& PromptTemplates::bundled() {
    static const PromptTemplates t = load(asset_dir() / "templates" / "v1");
    return t;
}

std::string fill_template(const std::string& text, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        const auto open = text.find("{{", i);
        if (open == std::string::npos) {
            out.append(text, i);
            break;
        }
        const auto close = text.find("}}", open + 2);
        if (close == std::string::npos) {
            out.append(text, i);
            break;
        }
        out.append(text, i, open - i);
        const std::string name = text.substr(open + 2, close - open - 2);
        auto it = values.find(name);
        if (it == values.end()) throw Error(ErrorCode::Validation, "template placeholder '" + name + "' has no value");
        out += it->second;
        i = close + 2;
    }
    return out;
}

// ---- lexicon -------------------------------------------------------------------

Lexicon Lexicon::load(const std::filesystem::path& path) {
    const auto j = nlohmann::json::parse(read_text(path), nullptr, false);
    if (!j.is_object() || !j.contains("groups")) throw Error(ErrorCode::Validation, "synonym file needs 'groups'");
    Lexicon lex;
    for (const auto& g : j["groups"]) lex.add_group(g.get<std::vector<std::string>>());
    return lex;
}

const Lexicon& Lexicon::bundled() {
    static const Lexicon lex = load(asset_dir() / "synonyms.json");
    return lex;
}

void Lexicon::add_group(const std::vector<std::string>& words) {
    if (words.empty()) return;
    const std::string head = stem(lower(words.front()));
    for (const auto& w : words) canonical_[stem(lower(w))] = head;
}

std::string Lexicon::stem(const std::string& word) {
    std::string w = word;
    auto ends = [&](std::string_view s) { return w.size() >= s.size() && w.compare(w.size() - s.size(), s.size(), s) == 0; };
    auto undouble = [&] {
        const auto n = w.size();
        if (n >= 4 && w[n - 1] == w[n - 2] && std::string_view("aeiouslz").find(w[n - 1]) == std::string_view::npos) w.pop_back();
    };
    if (ends("ies") && w.size() > 4) {
        w.replace(w.size() - 3, 3, "y");
    } else if (ends("sses")) {
        w.resize(w.size() - 2);
    } else if ((ends("ches") || ends("shes") || ends("xes") || ends("zes")) && w.size() > 4) {
        w.resize(w.size() - 2);
    } else if (ends("s") && !ends("ss") && !ends("us") && !ends("is") && w.size() > 3) {
        w.pop_back();
    } else if (ends("ing") && w.size() > 5) {
        w.resize(w.size() - 3);
        undouble();
    } else if (ends("ed") && w.size() > 4) {
        w.resize(w.size() - 2);
        undouble();
    }
    return w;
}

std::string Lexicon::canonical(const std::string& word) const {
    const std::string s = stem(lower(word));
    auto it = canonical_.find(s);
    return it == canonical_.end() ? s : it->second;
}

std::vector<std::string> Lexicon::tokens(const std::string& text) const {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) return;
        const std::string low = lower(cur);
        if (!stopwords().contains(low)) out.push_back(canonical(low));
        cur.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) cur += c;
        else flush();
    }
    flush();
    return out;
}

bool Lexicon::matches_any(const std::string& text, const std::vector<std::string>& keywords) const {
    const auto toks = tokens(text);
    const std::set<std::string> have(toks.begin(), toks.end());
    for (const auto& kw : keywords) {
        const auto need = tokens(kw);
        if (!need.empty() && std::all_of(need.begin(), need.end(), [&](const auto& t) { return have.contains(t); }))
            return true;
    }
    return false;
}

bool Lexicon::mentions(const std::string& text, const std::string& term) const {
    const auto need = tokens(term);
    if (need.empty()) return true;
    const auto toks = tokens(text);
    return std::find(toks.begin(), toks.end(), need.back()) != toks.end();
}

// ---- parsing -------------------------------------------------------------------

std::optional<nlohmann::json> extract_json_object(const std::string& completion) {
    for (std::size_t start = completion.find('{'); start != std::string::npos;
         start = completion.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false, escaped = false;
        for (std::size_t i = start; i < completion.size(); ++i) {
            const char c = completion[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{') ++depth;
            else if (c == '}' && --depth == 0) {
                auto j = nlohmann::json::parse(completion.substr(start, i - start + 1), nullptr, false);
                if (!j.is_discarded() && j.is_object()) return j;
                break;
            }
        }
    }
    return std::nullopt;
}

std::string color_hex(Rgb c) {
    std::ostringstream os;
    os << '#' << std::hex << std::setfill('0') << std::setw(2) << int(c.r) << std::setw(2) << int(c.g) << std::setw(2)
       << int(c.b);
    return os.str();
}

namespace {

// One attempt plus one reprompt; parse returns nullopt on an unusable reply.
template <typename Parse>
auto ask(ChatRequest req, ChatBackend& backend, const PromptTemplates& t, Parse parse, ErrorCode failure,
         const std::string& what) -> std::remove_cvref_t<decltype(*parse(std::string{}))> {
    std::string last;
    for (int attempt = 0; attempt < 2; ++attempt) {
        if (attempt == 1) req.user_text += "\n" + t.reprompt;
        last = chat(req, backend).front();
        if (auto parsed = parse(last)) return std::move(*parsed);
    }
    throw Error(failure, what + ": unusable reply after one reprompt", last.substr(0, 400));
}

std::string image_sizes(const std::vector<Image>& images) {
    std::string out;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(images[i].width) + "x" + std::to_string(images[i].height);
    }
    return out;
}

}  // namespace

ChatRequest build_intent_request(const IntentQuery& q, const PromptTemplates& t) {
    if (q.n < 1) throw Error(ErrorCode::Validation, "n must be >= 1");
    ChatRequest req;
    req.system_text = t.intent_system;
    std::string hint_clause;
    if (q.hint && !trim(*q.hint).empty()) hint_clause = "\nUser instruction: " + trim(*q.hint);
    req.user_text = fill_template(t.intent_user, {{"color_name", nearest_color_name(q.color)},
                                                  {"color_hex", color_hex(q.color)},
                                                  {"n", std::to_string(q.n)},
                                                  {"hint_clause", hint_clause}});
    req.images = q.views;
    req.images.push_back(q.scribble_view);
    return req;
}

IntentResult predict_intent(const IntentQuery& q, ChatBackend& backend, const PromptTemplates& t) {
    const int n = q.n;
    auto parse = [n](const std::string& text) -> std::optional<IntentResult> {
        auto j = extract_json_object(text);
        if (!j || !j->contains("predictions") || !(*j)["predictions"].is_array()) return std::nullopt;
        std::vector<std::pair<int, IntentPrediction>> items;
        std::set<std::string> seen;
        int order = 0;
        for (const auto& p : (*j)["predictions"]) {
            ++order;
            if (!p.is_object() || !p.contains("semantic") || !p["semantic"].is_string()) continue;
            IntentPrediction pred;
            pred.semantic = trim(p["semantic"].get<std::string>());
            if (pred.semantic.empty() || !seen.insert(lower(pred.semantic)).second) continue;
            if (p.contains("rationale") && p["rationale"].is_string()) pred.rationale = p["rationale"];
            const int rank = p.contains("rank") && p["rank"].is_number_integer() ? p["rank"].get<int>() : order;
            items.emplace_back(rank, std::move(pred));
        }
        if (static_cast<int>(items.size()) < n) return std::nullopt;
        std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        IntentResult out;
        for (int i = 0; i < n; ++i) {
            items[i].second.rank = i + 1;
            out.predictions.push_back(std::move(items[i].second));
        }
        if (j->contains("style") && (*j)["style"].is_string()) out.style = trim((*j)["style"].get<std::string>());
        return out;
    };
    return ask(build_intent_request(q, t), backend, t, parse, ErrorCode::MalformedResponse, "intent prediction");
}

std::vector<GlobalPrompt> make_global_prompts(const IntentPrediction& pred, Rgb color, const std::string& style_context,
                                              int n, ChatBackend& backend, const PromptTemplates& t,
                                              const Lexicon& lex) {
    if (n < 1) throw Error(ErrorCode::Validation, "n must be >= 1");
    if (trim(pred.semantic).empty()) throw Error(ErrorCode::EmptyPrompt, "empty semantic");
    ChatRequest req;
    req.system_text = t.global_system;
    req.user_text = fill_template(t.global_user, {{"semantic", pred.semantic},
                                                  {"color_name", nearest_color_name(color)},
                                                  {"color_hex", color_hex(color)},
                                                  {"style", style_context.empty() ? "unspecified" : style_context},
                                                  {"n", std::to_string(n)}});
    auto parse = [&](const std::string& text) -> std::optional<std::vector<GlobalPrompt>> {
        auto j = extract_json_object(text);
        if (!j || !j->contains("prompts") || !(*j)["prompts"].is_array()) return std::nullopt;
        std::vector<GlobalPrompt> out;
        for (const auto& p : (*j)["prompts"]) {
            if (!p.is_string()) continue;
            const std::string s = trim(p.get<std::string>());
            if (s.empty() || !lex.mentions(s, pred.semantic)) continue;
            out.push_back({s, pred.rank});
            if (static_cast<int>(out.size()) == n) return out;
        }
        return std::nullopt;
    };
    return ask(req, backend, t, parse, ErrorCode::MalformedResponse, "global prompt generation");
}

std::optional<PatchChoice> pick_closest_box(const std::vector<Image>& images, std::vector<PatchChoice> boxes,
                                            Rgb color) {
    std::optional<PatchChoice> best;
    auto key = [](const PatchChoice& c) {
        return std::tuple(c.image_index, c.box.y, c.box.x, c.box.h, c.box.w);
    };
    for (auto& c : boxes) {
        if (c.image_index < 0 || c.image_index >= static_cast<int>(images.size())) continue;
        const Image& img = images[c.image_index];
        c.box = c.box.intersect(Rect{0, 0, img.width, img.height});
        if (c.box.area() <= 0) continue;
        const auto m = mean_rgb(img, c.box);
        c.distance = color_distance(m[0], m[1], m[2], color);
        if (!best || c.distance < best->distance || (c.distance == best->distance && key(c) < key(*best))) best = c;
    }
    return best;
}

PatchChoice choose_patch(const std::vector<Image>& images, const std::string& semantic, Rgb color, ChatBackend& backend,
                         const PromptTemplates& t) {
    if (images.empty()) throw Error(ErrorCode::Validation, "choose_patch needs at least one image");
    ChatRequest req;
    req.system_text = t.patch_system;
    req.user_text = fill_template(t.patch_user, {{"semantic", semantic},
                                                 {"color_name", nearest_color_name(color)},
                                                 {"color_hex", color_hex(color)},
                                                 {"image_count", std::to_string(images.size())},
                                                 {"image_sizes", image_sizes(images)}});
    req.images = images;
    auto parse = [&](const std::string& text) -> std::optional<PatchChoice> {
        auto j = extract_json_object(text);
        if (!j || !j->contains("boxes") || !(*j)["boxes"].is_array()) return std::nullopt;
        std::vector<PatchChoice> boxes;
        for (const auto& b : (*j)["boxes"]) {
            if (!b.is_object() || !b.contains("box") || !b["box"].is_array() || b["box"].size() != 4) continue;
            bool numeric = std::all_of(b["box"].begin(), b["box"].end(), [](const auto& v) { return v.is_number(); });
            if (!numeric) continue;
            PatchChoice c;
            c.image_index = b.value("image_index", 0);
            c.box = Rect{static_cast<int>(std::lround(b["box"][0].get<double>())),
                         static_cast<int>(std::lround(b["box"][1].get<double>())),
                         static_cast<int>(std::lround(b["box"][2].get<double>())),
                         static_cast<int>(std::lround(b["box"][3].get<double>()))};
            if (b.contains("reason") && b["reason"].is_string()) c.reason = b["reason"];
            boxes.push_back(c);
        }
        return pick_closest_box(images, std::move(boxes), color);
    };
    return ask(req, backend, t, parse, ErrorCode::NoCandidate, "patch selection");
}

PatchChoice exhaustive_patch_search(const std::vector<Image>& images, Rgb color, int patch_size, int stride,
                                    const std::vector<TexelMask>* valid) {
    if (images.empty()) throw Error(ErrorCode::Validation, "exhaustive_patch_search needs at least one image");
    if (patch_size < 1) throw Error(ErrorCode::Validation, "patch_size must be >= 1");
    if (stride <= 0) stride = std::max(1, patch_size / 2);
    std::optional<PatchChoice> best;
    for (int idx = 0; idx < static_cast<int>(images.size()); ++idx) {
        const Image& img = images[idx];
        const int W = img.width, H = img.height;
        const int ps = std::min({patch_size, W, H});
        const TexelMask* vm = valid && idx < static_cast<int>(valid->size()) ? &(*valid)[idx] : nullptr;
        // integral images: RGB sums and invalid-texel counts
        const std::size_t stridex = static_cast<std::size_t>(W) + 1;
        std::vector<double> sum[3];
        for (auto& s : sum) s.assign(stridex * (H + 1), 0.0);
        std::vector<int> bad(stridex * (H + 1), 0);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const Rgb p = img.rgb(x, y);
                const double v[3] = {double(p.r), double(p.g), double(p.b)};
                const std::size_t i = (y + 1) * stridex + (x + 1);
                for (int c = 0; c < 3; ++c) sum[c][i] = v[c] + sum[c][i - 1] + sum[c][i - stridex] - sum[c][i - stridex - 1];
                bad[i] = (vm && !vm->get(x, y) ? 1 : 0) + bad[i - 1] + bad[i - stridex] - bad[i - stridex - 1];
            }
        auto box_sum = [&](const auto& s, int x, int y) {
            return s[(y + ps) * stridex + x + ps] - s[y * stridex + x + ps] - s[(y + ps) * stridex + x] + s[y * stridex + x];
        };
        const double n = double(ps) * ps;
        for (int y = 0; y + ps <= H; y += stride)
            for (int x = 0; x + ps <= W; x += stride) {
                if (vm && box_sum(bad, x, y) > 0) continue;
                const double dr = box_sum(sum[0], x, y) / n - color.r;
                const double dg = box_sum(sum[1], x, y) / n - color.g;
                const double db = box_sum(sum[2], x, y) / n - color.b;
                const double d = std::sqrt(dr * dr + dg * dg + db * db);
                if (!best || d < best->distance - 1e-9) best = PatchChoice{idx, Rect{x, y, ps, ps}, "exhaustive", d};
            }
    }
    if (!best) throw Error(ErrorCode::NoCandidate, "no valid window for exhaustive patch search");
    return *best;
}

std::string describe_texture_style(const Image& atlas) {
    std::map<std::string, std::size_t> votes;
    const int step = std::max(1, std::max(atlas.width, atlas.height) / 128);
    for (int y = 0; y < atlas.height; y += step)
        for (int x = 0; x < atlas.width; x += step) {
            if (atlas.channels == 4 && atlas.at(x, y, 3) == 0) continue;
            ++votes[nearest_color_name(atlas.rgb(x, y))];
        }
    if (votes.empty()) return "plain untextured surface";
    std::vector<std::pair<std::size_t, std::string>> ranked;
    for (auto& [name, count] : votes) ranked.emplace_back(count, name);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::string out = "existing texture dominated by " + ranked[0].second;
    if (ranked.size() > 1 && ranked[1].first * 10 >= ranked[0].first) out += " and " + ranked[1].second;
    return out + " tones";
}

std::string intent_completion(const std::vector<std::string>& semantics, int n) {
    nlohmann::json preds = nlohmann::json::array();
    for (int i = 0; i < n && i < static_cast<int>(semantics.size()); ++i)
        preds.push_back({{"rank", i + 1}, {"semantic", semantics[i]}, {"rationale", "matches the scribble color"}});
    return nlohmann::json{{"predictions", preds}}.dump();
}

double evaluate_intent_accuracy(const std::vector<EvalCase>& cases, int n_predictions, ChatBackend& backend,
                                const Lexicon& lex, const PromptTemplates& t) {
    if (cases.empty()) throw Error(ErrorCode::Validation, "evaluation needs at least one case");
    auto* mock = dynamic_cast<MockChatBackend*>(&backend);
    std::size_t correct = 0;
    for (const auto& c : cases) {
        IntentQuery q = c.query;
        q.n = n_predictions;
        if (mock && !c.canned_predictions.empty()) {
            std::vector<std::string> padded = c.canned_predictions;
            for (int k = 1; static_cast<int>(padded.size()) < n_predictions; ++k)
                padded.push_back("unrelated pattern " + std::to_string(k));
            mock->add_canned(request_key(build_intent_request(q, t)), {intent_completion(padded, n_predictions)});
        }
        const auto result = predict_intent(q, backend, t);
        const bool hit = std::any_of(result.predictions.begin(), result.predictions.end(),
                                     [&](const auto& p) { return lex.matches_any(p.semantic, c.truth_keywords); });
        correct += hit ? 1 : 0;
    }
    return double(correct) / double(cases.size());
}

// ---- mock model ----------------------------------------------------------------

namespace {

const std::map<std::string, std::vector<std::string>>& semantic_catalog() {
    static const std::map<std::string, std::vector<std::string>> cat = {
        {"red", {"lava", "red flowers", "red bricks", "rust", "red paint"}},
        {"dark red", {"rust", "red bricks", "dried blood", "maroon fabric"}},
        {"orange", {"autumn leaves", "orange flames", "rust", "orange fruit"}},
        {"yellow", {"yellow flowers", "sand", "gold", "straw"}},
        {"gold", {"gold", "golden sand", "straw", "brass"}},
        {"green", {"green grass", "moss", "green leaves", "green and black checkerboard pattern"}},
        {"dark green", {"moss", "pine forest", "green leaves", "ivy"}},
        {"lime", {"green grass", "green leaves", "lime paint", "algae"}},
        {"cyan", {"water", "ice", "turquoise tiles", "glass"}},
        {"blue", {"water", "blue sky", "blue stripes", "denim fabric"}},
        {"navy", {"deep water", "denim fabric", "night sky", "navy stripes"}},
        {"purple", {"purple flowers", "amethyst crystals", "purple fabric", "lavender field"}},
        {"magenta", {"pink flowers", "magenta paint", "orchids", "neon lights"}},
        {"pink", {"pink flowers", "cherry blossoms", "pink fabric", "pink paint"}},
        {"brown", {"wood", "soil", "brown fur", "tree bark"}},
        {"tan", {"sand", "leather", "wood", "dry grass"}},
        {"white", {"snow", "clouds", "white marble", "white paint"}},
        {"light gray", {"stone", "concrete", "fog", "silver metal"}},
        {"gray", {"stone", "rock", "concrete", "gravel"}},
        {"dark gray", {"asphalt", "rock", "charcoal", "slate"}},
        {"black", {"black stripes", "soot", "black leather", "night sky"}},
    };
    return cat;
}

std::optional<std::string> capture(const std::string& text, const std::regex& re) {
    std::smatch m;
    if (std::regex_search(text, m, re)) return m[1].str();
    return std::nullopt;
}

}  // namespace

ChatResponder default_mock_responder() {
    return [](const ChatRequest& req, int index) -> std::string {
        const std::string& u = req.user_text;
        static const std::regex n_preds(R"(Return exactly (\d+) predictions)");
        static const std::regex color_re(R"(The scribble color is ([a-z ]+) \()");
        static const std::regex semantic_re(R"(Local semantic: \"([^\"]*)\")");
        static const std::regex n_prompts(R"(Write exactly (\d+))");
        if (auto n = capture(u, n_preds)) {
            const std::string color = capture(u, color_re).value_or("gray");
            auto it = semantic_catalog().find(color);
            std::vector<std::string> sems = it != semantic_catalog().end() ? it->second : std::vector<std::string>{};
            if (sems.empty()) sems.push_back(color + " paint");
            const int want = std::stoi(*n);
            for (int k = 1; static_cast<int>(sems.size()) < want; ++k)
                sems.push_back(color + " pattern " + std::to_string(k));
            std::rotate(sems.begin(), sems.begin() + (index % sems.size()), sems.end());
            return intent_completion(sems, want);
        }
        if (auto n = capture(u, n_prompts); n && u.find("Local semantic") != std::string::npos &&
                                             req.images.empty()) {
            static const std::regex color_line(R"(Color: ([a-z ]+) \()");
            const std::string sem = capture(u, semantic_re).value_or("texture");
            const std::string color = capture(u, color_line).value_or("gray");
            static const char* scenes[] = {"a wide landscape photograph featuring", "a close-up scene full of",
                                           "a sunlit outdoor view dominated by", "a detailed natural setting covered in"};
            nlohmann::json prompts = nlohmann::json::array();
            for (int i = 0; i < std::stoi(*n); ++i)
                prompts.push_back(std::string(scenes[i % 4]) + " " + sem + " in " + color + " tones, high detail");
            return nlohmann::json{{"prompts", prompts}}.dump();
        }
        if (u.find("Return one box per image") != std::string::npos) {
            nlohmann::json boxes = nlohmann::json::array();
            for (std::size_t i = 0; i < req.images.size(); ++i) {
                const int w = req.images[i].width, h = req.images[i].height;
                boxes.push_back({{"image_index", i}, {"box", {w / 4, h / 4, w / 2, h / 2}}, {"reason", "central area"}});
            }
            return nlohmann::json{{"boxes", boxes}}.dump();
        }
        return "I am not sure what you mean.";
    };
}

// ---- evaluation manifest -------------------------------------------------------

std::vector<EvalCase> load_eval_manifest(const std::filesystem::path& path, const std::string& canned_field,
                                         int resolution) {
    const auto j = nlohmann::json::parse(read_text(path), nullptr, false);
    if (!j.is_array()) throw Error(ErrorCode::Validation, "eval manifest must be a JSON array");
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) { return std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p; };
    std::map<std::string, std::shared_ptr<TexturedMesh>> meshes;
    std::vector<EvalCase> cases;
    for (const auto& e : j) {
        EvalCase c;
        c.id = e.at("id").get<std::string>();
        const std::string mesh_path = e.at("mesh").get<std::string>();
        const std::string atlas_path = e.at("atlas").get<std::string>();
        auto& mesh = meshes[mesh_path + "|" + atlas_path];
        if (!mesh) mesh = std::make_shared<TexturedMesh>(load_mesh(resolve(mesh_path), resolve(atlas_path)));
        std::vector<Stroke> strokes;
        for (const auto& s : e.at("strokes")) strokes.push_back(stroke_from_json(s));
        if (strokes.empty()) throw Error(ErrorCode::EmptyScribble, "case " + c.id + " has no strokes");
        const auto views = intent_views(kDefaultFov, kDefaultDistance, resolution);
        NamedView source = preset_view(strokes.front().view_id, kDefaultFov, kDefaultDistance, resolution);
        for (const auto& v : views) c.query.views.push_back(render(*mesh, v.spec, RenderMode::Textured).color);
        const ViewFrame frame = render(*mesh, source.spec, RenderMode::Textured);
        const auto regions = rasterize_strokes(strokes, frame, source.id);
        c.query.color = regions.front().color;
        std::vector<const ScribbleRegion*> ptrs;
        for (const auto& r : regions) ptrs.push_back(&r);
        c.query.scribble_view = scribble_overlay(frame.color, ptrs);
        if (e.contains("hint") && e["hint"].is_string()) c.query.hint = e["hint"].get<std::string>();
        c.truth_keywords = e.at("truth_keywords").get<std::vector<std::string>>();
        if (e.contains(canned_field)) c.canned_predictions = e[canned_field].get<std::vector<std::string>>();
        cases.push_back(std::move(c));
    }
    return cases;
}

}  // namespace scribtex
