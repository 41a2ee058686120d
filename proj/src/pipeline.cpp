#include "scribtex/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <zlib.h>

#include "scribtex/error.hpp"
#include "scribtex/mask_mapping.hpp"
#include "scribtex/morphology.hpp"
#include "scribtex/texturing.hpp"

namespace fs = std::filesystem;

namespace scribtex {

namespace {

const char* kStateNames[] = {"Scribbled", "Refined", "IntentPredicted", "PatchChosen", "Stamped", "Integrated"};
const char* kStageNames[] = {"scribble", "refine", "intent", "patch", "stamp", "integrate"};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const fs::path& p, std::string_view bytes) {
    fs::create_directories(p.parent_path());
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
    }
    fs::rename(tmp, p);
}

void write_json(const fs::path& p, const nlohmann::json& j) { write_file(p, j.dump(2) + "\n"); }
nlohmann::json read_json(const fs::path& p) {
    auto j = nlohmann::json::parse(read_file(p), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::Validation, "corrupt JSON in " + p.string());
    return j;
}

void save_png(const fs::path& p, const Image& img) {
    const auto bytes = encode_png(img);
    write_file(p, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

nlohmann::json rgb_json(Rgb c) { return {c.r, c.g, c.b}; }
Rgb rgb_from(const nlohmann::json& j) {
    return Rgb{j.at(0).get<std::uint8_t>(), j.at(1).get<std::uint8_t>(), j.at(2).get<std::uint8_t>()};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string new_session_id() {
    std::random_device rd;
    std::uint64_t x = (std::uint64_t(rd()) << 32) ^ rd();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(splitmix64(x)));
    return std::string(buf, 12);
}

const char* kServiceNames[] = {"chat", "gen", "inpaint", "segment"};

}  // namespace

std::string to_string(RegionState s) { return kStateNames[static_cast<int>(s)]; }

RegionState parse_state(const std::string& s) {
    for (int i = 0; i < 6; ++i)
        if (s == kStateNames[i] || s == kStageNames[i]) return static_cast<RegionState>(i);
    throw Error(ErrorCode::Validation, "unknown stage '" + s + "'");
}

std::uint64_t stage_seed(std::uint64_t base, const std::string& region, const std::string& stage, int index) {
    return splitmix64(base ^ splitmix64(fnv1a(region + "/" + stage) + static_cast<std::uint64_t>(index)));
}

// ---- zip ---------------------------------------------------------------------

std::vector<std::uint8_t> make_zip(const std::vector<std::pair<std::string, std::vector<std::uint8_t>>>& files) {
    std::vector<std::uint8_t> out, central;
    auto u16 = [](std::vector<std::uint8_t>& v, std::uint32_t x) {
        v.push_back(x & 0xFF);
        v.push_back((x >> 8) & 0xFF);
    };
    auto u32 = [&](std::vector<std::uint8_t>& v, std::uint32_t x) {
        u16(v, x & 0xFFFF);
        u16(v, x >> 16);
    };
    for (const auto& [name, data] : files) {
        const std::uint32_t crc = crc32(0L, data.data(), static_cast<uInt>(data.size()));
        const std::uint32_t offset = static_cast<std::uint32_t>(out.size());
        const auto size = static_cast<std::uint32_t>(data.size());
        u32(out, 0x04034b50);
        u16(out, 20);
        u16(out, 0);
        u16(out, 0);  // stored
        u16(out, 0);
        u16(out, 0x21);  // 1980-01-01
        u32(out, crc);
        u32(out, size);
        u32(out, size);
        u16(out, static_cast<std::uint32_t>(name.size()));
        u16(out, 0);
        out.insert(out.end(), name.begin(), name.end());
        out.insert(out.end(), data.begin(), data.end());

        u32(central, 0x02014b50);
        u16(central, 20);
        u16(central, 20);
        u16(central, 0);
        u16(central, 0);
        u16(central, 0);
        u16(central, 0x21);
        u32(central, crc);
        u32(central, size);
        u32(central, size);
        u16(central, static_cast<std::uint32_t>(name.size()));
        u16(central, 0);
        u16(central, 0);
        u16(central, 0);
        u16(central, 0);
        u32(central, 0);
        u32(central, offset);
        central.insert(central.end(), name.begin(), name.end());
    }
    const auto cd_offset = static_cast<std::uint32_t>(out.size());
    out.insert(out.end(), central.begin(), central.end());
    u32(out, 0x06054b50);
    u16(out, 0);
    u16(out, 0);
    u16(out, static_cast<std::uint32_t>(files.size()));
    u16(out, static_cast<std::uint32_t>(files.size()));
    u32(out, static_cast<std::uint32_t>(central.size()));
    u32(out, cd_offset);
    u16(out, 0);
    return out;
}

// ---- session internals ------------------------------------------------------

struct Session::Impl {
    Session& s;
    TexturedMesh mesh;  // source atlas
    std::vector<RegionRecord> regions;
    int next_region = 0;
    std::string created;
    PromptTemplates templates;
    Lexicon lex;
    std::optional<std::vector<int>> labels;
    std::function<void(const nlohmann::json&)> sink;
    std::uint64_t event_seq = 0;

    explicit Impl(Session& owner) : s(owner) {}

    fs::path rdir(const std::string& rid) const { return s.dir_ / "regions" / rid; }
    std::string rel(const fs::path& p) const { return fs::relative(p, s.dir_).generic_string(); }

    RegionRecord& rec(const std::string& rid) {
        for (auto& r : regions)
            if (r.id == rid) return r;
        throw Error(ErrorCode::NotFound, "no region '" + rid + "'");
    }

    const std::vector<int>& island_labels() {
        if (!labels) labels = island_texel_labels(mesh);
        return *labels;
    }

    Image current_atlas() const {
        const fs::path cur = s.dir_ / "current" / "atlas.png";
        return fs::exists(cur) ? read_png(cur) : mesh.atlas;
    }

    TexturedMesh mesh_with(const Image& atlas) const {
        TexturedMesh m = mesh;
        m.atlas = to_rgba(atlas);
        return m;
    }

    NamedView view(const std::string& id) const {
        return preset_view(id, s.cfg_.fov, s.cfg_.distance, s.cfg_.resolution);
    }

    void save() const {
        nlohmann::json regs = nlohmann::json::array();
        for (const auto& r : regions) {
            nlohmann::json j = {{"id", r.id},
                                {"state", to_string(r.state)},
                                {"color", rgb_json(r.color)},
                                {"view_id", r.view_id},
                                {"intent_rank", r.intent_rank}};
            if (r.hint) j["hint"] = *r.hint;
            if (!r.parent.empty()) j["parent"] = r.parent;
            if (!r.error.empty()) j["error"] = {{"message", r.error}, {"stage", r.error_stage}};
            regs.push_back(j);
        }
        write_json(s.dir_ / "session.json", {{"id", s.id_},
                                             {"created", created},
                                             {"mesh", "source/mesh.obj"},
                                             {"atlas", "source/atlas.png"},
                                             {"next_region", next_region},
                                             {"config", s.cfg_.to_json()},
                                             {"regions", regs}});
    }

    void emit(const std::string& type, const std::string& region, const std::string& stage,
              const std::vector<std::string>& artifacts = {}, const std::string& message = {}) {
        nlohmann::json e = {{"seq", ++event_seq}, {"type", type}, {"region", region}, {"stage", stage}};
        if (!artifacts.empty()) e["artifacts"] = artifacts;
        if (!message.empty()) e["message"] = message;
        {
            std::ofstream out(s.events_path(), std::ios::app);
            out << e.dump() << "\n";
        }
        if (sink) sink(e);
    }

    std::map<std::string, std::size_t> call_counts() const {
        std::map<std::string, std::size_t> c;
        for (const char* name : kServiceNames) c[name] = s.transcript_->count(name);
        return c;
    }

    ScribbleRegion scribble(const RegionRecord& r) const {
        const fs::path own = rdir(r.id) / "screen_mask.png";
        const fs::path src = r.parent.empty() ? own : rdir(r.parent) / "screen_mask.png";
        return ScribbleRegion{r.id, r.color, read_png(fs::exists(own) ? own : src), r.view_id, r.hint};
    }

    TexelMask texel_mask(const std::string& rid) const {
        return TexelMask::from_image(read_png(rdir(rid) / "texel_mask.png"));
    }

    /// Runs one stage body under the bookkeeping contract: events, timing, call
    /// counts, persisted state, error recording, halting.
    template <typename Body>
    void stage(const std::string& rid, RegionState target, const RunOptions& opts, Body body) {
        RegionRecord& r = rec(rid);
        if (r.state >= target) return;
        const std::string name = kStageNames[static_cast<int>(target)];
        emit("stage-started", rid, name);
        const auto t0 = std::chrono::steady_clock::now();
        const auto before = call_counts();
        std::vector<std::string> artifacts;
        try {
            artifacts = body(r);
        } catch (const Error& e) {
            RegionRecord& again = rec(rid);
            again.error = e.what();
            again.error_stage = name;
            save();
            emit("stage-failed", rid, name, {}, std::string(to_string(e.code())) + ": " + e.what());
            throw;
        }
        const auto after = call_counts();
        nlohmann::json calls = nlohmann::json::object();
        for (const auto& [k, v] : after) calls[k] = v - before.at(k);
        const fs::path stages_file = rdir(rid) / "stages.json";
        nlohmann::json stages = fs::exists(stages_file) ? read_json(stages_file) : nlohmann::json::array();
        stages.push_back({{"stage", name}, {"seconds", seconds_since(t0)}, {"calls", calls}, {"artifacts", artifacts}});
        write_json(stages_file, stages);
        RegionRecord& done = rec(rid);
        done.state = target;
        done.error.clear();
        done.error_stage.clear();
        save();
        emit("stage-finished", rid, name, artifacts);
        if (opts.halt_after && *opts.halt_after == target)
            throw Error(ErrorCode::Halted, "halted after " + to_string(target));
    }

    // -- stages --------------------------------------------------------------

    void refine_stage(const std::string& rid, const RunOptions& opts) {
        stage(rid, RegionState::Refined, opts, [&](RegionRecord& r) {
            const fs::path d = rdir(r.id);
            const ScribbleRegion sr = scribble(r);
            const NamedView src = view(r.view_id);
            TexelMask mask;
            nlohmann::json trace = {{"refinement", s.cfg_.refinement_enabled ? "enabled" : "disabled"}};
            std::vector<std::string> artifacts;
            if (s.cfg_.refinement_enabled) {
                RefinementTrace t;
                try {
                    t = refine_region(mesh, sr, src, coverage_views(s.cfg_.fov, s.cfg_.distance, s.cfg_.resolution),
                                      *s.backends_.seg);
                } catch (const RefinementError& e) {
                    save_png(d / "refine" / "partial_texel_mask.png", e.partial().final.to_image());
                    throw;
                }
                nlohmann::json steps = nlohmann::json::array();
                for (std::size_t k = 0; k < t.steps.size(); ++k) {
                    const auto& st = t.steps[k];
                    steps.push_back({{"view", st.view_id}, {"texels", st.texel_mask.count()}});
                    if (opts.dump_stages) {
                        const fs::path sd = d / "refine" / (std::to_string(k) + "-" + st.view_id);
                        save_png(sd / "prompt.png", st.input_mask);
                        save_png(sd / "segment.png", st.segmentation);
                        save_png(sd / "texel_mask.png", st.texel_mask.to_image());
                        artifacts.push_back(rel(sd / "segment.png"));
                    }
                }
                trace["steps"] = steps;
                mask = t.final;
            } else {
                const ViewFrame frame = render(mesh, src.spec, RenderMode::Geometry);
                mask = bypass_refinement(mesh, sr, frame);
            }
            trace["texels"] = mask.count();
            write_json(d / "refine" / "trace.json", trace);
            save_png(d / "texel_mask.png", mask.to_image());
            artifacts.insert(artifacts.begin(), rel(d / "texel_mask.png"));
            return artifacts;
        });
    }

    void intent_stage(const std::string& rid, const RunOptions& opts) {
        stage(rid, RegionState::IntentPredicted, opts, [&](RegionRecord& r) {
            const fs::path d = rdir(r.id);
            const TexturedMesh m = mesh_with(current_atlas());
            IntentQuery q;
            for (const auto& v : intent_views(s.cfg_.fov, s.cfg_.distance, s.cfg_.resolution))
                q.views.push_back(render(m, v.spec, RenderMode::Textured).color);
            const ViewFrame frame = render(m, view(r.view_id).spec, RenderMode::Textured);
            const ScribbleRegion sr = scribble(r);
            q.scribble_view = scribble_overlay(frame.color, {&sr});
            q.color = r.color;
            q.hint = r.hint;
            q.n = s.cfg_.n_intents;
            const IntentResult res = predict_intent(q, *s.backends_.chat, templates);
            nlohmann::json preds = nlohmann::json::array();
            for (const auto& p : res.predictions)
                preds.push_back({{"rank", p.rank}, {"semantic", p.semantic}, {"rationale", p.rationale}});
            write_json(d / "intents.json", {{"style", res.style}, {"predictions", preds}});
            std::vector<std::string> artifacts = {rel(d / "intents.json")};
            if (opts.dump_stages) {
                for (std::size_t k = 0; k < q.views.size(); ++k)
                    save_png(d / "intent_views" / ("view-" + std::to_string(k) + ".png"), q.views[k]);
                save_png(d / "intent_views" / "scribble.png", q.scribble_view);
                artifacts.push_back(rel(d / "intent_views" / "scribble.png"));
            }
            return artifacts;
        });
    }

    IntentResult load_intents(const std::string& rid) const {
        const auto j = read_json(rdir(rid) / "intents.json");
        IntentResult res;
        res.style = j.value("style", "");
        for (const auto& p : j.at("predictions"))
            res.predictions.push_back({p.at("semantic"), p.value("rationale", ""), p.at("rank")});
        return res;
    }

    void patch_stage(const std::string& rid, int rank, const RunOptions& opts) {
        stage(rid, RegionState::PatchChosen, opts, [&](RegionRecord& r) {
            const fs::path d = rdir(r.id);
            const IntentResult intents = load_intents(r.id);
            if (rank < 1 || rank > static_cast<int>(intents.predictions.size()))
                throw Error(ErrorCode::Validation, "intent rank " + std::to_string(rank) + " out of range");
            const IntentPrediction& pred = intents.predictions[rank - 1];
            const Image atlas = to_rgb(current_atlas());
            const TexelMask R = texel_mask(r.id);
            const int side = std::min({default_patch_side(R.bbox()), atlas.width, atlas.height});
            const std::string style = intents.style.empty() ? describe_texture_style(atlas) : intents.style;

            nlohmann::json info = {{"rank", rank}, {"semantic", pred.semantic}, {"style", style}};
            std::vector<std::string> artifacts;
            std::optional<TexturePatch> patch;

            std::vector<std::uint32_t> all_islands(mesh.islands.size());
            for (std::uint32_t i = 0; i < all_islands.size(); ++i) all_islands[i] = i;
            const std::vector<TexelMask> valid = {island_coverage(mesh, all_islands).minus(R)};
            try {
                const PatchChoice c = exhaustive_patch_search({atlas}, r.color, side, 0, &valid);
                info["atlas_candidate"] = {{"box", {c.box.x, c.box.y, c.box.w, c.box.h}}, {"distance", c.distance}};
                if (c.distance < s.cfg_.atlas_priority_threshold) {
                    patch = TexturePatch::from_crop(atlas, c.box, "atlas", 0);
                    info["source"] = "atlas";
                    info["choice"] = {{"image_index", 0}, {"box", {c.box.x, c.box.y, c.box.w, c.box.h}},
                                      {"distance", c.distance}, {"reason", "existing texture matches the color"}};
                }
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NoCandidate) throw;
            }

            if (!patch) {
                const auto prompts = make_global_prompts(pred, r.color, style, s.cfg_.n_global_prompts,
                                                         *s.backends_.chat, templates, lex);
                nlohmann::json pj = nlohmann::json::array();
                for (const auto& p : prompts) pj.push_back(p.text);
                info["prompts"] = pj;
                std::vector<Image> images;
                for (std::size_t k = 0; k < prompts.size(); ++k) {
                    GenImageRequest req;
                    req.prompt = prompts[k].text;
                    req.guidance_scale = s.cfg_.guidance_scale;
                    req.seed = stage_seed(s.cfg_.seed, r.id, "generate", static_cast<int>(k));
                    req.count = 1;
                    req.width = req.height = s.cfg_.image_size;
                    images.push_back(generate_images(req, *s.backends_.gen).front());
                    const fs::path gp = d / "generated" / ("image-" + std::to_string(k) + ".png");
                    save_png(gp, images.back());
                    artifacts.push_back(rel(gp));
                }
                PatchChoice c;
                try {
                    c = choose_patch(images, pred.semantic, r.color, *s.backends_.chat, templates);
                    info["selection"] = "chat";
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::NoCandidate) throw;
                    c = exhaustive_patch_search(images, r.color, std::max(1, s.cfg_.image_size / 4));
                    info["selection"] = "exhaustive";
                }
                patch = TexturePatch::from_crop(images[c.image_index], c.box, "global", c.image_index);
                info["source"] = "global";
                info["choice"] = {{"image_index", c.image_index}, {"box", {c.box.x, c.box.y, c.box.w, c.box.h}},
                                  {"distance", c.distance}, {"reason", c.reason}};
            }
            save_png(d / "patch.png", patch->pixels);
            write_json(d / "patch.json", info);
            r.intent_rank = rank;
            artifacts.insert(artifacts.begin(), {rel(d / "patch.json"), rel(d / "patch.png")});
            return artifacts;
        });
    }

    TexturePatch load_patch(const std::string& rid) const {
        const auto info = read_json(rdir(rid) / "patch.json");
        const Image px = read_png(rdir(rid) / "patch.png");
        const auto& b = info.at("choice").at("box");
        TexturePatch p = TexturePatch::from_crop(px, Rect{0, 0, px.width, px.height}, info.at("source"),
                                                 info.at("choice").at("image_index"));
        p.box = Rect{b[0], b[1], b[2], b[3]};
        return p;
    }

    /// Stamps a region onto `atlas`, persisting its plan and gap.
    StampResult stamp_one(const std::string& rid, const Image& atlas) {
        const fs::path d = rdir(rid);
        const RegionStamp rs =
            stamp_region(to_rgb(atlas), texel_mask(rid), island_labels(), load_patch(rid), s.cfg_.erosion_radius);
        nlohmann::json plans = nlohmann::json::array();
        for (const auto& is : rs.islands) plans.push_back(plan_to_json(is.plan));
        write_json(d / "plan.json", plans);
        save_png(d / "gap.png", rs.result.gap.to_image());
        save_png(d / "stamped.png", rs.result.stamped.to_image());
        return rs.result;
    }

    /// Integrates with per-pass persistence under `work`; returns the final atlas.
    Image integrate_dir(const fs::path& work, const Image& stamped, const TexelMask& gap, const std::string& prompt,
                        const std::string& seed_key, const RunOptions& opts, nlohmann::json& passes_out) {
        IntegrateState st;
        const fs::path state_file = work / "state.json";
        if (fs::exists(state_file)) {
            const auto j = read_json(state_file);
            st.atlas = read_png(work / "atlas.png");
            st.gap = gap;
            const std::string w = read_file(work / "weight.f32");
            st.weight.resize(w.size() / sizeof(float));
            std::memcpy(st.weight.data(), w.data(), w.size());
            st.next_view = j.at("next_view");
            passes_out = j.at("passes");
        } else {
            st = begin_integrate(stamped, gap);
            passes_out = nlohmann::json::array();
        }
        const auto views = coverage_views(s.cfg_.fov, s.cfg_.distance, s.cfg_.resolution);
        const TexturedMesh m = mesh_with(stamped);
        const IntegrateResult res =
            integrate(m, std::move(st), prompt, views, *s.backends_.inpaint, stage_seed(s.cfg_.seed, seed_key, "inpaint", 0),
                      [&](const IntegrateState& state, const IntegratePass& pass) {
                          passes_out.push_back({{"view", pass.view_id},
                                                {"mask_pixels", pass.mask_pixels},
                                                {"skipped", pass.skipped},
                                                {"texels_written", pass.texels_written}});
                          save_png(work / "atlas.png", state.atlas);
                          write_file(work / "weight.f32",
                                     std::string_view(reinterpret_cast<const char*>(state.weight.data()),
                                                      state.weight.size() * sizeof(float)));
                          write_json(state_file, {{"next_view", state.next_view}, {"passes", passes_out}});
                          if (opts.dump_stages)
                              save_png(work / ("pass-" + std::to_string(state.next_view - 1) + "-" + pass.view_id + ".png"),
                                       state.atlas);
                      });
        nlohmann::json summary = {{"next_view", views.size()}, {"passes", passes_out},
                                  {"fallback_texels", res.fallback_texels}};
        write_json(state_file, summary);
        return res.atlas;
    }

    void publish_atlas(const Image& atlas) { save_png(s.dir_ / "current" / "atlas.png", atlas); }

    void stamp_stage(const std::string& rid, const RunOptions& opts) {
        stage(rid, RegionState::Stamped, opts, [&](RegionRecord& r) {
            const StampResult res = stamp_one(r.id, current_atlas());
            save_png(rdir(r.id) / "stamped_atlas.png", res.atlas);
            return std::vector<std::string>{rel(rdir(r.id) / "stamped_atlas.png"), rel(rdir(r.id) / "plan.json"),
                                            rel(rdir(r.id) / "gap.png")};
        });
    }

    void integrate_stage(const std::string& rid, const RunOptions& opts) {
        stage(rid, RegionState::Integrated, opts, [&](RegionRecord& r) {
            const fs::path d = rdir(r.id);
            const auto intents = load_intents(r.id);
            const std::string prompt = intents.predictions.at(r.intent_rank - 1).semantic;
            nlohmann::json passes;
            const Image final_atlas =
                integrate_dir(d / "integrate", read_png(d / "stamped_atlas.png"),
                              TexelMask::from_image(read_png(d / "gap.png")), prompt, r.id, opts, passes);
            save_png(d / "final_atlas.png", final_atlas);
            publish_atlas(final_atlas);
            return std::vector<std::string>{rel(d / "final_atlas.png"), "current/atlas.png"};
        });
    }

    std::string fork(const RegionRecord& base, int rank) {
        const std::string id = (base.parent.empty() ? base.id : base.parent) + "-r" + std::to_string(rank);
        for (const auto& r : regions)
            if (r.id == id) return id;
        const fs::path from = rdir(base.id), to = rdir(id);
        fs::create_directories(to / "refine");
        for (const char* f : {"screen_mask.png", "strokes.json", "texel_mask.png", "intents.json", "refine/trace.json"})
            if (fs::exists(from / f)) fs::copy_file(from / f, to / f, fs::copy_options::overwrite_existing);
        RegionRecord r = base;
        r.id = id;
        r.parent = base.parent.empty() ? base.id : base.parent;
        r.state = RegionState::IntentPredicted;
        r.intent_rank = 0;
        r.error.clear();
        r.error_stage.clear();
        regions.push_back(r);
        save();
        emit("region-forked", id, "intent", {}, "alternate intent rank " + std::to_string(rank));
        return id;
    }

    nlohmann::json report(const std::string& rid) {
        const RegionRecord& r = rec(rid);
        const fs::path d = rdir(rid);
        nlohmann::json rep = {{"session", s.id_},
                              {"region", r.id},
                              {"state", to_string(r.state)},
                              {"color", rgb_json(r.color)},
                              {"view_id", r.view_id},
                              {"intent_rank", r.intent_rank},
                              {"refinement", s.cfg_.refinement_enabled ? "area refinement: enabled"
                                                                       : "area refinement: disabled"},
                              {"templates_version", templates.version}};
        if (!r.parent.empty()) rep["parent"] = r.parent;
        if (r.hint) rep["hint"] = *r.hint;
        if (fs::exists(d / "intents.json")) {
            const auto intents = read_json(d / "intents.json");
            rep["predictions"] = intents.at("predictions");
            if (r.intent_rank > 0) rep["semantic"] = intents["predictions"][r.intent_rank - 1]["semantic"];
        }
        if (fs::exists(d / "patch.json")) rep["patch"] = read_json(d / "patch.json");
        if (fs::exists(d / "plan.json")) rep["placement"] = read_json(d / "plan.json");
        const fs::path istate = d / "integrate" / "state.json";
        if (fs::exists(istate)) rep["integrate"] = read_json(istate);
        nlohmann::json stages = fs::exists(d / "stages.json") ? read_json(d / "stages.json") : nlohmann::json::array();
        double total = 0;
        for (const auto& st : stages) total += st.value("seconds", 0.0);
        rep["stages"] = stages;
        rep["wall_clock_s"] = total;
        nlohmann::json calls = nlohmann::json::object();
        for (const auto& [k, v] : call_counts()) calls[k] = v;
        rep["backend_calls"] = calls;
        if (r.state == RegionState::Integrated) rep["final_atlas"] = rel(d / "final_atlas.png");
        if (!r.error.empty()) rep["error"] = {{"message", r.error}, {"stage", r.error_stage}};
        write_json(d / "report.json", rep);
        return rep;
    }

    void load_resources() {
        templates = s.cfg_.templates_dir.empty() ? PromptTemplates::bundled() : PromptTemplates::load(s.cfg_.templates_dir);
        lex = s.cfg_.synonyms_path.empty() ? Lexicon::bundled() : Lexicon::load(s.cfg_.synonyms_path);
        mesh = load_mesh(s.dir_ / "source" / "mesh.obj", s.dir_ / "source" / "atlas.png");
        if (fs::exists(s.events_path())) {
            std::ifstream in(s.events_path());
            std::string line;
            while (std::getline(in, line))
                if (!line.empty()) ++event_seq;
        }
    }
};

// ---- Session ------------------------------------------------------------------

Session::~Session() = default;

bool Session::exists(const fs::path& dir) { return fs::exists(dir / "session.json"); }

std::unique_ptr<Session> Session::create(const fs::path& dir, const fs::path& mesh_path, const fs::path& atlas_path,
                                         const PipelineConfig& cfg, std::string id) {
    cfg.validate();
    if (exists(dir)) throw Error(ErrorCode::Validation, "a session already exists in " + dir.string());
    // validate inputs before creating anything
    (void)load_mesh(mesh_path, atlas_path);
    std::unique_ptr<Session> s(new Session());
    s->id_ = id.empty() ? new_session_id() : std::move(id);
    s->dir_ = dir;
    s->cfg_ = cfg;
    fs::create_directories(dir / "source");
    fs::copy_file(mesh_path, dir / "source" / "mesh.obj", fs::copy_options::overwrite_existing);
    fs::copy_file(atlas_path, dir / "source" / "atlas.png", fs::copy_options::overwrite_existing);
    s->impl_ = std::make_unique<Impl>(*s);
    s->impl_->created = std::to_string(std::chrono::duration_cast<std::chrono::seconds>(
                                           std::chrono::system_clock::now().time_since_epoch())
                                           .count());
    s->impl_->load_resources();
    s->transcript_ = std::make_shared<Transcript>(dir / "transcript.jsonl");
    s->backends_ = make_backends(cfg);
    s->backends_.set_transcript(s->transcript_);
    s->impl_->save();
    return s;
}

std::unique_ptr<Session> Session::open(const fs::path& dir) {
    if (!exists(dir)) throw Error(ErrorCode::NotFound, "no session in " + dir.string());
    const auto j = read_json(dir / "session.json");
    std::unique_ptr<Session> s(new Session());
    s->id_ = j.at("id");
    s->dir_ = dir;
    s->cfg_ = PipelineConfig::from_json(j.at("config"));
    s->impl_ = std::make_unique<Impl>(*s);
    s->impl_->created = j.value("created", "");
    s->impl_->next_region = j.value("next_region", 0);
    for (const auto& r : j.at("regions")) {
        RegionRecord rec;
        rec.id = r.at("id");
        rec.state = parse_state(r.at("state"));
        rec.color = rgb_from(r.at("color"));
        rec.view_id = r.at("view_id");
        rec.intent_rank = r.value("intent_rank", 0);
        if (r.contains("hint")) rec.hint = r["hint"].get<std::string>();
        rec.parent = r.value("parent", "");
        if (r.contains("error")) {
            rec.error = r["error"].value("message", "");
            rec.error_stage = r["error"].value("stage", "");
        }
        s->impl_->regions.push_back(rec);
    }
    s->impl_->load_resources();
    s->transcript_ = std::make_shared<Transcript>(dir / "transcript.jsonl");
    s->backends_ = make_backends(s->cfg_);
    s->backends_.set_transcript(s->transcript_);
    return s;
}

std::vector<RegionRecord> Session::regions() const {
    std::lock_guard lock(mu_);
    return impl_->regions;
}

RegionRecord Session::region(const std::string& id) const {
    std::lock_guard lock(mu_);
    return impl_->rec(id);
}

nlohmann::json Session::summary() const {
    std::lock_guard lock(mu_);
    auto j = read_json(dir_ / "session.json");
    j["views"] = {};
    for (const auto& v : intent_views(cfg_.fov, cfg_.distance, cfg_.resolution)) j["views"].push_back(v.id);
    for (const auto& v : coverage_views(cfg_.fov, cfg_.distance, cfg_.resolution)) j["views"].push_back(v.id);
    j["current_atlas"] = fs::exists(dir_ / "current" / "atlas.png") ? "current/atlas.png" : "source/atlas.png";
    return j;
}

Image Session::current_atlas() const {
    std::lock_guard lock(mu_);
    return impl_->current_atlas();
}

fs::path Session::view_png(const std::string& view_id, RenderMode mode) {
    std::lock_guard lock(mu_);
    const NamedView v = impl_->view(view_id);
    const fs::path p = dir_ / "views" / view_id / (mode == RenderMode::Geometry ? "geometry.png" : "color.png");
    if (mode == RenderMode::Geometry && fs::exists(p)) return p;
    save_png(p, render(impl_->mesh_with(impl_->current_atlas()), v.spec, mode).color);
    return p;
}

std::vector<std::string> Session::add_regions(const StrokeSubmission& submission) {
    std::lock_guard lock(mu_);
    if (submission.strokes.empty()) throw Error(ErrorCode::EmptyScribble, "no strokes submitted");
    std::map<std::string, std::vector<Stroke>> by_view;
    std::vector<std::string> order;
    for (const auto& st : submission.strokes) {
        if (!by_view.contains(st.view_id)) order.push_back(st.view_id);
        by_view[st.view_id].push_back(st);
    }
    std::vector<std::string> ids;
    std::vector<std::pair<ScribbleRegion, std::vector<Stroke>>> made;
    for (const auto& vid : order) {
        const NamedView v = impl_->view(vid);
        const ViewFrame frame = render(impl_->mesh, v.spec, RenderMode::Geometry);
        for (auto& sr : rasterize_strokes(by_view[vid], frame, vid, submission.hint, "tmp-"))
            made.emplace_back(std::move(sr), by_view[vid]);
    }
    for (auto& [sr, strokes] : made) {
        RegionRecord r;
        r.id = "region-" + std::to_string(impl_->next_region++);
        r.color = sr.color;
        r.view_id = sr.view_id;
        r.hint = sr.hint;
        const fs::path d = impl_->rdir(r.id);
        save_png(d / "screen_mask.png", sr.screen_mask);
        nlohmann::json sj = nlohmann::json::array();
        for (const auto& st : strokes) sj.push_back(stroke_to_json(st));
        write_json(d / "strokes.json", sj);
        impl_->regions.push_back(r);
        ids.push_back(r.id);
    }
    impl_->save();
    for (const auto& id : ids) impl_->emit("region-added", id, "scribble", {impl_->rel(impl_->rdir(id) / "screen_mask.png")});
    return ids;
}

nlohmann::json Session::refine(const std::string& region_id, const RunOptions& opts) {
    std::lock_guard lock(mu_);
    impl_->refine_stage(region_id, opts);
    const fs::path d = impl_->rdir(region_id);
    return {{"region", region_id},
            {"texel_mask", impl_->rel(d / "texel_mask.png")},
            {"trace", read_json(d / "refine" / "trace.json")}};
}

nlohmann::json Session::intents(const std::string& region_id, const RunOptions& opts) {
    std::lock_guard lock(mu_);
    impl_->refine_stage(region_id, opts);
    impl_->intent_stage(region_id, opts);
    auto j = read_json(impl_->rdir(region_id) / "intents.json");
    j["region"] = region_id;
    j["chosen_rank"] = impl_->rec(region_id).intent_rank;
    return j;
}

nlohmann::json Session::run_edit(const std::string& region_id, std::optional<int> intent_rank, const RunOptions& opts) {
    std::lock_guard lock(mu_);
    const RegionRecord base = impl_->rec(region_id);
    if (intent_rank && (*intent_rank < 1 || *intent_rank > cfg_.n_intents))
        throw Error(ErrorCode::Validation, "intent rank must be in [1, " + std::to_string(cfg_.n_intents) + "]");
    std::string rid = region_id;
    int rank = intent_rank.value_or(base.intent_rank > 0 ? base.intent_rank : 1);
    if (base.state >= RegionState::PatchChosen && base.intent_rank != rank) rid = impl_->fork(base, rank);
    impl_->refine_stage(rid, opts);
    impl_->intent_stage(rid, opts);
    impl_->patch_stage(rid, rank, opts);
    impl_->stamp_stage(rid, opts);
    impl_->integrate_stage(rid, opts);
    return impl_->report(rid);
}

nlohmann::json Session::run_multi(const std::vector<std::string>& region_ids, const RunOptions& opts) {
    std::lock_guard lock(mu_);
    if (region_ids.empty()) throw Error(ErrorCode::Validation, "run_multi needs at least one region");
    std::set<std::string> uniq(region_ids.begin(), region_ids.end());
    if (uniq.size() != region_ids.size()) throw Error(ErrorCode::Validation, "duplicate region ids");
    for (const auto& id : region_ids) (void)impl_->rec(id);

    std::map<std::string, std::string> failed;  // id -> message
    auto isolated = [&](const std::string& id, auto&& fn) {
        if (failed.contains(id)) return;
        try {
            fn();
        } catch (const Error& e) {
            if (e.code() == ErrorCode::Halted) throw;
            failed[id] = std::string(to_string(e.code())) + ": " + e.what();
        }
    };
    for (const auto& id : region_ids) isolated(id, [&] { impl_->refine_stage(id, opts); });
    std::vector<std::string> ok;
    for (const auto& id : region_ids)
        if (!failed.contains(id)) ok.push_back(id);
    for (std::size_t a = 0; a < ok.size(); ++a)
        for (std::size_t b = a + 1; b < ok.size(); ++b)
            if (impl_->texel_mask(ok[a]).intersects(impl_->texel_mask(ok[b])))
                throw Error(ErrorCode::OverlappingRegions, "regions " + ok[a] + " and " + ok[b] + " overlap in texture space");
    for (const auto& id : ok) isolated(id, [&] { impl_->intent_stage(id, opts); });
    for (const auto& id : ok)
        isolated(id, [&] {
            const auto& r = impl_->rec(id);
            impl_->patch_stage(id, r.intent_rank > 0 ? r.intent_rank : 1, opts);
        });
    std::vector<std::string> live;
    for (const auto& id : ok)
        if (!failed.contains(id)) live.push_back(id);

    std::string key;
    for (const auto& id : live) key += (key.empty() ? "" : "+") + id;
    const fs::path work = dir_ / "multi" / (key.empty() ? "none" : key);
    nlohmann::json result = {{"session", id_}, {"regions", nlohmann::json::array()}};

    if (!live.empty()) {
        const bool all_stamped = std::all_of(live.begin(), live.end(), [&](const auto& id) {
            return impl_->rec(id).state >= RegionState::Stamped;
        });
        const bool all_done = std::all_of(live.begin(), live.end(), [&](const auto& id) {
            return impl_->rec(id).state >= RegionState::Integrated;
        });
        if (!all_done) {
            if (!all_stamped || !fs::exists(work / "stamped_atlas.png")) {
                Image atlas = to_rgb(impl_->current_atlas());
                TexelMask gap(atlas.width, atlas.height);
                for (const auto& id : live) {
                    impl_->rec(id).state = std::min(impl_->rec(id).state, RegionState::PatchChosen);
                    impl_->stage(id, RegionState::Stamped, RunOptions{}, [&](RegionRecord& r) {
                        const StampResult sr = impl_->stamp_one(r.id, atlas);
                        atlas = sr.atlas;
                        gap |= sr.gap;
                        return std::vector<std::string>{impl_->rel(impl_->rdir(r.id) / "plan.json"),
                                                        impl_->rel(impl_->rdir(r.id) / "gap.png")};
                    });
                }
                save_png(work / "stamped_atlas.png", atlas);
                save_png(work / "gap.png", gap.to_image());
                fs::remove_all(work / "integrate");
                if (opts.halt_after && *opts.halt_after == RegionState::Stamped)
                    throw Error(ErrorCode::Halted, "halted after Stamped");
            }
            std::string prompt;
            for (const auto& id : live) {
                const auto intents = impl_->load_intents(id);
                prompt += (prompt.empty() ? "" : ", ") + intents.predictions.at(impl_->rec(id).intent_rank - 1).semantic;
            }
            impl_->emit("stage-started", key, "integrate");
            const auto t0 = std::chrono::steady_clock::now();
            nlohmann::json passes;
            const Image final_atlas =
                impl_->integrate_dir(work / "integrate", read_png(work / "stamped_atlas.png"),
                                     TexelMask::from_image(read_png(work / "gap.png")), prompt, key, opts, passes);
            save_png(work / "final_atlas.png", final_atlas);
            impl_->publish_atlas(final_atlas);
            for (const auto& id : live) {
                impl_->rec(id).state = RegionState::Integrated;
                save_png(impl_->rdir(id) / "final_atlas.png", final_atlas);
            }
            impl_->save();
            write_json(work / "integrate_summary.json", {{"seconds", seconds_since(t0)}, {"passes", passes}, {"prompt", prompt}});
            impl_->emit("stage-finished", key, "integrate", {impl_->rel(work / "final_atlas.png")});
        }
        result["final_atlas"] = impl_->rel(work / "final_atlas.png");
        result["integrate"] = read_json(work / "integrate" / "state.json");
        result["union_gap"] = impl_->rel(work / "gap.png");
    }
    for (const auto& id : region_ids) {
        nlohmann::json r = impl_->report(id);
        if (failed.contains(id)) r["failure"] = failed[id];
        result["regions"].push_back(r);
    }
    result["failed"] = failed;
    result["refinement"] = cfg_.refinement_enabled ? "area refinement: enabled" : "area refinement: disabled";
    write_json(work / "report.json", result);
    return result;
}

std::vector<std::uint8_t> Session::export_zip() const {
    std::lock_guard lock(mu_);
    const fs::path tmp = dir_ / "export";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    const fs::path cur = fs::exists(dir_ / "current" / "atlas.png") ? dir_ / "current" / "atlas.png"
                                                                     : dir_ / "source" / "atlas.png";
    TexturedMesh m = load_mesh(dir_ / "source" / "mesh.obj", cur, MeshOptions{false});
    m.atlas = to_rgb(m.atlas);
    save_mesh(m, tmp / "mesh.obj", tmp / "atlas.png");
    std::vector<std::pair<std::string, std::vector<std::uint8_t>>> files;
    for (const char* name : {"mesh.obj", "mesh.mtl", "atlas.png"}) {
        const std::string bytes = read_file(tmp / name);
        files.emplace_back(name, std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
    }
    return make_zip(files);
}

void Session::set_event_sink(std::function<void(const nlohmann::json&)> sink) {
    std::lock_guard lock(mu_);
    impl_->sink = std::move(sink);
}

}  // namespace scribtex
