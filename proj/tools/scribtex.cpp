// scribtex command line: headless editing, the HTTP service, renders and the
// intent evaluation harness.
#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include "scribtex/config.hpp"
#include "scribtex/error.hpp"
#include "scribtex/intent.hpp"
#include "scribtex/pipeline.hpp"
#include "scribtex/renderer.hpp"
#include "scribtex/service.hpp"
#include "scribtex/shapes.hpp"

namespace fs = std::filesystem;
using namespace scribtex;

namespace {

Service* g_service = nullptr;

PipelineConfig load_config(const std::string& path) {
    return path.empty() ? PipelineConfig::defaults() : PipelineConfig::load(path);
}

nlohmann::json read_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + p.string());
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::Validation, p.string() + " is not valid JSON");
    return j;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + p.string());
    out << text;
}

struct EditArgs {
    std::string mesh, atlas, strokes, config, out, halt_after;
    bool dump_stages = false;
    int intent_rank = 0;
};

int cmd_edit(const EditArgs& a) {
    const fs::path out = a.out;
    RunOptions opts;
    opts.dump_stages = a.dump_stages;
    if (!a.halt_after.empty()) opts.halt_after = parse_state(a.halt_after);

    std::unique_ptr<Session> session;
    if (Session::exists(out)) {
        session = Session::open(out);
        std::cerr << "resuming session " << session->id() << " in " << out << "\n";
    } else {
        if (a.strokes.empty()) throw Error(ErrorCode::Validation, "--strokes is required for a new session");
        const PipelineConfig cfg = load_config(a.config);
        const StrokeSubmission sub = parse_stroke_submission(read_json_file(a.strokes));
        session = Session::create(out, a.mesh, a.atlas, cfg);
        session->add_regions(sub);
    }
    std::vector<std::string> roots;
    for (const auto& r : session->regions())
        if (r.parent.empty()) roots.push_back(r.id);

    nlohmann::json report;
    std::optional<int> rank;
    if (a.intent_rank > 0) rank = a.intent_rank;
    if (roots.size() == 1) {
        report = session->run_edit(roots.front(), rank, opts);
    } else {
        if (rank) throw Error(ErrorCode::Validation, "--intent-rank applies to single-region edits");
        report = session->run_multi(roots, opts);
    }
    write_png(out / "atlas.png", to_rgb(session->current_atlas()));
    write_text(out / "report.json", report.dump(2) + "\n");
    std::cout << out / "atlas.png" << "\n";
    if (report.contains("failed") && !report["failed"].empty()) {
        std::cerr << "some regions failed: " << report["failed"].dump() << "\n";
        return static_cast<int>(ErrorCategory::Pipeline);
    }
    return 0;
}

int cmd_render(const std::string& mesh, const std::string& atlas, const std::string& view, const std::string& mode,
               const std::string& out, int resolution) {
    const TexturedMesh m = load_mesh(mesh, atlas);
    const NamedView v = preset_view(view, kDefaultFov, kDefaultDistance, resolution);
    if (mode != "color" && mode != "geometry") throw Error(ErrorCode::Validation, "--mode must be color or geometry");
    write_png(out, render(m, v.spec, mode == "color" ? RenderMode::Textured : RenderMode::Geometry).color);
    return 0;
}

int cmd_evaluate(const std::string& manifest, const std::vector<int>& ns, const std::string& canned_field,
                 const std::string& config, int resolution) {
    const PipelineConfig cfg = load_config(config);
    Backends b = make_backends(cfg);
    const auto cases = load_eval_manifest(manifest, canned_field, resolution);
    const PromptTemplates templates = cfg.templates_dir.empty() ? PromptTemplates::bundled() : PromptTemplates::load(cfg.templates_dir);
    const Lexicon lex = cfg.synonyms_path.empty() ? Lexicon::bundled() : Lexicon::load(cfg.synonyms_path);
    nlohmann::json out = {{"cases", cases.size()}, {"accuracy", nlohmann::json::object()}};
    for (int n : ns) out["accuracy"][std::to_string(n)] = evaluate_intent_accuracy(cases, n, *b.chat, lex, templates);
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_serve(const std::string& root, const std::string& host, int port, const std::string& config,
              const std::string& static_dir) {
    ServiceOptions o;
    o.root = root;
    o.host = host;
    o.port = port;
    o.config = load_config(config);
    o.static_dir = static_dir;
    Service service(o);
    const int bound = service.bind();
    std::cout << "listening on http://" << host << ":" << bound << std::endl;
    g_service = &service;
    std::signal(SIGINT, [](int) {
        if (g_service) g_service->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_service) g_service->stop();
    });
    service.run();
    g_service = nullptr;
    return 0;
}

int cmd_demo(const std::string& dir) {
    const fs::path out = dir;
    fs::create_directories(out);
    const Image atlas = gradient_atlas(256, Rgb{150, 110, 70}, Rgb{95, 70, 45});
    TexturedMesh cube = make_cube_charts(atlas);
    save_mesh(cube, out / "cube.obj", out / "cube.png");
    const nlohmann::json strokes = {
        {"strokes",
         {{{"view_id", "intent-0"}, {"color", {200, 30, 30}}, {"radius", 12}, {"points", {{200, 230}, {260, 250}, {310, 240}}}}}}};
    write_text(out / "strokes.json", strokes.dump(2) + "\n");
    write_text(out / "config.toml",
               "# all backends run offline unless SCRIBBLESENSE_*_URL is set\n"
               "seed = 42\n"
               "n_intents = 4\n"
               "n_global_prompts = 4\n"
               "guidance_scale = 7.5\n"
               "image_size = 256\n"
               "\n[backends.chat]\nkind = \"mock\"\n"
               "\n[backends.gen]\nkind = \"mock\"\n"
               "\n[backends.inpaint]\nkind = \"mock\"\n"
               "\n[backends.seg]\nkind = \"mock\"\n");
    std::cout << "wrote " << out / "cube.obj" << ", cube.png, strokes.json, config.toml\n";
    return 0;
}

struct EvalSpec {
    const char* id;
    const char* mesh;
    Rgb color;
    std::vector<std::string> truth;
    std::vector<std::string> predictions;
    std::vector<std::string> distractors;
    const char* hint = nullptr;
};

// Intent evaluation set: ranked canned predictions per case (some correct only
// below rank 1) and shape/color-only distractor answers.
int cmd_demo_eval(const fs::path& out) {
    fs::create_directories(out);
    save_mesh(make_uv_sphere(gradient_atlas(256, Rgb{70, 120, 60}, Rgb{120, 95, 70})), out / "mountain.obj",
              out / "mountain.png");
    save_mesh(make_cube_charts(checker_atlas(256, 8, Rgb{235, 235, 230}, Rgb{40, 40, 40})), out / "sofa.obj",
              out / "sofa.png");
    save_mesh(make_cube_charts(gradient_atlas(256, Rgb{150, 110, 70}, Rgb{95, 70, 45})), out / "crate.obj",
              out / "crate.png");
    const std::vector<EvalSpec> specs = {
        {"mountain-pink", "mountain", {240, 130, 180}, {"pink flowers"},
         {"Delicate pink blossoms scattered across mountain slopes", "pink rocks", "pink paint", "cherry trees"},
         {"a pink circle on a brown surface", "heart", "pink", "lightpink, marble"}},
        {"sofa-checker", "sofa", {40, 160, 60}, {"green and black checkerboard pattern"},
         {"A Scottish tartan fabric with alternating black and green checkered patterns", "green leaves", "moss",
          "green paint"},
         {"a white couch with black and green stripes", "green", "pillow", "black, forestgreen, stone, fireplace"}},
        {"volcano-lava", "mountain", {220, 40, 20}, {"lava"},
         {"molten lava flowing down the slope", "red flowers", "rust", "red paint"},
         {"a red line on a hill", "red", "scribble", "ribbon"}},
        {"lawn-grass", "mountain", {60, 170, 50}, {"grass"},
         {"moss patches", "fresh green grass lawn", "green leaves", "algae"},
         {"a green blob", "green", "circle", "paint stroke"}},
        {"peak-snow", "mountain", {250, 250, 250}, {"snow"},
         {"white clouds", "white marble", "fresh snow cover on the peak", "white paint"},
         {"a white shape", "white", "oval", "eraser mark"}},
        {"crate-bricks", "crate", {170, 50, 40}, {"brick wall"},
         {"weathered red brick wall", "rust stains", "red paint", "red leather"},
         {"a red rectangle on a box", "red", "square", "sticker"}},
        {"crate-water", "crate", {40, 90, 200}, {"water"},
         {"blue sky", "denim fabric", "blue tiles", "calm lake water"},
         {"a blue stripe", "blue", "line", "tape"}},
        {"crate-wood", "crate", {120, 80, 40}, {"wood grain"},
         {"timber boards with visible grain", "soil", "brown fur", "leather"},
         {"a brown smudge", "brown", "stain", "dirt"}},
        {"crate-gold", "crate", {230, 190, 40}, {"gold"},
         {"polished gilded ornaments", "yellow paint", "straw", "sand"},
         {"a yellow mark", "yellow", "banana", "sticky note"}, "more luxurious"},
        {"sofa-stars", "sofa", {250, 220, 80}, {"stars"},
         {"starry night pattern with small golden dots", "yellow flowers", "lemons", "sand"},
         {"yellow dots", "yellow", "points", "confetti"}},
    };
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& s : specs) {
        nlohmann::json stroke = {{"view_id", "intent-0"},
                                 {"color", {s.color.r, s.color.g, s.color.b}},
                                 {"radius", 6},
                                 {"points", {{110, 120}, {130, 132}, {150, 126}}}};
        nlohmann::json c = {{"id", s.id},
                            {"mesh", std::string(s.mesh) + ".obj"},
                            {"atlas", std::string(s.mesh) + ".png"},
                            {"strokes", {stroke}},
                            {"truth_keywords", s.truth},
                            {"mock_predictions", s.predictions},
                            {"mock_distractors", s.distractors}};
        if (s.hint) c["hint"] = s.hint;
        manifest.push_back(c);
    }
    write_text(out / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << out / "manifest.json" << " (" << specs.size() << " cases)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scribtex: scribble-driven texture editing"};
    app.require_subcommand(1);

    EditArgs edit;
    auto* e = app.add_subcommand("edit", "edit a mesh texture from scribbles (resumes an existing --out session)");
    e->add_option("--mesh", edit.mesh, "OBJ mesh")->required();
    e->add_option("--atlas", edit.atlas, "texture atlas PNG")->required();
    e->add_option("--strokes", edit.strokes, "strokes JSON (array or {strokes, hint})");
    e->add_option("--config", edit.config, "TOML config");
    e->add_option("--out", edit.out, "session / output directory")->required();
    e->add_flag("--dump-stages", edit.dump_stages, "keep every intermediate artifact");
    e->add_option("--intent-rank", edit.intent_rank, "use this predicted intent instead of rank 1")->check(CLI::Range(1, 64));
    e->add_option("--halt-after", edit.halt_after, "stop after a stage is persisted (refine|intent|patch|stamp|integrate)");

    std::string r_mesh, r_atlas, r_view = "intent-0", r_mode = "color", r_out;
    int r_res = kDefaultResolution;
    auto* r = app.add_subcommand("render", "render a preset view");
    r->add_option("--mesh", r_mesh)->required();
    r->add_option("--atlas", r_atlas)->required();
    r->add_option("--view", r_view, "intent-0..3 or cover-0..7");
    r->add_option("--mode", r_mode, "color or geometry");
    r->add_option("--resolution", r_res);
    r->add_option("--out", r_out)->required();

    std::string ev_manifest, ev_field = "mock_predictions", ev_config;
    std::vector<int> ev_n = {4};
    int ev_res = 256;
    auto* ev = app.add_subcommand("evaluate", "intent prediction accuracy over a case manifest");
    ev->add_option("--manifest", ev_manifest)->required();
    ev->add_option("--n", ev_n, "prediction counts to sweep")->delimiter(',');
    ev->add_option("--canned-field", ev_field, "manifest field feeding the mock chat");
    ev->add_option("--config", ev_config);
    ev->add_option("--resolution", ev_res);

    std::string s_root = "sessions", s_host = "127.0.0.1", s_config, s_static;
    int s_port = 8080;
    auto* s = app.add_subcommand("serve", "run the HTTP service");
    s->add_option("--root", s_root);
    s->add_option("--host", s_host);
    s->add_option("--port", s_port);
    s->add_option("--config", s_config);
    s->add_option("--static", s_static, "UI bundle served at /");

    std::string d_out = "demo";
    bool d_eval = false;
    auto* d = app.add_subcommand("demo", "write a sample cube, strokes and config");
    d->add_option("--out", d_out);
    d->add_flag("--eval", d_eval, "write the intent evaluation set instead");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        std::cerr << "error: " << ex.what() << "\n\n" << app.help();
        return static_cast<int>(ErrorCategory::Validation);
    }

    try {
        if (e->parsed()) return cmd_edit(edit);
        if (r->parsed()) return cmd_render(r_mesh, r_atlas, r_view, r_mode, r_out, r_res);
        if (ev->parsed()) return cmd_evaluate(ev_manifest, ev_n, ev_field, ev_config, ev_res);
        if (s->parsed()) return cmd_serve(s_root, s_host, s_port, s_config, s_static);
        if (d->parsed()) return d_eval ? cmd_demo_eval(d_out) : cmd_demo(d_out);
    } catch (const Error& ex) {
        if (ex.code() == ErrorCode::Halted) {
            std::cerr << ex.what() << "\n";
            return kHaltExitCode;
        }
        std::cerr << "error: " << to_string(ex.code()) << ": " << ex.what() << "\n";
        return static_cast<int>(ex.category());
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return static_cast<int>(ErrorCategory::Pipeline);
    }
    return 0;
}
