// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures.

#include <httplib.h>

#include <chrono>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "placement_oracle.hpp"
#include "raycast.hpp"
#include "scribtex/backends.hpp"
#include "scribtex/config.hpp"
#include "scribtex/intent.hpp"
#include "scribtex/mask_mapping.hpp"
#include "scribtex/morphology.hpp"
#include "scribtex/pipeline.hpp"
#include "scribtex/shapes.hpp"
#include "scribtex/texturing.hpp"
#include "support.hpp"

using namespace scribtex;
namespace fs = std::filesystem;

namespace tol {
constexpr int kPlacementCases = 1000;
constexpr double kPlacementSeconds = 10.0;
constexpr int kTrichotomyMasks = 200;
constexpr double kRoundTripRetained = 0.95;
constexpr double kRasterPixelFraction = 0.01;
constexpr double kBarySum = 1e-4;
constexpr double kCoverageVisible = 0.95;
constexpr double kEndToEndSeconds = 60.0;
constexpr double kGuidanceScale = 7.5;
constexpr int kGlobalPrompts = 4;
}  // namespace tol

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;
    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << (detail.tellp() > 0 ? "; " : "") << "FAILED " << what;
        }
    }
    void note(const std::string& s) { detail << (detail.tellp() > 0 ? "; " : "") << s; }
};

int failures = 0;

void criterion(const std::string& name, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.require(false, std::string("exception: ") + e.what());
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << std::fixed << std::setprecision(2) << s << " s): "
              << o.detail.str() << std::endl;
}

TexelMask rect_mask(int mw, int mh, Rect r) {
    TexelMask m(mw, mh);
    for (int y = r.y; y < r.y + r.h; ++y)
        for (int x = r.x; x < r.x + r.w; ++x) m.set(x, y);
    return m;
}

Image noise(int w, int h, unsigned seed) {
    std::mt19937 rng(seed);
    Image img(w, h, 3);
    for (auto& b : img.data) b = static_cast<std::uint8_t>(rng());
    return img;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string bytes_of(const fs::path& p) { return testing::read_text(p); }

// ---------------------------------------------------------------------------

void placement_oracle(Outcome& o) {
    std::mt19937 rng(20240601);
    const auto t0 = std::chrono::steady_clock::now();
    int bad = 0;
    std::string first;
    for (int t = 0; t < tol::kPlacementCases; ++t) {
        const int W = 1 + static_cast<int>(rng() % 512), H = 1 + static_cast<int>(rng() % 512);
        const int w = 1 + static_cast<int>(rng() % W), h = 1 + static_cast<int>(rng() % H);
        const PlacementPlan p = plan_placement(rect_mask(W, H, Rect{0, 0, W, H}), w, h);
        const std::string v = testing::plan_violation(p, W, H, w, h);
        if (!v.empty()) {
            if (first.empty()) first = v + " at " + std::to_string(W) + "x" + std::to_string(H) + "/" +
                                       std::to_string(w) + "x" + std::to_string(h);
            ++bad;
        }
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.note(std::to_string(tol::kPlacementCases - bad) + "/" + std::to_string(tol::kPlacementCases) + " plans valid");
    o.require(bad == 0, first);
    o.note("runtime " + std::to_string(s) + " s");
    o.require(s < tol::kPlacementSeconds, "runtime >= 10 s");
}

void worked_example(Outcome& o) {
    const PlacementPlan p = plan_placement(rect_mask(100, 50, Rect{0, 0, 100, 50}), 30, 20);
    o.require(p.n_w == 3 && p.n_h == 2, "N_w=3, N_h=2");
    o.require(std::abs(p.dx - 2.5) <= 1e-9, "dx=2.5");
    o.require(std::abs(p.dy - 10.0 / 3.0) <= 1e-9, "dy=10/3");
    o.require(p.positions.size() == 6 && std::abs(p.positions[0].x - 2.5) <= 1e-9 &&
                  std::abs(p.positions[1].x - 35.0) <= 1e-9 && std::abs(p.positions[2].x - 67.5) <= 1e-9,
              "x={2.5,35,67.5}");
    const PlacementPlan exact = plan_placement(rect_mask(90, 40, Rect{0, 0, 90, 40}), 30, 20);
    o.require(exact.dx == 0.0 && exact.positions[1].x == 30.0, "w|W gives dx=0");
    std::ostringstream s;
    s << "N=" << p.n_w << "x" << p.n_h << " dx=" << p.dx << " x={" << p.positions[0].x << "," << p.positions[1].x << ","
      << p.positions[2].x << "} exact dx=" << exact.dx;
    o.note(s.str());
}

void clipping_trichotomy(Outcome& o) {
    std::mt19937 rng(77);
    int misclassified = 0, escaped = 0, positions = 0;
    int counts[3] = {0, 0, 0};
    for (int t = 0; t < tol::kTrichotomyMasks; ++t) {
        const int mw = 48 + static_cast<int>(rng() % 80), mh = 48 + static_cast<int>(rng() % 80);
        const TexelMask r = testing::random_blob(rng, mw, mh);
        const Rect b = r.bbox();
        const int w = 1 + static_cast<int>(rng() % std::max(1, b.w / 2)), h = 1 + static_cast<int>(rng() % std::max(1, b.h / 2));
        const PlacementPlan p = plan_placement(r, w, h);
        const auto oracle = testing::classify_by_texels(p, r);
        for (std::size_t k = 0; k < oracle.size(); ++k) {
            ++positions;
            ++counts[static_cast<int>(oracle[k])];
            misclassified += p.kept[k] != oracle[k];
        }
        const Image atlas = noise(mw, mh, t);
        const StampResult s = stamp_patches(atlas, p, r, TexturePatch::from_crop(noise(w, h, t + 1), Rect{0, 0, w, h}, "global", 0),
                                            static_cast<int>(t % 4));
        escaped += !s.stamped.subset_of(r);
        for (int y = 0; y < mh; ++y)
            for (int x = 0; x < mw; ++x)
                if (!r.get(x, y) && s.atlas.rgb(x, y) != atlas.rgb(x, y)) ++escaped;
    }
    o.note(std::to_string(positions) + " positions (full " + std::to_string(counts[0]) + ", partial " +
           std::to_string(counts[1]) + ", discarded " + std::to_string(counts[2]) + ")");
    o.require(misclassified == 0, std::to_string(misclassified) + " misclassified");
    o.require(escaped == 0, std::to_string(escaped) + " writes outside R");
    o.require(counts[0] > 0 && counts[1] > 0 && counts[2] > 0, "all three classes exercised");
}

void mask_round_trip(Outcome& o) {
    const TexturedMesh mesh = testing::cube(256);
    double worst = 1.0;
    bool contained = true;
    std::mt19937 rng(3);
    for (const auto& view : intent_views(kDefaultFov, kDefaultDistance, 512)) {
        const ViewFrame f = render(mesh, view.spec, RenderMode::Geometry);
        for (int trial = 0; trial < 3; ++trial) {
            Stroke st{view.id, {}, 8.0 + rng() % 20, {}};
            for (int k = 0; k < 3; ++k) st.points.push_back({150.0 + rng() % 212, 150.0 + rng() % 212});
            const Image mask = stamp_stroke(st, 512, 512);
            const TexelMask t = screen_to_texel(mask, f, mesh);
            const Image back = texel_to_screen(t, f);
            std::size_t fg = 0, kept = 0;
            std::vector<std::uint32_t> islands;
            for (int y = 0; y < 512; ++y)
                for (int x = 0; x < 512; ++x)
                    if (mask.set(x, y) && f.foreground(x, y)) {
                        ++fg;
                        kept += back.set(x, y);
                        const auto isl = mesh.triangle_island[f.face_id[f.pixel(x, y)]];
                        if (std::find(islands.begin(), islands.end(), isl) == islands.end()) islands.push_back(isl);
                    }
            if (fg) worst = std::min(worst, double(kept) / fg);
            contained &= t.subset_of(island_coverage(mesh, islands));
        }
    }
    o.note("worst retained fraction " + std::to_string(worst));
    o.require(worst >= tol::kRoundTripRetained, "retained >= 0.95");
    o.require(contained, "texel writes inside the hit charts");
}

void rasterizer_oracle(Outcome& o) {
    const Image atlas = checker_atlas(64, 8, Rgb{255, 255, 255}, Rgb{0, 0, 0});
    const std::vector<std::pair<std::string, TexturedMesh>> meshes = {
        {"cube", testing::normalized(make_cube_charts(atlas))},
        {"sphere", testing::normalized(make_uv_sphere(atlas, 24, 12))},
        {"torus", testing::normalized(make_torus(atlas, 1.0, 0.4, 24, 12))},
    };
    const std::vector<ViewSpec> specs = {{0, 0, 45, 2.8, 128}, {30, 45, 45, 2.8, 128}, {-60, 200, 60, 3.5, 128}};
    double worst_fg = 0, worst_face = 0, worst_sum = 0;
    for (const auto& [name, mesh] : meshes)
        for (const auto& spec : specs) {
            const ViewFrame f = render(mesh, spec, RenderMode::Geometry);
            const testing::RayFrame r = testing::raycast(mesh, spec);
            std::size_t fg_f = 0, fg_r = 0, face_diff = 0;
            for (std::size_t p = 0; p < r.face.size(); ++p) {
                fg_f += f.face_id[p] != kBackground;
                fg_r += r.face[p] != kBackground;
                face_diff += f.face_id[p] != r.face[p];
            }
            const double n = double(r.face.size());
            worst_fg = std::max(worst_fg, std::abs(double(fg_f) - double(fg_r)) / n);
            worst_face = std::max(worst_face, face_diff / n);
            worst_sum = std::max(worst_sum, testing::compare(mesh, f, r).max_bary_sum_error);
        }
    std::ostringstream s;
    s << "foreground count diff " << worst_fg * 100 << "% of pixels, face_id diff " << worst_face * 100
      << "% of pixels, max |sum bary - 1| " << worst_sum;
    o.note(s.str());
    o.require(worst_fg <= tol::kRasterPixelFraction, "foreground within 1%");
    o.require(worst_face <= tol::kRasterPixelFraction, "face_id within 1%");
    o.require(worst_sum <= tol::kBarySum, "barycentric sums within 1e-4");
}

void view_presets(Outcome& o) {
    const auto iv = intent_views();
    bool ok = iv.size() == 4;
    for (std::size_t i = 0; ok && i < 4; ++i) ok = iv[i].spec.theta == 0.0 && iv[i].spec.phi == 90.0 * i;
    o.require(ok, "intent views theta 0, phi 0/90/180/270");
    const auto cv = coverage_views(kDefaultFov, kDefaultDistance, 256);
    bool poles[2] = {false, false};
    for (const auto& v : cv) {
        poles[0] |= v.spec.theta == 90.0;
        poles[1] |= v.spec.theta == -90.0;
    }
    o.require(cv.size() == 8 && poles[0] && poles[1], "8 coverage views including theta +-90");

    const TexturedMesh sphere = testing::normalized(make_uv_sphere(testing::solid(256, 256, Rgb{90, 90, 90})));
    std::vector<char> seen(sphere.triangles.size(), 0);
    for (const auto& v : cv) {
        const ViewFrame f = render(sphere, v.spec, RenderMode::Geometry);
        for (auto id : f.face_id)
            if (id != kBackground) seen[id] = 1;
    }
    std::vector<std::uint32_t> all(sphere.triangles.size()), visible;
    for (std::uint32_t t = 0; t < all.size(); ++t) {
        all[t] = t;
        if (seen[t]) visible.push_back(t);
    }
    const double frac = double(chart_coverage(sphere, visible).count()) / double(chart_coverage(sphere, all).count());
    o.note("sphere texels visible from coverage views " + std::to_string(frac * 100) + "%");
    o.require(frac >= tol::kCoverageVisible, "visibility >= 95%");
}

class IdentitySeg : public SegmentBackend {
public:
    std::string kind() const override { return "identity"; }
    std::vector<SegmentCandidate> propose(const SegmentRequest& req) override {
        return {{req.prompt_mask, count_set(req.prompt_mask)}};
    }
};

class SupersetSeg : public SegmentBackend {
public:
    std::string kind() const override { return "superset"; }
    std::vector<SegmentCandidate> propose(const SegmentRequest& req) override {
        TexelMask grown = dilate_square(TexelMask::from_image(req.prompt_mask), 8);
        for (int y = 0; y < grown.height; ++y)
            for (int x = 0; x < grown.width; ++x)
                if (req.image.rgb(x, y) == Rgb{255, 255, 255}) grown.set(x, y, false);
        const Image m = grown.to_image();
        return {{m, count_set(m)}};
    }
};

PipelineConfig mock_config(bool refine = true) {
    PipelineConfig c = PipelineConfig::from_json(parse_toml(testing::kMockConfigToml));
    c.refinement_enabled = refine;
    return c;
}

void refinement_contract(Outcome& o) {
    const TexturedMesh mesh = testing::cube(256);
    const auto views = intent_views(kDefaultFov, kDefaultDistance, 512);
    const auto cover = coverage_views(kDefaultFov, kDefaultDistance, 512);
    const ViewFrame f = render(mesh, views[0].spec, RenderMode::Geometry);
    ScribbleRegion reg{"region-0", Rgb{200, 30, 30},
                       stamp_stroke(Stroke{"intent-0", {{200, 230}, {260, 250}, {310, 240}}, 12, Rgb{200, 30, 30}}, 512, 512),
                       "intent-0", std::nullopt};
    const TexelMask lift = bypass_refinement(mesh, reg, f);
    IdentitySeg id;
    SupersetSeg sup;
    o.require(refine_region(mesh, reg, views[0], cover, id).final == lift, "identity mock equals the closed lift");
    const TexelMask grown = refine_region(mesh, reg, views[0], cover, sup).final;
    o.require(lift.subset_of(grown), "superset mock contains the lift");
    o.note("lift " + std::to_string(lift.count()) + " texels, superset result " + std::to_string(grown.count()));

    testing::TempDir dir;
    testing::write_cube_inputs(dir / "in");
    const StrokeSubmission sub = parse_stroke_submission(nlohmann::json::parse(testing::read_text(dir / "in/strokes.json")));
    std::size_t seg_calls[2];
    std::string label[2];
    for (int on = 0; on < 2; ++on) {
        auto s = Session::create(dir / ("s" + std::to_string(on)), dir / "in/cube.obj", dir / "in/cube.png", mock_config(on));
        s->add_regions(sub);
        const auto rep = s->run_edit("region-0");
        seg_calls[on] = rep["backend_calls"]["segment"].get<std::size_t>();
        label[on] = rep["refinement"];
    }
    o.require(seg_calls[0] == 0 && label[0] == "area refinement: disabled", "disabled toggle skips segmentation");
    o.require(seg_calls[1] > 0 && label[1] == "area refinement: enabled", "enabled toggle segments");
    o.note("segment calls disabled/enabled " + std::to_string(seg_calls[0]) + "/" + std::to_string(seg_calls[1]));
}

void end_to_end(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    testing::TempDir dir;
    testing::write_cube_inputs(dir / "in");
    std::ofstream(dir / "config.toml") << testing::kMockConfigToml;
    const std::string inputs = " --mesh " + q(dir / "in/cube.obj") + " --atlas " + q(dir / "in/cube.png") + " --strokes " +
                               q(dir / "in/strokes.json") + " --config " + q(dir / "config.toml");
    const int a = testing::run_cli("edit" + inputs + " --out " + q(dir / "run-a"));
    const int b = testing::run_cli("edit" + inputs + " --out " + q(dir / "run-b"));
    o.require(a == 0 && b == 0, "uninterrupted runs succeed");
    const std::string ref = bytes_of(dir / "run-a/atlas.png");
    o.require(!ref.empty() && ref == bytes_of(dir / "run-b/atlas.png"), "two runs byte-identical");

    // a fresh process per stage, each stopping right after its stage is persisted
    int halted = 0;
    for (const char* stage : {"refine", "intent", "patch", "stamp"})
        halted += testing::run_cli("edit" + inputs + " --out " + q(dir / "run-c") + " --halt-after " + stage) == kHaltExitCode;
    o.require(halted == 4, "every drill process halted (" + std::to_string(halted) + "/4)");
    o.require(testing::run_cli("edit" + inputs + " --out " + q(dir / "run-c")) == 0, "resumed run succeeds");
    o.require(ref == bytes_of(dir / "run-c/atlas.png"), "crash-resumed atlas byte-identical");

    const auto ra = nlohmann::json::parse(testing::read_text(dir / "run-a/report.json"));
    const auto rc = nlohmann::json::parse(testing::read_text(dir / "run-c/report.json"));
    o.require(ra["backend_calls"] == rc["backend_calls"], "no backend call repeated on resume");

    const Image src = to_rgb(read_png(dir / "in/cube.png"));
    const Image out = read_png(dir / "run-a/atlas.png");
    const TexelMask region = TexelMask::from_image(read_png(dir / "run-a/regions/region-0/texel_mask.png"));
    std::size_t outside_diff = 0, inside_diff = 0;
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) {
            const bool diff = src.rgb(x, y) != out.rgb(x, y);
            (region.get(x, y) ? inside_diff : outside_diff) += diff;
        }
    o.require(outside_diff == 0, std::to_string(outside_diff) + " texels changed outside the region");
    o.require(inside_diff > 0, "the region was edited");
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.note("7 processes in " + std::to_string(s) + " s, " + std::to_string(inside_diff) + " texels edited, calls " +
           ra["backend_calls"].dump());
    o.require(s < tol::kEndToEndSeconds, "runtime < 60 s");
}

void intent_evaluation(Outcome& o) {
    const fs::path manifest = fs::path(SCRIBTEX_ASSET_DIR) / "eval" / "manifest.json";
    const auto cases = load_eval_manifest(manifest, "mock_predictions", 256);
    std::vector<double> acc;
    for (int n = 1; n <= 4; ++n) {
        MockChatBackend chat;
        acc.push_back(evaluate_intent_accuracy(cases, n, chat));
    }
    const auto distractors = load_eval_manifest(manifest, "mock_distractors", 256);
    MockChatBackend chat;
    const double d = evaluate_intent_accuracy(distractors, 4, chat);
    std::ostringstream s;
    s << cases.size() << " cases, accuracy n=1..4: " << acc[0] << " " << acc[1] << " " << acc[2] << " " << acc[3]
      << ", distractors " << d;
    o.note(s.str());
    o.require(cases.size() == 10, "10 cases");
    o.require(acc[3] == 1.0, "accuracy 1.0 with synonyms");
    o.require(d == 0.0, "distractors rejected");
    o.require(std::is_sorted(acc.begin(), acc.end()), "monotone in n");
}

class WildInpaint : public InpaintBackend {
public:
    std::string kind() const override { return "wild"; }
    Image fill(const InpaintRequest& req) override { return noise(req.image.width + 7, req.image.height / 2, 5); }
};

void backend_defaults(Outcome& o) {
    const PipelineConfig def = PipelineConfig::defaults();
    o.require(def.guidance_scale == tol::kGuidanceScale && def.n_global_prompts == tol::kGlobalPrompts,
              "config defaults 7.5 / 4");

    testing::TempDir dir;
    testing::write_cube_inputs(dir / "in");
    PipelineConfig cfg = mock_config();
    auto s = Session::create(dir / "s", dir / "in/cube.obj", dir / "in/cube.png", cfg);
    s->add_regions(parse_stroke_submission(nlohmann::json::parse(testing::read_text(dir / "in/strokes.json"))));
    s->run_edit("region-0");
    std::ifstream in(dir / "s/transcript.jsonl");
    std::string line;
    std::set<std::string> prompts;
    std::size_t gen_calls = 0, wrong_scale = 0;
    while (std::getline(in, line)) {
        const auto e = nlohmann::json::parse(line);
        if (e.value("service", "") != "gen" || !e.contains("guidance_scale")) continue;
        ++gen_calls;
        wrong_scale += e["guidance_scale"].get<double>() != tol::kGuidanceScale;
        prompts.insert(e["prompt"].get<std::string>());
    }
    o.note(std::to_string(gen_calls) + " generation requests, " + std::to_string(prompts.size()) + " distinct global prompts");
    o.require(gen_calls > 0 && wrong_scale == 0, "every generation request carries guidance 7.5");
    o.require(prompts.size() == static_cast<std::size_t>(tol::kGlobalPrompts), "4 global prompts");

    // outside-mask identity for in-process and HTTP backends
    httplib::Server svr;
    svr.Post("/inpaint", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(nlohmann::json{{"image", base64_encode(encode_png(noise(19, 23, 9)))}}.dump(), "application/json");
    });
    const int port = svr.bind_to_any_port("127.0.0.1");
    std::thread th([&] { svr.listen_after_bind(); });
    svr.wait_until_ready();
    BackendConfig hc;
    hc.kind = "http";
    hc.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/inpaint";
    hc.retries = 0;
    HttpInpaintBackend http(hc);
    WildInpaint wild;
    MockInpaintBackend mock;
    std::mt19937 rng(4);
    std::size_t violations = 0, checked = 0;
    for (int t = 0; t < 10; ++t) {
        InpaintRequest req;
        req.image = noise(32 + t, 24 + t, t);
        if (t % 2) req.image = to_rgba(req.image);
        req.mask = testing::random_mask(rng, req.image.width, req.image.height, 0.4).to_image();
        req.prompt = "moss";
        for (InpaintBackend* b : std::initializer_list<InpaintBackend*>{&wild, &mock, &http}) {
            const Image out = inpaint(req, *b);
            for (std::size_t i = 0; i < req.image.pixel_count(); ++i) {
                if (req.mask.data[i]) continue;
                ++checked;
                for (int c = 0; c < req.image.channels; ++c)
                    violations += out.data[i * out.channels + c] != req.image.data[i * req.image.channels + c];
            }
        }
    }
    svr.stop();
    th.join();
    o.note(std::to_string(checked) + " unmasked pixels checked across mock, adversarial and HTTP backends");
    o.require(violations == 0, std::to_string(violations) + " bytes changed outside the mask");
}

}  // namespace

int main() {
    criterion("placement-oracle", placement_oracle);
    criterion("worked-placement-example", worked_example);
    criterion("clipping-trichotomy", clipping_trichotomy);
    criterion("mask-round-trip", mask_round_trip);
    criterion("rasterizer-oracle", rasterizer_oracle);
    criterion("view-presets", view_presets);
    criterion("refinement-contract", refinement_contract);
    criterion("end-to-end-determinism", end_to_end);
    criterion("intent-evaluation", intent_evaluation);
    criterion("backend-defaults", backend_defaults);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures;
}
