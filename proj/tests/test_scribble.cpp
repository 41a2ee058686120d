#include <doctest.h>

#include <nlohmann/json.hpp>
#include <random>

#include "scribtex/error.hpp"
#include "scribtex/scribble.hpp"
#include "support.hpp"

using namespace scribtex;

namespace {

/// Synthetic frame: foreground everywhere except columns >= bg_from.
ViewFrame flat_frame(int n, int bg_from) {
    ViewFrame f;
    f.spec.resolution = n;
    f.color = testing::solid(n, n, Rgb{128, 128, 128});
    f.face_id.assign(static_cast<std::size_t>(n) * n, 0);
    f.bary.assign(f.face_id.size(), {1, 0, 0});
    f.uv.assign(f.face_id.size(), {0, 0});
    f.depth.assign(f.face_id.size(), 1.0f);
    for (int y = 0; y < n; ++y)
        for (int x = bg_from; x < n; ++x) f.face_id[f.pixel(x, y)] = kBackground;
    return f;
}

// Distance from a point to a polyline, sampled finely along each segment.
double polyline_distance(double px, double py, const std::vector<StrokePoint>& pts) {
    double best = 1e18;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const StrokePoint a = pts[k], b = pts[std::min(k + 1, pts.size() - 1)];
        for (int s = 0; s <= 4000; ++s) {
            const double t = s / 4000.0;
            best = std::min(best, std::hypot(px - (a.x + t * (b.x - a.x)), py - (a.y + t * (b.y - a.y))));
        }
    }
    return best;
}

}  // namespace

TEST_CASE("stroke stamp is the swept disk") {
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> coord(5, 59), rad(1, 6);
    for (int trial = 0; trial < 8; ++trial) {
        Stroke s{"intent-0", {}, rad(rng), Rgb{1, 2, 3}};
        for (int k = 0; k < 1 + trial % 4; ++k) s.points.push_back({coord(rng), coord(rng)});
        const Image m = stamp_stroke(s, 64, 64);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                const double d = polyline_distance(x, y, s.points);
                if (std::abs(d - s.radius) < 0.02) continue;
                CHECK(m.set(x, y) == (d <= s.radius));
            }
    }
}

TEST_CASE("stamps are clipped to the foreground") {
    const ViewFrame f = flat_frame(40, 20);
    Stroke s{"v", {{10, 20}, {30, 20}}, 3, Rgb{255, 0, 0}};
    const auto regions = rasterize_strokes({s}, f, "v");
    REQUIRE(regions.size() == 1);
    CHECK(mask_bbox(regions[0].screen_mask).x + mask_bbox(regions[0].screen_mask).w == 20);
    CHECK(regions[0].color == Rgb{255, 0, 0});
    CHECK(regions[0].id == "region-0");

    Stroke off{"v", {{30, 5}, {35, 5}}, 2, Rgb{255, 0, 0}};
    try {
        rasterize_strokes({off}, f, "v");
        FAIL("expected EmptyScribble");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyScribble);
    }
}

TEST_CASE("regions are 8-connected components in raster order") {
    const ViewFrame f = flat_frame(40, 40);
    const Stroke a{"v", {{30, 5}}, 1, Rgb{0, 0, 255}};
    const Stroke b{"v", {{5, 30}}, 1, Rgb{0, 255, 0}};
    // two disks touching only diagonally
    const Stroke c{"v", {{10, 10}}, 1, Rgb{9, 9, 9}};
    const Stroke d{"v", {{12, 12}}, 1, Rgb{9, 9, 9}};
    const auto regions = rasterize_strokes({b, a, c, d}, f, "v", std::string("roses"));
    REQUIRE(regions.size() == 3);
    CHECK(regions[0].color == Rgb{0, 0, 255});
    CHECK(regions[1].color == Rgb{9, 9, 9});
    CHECK(count_set(regions[1].screen_mask) == 10);
    CHECK(regions[2].color == Rgb{0, 255, 0});
    CHECK(regions[2].hint == std::optional<std::string>("roses"));
}

TEST_CASE("region color is the largest stamped area, ties to the smaller rgb") {
    const ViewFrame f = flat_frame(40, 40);
    const Stroke big{"v", {{10, 10}, {20, 10}}, 2, Rgb{200, 0, 0}};
    const Stroke small{"v", {{20, 10}}, 2, Rgb{0, 0, 200}};
    CHECK(rasterize_strokes({small, big}, f, "v")[0].color == Rgb{200, 0, 0});
    const Stroke twin_a{"v", {{10, 10}}, 2, Rgb{50, 60, 70}};
    const Stroke twin_b{"v", {{11, 10}}, 2, Rgb{50, 60, 60}};
    CHECK(rasterize_strokes({twin_a, twin_b}, f, "v")[0].color == Rgb{50, 60, 60});
}

TEST_CASE("stroke validation") {
    const ViewFrame f = flat_frame(16, 16);
    CHECK_THROWS_AS(rasterize_strokes({Stroke{"v", {}, 2, {}}}, f, "v"), Error);
    CHECK_THROWS_AS(rasterize_strokes({Stroke{"v", {{1, 1}}, 0.5, {}}}, f, "v"), Error);
    CHECK_THROWS_AS(rasterize_strokes({Stroke{"v", {{16, 1}}, 2, {}}}, f, "v"), Error);
    CHECK_THROWS_AS(rasterize_strokes({Stroke{"w", {{1, 1}}, 2, {}}}, f, "v"), Error);
    CHECK_THROWS_AS(rasterize_strokes({}, f, "v"), Error);
}

TEST_CASE("stroke json wire format") {
    const Stroke s{"intent-2", {{1.5, 2}, {3, 4}}, 6, Rgb{200, 30, 30}};
    const nlohmann::json j = stroke_to_json(s);
    CHECK(j.dump() == R"({"color":[200,30,30],"points":[[1.5,2.0],[3.0,4.0]],"radius":6.0,"view_id":"intent-2"})");
    CHECK(stroke_from_json(j) == s);
    CHECK_THROWS_AS(stroke_from_json(nlohmann::json{{"view_id", "x"}}), Error);
    CHECK_THROWS_AS(stroke_from_json(nlohmann::json::parse(R"({"view_id":"a","color":[300,0,0],"radius":2,"points":[[1,1]]})")),
                    Error);

    const auto sub = parse_stroke_submission(nlohmann::json::parse(
        R"({"hint":"lava","strokes":[{"view_id":"a","color":[1,2,3],"radius":2,"points":[[1,1]]}]})"));
    CHECK(sub.hint == std::optional<std::string>("lava"));
    CHECK(sub.strokes.size() == 1);
    CHECK(parse_stroke_submission(nlohmann::json::array({j})).strokes[0] == s);
}

TEST_CASE("overlay regions and dominant color") {
    const ViewFrame f = flat_frame(32, 32);
    Image overlay(32, 32, 4, 0);
    for (int y = 4; y < 10; ++y)
        for (int x = 4; x < 10; ++x) {
            overlay.at(x, y, 0) = 250;
            overlay.at(x, y, 3) = 255;
        }
    overlay.at(4, 4, 2) = 200;  // a stray pixel of another color
    const auto regions = regions_from_overlay(overlay, f, "v");
    REQUIRE(regions.size() == 1);
    CHECK(count_set(regions[0].screen_mask) == 36);
    CHECK(regions[0].color == Rgb{250, 0, 0});

    const Image painted = scribble_overlay(f.color, {&regions[0]});
    CHECK(painted.rgb(5, 5) == Rgb{250, 0, 0});
    CHECK(painted.rgb(20, 20) == Rgb{128, 128, 128});
}
