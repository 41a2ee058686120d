#include <doctest.h>

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "scribtex/error.hpp"
#include "scribtex/pipeline.hpp"
#include "support.hpp"

using namespace scribtex;
namespace fs = std::filesystem;

namespace {

PipelineConfig mock_config(std::uint64_t seed = 42) {
    nlohmann::json backends;
    for (const char* b : {"chat", "gen", "inpaint", "seg"}) backends[b] = {{"kind", "mock"}};
    return PipelineConfig::from_json({{"seed", seed}, {"image_size", 256}, {"backends", backends}});
}

Stroke red_stroke() { return Stroke{"intent-0", {{200, 230}, {260, 250}, {310, 240}}, 12, Rgb{200, 30, 30}}; }

std::unique_ptr<Session> new_session(const fs::path& root, const std::string& name, const PipelineConfig& cfg) {
    testing::write_cube_inputs(root / "inputs");
    return Session::create(root / name, root / "inputs" / "cube.obj", root / "inputs" / "cube.png", cfg, name);
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::uint32_t le32(const std::uint8_t* p) { return p[0] | p[1] << 8 | p[2] << 16 | std::uint32_t(p[3]) << 24; }
std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | p[1] << 8); }

/// Stored-zip reader: name -> bytes, checking every CRC.
std::map<std::string, std::vector<std::uint8_t>> read_stored_zip(const std::vector<std::uint8_t>& z) {
    std::map<std::string, std::vector<std::uint8_t>> out;
    std::size_t off = 0;
    while (off + 30 <= z.size() && le32(&z[off]) == 0x04034b50) {
        REQUIRE(le16(&z[off + 8]) == 0);  // stored
        const std::uint32_t crc = le32(&z[off + 14]), size = le32(&z[off + 18]);
        const std::uint16_t nlen = le16(&z[off + 26]), xlen = le16(&z[off + 28]);
        const std::string name(reinterpret_cast<const char*>(&z[off + 30]), nlen);
        const std::size_t data = off + 30 + nlen + xlen;
        std::vector<std::uint8_t> bytes(z.begin() + data, z.begin() + data + size);
        CHECK(crc32(0, bytes.data(), static_cast<uInt>(bytes.size())) == crc);
        out[name] = std::move(bytes);
        off = data + size;
    }
    CHECK(le32(&z[off]) == 0x02014b50);  // central directory follows
    return out;
}

}  // namespace

TEST_CASE("stage seeds are stable and distinct") {
    CHECK(stage_seed(42, "region-0", "gen", 0) == stage_seed(42, "region-0", "gen", 0));
    CHECK(stage_seed(42, "region-0", "gen", 0) != stage_seed(42, "region-0", "gen", 1));
    CHECK(stage_seed(42, "region-0", "gen", 0) != stage_seed(42, "region-1", "gen", 0));
    CHECK(stage_seed(42, "region-0", "gen", 0) != stage_seed(43, "region-0", "gen", 0));
    CHECK(parse_state("stamp") == RegionState::Stamped);
    CHECK(parse_state("IntentPredicted") == RegionState::IntentPredicted);
    CHECK_THROWS_AS(parse_state("bogus"), Error);
}

TEST_CASE("edit is deterministic and leaves texels outside the region alone") {
    testing::TempDir dir;
    auto a = new_session(dir.path, "a", mock_config());
    auto b = new_session(dir.path, "b", mock_config());
    const auto ra = a->add_regions({{red_stroke()}, std::nullopt});
    REQUIRE(ra == std::vector<std::string>{"region-0"});
    b->add_regions({{red_stroke()}, std::nullopt});
    const auto rep = a->run_edit("region-0");
    b->run_edit("region-0");
    CHECK(rep["state"] == "Integrated");
    CHECK(rep["intent_rank"] == 1);
    CHECK(rep["refinement"] == "area refinement: enabled");
    CHECK(rep["predictions"].size() == 4);
    const Image fa = a->current_atlas(), fb = b->current_atlas();
    CHECK(fa == fb);
    CHECK(file_bytes(dir / "a/current/atlas.png") == file_bytes(dir / "b/current/atlas.png"));

    const Image src = to_rgb(read_png(dir / "a/source/atlas.png"));
    const Image out = to_rgb(fa);
    const TexelMask region = TexelMask::from_image(read_png(dir / "a/regions/region-0/texel_mask.png"));
    std::size_t changed = 0, escaped = 0;
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) {
            const bool same = src.rgb(x, y) == out.rgb(x, y);
            escaped += !same && !region.get(x, y);
            changed += !same;
        }
    CHECK(escaped == 0);
    CHECK(changed > region.count() / 2);

    const auto calls = rep["backend_calls"];
    CHECK(calls["chat"] == 3);
    CHECK(calls["gen"] == 4);
    CHECK(calls["segment"].get<int>() >= 1);
}

TEST_CASE("a different seed gives a different edit") {
    testing::TempDir dir;
    auto a = new_session(dir.path, "a", mock_config(1));
    auto b = new_session(dir.path, "b", mock_config(2));
    a->add_regions({{red_stroke()}, std::nullopt});
    b->add_regions({{red_stroke()}, std::nullopt});
    a->run_edit("region-0");
    b->run_edit("region-0");
    CHECK(a->current_atlas() != b->current_atlas());
}

TEST_CASE("choosing intent rank 3") {
    testing::TempDir dir;
    auto s = new_session(dir.path, "s", mock_config());
    s->add_regions({{red_stroke()}, std::nullopt});
    const auto intents = s->intents("region-0");
    REQUIRE(intents["predictions"].size() == 4);
    const auto rep = s->run_edit("region-0", 3);
    CHECK(rep["intent_rank"] == 3);
    CHECK(rep["semantic"] == intents["predictions"][2]["semantic"]);

    // asking again with another rank forks a derived region
    const auto fork = s->run_edit("region-0", 2);
    CHECK(fork["region"] == "region-0-r2");
    CHECK(fork["parent"] == "region-0");
    CHECK(fork["semantic"] == intents["predictions"][1]["semantic"]);
}

TEST_CASE("refinement can be disabled") {
    testing::TempDir dir;
    PipelineConfig cfg = mock_config();
    cfg.refinement_enabled = false;
    auto s = new_session(dir.path, "s", cfg);
    s->add_regions({{red_stroke()}, std::nullopt});
    const auto rep = s->run_edit("region-0");
    CHECK(rep["refinement"] == "area refinement: disabled");
    CHECK(rep["backend_calls"]["segment"] == 0);
}

TEST_CASE("multi-region edits") {
    testing::TempDir dir;
    auto s = new_session(dir.path, "s", mock_config());
    const Stroke left{"intent-0", {{180, 200}, {200, 230}}, 10, Rgb{200, 30, 30}};
    const Stroke right{"intent-0", {{320, 300}, {340, 320}}, 10, Rgb{30, 60, 200}};
    const auto ids = s->add_regions({{left, right}, std::nullopt});
    REQUIRE(ids.size() == 2);
    const auto res = s->run_multi(ids);
    CHECK(res["failed"].empty());
    CHECK(res["regions"].size() == 2);
    CHECK(s->region(ids[0]).state == RegionState::Integrated);
    CHECK(s->region(ids[1]).state == RegionState::Integrated);
    const std::string prompt = nlohmann::json::parse(std::ifstream(dir / "s/multi/region-0+region-1/integrate_summary.json"))["prompt"];
    CHECK(prompt.find(", ") != std::string::npos);

    const auto dup = s->add_regions({{left}, std::nullopt});
    const auto dup2 = s->add_regions({{left}, std::nullopt});
    try {
        s->run_multi({dup[0], dup2[0]});
        FAIL("expected OverlappingRegions");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::OverlappingRegions);
    }
}

TEST_CASE("a failing region does not stop the others") {
    testing::TempDir dir;
    auto s = new_session(dir.path, "s", mock_config());
    // the chat model refuses anything about the blue scribble
    s->backends().chat = std::make_unique<MockChatBackend>([inner = default_mock_responder()](const ChatRequest& r, int i) {
        if (r.user_text.find("#1e3cc8") != std::string::npos) return std::string("I cannot help with that.");
        return inner(r, i);
    });
    s->backends().set_transcript(std::shared_ptr<Transcript>(&s->transcript(), [](Transcript*) {}));
    const Stroke left{"intent-0", {{180, 200}, {200, 230}}, 10, Rgb{200, 30, 30}};
    const Stroke right{"intent-0", {{320, 300}, {340, 320}}, 10, Rgb{30, 60, 200}};
    const auto ids = s->add_regions({{left, right}, std::nullopt});
    const auto res = s->run_multi(ids);
    CHECK(res["failed"].size() == 1);
    CHECK(res["failed"].contains(ids[1]));
    CHECK(s->region(ids[0]).state == RegionState::Integrated);
    CHECK(s->region(ids[1]).state == RegionState::Refined);
    CHECK_FALSE(s->region(ids[1]).error.empty());
}

TEST_CASE("halting after each stage and resuming repeats no backend call") {
    testing::TempDir dir;
    auto ref = new_session(dir.path, "ref", mock_config());
    ref->add_regions({{red_stroke()}, std::nullopt});
    const auto want = ref->run_edit("region-0");

    auto s = new_session(dir.path, "s", mock_config());
    s->add_regions({{red_stroke()}, std::nullopt});
    s.reset();
    for (auto stage : {RegionState::Refined, RegionState::IntentPredicted, RegionState::PatchChosen, RegionState::Stamped}) {
        auto again = Session::open(dir / "s");
        try {
            again->run_edit("region-0", std::nullopt, RunOptions{stage, false});
            FAIL("expected Halted");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::Halted);
        }
        CHECK(again->region("region-0").state == stage);
    }
    auto last = Session::open(dir / "s");
    const auto got = last->run_edit("region-0");
    CHECK(last->current_atlas() == ref->current_atlas());
    CHECK(got["backend_calls"] == want["backend_calls"]);
}

TEST_CASE("export zip holds the mesh, material and current atlas") {
    testing::TempDir dir;
    auto s = new_session(dir.path, "s", mock_config());
    s->add_regions({{red_stroke()}, std::nullopt});
    s->run_edit("region-0");
    const auto files = read_stored_zip(s->export_zip());
    REQUIRE(files.contains("mesh.obj"));
    REQUIRE(files.contains("mesh.mtl"));
    REQUIRE(files.contains("atlas.png"));
    CHECK(to_rgb(decode_png(files.at("atlas.png"))) == to_rgb(s->current_atlas()));
    const std::string mtl(files.at("mesh.mtl").begin(), files.at("mesh.mtl").end());
    CHECK(mtl.find("map_Kd atlas.png") != std::string::npos);
}

TEST_CASE("sessions reject bad inputs") {
    testing::TempDir dir;
    testing::write_cube_inputs(dir / "in");
    std::ofstream(dir / "bad.obj") << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
    try {
        Session::create(dir / "x", dir / "bad.obj", dir / "in/cube.png", mock_config());
        FAIL("expected MissingUVs");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingUVs);
    }
    CHECK_FALSE(Session::exists(dir / "x"));
    auto s = Session::create(dir / "ok", dir / "in/cube.obj", dir / "in/cube.png", mock_config());
    CHECK_THROWS_AS(s->region("region-9"), Error);
    CHECK_THROWS_AS(s->add_regions({{Stroke{"nowhere", {{1, 1}}, 3, {}}}, std::nullopt}), Error);
    CHECK_THROWS_AS(Session::create(dir / "ok", dir / "in/cube.obj", dir / "in/cube.png", mock_config()), Error);
}
