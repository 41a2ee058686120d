#include <doctest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "support.hpp"

namespace fs = std::filesystem;

TEST_CASE("usage errors exit with status 2") {
    testing::TempDir dir;
    CHECK(testing::run_cli("edit --atlas a.png --out x", dir / "log.txt") == 2);
    CHECK(testing::read_text(dir / "log.txt").find("--mesh") != std::string::npos);
    CHECK(testing::run_cli("no-such-command") == 2);
}

TEST_CASE("missing files are io errors") {
    testing::TempDir dir;
    CHECK(testing::run_cli("render --mesh /nonexistent.obj --atlas /nonexistent.png --view intent-0 --out \"" +
                           (dir / "x.png").string() + "\"") == 1);
}

TEST_CASE("an unreachable backend is a backend error") {
    testing::TempDir dir;
    testing::write_cube_inputs(dir.path);
    std::ofstream(dir / "c.toml") << "[backends.chat]\nkind = \"http\"\nurl = \"http://127.0.0.1:1/v1/chat\"\nretries = 0\n"
                                     "[backends.seg]\nkind = \"mock\"\n";
    const std::string args = "edit --mesh \"" + (dir / "cube.obj").string() + "\" --atlas \"" + (dir / "cube.png").string() +
                             "\" --strokes \"" + (dir / "strokes.json").string() + "\" --config \"" +
                             (dir / "c.toml").string() + "\" --out \"" + (dir / "out").string() + "\"";
    CHECK(testing::run_cli(args, dir / "log.txt") == 3);
    CHECK(testing::read_text(dir / "log.txt").find("BackendUnavailable") != std::string::npos);
}

TEST_CASE("render and demo commands") {
    testing::TempDir dir;
    REQUIRE(testing::run_cli("demo --out \"" + dir.path.string() + "\"") == 0);
    CHECK(fs::exists(dir / "config.toml"));
    REQUIRE(testing::run_cli("render --mesh \"" + (dir / "cube.obj").string() + "\" --atlas \"" +
                             (dir / "cube.png").string() + "\" --view cover-6 --mode geometry --resolution 64 --out \"" +
                             (dir / "top.png").string() + "\"") == 0);
    CHECK(scribtex::read_png(dir / "top.png").width == 64);
}

TEST_CASE("evaluate prints the accuracy sweep") {
    testing::TempDir dir;
    const auto manifest = fs::path(SCRIBTEX_ASSET_DIR) / "eval" / "manifest.json";
    REQUIRE(testing::run_cli("evaluate --manifest \"" + manifest.string() + "\" --n 1,4", dir / "out.json") == 0);
    const auto j = nlohmann::json::parse(testing::read_text(dir / "out.json"));
    CHECK(j["cases"] == 10);
    CHECK(j["accuracy"]["4"] == 1.0);
}
