#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "scribtex/backends.hpp"
#include "scribtex/renderer.hpp"

namespace scribtex {

/// TOML subset: [tables], [dotted.tables], bare/quoted/dotted keys, basic and
/// literal strings, integers, floats, booleans, arrays and inline tables.
nlohmann::json parse_toml(std::string_view text);

struct PipelineConfig {
    int n_intents = 4;
    int n_global_prompts = 4;
    double guidance_scale = kDefaultGuidanceScale;
    bool refinement_enabled = true;
    int erosion_radius = 2;
    std::uint64_t seed = 0;
    int image_size = kDefaultGenSize;
    double atlas_priority_threshold = 20.0;

    double fov = kDefaultFov;
    double distance = kDefaultDistance;
    int resolution = kDefaultResolution;

    std::string templates_dir;  // empty: bundled
    std::string synonyms_path;  // empty: bundled

    BackendConfig chat, gen, inpaint, seg;

    void validate() const;
    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& j);
    /// Reads a TOML file; backends not configured there follow the environment.
    static PipelineConfig load(const std::filesystem::path& path);
    /// Defaults with the environment applied.
    static PipelineConfig defaults();
};

/// Backends without an explicit kind become "http" when SCRIBBLESENSE_<X>_URL is
/// set and "mock" otherwise; auth_env defaults to SCRIBBLESENSE_<X>_KEY.
void apply_environment(PipelineConfig& cfg, const nlohmann::json& explicit_backends = nlohmann::json::object());

struct Backends {
    std::unique_ptr<ChatBackend> chat;
    std::unique_ptr<ImageGenBackend> gen;
    std::unique_ptr<InpaintBackend> inpaint;
    std::unique_ptr<SegmentBackend> seg;

    void set_transcript(const std::shared_ptr<Transcript>& t);
};

Backends make_backends(const PipelineConfig& cfg);

}  // namespace scribtex
