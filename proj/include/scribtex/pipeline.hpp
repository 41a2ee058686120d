#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scribtex/config.hpp"
#include "scribtex/intent.hpp"
#include "scribtex/mesh.hpp"
#include "scribtex/scribble.hpp"

namespace scribtex {

enum class RegionState { Scribbled, Refined, IntentPredicted, PatchChosen, Stamped, Integrated };
std::string to_string(RegionState s);
/// Accepts the state names and the stage aliases refine, intent, patch, stamp, integrate.
RegionState parse_state(const std::string& s);

struct RegionRecord {
    std::string id;
    RegionState state = RegionState::Scribbled;
    Rgb color;
    std::string view_id;
    std::optional<std::string> hint;
    int intent_rank = 0;  // 0 until a patch was chosen
    std::string parent;   // set on regions forked for an alternate intent
    std::string error;
    std::string error_stage;
};

/// Deterministic per-stage seed: independent of how many calls preceded it.
std::uint64_t stage_seed(std::uint64_t base, const std::string& region, const std::string& stage, int index);

struct RunOptions {
    /// Stop the process right after this state has been persisted (crash drill).
    std::optional<RegionState> halt_after;
    /// Also keep per-view renders, refinement steps and per-pass atlases.
    bool dump_stages = false;
};

/// Exit status used by the --halt-after drill.
inline constexpr int kHaltExitCode = 75;

/// A directory-backed editing session. One writer at a time: every public
/// method takes the session lock.
class Session {
public:
    static std::unique_ptr<Session> create(const std::filesystem::path& dir, const std::filesystem::path& mesh_path,
                                           const std::filesystem::path& atlas_path, const PipelineConfig& cfg,
                                           std::string id = {});
    static std::unique_ptr<Session> open(const std::filesystem::path& dir);
    static bool exists(const std::filesystem::path& dir);

    const std::string& id() const { return id_; }
    const std::filesystem::path& dir() const { return dir_; }
    const PipelineConfig& config() const { return cfg_; }
    Transcript& transcript() { return *transcript_; }
    Backends& backends() { return backends_; }

    std::vector<RegionRecord> regions() const;
    RegionRecord region(const std::string& id) const;
    nlohmann::json summary() const;

    /// Current atlas (source atlas until an edit is integrated).
    Image current_atlas() const;
    /// Renders a preset view with the current atlas and caches color/geometry PNGs.
    std::filesystem::path view_png(const std::string& view_id, RenderMode mode);

    /// Rasterizes strokes (grouped by view) into new Scribbled regions.
    std::vector<std::string> add_regions(const StrokeSubmission& submission);

    /// Runs the refine stage only (no-op when already refined).
    nlohmann::json refine(const std::string& region_id, const RunOptions& opts = {});
    /// Runs refine and intent prediction; returns the persisted predictions.
    nlohmann::json intents(const std::string& region_id, const RunOptions& opts = {});

    /// Full chain for one region. A rank different from an already chosen one
    /// forks "<id>-r<rank>" from the predictions. Returns the report.
    nlohmann::json run_edit(const std::string& region_id, std::optional<int> intent_rank = std::nullopt,
                            const RunOptions& opts = {});
    /// Several disjoint regions with a single shared integrate pass.
    nlohmann::json run_multi(const std::vector<std::string>& region_ids, const RunOptions& opts = {});

    /// OBJ + MTL + current atlas as a zip archive.
    std::vector<std::uint8_t> export_zip() const;

    /// Observers of stage events (also appended to events.jsonl).
    void set_event_sink(std::function<void(const nlohmann::json&)> sink);
    std::filesystem::path events_path() const { return dir_ / "events.jsonl"; }

    ~Session();

private:
    Session() = default;
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::string id_;
    std::filesystem::path dir_;
    PipelineConfig cfg_;
    std::shared_ptr<Transcript> transcript_;
    Backends backends_;
    mutable std::recursive_mutex mu_;
};

/// Minimal stored (uncompressed) zip writer.
std::vector<std::uint8_t> make_zip(const std::vector<std::pair<std::string, std::vector<std::uint8_t>>>& files);

}  // namespace scribtex
