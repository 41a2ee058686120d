#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scribtex/backends.hpp"
#include "scribtex/image.hpp"
#include "scribtex/renderer.hpp"

namespace scribtex {

struct IntentPrediction {
    std::string semantic;
    std::string rationale;
    int rank = 1;
};

struct IntentResult {
    std::vector<IntentPrediction> predictions;
    /// Model's description of the existing texture style, if it gave one.
    std::string style;
};

struct GlobalPrompt {
    std::string text;
    int intent_rank = 1;
};

struct PatchChoice {
    int image_index = 0;
    Rect box;
    std::string reason;
    double distance = 0.0;  // mean-RGB distance to the scribble color
};

/// Versioned dialogue templates with {{placeholder}} fields.
struct PromptTemplates {
    std::string version;
    std::string intent_system, intent_user;
    std::string global_system, global_user;
    std::string patch_system, patch_user;
    std::string reprompt;

    static PromptTemplates load(const std::filesystem::path& dir);
    /// The templates shipped with the project.
    static const PromptTemplates& bundled();
};

std::string fill_template(const std::string& text, const std::map<std::string, std::string>& values);

/// Lowercase word normalization with suffix stripping and synonym folding.
class Lexicon {
public:
    Lexicon() = default;
    /// {"groups": [["flower", "blossom", ...], ...]}; the first word is canonical.
    static Lexicon load(const std::filesystem::path& path);
    static const Lexicon& bundled();
    void add_group(const std::vector<std::string>& words);

    static std::string stem(const std::string& word);
    std::string canonical(const std::string& word) const;
    /// Canonical content tokens (stopwords dropped), in order.
    std::vector<std::string> tokens(const std::string& text) const;
    /// True when every content token of some keyword appears in the text.
    bool matches_any(const std::string& text, const std::vector<std::string>& keywords) const;
    /// Head (last content) token of `term` appears in `text`.
    bool mentions(const std::string& text, const std::string& term) const;

private:
    std::map<std::string, std::string> canonical_;
};

/// First JSON object embedded in a completion (code fences, preambles and
/// trailing commentary are skipped).
std::optional<nlohmann::json> extract_json_object(const std::string& completion);

std::string color_hex(Rgb c);

struct IntentQuery {
    std::vector<Image> views;  // the four intent-view renders
    Image scribble_view;       // scribbled view with the overlay painted in
    Rgb color;
    std::optional<std::string> hint;
    int n = 4;
};

ChatRequest build_intent_request(const IntentQuery& q, const PromptTemplates& t = PromptTemplates::bundled());

/// Asks the chat backend for n ranked hypotheses; one stricter reprompt on a
/// malformed reply, then MalformedResponse.
IntentResult predict_intent(const IntentQuery& q, ChatBackend& chat,
                            const PromptTemplates& t = PromptTemplates::bundled());

std::vector<GlobalPrompt> make_global_prompts(const IntentPrediction& pred, Rgb color, const std::string& style_context,
                                              int n, ChatBackend& chat,
                                              const PromptTemplates& t = PromptTemplates::bundled(),
                                              const Lexicon& lex = Lexicon::bundled());

/// The model proposes boxes; the box whose crop mean is closest to `color` wins.
/// Throws NoCandidate when no usable box survives one reprompt.
PatchChoice choose_patch(const std::vector<Image>& images, const std::string& semantic, Rgb color, ChatBackend& chat,
                         const PromptTemplates& t = PromptTemplates::bundled());

/// Picks the best of already-proposed boxes (clamped to bounds; empty boxes
/// dropped). Ties break on (image_index, y, x, h, w).
std::optional<PatchChoice> pick_closest_box(const std::vector<Image>& images, std::vector<PatchChoice> boxes, Rgb color);

/// Square window scan at `stride` (0 means patch_size / 2) over every image;
/// minimal mean-RGB distance wins, ties by (image_index, y, x). Windows touching
/// an unset texel of the optional per-image validity mask are skipped.
PatchChoice exhaustive_patch_search(const std::vector<Image>& images, Rgb color, int patch_size, int stride = 0,
                                    const std::vector<TexelMask>* valid = nullptr);

/// Short phrase naming the dominant colors of an atlas, used as style context.
std::string describe_texture_style(const Image& atlas);

struct EvalCase {
    std::string id;
    IntentQuery query;
    std::vector<std::string> truth_keywords;
    /// Mock mode: ranked predictions the mock chat should answer with.
    std::vector<std::string> canned_predictions;
};

/// Fraction of cases where any of the n predictions contains a truth keyword
/// or a listed synonym.
double evaluate_intent_accuracy(const std::vector<EvalCase>& cases, int n_predictions, ChatBackend& chat,
                                const Lexicon& lex = Lexicon::bundled(),
                                const PromptTemplates& t = PromptTemplates::bundled());

/// Completion text a model would return for the given ranked predictions.
std::string intent_completion(const std::vector<std::string>& semantics, int n);

/// Loads a manifest [{id, mesh, atlas, strokes, truth_keywords, hint?, mock_predictions?, mock_distractors?}],
/// rendering the intent views for each case. `canned_field` picks which mock list fills canned_predictions.
std::vector<EvalCase> load_eval_manifest(const std::filesystem::path& path,
                                         const std::string& canned_field = "mock_predictions",
                                         int resolution = kDefaultResolution);

/// Deterministic stand-in model answering the bundled templates.
ChatResponder default_mock_responder();

}  // namespace scribtex
