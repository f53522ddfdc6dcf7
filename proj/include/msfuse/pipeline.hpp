#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "msfuse/chat_client.hpp"
#include "msfuse/detection_io.hpp"
#include "msfuse/evaluation.hpp"
#include "msfuse/fusion.hpp"
#include "msfuse/language.hpp"
#include "msfuse/pairing.hpp"
#include "msfuse/png_io.hpp"

namespace msfuse {

inline constexpr const char* kToolVersion = "0.1.0";

struct PipelineOptions {
    std::shared_ptr<ChatClient> client;  // required
    std::string cache_dir;               // empty -> no cache
    int max_inflight = 1;
    RetryPolicy retry;
};

struct RunManifest {
    json config_snapshot;
    std::map<std::string, std::string> input_digests;  // path -> sha256
    std::int64_t cache_hits = 0;
    std::int64_t cache_misses = 0;
    std::int64_t describe_calls = 0;
    std::int64_t complete_calls = 0;
    int image_count = 0;
    int pair_count = 0;
    int fallback_count = 0;
    std::map<std::string, double> stage_millis;
    std::string tool_version = kToolVersion;

    json to_json() const {
        json digests = json::object();
        for (const auto& [path, digest] : input_digests) digests[path] = digest;
        json timings = json::object();
        for (const auto& [stage, ms] : stage_millis) timings[stage] = ms;
        return {{"tool_version", tool_version},
                {"config", config_snapshot},
                {"input_digests", digests},
                {"cache", {{"hits", cache_hits}, {"misses", cache_misses}}},
                {"client_calls", {{"describe", describe_calls}, {"complete", complete_calls}}},
                {"image_count", image_count},
                {"pair_count", pair_count},
                {"fallback_count", fallback_count},
                {"stage_millis", timings}};
    }
};

inline std::string file_sha256(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("file_sha256: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return sha256_hex(bytes);
}

// Language-branch output for one image; lang[i] aligns with pairs[i] and is
// absent for pairs that downgraded to vision-only.
struct ImageLanguageResult {
    std::string image_id;
    std::vector<PairedDetection> pairs;
    std::vector<Description> rgb_descriptions;
    std::vector<Description> thermal_descriptions;
    std::vector<std::optional<MSCoTScores>> lang;
    int fallback_count = 0;
};

namespace detail {

struct GroupedInputs {
    std::vector<ManifestImage> images;
    std::map<std::string, std::vector<Detection>> rgb_by_image;
    std::map<std::string, std::vector<Detection>> t_by_image;
};

inline GroupedInputs group_inputs(const DetectionFile& rgb_file, const DetectionFile& t_file) {
    if (rgb_file.modality != Modality::RGB)
        throw SchemaError("RGB detection file declares modality " +
                          std::string(to_string(rgb_file.modality)));
    if (t_file.modality != Modality::Thermal)
        throw SchemaError("thermal detection file declares modality " +
                          std::string(to_string(t_file.modality)));
    GroupedInputs g;
    g.images = rgb_file.image_manifest;
    for (const auto& im : t_file.image_manifest) {
        const bool known = std::any_of(g.images.begin(), g.images.end(),
                                       [&](const ManifestImage& m) { return m.image_id == im.image_id; });
        if (!known) g.images.push_back(im);
    }
    for (const auto& d : rgb_file.entries) g.rgb_by_image[d.image_id].push_back(d);
    for (const auto& d : t_file.entries) g.t_by_image[d.image_id].push_back(d);
    return g;
}

}  // namespace detail

// Runs pairing, crop-and-mark, description, and MSCoT for one image. A pair
// whose MSCoT reply cannot be parsed downgrades to vision-only (lang absent).
inline ImageLanguageResult run_language_branch(const ImageBuffer& image_rgb,
                                               const ImageBuffer& image_t,
                                               const std::vector<Detection>& dets_rgb,
                                               const std::vector<Detection>& dets_t,
                                               const PipelineConfig& cfg,
                                               ChatClient& client,
                                               const PipelineOptions& options) {
    ImageLanguageResult result;
    if (!dets_rgb.empty())
        result.image_id = dets_rgb.front().image_id;
    else if (!dets_t.empty())
        result.image_id = dets_t.front().image_id;

    auto cp = cpdg(image_rgb, image_t, dets_rgb, dets_t, cfg.prompts, client, cfg.pairing,
                   options.retry, options.max_inflight);
    result.pairs = std::move(cp.pairs);
    result.rgb_descriptions = std::move(cp.rgb);
    result.thermal_descriptions = std::move(cp.thermal);

    result.lang = parallel_map_ordered<std::optional<MSCoTScores>>(
        result.pairs.size(), options.max_inflight, [&](std::size_t i) -> std::optional<MSCoTScores> {
            try {
                return mscot(result.rgb_descriptions[i], result.thermal_descriptions[i],
                             cfg.prompts, client, options.retry);
            } catch (const ParseError&) {
                return std::nullopt;
            }
        });
    for (const auto& l : result.lang)
        if (!l.has_value()) ++result.fallback_count;
    return result;
}

// End-to-end over a detection-file pair: language branch once per image, then
// fuse and write the fused detections plus a run manifest.
inline RunManifest run_pipeline(const std::string& det_rgb_path, const std::string& det_t_path,
                                const std::string& images_root, const PipelineConfig& cfg,
                                const std::string& out_path, const PipelineOptions& options,
                                std::vector<ImageLanguageResult>* language_out = nullptr) {
    using clock = std::chrono::steady_clock;
    if (!options.client) throw std::invalid_argument("run_pipeline: no client configured");

    RunManifest manifest;
    manifest.config_snapshot = config_to_json(cfg);
    manifest.input_digests[det_rgb_path] = file_sha256(det_rgb_path);
    manifest.input_digests[det_t_path] = file_sha256(det_t_path);

    const auto t_load = clock::now();
    const auto rgb_file = load_detections(det_rgb_path);
    const auto t_file = load_detections(det_t_path);
    const auto grouped = detail::group_inputs(rgb_file, t_file);
    manifest.image_count = static_cast<int>(grouped.images.size());

    auto counting = std::make_shared<CountingChatClient>(options.client);
    std::shared_ptr<ChatClient> client = counting;
    std::shared_ptr<CachingChatClient> cache;
    if (!options.cache_dir.empty()) {
        cache = std::make_shared<CachingChatClient>(counting, options.cache_dir);
        client = cache;
    }
    const auto t_language = clock::now();
    manifest.stage_millis["load"] =
        std::chrono::duration<double, std::milli>(t_language - t_load).count();

    std::vector<FusedDetection> fused;
    std::vector<ImageLanguageResult> language_results;
    double fuse_millis = 0.0;
    for (const auto& im : grouped.images) {
        static const std::vector<Detection> none;
        auto rit = grouped.rgb_by_image.find(im.image_id);
        auto tit = grouped.t_by_image.find(im.image_id);
        const auto& dets_rgb = rit == grouped.rgb_by_image.end() ? none : rit->second;
        const auto& dets_t = tit == grouped.t_by_image.end() ? none : tit->second;
        if (dets_rgb.empty() && dets_t.empty()) continue;

        namespace fs = std::filesystem;
        const auto image_rgb = read_png((fs::path(images_root) / im.path_rgb).string());
        const auto image_t = read_png((fs::path(images_root) / im.path_thermal).string());

        auto lang = run_language_branch(image_rgb, image_t, dets_rgb, dets_t, cfg, *client, options);
        lang.image_id = im.image_id;
        manifest.pair_count += static_cast<int>(lang.pairs.size());
        manifest.fallback_count += lang.fallback_count;

        const auto t0 = clock::now();
        auto image_fused = fuse_image(lang.pairs, lang.lang, cfg.fusion);
        if (cfg.post_nms) image_fused = post_fusion_nms(std::move(image_fused), cfg.post_nms_iou);
        fused.insert(fused.end(), image_fused.begin(), image_fused.end());
        fuse_millis += std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        language_results.push_back(std::move(lang));
    }
    const auto t_done = clock::now();
    manifest.stage_millis["language"] =
        std::chrono::duration<double, std::milli>(t_done - t_language).count() - fuse_millis;
    manifest.stage_millis["fuse"] = fuse_millis;

    save_fused(out_path, fused);
    manifest.describe_calls = counting->describe_calls();
    manifest.complete_calls = counting->complete_calls();
    if (cache) {
        manifest.cache_hits = cache->hits();
        manifest.cache_misses = cache->misses();
    }
    if (language_out) *language_out = std::move(language_results);
    return manifest;
}

struct AblationRow {
    FusionConfig config;
    EvalReport report;
};

// Re-fuses shared language-branch outputs under each strategy combination and
// evaluates; the language branch is never re-run.
inline std::vector<AblationRow> run_ablation(const std::vector<ImageLanguageResult>& language,
                                             const std::vector<FusionConfig>& grid,
                                             const std::vector<GroundTruthBox>& gts,
                                             const std::vector<EvalImage>& images,
                                             double iou_thr = 0.5, bool post_nms = false,
                                             double post_nms_iou = 0.5) {
    std::vector<AblationRow> rows;
    rows.reserve(grid.size());
    for (const auto& cfg : grid) {
        std::vector<FusedDetection> fused;
        for (const auto& lang : language) {
            auto image_fused = fuse_image(lang.pairs, lang.lang, cfg);
            if (post_nms) image_fused = post_fusion_nms(std::move(image_fused), post_nms_iou);
            fused.insert(fused.end(), image_fused.begin(), image_fused.end());
        }
        rows.push_back({cfg, evaluate(fused, gts, images, iou_thr)});
    }
    return rows;
}

// The four score combinations ablated in the strategy study (V, VL).
inline std::vector<FusionConfig> score_strategy_grid() {
    std::vector<FusionConfig> grid;
    for (auto v : {ScoreFusionStrategy::Avg, ScoreFusionStrategy::Max}) {
        for (auto vl : {ScoreFusionStrategy::Avg, ScoreFusionStrategy::Max}) {
            FusionConfig cfg;
            cfg.score_v = v;
            cfg.score_vl = vl;
            grid.push_back(cfg);
        }
    }
    return grid;
}

// The eight box combinations (V, L, VL), each s-avg or argmax.
inline std::vector<FusionConfig> box_strategy_grid() {
    std::vector<FusionConfig> grid;
    for (auto v : {BoxFusionStrategy::Argmax, BoxFusionStrategy::SAvg}) {
        for (auto l : {BoxFusionStrategy::Argmax, BoxFusionStrategy::SAvg}) {
            for (auto vl : {BoxFusionStrategy::Argmax, BoxFusionStrategy::SAvg}) {
                FusionConfig cfg;
                cfg.box_v = v;
                cfg.box_l = l;
                cfg.box_vl = vl;
                grid.push_back(cfg);
            }
        }
    }
    return grid;
}

}  // namespace msfuse
