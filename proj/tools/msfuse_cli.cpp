// Command-line surface for the multispectral late-fusion pipeline.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "msfuse/chat_client.hpp"
#include "msfuse/detection_io.hpp"
#include "msfuse/evaluation.hpp"
#include "msfuse/fusion.hpp"
#include "msfuse/http_client.hpp"
#include "msfuse/pipeline.hpp"
#include "msfuse/vcm.hpp"

namespace {

using namespace msfuse;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitSchema = 2;
constexpr int kExitClient = 3;

struct GlobalOptions {
    std::string config_path;
    std::string cache_dir;
    std::string client_kind = "mock";
    unsigned long seed = 0;
    int max_inflight = 1;
    bool post_nms = false;
};

PipelineConfig effective_config(const GlobalOptions& g) {
    PipelineConfig cfg;
    if (!g.config_path.empty()) cfg = load_config(g.config_path);
    if (g.post_nms) cfg.post_nms = true;
    return cfg;
}

std::shared_ptr<ChatClient> make_client(const GlobalOptions& g, const PipelineConfig& cfg) {
    if (g.client_kind == "mock") return std::make_shared<MockChatClient>(g.seed);
    if (g.client_kind == "http") {
        HttpClientConfig http;
        http.endpoint = cfg.client_endpoint;
        http.model = cfg.client_model;
        http.response_text_path = cfg.response_text_path;
        return std::make_shared<HttpChatClient>(http);
    }
    throw CLI::ValidationError("--client must be 'mock' or 'http'");
}

PipelineOptions make_options(const GlobalOptions& g, const PipelineConfig& cfg) {
    PipelineOptions opts;
    opts.client = make_client(g, cfg);
    opts.cache_dir = g.cache_dir;
    opts.max_inflight = g.max_inflight;
    return opts;
}

void print_report_table(const EvalReport& r) {
    auto cell = [](const std::optional<double>& v) {
        char buf[16];
        if (v)
            std::snprintf(buf, sizeof(buf), "%8.2f", *v * 100.0);
        else
            std::snprintf(buf, sizeof(buf), "%8s", "-");
        return std::string(buf);
    };
    std::printf("%-12s %8s | %8s %8s %8s\n", "", "AP", "MR Day", "MR Night", "MR All");
    std::printf("%-12s %s | %s %s %s\n", "result", cell(r.ap_all).c_str(), cell(r.mr_day).c_str(),
                cell(r.mr_night).c_str(), cell(r.mr_all).c_str());
}

void print_ablation_table(const std::vector<AblationRow>& rows) {
    std::printf("%-8s %-8s %-8s %-8s %-8s | %8s %8s %8s %8s\n", "score_v", "score_vl", "box_v",
                "box_l", "box_vl", "AP", "MR Day", "MR Night", "MR All");
    for (const auto& row : rows) {
        auto cell = [](const std::optional<double>& v) {
            char buf[16];
            if (v)
                std::snprintf(buf, sizeof(buf), "%8.2f", *v * 100.0);
            else
                std::snprintf(buf, sizeof(buf), "%8s", "-");
            return std::string(buf);
        };
        std::printf("%-8s %-8s %-8s %-8s %-8s | %s %s %s %s\n", to_string(row.config.score_v),
                    to_string(row.config.score_vl), to_string(row.config.box_v),
                    to_string(row.config.box_l), to_string(row.config.box_vl),
                    cell(row.report.ap_all).c_str(), cell(row.report.mr_day).c_str(),
                    cell(row.report.mr_night).c_str(), cell(row.report.mr_all).c_str());
    }
}

json ablation_to_json(const std::vector<AblationRow>& rows) {
    json out = json::array();
    for (const auto& row : rows)
        out.push_back({{"config", fusion_config_to_json(row.config)},
                       {"report", eval_report_to_json(row.report, false)}});
    return out;
}

std::vector<ImageLanguageResult> run_language_for_files(const std::string& rgb_path,
                                                        const std::string& t_path,
                                                        const std::string& images_root,
                                                        const PipelineConfig& cfg,
                                                        const PipelineOptions& opts) {
    const auto rgb_file = load_detections(rgb_path);
    const auto t_file = load_detections(t_path);
    const auto grouped = detail::group_inputs(rgb_file, t_file);
    std::vector<ImageLanguageResult> results;
    for (const auto& im : grouped.images) {
        static const std::vector<Detection> none;
        auto rit = grouped.rgb_by_image.find(im.image_id);
        auto tit = grouped.t_by_image.find(im.image_id);
        const auto& dets_rgb = rit == grouped.rgb_by_image.end() ? none : rit->second;
        const auto& dets_t = tit == grouped.t_by_image.end() ? none : tit->second;
        if (dets_rgb.empty() && dets_t.empty()) continue;
        const auto image_rgb = read_png((fs::path(images_root) / im.path_rgb).string());
        const auto image_t = read_png((fs::path(images_root) / im.path_thermal).string());
        auto lang =
            run_language_branch(image_rgb, image_t, dets_rgb, dets_t, cfg, *opts.client, opts);
        lang.image_id = im.image_id;
        results.push_back(std::move(lang));
    }
    return results;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multispectral RGB+thermal late-fusion detection pipeline"};
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--config", g.config_path, "Pipeline config JSON");
    app.add_option("--cache-dir", g.cache_dir, "Chat-client response cache directory");
    app.add_option("--client", g.client_kind, "Chat client backend: mock|http");
    app.add_option("--seed", g.seed, "Mock client seed");
    app.add_option("--max-inflight", g.max_inflight, "Concurrent client requests");
    app.add_flag("--post-nms", g.post_nms, "Apply post-fusion NMS (IoU 0.5)");

    // pair
    std::string rgb_path, t_path, out_path, images_root, gt_path, manifest_out, side_str = "rgb";
    std::string pairs_path, scores_path, descs_path, out_dir, grid_kind = "score", report_out;
    auto* cmd_pair = app.add_subcommand("pair", "Cross-modality detection pairing");
    cmd_pair->add_option("--rgb", rgb_path, "RGB detections JSON")->required();
    cmd_pair->add_option("--thermal", t_path, "Thermal detections JSON")->required();
    cmd_pair->add_option("--out", out_path, "Output pairs JSON")->required();

    auto* cmd_vcm = app.add_subcommand("vcm", "Emit cropped-and-marked pedestrian images");
    cmd_vcm->add_option("--pairs", pairs_path, "Pairs JSON")->required();
    cmd_vcm->add_option("--manifest", rgb_path, "Detection file providing the image manifest")
        ->required();
    cmd_vcm->add_option("--images-root", images_root, "Root directory for image paths")->required();
    cmd_vcm->add_option("--side", side_str, "Modality side: rgb|thermal");
    cmd_vcm->add_option("--out-dir", out_dir, "Output directory for crop PNGs")->required();

    auto* cmd_describe = app.add_subcommand("describe", "Generate per-crop descriptions");
    cmd_describe->add_option("--rgb", rgb_path, "RGB detections JSON")->required();
    cmd_describe->add_option("--thermal", t_path, "Thermal detections JSON")->required();
    cmd_describe->add_option("--images-root", images_root, "Root directory for image paths")
        ->required();
    cmd_describe->add_option("--out", out_path, "Output descriptions JSON")->required();
    cmd_describe->add_option("--pairs-out", pairs_path, "Also write the pairs JSON");

    auto* cmd_mscot = app.add_subcommand("mscot", "Two-step chain-of-thought scoring");
    cmd_mscot->add_option("--descriptions", descs_path, "Descriptions JSON")->required();
    cmd_mscot->add_option("--out", out_path, "Output scores JSON")->required();

    auto* cmd_fuse = app.add_subcommand("fuse", "Fuse vision and language detections");
    cmd_fuse->add_option("--pairs", pairs_path, "Pairs JSON")->required();
    cmd_fuse->add_option("--scores", scores_path, "MSCoT scores JSON")->required();
    cmd_fuse->add_option("--out", out_path, "Output fused detections JSON")->required();

    auto* cmd_eval = app.add_subcommand("eval", "Evaluate fused detections against ground truth");
    cmd_eval->add_option("--fused", pairs_path, "Fused detections JSON")->required();
    cmd_eval->add_option("--gt", gt_path, "Ground truth JSON")->required();
    cmd_eval->add_option("--out", report_out, "Output report JSON");

    auto* cmd_ablate = app.add_subcommand("ablate", "Strategy-matrix ablation");
    cmd_ablate->add_option("--rgb", rgb_path, "RGB detections JSON")->required();
    cmd_ablate->add_option("--thermal", t_path, "Thermal detections JSON")->required();
    cmd_ablate->add_option("--images-root", images_root, "Root directory for image paths")
        ->required();
    cmd_ablate->add_option("--gt", gt_path, "Ground truth JSON")->required();
    cmd_ablate->add_option("--grid", grid_kind, "Strategy grid: score|box|default");
    cmd_ablate->add_option("--out", report_out, "Output table JSON");

    auto* cmd_run = app.add_subcommand("run", "End-to-end pipeline");
    cmd_run->add_option("--rgb", rgb_path, "RGB detections JSON")->required();
    cmd_run->add_option("--thermal", t_path, "Thermal detections JSON")->required();
    cmd_run->add_option("--images-root", images_root, "Root directory for image paths")->required();
    cmd_run->add_option("--out", out_path, "Output fused detections JSON")->required();
    cmd_run->add_option("--manifest-out", manifest_out, "Output run manifest JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        const PipelineConfig cfg = effective_config(g);

        if (cmd_pair->parsed()) {
            const auto rgb_file = load_detections(rgb_path);
            const auto t_file = load_detections(t_path);
            const auto grouped = detail::group_inputs(rgb_file, t_file);
            std::vector<std::pair<std::string, std::vector<PairedDetection>>> by_image;
            for (const auto& im : grouped.images) {
                static const std::vector<Detection> none;
                auto rit = grouped.rgb_by_image.find(im.image_id);
                auto tit = grouped.t_by_image.find(im.image_id);
                const auto& dr = rit == grouped.rgb_by_image.end() ? none : rit->second;
                const auto& dt = tit == grouped.t_by_image.end() ? none : tit->second;
                by_image.emplace_back(im.image_id, dpair(dr, dt, cfg.pairing));
            }
            save_pairs(out_path, by_image);
        } else if (cmd_vcm->parsed()) {
            const Modality side = side_str == "thermal" ? Modality::Thermal : Modality::RGB;
            const auto manifest_file = load_detections(rgb_path);
            const auto pairs_by_image = load_pairs(pairs_path);
            fs::create_directories(out_dir);
            for (const auto& [image_id, pairs] : pairs_by_image) {
                const auto mit = std::find_if(
                    manifest_file.image_manifest.begin(), manifest_file.image_manifest.end(),
                    [&](const ManifestImage& m) { return m.image_id == image_id; });
                if (mit == manifest_file.image_manifest.end())
                    throw SchemaError("vcm: image id not in manifest: " + image_id);
                const auto& rel = side == Modality::RGB ? mit->path_rgb : mit->path_thermal;
                const auto image = read_png((fs::path(images_root) / rel).string());
                const auto crops = vcm_batch(image, pairs, side);
                for (const auto& crop : crops)
                    write_png((fs::path(out_dir) /
                               (image_id + "_" + to_string(side) + "_" +
                                std::to_string(crop.pair_index) + ".png"))
                                  .string(),
                              crop.image);
            }
        } else if (cmd_describe->parsed()) {
            const auto opts = make_options(g, cfg);
            const auto results = run_language_for_files(rgb_path, t_path, images_root, cfg, opts);
            std::vector<Description> all;
            std::vector<std::pair<std::string, std::vector<PairedDetection>>> by_image;
            for (const auto& r : results) {
                all.insert(all.end(), r.rgb_descriptions.begin(), r.rgb_descriptions.end());
                all.insert(all.end(), r.thermal_descriptions.begin(),
                           r.thermal_descriptions.end());
                by_image.emplace_back(r.image_id, r.pairs);
            }
            save_descriptions(out_path, all);
            if (!pairs_path.empty()) save_pairs(pairs_path, by_image);
        } else if (cmd_mscot->parsed()) {
            const auto opts = make_options(g, cfg);
            const auto descs = load_descriptions(descs_path);
            // Group by (image, pair) and run the chain per pair.
            std::map<std::string, std::map<int, std::pair<std::optional<Description>,
                                                          std::optional<Description>>>>
                grouped;
            for (const auto& d : descs) {
                auto& slot = grouped[d.image_id][d.pair_index];
                (d.modality == Modality::RGB ? slot.first : slot.second) = d;
            }
            std::vector<std::pair<std::string, std::vector<std::optional<MSCoTScores>>>> out;
            for (const auto& [image_id, pairs] : grouped) {
                std::vector<std::optional<MSCoTScores>> scores;
                for (const auto& [pair_index, pair_descs] : pairs) {
                    if (!pair_descs.first || !pair_descs.second)
                        throw SchemaError("mscot: pair " + std::to_string(pair_index) +
                                          " of image " + image_id + " lacks both descriptions");
                    try {
                        scores.push_back(mscot(*pair_descs.first, *pair_descs.second, cfg.prompts,
                                               *opts.client, opts.retry));
                    } catch (const ParseError&) {
                        scores.push_back(std::nullopt);
                    }
                }
                out.emplace_back(image_id, std::move(scores));
            }
            save_mscot_scores(out_path, out);
        } else if (cmd_fuse->parsed()) {
            const auto pairs_by_image = load_pairs(pairs_path);
            const auto scores_by_image = load_mscot_scores(scores_path);
            std::map<std::string, const std::vector<std::optional<MSCoTScores>>*> score_index;
            for (const auto& [image_id, scores] : scores_by_image)
                score_index[image_id] = &scores;
            std::vector<FusedDetection> fused;
            for (const auto& [image_id, pairs] : pairs_by_image) {
                std::vector<std::optional<MSCoTScores>> lang(pairs.size());
                const auto sit = score_index.find(image_id);
                if (sit != score_index.end())
                    for (std::size_t i = 0; i < pairs.size() && i < sit->second->size(); ++i)
                        lang[i] = (*sit->second)[i];
                auto image_fused = fuse_image(pairs, lang, cfg.fusion);
                if (cfg.post_nms)
                    image_fused = post_fusion_nms(std::move(image_fused), cfg.post_nms_iou);
                fused.insert(fused.end(), image_fused.begin(), image_fused.end());
            }
            save_fused(out_path, fused);
        } else if (cmd_eval->parsed()) {
            const auto fused = load_fused(pairs_path);
            const auto gt = load_ground_truth(gt_path);
            const auto report = evaluate(fused, gt.entries, gt.images);
            print_report_table(report);
            if (!report_out.empty())
                detail::save_json_file(report_out, eval_report_to_json(report));
        } else if (cmd_ablate->parsed()) {
            const auto opts = make_options(g, cfg);
            const auto language = run_language_for_files(rgb_path, t_path, images_root, cfg, opts);
            const auto gt = load_ground_truth(gt_path);
            std::vector<FusionConfig> grid;
            if (grid_kind == "score")
                grid = score_strategy_grid();
            else if (grid_kind == "box")
                grid = box_strategy_grid();
            else
                grid = {cfg.fusion};
            const auto rows = run_ablation(language, grid, gt.entries, gt.images, 0.5,
                                           cfg.post_nms, cfg.post_nms_iou);
            print_ablation_table(rows);
            if (!report_out.empty()) detail::save_json_file(report_out, ablation_to_json(rows));
        } else if (cmd_run->parsed()) {
            const auto opts = make_options(g, cfg);
            const auto manifest =
                run_pipeline(rgb_path, t_path, images_root, cfg, out_path, opts);
            if (!manifest_out.empty()) detail::save_json_file(manifest_out, manifest.to_json());
            std::printf("images=%d pairs=%d fallbacks=%d describe_calls=%lld complete_calls=%lld\n",
                        manifest.image_count, manifest.pair_count, manifest.fallback_count,
                        static_cast<long long>(manifest.describe_calls),
                        static_cast<long long>(manifest.complete_calls));
        }
        return kExitOk;
    } catch (const SchemaError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitSchema;
    } catch (const TransportError& e) {
        std::cerr << "client error: " << e.what() << "\n";
        return kExitClient;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
