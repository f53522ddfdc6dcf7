#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "msfuse/evaluation.hpp"
#include "msfuse/fusion.hpp"
#include "msfuse/geometry.hpp"
#include "msfuse/language.hpp"
#include "msfuse/pairing.hpp"
#include "msfuse/prompts.hpp"

namespace msfuse {

using nlohmann::json;

// Input/schema violation; maps to exit code 2 in the CLI.
struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kSchemaVersion = "1";

struct ManifestImage {
    std::string image_id;
    std::string path_rgb;
    std::string path_thermal;
    Condition condition = Condition::Unknown;
};

struct DetectionFile {
    Modality modality = Modality::RGB;
    std::vector<Detection> entries;
    std::vector<ManifestImage> image_manifest;
};

namespace detail {

inline json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

inline Box box_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 4)
        throw SchemaError(where + ": box must be [x1,y1,x2,y2]");
    return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline Modality modality_from_string(const std::string& s, const std::string& where) {
    if (s == "rgb") return Modality::RGB;
    if (s == "thermal") return Modality::Thermal;
    throw SchemaError(where + ": unknown modality '" + s + "'");
}

inline Condition condition_from_string(const std::string& s, const std::string& where) {
    if (s == "day") return Condition::Day;
    if (s == "night") return Condition::Night;
    if (s == "unknown") return Condition::Unknown;
    throw SchemaError(where + ": unknown condition '" + s + "'");
}

inline json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

inline void save_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace detail

inline DetectionFile load_detections(const std::string& path) {
    const json j = detail::load_json_file(path);
    if (j.value("schema_version", "") != kSchemaVersion)
        throw SchemaError(path + ": unsupported schema_version");
    DetectionFile file;
    file.modality = detail::modality_from_string(j.value("modality", ""), path);
    std::size_t idx = 0;
    for (const auto& e : j.value("entries", json::array())) {
        const std::string where = path + ": entry " + std::to_string(idx);
        Detection d;
        if (!e.contains("image_id")) throw SchemaError(where + ": missing image_id");
        d.image_id = e.at("image_id").get<std::string>();
        d.box = detail::box_from_json(e.value("box", json()), where);
        if (!e.contains("score")) throw SchemaError(where + ": missing score");
        d.score = e.at("score").get<double>();
        d.class_label = e.value("class_label", "person");
        d.modality = file.modality;
        const auto violations = validate_detection(d);
        if (!violations.empty()) {
            std::string msg = where + ":";
            for (const auto& v : violations) msg += " " + v + ";";
            throw SchemaError(msg);
        }
        file.entries.push_back(std::move(d));
        ++idx;
    }
    for (const auto& m : j.value("image_manifest", json::array())) {
        ManifestImage im;
        im.image_id = m.value("image_id", "");
        if (im.image_id.empty()) throw SchemaError(path + ": manifest entry missing image_id");
        im.path_rgb = m.value("path_rgb", "");
        im.path_thermal = m.value("path_thermal", "");
        im.condition = detail::condition_from_string(m.value("condition", "unknown"), path);
        file.image_manifest.push_back(std::move(im));
    }
    for (const auto& d : file.entries) {
        const bool known = std::any_of(file.image_manifest.begin(), file.image_manifest.end(),
                                       [&](const ManifestImage& im) { return im.image_id == d.image_id; });
        if (!known)
            throw SchemaError(path + ": entry image_id '" + d.image_id + "' not in image_manifest");
    }
    return file;
}

inline void save_detections(const std::string& path, const DetectionFile& file) {
    json entries = json::array();
    for (const auto& d : file.entries)
        entries.push_back({{"image_id", d.image_id},
                           {"box", detail::box_to_json(d.box)},
                           {"score", d.score},
                           {"class_label", d.class_label}});
    json manifest = json::array();
    for (const auto& im : file.image_manifest)
        manifest.push_back({{"image_id", im.image_id},
                            {"path_rgb", im.path_rgb},
                            {"path_thermal", im.path_thermal},
                            {"condition", to_string(im.condition)}});
    detail::save_json_file(path, json{{"schema_version", kSchemaVersion},
                                      {"modality", to_string(file.modality)},
                                      {"entries", entries},
                                      {"image_manifest", manifest}});
}

// ---- paired detections ----

inline json detection_to_json(const Detection& d) {
    return {{"image_id", d.image_id},
            {"box", detail::box_to_json(d.box)},
            {"score", d.score},
            {"modality", to_string(d.modality)},
            {"class_label", d.class_label}};
}

inline Detection detection_from_json(const json& j, const std::string& where) {
    Detection d;
    d.image_id = j.value("image_id", "");
    d.box = detail::box_from_json(j.value("box", json()), where);
    d.score = j.value("score", -1.0);
    d.modality = detail::modality_from_string(j.value("modality", ""), where);
    d.class_label = j.value("class_label", "person");
    return d;
}

inline void save_pairs(const std::string& path,
                       const std::vector<std::pair<std::string, std::vector<PairedDetection>>>&
                           pairs_by_image) {
    json images = json::array();
    for (const auto& [image_id, pairs] : pairs_by_image) {
        json jpairs = json::array();
        for (const auto& p : pairs)
            jpairs.push_back({{"rgb", detection_to_json(p.rgb)},
                              {"thermal", detection_to_json(p.thermal)},
                              {"provenance", to_string(p.provenance)}});
        images.push_back({{"image_id", image_id}, {"pairs", jpairs}});
    }
    detail::save_json_file(path, json{{"schema_version", kSchemaVersion}, {"images", images}});
}

inline std::vector<std::pair<std::string, std::vector<PairedDetection>>> load_pairs(
    const std::string& path) {
    const json j = detail::load_json_file(path);
    if (j.value("schema_version", "") != kSchemaVersion)
        throw SchemaError(path + ": unsupported schema_version");
    std::vector<std::pair<std::string, std::vector<PairedDetection>>> out;
    for (const auto& im : j.value("images", json::array())) {
        std::vector<PairedDetection> pairs;
        for (const auto& p : im.value("pairs", json::array())) {
            PairedDetection pd;
            pd.rgb = detection_from_json(p.at("rgb"), path);
            pd.thermal = detection_from_json(p.at("thermal"), path);
            const std::string prov = p.value("provenance", "");
            if (prov == "matched")
                pd.provenance = PairProvenance::Matched;
            else if (prov == "override_from_rgb")
                pd.provenance = PairProvenance::OverrideFromRGB;
            else if (prov == "override_from_thermal")
                pd.provenance = PairProvenance::OverrideFromThermal;
            else
                throw SchemaError(path + ": unknown provenance '" + prov + "'");
            pairs.push_back(std::move(pd));
        }
        out.emplace_back(im.value("image_id", ""), std::move(pairs));
    }
    return out;
}

// ---- descriptions and MSCoT scores ----

inline void save_descriptions(const std::string& path, const std::vector<Description>& descs) {
    json arr = json::array();
    for (const auto& d : descs)
        arr.push_back({{"text", d.text},
                       {"modality", to_string(d.modality)},
                       {"pair_index", d.pair_index},
                       {"image_id", d.image_id}});
    detail::save_json_file(path, json{{"schema_version", kSchemaVersion}, {"descriptions", arr}});
}

inline std::vector<Description> load_descriptions(const std::string& path) {
    const json j = detail::load_json_file(path);
    if (j.value("schema_version", "") != kSchemaVersion)
        throw SchemaError(path + ": unsupported schema_version");
    std::vector<Description> out;
    for (const auto& e : j.value("descriptions", json::array())) {
        Description d;
        d.text = e.value("text", "");
        if (d.text.empty()) throw SchemaError(path + ": empty description text");
        d.modality = detail::modality_from_string(e.value("modality", ""), path);
        d.pair_index = e.value("pair_index", -1);
        d.image_id = e.value("image_id", "");
        out.push_back(std::move(d));
    }
    return out;
}

inline json mscot_to_json(const MSCoTScores& s) {
    return {{"s_rgb_l", s.s_rgb_l}, {"s_t_l", s.s_t_l},       {"s_f_l", s.s_f_l},
            {"c_rgb_l", s.c_rgb_l}, {"c_t_l", s.c_t_l},       {"c_f_l", s.c_f_l},
            {"rationale", s.rationale}, {"pair_index", s.pair_index}};
}

inline MSCoTScores mscot_from_json(const json& j) {
    MSCoTScores s;
    s.s_rgb_l = j.value("s_rgb_l", 0.0);
    s.s_t_l = j.value("s_t_l", 0.0);
    s.s_f_l = j.value("s_f_l", 0.0);
    s.c_rgb_l = j.value("c_rgb_l", "");
    s.c_t_l = j.value("c_t_l", "");
    s.c_f_l = j.value("c_f_l", "");
    s.rationale = j.value("rationale", "");
    s.pair_index = j.value("pair_index", -1);
    return s;
}

inline void save_mscot_scores(
    const std::string& path,
    const std::vector<std::pair<std::string, std::vector<std::optional<MSCoTScores>>>>& by_image) {
    json images = json::array();
    for (const auto& [image_id, scores] : by_image) {
        json entries = json::array();
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i].has_value())
                entries.push_back(mscot_to_json(*scores[i]));
            else
                entries.push_back({{"pair_index", static_cast<int>(i)}, {"absent", true}});
        }
        images.push_back({{"image_id", image_id}, {"entries", entries}});
    }
    detail::save_json_file(path, json{{"schema_version", kSchemaVersion}, {"images", images}});
}

inline std::vector<std::pair<std::string, std::vector<std::optional<MSCoTScores>>>>
load_mscot_scores(const std::string& path) {
    const json j = detail::load_json_file(path);
    if (j.value("schema_version", "") != kSchemaVersion)
        throw SchemaError(path + ": unsupported schema_version");
    std::vector<std::pair<std::string, std::vector<std::optional<MSCoTScores>>>> out;
    for (const auto& im : j.value("images", json::array())) {
        std::vector<std::optional<MSCoTScores>> scores;
        for (const auto& e : im.value("entries", json::array())) {
            if (e.value("absent", false))
                scores.push_back(std::nullopt);
            else
                scores.push_back(mscot_from_json(e));
        }
        out.emplace_back(im.value("image_id", ""), std::move(scores));
    }
    return out;
}

// ---- fused detections ----

inline json fused_to_json(const FusedDetection& d) {
    return {{"image_id", d.image_id},
            {"score", d.score},
            {"box", detail::box_to_json(d.box)},
            {"trace",
             {{"s_f_v", d.trace.s_f_v},
              {"b_f_v", detail::box_to_json(d.trace.b_f_v)},
              {"s_f_l", d.trace.s_f_l},
              {"b_f_l", detail::box_to_json(d.trace.b_f_l)},
              {"s_rgb_l", d.trace.s_rgb_l},
              {"s_t_l", d.trace.s_t_l},
              {"pair_provenance", to_string(d.trace.pair_provenance)},
              {"language_fallback", d.trace.language_fallback},
              {"degenerate_language_weights", d.trace.degenerate_language_weights},
              {"degenerate_vl_weights", d.trace.degenerate_vl_weights}}}};
}

inline FusedDetection fused_from_json(const json& j, const std::string& where) {
    FusedDetection d;
    d.image_id = j.value("image_id", "");
    d.score = j.value("score", 0.0);
    d.box = detail::box_from_json(j.value("box", json()), where);
    if (j.contains("trace")) {
        const auto& t = j.at("trace");
        d.trace.s_f_v = t.value("s_f_v", 0.0);
        d.trace.b_f_v = detail::box_from_json(t.value("b_f_v", json::array({0, 0, 1, 1})), where);
        d.trace.s_f_l = t.value("s_f_l", 0.0);
        d.trace.b_f_l = detail::box_from_json(t.value("b_f_l", json::array({0, 0, 1, 1})), where);
        d.trace.s_rgb_l = t.value("s_rgb_l", 0.0);
        d.trace.s_t_l = t.value("s_t_l", 0.0);
        d.trace.language_fallback = t.value("language_fallback", false);
        d.trace.degenerate_language_weights = t.value("degenerate_language_weights", false);
        d.trace.degenerate_vl_weights = t.value("degenerate_vl_weights", false);
    }
    return d;
}

inline void save_fused(const std::string& path, const std::vector<FusedDetection>& dets) {
    json arr = json::array();
    for (const auto& d : dets) arr.push_back(fused_to_json(d));
    detail::save_json_file(path, json{{"schema_version", kSchemaVersion}, {"entries", arr}});
}

inline std::vector<FusedDetection> load_fused(const std::string& path) {
    const json j = detail::load_json_file(path);
    if (j.value("schema_version", "") != kSchemaVersion)
        throw SchemaError(path + ": unsupported schema_version");
    std::vector<FusedDetection> out;
    std::size_t idx = 0;
    for (const auto& e : j.value("entries", json::array()))
        out.push_back(fused_from_json(e, path + ": entry " + std::to_string(idx++)));
    return out;
}

// ---- ground truth ----

struct GroundTruthFile {
    std::vector<GroundTruthBox> entries;
    std::vector<EvalImage> images;
};

inline GroundTruthFile load_ground_truth(const std::string& path) {
    const json j = detail::load_json_file(path);
    if (j.value("schema_version", "") != kSchemaVersion)
        throw SchemaError(path + ": unsupported schema_version");
    GroundTruthFile gt;
    std::size_t idx = 0;
    for (const auto& e : j.value("entries", json::array())) {
        const std::string where = path + ": entry " + std::to_string(idx++);
        GroundTruthBox g;
        g.image_id = e.value("image_id", "");
        if (g.image_id.empty()) throw SchemaError(where + ": missing image_id");
        g.box = detail::box_from_json(e.value("box", json()), where);
        if (!g.box.valid()) throw SchemaError(where + ": invalid box");
        g.condition = detail::condition_from_string(e.value("condition", "unknown"), where);
        g.ignore = e.value("ignore", false);
        gt.entries.push_back(std::move(g));
    }
    for (const auto& im : j.value("image_manifest", json::array())) {
        EvalImage e;
        e.image_id = im.value("image_id", "");
        if (e.image_id.empty()) throw SchemaError(path + ": manifest entry missing image_id");
        e.condition = detail::condition_from_string(im.value("condition", "unknown"), path);
        gt.images.push_back(std::move(e));
    }
    return gt;
}

inline void save_ground_truth(const std::string& path, const GroundTruthFile& gt) {
    json entries = json::array();
    for (const auto& g : gt.entries)
        entries.push_back({{"image_id", g.image_id},
                           {"box", detail::box_to_json(g.box)},
                           {"condition", to_string(g.condition)},
                           {"ignore", g.ignore}});
    json manifest = json::array();
    for (const auto& im : gt.images)
        manifest.push_back({{"image_id", im.image_id}, {"condition", to_string(im.condition)}});
    detail::save_json_file(path, json{{"schema_version", kSchemaVersion},
                                      {"entries", entries},
                                      {"image_manifest", manifest}});
}

// ---- eval report ----

inline json eval_report_to_json(const EvalReport& r, bool include_curve = true) {
    json j = {{"ap_all", r.ap_all},
              {"mr_all", r.mr_all},
              {"counts",
               {{"all", {{"tp", r.counts_all.tp}, {"fp", r.counts_all.fp}, {"fn", r.counts_all.fn}}}}}};
    if (r.mr_day) j["mr_day"] = *r.mr_day;
    if (r.mr_night) j["mr_night"] = *r.mr_night;
    if (r.counts_day)
        j["counts"]["day"] = {{"tp", r.counts_day->tp}, {"fp", r.counts_day->fp}, {"fn", r.counts_day->fn}};
    if (r.counts_night)
        j["counts"]["night"] = {{"tp", r.counts_night->tp}, {"fp", r.counts_night->fp}, {"fn", r.counts_night->fn}};
    if (include_curve) {
        json curve = json::array();
        for (const auto& p : r.curve)
            curve.push_back({{"threshold", p.threshold},
                             {"precision", p.precision},
                             {"recall", p.recall},
                             {"fppi", p.fppi},
                             {"miss_rate", p.miss_rate}});
        j["curve"] = curve;
    }
    return j;
}

// ---- config ----

struct PipelineConfig {
    PairingConfig pairing;
    FusionConfig fusion;
    PromptTemplates prompts;
    std::string client_endpoint;  // MSFUSE_ENDPOINT overrides when set
    std::string client_model = "gpt-4o-mini";
    std::string response_text_path = "choices/0/message/content";
    bool post_nms = false;
    double post_nms_iou = 0.5;
};

namespace detail {

inline ScoreFusionStrategy score_strategy_from_string(const std::string& s, const std::string& where) {
    if (s == "avg") return ScoreFusionStrategy::Avg;
    if (s == "max") return ScoreFusionStrategy::Max;
    throw SchemaError(where + ": unknown score strategy '" + s + "'");
}

inline BoxFusionStrategy box_strategy_from_string(const std::string& s, const std::string& where) {
    if (s == "s-avg") return BoxFusionStrategy::SAvg;
    if (s == "argmax") return BoxFusionStrategy::Argmax;
    throw SchemaError(where + ": unknown box strategy '" + s + "'");
}

}  // namespace detail

inline json fusion_config_to_json(const FusionConfig& f) {
    return {{"score_v", to_string(f.score_v)},
            {"score_vl", to_string(f.score_vl)},
            {"box_v", to_string(f.box_v)},
            {"box_l", to_string(f.box_l)},
            {"box_vl", to_string(f.box_vl)}};
}

inline FusionConfig fusion_config_from_json(const json& j, const std::string& where) {
    FusionConfig f;
    f.score_v = detail::score_strategy_from_string(j.value("score_v", "max"), where);
    f.score_vl = detail::score_strategy_from_string(j.value("score_vl", "avg"), where);
    f.box_v = detail::box_strategy_from_string(j.value("box_v", "s-avg"), where);
    f.box_l = detail::box_strategy_from_string(j.value("box_l", "s-avg"), where);
    f.box_vl = detail::box_strategy_from_string(j.value("box_vl", "s-avg"), where);
    return f;
}

inline PipelineConfig load_config(const std::string& path) {
    const json j = detail::load_json_file(path);
    PipelineConfig cfg;
    if (j.contains("pairing")) {
        cfg.pairing.tau = j.at("pairing").value("tau", 0.5);
        if (!(cfg.pairing.tau > 0.0 && cfg.pairing.tau < 1.0))
            throw SchemaError(path + ": pairing.tau must be in (0,1)");
    }
    if (j.contains("fusion")) cfg.fusion = fusion_config_from_json(j.at("fusion"), path);
    if (j.contains("prompts")) {
        const auto& p = j.at("prompts");
        cfg.prompts.p_rgb = p.value("p_rgb", cfg.prompts.p_rgb);
        cfg.prompts.p_t = p.value("p_t", cfg.prompts.p_t);
        cfg.prompts.p_single = p.value("p_single", cfg.prompts.p_single);
        cfg.prompts.p_multi = p.value("p_multi", cfg.prompts.p_multi);
        cfg.prompts.p_repair = p.value("p_repair", cfg.prompts.p_repair);
    }
    if (j.contains("client")) {
        const auto& c = j.at("client");
        cfg.client_endpoint = c.value("endpoint", cfg.client_endpoint);
        cfg.client_model = c.value("model", cfg.client_model);
        cfg.response_text_path = c.value("response_text_path", cfg.response_text_path);
    }
    cfg.post_nms = j.value("post_nms", cfg.post_nms);
    cfg.post_nms_iou = j.value("post_nms_iou", cfg.post_nms_iou);
    return cfg;
}

inline json config_to_json(const PipelineConfig& cfg) {
    return {{"pairing", {{"tau", cfg.pairing.tau}}},
            {"fusion", fusion_config_to_json(cfg.fusion)},
            {"prompts",
             {{"p_rgb", cfg.prompts.p_rgb},
              {"p_t", cfg.prompts.p_t},
              {"p_single", cfg.prompts.p_single},
              {"p_multi", cfg.prompts.p_multi},
              {"p_repair", cfg.prompts.p_repair}}},
            {"client",
             {{"endpoint", cfg.client_endpoint},
              {"model", cfg.client_model},
              {"response_text_path", cfg.response_text_path}}},
            {"post_nms", cfg.post_nms},
            {"post_nms_iou", cfg.post_nms_iou}};
}

}  // namespace msfuse
