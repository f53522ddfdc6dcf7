#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "msfuse/geometry.hpp"
#include "msfuse/language.hpp"
#include "msfuse/pairing.hpp"

namespace msfuse {

enum class ScoreFusionStrategy { Avg, Max };
enum class BoxFusionStrategy { SAvg, Argmax };

inline const char* to_string(ScoreFusionStrategy s) {
    return s == ScoreFusionStrategy::Avg ? "avg" : "max";
}
inline const char* to_string(BoxFusionStrategy s) {
    return s == BoxFusionStrategy::SAvg ? "s-avg" : "argmax";
}

// Strategy matrix for the three fusion stages: vision-driven (V),
// language-driven (L), and vision-language (VL).
struct FusionConfig {
    ScoreFusionStrategy score_v = ScoreFusionStrategy::Max;
    ScoreFusionStrategy score_vl = ScoreFusionStrategy::Avg;
    BoxFusionStrategy box_v = BoxFusionStrategy::SAvg;
    BoxFusionStrategy box_l = BoxFusionStrategy::SAvg;
    BoxFusionStrategy box_vl = BoxFusionStrategy::SAvg;
};

inline double score_fuse(double s1, double s2, ScoreFusionStrategy strategy) {
    if (!(s1 >= 0.0 && s1 <= 1.0 && s2 >= 0.0 && s2 <= 1.0))
        throw std::invalid_argument("score_fuse: scores must be in [0,1]");
    return strategy == ScoreFusionStrategy::Avg ? (s1 + s2) / 2.0 : std::max(s1, s2);
}

// Score-weighted coordinate-wise average (SAvg) or higher-score selection
// (Argmax, ties to b1). Both weights zero degenerates to the unweighted
// midpoint (SAvg) or b1 (Argmax).
inline Box box_fuse(const Box& b1, double s1, const Box& b2, double s2,
                    BoxFusionStrategy strategy, bool* degenerate = nullptr) {
    require_valid_box(b1, "box_fuse");
    require_valid_box(b2, "box_fuse");
    if (!(s1 >= 0.0 && s1 <= 1.0 && s2 >= 0.0 && s2 <= 1.0))
        throw std::invalid_argument("box_fuse: scores must be in [0,1]");
    if (degenerate) *degenerate = false;
    if (strategy == BoxFusionStrategy::Argmax) {
        return s2 > s1 ? b2 : b1;
    }
    double w1 = s1, w2 = s2;
    if (w1 + w2 == 0.0) {
        if (degenerate) *degenerate = true;
        w1 = w2 = 0.5;
    }
    const double denom = w1 + w2;
    return Box{(b1.x1 * w1 + b2.x1 * w2) / denom, (b1.y1 * w1 + b2.y1 * w2) / denom,
               (b1.x2 * w1 + b2.x2 * w2) / denom, (b1.y2 * w1 + b2.y2 * w2) / denom};
}

struct FusionTrace {
    double s_f_v = 0.0;
    Box b_f_v;
    double s_f_l = 0.0;
    Box b_f_l;
    double s_rgb_l = 0.0;
    double s_t_l = 0.0;
    PairProvenance pair_provenance = PairProvenance::Matched;
    bool language_fallback = false;       // MSCoT absent; vision-only result
    bool degenerate_language_weights = false;  // both language weights zero
    bool degenerate_vl_weights = false;        // both branch scores zero
};

struct FusedDetection {
    double score = 0.0;  // S_LMF
    Box box;             // B_LMF
    FusionTrace trace;
    std::string image_id;
};

// Vision branch: fuse the paired per-modality scores and boxes.
inline std::pair<double, Box> vision_driven(const PairedDetection& pair,
                                            const FusionConfig& cfg = {}) {
    const double s = score_fuse(pair.rgb.score, pair.thermal.score, cfg.score_v);
    const Box b =
        box_fuse(pair.rgb.box, pair.rgb.score, pair.thermal.box, pair.thermal.score, cfg.box_v);
    return {s, b};
}

// Language branch: vision-branch boxes weighted by language scores. The fused
// language score itself comes from MSCoT.
inline std::pair<double, Box> language_driven(const PairedDetection& pair,
                                              const MSCoTScores& lang,
                                              const FusionConfig& cfg = {},
                                              bool* degenerate = nullptr) {
    const Box b = box_fuse(pair.rgb.box, lang.s_rgb_l, pair.thermal.box, lang.s_t_l, cfg.box_l,
                           degenerate);
    return {lang.s_f_l, b};
}

// Final vision-language fusion; with the language result absent the pair
// downgrades to vision-only, flagged in the trace.
inline FusedDetection vl_fuse(const PairedDetection& pair,
                              const std::optional<MSCoTScores>& lang,
                              const FusionConfig& cfg = {}) {
    FusedDetection fused;
    fused.image_id = pair.rgb.image_id;
    fused.trace.pair_provenance = pair.provenance;

    const auto [s_f_v, b_f_v] = vision_driven(pair, cfg);
    fused.trace.s_f_v = s_f_v;
    fused.trace.b_f_v = b_f_v;

    if (!lang.has_value()) {
        fused.trace.language_fallback = true;
        fused.trace.b_f_l = b_f_v;
        fused.score = s_f_v;
        fused.box = b_f_v;
        return fused;
    }

    const auto [s_f_l, b_f_l] =
        language_driven(pair, *lang, cfg, &fused.trace.degenerate_language_weights);
    fused.trace.s_f_l = s_f_l;
    fused.trace.b_f_l = b_f_l;
    fused.trace.s_rgb_l = lang->s_rgb_l;
    fused.trace.s_t_l = lang->s_t_l;

    fused.score = score_fuse(s_f_v, s_f_l, cfg.score_vl);
    fused.box = box_fuse(b_f_v, s_f_v, b_f_l, s_f_l, cfg.box_vl, &fused.trace.degenerate_vl_weights);
    return fused;
}

// Per-pair fusion over one image; lang[i] aligns with pairs[i].
inline std::vector<FusedDetection> fuse_image(const std::vector<PairedDetection>& pairs,
                                              const std::vector<std::optional<MSCoTScores>>& lang,
                                              const FusionConfig& cfg = {}) {
    if (pairs.size() != lang.size())
        throw std::invalid_argument("fuse_image: pairs and language lists misaligned");
    std::vector<FusedDetection> out;
    out.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i)
        out.push_back(vl_fuse(pairs[i], lang[i], cfg));
    return out;
}

// Optional post-fusion greedy NMS, for evaluation hygiene on duplicate pairs.
inline std::vector<FusedDetection> post_fusion_nms(std::vector<FusedDetection> dets,
                                                   double iou_thr = 0.5) {
    std::stable_sort(dets.begin(), dets.end(),
                     [](const FusedDetection& a, const FusedDetection& b) {
                         return a.score > b.score;
                     });
    std::vector<FusedDetection> kept;
    for (auto& d : dets) {
        bool suppressed = false;
        for (const auto& k : kept) {
            if (k.image_id == d.image_id && iou(k.box, d.box) > iou_thr) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(std::move(d));
    }
    return kept;
}

}  // namespace msfuse
