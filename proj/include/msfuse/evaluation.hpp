#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "msfuse/fusion.hpp"
#include "msfuse/geometry.hpp"

namespace msfuse {

enum class Condition { Day, Night, Unknown };

inline const char* to_string(Condition c) {
    switch (c) {
        case Condition::Day: return "day";
        case Condition::Night: return "night";
        default: return "unknown";
    }
}

struct GroundTruthBox {
    Box box;
    std::string image_id;
    Condition condition = Condition::Unknown;
    bool ignore = false;
};

struct EvalImage {
    std::string image_id;
    Condition condition = Condition::Unknown;
};

enum class MatchLabel { TP, FP, Ignored };

// Per-detection labels for one image, in descending score order.
struct MatchResult {
    std::vector<std::size_t> order;     // indices into the input list, score-sorted
    std::vector<MatchLabel> labels;     // aligned with order
    int unmatched_gt = 0;               // non-ignore GTs left unmatched (FNs)
    int total_gt = 0;                   // non-ignore GTs
};

// Greedy one-to-one matching within one image: each detection in score order
// takes the highest-IoU unmatched non-ignore GT with IoU >= iou_thr (TP), else
// falls into an ignore region (absorbed) or counts as FP.
inline MatchResult match_detections(const std::vector<FusedDetection>& dets,
                                    const std::vector<GroundTruthBox>& gts,
                                    double iou_thr = 0.5) {
    if (!(iou_thr > 0.0 && iou_thr < 1.0))
        throw std::invalid_argument("match_detections: iou_thr must be in (0,1)");
    const std::string* image_id = nullptr;
    auto check_id = [&](const std::string& id) {
        if (image_id == nullptr)
            image_id = &id;
        else if (id != *image_id)
            throw std::invalid_argument("match_detections: mixed image ids");
    };
    for (const auto& d : dets) check_id(d.image_id);
    for (const auto& g : gts) check_id(g.image_id);

    MatchResult result;
    result.order.resize(dets.size());
    std::iota(result.order.begin(), result.order.end(), std::size_t{0});
    std::stable_sort(result.order.begin(), result.order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

    std::vector<bool> gt_taken(gts.size(), false);
    result.labels.reserve(dets.size());
    for (const std::size_t di : result.order) {
        int best_gt = -1;
        double best_iou = 0.0;
        int best_ignore = -1;
        double best_ignore_iou = 0.0;
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (gt_taken[gi]) continue;
            const double v = iou(dets[di].box, gts[gi].box);
            if (v < iou_thr) continue;
            if (gts[gi].ignore) {
                if (v > best_ignore_iou || best_ignore < 0) {
                    best_ignore = static_cast<int>(gi);
                    best_ignore_iou = v;
                }
            } else if (v > best_iou || best_gt < 0) {
                best_gt = static_cast<int>(gi);
                best_iou = v;
            }
        }
        if (best_gt >= 0) {
            gt_taken[best_gt] = true;
            result.labels.push_back(MatchLabel::TP);
        } else if (best_ignore >= 0) {
            gt_taken[best_ignore] = true;
            result.labels.push_back(MatchLabel::Ignored);
        } else {
            result.labels.push_back(MatchLabel::FP);
        }
    }
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
        if (gts[gi].ignore) continue;
        ++result.total_gt;
        if (!gt_taken[gi]) ++result.unmatched_gt;
    }
    return result;
}

// (score, label) list over a whole detection set, globally score-sorted with
// ignored detections dropped from the ranking.
struct LabeledDetections {
    std::vector<std::pair<double, MatchLabel>> entries;  // descending score, TP/FP only
    int total_gt = 0;
    int tp = 0;
    int fp = 0;
};

inline LabeledDetections match_all(const std::vector<FusedDetection>& dets,
                                   const std::vector<GroundTruthBox>& gts,
                                   double iou_thr = 0.5) {
    std::map<std::string, std::vector<FusedDetection>> dets_by_image;
    std::map<std::string, std::vector<GroundTruthBox>> gts_by_image;
    for (const auto& d : dets) dets_by_image[d.image_id].push_back(d);
    for (const auto& g : gts) gts_by_image[g.image_id].push_back(g);

    LabeledDetections out;
    for (const auto& [id, gs] : gts_by_image)
        if (dets_by_image.find(id) == dets_by_image.end())
            for (const auto& g : gs)
                if (!g.ignore) ++out.total_gt;
    for (const auto& [id, ds] : dets_by_image) {
        const auto git = gts_by_image.find(id);
        static const std::vector<GroundTruthBox> no_gts;
        const auto res = match_detections(ds, git == gts_by_image.end() ? no_gts : git->second,
                                          iou_thr);
        out.total_gt += res.total_gt;
        for (std::size_t k = 0; k < res.order.size(); ++k) {
            if (res.labels[k] == MatchLabel::Ignored) continue;
            out.entries.emplace_back(ds[res.order[k]].score, res.labels[k]);
            if (res.labels[k] == MatchLabel::TP)
                ++out.tp;
            else
                ++out.fp;
        }
    }
    std::stable_sort(out.entries.begin(), out.entries.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    return out;
}

// All-point interpolated AP: area under the monotone precision envelope of the
// score-ranked precision-recall curve.
inline double average_precision(const LabeledDetections& labeled) {
    if (labeled.total_gt == 0) return labeled.entries.empty() ? 1.0 : 0.0;
    std::vector<double> precision, recall;
    int tp = 0, fp = 0;
    for (const auto& [score, label] : labeled.entries) {
        (void)score;
        if (label == MatchLabel::TP) ++tp; else ++fp;
        precision.push_back(static_cast<double>(tp) / (tp + fp));
        recall.push_back(static_cast<double>(tp) / labeled.total_gt);
    }
    // Monotone non-increasing envelope, swept from the right.
    for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
        precision[i] = std::max(precision[i], precision[i + 1]);
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < precision.size(); ++i) {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
    }
    return ap;
}

struct PRPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double fppi = 0.0;
    double miss_rate = 0.0;
};

inline std::vector<PRPoint> pr_curve(const LabeledDetections& labeled, int num_images) {
    std::vector<PRPoint> curve;
    int tp = 0, fp = 0;
    for (const auto& [score, label] : labeled.entries) {
        if (label == MatchLabel::TP) ++tp; else ++fp;
        PRPoint p;
        p.threshold = score;
        p.precision = static_cast<double>(tp) / (tp + fp);
        p.recall = labeled.total_gt > 0 ? static_cast<double>(tp) / labeled.total_gt : 1.0;
        p.fppi = static_cast<double>(fp) / num_images;
        p.miss_rate = 1.0 - p.recall;
        curve.push_back(p);
    }
    return curve;
}

// Caltech-style log-average miss rate: miss rate sampled at 9 FPPI reference
// points evenly log-spaced in [1e-2, 1e0], geometric mean with a 1e-10 floor.
// An all-zero sample set reports exactly 0.
inline double log_average_miss_rate(const LabeledDetections& labeled, int num_images) {
    if (num_images < 1)
        throw std::invalid_argument("log_average_miss_rate: num_images must be >= 1");
    if (labeled.total_gt == 0) return 0.0;
    const auto curve = pr_curve(labeled, num_images);
    double log_sum = 0.0;
    bool any_nonzero = false;
    for (int k = 0; k < 9; ++k) {
        const double ref = std::pow(10.0, -2.0 + 2.0 * k / 8.0);
        // Miss rate of the curve point with the highest FPPI not exceeding ref.
        double miss = 1.0;
        double best_fppi = -1.0;
        for (const auto& p : curve) {
            if (p.fppi <= ref && p.fppi >= best_fppi) {
                best_fppi = p.fppi;
                miss = p.miss_rate;
            }
        }
        if (miss > 0.0) any_nonzero = true;
        log_sum += std::log(std::max(miss, 1e-10));
    }
    if (!any_nonzero) return 0.0;
    return std::exp(log_sum / 9.0);
}

struct SliceCounts {
    int tp = 0;
    int fp = 0;
    int fn = 0;
};

struct EvalReport {
    double ap_all = 0.0;
    std::optional<double> mr_day;
    std::optional<double> mr_night;
    double mr_all = 1.0;
    SliceCounts counts_all;
    std::optional<SliceCounts> counts_day;
    std::optional<SliceCounts> counts_night;
    std::vector<PRPoint> curve;  // All slice
};

// AP on the whole set plus MR per Day/Night/All slice; detections inherit
// their image's condition. A slice with zero images is reported absent.
inline EvalReport evaluate(const std::vector<FusedDetection>& dets,
                           const std::vector<GroundTruthBox>& gts,
                           const std::vector<EvalImage>& images, double iou_thr = 0.5) {
    if (images.empty()) throw std::invalid_argument("evaluate: empty image set");
    std::map<std::string, Condition> condition_of;
    for (const auto& im : images) condition_of[im.image_id] = im.condition;
    auto require_known = [&](const std::string& id) {
        if (condition_of.find(id) == condition_of.end())
            throw std::invalid_argument("evaluate: image id not in image set: " + id);
    };
    for (const auto& d : dets) require_known(d.image_id);
    for (const auto& g : gts) require_known(g.image_id);

    EvalReport report;
    const auto all = match_all(dets, gts, iou_thr);
    report.ap_all = average_precision(all);
    report.mr_all = log_average_miss_rate(all, static_cast<int>(images.size()));
    report.counts_all = {all.tp, all.fp, all.total_gt - all.tp};
    report.curve = pr_curve(all, static_cast<int>(images.size()));

    auto slice = [&](Condition cond) -> std::pair<std::optional<double>, std::optional<SliceCounts>> {
        int n_images = 0;
        for (const auto& im : images)
            if (im.condition == cond) ++n_images;
        if (n_images == 0) return {std::nullopt, std::nullopt};
        std::vector<FusedDetection> sd;
        std::vector<GroundTruthBox> sg;
        for (const auto& d : dets)
            if (condition_of.at(d.image_id) == cond) sd.push_back(d);
        for (const auto& g : gts)
            if (condition_of.at(g.image_id) == cond) sg.push_back(g);
        const auto labeled = match_all(sd, sg, iou_thr);
        return {log_average_miss_rate(labeled, n_images),
                SliceCounts{labeled.tp, labeled.fp, labeled.total_gt - labeled.tp}};
    };
    std::tie(report.mr_day, report.counts_day) = slice(Condition::Day);
    std::tie(report.mr_night, report.counts_night) = slice(Condition::Night);
    return report;
}

}  // namespace msfuse
