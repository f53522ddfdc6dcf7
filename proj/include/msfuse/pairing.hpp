#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "msfuse/geometry.hpp"

namespace msfuse {

enum class PairProvenance { Matched, OverrideFromRGB, OverrideFromThermal };

inline const char* to_string(PairProvenance p) {
    switch (p) {
        case PairProvenance::Matched: return "matched";
        case PairProvenance::OverrideFromRGB: return "override_from_rgb";
        default: return "override_from_thermal";
    }
}

// Aligned cross-modality detection tuple. For overrides the opposite slot is a
// verbatim copy of the source detection (box and score identical).
struct PairedDetection {
    Detection rgb;
    Detection thermal;
    PairProvenance provenance = PairProvenance::Matched;
};

struct PairingConfig {
    double tau = 0.5;  // IoU threshold, strict (0,1)
};

namespace detail {

struct PairCandidate {
    const Detection* det;
    Modality modality;
    std::size_t ingest_index;  // index within its source list
    bool consumed = false;
};

}  // namespace detail

// Greedy score-ordered cross-modality pairing. Repeatedly take the unconsumed
// detection with the highest score, find the unconsumed opposite-modality box of
// highest IoU above tau, else self-pair. Output follows consumption order.
//
// Tie-breaks: equal top scores prefer RGB, then lower ingest index; equal IoUs
// prefer lower ingest index.
inline std::vector<PairedDetection> dpair(const std::vector<Detection>& dets_rgb,
                                          const std::vector<Detection>& dets_t,
                                          const PairingConfig& cfg = {}) {
    if (!(cfg.tau > 0.0 && cfg.tau < 1.0))
        throw std::invalid_argument("dpair: tau must be in (0,1)");

    const std::string* image_id = nullptr;
    auto check = [&](const std::vector<Detection>& dets, Modality expected) {
        for (const auto& d : dets) {
            require_valid_detection(d, "dpair");
            if (d.modality != expected)
                throw std::invalid_argument("dpair: detection with wrong modality in list");
            if (image_id == nullptr)
                image_id = &d.image_id;
            else if (d.image_id != *image_id)
                throw std::invalid_argument("dpair: mixed image ids");
        }
    };
    check(dets_rgb, Modality::RGB);
    check(dets_t, Modality::Thermal);

    std::vector<detail::PairCandidate> pool;
    pool.reserve(dets_rgb.size() + dets_t.size());
    for (std::size_t i = 0; i < dets_rgb.size(); ++i)
        pool.push_back({&dets_rgb[i], Modality::RGB, i});
    for (std::size_t i = 0; i < dets_t.size(); ++i)
        pool.push_back({&dets_t[i], Modality::Thermal, i});

    std::vector<PairedDetection> out;
    std::size_t remaining = pool.size();
    while (remaining > 0) {
        // Highest score; RGB wins ties, then lower ingest index. The pool is
        // ordered RGB-first by ingest order, so the first strict max suffices.
        detail::PairCandidate* best = nullptr;
        for (auto& c : pool) {
            if (c.consumed) continue;
            if (best == nullptr || c.det->score > best->det->score) best = &c;
        }

        // Best-IoU unconsumed opposite-modality partner with iou > tau.
        detail::PairCandidate* partner = nullptr;
        double partner_iou = 0.0;
        for (auto& c : pool) {
            if (c.consumed || c.modality == best->modality) continue;
            const double v = iou(best->det->box, c.det->box);
            if (v > cfg.tau && (partner == nullptr || v > partner_iou)) {
                partner = &c;
                partner_iou = v;
            }
        }

        PairedDetection pair;
        if (partner != nullptr) {
            pair.provenance = PairProvenance::Matched;
            const auto& rgb = best->modality == Modality::RGB ? *best->det : *partner->det;
            const auto& th = best->modality == Modality::RGB ? *partner->det : *best->det;
            pair.rgb = rgb;
            pair.thermal = th;
            partner->consumed = true;
            --remaining;
        } else {
            pair.rgb = *best->det;
            pair.thermal = *best->det;
            pair.provenance = best->modality == Modality::RGB
                                  ? PairProvenance::OverrideFromRGB
                                  : PairProvenance::OverrideFromThermal;
        }
        best->consumed = true;
        --remaining;
        out.push_back(std::move(pair));
    }
    return out;
}

}  // namespace msfuse
