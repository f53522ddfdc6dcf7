#pragma once

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <memory>
#include <regex>
#include <string>
#include <utility>
#include <vector>

#include "msfuse/chat_client.hpp"
#include "msfuse/geometry.hpp"
#include "msfuse/image.hpp"
#include "msfuse/pairing.hpp"
#include "msfuse/parallel.hpp"
#include "msfuse/png_io.hpp"
#include "msfuse/prompts.hpp"
#include "msfuse/vcm.hpp"

namespace msfuse {

struct Description {
    std::string text;
    Modality modality = Modality::RGB;
    int pair_index = 0;
    std::string image_id;
};

// Output of the two-step prompting chain. A non-"person" class label forces
// the corresponding score slot to exactly zero.
struct MSCoTScores {
    double s_rgb_l = 0.0;
    double s_t_l = 0.0;
    double s_f_l = 0.0;
    std::string c_rgb_l;
    std::string c_t_l;
    std::string c_f_l;
    std::string rationale;
    int pair_index = 0;
};

struct PredictionRecord {
    std::string class_label;
    double score = 0.0;
};

namespace detail {

inline std::string trim_lower(std::string s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    const auto end = s.find_last_not_of(" \t\r\n");
    s = begin == std::string::npos ? "" : s.substr(begin, end - begin + 1);
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline std::string format_score(double s) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", s);
    return buf;
}

}  // namespace detail

// Extracts every "[<label>, <number>]" record, in order. Labels are lowercased
// and trimmed; scores are clamped to [0,1].
inline std::vector<PredictionRecord> parse_prediction(const std::string& text) {
    static const std::regex record_re(
        R"(\[\s*([^\[\]]+?)\s*,\s*([+-]?(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)\s*\])");
    std::vector<PredictionRecord> records;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), record_re);
         it != std::sregex_iterator(); ++it) {
        PredictionRecord rec;
        rec.class_label = detail::trim_lower((*it)[1].str());
        rec.score = std::clamp(std::stod((*it)[2].str()), 0.0, 1.0);
        records.push_back(std::move(rec));
    }
    if (records.empty())
        throw ParseError("parse_prediction: no [class, prediction score] record found", text);
    return records;
}

namespace detail {

// Completes with one repair pass: a malformed or too-short reply triggers a
// single re-ask with the format reminder before the parse error surfaces.
inline std::vector<PredictionRecord> complete_and_parse(ChatClient& client,
                                                        const RetryPolicy& retry,
                                                        const std::string& context,
                                                        const std::string& prompt,
                                                        const std::string& repair_prompt,
                                                        std::size_t min_records,
                                                        std::string* raw_out) {
    auto attempt = [&](const std::string& p) {
        const std::string reply = with_retries(retry, [&] { return client.complete(context, p); });
        if (raw_out) *raw_out = reply;
        auto records = parse_prediction(reply);
        if (records.size() < min_records)
            throw ParseError("complete_and_parse: expected at least " +
                                 std::to_string(min_records) + " records, got " +
                                 std::to_string(records.size()),
                             reply);
        return records;
    };
    try {
        return attempt(prompt);
    } catch (const ParseError&) {
        return attempt(prompt + "\n" + repair_prompt);
    }
}

}  // namespace detail

// Two-step chain: single-modal scores from [d_rgb d_t], then a fused score
// given the single-modal answers as added context. Non-"person" slots are
// zeroed; the step-2 raw reply is kept as the rationale.
inline MSCoTScores mscot(const Description& d_rgb, const Description& d_t,
                         const PromptTemplates& templates, ChatClient& client,
                         const RetryPolicy& retry = {}) {
    if (d_rgb.pair_index != d_t.pair_index)
        throw std::invalid_argument("mscot: descriptions from different pairs");

    const std::string context1 = "RGB image description: " + d_rgb.text +
                                 "\nThermal image description: " + d_t.text;
    const auto single = detail::complete_and_parse(client, retry, context1, templates.p_single,
                                                   templates.p_repair, 2, nullptr);

    MSCoTScores scores;
    scores.pair_index = d_rgb.pair_index;
    scores.c_rgb_l = single[0].class_label;
    scores.s_rgb_l = scores.c_rgb_l == "person" ? single[0].score : 0.0;
    scores.c_t_l = single[1].class_label;
    scores.s_t_l = scores.c_t_l == "person" ? single[1].score : 0.0;

    const std::string context2 = context1 + "\nAnswers: " + detail::format_score(scores.s_rgb_l) +
                                 ", and " + detail::format_score(scores.s_t_l);
    const auto fused = detail::complete_and_parse(client, retry, context2, templates.p_multi,
                                                  templates.p_repair, 1, &scores.rationale);
    scores.c_f_l = fused[0].class_label;
    scores.s_f_l = scores.c_f_l == "person" ? fused[0].score : 0.0;
    return scores;
}

struct CpdgResult {
    std::vector<Description> rgb;
    std::vector<Description> thermal;
    std::vector<PairedDetection> pairs;
};

// Pair, crop-and-mark both modality sides, and describe each crop; one
// describe call per crop, indexed by pair.
inline CpdgResult cpdg(const ImageBuffer& image_rgb, const ImageBuffer& image_t,
                       const std::vector<Detection>& dets_rgb,
                       const std::vector<Detection>& dets_t,
                       const PromptTemplates& templates, ChatClient& client,
                       const PairingConfig& cfg = {}, const RetryPolicy& retry = {},
                       int max_inflight = 1) {
    CpdgResult result;
    result.pairs = dpair(dets_rgb, dets_t, cfg);
    if (result.pairs.empty()) return result;
    const std::string& image_id =
        dets_rgb.empty() ? dets_t.front().image_id : dets_rgb.front().image_id;

    const auto crops_rgb = vcm_batch(image_rgb, result.pairs, Modality::RGB);
    const auto crops_t = vcm_batch(image_t, result.pairs, Modality::Thermal);

    auto describe_side = [&](const std::vector<MarkedCrop>& crops, Modality side,
                             const std::string& prompt) {
        return parallel_map_ordered<Description>(crops.size(), max_inflight, [&](std::size_t i) {
            const auto png = encode_png(crops[i].image);
            std::string text;
            try {
                text = with_retries(retry, [&] { return client.describe_image(png, prompt); });
            } catch (const TransportError& e) {
                throw TransportError("cpdg: pair " + std::to_string(i) + " (" + to_string(side) +
                                     "): " + e.what());
            }
            return Description{text, side, static_cast<int>(i), image_id};
        });
    };
    result.rgb = describe_side(crops_rgb, Modality::RGB, templates.p_rgb);
    result.thermal = describe_side(crops_t, Modality::Thermal, templates.p_t);
    return result;
}

}  // namespace msfuse
