#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "msfuse/geometry.hpp"
#include "msfuse/image.hpp"
#include "msfuse/pairing.hpp"

namespace msfuse {

struct MarkedCrop {
    ImageBuffer image;
    Box source_box;    // the detection box, source-image coordinates
    Box crop_region;   // clamped 2w x 2h region, source-image coordinates
    int pair_index = 0;
};

namespace detail {

// Rounds to nearest integer pixel, ties toward +inf.
inline int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }

inline void draw_green_perimeter(ImageBuffer& img, int bx1, int by1, int bx2, int by2) {
    auto paint = [&](int x, int y) {
        if (x >= 0 && x < img.width && y >= 0 && y < img.height)
            img.set(x, y, 0, 255, 0);
    };
    for (int x = bx1; x < bx2; ++x) {
        paint(x, by1);
        paint(x, by2 - 1);
    }
    for (int y = by1; y < by2; ++y) {
        paint(bx1, y);
        paint(bx2 - 1, y);
    }
}

}  // namespace detail

// Draws a 1-pixel (0,255,0) rectangle along the box perimeter in a copy of the
// source image, then crops a region centered on the box with twice its width
// and height, clamped to the image bounds. The source image is never mutated.
inline MarkedCrop crop_and_mark(const ImageBuffer& image, const Box& box) {
    require_valid_box(box, "crop_and_mark");
    if (box.x2 <= 0.0 || box.y2 <= 0.0 || box.x1 >= image.width || box.y1 >= image.height)
        throw std::invalid_argument("crop_and_mark: box fully outside image");

    const int bx1 = detail::round_half_up(box.x1);
    const int by1 = detail::round_half_up(box.y1);
    const int bx2 = detail::round_half_up(box.x2);
    const int by2 = detail::round_half_up(box.y2);

    const double w = box.width();
    const double h = box.height();
    const double cx = (box.x1 + box.x2) / 2.0;
    const double cy = (box.y1 + box.y2) / 2.0;

    const int rx1 = std::max(0, detail::round_half_up(cx - w));
    const int ry1 = std::max(0, detail::round_half_up(cy - h));
    const int rx2 = std::min(image.width, detail::round_half_up(cx + w));
    const int ry2 = std::min(image.height, detail::round_half_up(cy + h));
    if (rx2 <= rx1 || ry2 <= ry1)
        throw std::invalid_argument("crop_and_mark: empty crop region");

    // Marker is drawn in source coordinates before cropping, so partial
    // perimeters at crop edges stay consistent.
    ImageBuffer marked = image;
    detail::draw_green_perimeter(marked, bx1, by1, bx2, by2);

    MarkedCrop crop;
    crop.source_box = box;
    crop.crop_region = Box{static_cast<double>(rx1), static_cast<double>(ry1),
                           static_cast<double>(rx2), static_cast<double>(ry2)};
    crop.image = ImageBuffer(rx2 - rx1, ry2 - ry1);
    for (int y = ry1; y < ry2; ++y) {
        const auto* src = marked.at(rx1, y);
        auto* dst = crop.image.at(0, y - ry1);
        std::copy(src, src + static_cast<std::size_t>(rx2 - rx1) * 3, dst);
    }
    return crop;
}

// One crop per pair, using the box of the requested modality side; output
// index i corresponds to pair i.
inline std::vector<MarkedCrop> vcm_batch(const ImageBuffer& image,
                                         const std::vector<PairedDetection>& pairs,
                                         Modality side) {
    std::vector<MarkedCrop> crops;
    crops.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const Box& box = side == Modality::RGB ? pairs[i].rgb.box : pairs[i].thermal.box;
        try {
            MarkedCrop crop = crop_and_mark(image, box);
            crop.pair_index = static_cast<int>(i);
            crops.push_back(std::move(crop));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("vcm_batch: pair " + std::to_string(i) + ": " + e.what());
        }
    }
    return crops;
}

}  // namespace msfuse
