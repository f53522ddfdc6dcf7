#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace msfuse {

// Row-major 8-bit RGB image.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // width*height*3, interleaved r,g,b

    ImageBuffer() = default;
    ImageBuffer(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {
        if (w < 1 || h < 1) throw std::invalid_argument("ImageBuffer: non-positive size");
    }

    std::uint8_t* at(int x, int y) {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    const std::uint8_t* at(int x, int y) const {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }

    void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        auto* p = at(x, y);
        p[0] = r;
        p[1] = g;
        p[2] = b;
    }

    bool operator==(const ImageBuffer& o) const {
        return width == o.width && height == o.height && pixels == o.pixels;
    }
};

}  // namespace msfuse
