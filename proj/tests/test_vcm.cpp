#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "msfuse/vcm.hpp"
#include "test_support.hpp"

using namespace msfuse;

namespace {

bool is_green(const ImageBuffer& img, int x, int y) {
    const auto* p = img.at(x, y);
    return p[0] == 0 && p[1] == 255 && p[2] == 0;
}

}  // namespace

TEST_CASE("crop_and_mark worked example: centered box in 100x100") {
    const ImageBuffer src(100, 100, 50);
    const auto crop = crop_and_mark(src, Box{40, 40, 60, 60});

    REQUIRE(crop.crop_region == Box{30, 30, 70, 70});
    REQUIRE(crop.image.width == 40);
    REQUIRE(crop.image.height == 40);

    // Source pixel (40,40) is a marker pixel -> crop pixel (10,10).
    REQUIRE(is_green(crop.image, 10, 10));
    // Perimeter rows/cols: y=40 and y=59, x=40 and x=59 in source coords.
    REQUIRE(is_green(crop.image, 29, 10));  // (59,40)
    REQUIRE(is_green(crop.image, 10, 29));  // (40,59)
    REQUIRE(is_green(crop.image, 29, 29));  // (59,59)
    // Just inside and just outside the perimeter are untouched.
    REQUIRE_FALSE(is_green(crop.image, 11, 11));
    REQUIRE_FALSE(is_green(crop.image, 9, 9));
    REQUIRE_FALSE(is_green(crop.image, 30, 10));  // (60,40) is outside the box
}

TEST_CASE("marker pixels are exact and everything else is byte-identical") {
    std::mt19937_64 rng(211);
    std::uniform_int_distribution<int> pos(0, 50);
    std::uniform_int_distribution<int> side(2, 20);
    for (int trial = 0; trial < 100; ++trial) {
        const ImageBuffer src = testsupport::synthetic_image(64, 64, 30, trial);
        const int x1 = pos(rng), y1 = pos(rng);
        const Box box{static_cast<double>(x1), static_cast<double>(y1),
                      static_cast<double>(x1 + side(rng)), static_cast<double>(y1 + side(rng))};
        const auto crop = crop_and_mark(src, box);

        const int bx1 = static_cast<int>(box.x1), by1 = static_cast<int>(box.y1);
        const int bx2 = static_cast<int>(box.x2), by2 = static_cast<int>(box.y2);
        const int rx1 = static_cast<int>(crop.crop_region.x1);
        const int ry1 = static_cast<int>(crop.crop_region.y1);

        // Expected dims: clamped 2w x 2h.
        const double cx = (box.x1 + box.x2) / 2.0, cy = (box.y1 + box.y2) / 2.0;
        const int exp_w = std::min<int>(64, static_cast<int>(std::floor(cx + box.width() + 0.5))) -
                          std::max<int>(0, static_cast<int>(std::floor(cx - box.width() + 0.5)));
        const int exp_h = std::min<int>(64, static_cast<int>(std::floor(cy + box.height() + 0.5))) -
                          std::max<int>(0, static_cast<int>(std::floor(cy - box.height() + 0.5)));
        REQUIRE(crop.image.width == exp_w);
        REQUIRE(crop.image.height == exp_h);

        for (int y = 0; y < crop.image.height; ++y) {
            for (int x = 0; x < crop.image.width; ++x) {
                const int sx = rx1 + x, sy = ry1 + y;
                const bool on_perimeter =
                    (sx >= bx1 && sx < bx2 && (sy == by1 || sy == by2 - 1)) ||
                    (sy >= by1 && sy < by2 && (sx == bx1 || sx == bx2 - 1));
                if (on_perimeter) {
                    REQUIRE(is_green(crop.image, x, y));
                } else {
                    const auto* got = crop.image.at(x, y);
                    const auto* want = src.at(sx, sy);
                    REQUIRE(got[0] == want[0]);
                    REQUIRE(got[1] == want[1]);
                    REQUIRE(got[2] == want[2]);
                }
            }
        }
    }
}

TEST_CASE("fractional coordinates round half-up") {
    const ImageBuffer src(100, 100, 10);
    // box [10.5, 10.4, 20.5, 20.6] -> pixel corners (11,10)-(21,21)
    const auto crop = crop_and_mark(src, Box{10.5, 10.4, 20.5, 20.6});
    const int rx1 = static_cast<int>(crop.crop_region.x1);
    const int ry1 = static_cast<int>(crop.crop_region.y1);
    REQUIRE(is_green(crop.image, 11 - rx1, 10 - ry1));
    REQUIRE(is_green(crop.image, 20 - rx1, 20 - ry1));
    REQUIRE_FALSE(is_green(crop.image, 21 - rx1, 21 - ry1));
}

TEST_CASE("crop region clamps at image borders without padding") {
    const ImageBuffer src(50, 50, 0);
    const auto crop = crop_and_mark(src, Box{0, 0, 10, 10});
    // Unclamped region would be [-5,-5,15,15]; clamped to [0,0,15,15].
    REQUIRE(crop.crop_region == Box{0, 0, 15, 15});
    REQUIRE(crop.image.width == 15);
    REQUIRE(crop.image.height == 15);

    const auto far_crop = crop_and_mark(src, Box{44, 44, 49, 49});
    REQUIRE(far_crop.crop_region.x2 == 50);
    REQUIRE(far_crop.crop_region.y2 == 50);
}

TEST_CASE("source image is never mutated") {
    const ImageBuffer src = testsupport::synthetic_image(40, 40, 20, 3);
    const ImageBuffer copy = src;
    (void)crop_and_mark(src, Box{5, 5, 15, 15});
    REQUIRE(src == copy);
}

TEST_CASE("boxes fully outside the image are rejected") {
    const ImageBuffer src(50, 50, 0);
    REQUIRE_THROWS_AS(crop_and_mark(src, Box{60, 60, 70, 70}), std::invalid_argument);
    REQUIRE_THROWS_AS(crop_and_mark(src, Box{-20, -20, -5, -5}), std::invalid_argument);
    REQUIRE_THROWS_AS(crop_and_mark(src, Box{10, 10, 10, 20}), std::invalid_argument);
}

TEST_CASE("vcm_batch indexes crops by pair and reports the failing pair") {
    const ImageBuffer src(50, 50, 0);
    PairedDetection good;
    good.rgb.box = good.thermal.box = Box{5, 5, 15, 15};
    PairedDetection bad;
    bad.rgb.box = bad.thermal.box = Box{200, 200, 210, 210};

    const auto crops = vcm_batch(src, {good, good}, Modality::RGB);
    REQUIRE(crops.size() == 2);
    REQUIRE(crops[0].pair_index == 0);
    REQUIRE(crops[1].pair_index == 1);

    try {
        vcm_batch(src, {good, bad}, Modality::RGB);
        FAIL("expected exception");
    } catch (const std::invalid_argument& e) {
        REQUIRE(std::string(e.what()).find("pair 1") != std::string::npos);
    }
}
