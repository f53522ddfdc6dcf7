#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "msfuse/geometry.hpp"
#include "test_support.hpp"

using namespace msfuse;

TEST_CASE("iou of identical boxes is 1") {
    const Box b{3, 4, 10, 12};
    REQUIRE(iou(b, b) == Catch::Approx(1.0));
}

TEST_CASE("iou of disjoint boxes is 0") {
    REQUIRE(iou(Box{0, 0, 5, 5}, Box{10, 10, 15, 15}) == 0.0);
    REQUIRE(iou(Box{0, 0, 5, 5}, Box{5, 0, 10, 5}) == 0.0);  // touching edges
}

TEST_CASE("iou half-overlap worked value") {
    // [0,0,10,10] vs [5,0,15,10]: inter 50, union 150.
    REQUIRE(iou(Box{0, 0, 10, 10}, Box{5, 0, 15, 10}) == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("iou is symmetric and bounded") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 500; ++i) {
        const Box a = testsupport::random_int_box(rng);
        const Box b = testsupport::random_int_box(rng);
        const double v = iou(a, b);
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
        REQUIRE(iou(b, a) == v);
    }
}

TEST_CASE("iou matches cell-count oracle on integer boxes") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 500; ++i) {
        const Box a = testsupport::random_int_box(rng, 20, 8);
        const Box b = testsupport::random_int_box(rng, 20, 8);
        REQUIRE(iou(a, b) == Catch::Approx(testsupport::iou_cell_oracle(a, b)).margin(1e-9));
    }
}

TEST_CASE("iou is translation invariant") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> shift(-50.0, 50.0);
    for (int i = 0; i < 200; ++i) {
        const Box a = testsupport::random_int_box(rng);
        const Box b = testsupport::random_int_box(rng);
        const double dx = shift(rng), dy = shift(rng);
        const Box at{a.x1 + dx, a.y1 + dy, a.x2 + dx, a.y2 + dy};
        const Box bt{b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy};
        REQUIRE(iou(at, bt) == Catch::Approx(iou(a, b)).margin(1e-12));
    }
}

TEST_CASE("iou rejects degenerate boxes") {
    REQUIRE_THROWS_AS(iou(Box{0, 0, 0, 5}, Box{0, 0, 5, 5}), std::invalid_argument);
    REQUIRE_THROWS_AS(iou(Box{0, 0, 5, 5}, Box{5, 5, 0, 0}), std::invalid_argument);
}

TEST_CASE("validate_detection reports each violation") {
    Detection d;
    d.box = Box{5, 5, 5, 3};
    d.score = 1.5;
    const auto v = validate_detection(d);
    REQUIRE(std::find(v.begin(), v.end(), "zero width") != v.end());
    REQUIRE(std::find(v.begin(), v.end(), "negative height") != v.end());
    REQUIRE(std::find(v.begin(), v.end(), "score out of range") != v.end());
    REQUIRE(std::find(v.begin(), v.end(), "empty image id") != v.end());

    Detection ok;
    ok.box = Box{0, 0, 4, 6};
    ok.score = 0.5;
    ok.image_id = "img";
    REQUIRE(validate_detection(ok).empty());
}
