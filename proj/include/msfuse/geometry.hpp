#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace msfuse {

// Axis-aligned box in corner format, real-valued pixel coordinates.
struct Box {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }

    bool valid() const {
        return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) &&
               std::isfinite(y2) && x2 > x1 && y2 > y1;
    }

    bool operator==(const Box& o) const {
        return x1 == o.x1 && y1 == o.y1 && x2 == o.x2 && y2 == o.y2;
    }
};

enum class Modality { RGB, Thermal };

inline const char* to_string(Modality m) {
    return m == Modality::RGB ? "rgb" : "thermal";
}

inline Modality opposite(Modality m) {
    return m == Modality::RGB ? Modality::Thermal : Modality::RGB;
}

struct Detection {
    Box box;
    double score = 0.0;
    Modality modality = Modality::RGB;
    std::string class_label;
    std::string image_id;
};

inline void require_valid_box(const Box& b, const char* who) {
    if (!b.valid())
        throw std::invalid_argument(std::string(who) + ": invalid box [" +
                                    std::to_string(b.x1) + "," + std::to_string(b.y1) + "," +
                                    std::to_string(b.x2) + "," + std::to_string(b.y2) + "]");
}

// Intersection over union. Symmetric, in [0,1], 0 for disjoint boxes.
inline double iou(const Box& a, const Box& b) {
    require_valid_box(a, "iou");
    require_valid_box(b, "iou");
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    return inter / uni;
}

// Lists every violated Detection invariant; empty list means the detection is valid.
inline std::vector<std::string> validate_detection(const Detection& d) {
    std::vector<std::string> violations;
    if (!std::isfinite(d.box.x1) || !std::isfinite(d.box.y1) ||
        !std::isfinite(d.box.x2) || !std::isfinite(d.box.y2))
        violations.push_back("box coordinates not finite");
    if (d.box.x2 <= d.box.x1)
        violations.push_back(d.box.x2 == d.box.x1 ? "zero width" : "negative width");
    if (d.box.y2 <= d.box.y1)
        violations.push_back(d.box.y2 == d.box.y1 ? "zero height" : "negative height");
    if (!(d.score >= 0.0 && d.score <= 1.0))
        violations.push_back("score out of range");
    if (d.image_id.empty())
        violations.push_back("empty image id");
    return violations;
}

inline void require_valid_detection(const Detection& d, const char* who) {
    const auto v = validate_detection(d);
    if (!v.empty()) {
        std::string msg = std::string(who) + ": invalid detection:";
        for (const auto& s : v) msg += " " + s + ";";
        throw std::invalid_argument(msg);
    }
}

}  // namespace msfuse
