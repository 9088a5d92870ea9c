#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace dgcn {

// Axis-aligned box in pixel coordinates, corners (x_min,y_min) and (x_max,y_max).
struct Box {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    double center_x() const { return 0.5 * (x_min + x_max); }
    double center_y() const { return 0.5 * (y_min + y_max); }
    bool degenerate() const { return x_max <= x_min || y_max <= y_min; }
};

inline void check_box(const Box& b, const std::string& who) {
    if (b.degenerate())
        throw std::invalid_argument(who + ": degenerate box [" +
                                    std::to_string(b.x_min) + "," +
                                    std::to_string(b.y_min) + "," +
                                    std::to_string(b.x_max) + "," +
                                    std::to_string(b.y_max) + "]");
}

inline double intersection_area(const Box& a, const Box& b) {
    const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (w <= 0.0 || h <= 0.0) return 0.0;
    return w * h;
}

inline double iou(const Box& a, const Box& b) {
    check_box(a, "iou");
    check_box(b, "iou");
    const double inter = intersection_area(a, b);
    return inter / (a.area() + b.area() - inter);
}

// a is contained in b: every point of a lies in b, but the boxes are not equal.
// Equal boxes are left to the overlap rule, which makes containment a strict
// dual: contains(a,b) in one direction implies contains(b,a) in the other never.
inline bool contained_in(const Box& a, const Box& b) {
    const bool subset = a.x_min >= b.x_min && a.y_min >= b.y_min &&
                        a.x_max <= b.x_max && a.y_max <= b.y_max;
    const bool equal = a.x_min == b.x_min && a.y_min == b.y_min &&
                       a.x_max == b.x_max && a.y_max == b.y_max;
    return subset && !equal;
}

// Pairwise geometric relations between detected regions. The 8 direction
// classes carve the full circle into 45-degree sectors, counter-clockwise from
// the positive x axis. `none` marks pairs too far apart to relate.
enum class Relation : int {
    identity = 0,  // self loop
    inside = 1,    // subject lies within object
    cover = 2,     // subject encloses object
    overlap = 3,   // boxes intersect substantially
    dir_0 = 4,     // object is in sector [0, 45) degrees from subject
    dir_1 = 5,
    dir_2 = 6,
    dir_3 = 7,
    dir_4 = 8,
    dir_5 = 9,
    dir_6 = 10,
    dir_7 = 11,
    none = -1,
};

constexpr std::size_t kRelationClassCount = 12;

inline const char* relation_name(Relation r) {
    switch (r) {
        case Relation::identity: return "identity";
        case Relation::inside: return "inside";
        case Relation::cover: return "cover";
        case Relation::overlap: return "overlap";
        case Relation::dir_0: return "dir_0";
        case Relation::dir_1: return "dir_1";
        case Relation::dir_2: return "dir_2";
        case Relation::dir_3: return "dir_3";
        case Relation::dir_4: return "dir_4";
        case Relation::dir_5: return "dir_5";
        case Relation::dir_6: return "dir_6";
        case Relation::dir_7: return "dir_7";
        case Relation::none: return "none";
    }
    return "unknown";
}

// Thresholds for the relation rules, in the order they are applied:
// containment, then overlap by IoU, then direction for centers closer than
// ratio * image diagonal.
struct RelationPolicy {
    double overlap_iou = 0.5;
    double direction_ratio = 0.5;
};

// Relation of box a to box b ("a is <relation> b"). Never returns identity;
// self loops are the graph builder's job.
inline Relation classify_relation(const Box& a, const Box& b, double image_w,
                                  double image_h,
                                  const RelationPolicy& policy = {}) {
    check_box(a, "classify_relation");
    check_box(b, "classify_relation");
    if (image_w <= 0.0 || image_h <= 0.0)
        throw std::invalid_argument("classify_relation: image extent must be positive");
    if (contained_in(a, b)) return Relation::inside;
    if (contained_in(b, a)) return Relation::cover;
    if (iou(a, b) >= policy.overlap_iou) return Relation::overlap;
    const double dx = b.center_x() - a.center_x();
    const double dy = b.center_y() - a.center_y();
    const double dist = std::sqrt(dx * dx + dy * dy);
    const double diag = std::sqrt(image_w * image_w + image_h * image_h);
    if (dist > policy.direction_ratio * diag) return Relation::none;
    double deg = std::atan2(dy, dx) * 180.0 / 3.14159265358979323846;
    if (deg < 0.0) deg += 360.0;
    if (deg >= 360.0) deg = 0.0;
    const int sector = static_cast<int>(deg / 45.0);
    return static_cast<Relation>(static_cast<int>(Relation::dir_0) + sector);
}

}  // namespace dgcn
