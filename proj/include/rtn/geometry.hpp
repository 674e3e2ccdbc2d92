#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace rtn {

/// Axis-aligned box (x1, y1) top-left, (x2, y2) bottom-right; y grows downward.
struct Box {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

    double width() const noexcept { return x2 - x1; }
    double height() const noexcept { return y2 - y1; }
    double area() const noexcept { return width() * height(); }
    double center_x() const noexcept { return 0.5 * (x1 + x2); }
    double center_y() const noexcept { return 0.5 * (y1 + y2); }
    bool valid() const noexcept { return x1 < x2 && y1 < y2; }
    std::array<double, 4> coords() const noexcept { return {x1, y1, x2, y2}; }

    bool operator==(const Box&) const = default;
};

Box union_box(const Box& a, const Box& b) noexcept;
double intersection_area(const Box& a, const Box& b) noexcept;
double iou(const Box& a, const Box& b) noexcept;
/// True when a lies inside b (borders inclusive).
bool contains(const Box& outer, const Box& inner) noexcept;
/// Mirror on the unit canvas: x1' = 1 - x2, x2' = 1 - x1.
Box flip_horizontal(const Box& b) noexcept;

struct ScoredBox {
    Box box;
    double score = 0.0;
};

/// Greedy non-maximum suppression. Candidates are visited by descending
/// score (ties: lower index first); one is dropped when its IoU with any
/// already kept box exceeds `threshold`. Returns kept indices in visit order.
std::vector<std::size_t> nms(std::span<const ScoredBox> candidates, double threshold);

}  // namespace rtn
