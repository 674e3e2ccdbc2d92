#include "rtn/geometry.hpp"

#include <algorithm>
#include <numeric>

namespace rtn {

Box union_box(const Box& a, const Box& b) noexcept {
    return {std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2), std::max(a.y2, b.y2)};
}

double intersection_area(const Box& a, const Box& b) noexcept {
    const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (w <= 0.0 || h <= 0.0) return 0.0;
    return w * h;
}

double iou(const Box& a, const Box& b) noexcept {
    const double inter = intersection_area(a, b);
    if (inter <= 0.0) return 0.0;
    return inter / (a.area() + b.area() - inter);
}

bool contains(const Box& outer, const Box& inner) noexcept {
    return outer.x1 <= inner.x1 && outer.y1 <= inner.y1 && inner.x2 <= outer.x2 &&
           inner.y2 <= outer.y2;
}

Box flip_horizontal(const Box& b) noexcept { return {1.0 - b.x2, b.y1, 1.0 - b.x1, b.y2}; }

std::vector<std::size_t> nms(std::span<const ScoredBox> candidates, double threshold) {
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return candidates[a].score > candidates[b].score;
    });
    std::vector<std::size_t> kept;
    for (std::size_t idx : order) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
            return iou(candidates[idx].box, candidates[k].box) > threshold;
        });
        if (!suppressed) kept.push_back(idx);
    }
    return kept;
}

}  // namespace rtn
