#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "pcv/vec3.hpp"

namespace pcv {

struct PointCloud {
    std::vector<Vec3> points;
    std::optional<std::vector<Color8>> colors;  // carried through, never compressed
    int frame_index = 0;

    std::size_t size() const { return points.size(); }

    bool has_colors() const { return colors.has_value(); }

    // Invariants: nonempty, finite coordinates, color count matches.
    void validate() const {
        if (points.empty()) throw std::invalid_argument("point cloud is empty");
        for (const Vec3& p : points) {
            if (!p.finite()) throw std::invalid_argument("point cloud has non-finite coordinate");
        }
        if (colors && colors->size() != points.size()) {
            throw std::invalid_argument("color count does not match point count");
        }
    }
};

struct BoundingBox {
    Vec3 min;
    Vec3 max;

    Vec3 extent() const { return max - min; }
    double max_extent() const {
        Vec3 e = extent();
        return std::max(e.x, std::max(e.y, e.z));
    }
};

inline BoundingBox bounding_box(const std::vector<Vec3>& pts) {
    if (pts.empty()) throw std::invalid_argument("bounding_box of empty set");
    BoundingBox bb{pts[0], pts[0]};
    for (const Vec3& p : pts) {
        bb.min.x = std::min(bb.min.x, p.x);
        bb.min.y = std::min(bb.min.y, p.y);
        bb.min.z = std::min(bb.min.z, p.z);
        bb.max.x = std::max(bb.max.x, p.x);
        bb.max.y = std::max(bb.max.y, p.y);
        bb.max.z = std::max(bb.max.z, p.z);
    }
    return bb;
}

}  // namespace pcv
