#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "pcv/vec3.hpp"

namespace pcv {

// Greedy farthest point sampling. First index is start_index; each next pick
// maximizes the minimum distance to the already-selected set, ties broken by
// lowest index.
inline std::vector<int> farthest_point_sample(std::span<const Vec3> points, int k,
                                              int start_index = 0) {
    const int n = static_cast<int>(points.size());
    if (k < 1 || k > n) throw std::invalid_argument("farthest_point_sample: k out of range");
    if (start_index < 0 || start_index >= n)
        throw std::invalid_argument("farthest_point_sample: start_index out of range");

    std::vector<int> selected;
    selected.reserve(k);
    selected.push_back(start_index);

    std::vector<double> min_d2(n);
    for (int i = 0; i < n; ++i) min_d2[i] = squared_distance(points[i], points[start_index]);

    while (static_cast<int>(selected.size()) < k) {
        int best = 0;
        double best_d2 = -1.0;
        for (int i = 0; i < n; ++i) {
            if (min_d2[i] > best_d2) {  // strict ">" keeps the lowest index on ties
                best_d2 = min_d2[i];
                best = i;
            }
        }
        selected.push_back(best);
        for (int i = 0; i < n; ++i) {
            double d2 = squared_distance(points[i], points[best]);
            if (d2 < min_d2[i]) min_d2[i] = d2;
        }
    }
    return selected;
}

// Indices of the k nearest points to center, ascending distance, ties by index.
inline std::vector<int> knn_group(std::span<const Vec3> points, const Vec3& center, int k) {
    const int n = static_cast<int>(points.size());
    if (k < 1 || k > n) throw std::invalid_argument("knn_group: k out of range");

    std::vector<std::pair<double, int>> order(n);
    for (int i = 0; i < n; ++i) order[i] = {squared_distance(points[i], center), i};
    if (k < n) {
        std::nth_element(order.begin(), order.begin() + k, order.end());
        order.resize(k);
    }
    std::sort(order.begin(), order.end());
    std::vector<int> idx(k);
    for (int i = 0; i < k; ++i) idx[i] = order[i].second;
    return idx;
}

}  // namespace pcv
