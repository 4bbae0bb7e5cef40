#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pcv/point_cloud.hpp"
#include "pcv/sampling.hpp"

namespace pcv {

inline constexpr int kDefaultPatchSize = 256;
inline constexpr int kDefaultPatchCount = 200;
inline constexpr double kUnitSphereTol = 1e-6;

// A fixed-cardinality point set normalized into the unit sphere.
// denormalized point = scale * p + centroid.
struct Patch {
    std::vector<Vec3> points;
    Vec3 centroid;
    double scale = 1.0;
    int patch_id = 0;

    bool normalized() const {
        for (const Vec3& p : points) {
            if (!p.finite() || p.squared_norm() > (1.0 + kUnitSphereTol) * (1.0 + kUnitSphereTol))
                return false;
        }
        return true;
    }
};

struct PatchDecomposition {
    std::vector<Patch> patches;
    int frame_index = 0;
};

// Center on the mean, then divide by the max point norm so every point lands
// in the unit sphere. Degenerate patches (all points identical) get scale 1.
inline Patch normalize_patch(std::vector<Vec3> pts, int patch_id = 0) {
    Patch patch;
    patch.patch_id = patch_id;
    Vec3 c{0, 0, 0};
    for (const Vec3& p : pts) c += p;
    c = c / static_cast<double>(pts.size());
    double max_norm = 0.0;
    for (Vec3& p : pts) {
        p -= c;
        max_norm = std::max(max_norm, p.norm());
    }
    double scale = max_norm > 0.0 ? max_norm : 1.0;
    for (Vec3& p : pts) p = p / scale;
    patch.points = std::move(pts);
    patch.centroid = c;
    patch.scale = scale;
    return patch;
}

inline std::vector<Vec3> denormalize_patch(const Patch& patch) {
    std::vector<Vec3> out;
    out.reserve(patch.points.size());
    for (const Vec3& p : patch.points) out.push_back(p * patch.scale + patch.centroid);
    return out;
}

// FPS seeds, kNN membership (patches may overlap), per-patch normalization.
inline PatchDecomposition decompose_into_patches(const PointCloud& cloud,
                                                 int n_per_patch = kDefaultPatchSize,
                                                 int n_patches = kDefaultPatchCount) {
    cloud.validate();
    if (static_cast<int>(cloud.size()) < n_per_patch)
        throw std::invalid_argument("decompose_into_patches: cloud smaller than patch size");
    if (n_patches < 1) throw std::invalid_argument("decompose_into_patches: n_patches < 1");

    std::vector<int> seeds = farthest_point_sample(cloud.points, n_patches, 0);
    PatchDecomposition d;
    d.frame_index = cloud.frame_index;
    d.patches.reserve(n_patches);
    for (int pid = 0; pid < n_patches; ++pid) {
        std::vector<int> members = knn_group(cloud.points, cloud.points[seeds[pid]], n_per_patch);
        std::vector<Vec3> pts;
        pts.reserve(members.size());
        for (int m : members) pts.push_back(cloud.points[m]);
        d.patches.push_back(normalize_patch(std::move(pts), pid));
    }
    return d;
}

// Denormalize every reconstructed patch and return the union. Reconstructed
// patches must match the decomposition's ids one-to-one (reconstruction keeps
// each patch's normalization frame).
inline PointCloud reassemble(const PatchDecomposition& decomposition,
                             const std::vector<Patch>& reconstructed_patches) {
    if (reconstructed_patches.size() != decomposition.patches.size())
        throw std::invalid_argument("reassemble: patch count mismatch");
    PointCloud cloud;
    cloud.frame_index = decomposition.frame_index;
    for (std::size_t i = 0; i < reconstructed_patches.size(); ++i) {
        const Patch& rec = reconstructed_patches[i];
        const Patch& ref = decomposition.patches[i];
        if (rec.patch_id != ref.patch_id)
            throw std::invalid_argument("reassemble: patch id mismatch at position " +
                                        std::to_string(i));
        for (const Vec3& p : rec.points)
            cloud.points.push_back(p * ref.scale + ref.centroid);
    }
    return cloud;
}

// Patch dump format: header line "n cx cy cz scale", then n lines "x y z".
inline void save_patch(const Patch& patch, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out.precision(17);
    out << patch.points.size() << ' ' << patch.centroid.x << ' ' << patch.centroid.y << ' '
        << patch.centroid.z << ' ' << patch.scale << '\n';
    for (const Vec3& p : patch.points) out << p.x << ' ' << p.y << ' ' << p.z << '\n';
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline Patch load_patch(const std::string& path, int patch_id = 0) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    Patch patch;
    patch.patch_id = patch_id;
    std::size_t n = 0;
    if (!(in >> n >> patch.centroid.x >> patch.centroid.y >> patch.centroid.z >> patch.scale))
        throw std::runtime_error("malformed patch header in '" + path + "'");
    patch.points.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(in >> patch.points[i].x >> patch.points[i].y >> patch.points[i].z))
            throw std::runtime_error("truncated patch body in '" + path + "'");
    }
    return patch;
}

}  // namespace pcv
