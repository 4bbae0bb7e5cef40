#pragma once

#include <string>

#include "pcv/patch.hpp"
#include "pcv/rng.hpp"

namespace pcv {

// Synthetic patch generators. Points are laid out on structured low-
// discrepancy lattices (Fibonacci / sunflower) in a canonical patch pose with
// a random extent and lattice phase, then unit-sphere normalized. Structured
// sampling keeps two patches of the same surface region close in EMD, the
// way depth-camera scanlines and Poisson-disk mesh sampling do; i.i.d.
// sampling would bury fine reconstruction quality under sampling noise.

enum class Shape { Sphere, Cube, Torus, Cylinder, GaussianBlobs };

inline Shape shape_from_name(const std::string& name) {
    if (name == "sphere") return Shape::Sphere;
    if (name == "cube") return Shape::Cube;
    if (name == "torus") return Shape::Torus;
    if (name == "cylinder") return Shape::Cylinder;
    if (name == "gaussian-blobs") return Shape::GaussianBlobs;
    throw std::invalid_argument("unknown shape '" + name + "'");
}

inline const char* shape_name(Shape s) {
    switch (s) {
        case Shape::Sphere: return "sphere";
        case Shape::Cube: return "cube";
        case Shape::Torus: return "torus";
        case Shape::Cylinder: return "cylinder";
        case Shape::GaussianBlobs: return "gaussian-blobs";
    }
    return "?";
}

inline constexpr double kGoldenAngle = 2.399963229728653;
inline constexpr double kTorusMajor = 1.0;
inline constexpr double kTorusMinor = 0.35;

namespace synth_detail {

// Spherical cap on the unit sphere, axis +z, Fibonacci lattice.
inline std::vector<Vec3> sphere_cap(int n, Rng& rng) {
    double theta = rng.uniform(0.35, 0.65);
    double cos_theta = std::cos(theta);
    double phi0 = rng.uniform(0.0, 2.0 * M_PI);
    std::vector<Vec3> pts(n);
    for (int i = 0; i < n; ++i) {
        double cz = 1.0 - (1.0 - cos_theta) * (i + 0.5) / n;
        double sr = std::sqrt(std::max(0.0, 1.0 - cz * cz));
        double ph = phi0 + i * kGoldenAngle;
        pts[i] = {sr * std::cos(ph), sr * std::sin(ph), cz};
    }
    return pts;
}

// Sunflower disk in the z=0 plane.
inline std::vector<Vec3> sunflower_disk(int n, double radius, double phi0) {
    std::vector<Vec3> pts(n);
    for (int i = 0; i < n; ++i) {
        double r = radius * std::sqrt((i + 0.5) / n);
        double ph = phi0 + i * kGoldenAngle;
        pts[i] = {r * std::cos(ph), r * std::sin(ph), 0.0};
    }
    return pts;
}

// Cube surface patch: two thirds are flat face disks, one third folds a disk
// over a 90-degree edge (the x>0 half rotates into the x=0 plane).
inline std::vector<Vec3> cube_patch(int n, Rng& rng, int index) {
    double radius = rng.uniform(0.4, 0.9);
    double phi0 = rng.uniform(0.0, 2.0 * M_PI);
    std::vector<Vec3> pts = sunflower_disk(n, radius, phi0);
    if (index % 3 == 2) {
        for (Vec3& p : pts)
            if (p.x > 0.0) p = {0.0, p.y, p.x};  // fold across the y axis
    }
    return pts;
}

// Geodesic-ish disk in torus parameter space, mapped exactly onto the surface.
inline std::vector<Vec3> torus_patch(int n, Rng& rng) {
    double u0 = rng.uniform(0.0, 2.0 * M_PI);
    double v0 = rng.uniform(0.0, 2.0 * M_PI);
    double rho = rng.uniform(0.25, 0.5);
    double phi0 = rng.uniform(0.0, 2.0 * M_PI);
    std::vector<Vec3> pts(n);
    for (int i = 0; i < n; ++i) {
        double a = rho * std::sqrt((i + 0.5) / n);
        double ph = phi0 + i * kGoldenAngle;
        double u = u0 + a * std::cos(ph) / kTorusMajor;
        double v = v0 + a * std::sin(ph) / kTorusMinor;
        double ring = kTorusMajor + kTorusMinor * std::cos(v);
        pts[i] = {ring * std::cos(u), ring * std::sin(u), kTorusMinor * std::sin(v)};
    }
    return pts;
}

// Lateral cylinder surface (unit radius), disk in unrolled coordinates.
inline std::vector<Vec3> cylinder_patch(int n, Rng& rng) {
    double s0 = rng.uniform(0.0, 2.0 * M_PI);
    double z0 = rng.uniform(-1.0, 1.0);
    double rho = rng.uniform(0.3, 0.7);
    double phi0 = rng.uniform(0.0, 2.0 * M_PI);
    std::vector<Vec3> pts(n);
    for (int i = 0; i < n; ++i) {
        double a = rho * std::sqrt((i + 0.5) / n);
        double ph = phi0 + i * kGoldenAngle;
        double s = s0 + a * std::cos(ph);
        pts[i] = {std::cos(s), std::sin(s), z0 + a * std::sin(ph)};
    }
    return pts;
}

inline std::vector<Vec3> gaussian_blobs(int n, Rng& rng) {
    const int n_blobs = 3;
    std::vector<Vec3> centers(n_blobs);
    for (Vec3& c : centers) c = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};
    std::vector<Vec3> pts(n);
    for (int i = 0; i < n; ++i) {
        const Vec3& c = centers[i % n_blobs];
        pts[i] = c + Vec3{rng.normal(0.0, 0.2), rng.normal(0.0, 0.2), rng.normal(0.0, 0.2)};
    }
    return pts;
}

}  // namespace synth_detail

// One normalized patch of the given shape. `index` varies the cube sub-kind.
inline Patch synth_patch(Shape shape, int n_points, double noise, Rng& rng, int index = 0) {
    std::vector<Vec3> pts;
    switch (shape) {
        case Shape::Sphere: pts = synth_detail::sphere_cap(n_points, rng); break;
        case Shape::Cube: pts = synth_detail::cube_patch(n_points, rng, index); break;
        case Shape::Torus: pts = synth_detail::torus_patch(n_points, rng); break;
        case Shape::Cylinder: pts = synth_detail::cylinder_patch(n_points, rng); break;
        case Shape::GaussianBlobs: pts = synth_detail::gaussian_blobs(n_points, rng); break;
    }
    if (noise > 0.0) {
        for (Vec3& p : pts) p += {rng.normal(0.0, noise), rng.normal(0.0, noise), rng.normal(0.0, noise)};
    }
    return normalize_patch(std::move(pts), index);
}

inline std::vector<Patch> synth_patches(Shape shape, int count, int n_points, double noise,
                                        Rng& rng) {
    std::vector<Patch> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) out.push_back(synth_patch(shape, n_points, noise, rng, i));
    return out;
}

// Dense synthetic point cloud on a full shape surface (for codec comparisons
// and octree tests). Fibonacci sphere for Sphere; others sample uniformly.
inline PointCloud synth_cloud(Shape shape, int n_points, std::uint64_t seed) {
    Rng rng(seed);
    PointCloud cloud;
    cloud.points.reserve(n_points);
    switch (shape) {
        case Shape::Sphere:
            for (int i = 0; i < n_points; ++i) {
                double z = 1.0 - 2.0 * (i + 0.5) / n_points;
                double r = std::sqrt(std::max(0.0, 1.0 - z * z));
                double ph = i * kGoldenAngle;
                cloud.points.push_back({r * std::cos(ph), r * std::sin(ph), z});
            }
            break;
        case Shape::Cube:
            for (int i = 0; i < n_points; ++i) {
                int face = static_cast<int>(rng.below(6));
                double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
                double s = face % 2 == 0 ? 1.0 : -1.0;
                if (face / 2 == 0) cloud.points.push_back({s, a, b});
                else if (face / 2 == 1) cloud.points.push_back({a, s, b});
                else cloud.points.push_back({a, b, s});
            }
            break;
        case Shape::Torus:
            for (int i = 0; i < n_points; ++i) {
                double u = rng.uniform(0.0, 2.0 * M_PI), v = rng.uniform(0.0, 2.0 * M_PI);
                double ring = kTorusMajor + kTorusMinor * std::cos(v);
                cloud.points.push_back({ring * std::cos(u), ring * std::sin(u), kTorusMinor * std::sin(v)});
            }
            break;
        case Shape::Cylinder:
            for (int i = 0; i < n_points; ++i) {
                double s = rng.uniform(0.0, 2.0 * M_PI);
                cloud.points.push_back({std::cos(s), std::sin(s), rng.uniform(-1.0, 1.0)});
            }
            break;
        case Shape::GaussianBlobs: {
            std::vector<Vec3> pts = synth_detail::gaussian_blobs(n_points, rng);
            cloud.points = std::move(pts);
            break;
        }
    }
    return cloud;
}

}  // namespace pcv
