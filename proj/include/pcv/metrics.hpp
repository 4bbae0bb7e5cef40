#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

#include "pcv/vec3.hpp"

namespace pcv {

inline constexpr double kDefaultTau = 0.05;        // in normalized patch units
inline constexpr double kDefaultFrameBudget = 1.0 / 30.0;  // seconds, 30 FPS capture

struct AccuracyReport {
    double precision = 0.0;
    double recall = 0.0;
    double fscore = 0.0;
    double chamfer = 0.0;
    double emd = std::numeric_limits<double>::quiet_NaN();  // filled by callers that compute it
    double tau = kDefaultTau;
};

struct QoEReport {
    double accuracy = 0.0;    // reconstruction F-score, A
    double timeliness = 0.0;  // T = min(1, t_budget / t_total)
    double qoe = 0.0;         // harmonic mean of A and T
    double t_total = 0.0;
    double t_budget = 0.0;
};

inline double harmonic_mean(double a, double b) {
    return (a + b) == 0.0 ? 0.0 : 2.0 * a * b / (a + b);
}

// Sum of the two directed mean nearest-neighbor distances.
inline double chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty set");
    auto directed = [](std::span<const Vec3> from, std::span<const Vec3> to) {
        double sum = 0.0;
        for (const Vec3& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec3& q : to) best = std::min(best, squared_distance(p, q));
            sum += std::sqrt(best);
        }
        return sum / static_cast<double>(from.size());
    };
    return directed(a, b) + directed(b, a);
}

inline AccuracyReport precision_recall_f(std::span<const Vec3> reconstructed,
                                         std::span<const Vec3> truth, double tau = kDefaultTau) {
    if (reconstructed.empty() || truth.empty())
        throw std::invalid_argument("precision_recall_f: empty set");
    if (!(tau > 0.0)) throw std::invalid_argument("precision_recall_f: tau must be positive");

    const double tau2 = tau * tau;
    auto stats = [&](std::span<const Vec3> from, std::span<const Vec3> to) {
        std::size_t hits = 0;
        double nn_sum = 0.0;
        for (const Vec3& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec3& q : to) best = std::min(best, squared_distance(p, q));
            if (best <= tau2) ++hits;
            nn_sum += std::sqrt(best);
        }
        return std::pair{static_cast<double>(hits) / from.size(), nn_sum / from.size()};
    };
    auto [prec, nn_rec] = stats(reconstructed, truth);
    auto [rec, nn_truth] = stats(truth, reconstructed);

    AccuracyReport r;
    r.precision = prec;
    r.recall = rec;
    r.fscore = harmonic_mean(prec, rec);
    r.chamfer = nn_rec + nn_truth;
    r.tau = tau;
    return r;
}

inline QoEReport qoe(double accuracy_f, double t_total, double t_budget = kDefaultFrameBudget) {
    if (!(t_total > 0.0) || !(t_budget > 0.0))
        throw std::invalid_argument("qoe: times must be positive");
    if (accuracy_f < 0.0 || accuracy_f > 1.0) throw std::invalid_argument("qoe: accuracy out of [0,1]");
    QoEReport r;
    r.accuracy = accuracy_f;
    r.timeliness = std::min(1.0, t_budget / t_total);
    r.qoe = harmonic_mean(r.accuracy, r.timeliness);
    r.t_total = t_total;
    r.t_budget = t_budget;
    return r;
}

// Raw capture rate in bits per second.
inline double raw_rate(double points_per_frame, double fps, double bytes_per_point) {
    if (!(points_per_frame > 0.0) || !(fps > 0.0) || !(bytes_per_point > 0.0))
        throw std::invalid_argument("raw_rate: arguments must be positive");
    return points_per_frame * fps * bytes_per_point * 8.0;
}

}  // namespace pcv
