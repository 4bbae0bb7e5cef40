#pragma once

#include <cmath>
#include <cstdlib>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "pcv/vec3.hpp"

namespace pcv {

inline constexpr std::size_t kEmdMaxPoints = 1024;

namespace emd_detail {

// Minimum-cost perfect matching on a dense square cost matrix, Jonker-
// Volgenant style: column reduction, reduction transfer, augmenting row
// reduction, then shortest augmenting paths. Deterministic: fixed scan
// order throughout. Returns row -> column.
inline std::vector<int> solve_assignment(const std::vector<double>& cost, int n) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    auto C = [&](int i, int j) { return cost[static_cast<std::size_t>(i) * n + j]; };

    std::vector<int> rowsol(n, -1), colsol(n, -1);
    std::vector<double> u(n, 0.0), v(n, 0.0);
    std::vector<int> free_rows(n);
    int numfree = 0;

    // column reduction, right to left so the lowest row index wins ties
    {
        std::vector<int> matches(n, 0);
        for (int j = n - 1; j >= 0; --j) {
            double min = C(0, j);
            int imin = 0;
            for (int i = 1; i < n; ++i) {
                double c = C(i, j);
                if (c < min) {
                    min = c;
                    imin = i;
                }
            }
            v[j] = min;
            if (++matches[imin] == 1) {
                rowsol[imin] = j;
                colsol[j] = imin;
            }
        }

        // reduction transfer from single-match rows
        for (int i = 0; i < n; ++i) {
            if (matches[i] == 0) {
                free_rows[numfree++] = i;
            } else if (matches[i] == 1 && n > 1) {
                int j1 = rowsol[i];
                double min = kInf;
                for (int j = 0; j < n; ++j)
                    if (j != j1) min = std::min(min, C(i, j) - v[j]);
                v[j1] -= min;
            }
        }
    }

    // Shortest augmenting paths for the remaining free rows. (The classic
    // augmenting-row-reduction phase is omitted: it thrashes on the highly
    // degenerate cost matrices this solver sees, e.g. an untrained decoder
    // emitting a tight cluster of near-identical points.)
    std::vector<double> d(n);
    std::vector<int> pred(n), collist(n);
    for (int f = 0; f < numfree; ++f) {
        int freerow = free_rows[f];
        for (int j = 0; j < n; ++j) {
            d[j] = C(freerow, j) - v[j];
            pred[j] = freerow;
            collist[j] = j;
        }
        int low = 0, up = 0, last = -1, endofpath = -1;
        double min = 0.0;
        bool unassignedfound = false;
        do {
            if (up == low) {
                last = low - 1;
                min = d[collist[up++]];
                for (int k = up; k < n; ++k) {
                    int j = collist[k];
                    double h = d[j];
                    if (h <= min) {
                        if (h < min) {
                            up = low;
                            min = h;
                        }
                        collist[k] = collist[up];
                        collist[up++] = j;
                    }
                }
                for (int k = low; k < up; ++k) {
                    if (colsol[collist[k]] < 0) {
                        endofpath = collist[k];
                        unassignedfound = true;
                        break;
                    }
                }
            }
            if (!unassignedfound) {
                int j1 = collist[low++];
                int i = colsol[j1];
                double h = C(i, j1) - v[j1] - min;
                for (int k = up; k < n; ++k) {
                    int j = collist[k];
                    double v2 = C(i, j) - v[j] - h;
                    if (v2 < d[j]) {
                        pred[j] = i;
                        if (v2 == min) {
                            if (colsol[j] < 0) {
                                endofpath = j;
                                unassignedfound = true;
                                break;
                            }
                            collist[k] = collist[up];
                            collist[up++] = j;
                        }
                        d[j] = v2;
                    }
                }
            }
        } while (!unassignedfound);

        for (int k = 0; k <= last; ++k) {
            int j1 = collist[k];
            v[j1] += d[j1] - min;
        }

        int i;
        do {
            i = pred[endofpath];
            colsol[endofpath] = i;
            int j1 = endofpath;
            endofpath = rowsol[i];
            rowsol[i] = j1;
        } while (i != freerow);
    }

    // Canonicalize exact ties: pairwise swaps along zero-reduced-cost edges
    // toward the lexicographically smallest optimal assignment.
    for (int i = 0; i < n; ++i) u[i] = C(i, rowsol[i]) - v[rowsol[i]];
    double max_cost = 0.0;
    for (double c : cost) max_cost = std::max(max_cost, std::abs(c));
    const double tol = 1e-12 * std::max(1.0, max_cost);
    auto reduced = [&](int i, int j) { return C(i, j) - u[i] - v[j]; };
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < rowsol[i]; ++j) {
            int k = colsol[j];
            if (std::abs(reduced(i, j)) <= tol && std::abs(reduced(k, rowsol[i])) <= tol) {
                int ji = rowsol[i];
                rowsol[i] = j;
                rowsol[k] = ji;
                colsol[j] = i;
                colsol[ji] = k;
                break;
            }
        }
    }
    return rowsol;
}

}  // namespace emd_detail

struct EmdResult {
    double value = 0.0;
    std::vector<int> assignment;  // generated[i] matched to target[assignment[i]]
    std::vector<Vec3> gradient;   // d value / d generated[i], assignment held fixed
};

// Mean Euclidean transport cost under the optimal one-to-one assignment.
// Both sets must have the same cardinality n <= 1024.
inline EmdResult emd_with_gradient(std::span<const Vec3> generated, std::span<const Vec3> target) {
    if (generated.size() != target.size())
        throw std::invalid_argument("emd: cardinality mismatch");
    if (generated.empty()) throw std::invalid_argument("emd: empty sets");
    if (generated.size() > kEmdMaxPoints) throw std::invalid_argument("emd: sets larger than 1024");

    const int n = static_cast<int>(generated.size());
    std::vector<double> cost(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            cost[static_cast<std::size_t>(i) * n + j] = distance(generated[i], target[j]);

    EmdResult r;
    r.assignment = emd_detail::solve_assignment(cost, n);
    r.gradient.resize(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double d = cost[static_cast<std::size_t>(i) * n + r.assignment[i]];
        total += d;
        if (d > 0.0) {
            r.gradient[i] = (generated[i] - target[r.assignment[i]]) / (d * n);
        }  // zero at coincident points (subgradient)
    }
    r.value = total / n;
    return r;
}

inline double emd(std::span<const Vec3> a, std::span<const Vec3> b) {
    if (a.size() != b.size()) throw std::invalid_argument("emd: cardinality mismatch");
    if (a.empty()) throw std::invalid_argument("emd: empty sets");
    if (a.size() > kEmdMaxPoints) throw std::invalid_argument("emd: sets larger than 1024");
    const int n = static_cast<int>(a.size());
    std::vector<double> cost(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) cost[static_cast<std::size_t>(i) * n + j] = distance(a[i], b[j]);
    std::vector<int> asg = emd_detail::solve_assignment(cost, n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += cost[static_cast<std::size_t>(i) * n + asg[i]];
    return total / n;
}

}  // namespace pcv
