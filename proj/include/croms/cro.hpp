#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "croms/core.hpp"

namespace croms::cro {

/// Projected (sub)gradient settings. `tolerance` is an objective-change stop
/// for the smooth ellipsoid path; the nonsmooth finite-points path runs a
/// diminishing-step schedule for max_iters and keeps the best iterate.
struct PgdConfig {
    int max_iters = 2000;
    double step_size = 0.05;
    double tolerance = 1e-8;
    std::optional<Vector> warm_start;
};

/// Euclidean projection onto the probability simplex (sort-then-threshold).
inline Vector project_simplex(const Vector& v) {
    const int p = static_cast<int>(v.size());
    if (p < 1) throw ValueError("project_simplex: empty vector");
    std::vector<double> u(v.data(), v.data() + p);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cum = 0.0, theta = 0.0;
    int rho = 0;
    for (int j = 0; j < p; ++j) {
        cum += u[j];
        const double t = (cum - 1.0) / (j + 1);
        if (u[j] - t > 0.0) {
            rho = j + 1;
            theta = t;
        }
    }
    Vector z(p);
    for (int i = 0; i < p; ++i) z[i] = std::max(v[i] - theta, 0.0);
    // guard against rounding drift in the constraint
    const double s = z.sum();
    if (s > 0.0 && std::abs(s - 1.0) > 1e-14) z /= s;
    return z;
}

namespace detail {

inline Vector uniform_simplex(int p) { return Vector::Constant(p, 1.0 / p); }

/// Exact-ish minimizer of a convex f on [lo, hi] by ternary search; flats are
/// handled by shrinking toward the smaller endpoint.
template <typename F>
double ternary_min(F&& f, double lo, double hi, int iters = 200) {
    for (int k = 0; k < iters && hi - lo > 0.0; ++k) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        if (f(m1) <= f(m2))
            hi = m2;
        else
            lo = m1;
    }
    return 0.5 * (lo + hi);
}

/// Coordinate-pair descent over the simplex edges; each 1-d subproblem is a
/// convex line search solved by ternary_min. Exact for p = 2.
template <typename F>
void pairwise_polish(Vector& z, F&& objective, int passes = 4) {
    const int p = static_cast<int>(z.size());
    double current = objective(z);
    for (int pass = 0; pass < passes; ++pass) {
        bool improved = false;
        for (int i = 0; i < p; ++i) {
            for (int j = i + 1; j < p; ++j) {
                auto line = [&](double t) {
                    Vector w = z;
                    w[i] += t;
                    w[j] -= t;
                    return objective(w);
                };
                const double t = ternary_min(line, -z[i], z[j]);
                const double val = line(t);
                if (val < current - 1e-15) {
                    z[i] += t;
                    z[j] -= t;
                    current = val;
                    improved = true;
                }
            }
        }
        if (!improved) break;
    }
}

/// Drop points that can never attain the inner max of -c'z over z >= 0:
/// c is dominated when some other point is <= coordinate-wise.
inline std::vector<Vector> pareto_min_filter(const std::vector<Vector>& points) {
    const int p = static_cast<int>(points.front().size());
    if (p == 2) {
        std::vector<Vector> sorted = points;
        std::sort(sorted.begin(), sorted.end(), [](const Vector& a, const Vector& b) {
            return a[0] != b[0] ? a[0] < b[0] : a[1] < b[1];
        });
        std::vector<Vector> keep;
        double best_y = kInf;
        for (const auto& c : sorted) {
            if (c[1] < best_y) {
                keep.push_back(c);
                best_y = c[1];
            }
        }
        return keep;
    }
    std::vector<Vector> keep;
    for (std::size_t i = 0; i < points.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < points.size() && !dominated; ++j) {
            if (i == j) continue;
            bool le = true, strict = false;
            for (int k = 0; k < p; ++k) {
                if (points[j][k] > points[i][k]) le = false;
                if (points[j][k] < points[i][k]) strict = true;
            }
            if (le && (strict || j < i)) dominated = true;  // ties keep first
        }
        if (!dominated) keep.push_back(points[i]);
    }
    return keep;
}

}  // namespace detail

/// argmin_z max_{y in set} M(y, z) over decision columns; ties go to the
/// lowest column index. An empty set falls back to the full label set with
/// `set_was_empty` raised.
inline RobustSolution solve_finite(const Matrix& m, const std::vector<int>& set) {
    std::vector<int> rows = set;
    bool was_empty = false;
    if (rows.empty()) {
        was_empty = true;
        rows.resize(m.rows());
        std::iota(rows.begin(), rows.end(), 0);
    }
    for (int r : rows)
        if (r < 0 || r >= m.rows()) throw DimensionError("solve_finite: label out of range");
    int best_z = 0;
    double best = kInf;
    for (int z = 0; z < m.cols(); ++z) {
        double worst = -kInf;
        for (int r : rows) worst = std::max(worst, m(r, z));
        if (worst < best) {
            best = worst;
            best_z = z;
        }
    }
    return RobustSolution{best_z, best, was_empty};
}

/// Portfolio CRO over the box {c : ||c - mu||_inf <= q}: the worst case is
/// -(mu - q 1)'z, minimized at the vertex of the largest mean coordinate.
inline RobustSolution solve_box_portfolio(const Vector& mu, double q) {
    const int p = static_cast<int>(mu.size());
    if (p < 1) throw ValueError("solve_box_portfolio: empty mean");
    if (q < 0.0) throw ValueError("solve_box_portfolio: negative half-width");
    if (std::isinf(q))
        return RobustSolution{detail::uniform_simplex(p), kInf, false};
    int istar = 0;
    for (int i = 1; i < p; ++i)
        if (mu[i] > mu[istar]) istar = i;
    Vector z = Vector::Zero(p);
    z[istar] = 1.0;
    return RobustSolution{z, -(mu[istar] - q), false};
}

/// Portfolio CRO over the ellipsoid {c : (c-mu)' Sigma^{-1} (c-mu) <= q}
/// (q in squared-score units): minimizes -mu'z + sqrt(q) ||z||_Sigma on the
/// simplex by projected gradient descent with a pairwise polish.
inline RobustSolution solve_ellipsoid_portfolio(const Vector& mu, const Matrix& sigma,
                                                double q, const PgdConfig& cfg = {}) {
    const int p = static_cast<int>(mu.size());
    if (p < 1) throw ValueError("solve_ellipsoid_portfolio: empty mean");
    if (sigma.rows() != p || sigma.cols() != p)
        throw DimensionError("solve_ellipsoid_portfolio: covariance shape mismatch");
    if (q < 0.0) throw ValueError("solve_ellipsoid_portfolio: negative threshold");
    if (std::isinf(q))
        return RobustSolution{detail::uniform_simplex(p), kInf, false};
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw ValueError("solve_ellipsoid_portfolio: covariance is not SPD");
    if (q == 0.0) {
        // degenerate ellipsoid: linear objective, vertex argmax mu
        auto sol = solve_box_portfolio(mu, 0.0);
        return sol;
    }

    const double sq = std::sqrt(q);
    auto objective = [&](const Vector& z) { return -mu.dot(z) + sq * std::sqrt(z.dot(sigma * z)); };

    Vector z = cfg.warm_start ? project_simplex(*cfg.warm_start) : detail::uniform_simplex(p);
    double prev = objective(z);
    Vector best_z = z;
    double best = prev;
    for (int k = 0; k < cfg.max_iters; ++k) {
        const Vector sz = sigma * z;
        const double norm = std::sqrt(z.dot(sz));
        Vector grad = -mu + (sq / norm) * sz;
        z = project_simplex(z - cfg.step_size * grad);
        const double val = objective(z);
        if (val < best) {
            best = val;
            best_z = z;
        }
        if (std::abs(prev - val) < cfg.tolerance && k > 0) break;
        prev = val;
    }
    detail::pairwise_polish(best_z, objective);
    return RobustSolution{best_z, objective(best_z), false};
}

/// Portfolio CRO over a finite point set: minimizes max_c -c'z on the simplex
/// by projected subgradient descent (step/sqrt(k), subgradient from the
/// active point, best iterate kept) followed by a pairwise polish.
inline RobustSolution solve_finite_points(const LossSpec& spec, const std::vector<Vector>& points,
                                          const PgdConfig& cfg = {}) {
    if (!std::holds_alternative<LossSpec::BilinearPortfolio>(spec.variant))
        throw ValueError("solve_finite_points: bilinear loss required");
    if (points.empty()) throw ValueError("solve_finite_points: empty point set");
    const int p = static_cast<int>(points.front().size());
    for (const auto& c : points)
        if (c.size() != p) throw DimensionError("solve_finite_points: ragged points");

    const std::vector<Vector> pts = detail::pareto_min_filter(points);
    auto objective = [&](const Vector& z) {
        double worst = -kInf;
        for (const auto& c : pts) worst = std::max(worst, -c.dot(z));
        return worst;
    };

    Vector z = cfg.warm_start ? project_simplex(*cfg.warm_start) : detail::uniform_simplex(p);
    Vector best_z = z;
    double best = objective(z);
    const int iters = std::min(cfg.max_iters, 400);
    for (int k = 0; k < iters; ++k) {
        int active = 0;
        double worst = -kInf;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            const double v = -pts[j].dot(z);
            if (v > worst) {
                worst = v;
                active = static_cast<int>(j);
            }
        }
        const double step = cfg.step_size / std::sqrt(static_cast<double>(k + 1));
        z = project_simplex(z + step * pts[active]);
        const double val = objective(z);
        if (val < best) {
            best = val;
            best_z = z;
        }
    }
    detail::pairwise_polish(best_z, objective, 6);
    return RobustSolution{best_z, objective(best_z), false};
}

}  // namespace croms::cro
