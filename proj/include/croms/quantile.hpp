#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "croms/common.hpp"

namespace croms::quantile {

namespace detail {

// Order-statistic index for a given level: smallest k with k >= level*n.
// The small absolute slack keeps exactly-representable boundaries such as
// (1-alpha)(n+1) = integer from being pushed up a rank by rounding noise.
inline std::ptrdiff_t level_index(double level, std::size_t n) {
    const double target = level * static_cast<double>(n);
    return static_cast<std::ptrdiff_t>(std::ceil(target - 1e-9));
}

inline void check_finite(const std::vector<double>& values, const char* who) {
    for (double v : values) {
        if (std::isnan(v)) throw ValueError(std::string(who) + ": NaN in input");
    }
}

}  // namespace detail

/// k-th order statistic with k = ceil(level*n), clamped to 1 from below;
/// +inf when level*n exceeds n (the inflated-threshold overflow rule).
inline double empirical_quantile(std::vector<double> values, double level) {
    if (values.empty()) throw ValueError("empirical_quantile: empty input");
    detail::check_finite(values, "empirical_quantile");
    const std::size_t n = values.size();
    std::ptrdiff_t k = detail::level_index(level, n);
    if (k > static_cast<std::ptrdiff_t>(n)) return kInf;
    if (k < 1) k = 1;
    std::nth_element(values.begin(), values.begin() + (k - 1), values.end());
    return values[k - 1];
}

/// Split conformal threshold: Q_{(1-alpha)(1+1/n)} of the labeled scores.
inline double inflated_conformal_threshold(const std::vector<double>& scores, double alpha) {
    if (scores.empty()) throw ValueError("inflated_conformal_threshold: empty input");
    const double n = static_cast<double>(scores.size());
    return empirical_quantile(scores, (1.0 - alpha) * (1.0 + 1.0 / n));
}

/// Smallest value whose cumulative weight reaches `level`; weights of
/// duplicate values are pooled before the scan. +inf when level > 1.
inline double weighted_quantile(const std::vector<double>& values,
                                const std::vector<double>& weights, double level) {
    if (values.empty()) throw ValueError("weighted_quantile: empty input");
    if (values.size() != weights.size())
        throw DimensionError("weighted_quantile: values/weights size mismatch");
    detail::check_finite(values, "weighted_quantile");
    double total = 0.0;
    for (double w : weights) {
        if (std::isnan(w) || w < 0.0) throw ValueError("weighted_quantile: negative weight");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ValueError("weighted_quantile: weights must sum to 1");
    if (level > 1.0 + 1e-12) return kInf;

    std::vector<std::pair<double, double>> atoms(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) atoms[i] = {values[i], weights[i]};
    std::sort(atoms.begin(), atoms.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    double cum = 0.0;
    std::size_t i = 0;
    while (i < atoms.size()) {
        const double v = atoms[i].first;
        double mass = 0.0;
        while (i < atoms.size() && atoms[i].first == v) {
            mass += atoms[i].second;
            ++i;
        }
        cum += mass;
        if (cum >= level - 1e-12) return v;
    }
    return atoms.back().first;  // cumulative rounding left a sliver below 1
}

namespace detail {

inline std::pair<double, double> augmented_bounds_impl(std::vector<double> scores, double alpha,
                                                       bool clamp_low) {
    if (scores.empty()) throw ValueError("augmented_threshold_bounds: empty input");
    check_finite(scores, "augmented_threshold_bounds");
    const std::size_t n = scores.size();
    const double level_plus = (1.0 - alpha) * (1.0 + 1.0 / static_cast<double>(n));
    const std::ptrdiff_t k_plus = level_index(level_plus, n);
    const std::ptrdiff_t k_minus = k_plus - 1;
    std::sort(scores.begin(), scores.end());
    auto pick = [&](std::ptrdiff_t k) {
        if (k > static_cast<std::ptrdiff_t>(n)) return kInf;
        if (k < 1) k = 1;
        return scores[k - 1];
    };
    const double q_minus = (k_minus < 1 && !clamp_low) ? -kInf : pick(k_minus);
    return {q_minus, pick(k_plus)};
}

}  // namespace detail

/// The two cached quantiles bracketing every augmented threshold:
/// q_minus at level (1-alpha)(1+1/n) - 1/n, q_plus at (1-alpha)(1+1/n).
inline std::pair<double, double> augmented_threshold_bounds(std::vector<double> scores,
                                                            double alpha) {
    return detail::augmented_bounds_impl(std::move(scores), alpha, /*clamp_low=*/true);
}

/// Bounds for the exact augmented case split. Identical to
/// augmented_threshold_bounds except that an out-of-sample low rank yields
/// -inf, which keeps the split equal to the brute-force augmented quantile
/// when ceil((1-alpha)(n+1)) = 1.
inline std::pair<double, double> augmented_case_bounds(std::vector<double> scores, double alpha) {
    return detail::augmented_bounds_impl(std::move(scores), alpha, /*clamp_low=*/false);
}

/// Case split for Q_{1-alpha}(scores U {t}) given the cached bounds; exact,
/// ties included.
inline double augmented_threshold_from_bounds(double q_minus, double q_plus,
                                              double test_score) {
    if (test_score <= q_minus) return q_minus;
    if (test_score >= q_plus) return q_plus;
    return test_score;
}

/// Q_{1-alpha} of the multiset scores U {test_score}.
inline double augmented_threshold(const std::vector<double>& scores, double test_score,
                                  double alpha) {
    if (std::isnan(test_score)) throw ValueError("augmented_threshold: NaN test score");
    auto [q_minus, q_plus] = augmented_case_bounds(scores, alpha);
    return augmented_threshold_from_bounds(q_minus, q_plus, test_score);
}

}  // namespace croms::quantile
