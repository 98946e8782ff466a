#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "croms/core.hpp"

namespace croms::kernel {

enum class KernelFamily { GaussianSq, Exponential, Box };

/// Kernel H(x1, x2) = K(D(x1, x2) / h). GaussianSq is the simulation default
/// exp(-d^2/h^2); Exponential exp(-d/h) matches the theory sections; Box is
/// the indicator 1{d <= h}. An optional feature map turns D into a Euclidean
/// distance between precomputed features.
struct KernelConfig {
    KernelFamily family = KernelFamily::GaussianSq;
    double bandwidth = 1.0;
    std::function<Vector(const Vector&)> feature_fn;  // empty = identity

    void validate() const {
        if (!(bandwidth > 0.0)) throw ValueError("KernelConfig: bandwidth must be positive");
    }
};

inline double distance(const KernelConfig& cfg, const Vector& x1, const Vector& x2) {
    if (cfg.feature_fn) {
        Vector f1 = cfg.feature_fn(x1), f2 = cfg.feature_fn(x2);
        if (f1.size() != f2.size()) throw DimensionError("kernel: feature dimension mismatch");
        return (f1 - f2).norm();
    }
    if (x1.size() != x2.size()) throw DimensionError("kernel: dimension mismatch");
    return (x1 - x2).norm();
}

inline double kernel_value(const KernelConfig& cfg, const Vector& x1, const Vector& x2) {
    cfg.validate();
    const double d = distance(cfg, x1, x2);
    switch (cfg.family) {
        case KernelFamily::GaussianSq:
            return std::exp(-d * d / (cfg.bandwidth * cfg.bandwidth));
        case KernelFamily::Exponential:
            return std::exp(-d / cfg.bandwidth);
        case KernelFamily::Box:
            return d <= cfg.bandwidth ? 1.0 : 0.0;
    }
    throw ValueError("kernel_value: unknown family");
}

struct WeightResult {
    std::vector<double> weights;
    bool fallback_uniform = false;  // all kernel values were zero
};

/// Normalized localization weights w_i(x) = H(X_i, x) / sum_j H(X_j, x);
/// falls back to uniform weights when every kernel value is zero.
inline WeightResult kernel_weights(const KernelConfig& cfg, const std::vector<Vector>& labeled_xs,
                                   const Vector& x) {
    if (labeled_xs.empty()) throw ValueError("kernel_weights: empty covariate list");
    WeightResult out;
    out.weights.resize(labeled_xs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < labeled_xs.size(); ++i) {
        out.weights[i] = kernel_value(cfg, labeled_xs[i], x);
        total += out.weights[i];
    }
    if (total <= 0.0) {
        out.fallback_uniform = true;
        const double u = 1.0 / static_cast<double>(labeled_xs.size());
        for (auto& w : out.weights) w = u;
        return out;
    }
    for (auto& w : out.weights) w /= total;
    return out;
}

/// Plug-in effective sample size n * E[E[H|X]^2] / E[H^2] with both
/// expectations replaced by pairwise averages over i != j; clamped to [1, n].
inline double effective_sample_size(const std::vector<Vector>& sample_xs,
                                    const KernelConfig& cfg) {
    const std::size_t n = sample_xs.size();
    if (n < 2) throw ValueError("effective_sample_size: need at least two points");
    double outer = 0.0;
    double inner = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double h = kernel_value(cfg, sample_xs[i], sample_xs[j]);
            row += h;
            outer += h * h;
        }
        const double m = row / static_cast<double>(n - 1);
        inner += m * m;
    }
    inner /= static_cast<double>(n);
    outer /= static_cast<double>(n * (n - 1));
    if (outer <= 0.0) return 1.0;  // no kernel mass at all
    const double neff = static_cast<double>(n) * inner / outer;
    return std::clamp(neff, 1.0, static_cast<double>(n));
}

inline std::vector<double> default_c_grid() {
    // 20 log-spaced values in [0.1, 50]
    std::vector<double> grid(20);
    const double lo = std::log(0.1), hi = std::log(50.0);
    for (int i = 0; i < 20; ++i) grid[i] = std::exp(lo + (hi - lo) * i / 19.0);
    return grid;
}

struct BandwidthResult {
    double c = 0.0;
    double bandwidth = 0.0;
    bool saturated = false;  // no grid value reached the target
};

/// Pick the smallest c in the ascending grid with n_eff(c * n^{-1/(d+2)})
/// >= target_neff; returns the largest grid c flagged when none qualifies.
inline BandwidthResult select_bandwidth(const std::vector<Vector>& sample_xs, double target_neff,
                                        KernelConfig cfg, const std::vector<double>& c_grid) {
    if (c_grid.empty()) throw ValueError("select_bandwidth: empty grid");
    if (target_neff < 1.0) throw ValueError("select_bandwidth: target_neff must be >= 1");
    const double n = static_cast<double>(sample_xs.size());
    const double d = static_cast<double>(sample_xs.front().size());
    const double scale = std::pow(n, -1.0 / (d + 2.0));
    BandwidthResult out;
    for (double c : c_grid) {
        cfg.bandwidth = c * scale;
        out.c = c;
        out.bandwidth = cfg.bandwidth;
        if (effective_sample_size(sample_xs, cfg) >= target_neff) return out;
    }
    out.saturated = true;
    return out;
}

}  // namespace croms::kernel
