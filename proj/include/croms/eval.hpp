#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "croms/common.hpp"
#include "croms/core.hpp"
#include "croms/quantile.hpp"
#include "croms/select.hpp"

namespace croms::eval {

/// Misrobustness slack: strict ">" with an additive tolerance absorbing
/// solver error (closed-form solvers vs projected gradient descent).
inline constexpr double kTolClosedForm = 1e-9;
inline constexpr double kTolPgd = 1e-3;

struct EvalRecord {
    Vector x;
    Label y_true;
    bool covered = false;
    double realized_loss = 0.0;
    double worst_case_loss = 0.0;
    bool misrobust = false;
    int lambda_hat = -1;
    bool set_was_empty = false;
};

inline EvalRecord make_record(const Vector& x, const Label& y_true,
                              const select::SelectionResult& result, const LossSpec& loss_spec,
                              double tol) {
    EvalRecord r;
    r.x = x;
    r.y_true = y_true;
    r.covered = result.set.contains(y_true);
    r.realized_loss = loss(loss_spec, y_true, result.solution.decision);
    r.worst_case_loss = result.solution.worst_case_loss;
    r.misrobust = r.realized_loss > r.worst_case_loss + tol;
    r.lambda_hat = result.lambda_hat;
    r.set_was_empty = result.aux.set_was_empty;
    return r;
}

inline double marginal_miscoverage(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw ValueError("marginal_miscoverage: no records");
    double c = 0.0;
    for (const auto& r : records) c += r.covered ? 0.0 : 1.0;
    return c / records.size();
}

inline double marginal_misrobustness(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw ValueError("marginal_misrobustness: no records");
    double c = 0.0;
    for (const auto& r : records) c += r.misrobust ? 1.0 : 0.0;
    return c / records.size();
}

inline double average_loss(const std::vector<EvalRecord>& records) {
    if (records.empty()) throw ValueError("average_loss: no records");
    double s = 0.0;
    for (const auto& r : records) s += r.realized_loss;
    return s / records.size();
}

// ---------------------------------------------------------------------------
// Conditional metrics
// ---------------------------------------------------------------------------

struct Ball {
    Vector center;
    double radius = 0.0;
    bool radius_bumped = false;  // duplicate covariates forced a positive radius
};

/// Balls with centers drawn from the test covariates and radius set to the
/// mass_percentile quantile of distances to the center, so each ball holds at
/// least that share of the test points.
inline std::vector<Ball> sample_balls(const std::vector<Vector>& test_xs, int count,
                                      double mass_percentile, Rng& rng) {
    if (test_xs.empty()) throw ValueError("sample_balls: empty test set");
    if (!(mass_percentile > 0.0 && mass_percentile < 1.0 + 1e-12))
        throw ValueError("sample_balls: mass percentile must lie in (0,1]");
    std::vector<Ball> balls;
    balls.reserve(count);
    for (int b = 0; b < count; ++b) {
        Ball ball;
        ball.center = test_xs[rng.uniform_index(test_xs.size())];
        std::vector<double> dist(test_xs.size());
        for (std::size_t i = 0; i < test_xs.size(); ++i)
            dist[i] = (test_xs[i] - ball.center).norm();
        ball.radius = quantile::empirical_quantile(dist, mass_percentile);
        if (ball.radius == 0.0) {
            double smallest = kInf;
            for (double d : dist)
                if (d > 0.0 && d < smallest) smallest = d;
            if (smallest < kInf) {
                ball.radius = smallest;
                ball.radius_bumped = true;
            }
        }
        balls.push_back(std::move(ball));
    }
    return balls;
}

enum class RateKind { Miscoverage, Misrobustness };

struct ConditionalRates {
    double worst = 0.0;  // max over balls
    double best = 0.0;   // min over balls (the paper's display)
    int skipped_empty = 0;
};

/// Within-ball failure rates; both extremes are reported and empty balls are
/// skipped with a count.
inline ConditionalRates worst_case_conditional(const std::vector<EvalRecord>& records,
                                               const std::vector<Ball>& balls, RateKind kind) {
    if (records.empty()) throw ValueError("worst_case_conditional: no records");
    ConditionalRates out;
    out.worst = -kInf;
    out.best = kInf;
    for (const auto& ball : balls) {
        int members = 0, failures = 0;
        for (const auto& r : records) {
            if ((r.x - ball.center).norm() > ball.radius) continue;
            ++members;
            const bool fail = kind == RateKind::Miscoverage ? !r.covered : r.misrobust;
            failures += fail ? 1 : 0;
        }
        if (members == 0) {
            ++out.skipped_empty;
            continue;
        }
        const double rate = static_cast<double>(failures) / members;
        out.worst = std::max(out.worst, rate);
        out.best = std::min(out.best, rate);
    }
    if (out.worst == -kInf) throw ValueError("worst_case_conditional: every ball was empty");
    return out;
}

struct GroupSpec {
    std::string name;
    std::function<bool(const Vector&)> contains;
};

/// Per-group mean realized loss; empty groups come back as nullopt.
inline std::vector<std::optional<double>> group_conditional_loss(
    const std::vector<EvalRecord>& records, const std::vector<GroupSpec>& partition) {
    std::vector<std::optional<double>> out(partition.size());
    for (std::size_t g = 0; g < partition.size(); ++g) {
        double total = 0.0;
        int members = 0;
        for (const auto& r : records) {
            if (!partition[g].contains(r.x)) continue;
            total += r.realized_loss;
            ++members;
        }
        if (members > 0) out[g] = total / members;
    }
    return out;
}

namespace detail {

template <typename Pred>
double gap_sum(const std::vector<EvalRecord>& records, const std::vector<GroupSpec>& partition,
               double alpha, Pred&& success) {
    double gap = 0.0;
    for (const auto& group : partition) {
        int members = 0, good = 0;
        for (const auto& r : records) {
            if (!group.contains(r.x)) continue;
            ++members;
            good += success(r) ? 1 : 0;
        }
        if (members == 0) continue;
        gap += std::abs(static_cast<double>(good) / members - (1.0 - alpha));
    }
    return gap;
}

}  // namespace detail

/// Sum over nonempty groups of |within-group coverage - (1-alpha)|.
inline double cov_gap(const std::vector<EvalRecord>& records,
                      const std::vector<GroupSpec>& partition, double alpha) {
    return detail::gap_sum(records, partition, alpha, [](const EvalRecord& r) { return r.covered; });
}

/// Sum over nonempty groups of |within-group robustness - (1-alpha)|.
inline double rob_gap(const std::vector<EvalRecord>& records,
                      const std::vector<GroupSpec>& partition, double alpha) {
    return detail::gap_sum(records, partition, alpha,
                           [](const EvalRecord& r) { return !r.misrobust; });
}

}  // namespace croms::eval
