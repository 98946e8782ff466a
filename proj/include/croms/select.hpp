#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "croms/conformal.hpp"
#include "croms/core.hpp"
#include "croms/cro.hpp"
#include "croms/kernel.hpp"
#include "croms/quantile.hpp"

namespace croms::select {

struct SelectionAux {
    std::vector<double> thresholds;        // per-candidate thresholds used
    std::vector<double> risks;             // per-candidate empirical risks
    std::map<int, int> per_label_lambda;   // augmented selections, keyed by label id
    std::map<int, double> per_label_threshold;
    bool set_was_empty = false;
    bool uniform_weight_fallback = false;
};

struct SelectionResult {
    int lambda_hat = -1;  // -1 when selection is per-label (augmented methods)
    PredictionSetDescriptor set;
    RobustSolution solution;
    SelectionAux aux;
};

// ---------------------------------------------------------------------------
// CRO dispatch
// ---------------------------------------------------------------------------

/// Solve the CRO problem for the sublevel set {y : S(x, y) <= q} of one
/// model. Finite-matrix losses enumerate the label rows; the bilinear loss
/// uses the geometry's closed form.
inline RobustSolution solve_at_threshold(const ScoreModel& model, const Vector& x, double q,
                                         const LossSpec& loss_spec,
                                         const cro::PgdConfig& pgd = {}) {
    if (loss_spec.is_finite_matrix()) {
        const auto& m = loss_spec.matrix().m;
        std::vector<int> ids;
        for (int k = 0; k < m.rows(); ++k)
            if (model.score(x, Label{k}) <= q) ids.push_back(k);
        return cro::solve_finite(m, ids);
    }
    switch (model.geometry) {
        case ScoreGeometry::Box:
            return cro::solve_box_portfolio(model.mean_fn(x), q);
        case ScoreGeometry::Ellipsoid:
            return cro::solve_ellipsoid_portfolio(model.mean_fn(x), model.cov_fn(x), q, pgd);
        default:
            throw ValueError("solve_at_threshold: geometry unsupported for bilinear loss");
    }
}

/// Solve the CRO problem for a concrete set descriptor.
inline RobustSolution solve_for_descriptor(const PredictionSetDescriptor& desc,
                                           const LossSpec& loss_spec,
                                           const cro::PgdConfig& pgd = {}) {
    using D = PredictionSetDescriptor;
    if (const auto* fl = std::get_if<D::FiniteLabels>(&desc.variant))
        return cro::solve_finite(loss_spec.matrix().m, fl->labels);
    if (const auto* b = std::get_if<D::Box>(&desc.variant))
        return cro::solve_box_portfolio(b->center, b->half_width);
    if (const auto* e = std::get_if<D::Ellipsoid>(&desc.variant))
        return cro::solve_ellipsoid_portfolio(e->center, e->cov, e->radius, pgd);
    if (const auto* fp = std::get_if<D::FinitePoints>(&desc.variant)) {
        if (!fp->points.empty()) return cro::solve_finite_points(loss_spec, fp->points, pgd);
        if (!fp->grid) throw ValueError("solve_for_descriptor: empty point set");
        std::vector<Vector> all(fp->grid->total());
        for (int g = 0; g < fp->grid->total(); ++g) all[g] = fp->grid->point(g);
        auto sol = cro::solve_finite_points(loss_spec, all, pgd);
        sol.set_was_empty = true;
        return sol;
    }
    const auto& s = std::get<D::Sublevel>(desc.variant);
    const auto& m = loss_spec.matrix().m;
    std::vector<int> ids;
    for (int k = 0; k < m.rows(); ++k)
        if (s.score_at_x(Label{k}) <= s.threshold) ids.push_back(k);
    return cro::solve_finite(m, ids);
}

/// Loss table of the auxiliary decisions: entry (lambda, i) is
/// phi(Y_i, z_lambda(X_i; q_lambda)).
inline Matrix auxiliary_risks(const std::vector<ScoreModel>& models, const LabeledDataset& labeled,
                              const std::vector<double>& thresholds, const LossSpec& loss_spec,
                              const cro::PgdConfig& pgd = {}) {
    if (models.size() != thresholds.size())
        throw DimensionError("auxiliary_risks: one threshold per model required");
    const int n = static_cast<int>(labeled.size());
    Matrix table(models.size(), n);
    for (std::size_t l = 0; l < models.size(); ++l) {
        for (int i = 0; i < n; ++i) {
            auto sol = solve_at_threshold(models[l], labeled.xs[i], thresholds[l], loss_spec, pgd);
            table(l, i) = loss(loss_spec, labeled.ys[i], sol.decision);
        }
    }
    return table;
}

namespace detail {

inline int argmin_lowest(const std::vector<double>& v) {
    int best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] < v[best]) best = static_cast<int>(i);
    return best;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// E-CROMS
// ---------------------------------------------------------------------------

struct ECromsPrep {
    std::vector<double> thresholds;
    std::vector<double> mean_risks;
    int lambda_hat = 0;
};

inline ECromsPrep e_croms_prepare(const std::vector<ScoreModel>& models,
                                  const LabeledDataset& labeled, const LossSpec& loss_spec,
                                  double alpha, const cro::PgdConfig& pgd = {}) {
    if (models.empty()) throw ValueError("e_croms: no candidate models");
    ECromsPrep prep;
    prep.thresholds.resize(models.size());
    for (std::size_t l = 0; l < models.size(); ++l)
        prep.thresholds[l] =
            quantile::inflated_conformal_threshold(evaluate_scores(models[l], labeled), alpha);
    const Matrix risks = auxiliary_risks(models, labeled, prep.thresholds, loss_spec, pgd);
    prep.mean_risks.resize(models.size());
    for (std::size_t l = 0; l < models.size(); ++l) prep.mean_risks[l] = risks.row(l).mean();
    prep.lambda_hat = detail::argmin_lowest(prep.mean_risks);
    return prep;
}

inline SelectionResult e_croms_apply(const ECromsPrep& prep, const std::vector<ScoreModel>& models,
                                     const Vector& x_test, const LossSpec& loss_spec,
                                     const cro::PgdConfig& pgd = {}) {
    SelectionResult out;
    out.lambda_hat = prep.lambda_hat;
    out.set = conformal::descriptor_for(models[prep.lambda_hat], x_test,
                                        prep.thresholds[prep.lambda_hat]);
    out.solution = solve_for_descriptor(out.set, loss_spec, pgd);
    out.aux.thresholds = prep.thresholds;
    out.aux.risks = prep.mean_risks;
    out.aux.set_was_empty = out.solution.set_was_empty;
    return out;
}

/// ERM model selection over split-conformal auxiliary decisions, then the
/// split set and CRO decision of the winner.
inline SelectionResult e_croms(const std::vector<ScoreModel>& models, const LabeledDataset& labeled,
                               const Vector& x_test, const LossSpec& loss_spec, double alpha,
                               const cro::PgdConfig& pgd = {}) {
    return e_croms_apply(e_croms_prepare(models, labeled, loss_spec, alpha, pgd), models, x_test,
                         loss_spec, pgd);
}

// ---------------------------------------------------------------------------
// F-CROMS core (shared by the classification and discretized-label paths)
// ---------------------------------------------------------------------------

/// Finite label domain as seen by the augmented-ERM engine: positions
/// 0..K-1 index the candidate labels; the adapter maps them to loss values
/// and solves the CRO subproblems (handling the empty set internally).
struct FiniteTask {
    int num_labels = 0;
    std::function<double(int, const Decision&)> phi;
    std::function<RobustSolution(const std::vector<int>&)> solve;
};

/// Cached implementation of the augmented ERM selection: the two bracketing
/// quantiles q-/q+ and their decision tables are precomputed once per labeled
/// set, and each hypothesized label falls into the cached low/high case or a
/// window whose few distinct thresholds are solved lazily and memoized.
class FcromsCore {
public:
    struct Output {
        std::vector<int> members;  // accepted label positions, ascending
        std::map<int, int> per_label_lambda;
        std::map<int, double> per_label_threshold;
        RobustSolution solution;
        bool fell_back_on_empty = false;
    };

    FcromsCore(std::vector<Matrix> labeled_scores, std::vector<int> truth_positions,
               FiniteTask task, double alpha)
        : task_(std::move(task)),
          alpha_(alpha),
          s_(std::move(labeled_scores)),
          y_(std::move(truth_positions)) {
        L_ = static_cast<int>(s_.size());
        if (L_ == 0) throw ValueError("f_croms: no candidate models");
        n_ = static_cast<int>(s_[0].rows());
        K_ = task_.num_labels;
        if (static_cast<int>(y_.size()) != n_) throw DimensionError("f_croms: label count mismatch");

        qm_.resize(L_);
        qp_.resize(L_);
        base_ids_.resize(L_ * n_);
        window_.resize(L_ * n_);
        cache_.resize(L_ * n_);
        base_minus_.assign(L_, 0.0);
        base_plus_.assign(L_, 0.0);

        for (int l = 0; l < L_; ++l) {
            std::vector<double> cal(n_);
            for (int i = 0; i < n_; ++i) cal[i] = s_[l](i, y_[i]);
            auto [qm, qp] = quantile::augmented_case_bounds(cal, alpha_);
            qm_[l] = qm;
            qp_[l] = qp;
            for (int i = 0; i < n_; ++i) {
                std::vector<int> lo_ids, hi_ids;
                auto& window = window_[idx(l, i)];
                for (int k = 0; k < K_; ++k) {
                    const double sc = s_[l](i, k);
                    if (sc <= qm) {
                        lo_ids.push_back(k);
                        hi_ids.push_back(k);
                    } else if (sc <= qp) {
                        hi_ids.push_back(k);
                        if (sc < qp) window.emplace_back(sc, k);
                    }
                }
                std::sort(window.begin(), window.end());
                auto zlo = task_.solve(lo_ids);
                auto zhi = task_.solve(hi_ids);
                base_minus_[l] += task_.phi(y_[i], zlo.decision);
                base_plus_[l] += task_.phi(y_[i], zhi.decision);
                base_ids_[idx(l, i)] = std::move(lo_ids);
                cache_[idx(l, i)].assign(window.size() + 1, std::nullopt);
                cache_[idx(l, i)][0] =
                    PrefixEntry{zlo.decision, task_.phi(y_[i], zlo.decision)};
            }
        }
    }

    double q_minus(int l) const { return qm_[l]; }
    double q_plus(int l) const { return qp_[l]; }

    Output run(const std::vector<Vector>& test_scores) {
        if (static_cast<int>(test_scores.size()) != L_)
            throw DimensionError("f_croms: test score row per model required");
        Output out;
        // low/high decisions at the test point, one pair per model
        std::vector<Decision> zt_lo(L_), zt_hi(L_);
        for (int l = 0; l < L_; ++l) {
            std::vector<int> lo_ids, hi_ids;
            for (int k = 0; k < K_; ++k) {
                if (test_scores[l][k] <= qm_[l]) lo_ids.push_back(k);
                if (test_scores[l][k] <= qp_[l]) hi_ids.push_back(k);
            }
            zt_lo[l] = task_.solve(lo_ids).decision;
            zt_hi[l] = task_.solve(hi_ids).decision;
        }

        for (int y = 0; y < K_; ++y) {
            double best_loss = kInf;
            int best_l = -1;
            double best_q = 0.0;
            for (int l = 0; l < L_; ++l) {
                const double t = test_scores[l][y];
                double total, qhat;
                if (t <= qm_[l]) {
                    total = base_minus_[l] + task_.phi(y, zt_lo[l]);
                    qhat = qm_[l];
                } else if (t >= qp_[l]) {
                    total = base_plus_[l] + task_.phi(y, zt_hi[l]);
                    qhat = qp_[l];
                } else {
                    total = interior_labeled_sum(l, t) + task_.phi(y, interior_test_decision(l, t, test_scores[l]));
                    qhat = t;
                }
                const double avg = total / (n_ + 1);
                if (avg < best_loss) {
                    best_loss = avg;
                    best_l = l;
                    best_q = qhat;
                }
            }
            out.per_label_lambda[y] = best_l;
            out.per_label_threshold[y] = best_q;
            if (test_scores[best_l][y] <= best_q) out.members.push_back(y);
        }

        out.solution = task_.solve(out.members);
        out.fell_back_on_empty = out.solution.set_was_empty;
        return out;
    }

private:
    int idx(int l, int i) const { return l * n_ + i; }

    struct PrefixEntry {
        Decision z;
        double phi_truth;
    };

    const PrefixEntry& prefix_entry(int l, int i, std::size_t prefix) {
        auto& slot = cache_[idx(l, i)][prefix];
        if (!slot) {
            std::vector<int> ids = base_ids_[idx(l, i)];
            const auto& window = window_[idx(l, i)];
            for (std::size_t w = 0; w < prefix; ++w) ids.push_back(window[w].second);
            auto sol = task_.solve(ids);
            slot = PrefixEntry{sol.decision, task_.phi(y_[i], sol.decision)};
        }
        return *slot;
    }

    double interior_labeled_sum(int l, double t) {
        double total = 0.0;
        for (int i = 0; i < n_; ++i) {
            const auto& window = window_[idx(l, i)];
            const std::size_t prefix =
                std::upper_bound(window.begin(), window.end(),
                                 std::make_pair(t, std::numeric_limits<int>::max())) -
                window.begin();
            total += prefix_entry(l, i, prefix).phi_truth;
        }
        return total;
    }

    Decision interior_test_decision(int l, double t, const Vector& test_row) const {
        std::vector<int> ids;
        for (int k = 0; k < K_; ++k)
            if (test_row[k] <= t) ids.push_back(k);
        return task_.solve(ids).decision;
    }

    FiniteTask task_;
    double alpha_;
    int L_ = 0, n_ = 0, K_ = 0;
    std::vector<Matrix> s_;  // per model: n x K scores
    std::vector<int> y_;
    std::vector<double> qm_, qp_;
    std::vector<double> base_minus_, base_plus_;
    std::vector<std::vector<int>> base_ids_;
    std::vector<std::vector<std::pair<double, int>>> window_;
    std::vector<std::vector<std::optional<PrefixEntry>>> cache_;
};

// ---------------------------------------------------------------------------
// F-CROMS, classification
// ---------------------------------------------------------------------------

/// Reusable per-labeled-set state; `run` handles one test point.
class FcromsClassification {
public:
    FcromsClassification(const std::vector<ScoreModel>& models, const LabeledDataset& labeled,
                         std::vector<int> label_space, const LossSpec& loss_spec, double alpha)
        : models_(&models), label_space_(std::move(label_space)), loss_(&loss_spec) {
        if (labeled.kind != TaskKind::Classification)
            throw ValueError("f_croms_classification: classification data required");
        const int n = static_cast<int>(labeled.size());
        const int K = static_cast<int>(label_space_.size());
        std::vector<Matrix> scores(models.size(), Matrix(n, K));
        for (std::size_t l = 0; l < models.size(); ++l)
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < K; ++k)
                    scores[l](i, k) = models[l].score(labeled.xs[i], Label{label_space_[k]});
        std::vector<int> positions(n);
        for (int i = 0; i < n; ++i) {
            const int cls = class_of(labeled.ys[i]);
            auto it = std::find(label_space_.begin(), label_space_.end(), cls);
            if (it == label_space_.end())
                throw ValueError("f_croms_classification: label outside label space");
            positions[i] = static_cast<int>(it - label_space_.begin());
        }
        FiniteTask task;
        task.num_labels = K;
        task.phi = [this](int pos, const Decision& z) {
            return loss_->matrix().m(label_space_[pos], std::get<int>(z));
        };
        task.solve = [this](const std::vector<int>& member_pos) {
            std::vector<int> ids(member_pos.size());
            for (std::size_t j = 0; j < member_pos.size(); ++j) ids[j] = label_space_[member_pos[j]];
            return cro::solve_finite(loss_->matrix().m, ids);
        };
        core_.emplace(std::move(scores), std::move(positions), std::move(task), alpha);
    }

    SelectionResult run(const Vector& x_test) {
        const int K = static_cast<int>(label_space_.size());
        std::vector<Vector> test_scores(models_->size(), Vector(K));
        for (std::size_t l = 0; l < models_->size(); ++l)
            for (int k = 0; k < K; ++k)
                test_scores[l][k] = (*models_)[l].score(x_test, Label{label_space_[k]});
        auto res = core_->run(test_scores);

        SelectionResult out;
        std::vector<int> labels(res.members.size());
        for (std::size_t j = 0; j < res.members.size(); ++j) labels[j] = label_space_[res.members[j]];
        out.set.variant = PredictionSetDescriptor::FiniteLabels{labels};
        out.solution = res.solution;
        for (auto [pos, l] : res.per_label_lambda) out.aux.per_label_lambda[label_space_[pos]] = l;
        for (auto [pos, q] : res.per_label_threshold)
            out.aux.per_label_threshold[label_space_[pos]] = q;
        out.aux.set_was_empty = res.fell_back_on_empty;
        return out;
    }

private:
    const std::vector<ScoreModel>* models_;
    std::vector<int> label_space_;
    const LossSpec* loss_;
    std::optional<FcromsCore> core_;
};

/// Augmented (full-conformal) ERM selection with per-hypothesis thresholds;
/// finite-sample marginal robustness.
inline SelectionResult f_croms_classification(const std::vector<ScoreModel>& models,
                                              const LabeledDataset& labeled, const Vector& x_test,
                                              const std::vector<int>& label_space,
                                              const LossSpec& loss_spec, double alpha) {
    FcromsClassification ctx(models, labeled, label_space, loss_spec, alpha);
    return ctx.run(x_test);
}

// ---------------------------------------------------------------------------
// F-CROMS, regression via label discretization
// ---------------------------------------------------------------------------

struct GridConfig {
    int points_per_dim = 25;
    int max_total = 625;
    double margin_factor = 0.25;
    std::optional<Vector> lo, hi;  // explicit range; must cover the labels
};

inline LabelGrid make_label_grid(const LabeledDataset& labeled, const GridConfig& cfg) {
    if (labeled.kind != TaskKind::Regression)
        throw ValueError("make_label_grid: regression data required");
    const int p = static_cast<int>(vector_of(labeled.ys.front()).size());
    Vector lo = vector_of(labeled.ys.front());
    Vector hi = lo;
    for (const auto& y : labeled.ys) {
        lo = lo.cwiseMin(vector_of(y));
        hi = hi.cwiseMax(vector_of(y));
    }
    LabelGrid grid;
    if (cfg.lo && cfg.hi) {
        for (int j = 0; j < p; ++j)
            if ((*cfg.lo)[j] > lo[j] || (*cfg.hi)[j] < hi[j])
                throw ValueError("make_label_grid: grid range does not cover the labels");
        grid.lo = *cfg.lo;
        grid.hi = *cfg.hi;
    } else {
        Vector margin = cfg.margin_factor * (hi - lo);
        grid.lo = lo - margin;
        grid.hi = hi + margin;
    }
    int per_dim = cfg.points_per_dim;
    const int cap = std::max(1, static_cast<int>(std::floor(
                                    std::pow(double(cfg.max_total), 1.0 / double(p)) + 1e-9)));
    per_dim = std::min(per_dim, cap);
    grid.counts.assign(p, per_dim);
    for (int j = 0; j < p; ++j)
        if (grid.hi[j] == grid.lo[j]) grid.counts[j] = 1;
    return grid;
}

class FcromsRegression {
public:
    FcromsRegression(const std::vector<ScoreModel>& models, const LabeledDataset& labeled,
                     const GridConfig& grid_cfg, const LossSpec& loss_spec, double alpha,
                     const cro::PgdConfig& pgd = {})
        : models_(&models), pgd_(pgd) {
        if (loss_spec.is_finite_matrix())
            throw ValueError("f_croms_regression: bilinear loss required");
        grid_ = std::make_shared<LabelGrid>(make_label_grid(labeled, grid_cfg));
        const int n = static_cast<int>(labeled.size());
        const int G = grid_->total();
        points_.resize(G);
        for (int g = 0; g < G; ++g) points_[g] = grid_->point(g);

        std::vector<Matrix> scores(models.size(), Matrix(n, G));
        for (std::size_t l = 0; l < models.size(); ++l)
            for (int i = 0; i < n; ++i)
                for (int g = 0; g < G; ++g)
                    scores[l](i, g) = models[l].score(labeled.xs[i], Label{points_[g]});
        std::vector<int> positions(n);
        for (int i = 0; i < n; ++i) positions[i] = grid_->nearest(vector_of(labeled.ys[i]));

        FiniteTask task;
        task.num_labels = G;
        task.phi = [this, spec = loss_spec](int pos, const Decision& z) {
            return loss(spec, Label{points_[pos]}, z);
        };
        task.solve = [this, spec = loss_spec](const std::vector<int>& member_pos) {
            if (member_pos.empty()) {
                auto sol = cro::solve_finite_points(spec, points_, pgd_);
                sol.set_was_empty = true;
                return sol;
            }
            std::vector<Vector> pts(member_pos.size());
            for (std::size_t j = 0; j < member_pos.size(); ++j) pts[j] = points_[member_pos[j]];
            return cro::solve_finite_points(spec, pts, pgd_);
        };
        core_.emplace(std::move(scores), std::move(positions), std::move(task), alpha);
    }

    SelectionResult run(const Vector& x_test) {
        const int G = grid_->total();
        std::vector<Vector> test_scores(models_->size(), Vector(G));
        for (std::size_t l = 0; l < models_->size(); ++l)
            for (int g = 0; g < G; ++g)
                test_scores[l][g] = (*models_)[l].score(x_test, Label{points_[g]});
        auto res = core_->run(test_scores);

        SelectionResult out;
        PredictionSetDescriptor::FinitePoints fp;
        fp.grid = grid_;
        fp.grid_ids = res.members;
        fp.points.resize(res.members.size());
        for (std::size_t j = 0; j < res.members.size(); ++j) fp.points[j] = points_[res.members[j]];
        out.set.variant = std::move(fp);
        out.solution = res.solution;
        out.aux.per_label_lambda = res.per_label_lambda;
        out.aux.set_was_empty = res.fell_back_on_empty;
        return out;
    }

    const LabelGrid& grid() const { return *grid_; }

private:
    const std::vector<ScoreModel>* models_;
    cro::PgdConfig pgd_;
    std::shared_ptr<LabelGrid> grid_;
    std::vector<Vector> points_;
    std::optional<FcromsCore> core_;
};

/// Discretized-label F-CROMS: labels map to their nearest grid point, the
/// augmented ERM runs over the grid, and the decision is the finite-points
/// CRO over the accepted grid points.
inline SelectionResult f_croms_regression(const std::vector<ScoreModel>& models,
                                          const LabeledDataset& labeled, const Vector& x_test,
                                          const GridConfig& grid_cfg, const LossSpec& loss_spec,
                                          double alpha, const cro::PgdConfig& pgd = {}) {
    FcromsRegression ctx(models, labeled, grid_cfg, loss_spec, alpha, pgd);
    return ctx.run(x_test);
}

// ---------------------------------------------------------------------------
// E2E baseline (sample splitting)
// ---------------------------------------------------------------------------

struct E2EPrep {
    int lambda_hat = 0;
    double calibration_threshold = 0.0;
    std::vector<double> selection_risks;
};

inline E2EPrep e2e_prepare(const std::vector<ScoreModel>& models, const LabeledDataset& labeled,
                           double split_fraction, const LossSpec& loss_spec, double alpha,
                           Rng& rng, const cro::PgdConfig& pgd = {}) {
    if (models.empty()) throw ValueError("e2e: no candidate models");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
        throw ValueError("e2e: split fraction must lie in (0,1)");
    const int n = static_cast<int>(labeled.size());
    const int n0 = static_cast<int>(std::floor(split_fraction * n));
    if (n0 < 1 || n - n0 < 1) throw ValueError("e2e: a split part is empty");

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.uniform_index(i + 1));
        std::swap(perm[i], perm[j]);
    }
    LabeledDataset part1, part2;
    part1.kind = part2.kind = labeled.kind;
    for (int i = 0; i < n; ++i) {
        auto& dst = i < n0 ? part1 : part2;
        dst.xs.push_back(labeled.xs[perm[i]]);
        dst.ys.push_back(labeled.ys[perm[i]]);
    }

    auto sel = e_croms_prepare(models, part1, loss_spec, alpha, pgd);
    E2EPrep prep;
    prep.lambda_hat = sel.lambda_hat;
    prep.selection_risks = sel.mean_risks;
    // calibrating on scores U {inf} equals the inflated quantile over part2
    prep.calibration_threshold = quantile::inflated_conformal_threshold(
        evaluate_scores(models[sel.lambda_hat], part2), alpha);
    return prep;
}

inline SelectionResult e2e_apply(const E2EPrep& prep, const std::vector<ScoreModel>& models,
                                 const Vector& x_test, const LossSpec& loss_spec,
                                 const cro::PgdConfig& pgd = {}) {
    SelectionResult out;
    out.lambda_hat = prep.lambda_hat;
    out.set = conformal::descriptor_for(models[prep.lambda_hat], x_test,
                                        prep.calibration_threshold);
    out.solution = solve_for_descriptor(out.set, loss_spec, pgd);
    out.aux.thresholds = {prep.calibration_threshold};
    out.aux.risks = prep.selection_risks;
    out.aux.set_was_empty = out.solution.set_was_empty;
    return out;
}

/// Sample-splitting baseline: the first shuffled part selects the model by
/// ERM, the second calibrates its split set.
inline SelectionResult e2e(const std::vector<ScoreModel>& models, const LabeledDataset& labeled,
                           const Vector& x_test, double split_fraction, const LossSpec& loss_spec,
                           double alpha, Rng& rng, const cro::PgdConfig& pgd = {}) {
    return e2e_apply(e2e_prepare(models, labeled, split_fraction, loss_spec, alpha, rng, pgd),
                     models, x_test, loss_spec, pgd);
}

// ---------------------------------------------------------------------------
// Random-model baselines
// ---------------------------------------------------------------------------

inline SelectionResult naive_cp(const std::vector<ScoreModel>& models,
                                const LabeledDataset& labeled, const Vector& x_test,
                                const LossSpec& loss_spec, double alpha, Rng& rng,
                                const cro::PgdConfig& pgd = {}) {
    if (models.empty()) throw ValueError("naive_cp: no candidate models");
    const int l = static_cast<int>(rng.uniform_index(models.size()));
    SelectionResult out;
    out.lambda_hat = l;
    out.set = conformal::split_set(models[l], labeled, alpha, x_test);
    out.solution = solve_for_descriptor(out.set, loss_spec, pgd);
    out.aux.set_was_empty = out.solution.set_was_empty;
    return out;
}

inline SelectionResult naive_lcp(const std::vector<ScoreModel>& models,
                                 const LabeledDataset& labeled, const Vector& x_test,
                                 const kernel::KernelConfig& kcfg, const LossSpec& loss_spec,
                                 double alpha, Rng& rng, const cro::PgdConfig& pgd = {}) {
    if (models.empty()) throw ValueError("naive_lcp: no candidate models");
    const int l = static_cast<int>(rng.uniform_index(models.size()));
    auto w = kernel::kernel_weights(kcfg, labeled.xs, x_test);
    SelectionResult out;
    out.lambda_hat = l;
    out.set = conformal::lcp_set(models[l], labeled, w.weights, alpha, x_test);
    out.solution = solve_for_descriptor(out.set, loss_spec, pgd);
    out.aux.set_was_empty = out.solution.set_was_empty;
    out.aux.uniform_weight_fallback = w.fallback_uniform;
    return out;
}

// ---------------------------------------------------------------------------
// CROiMS
// ---------------------------------------------------------------------------

struct CroimsPrep {
    std::vector<std::vector<double>> scores;  // per model: labeled scores
    Matrix aux_loss;                          // |Lambda| x n
};

inline CroimsPrep croims_prepare(const std::vector<ScoreModel>& models,
                                 const LabeledDataset& labeled, const kernel::KernelConfig& kcfg,
                                 const LossSpec& loss_spec, double alpha,
                                 const cro::PgdConfig& pgd = {}) {
    if (models.empty()) throw ValueError("croims: no candidate models");
    const int n = static_cast<int>(labeled.size());
    CroimsPrep prep;
    prep.scores.resize(models.size());
    for (std::size_t l = 0; l < models.size(); ++l)
        prep.scores[l] = evaluate_scores(models[l], labeled);
    prep.aux_loss.resize(models.size(), n);
    for (int i = 0; i < n; ++i) {
        const auto w = kernel::kernel_weights(kcfg, labeled.xs, labeled.xs[i]);
        for (std::size_t l = 0; l < models.size(); ++l) {
            const double q = quantile::weighted_quantile(prep.scores[l], w.weights, 1.0 - alpha);
            auto sol = solve_at_threshold(models[l], labeled.xs[i], q, loss_spec, pgd);
            prep.aux_loss(l, i) = loss(loss_spec, labeled.ys[i], sol.decision);
        }
    }
    return prep;
}

inline SelectionResult croims_apply(const CroimsPrep& prep, const std::vector<ScoreModel>& models,
                                    const LabeledDataset& labeled, const Vector& x_test,
                                    const kernel::KernelConfig& kcfg, const LossSpec& loss_spec,
                                    double alpha, const cro::PgdConfig& pgd = {}) {
    const auto w = kernel::kernel_weights(kcfg, labeled.xs, x_test);
    std::vector<double> risks(models.size(), 0.0);
    for (std::size_t l = 0; l < models.size(); ++l)
        for (std::size_t i = 0; i < w.weights.size(); ++i)
            risks[l] += w.weights[i] * prep.aux_loss(l, i);
    const int lhat = detail::argmin_lowest(risks);

    SelectionResult out;
    out.lambda_hat = lhat;
    const double q = quantile::weighted_quantile(prep.scores[lhat], w.weights, 1.0 - alpha);
    out.set = conformal::descriptor_for(models[lhat], x_test, q);
    out.solution = solve_for_descriptor(out.set, loss_spec, pgd);
    out.aux.thresholds = {q};
    out.aux.risks = risks;
    out.aux.set_was_empty = out.solution.set_was_empty;
    out.aux.uniform_weight_fallback = w.fallback_uniform;
    return out;
}

/// Individualized model selection: kernel-weighted ERM over localized
/// auxiliary decisions, then the LCP set of the winner at the test point.
inline SelectionResult croims(const std::vector<ScoreModel>& models, const LabeledDataset& labeled,
                              const Vector& x_test, const kernel::KernelConfig& kcfg,
                              const LossSpec& loss_spec, double alpha,
                              const cro::PgdConfig& pgd = {}) {
    return croims_apply(croims_prepare(models, labeled, kcfg, loss_spec, alpha, pgd), models,
                        labeled, x_test, kcfg, loss_spec, alpha, pgd);
}

inline int croims_select_lambda(const std::vector<ScoreModel>& models,
                                const LabeledDataset& labeled, const Vector& x_test,
                                const kernel::KernelConfig& kcfg, const LossSpec& loss_spec,
                                double alpha, const cro::PgdConfig& pgd = {}) {
    const auto prep = croims_prepare(models, labeled, kcfg, loss_spec, alpha, pgd);
    const auto w = kernel::kernel_weights(kcfg, labeled.xs, x_test);
    std::vector<double> risks(models.size(), 0.0);
    for (std::size_t l = 0; l < models.size(); ++l)
        for (std::size_t i = 0; i < w.weights.size(); ++i)
            risks[l] += w.weights[i] * prep.aux_loss(l, i);
    return detail::argmin_lowest(risks);
}

// ---------------------------------------------------------------------------
// F-CROiMS (swapped full-conformal correction of CROiMS)
// ---------------------------------------------------------------------------

/// Swapped-dataset correction restoring finite-sample marginal robustness on
/// top of CROiMS. Cost is |Y| * n CROiMS reruns; the budget guard refuses
/// configurations beyond `budget` label-point-model units.
inline SelectionResult f_croims(const std::vector<ScoreModel>& models,
                                const LabeledDataset& labeled, const Vector& x_test,
                                const std::vector<int>& label_space,
                                const kernel::KernelConfig& kcfg, const LossSpec& loss_spec,
                                double alpha, const cro::PgdConfig& pgd = {},
                                double budget = 1e5) {
    if (labeled.kind != TaskKind::Classification)
        throw ValueError("f_croims: classification data required");
    const int n = static_cast<int>(labeled.size());
    const double cost = double(label_space.size()) * double(n) * double(models.size());
    if (cost > budget)
        throw BudgetError("f_croims: |Y|*n*|Lambda| exceeds the configured budget");

    SelectionResult base = croims(models, labeled, x_test, kcfg, loss_spec, alpha, pgd);
    const int lhat = base.lambda_hat;

    std::vector<int> members;
    SelectionAux aux;
    aux.uniform_weight_fallback = base.aux.uniform_weight_fallback;
    for (int y : label_space) {
        std::vector<double> swapped_scores(n);
        for (int j = 0; j < n; ++j) {
            LabeledDataset swapped = labeled;
            swapped.xs[j] = x_test;
            swapped.ys[j] = Label{y};
            const int lj = croims_select_lambda(models, swapped, labeled.xs[j], kcfg, loss_spec,
                                                alpha, pgd);
            swapped_scores[j] = models[lj].score(labeled.xs[j], labeled.ys[j]);
            if (j == 0) aux.per_label_lambda[y] = lj;  // diagnostic: first swap's pick
        }
        const double thr = quantile::inflated_conformal_threshold(swapped_scores, alpha);
        aux.per_label_threshold[y] = thr;
        if (models[lhat].score(x_test, Label{y}) <= thr) members.push_back(y);
    }

    SelectionResult out;
    out.lambda_hat = lhat;
    out.set.variant = PredictionSetDescriptor::FiniteLabels{members};
    out.solution = cro::solve_finite(loss_spec.matrix().m, members);
    out.aux = std::move(aux);
    out.aux.set_was_empty = out.solution.set_was_empty;
    return out;
}

/// Per-swap selected indices for one hypothesized label; exposed for the
/// symmetry checks.
inline std::vector<int> f_croims_swapped_selection(const std::vector<ScoreModel>& models,
                                                   const LabeledDataset& labeled,
                                                   const Vector& x_test, int label,
                                                   const kernel::KernelConfig& kcfg,
                                                   const LossSpec& loss_spec, double alpha,
                                                   const cro::PgdConfig& pgd = {}) {
    const int n = static_cast<int>(labeled.size());
    std::vector<int> picks(n);
    for (int j = 0; j < n; ++j) {
        LabeledDataset swapped = labeled;
        swapped.xs[j] = x_test;
        swapped.ys[j] = Label{label};
        picks[j] =
            croims_select_lambda(models, swapped, labeled.xs[j], kcfg, loss_spec, alpha, pgd);
    }
    return picks;
}

}  // namespace croms::select
