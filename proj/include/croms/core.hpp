#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "croms/common.hpp"

namespace croms {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A label is either a dense class index in {0..K-1} or a real p-vector.
using Label = std::variant<int, Vector>;

inline int class_of(const Label& y) {
    if (!std::holds_alternative<int>(y)) throw ValueError("label is not a class index");
    return std::get<int>(y);
}

inline const Vector& vector_of(const Label& y) {
    if (!std::holds_alternative<Vector>(y)) throw ValueError("label is not a vector");
    return std::get<Vector>(y);
}

enum class TaskKind { Classification, Regression };

struct LabeledDataset {
    std::vector<Vector> xs;
    std::vector<Label> ys;
    TaskKind kind = TaskKind::Classification;

    std::size_t size() const { return xs.size(); }

    void validate() const {
        if (xs.empty() || xs.size() != ys.size())
            throw DimensionError("LabeledDataset: |xs| = |ys| >= 1 required");
        const auto d = xs.front().size();
        for (const auto& x : xs)
            if (x.size() != d) throw DimensionError("LabeledDataset: ragged covariates");
        if (kind == TaskKind::Regression) {
            const auto p = vector_of(ys.front()).size();
            for (const auto& y : ys)
                if (vector_of(y).size() != p) throw DimensionError("LabeledDataset: ragged labels");
        }
    }
};

// ---------------------------------------------------------------------------
// Score models
// ---------------------------------------------------------------------------

enum class ScoreGeometry { None, Box, Ellipsoid, Softmax };

/// A candidate nonconformity score S(x, y). The geometry hint tells the set
/// constructors and solvers which closed form applies; `None` models expose
/// only the raw score function. All members are immutable after construction.
struct ScoreModel {
    int id = 0;
    ScoreGeometry geometry = ScoreGeometry::None;
    int num_labels = 0;  // classification label count; 0 for regression

    std::function<Vector(const Vector&)> mean_fn;  // box / ellipsoid
    std::function<Matrix(const Vector&)> cov_fn;   // ellipsoid (SPD)
    std::function<Vector(const Vector&)> prob_fn;  // softmax (K-simplex output)
    std::function<double(const Vector&, const Label&)> score_fn;  // geometry None

    double score(const Vector& x, const Label& y) const {
        switch (geometry) {
            case ScoreGeometry::Box: {
                const Vector& yv = vector_of(y);
                Vector mu = mean_fn(x);
                if (mu.size() != yv.size())
                    throw DimensionError("ScoreModel: label/mean dimension mismatch");
                return (yv - mu).lpNorm<Eigen::Infinity>();
            }
            case ScoreGeometry::Ellipsoid: {
                // Squared form (y-mu)' Sigma^{-1} (y-mu); thresholds live in
                // squared units throughout.
                const Vector& yv = vector_of(y);
                Vector mu = mean_fn(x);
                Matrix sigma = cov_fn(x);
                if (mu.size() != yv.size() || sigma.rows() != yv.size() || sigma.cols() != yv.size())
                    throw DimensionError("ScoreModel: ellipsoid dimension mismatch");
                Eigen::LLT<Matrix> llt(sigma);
                if (llt.info() != Eigen::Success)
                    throw ValueError("ScoreModel: covariance is not SPD");
                Vector r = yv - mu;
                return r.dot(llt.solve(r));
            }
            case ScoreGeometry::Softmax: {
                const int k = class_of(y);
                Vector p = prob_fn(x);
                if (k < 0 || k >= p.size())
                    throw DimensionError("ScoreModel: class index out of range");
                return 1.0 - p[k];
            }
            case ScoreGeometry::None:
                return score_fn(x, y);
        }
        throw ValueError("ScoreModel: unknown geometry");
    }
};

inline std::vector<double> evaluate_scores(const ScoreModel& model, const LabeledDataset& data) {
    data.validate();
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out[i] = model.score(data.xs[i], data.ys[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Decision losses
// ---------------------------------------------------------------------------

/// phi(y, z): either a finite |Y| x |Z| matrix lookup or the bilinear
/// portfolio loss -y'z on the probability simplex.
struct LossSpec {
    struct FiniteMatrix {
        Matrix m;  // rows = labels, columns = decisions
        std::vector<std::string> decisions;
    };
    struct BilinearPortfolio {
        int p = 0;
    };
    std::variant<FiniteMatrix, BilinearPortfolio> variant;

    static LossSpec finite(Matrix m, std::vector<std::string> decisions = {}) {
        if (!m.allFinite()) throw ValueError("LossSpec: matrix entries must be finite");
        if (decisions.empty())
            for (int z = 0; z < m.cols(); ++z) decisions.push_back("z" + std::to_string(z + 1));
        if (static_cast<int>(decisions.size()) != m.cols())
            throw DimensionError("LossSpec: decision names do not match columns");
        return LossSpec{FiniteMatrix{std::move(m), std::move(decisions)}};
    }

    static LossSpec bilinear(int p) {
        if (p < 1) throw DimensionError("LossSpec: portfolio dimension must be positive");
        return LossSpec{BilinearPortfolio{p}};
    }

    bool is_finite_matrix() const { return std::holds_alternative<FiniteMatrix>(variant); }
    const FiniteMatrix& matrix() const { return std::get<FiniteMatrix>(variant); }
    int portfolio_dim() const { return std::get<BilinearPortfolio>(variant).p; }
    int num_decisions() const { return is_finite_matrix() ? int(matrix().m.cols()) : portfolio_dim(); }
};

/// A decision is a column index for matrix losses or a simplex vector for
/// the portfolio loss.
using Decision = std::variant<int, Vector>;

inline double loss(const LossSpec& spec, const Label& y, const Decision& z) {
    if (spec.is_finite_matrix()) {
        const auto& m = spec.matrix().m;
        const int yi = class_of(y);
        const int zi = std::get<int>(z);
        if (yi < 0 || yi >= m.rows() || zi < 0 || zi >= m.cols())
            throw DimensionError("loss: index out of range");
        return m(yi, zi);
    }
    const Vector& yv = vector_of(y);
    const Vector& zv = std::get<Vector>(z);
    if (yv.size() != zv.size()) throw DimensionError("loss: dimension mismatch");
    return -yv.dot(zv);
}

// ---------------------------------------------------------------------------
// Prediction sets and robust solutions
// ---------------------------------------------------------------------------

/// Regular grid over R^p used by the discretized label space; maps any label
/// vector to its nearest grid point.
struct LabelGrid {
    Vector lo, hi;
    std::vector<int> counts;

    int total() const {
        int t = 1;
        for (int c : counts) t *= c;
        return t;
    }

    double step(int j) const {
        return counts[j] > 1 ? (hi[j] - lo[j]) / (counts[j] - 1) : 0.0;
    }

    Vector point(int flat) const {
        Vector v(lo.size());
        for (int j = int(lo.size()) - 1; j >= 0; --j) {
            const int idx = flat % counts[j];
            flat /= counts[j];
            v[j] = counts[j] > 1 ? lo[j] + step(j) * idx : lo[j];
        }
        return v;
    }

    int nearest(const Vector& y) const {
        if (y.size() != lo.size()) throw DimensionError("LabelGrid: dimension mismatch");
        int flat = 0;
        for (int j = 0; j < lo.size(); ++j) {
            int idx = 0;
            if (counts[j] > 1) {
                idx = static_cast<int>(std::lround((y[j] - lo[j]) / step(j)));
                idx = std::clamp(idx, 0, counts[j] - 1);
            }
            flat = flat * counts[j] + idx;
        }
        return flat;
    }
};

/// A prediction set as a sublevel set {S(x, .) <= q}, specialized per score
/// geometry. Emptiness is representable (empty label list, negative
/// threshold); half_width / radius may be +inf for the trivial set.
struct PredictionSetDescriptor {
    struct FiniteLabels {
        std::vector<int> labels;  // sorted class indices
    };
    struct Box {
        Vector center;
        double half_width = 0.0;
    };
    struct Ellipsoid {
        Vector center;
        Matrix cov;
        double radius = 0.0;  // threshold in squared-score units
    };
    struct FinitePoints {
        std::vector<Vector> points;
        std::shared_ptr<const LabelGrid> grid;  // for membership of off-grid labels
        std::vector<int> grid_ids;              // flat ids parallel to points
    };
    struct Sublevel {
        int model_id = 0;
        double threshold = 0.0;
        std::function<double(const Label&)> score_at_x;  // score with x bound
    };

    std::variant<FiniteLabels, Box, Ellipsoid, FinitePoints, Sublevel> variant;

    bool contains(const Label& y) const {
        if (const auto* fl = std::get_if<FiniteLabels>(&variant)) {
            const int k = class_of(y);
            return std::binary_search(fl->labels.begin(), fl->labels.end(), k);
        }
        if (const auto* b = std::get_if<Box>(&variant)) {
            return (vector_of(y) - b->center).lpNorm<Eigen::Infinity>() <= b->half_width;
        }
        if (const auto* e = std::get_if<Ellipsoid>(&variant)) {
            if (std::isinf(e->radius)) return true;
            Vector r = vector_of(y) - e->center;
            Eigen::LLT<Matrix> llt(e->cov);
            return r.dot(llt.solve(r)) <= e->radius;
        }
        if (const auto* fp = std::get_if<FinitePoints>(&variant)) {
            if (fp->grid) {
                const int id = fp->grid->nearest(vector_of(y));
                return std::binary_search(fp->grid_ids.begin(), fp->grid_ids.end(), id);
            }
            const Vector& yv = vector_of(y);
            for (const auto& p : fp->points)
                if ((p - yv).norm() == 0.0) return true;
            return false;
        }
        const auto& s = std::get<Sublevel>(variant);
        return s.score_at_x(y) <= s.threshold;
    }
};

/// CRO output: the chosen decision and its worst-case loss over the set.
/// `set_was_empty` marks the full-space fallback taken on empty sets.
struct RobustSolution {
    Decision decision;
    double worst_case_loss = 0.0;
    bool set_was_empty = false;
};

}  // namespace croms
