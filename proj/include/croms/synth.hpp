#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "croms/common.hpp"
#include "croms/core.hpp"

namespace croms::synth {

// ---------------------------------------------------------------------------
// Built-in coefficient and loss matrices
// ---------------------------------------------------------------------------

inline Matrix avg_classification_coeff() {
    Matrix a(5, 8);
    a << 0, 1, 0, 0, 2, 3, 3, 3,
         0, 1, 1, 4, 0, 0, 2, 5,
         0, 1, 6, -4, 6, -5, 7, -4,
         1, -1, 0, 3, 1, 5, 4, 1,
         1, -1, 1, 6, 0, 3, 2, 4;
    return a;
}

inline Matrix avg_classification_loss() {
    Matrix m(5, 5);
    m << 0, 3, 5, 7, 10,
         2, 0, 4, 6, 9,
         2.5, 4.5, 0, 7, 8,
         3, 5, 6, 0, 7,
         3.5, 6, 8, 10, 0;
    return m;
}

inline Matrix ind_classification_betas() {
    Matrix b(3, 3);
    b << 1, 5, 6,
         5, 1, 6,
         4, 4, 4;
    return b;
}

inline Matrix ind_classification_cov() {
    Matrix l(3, 3);
    l << 1.5, 0.1, -0.2,
         0.1, 2.0, 0.4,
         -0.2, 0.4, 3.0;
    return l * l.transpose();
}

inline Matrix ind_classification_loss() {
    Matrix m(3, 3);
    m << 0, 4, 10,
         2, 0, 9,
         7, 6, 0;
    return m;
}

inline Matrix regression_noise_cov() {
    Matrix l(2, 2);
    l << 1.0, 0.5,
         0.5, 4.0;
    return 0.25 * (l * l.transpose());
}

/// Diagnosis loss matrix: rows Normal, COVID-19, Pneumonia, Lung Opacity;
/// columns No Action, Antibiotics, Quarantine, Additional Testing.
inline Matrix diagnosis_loss_table() {
    Matrix m(4, 4);
    m << 0, 8, 8, 6,
         10, 7, 0, 2,
         10, 0, 7, 3,
         9, 6, 6, 0;
    return m;
}

inline std::vector<std::string> diagnosis_decision_names() {
    return {"No Action", "Antibiotics", "Quarantine", "Additional Testing"};
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

namespace detail {

inline int sample_categorical(const Vector& probs, Rng& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    for (int k = 0; k < probs.size(); ++k) {
        cum += probs[k];
        if (u < cum) return k;
    }
    return static_cast<int>(probs.size()) - 1;
}

inline Vector softmax_of_neg(const Vector& v) {
    Vector w = -v;
    const double m = w.maxCoeff();
    Vector e = (w.array() - m).exp();
    return e / e.sum();
}

inline Vector sample_mvn(const Vector& mean, const Eigen::LLT<Matrix>& llt, Rng& rng) {
    Vector z(mean.size());
    for (int j = 0; j < z.size(); ++j) z[j] = rng.normal();
    return mean + llt.matrixL() * z;
}

}  // namespace detail

struct AvgClassificationSpec {
    Matrix a = avg_classification_coeff();  // 5 x 8
};

/// Class probabilities p(Y=k|x) proportional to exp(-v_k(x)) where
/// v_k(x) = A_k1 + A_k2 x1 + (A_k3 + A_k4 x2) x5 + (A_k5 + A_k6 x3) x6
///        + (A_k7 + A_k8 x4) x7.
inline Vector avg_classification_probs(const Matrix& a, const Vector& x) {
    if (a.rows() != 5 || a.cols() != 8) throw DimensionError("avg_classification: A must be 5x8");
    if (x.size() != 7) throw DimensionError("avg_classification: covariate must be 7-dim");
    Vector v(5);
    for (int k = 0; k < 5; ++k) {
        v[k] = a(k, 0) + a(k, 1) * x[0] + (a(k, 2) + a(k, 3) * x[1]) * x[4] +
               (a(k, 4) + a(k, 5) * x[2]) * x[5] + (a(k, 6) + a(k, 7) * x[3]) * x[6];
    }
    return detail::softmax_of_neg(v);
}

/// Covariates: x1..x4 fair 0/1 coins, x5..x7 standard normal, independent.
inline LabeledDataset gen_avg_classification(const AvgClassificationSpec& spec, int n, Rng& rng) {
    LabeledDataset data;
    data.kind = TaskKind::Classification;
    data.xs.reserve(n);
    data.ys.reserve(n);
    for (int i = 0; i < n; ++i) {
        Vector x(7);
        for (int j = 0; j < 4; ++j) x[j] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        for (int j = 4; j < 7; ++j) x[j] = rng.normal();
        const Vector probs = avg_classification_probs(spec.a, x);
        data.xs.push_back(std::move(x));
        data.ys.emplace_back(detail::sample_categorical(probs, rng));
    }
    return data;
}

struct IndClassificationSpec {
    Matrix betas = ind_classification_betas();  // rows are beta_k
    Matrix sigma = ind_classification_cov();
};

inline Vector ind_classification_probs(const Matrix& betas, const Vector& x) {
    if (betas.cols() != x.size()) throw DimensionError("ind_classification: dimension mismatch");
    return detail::softmax_of_neg(betas * x);
}

/// X ~ N(0, Sigma), p(Y=k|X) proportional to exp(-beta_k' X), 3 classes.
inline LabeledDataset gen_ind_classification(const IndClassificationSpec& spec, int n, Rng& rng) {
    Eigen::LLT<Matrix> llt(spec.sigma);
    if (llt.info() != Eigen::Success) throw ValueError("ind_classification: Sigma is not SPD");
    LabeledDataset data;
    data.kind = TaskKind::Classification;
    data.xs.reserve(n);
    data.ys.reserve(n);
    const Vector zero = Vector::Zero(spec.sigma.rows());
    for (int i = 0; i < n; ++i) {
        Vector x = detail::sample_mvn(zero, llt, rng);
        const Vector probs = ind_classification_probs(spec.betas, x);
        data.xs.push_back(std::move(x));
        data.ys.emplace_back(detail::sample_categorical(probs, rng));
    }
    return data;
}

struct RegressionShiftSpec {
    Vector x_mean = (Vector(2) << 1.0, 1.0).finished();
    Matrix x_cov = 2.25 * Matrix::Identity(2, 2);
    Matrix noise_cov = regression_noise_cov();
};

inline Vector regression_mean_response(const Vector& x) {
    Vector y(2);
    y[0] = -x[0] - x[1] * x[1];
    y[1] = -x[0] * x[0] - x[1];
    return y;
}

/// y1 = -x1 - x2^2 + e1, y2 = -x1^2 - x2 + e2 with e ~ N(0, noise_cov).
inline LabeledDataset gen_regression_shift(const RegressionShiftSpec& spec, int n, Rng& rng) {
    Eigen::LLT<Matrix> llt_x(spec.x_cov);
    Eigen::LLT<Matrix> llt_e(spec.noise_cov);
    if (llt_x.info() != Eigen::Success || llt_e.info() != Eigen::Success)
        throw ValueError("regression_shift: covariance is not SPD");
    LabeledDataset data;
    data.kind = TaskKind::Regression;
    data.xs.reserve(n);
    data.ys.reserve(n);
    const Vector zero2 = Vector::Zero(2);
    for (int i = 0; i < n; ++i) {
        Vector x = detail::sample_mvn(spec.x_mean, llt_x, rng);
        Vector eps = detail::sample_mvn(zero2, llt_e, rng);
        Vector y = regression_mean_response(x) + eps;
        data.xs.push_back(std::move(x));
        data.ys.emplace_back(std::move(y));
    }
    return data;
}

// ---------------------------------------------------------------------------
// Trainers
// ---------------------------------------------------------------------------

struct LogitConfig {
    int epochs = 400;
    double learning_rate = 0.5;
    double grad_tol = 1e-7;
};

/// Multinomial logistic regression on an intercept plus the given covariate
/// subset, fit by full-batch gradient descent on the cross-entropy. Zero
/// initialization keeps training deterministic. Returns a softmax-geometry
/// model; `converged` (optional) reports whether the gradient tolerance was
/// reached within the epoch budget (the best iterate is returned either way).
inline ScoreModel train_multinomial_logit(const LabeledDataset& data,
                                          std::vector<int> feature_subset,
                                          const LogitConfig& cfg = {},
                                          bool* converged = nullptr) {
    data.validate();
    if (data.kind != TaskKind::Classification)
        throw ValueError("train_multinomial_logit: classification data required");
    const int n = static_cast<int>(data.size());
    const int d = static_cast<int>(data.xs.front().size());
    std::sort(feature_subset.begin(), feature_subset.end());
    for (int f : feature_subset)
        if (f < 0 || f >= d) throw DimensionError("train_multinomial_logit: feature out of range");
    int num_classes = 0;
    for (const auto& y : data.ys) num_classes = std::max(num_classes, class_of(y) + 1);

    const int s = static_cast<int>(feature_subset.size());
    Matrix phi(n, s + 1);  // intercept-first design
    for (int i = 0; i < n; ++i) {
        phi(i, 0) = 1.0;
        for (int j = 0; j < s; ++j) phi(i, j + 1) = data.xs[i][feature_subset[j]];
    }

    Matrix w = Matrix::Zero(num_classes, s + 1);
    Matrix best_w = w;
    double best_nll = kInf;
    bool ok = false;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Matrix logits = phi * w.transpose();  // n x K
        Matrix probs(n, num_classes);
        double nll = 0.0;
        for (int i = 0; i < n; ++i) {
            const double m = logits.row(i).maxCoeff();
            Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
            probs.row(i) = e / e.sum();
            nll -= std::log(std::max(probs(i, class_of(data.ys[i])), 1e-300));
        }
        nll /= n;
        if (nll < best_nll) {
            best_nll = nll;
            best_w = w;
        }
        Matrix resid = probs;
        for (int i = 0; i < n; ++i) resid(i, class_of(data.ys[i])) -= 1.0;
        Matrix grad = resid.transpose() * phi / n;
        if (grad.cwiseAbs().maxCoeff() < cfg.grad_tol) {
            ok = true;
            break;
        }
        w -= cfg.learning_rate * grad;
    }
    if (converged) *converged = ok;

    ScoreModel model;
    model.geometry = ScoreGeometry::Softmax;
    model.num_labels = num_classes;
    model.prob_fn = [w = best_w, feature_subset, s](const Vector& x) {
        Vector f(s + 1);
        f[0] = 1.0;
        for (int j = 0; j < s; ++j) f[j + 1] = x[feature_subset[j]];
        Vector logits = w * f;
        const double m = logits.maxCoeff();
        Vector e = (logits.array() - m).exp();
        return Vector(e / e.sum());
    };
    return model;
}

namespace detail {

inline Matrix least_squares_coeff(const LabeledDataset& data) {
    const int n = static_cast<int>(data.size());
    const int d = static_cast<int>(data.xs.front().size());
    const int p = static_cast<int>(vector_of(data.ys.front()).size());
    Matrix z(n, d + 1);
    Matrix y(n, p);
    for (int i = 0; i < n; ++i) {
        z(i, 0) = 1.0;
        z.row(i).tail(d) = data.xs[i].transpose();
        y.row(i) = vector_of(data.ys[i]).transpose();
    }
    return z.colPivHouseholderQr().solve(y);  // (d+1) x p
}

}  // namespace detail

/// Box-score model: per-coordinate least squares mean on (1, x) features.
inline ScoreModel train_box_model(const LabeledDataset& data) {
    data.validate();
    if (data.kind != TaskKind::Regression)
        throw ValueError("train_box_model: regression data required");
    Matrix coeff = detail::least_squares_coeff(data);
    ScoreModel model;
    model.geometry = ScoreGeometry::Box;
    model.mean_fn = [coeff](const Vector& x) {
        Vector z(x.size() + 1);
        z[0] = 1.0;
        z.tail(x.size()) = x;
        return Vector(coeff.transpose() * z);
    };
    return model;
}

/// Ellipsoid-score model: least squares mean plus a global residual
/// covariance with a small ridge so the matrix stays SPD.
inline ScoreModel train_ellipsoid_model(const LabeledDataset& data, double ridge = 1e-6) {
    data.validate();
    if (data.kind != TaskKind::Regression)
        throw ValueError("train_ellipsoid_model: regression data required");
    const int n = static_cast<int>(data.size());
    const int p = static_cast<int>(vector_of(data.ys.front()).size());
    Matrix coeff = detail::least_squares_coeff(data);
    Matrix resid(n, p);
    for (int i = 0; i < n; ++i) {
        Vector z(data.xs[i].size() + 1);
        z[0] = 1.0;
        z.tail(data.xs[i].size()) = data.xs[i];
        resid.row(i) = (vector_of(data.ys[i]) - coeff.transpose() * z).transpose();
    }
    Matrix cov = resid.transpose() * resid / n + ridge * Matrix::Identity(p, p);
    ScoreModel model;
    model.geometry = ScoreGeometry::Ellipsoid;
    model.mean_fn = [coeff](const Vector& x) {
        Vector z(x.size() + 1);
        z[0] = 1.0;
        z.tail(x.size()) = x;
        return Vector(coeff.transpose() * z);
    };
    model.cov_fn = [cov](const Vector&) { return cov; };
    return model;
}

/// Cumulative-probability score with a per-label penalty, built on top of a
/// softmax classifier: sort class probabilities in decreasing order (ties by
/// label index), accumulate mass rho and penalty L down to the rank of y, and
/// return rho + lambda * L. The default penalty is the 1-based label value.
inline ScoreModel make_greedy_score_model(const ScoreModel& classifier, double lambda,
                                          std::function<double(int)> penalty = {}) {
    if (classifier.geometry != ScoreGeometry::Softmax)
        throw ValueError("make_greedy_score_model: softmax classifier required");
    if (lambda < 0.0) throw ValueError("make_greedy_score_model: negative penalty weight");
    if (!penalty) penalty = [](int label) { return static_cast<double>(label + 1); };

    ScoreModel model;
    model.geometry = ScoreGeometry::None;
    model.num_labels = classifier.num_labels;
    model.score_fn = [prob_fn = classifier.prob_fn, lambda, penalty](const Vector& x,
                                                                     const Label& y) {
        const int target = class_of(y);
        const Vector probs = prob_fn(x);
        std::vector<int> order(probs.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return probs[a] > probs[b]; });
        double rho = 0.0, pen = 0.0;
        for (int idx : order) {
            rho += probs[idx];
            pen += penalty(idx);
            if (idx == target) break;
        }
        return rho + lambda * pen;
    };
    return model;
}

}  // namespace croms::synth
