#pragma once

#include <vector>

#include "croms/core.hpp"
#include "croms/quantile.hpp"

namespace croms::conformal {

/// Specialize a threshold q into the concrete set descriptor for the model's
/// geometry at covariate x.
inline PredictionSetDescriptor descriptor_for(const ScoreModel& model, const Vector& x,
                                              double q) {
    PredictionSetDescriptor d;
    switch (model.geometry) {
        case ScoreGeometry::Box:
            d.variant = PredictionSetDescriptor::Box{model.mean_fn(x), q};
            break;
        case ScoreGeometry::Ellipsoid:
            d.variant = PredictionSetDescriptor::Ellipsoid{model.mean_fn(x), model.cov_fn(x), q};
            break;
        case ScoreGeometry::Softmax: {
            Vector probs = model.prob_fn(x);
            std::vector<int> labels;
            for (int k = 0; k < probs.size(); ++k)
                if (1.0 - probs[k] <= q) labels.push_back(k);
            d.variant = PredictionSetDescriptor::FiniteLabels{std::move(labels)};
            break;
        }
        case ScoreGeometry::None:
            d.variant = PredictionSetDescriptor::Sublevel{
                model.id, q, [model, x](const Label& y) { return model.score(x, y); }};
            break;
    }
    return d;
}

/// Split conformal set at level 1-alpha: threshold is the inflated quantile
/// Q_{(1-alpha)(1+1/n)} of the labeled scores.
inline PredictionSetDescriptor split_set(const ScoreModel& model, const LabeledDataset& labeled,
                                         double alpha, const Vector& x) {
    const double q =
        quantile::inflated_conformal_threshold(evaluate_scores(model, labeled), alpha);
    return descriptor_for(model, x, q);
}

/// Membership test S(x, y) <= q; the boundary is inclusive.
inline bool membership(const ScoreModel& model, double q, const Vector& x, const Label& y) {
    return model.score(x, y) <= q;
}

/// Localized conformal set: threshold is the (1-alpha) weighted quantile of
/// the labeled scores, no inflation.
inline PredictionSetDescriptor lcp_set(const ScoreModel& model, const LabeledDataset& labeled,
                                       const std::vector<double>& weights, double alpha,
                                       const Vector& x) {
    if (weights.size() != labeled.size())
        throw DimensionError("lcp_set: weight/data size mismatch");
    const double q =
        quantile::weighted_quantile(evaluate_scores(model, labeled), weights, 1.0 - alpha);
    return descriptor_for(model, x, q);
}

/// Enumerate a classification descriptor over the label space.
inline std::vector<int> finite_extent(const PredictionSetDescriptor& descriptor,
                                      const std::vector<int>& label_space) {
    if (std::holds_alternative<PredictionSetDescriptor::Box>(descriptor.variant) ||
        std::holds_alternative<PredictionSetDescriptor::Ellipsoid>(descriptor.variant) ||
        std::holds_alternative<PredictionSetDescriptor::FinitePoints>(descriptor.variant))
        throw ValueError("finite_extent: descriptor is not a classification set");
    std::vector<int> out;
    for (int k : label_space)
        if (descriptor.contains(Label{k})) out.push_back(k);
    return out;
}

}  // namespace croms::conformal
