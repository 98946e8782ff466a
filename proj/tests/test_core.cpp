#include <catch2/catch_amalgamated.hpp>

#include "croms/core.hpp"
#include "croms/synth.hpp"

using namespace croms;

namespace {

ScoreModel zero_mean_box(int p) {
    ScoreModel m;
    m.geometry = ScoreGeometry::Box;
    m.mean_fn = [p](const Vector&) { return Vector::Zero(p); };
    return m;
}

Vector vec2(double a, double b) { return (Vector(2) << a, b).finished(); }

}  // namespace

TEST_CASE("score evaluation per geometry") {
    ScoreModel box = zero_mean_box(2);
    CHECK(box.score(Vector::Zero(1), Label{vec2(3.0, -4.0)}) == 4.0);

    ScoreModel softmax;
    softmax.geometry = ScoreGeometry::Softmax;
    softmax.num_labels = 3;
    softmax.prob_fn = [](const Vector&) { return (Vector(3) << 0.7, 0.2, 0.1).finished(); };
    CHECK(softmax.score(Vector::Zero(1), Label{0}) == Catch::Approx(0.3));

    ScoreModel ell;
    ell.geometry = ScoreGeometry::Ellipsoid;
    ell.mean_fn = [](const Vector&) { return Vector::Zero(2); };
    ell.cov_fn = [](const Vector&) { return Matrix::Identity(2, 2); };
    CHECK(ell.score(Vector::Zero(1), Label{vec2(1.0, 1.0)}) == Catch::Approx(2.0));
}

TEST_CASE("evaluate_scores is permutation equivariant and zero at the mean") {
    Rng rng(5);
    LabeledDataset data;
    data.kind = TaskKind::Regression;
    for (int i = 0; i < 12; ++i) {
        data.xs.push_back((Vector(1) << rng.normal()).finished());
        data.ys.emplace_back(vec2(rng.normal(), rng.normal()));
    }
    ScoreModel box = zero_mean_box(2);
    auto scores = evaluate_scores(box, data);
    REQUIRE(scores.size() == data.size());

    LabeledDataset reversed = data;
    std::reverse(reversed.xs.begin(), reversed.xs.end());
    std::reverse(reversed.ys.begin(), reversed.ys.end());
    auto rev_scores = evaluate_scores(box, reversed);
    std::reverse(rev_scores.begin(), rev_scores.end());
    CHECK(scores == rev_scores);

    // box score vanishes at the predicted mean
    CHECK(box.score(Vector::Zero(1), Label{Vector::Zero(2)}) == 0.0);
}

TEST_CASE("finite matrix loss reproduces the table exactly") {
    const Matrix m = synth::diagnosis_loss_table();
    auto spec = LossSpec::finite(m, synth::diagnosis_decision_names());
    CHECK(loss(spec, Label{0}, Decision{0}) == 0.0);   // Normal, No Action
    CHECK(loss(spec, Label{1}, Decision{2}) == 0.0);   // COVID-19, Quarantine
    for (int y = 0; y < m.rows(); ++y)
        for (int z = 0; z < m.cols(); ++z)
            REQUIRE(loss(spec, Label{y}, Decision{z}) == m(y, z));
    CHECK_THROWS_AS(loss(spec, Label{7}, Decision{0}), DimensionError);
}

TEST_CASE("bilinear loss") {
    auto spec = LossSpec::bilinear(2);
    CHECK(loss(spec, Label{vec2(1.0, 2.0)}, Decision{vec2(0.5, 0.5)}) == Catch::Approx(-1.5));
    CHECK_THROWS_AS(loss(spec, Label{vec2(1.0, 2.0)}, Decision{(Vector(3) << 1, 0, 0).finished()}),
                    DimensionError);
}

TEST_CASE("dataset validation") {
    LabeledDataset bad;
    bad.xs.push_back(Vector::Zero(2));
    bad.xs.push_back(Vector::Zero(3));
    bad.ys.emplace_back(0);
    bad.ys.emplace_back(1);
    CHECK_THROWS_AS(bad.validate(), DimensionError);
}

TEST_CASE("label grid mapping") {
    LabelGrid grid;
    grid.lo = vec2(-1.0, -1.0);
    grid.hi = vec2(1.0, 1.0);
    grid.counts = {3, 3};
    CHECK(grid.total() == 9);
    CHECK(grid.point(0) == vec2(-1.0, -1.0));
    CHECK(grid.point(8) == vec2(1.0, 1.0));
    CHECK(grid.nearest(vec2(0.1, -0.2)) == grid.nearest(vec2(0.0, 0.0)));
    CHECK(grid.nearest(vec2(9.0, 9.0)) == 8);  // clamps to the corner
}
