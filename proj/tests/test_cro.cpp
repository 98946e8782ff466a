#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "croms/cro.hpp"
#include "croms/synth.hpp"

using namespace croms;

namespace {

Vector vec2(double a, double b) { return (Vector(2) << a, b).finished(); }

// Exhaustive enumeration oracle, written independently of the solver.
std::pair<int, double> enumerate_min_max(const Matrix& m, const std::vector<int>& rows) {
    double best = kInf;
    int best_z = -1;
    for (int z = 0; z < m.cols(); ++z) {
        double worst = -kInf;
        for (int r : rows) worst = std::max(worst, m(r, z));
        if (worst < best) {
            best = worst;
            best_z = z;
        }
    }
    return {best_z, best};
}

// Dense simplex grid oracle for p = 2 objectives.
template <typename F>
double grid_min_2d(F&& objective, int resolution = 200) {
    double best = kInf;
    for (int i = 0; i < resolution; ++i) {
        const double s = static_cast<double>(i) / (resolution - 1);
        best = std::min(best, objective(vec2(s, 1.0 - s)));
    }
    return best;
}

}  // namespace

TEST_CASE("solve_finite on the diagnosis table") {
    const Matrix m = synth::diagnosis_loss_table();
    auto one = cro::solve_finite(m, {0});  // Normal only
    CHECK(std::get<int>(one.decision) == 0);
    CHECK(one.worst_case_loss == 0.0);

    auto two = cro::solve_finite(m, {1, 2});  // COVID-19, Pneumonia
    CHECK(std::get<int>(two.decision) == 3);
    CHECK(two.worst_case_loss == 3.0);

    auto all = cro::solve_finite(m, {0, 1, 2, 3});
    CHECK(std::get<int>(all.decision) == 3);
    CHECK(all.worst_case_loss == 6.0);
}

TEST_CASE("solve_finite equals enumeration on random matrices and all subsets") {
    Rng rng(42);
    for (int trial = 0; trial < 40; ++trial) {
        const int rows = 1 + static_cast<int>(rng.uniform_index(8));
        const int cols = 1 + static_cast<int>(rng.uniform_index(8));
        Matrix m(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) m(r, c) = std::round(rng.normal() * 4.0);
        for (int mask = 1; mask < (1 << rows); ++mask) {
            std::vector<int> subset;
            for (int r = 0; r < rows; ++r)
                if (mask & (1 << r)) subset.push_back(r);
            auto sol = cro::solve_finite(m, subset);
            auto [oz, ov] = enumerate_min_max(m, subset);
            REQUIRE(std::get<int>(sol.decision) == oz);
            REQUIRE(sol.worst_case_loss == ov);
            REQUIRE_FALSE(sol.set_was_empty);
        }
    }
}

TEST_CASE("solve_finite empty set falls back to the full label set") {
    const Matrix m = synth::diagnosis_loss_table();
    auto sol = cro::solve_finite(m, {});
    auto full = cro::solve_finite(m, {0, 1, 2, 3});
    CHECK(sol.set_was_empty);
    CHECK(std::get<int>(sol.decision) == std::get<int>(full.decision));
    CHECK(sol.worst_case_loss == full.worst_case_loss);
}

TEST_CASE("solve_box_portfolio closed form") {
    auto a = cro::solve_box_portfolio(vec2(0.5, 0.2), 0.1);
    CHECK(std::get<Vector>(a.decision) == vec2(1.0, 0.0));
    CHECK(a.worst_case_loss == Catch::Approx(-0.4));

    auto tie = cro::solve_box_portfolio(vec2(0.3, 0.3), 0.0);
    CHECK(std::get<Vector>(tie.decision) == vec2(1.0, 0.0));
    CHECK(tie.worst_case_loss == Catch::Approx(-0.3));

    auto inf = cro::solve_box_portfolio((Vector(3) << 1, 2, 3).finished(), kInf);
    CHECK(std::isinf(inf.worst_case_loss));
    CHECK(std::get<Vector>(inf.decision).isApprox(Vector::Constant(3, 1.0 / 3)));

    CHECK_THROWS_AS(cro::solve_box_portfolio(Vector(), 1.0), ValueError);
}

TEST_CASE("solve_box_portfolio equals vertex enumeration and shifts with constants") {
    Rng rng(77);
    for (int trial = 0; trial < 300; ++trial) {
        const int p = 2 + static_cast<int>(rng.uniform_index(4));
        Vector mu(p);
        for (int i = 0; i < p; ++i) mu[i] = rng.normal();
        const double q = rng.uniform() * 2.0;
        auto sol = cro::solve_box_portfolio(mu, q);
        double best = kInf;
        for (int i = 0; i < p; ++i) best = std::min(best, -(mu[i] - q));
        REQUIRE(sol.worst_case_loss == best);

        const double kappa = rng.normal();
        auto shifted = cro::solve_box_portfolio(mu.array() + kappa, q);
        REQUIRE(shifted.worst_case_loss == Catch::Approx(sol.worst_case_loss - kappa));
    }
}

TEST_CASE("solve_ellipsoid_portfolio examples") {
    auto centroid = cro::solve_ellipsoid_portfolio(vec2(0, 0), Matrix::Identity(2, 2), 1.0);
    CHECK(centroid.worst_case_loss == Catch::Approx(std::sqrt(0.5)).margin(1e-3));
    CHECK(std::get<Vector>(centroid.decision)[0] == Catch::Approx(0.5).margin(1e-3));

    auto vertex = cro::solve_ellipsoid_portfolio(vec2(10, 0), Matrix::Identity(2, 2), 1.0);
    CHECK(vertex.worst_case_loss == Catch::Approx(-9.0).margin(1e-3));

    auto degenerate = cro::solve_ellipsoid_portfolio(vec2(0.3, 0.1), Matrix::Identity(2, 2), 0.0);
    CHECK(std::get<Vector>(degenerate.decision) == vec2(1.0, 0.0));

    Matrix bad(2, 2);
    bad << 1, 2, 2, 1;  // indefinite
    CHECK_THROWS_AS(cro::solve_ellipsoid_portfolio(vec2(0, 0), bad, 1.0), ValueError);
}

TEST_CASE("solve_ellipsoid_portfolio within grid oracle tolerance") {
    Rng rng(101);
    for (int trial = 0; trial < 40; ++trial) {
        Vector mu = vec2(rng.normal() * 2.0, rng.normal() * 2.0);
        Matrix l(2, 2);
        l << 0.5 + rng.uniform(), 0.0, rng.normal() * 0.3, 0.5 + rng.uniform();
        Matrix sigma = l * l.transpose();
        const double q = 0.1 + 2.0 * rng.uniform();
        auto objective = [&](const Vector& z) {
            return -mu.dot(z) + std::sqrt(q) * std::sqrt(z.dot(sigma * z));
        };
        auto sol = cro::solve_ellipsoid_portfolio(mu, sigma, q);
        const double oracle = grid_min_2d(objective);
        REQUIRE(sol.worst_case_loss <= oracle + 1e-3);
        REQUIRE(sol.worst_case_loss ==
                Catch::Approx(objective(std::get<Vector>(sol.decision))).margin(1e-12));
    }
}

TEST_CASE("solve_ellipsoid_portfolio p=3 against a 3-simplex grid") {
    Rng rng(202);
    for (int trial = 0; trial < 10; ++trial) {
        Vector mu(3);
        for (int i = 0; i < 3; ++i) mu[i] = rng.normal();
        Matrix sigma = Matrix::Identity(3, 3) * (0.5 + rng.uniform());
        const double q = 0.2 + rng.uniform();
        auto objective = [&](const Vector& z) {
            return -mu.dot(z) + std::sqrt(q) * std::sqrt(z.dot(sigma * z));
        };
        double oracle = kInf;
        const int res = 120;
        for (int i = 0; i <= res; ++i)
            for (int j = 0; j <= res - i; ++j) {
                Vector z(3);
                z << double(i) / res, double(j) / res, double(res - i - j) / res;
                oracle = std::min(oracle, objective(z));
            }
        auto sol = cro::solve_ellipsoid_portfolio(mu, sigma, q);
        REQUIRE(sol.worst_case_loss <= oracle + 1e-3);
    }
}

TEST_CASE("solve_finite_points examples") {
    auto spec = LossSpec::bilinear(2);
    auto single = cro::solve_finite_points(spec, {vec2(1, 0)});
    CHECK(single.worst_case_loss == Catch::Approx(-1.0).margin(1e-6));

    auto symmetric = cro::solve_finite_points(spec, {vec2(1, 0), vec2(0, 1)});
    CHECK(symmetric.worst_case_loss == Catch::Approx(-0.5).margin(1e-3));

    auto constant = cro::solve_finite_points(spec, {vec2(2, 2)});
    CHECK(constant.worst_case_loss == Catch::Approx(-2.0).margin(1e-6));

    CHECK_THROWS_AS(cro::solve_finite_points(spec, {}), ValueError);
}

TEST_CASE("solve_finite_points within grid oracle tolerance") {
    Rng rng(303);
    auto spec = LossSpec::bilinear(2);
    for (int trial = 0; trial < 40; ++trial) {
        const int count = 1 + static_cast<int>(rng.uniform_index(25));
        std::vector<Vector> pts(count);
        for (auto& c : pts) c = vec2(rng.normal() * 3.0, rng.normal() * 3.0);
        auto objective = [&](const Vector& z) {
            double worst = -kInf;
            for (const auto& c : pts) worst = std::max(worst, -c.dot(z));
            return worst;
        };
        auto sol = cro::solve_finite_points(spec, pts);
        const double oracle = grid_min_2d(objective);
        REQUIRE(sol.worst_case_loss <= oracle + 1e-3);
    }
}

TEST_CASE("project_simplex") {
    CHECK(cro::project_simplex(vec2(0.5, 0.5)) == vec2(0.5, 0.5));
    CHECK(cro::project_simplex(vec2(2, 0)) == vec2(1.0, 0.0));
    CHECK(cro::project_simplex(vec2(0.6, 0.6)).isApprox(vec2(0.5, 0.5)));
}

TEST_CASE("project_simplex satisfies the KKT characterization") {
    Rng rng(404);
    for (int trial = 0; trial < 500; ++trial) {
        const int p = 1 + static_cast<int>(rng.uniform_index(8));
        Vector v(p);
        for (int i = 0; i < p; ++i) v[i] = rng.normal() * 3.0;
        Vector z = cro::project_simplex(v);
        REQUIRE(z.minCoeff() >= 0.0);
        REQUIRE(z.sum() == Catch::Approx(1.0).margin(1e-10));
        // recover theta from any active coordinate and check the fixed point
        double theta = 0.0;
        bool found = false;
        for (int i = 0; i < p && !found; ++i) {
            if (z[i] > 1e-12) {
                theta = v[i] - z[i];
                found = true;
            }
        }
        REQUIRE(found);
        for (int i = 0; i < p; ++i)
            REQUIRE(z[i] == Catch::Approx(std::max(v[i] - theta, 0.0)).margin(1e-10));
    }
}

TEST_CASE("worst-case loss grows with the set") {
    const Matrix m = synth::diagnosis_loss_table();
    auto inner = cro::solve_finite(m, {1});
    auto outer = cro::solve_finite(m, {1, 2, 3});
    CHECK(inner.worst_case_loss <= outer.worst_case_loss);

    Rng rng(505);
    for (int trial = 0; trial < 100; ++trial) {
        Vector mu = vec2(rng.normal(), rng.normal());
        const double q1 = rng.uniform();
        const double q2 = q1 + rng.uniform();
        CHECK(cro::solve_box_portfolio(mu, q1).worst_case_loss <=
              cro::solve_box_portfolio(mu, q2).worst_case_loss + 1e-12);
    }
}
