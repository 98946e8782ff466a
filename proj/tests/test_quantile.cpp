#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "croms/common.hpp"
#include "croms/quantile.hpp"

using namespace croms;

namespace {

// Independent sorted-multiset oracle: smallest k with k >= level*n, computed
// with integer scans in long double.
double oracle_order_stat(std::vector<double> values, double level) {
    std::sort(values.begin(), values.end());
    const long double target = static_cast<long double>(level) * values.size();
    long k = 1;
    while (static_cast<long double>(k) < target - 1e-12L) ++k;
    if (k > static_cast<long>(values.size())) return kInf;
    if (k < 1) k = 1;
    return values[k - 1];
}

// Per-element cumulative scan over the sorted multiset (no aggregation).
double oracle_weighted(std::vector<std::pair<double, double>> atoms, double level) {
    std::sort(atoms.begin(), atoms.end());
    if (level > 1.0 + 1e-12) return kInf;
    long double cum = 0.0L;
    for (const auto& [v, w] : atoms) {
        cum += w;
        if (cum >= static_cast<long double>(level) - 1e-12L) return v;
    }
    return atoms.back().first;
}

double oracle_augmented(std::vector<double> scores, double test, double alpha) {
    scores.push_back(test);
    return oracle_order_stat(scores, 1.0 - alpha);
}

std::vector<double> iota_values(int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = i + 1;
    return v;
}

}  // namespace

TEST_CASE("empirical_quantile basics") {
    CHECK(quantile::empirical_quantile(iota_values(10), 0.9) == 9.0);
    CHECK(quantile::empirical_quantile(iota_values(10), 1.0) == 10.0);
    CHECK(std::isinf(quantile::empirical_quantile({5.0}, 1.2)));
    CHECK(quantile::empirical_quantile({7.0, 3.0}, -0.5) == 3.0);  // index clamps to 1
    CHECK_THROWS_AS(quantile::empirical_quantile({}, 0.5), ValueError);
    CHECK_THROWS_AS(quantile::empirical_quantile({1.0, std::nan("")}, 0.5), ValueError);
}

TEST_CASE("inflated conformal threshold") {
    CHECK(quantile::inflated_conformal_threshold(iota_values(9), 0.1) == 9.0);
    // (1-alpha)(n+1) = 0.95*20 = 19 <= n=19: the threshold is the maximum,
    // by direct index arithmetic.
    CHECK(quantile::inflated_conformal_threshold(iota_values(19), 0.05) == 19.0);
    // overflow: 0.95*11 = 10.45 -> rank 11 > n=10
    CHECK(std::isinf(quantile::inflated_conformal_threshold(iota_values(10), 0.05)));
    CHECK(quantile::inflated_conformal_threshold(iota_values(10), 0.2) == 9.0);
}

TEST_CASE("weighted_quantile basics") {
    CHECK(quantile::weighted_quantile({1, 2, 3}, {0.5, 0.25, 0.25}, 0.5) == 1.0);
    std::vector<double> uniform(10, 0.1);
    CHECK(quantile::weighted_quantile(iota_values(10), uniform, 0.9) == 9.0);
    CHECK(quantile::weighted_quantile({1, 2}, {0.3, 0.7}, 0.31) == 2.0);
    CHECK(std::isinf(quantile::weighted_quantile({1, 2}, {0.5, 0.5}, 1.1)));
    CHECK_THROWS_AS(quantile::weighted_quantile({1, 2}, {-0.1, 1.1}, 0.5), ValueError);
    CHECK_THROWS_AS(quantile::weighted_quantile({1, 2}, {0.5}, 0.5), DimensionError);
}

TEST_CASE("augmented threshold bounds") {
    auto [qm1, qp1] = quantile::augmented_threshold_bounds(iota_values(10), 0.2);
    CHECK(qm1 == 8.0);
    CHECK(qp1 == 9.0);
    auto [qm2, qp2] = quantile::augmented_threshold_bounds(iota_values(10), 0.01);
    CHECK(qm2 == 10.0);
    CHECK(std::isinf(qp2));
    auto [qm3, qp3] = quantile::augmented_threshold_bounds({5.0}, 0.5);
    CHECK(qm3 == 5.0);
    CHECK(qp3 == 5.0);
    CHECK(qm1 <= qp1);
}

TEST_CASE("augmented threshold case split") {
    CHECK(quantile::augmented_threshold(iota_values(10), 0.0, 0.2) == 8.0);
    CHECK(quantile::augmented_threshold(iota_values(10), 100.0, 0.2) == 9.0);
    CHECK(quantile::augmented_threshold(iota_values(10), 8.5, 0.2) == 8.5);
}

TEST_CASE("augmented threshold equals brute force with ties") {
    Rng rng(20240811);
    for (int trial = 0; trial < 4000; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_index(50));
        std::vector<double> scores(n);
        for (auto& s : scores) s = std::round(rng.normal() * 10.0) / 10.0;  // force ties
        const double alpha = 0.02 + 0.96 * rng.uniform();
        double test;
        if (rng.bernoulli(0.3) && n > 0)
            test = scores[rng.uniform_index(n)];  // exact tie with a score
        else
            test = std::round(rng.normal() * 10.0) / 10.0;
        const double got = quantile::augmented_threshold(scores, test, alpha);
        const double want = oracle_augmented(scores, test, alpha);
        REQUIRE(got == want);
    }
}

TEST_CASE("empirical quantile equals oracle on random instances") {
    Rng rng(7);
    for (int trial = 0; trial < 4000; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_index(60));
        std::vector<double> values(n);
        for (auto& v : values) v = std::round(rng.normal() * 4.0) / 2.0;
        const double level = 0.01 + 1.1 * rng.uniform();
        const double got = quantile::empirical_quantile(values, level);
        const double want = oracle_order_stat(values, level);
        REQUIRE(((std::isinf(got) && std::isinf(want)) || got == want));
    }
}

TEST_CASE("weighted quantile equals oracle and reduces to empirical") {
    Rng rng(99);
    for (int trial = 0; trial < 2000; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_index(40));
        std::vector<double> values(n), weights(n);
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            values[i] = std::round(rng.normal() * 5.0) / 2.0;
            weights[i] = rng.uniform_pos();
            total += weights[i];
        }
        for (auto& w : weights) w /= total;
        const double level = 0.02 + 0.98 * rng.uniform();
        std::vector<std::pair<double, double>> atoms(n);
        for (int i = 0; i < n; ++i) atoms[i] = {values[i], weights[i]};
        REQUIRE(quantile::weighted_quantile(values, weights, level) ==
                oracle_weighted(atoms, level));

        std::vector<double> uniform(n, 1.0 / n);
        REQUIRE(quantile::weighted_quantile(values, uniform, level) ==
                quantile::empirical_quantile(values, level));
    }
}

TEST_CASE("quantile monotonicity and permutation invariance") {
    Rng rng(1234);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_index(30));
        std::vector<double> values(n);
        for (auto& v : values) v = rng.normal();
        const double l1 = 0.1 + 0.4 * rng.uniform();
        const double l2 = l1 + 0.5 * rng.uniform();
        CHECK(quantile::empirical_quantile(values, l1) <= quantile::empirical_quantile(values, l2));

        std::vector<double> shuffled = values;
        for (int i = n - 1; i > 0; --i)
            std::swap(shuffled[i], shuffled[rng.uniform_index(i + 1)]);
        CHECK(quantile::empirical_quantile(values, l1) ==
              quantile::empirical_quantile(shuffled, l1));

        const double alpha = 0.05 + 0.9 * rng.uniform();
        CHECK(quantile::inflated_conformal_threshold(values, alpha) >=
              quantile::empirical_quantile(values, 1.0 - alpha));
    }
}
