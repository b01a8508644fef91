#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sdelab/rng.hpp"
#include "sdelab/tail_index.hpp"
#include "sdelab/vec.hpp"

using namespace sdelab;

namespace {

// Equicorrelated covariance beta * 11^T + (1 - beta) * I.
Mat equicorrelated(std::size_t d, double beta) {
    Mat s(d, d, beta);
    for (std::size_t i = 0; i < d; ++i) s(i, i) = 1.0;
    return s;
}

}  // namespace

TEST_CASE("tail estimator: constant input gives exactly 1") {
    // Block sums of k1 ones equal k1, so the log-moment gap is exactly log k1.
    const std::size_t k1 = 10, k2 = 50;
    const Vec ones(k1 * k2, 1.0);
    const auto est = estimate_tail_index(ones, k1, k2);
    CHECK(est.inv_alpha == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(est.k1 == k1);
    CHECK(est.k2 == k2);
}

TEST_CASE("tail estimator: invariant under rescaling of the input") {
    Rng rng(1234);
    const std::size_t k1 = 8, k2 = 40;
    Vec x(k1 * k2);
    for (auto& v : x) v = rng.normal() + 0.1;  // offset keeps zeros away
    const double base = estimate_tail_index(x, k1, k2).inv_alpha;
    Vec scaled = x;
    for (auto& v : scaled) v *= 1000.0;
    CHECK(estimate_tail_index(scaled, k1, k2).inv_alpha == doctest::Approx(base).epsilon(1e-10));
    Vec shrunk = x;
    for (auto& v : shrunk) v *= 1e-6;
    CHECK(estimate_tail_index(shrunk, k1, k2).inv_alpha == doctest::Approx(base).epsilon(1e-10));
}

TEST_CASE("tail estimator: input validation") {
    const Vec ok(20, 1.0);
    CHECK_THROWS_AS(estimate_tail_index(ok, 4, 5 + 1), std::invalid_argument);  // size mismatch
    CHECK_THROWS_AS(estimate_tail_index(ok, 1, 20), std::invalid_argument);     // k1 < 2
    CHECK_THROWS_AS(estimate_tail_index(ok, 20, 1), std::invalid_argument);     // k2 < 2

    Vec with_zero(20, 1.0);
    with_zero[3] = 0.0;
    CHECK_THROWS_AS(estimate_tail_index(with_zero, 4, 5), std::domain_error);

    Vec cancelling(20, 1.0);
    cancelling[0] = 1.0;
    cancelling[1] = -1.0;
    cancelling[2] = 1.0;
    cancelling[3] = -1.0;  // first block of 4 sums to zero
    CHECK_THROWS_AS(estimate_tail_index(cancelling, 4, 5), std::domain_error);
}

TEST_CASE("closed-form gaussian value: independent coordinates sit at 1/2") {
    // Sigma = I makes log(1^T sigma 1) = log d, cancelling half the denominator.
    CHECK(expected_gaussian_estimate(100, 1, equicorrelated(100, 0.0)) ==
          doctest::Approx(0.5).epsilon(1e-14));
    CHECK(expected_gaussian_estimate(2, 3, equicorrelated(2, 0.0)) ==
          doctest::Approx(0.5).epsilon(1e-14));
    CHECK(expected_gaussian_estimate(7, 5, equicorrelated(7, 0.0)) ==
          doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("closed-form gaussian value: fully dependent coordinates sit at 1") {
    // Sigma = 11^T: one shared scalar gaussian per block, 1^T sigma 1 = d^2.
    CHECK(expected_gaussian_estimate(100, 1, equicorrelated(100, 1.0)) ==
          doctest::Approx(1.0).epsilon(1e-14));
    CHECK(expected_gaussian_estimate(10, 1, equicorrelated(10, 1.0)) ==
          doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("closed-form gaussian value: equicorrelated beta = 1/2 at d = 100") {
    // Independent evaluation of the same closed form: unit diagonal, so the
    // value is log(1^T sigma 1) / (2 log d) with 1^T sigma 1 = beta d^2 + (1-beta) d.
    const double hand = 0.5 * std::log(0.5 * 1e4 + 0.5 * 1e2) / std::log(100.0);
    CHECK(hand == doctest::Approx(0.925823).epsilon(1e-6));
    CHECK(expected_gaussian_estimate(100, 1, equicorrelated(100, 0.5)) ==
          doctest::Approx(hand).epsilon(1e-14));
}

TEST_CASE("closed-form gaussian value: general covariance by hand") {
    Mat s(2, 2);
    s(0, 0) = 2.0;
    s(0, 1) = s(1, 0) = 1.0;
    s(1, 1) = 3.0;
    // m = 1, d = 2: (log(1^T s 1) - mean log s_ii) / (2 log 2).
    const double hand = (std::log(7.0) - 0.5 * (std::log(2.0) + std::log(3.0))) / (2.0 * std::log(2.0));
    CHECK(expected_gaussian_estimate(2, 1, s) == doctest::Approx(hand).epsilon(1e-14));
    // m = 4 with the same covariance.
    const double hand4 =
        (std::log(4.0) + std::log(7.0) - 0.5 * (std::log(2.0) + std::log(3.0))) /
        (2.0 * (std::log(4.0) + std::log(2.0)));
    CHECK(expected_gaussian_estimate(2, 4, s) == doctest::Approx(hand4).epsilon(1e-14));
}

TEST_CASE("closed-form gaussian value: monotone in beta with range [1/2, 1]") {
    double prev = 0.0;
    for (int i = 0; i <= 10; ++i) {
        const double beta = 0.1 * i;
        const double v = expected_gaussian_estimate(50, 1, equicorrelated(50, beta));
        CHECK(v >= 0.5 - 1e-12);
        CHECK(v <= 1.0 + 1e-12);
        if (i > 0) CHECK(v > prev);
        prev = v;
    }
}

TEST_CASE("closed-form gaussian value: input validation") {
    CHECK_THROWS_AS(expected_gaussian_estimate(1, 1, equicorrelated(1, 0.0)),
                    std::invalid_argument);  // single-sample blocks carry no information
    CHECK_THROWS_AS(expected_gaussian_estimate(3, 1, equicorrelated(2, 0.0)),
                    std::invalid_argument);  // shape mismatch
    Mat bad = equicorrelated(3, 0.0);
    bad(1, 1) = 0.0;
    CHECK_THROWS_AS(expected_gaussian_estimate(3, 1, bad), std::domain_error);
}

TEST_CASE("gaussian bias experiment: matches the closed form within its own error bar") {
    for (double beta : {0.0, 0.5, 1.0}) {
        const auto pt = gaussian_bias_experiment(10, beta, 200, 50, 77, "unit/tail-bias");
        CHECK(pt.beta == beta);
        CHECK(pt.repetitions == 50);
        CHECK(pt.expected ==
              doctest::Approx(expected_gaussian_estimate(10, 1, equicorrelated(10, beta)))
                  .epsilon(1e-12));
        CHECK(pt.se >= 0.0);
        INFO("beta = " << beta << ": empirical " << pt.empirical_mean << " vs " << pt.expected
                       << " +- " << pt.se);
        CHECK(std::abs(pt.empirical_mean - pt.expected) <= 4.0 * pt.se + 1e-9);
    }
}

TEST_CASE("gaussian bias experiment: seed-deterministic, seed-sensitive, thread-count-free") {
    const auto a = gaussian_bias_experiment(10, 0.5, 100, 20, 5, "unit/tail-rep");
    const auto b = gaussian_bias_experiment(10, 0.5, 100, 20, 5, "unit/tail-rep");
    CHECK(a.empirical_mean == b.empirical_mean);
    CHECK(a.se == b.se);
    const auto c = gaussian_bias_experiment(10, 0.5, 100, 20, 6, "unit/tail-rep");
    CHECK(a.empirical_mean != c.empirical_mean);
    const auto t3 = gaussian_bias_experiment(10, 0.5, 100, 20, 5, "unit/tail-rep", 3);
    CHECK(a.empirical_mean == t3.empirical_mean);
    CHECK(a.se == t3.se);
}

TEST_CASE("gaussian bias experiment: input validation") {
    CHECK_THROWS_AS(gaussian_bias_experiment(1, 0.5, 100, 20, 5, "x"), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_bias_experiment(10, -0.1, 100, 20, 5, "x"), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_bias_experiment(10, 1.1, 100, 20, 5, "x"), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_bias_experiment(10, 0.5, 1, 20, 5, "x"), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_bias_experiment(10, 0.5, 100, 1, 5, "x"), std::invalid_argument);
}

TEST_CASE("raw gaussian draws land near 1/2 on a single estimate") {
    Rng rng(2024);
    const std::size_t k1 = 10, k2 = 500;
    Vec x(k1 * k2);
    for (auto& v : x) v = rng.normal();
    // SE of the estimate is about sqrt(pi^2/8 / k2) / (2 log k1) ~ 0.011.
    CHECK(std::abs(estimate_tail_index(x, k1, k2).inv_alpha - 0.5) <= 0.07);
}

TEST_CASE("cauchy calibration: strict stability pins the estimator at 1") {
    const auto chk = cauchy_tail_experiment(50, 200, 30, 99, "unit/tail-cauchy");
    CHECK(chk.k1 == 50);
    CHECK(chk.k2 == 200);
    CHECK(chk.repetitions == 30);
    CHECK(chk.se > 0.0);
    INFO("cauchy empirical " << chk.empirical_mean << " +- " << chk.se);
    CHECK(std::abs(chk.empirical_mean - 1.0) <= 4.0 * chk.se + 1e-9);
}

TEST_CASE("cauchy sampler: symmetric, heavy-tailed, deterministic") {
    Rng rng(7);
    const Vec x = sample_standard_cauchy(20000, rng);
    REQUIRE(x.size() == 20000);
    std::size_t positive = 0, big = 0;
    for (double v : x) {
        if (v > 0.0) ++positive;
        if (std::abs(v) > 10.0) ++big;
    }
    // Sign symmetry: binomial(n, 1/2), 5 sigma is ~354.
    CHECK(std::abs(static_cast<double>(positive) - 10000.0) < 400.0);
    // P(|C| > 10) = 2/pi * atan(1/10) ~ 0.0635: expect ~1270, 5 sigma is ~172.
    CHECK(std::abs(static_cast<double>(big) - 0.063451 * 20000.0) < 250.0);

    Rng rng2(7);
    const Vec y = sample_standard_cauchy(20000, rng2);
    CHECK(x == y);
}
