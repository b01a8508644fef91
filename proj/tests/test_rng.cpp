#include "sdelab/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

using namespace sdelab;

TEST_CASE("fnv1a64 matches published reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("identical seeds give identical streams, different seeds differ") {
    Rng a(123), b(123), c(124);
    bool any_diff = false;
    for (int i = 0; i < 1000; ++i) {
        const std::uint64_t va = a.next_u64();
        CHECK(va == b.next_u64());
        any_diff = any_diff || (va != c.next_u64());
    }
    CHECK(any_diff);
}

TEST_CASE("derived streams are reproducible and separated") {
    Rng a = derive_stream(7, "exp", 0);
    Rng a2 = derive_stream(7, "exp", 0);
    Rng b = derive_stream(7, "exp", 1);
    Rng c = derive_stream(7, "other", 0);
    Rng d = derive_stream(8, "exp", 0);
    bool diff_b = false, diff_c = false, diff_d = false;
    for (int i = 0; i < 256; ++i) {
        const std::uint64_t v = a.next_u64();
        CHECK(v == a2.next_u64());
        diff_b = diff_b || v != b.next_u64();
        diff_c = diff_c || v != c.next_u64();
        diff_d = diff_d || v != d.next_u64();
    }
    CHECK(diff_b);
    CHECK(diff_c);
    CHECK(diff_d);
}

TEST_CASE("uniform lies in [0,1) with the right first moments") {
    Rng rng(9);
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        s1 += u;
        s2 += u * u;
    }
    const double mean = s1 / n;
    const double var = s2 / n - mean * mean;
    CHECK(std::abs(mean - 0.5) < 4.0 / std::sqrt(12.0 * n));        // SE of the mean
    CHECK(std::abs(var - 1.0 / 12.0) < 4.0 * 0.0745 / std::sqrt(n));  // SE of U[0,1) variance
}

TEST_CASE("normal has standard moments") {
    Rng rng(10);
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        s1 += z;
        s2 += z * z;
        s3 += z * z * z;
        s4 += z * z * z * z;
    }
    CHECK(std::abs(s1 / n) < 4.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(s3 / n) < 4.0 * std::sqrt(15.0 / n));
    CHECK(std::abs(s4 / n - 3.0) < 4.0 * std::sqrt(96.0 / n));
}

TEST_CASE("uniform_index covers its range without bias") {
    Rng rng(11);
    const std::uint64_t m = 7;
    std::vector<int> counts(m, 0);
    const int n = 140000;
    for (int i = 0; i < n; ++i) {
        const std::uint64_t k = rng.uniform_index(m);
        REQUIRE(k < m);
        ++counts[k];
    }
    const double expect = static_cast<double>(n) / m;
    const double se = std::sqrt(expect * (1.0 - 1.0 / m));
    for (const int c : counts) CHECK(std::abs(c - expect) < 5.0 * se);
}

TEST_CASE("poisson sampling has matching mean and variance") {
    Rng rng(12);
    for (const double rate : {0.3, 1.0, 7.5, 40.0}) {
        const int n = 100000;
        double s1 = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double k = static_cast<double>(rng.poisson(rate));
            s1 += k;
            s2 += k * k;
        }
        const double mean = s1 / n;
        const double var = s2 / n - mean * mean;
        // mean and variance are both `rate`; SE(mean)=sqrt(rate/n),
        // SE(var) ~ sqrt((2 rate^2 + rate)/n).
        CHECK(std::abs(mean - rate) < 4.0 * std::sqrt(rate / n));
        CHECK(std::abs(var - rate) < 4.0 * std::sqrt((2.0 * rate * rate + rate) / n));
    }
}
