#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdelab/rng.hpp"
#include "sdelab/vec.hpp"

namespace sdelab {

struct TailIndexEstimate {
    double inv_alpha = 0.0;  // estimate of 1/alpha
    std::size_t k1 = 0, k2 = 0;
};

// Block log-moment estimator of the inverse tail exponent: with the input
// split in order into k2 consecutive blocks of k1 samples and Y_j the sum of
// block j,
//   1/alpha_hat = (mean_j log|Y_j| - mean_i log|X_i|) / log(k1).
// Requires samples.size() == k1 * k2 and k1, k2 >= 2.  Any sample or block
// sum equal to zero is a hard error (std::domain_error), not a skipped point.
TailIndexEstimate estimate_tail_index(const Vec& samples, std::size_t k1, std::size_t k2);

// Exact expectation of the estimator when each block holds m independent
// N(0, sigma) vectors of dimension d laid out coordinate-contiguously
// (k1 = d * m):
//   (log m + log(1^T sigma 1) - mean_i log sigma_ii) / (2 * (log m + log d)).
// Requires a strictly positive diagonal and not both m == 1 and d == 1.
double expected_gaussian_estimate(std::size_t d, std::size_t m, const Mat& sigma);

struct TailBiasPoint {
    double beta = 0.0;
    double expected = 0.0;        // closed-form value for this beta
    double empirical_mean = 0.0;  // mean estimate over repetitions
    double se = 0.0;              // standard error over repetitions
    std::size_t repetitions = 0;
};

// Gaussian bias experiment on the equicorrelated family
// Sigma = beta * 11^T + (1 - beta) * I: each block is one d-vector sampled as
// sqrt(beta) * g * 1 + sqrt(1 - beta) * eps, so dependence inside a block is
// controlled by beta while the estimator still sees light-tailed input.
TailBiasPoint gaussian_bias_experiment(std::size_t d, double beta, std::size_t k2,
                                       std::size_t repetitions, std::uint64_t seed,
                                       const std::string& experiment_id, unsigned n_threads = 1);

// Standard Cauchy samples via the ratio of two independent standard normals.
Vec sample_standard_cauchy(std::size_t n, Rng& rng);

struct CauchyCheck {
    std::size_t k1 = 0, k2 = 0;
    double empirical_mean = 0.0;  // mean estimate over repetitions
    double se = 0.0;
    std::size_t repetitions = 0;
};

// Estimator on i.i.d. standard Cauchy input: block sums of k1 Cauchy samples
// are again Cauchy scaled by k1 (strict stability at tail exponent 1), so the
// estimator's expectation is exactly 1 for every k1 — the calibration point of
// the heavy-tailed regime.
CauchyCheck cauchy_tail_experiment(std::size_t k1, std::size_t k2, std::size_t repetitions,
                                   std::uint64_t seed, const std::string& experiment_id,
                                   unsigned n_threads = 1);

// CSV with header beta,expected,empirical_mean,stderr,repetitions.
void write_tail_bias_csv(const std::string& path, const std::vector<TailBiasPoint>& rows);

}  // namespace sdelab
