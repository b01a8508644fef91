#pragma once

#include "sdelab/integrators.hpp"

#include <cstdint>
#include <string>

namespace sdelab {

// Monte Carlo estimate of one-step increment moments with jackknife standard
// errors (leave-one-block-out over equally sized blocks).
struct MomentEstimate {
    std::uint64_t n_samples = 0;
    std::uint64_t n_blocks = 0;
    Vec mean, mean_se;
    Mat second, second_se;        // raw second moment E[dx dx^T]
    Tensor3 third, third_se;      // raw third moment E[dx (x) dx (x) dx]
    double fourth_norm = 0.0;     // sqrt(E |dx|^8) = Frobenius norm sqrt(E|dx^(x)4|^2)
    double fourth_norm_se = 0.0;
};

struct TheoreticalMoments {
    Vec mean;
    Mat second;
    Tensor3 third;
    double fourth_norm = 0.0;
    bool has_fourth = false;
};

struct MomentReport {
    double max_z_mean = 0.0;
    double max_z_second = 0.0;
    double max_z_third = 0.0;
    double z_max = 4.0;
    bool pass = false;
};

// Average of t over all six index permutations. Idempotent; a tensor that is
// already fully symmetric is returned unchanged.
Tensor3 symmetrize(const Tensor3& t);

// Mean, variance and third central moment of a scalar sample with jackknife
// standard errors over n_blocks contiguous blocks.
struct ScalarMomentSummary {
    std::size_t n = 0;
    double mean = 0.0, variance = 0.0, third_central = 0.0;
    double mean_se = 0.0, variance_se = 0.0, third_se = 0.0;
};

ScalarMomentSummary summarize_scalar_moments(const Vec& values, std::size_t n_blocks = 100);

// Samples n one-step increments of the configured dynamics started at x.
// Requires n >= 10^4; increments are grouped into n_blocks blocks, each with
// its own derived random stream, so results are independent of threading.
MomentEstimate estimate_one_step_moments(const StochasticObjective& obj, const Vec& x,
                                         const DynamicsConfig& cfg, std::uint64_t n,
                                         std::uint64_t n_blocks = 100,
                                         const std::string& experiment_id = "one-step-moments",
                                         unsigned n_threads = 1);

// Exact increment moments of one svag update (orders 1-3). The same formulas
// with l = 1 cover plain sgd.
TheoreticalMoments theoretical_svag_moments(const StochasticObjective& obj, const Vec& x,
                                            double eta, std::uint64_t l, double batch = 1.0);

// Exact increment moments of the first-order SDE over time h = eta / l for
// the quadratic objective (an Ornstein-Uhlenbeck process).
TheoreticalMoments theoretical_sde_moments(const QuadraticGaussianObjective& obj, const Vec& x,
                                           double eta, std::uint64_t l, double batch = 1.0);

// Entrywise z-scores (estimate - theory) / SE over orders 1-3; pass iff the
// largest |z| is at most z_max. A zero SE with a nonzero deviation yields an
// infinite z.
MomentReport compare_moments(const MomentEstimate& est, const TheoreticalMoments& th,
                             double z_max = 4.0);

std::string format_moment_table(const MomentEstimate& est, const TheoreticalMoments& th,
                                const MomentReport& report);

}  // namespace sdelab
