#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdelab/objectives.hpp"
#include "sdelab/vec.hpp"

namespace sdelab {

// One term c * x_1^{e_1} * ... * x_d^{e_d} of a multivariate polynomial.
struct Monomial {
    double coef = 0.0;
    std::vector<unsigned> exponents;  // one entry per coordinate
};

// Multivariate polynomial observable of total degree <= 6.  The degree cap
// keeps every observable inside the polynomial-growth class for which the
// weak-approximation machinery below is valid; higher degrees are rejected.
class PolynomialTestFunction {
  public:
    PolynomialTestFunction(std::size_t dim, std::vector<Monomial> terms);

    // Univariate convenience: coeffs[k] multiplies x^k.
    static PolynomialTestFunction from_1d_coefficients(const std::vector<double>& coeffs);

    double operator()(const Vec& x) const;
    double operator()(double x) const;  // requires dim() == 1

    std::size_t dim() const { return dim_; }
    int degree() const { return degree_; }
    const std::vector<Monomial>& terms() const { return terms_; }

  private:
    std::size_t dim_ = 0;
    int degree_ = 0;
    std::vector<Monomial> terms_;
};

// E[g(Z)] for Z ~ N(mu, cov), evaluated exactly by the Stein recursion
// E[z_i m(z)] = mu_i E[m(z)] + sum_j cov_ij E[d m/d z_j].
double gaussian_expectation(const PolynomialTestFunction& g, const Vec& mu, const Mat& cov);

// Exact E[g(X_T)] for the linear SDE
//   dX = -(A X - b) dt + sqrt(eta * S / batch) dW,   X_0 = x0,
// i.e. the continuous-time limit associated with the quadratic objective.
// X_T is Gaussian with mean A^{-1}b + exp(-A T)(x0 - A^{-1}b) and covariance
// int_0^T exp(-A s) (eta S / batch) exp(-A s) ds, both evaluated in the
// eigenbasis of A.  Requires A positive definite.
double analytic_ou_expectation(const QuadraticGaussianObjective& obj, const PolynomialTestFunction& g,
                               const Vec& x0, double horizon, double eta, double batch = 1.0);

struct WeakErrorPoint {
    std::uint64_t l = 1;
    double error = 0.0;         // |E g(x_steps) - reference|
    double signed_error = 0.0;  // E g(x_steps) - reference
    double se = 0.0;            // standard error over replicas
    std::size_t n_replicas = 0;
    bool resolved = false;  // error exceeds 3 * se
};

struct WeakErrorCurve {
    std::vector<WeakErrorPoint> points;
    double reference = 0.0;  // oracle value of E g(X_T)
    bool all_noise_dominated = false;
};

// Terminal weak error of the interpolated dynamics against the analytic OU
// oracle: for each l, runs floor(l * horizon / eta) interpolation steps with
// per-step size eta / l and measures |E g - E g(X_T)| with a replica-spread
// standard error.  Replica streams are coupled across l (replica index r uses
// the same stream for every l), which changes only the correlation of the
// measured errors, never their expectations.
WeakErrorCurve measure_weak_error(const QuadraticGaussianObjective& obj, const PolynomialTestFunction& g,
                                  const Vec& x0, double horizon, double eta,
                                  const std::vector<std::uint64_t>& l_values, std::size_t n_replicas,
                                  std::uint64_t seed, const std::string& experiment_id,
                                  double batch = 1.0, unsigned n_threads = 1);

struct ReferenceValue {
    double value = 0.0;
    double se = 0.0;
};

// Monte Carlo substitute for the analytic oracle: Euler-Maruyama on the exact
// continuous dynamics of `obj` with substep eta / (50 * l_max) and its own
// replica budget.  Usable for objectives without a closed-form terminal law.
ReferenceValue fine_em_reference(const StochasticObjective& obj, const PolynomialTestFunction& g,
                                 const Vec& x0, double horizon, double eta, std::uint64_t l_max,
                                 std::size_t n_replicas, std::uint64_t seed,
                                 const std::string& experiment_id, double batch = 1.0,
                                 unsigned n_threads = 1);

struct OrderFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double ci_low = 0.0;   // 95% confidence interval for the slope
    double ci_high = 0.0;
    std::size_t n_used = 0;
};

// Weighted least squares of log(error) on log(l) over the resolved points of
// the curve (weights 1 / Var[log error], variances by the delta method).  The
// confidence interval uses a t quantile and inflates the slope standard error
// by the residual scale when the fit is worse than its nominal noise.  Throws
// std::domain_error when fewer than 3 points are resolved; callers treat that
// as an inconclusive measurement, not a failure.
OrderFit fit_order(const WeakErrorCurve& curve);

void write_weak_error_csv(const std::string& path, const WeakErrorCurve& curve);

}  // namespace sdelab
