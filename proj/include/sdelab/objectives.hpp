#pragma once

#include "sdelab/rng.hpp"
#include "sdelab/vec.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace sdelab {

enum class SamplingMode { WithReplacement, WithoutReplacement, Shuffle };

SamplingMode sampling_mode_from_string(const std::string& s);

// Randomness carrier for gradient sampling. Shuffle mode keeps its epoch
// state here so objectives stay immutable.
struct SampleStream {
    Rng rng;
    std::vector<std::uint32_t> perm;
    std::size_t cursor = 0;

    explicit SampleStream(Rng r) : rng(std::move(r)) {}
};

struct GradientSample {
    Vec gradient;
    std::vector<std::uint32_t> batch_ids;  // empty for generator-based objectives
};

// A stochastic loss with exact oracles for the expected gradient, the
// gradient-noise covariance / third moment of the batch-mean gradient, and
// Hessian-vector products of the expected loss. Batch sizes are integral for
// dataset objectives; the Poisson family accepts fractional batches.
class StochasticObjective {
  public:
    virtual ~StochasticObjective() = default;

    virtual std::size_t dim() const = 0;
    virtual double loss(const Vec& x) const = 0;  // expected loss
    virtual Vec expected_gradient(const Vec& x) const = 0;
    virtual GradientSample sample_gradient(const Vec& x, double batch, SamplingMode mode,
                                           SampleStream& stream) const = 0;
    // Covariance of the batch-mean gradient; scales as 1/batch.
    virtual Mat noise_covariance(const Vec& x, double batch) const = 0;
    // Trace of noise_covariance; overridden where it is cheaper directly.
    virtual double noise_trace(const Vec& x, double batch) const;
    virtual Vec hessian_vector_product(const Vec& x, const Vec& v) const = 0;
    // Third central moment tensor of the batch-mean gradient; scales as 1/batch^2.
    virtual Tensor3 noise_third_moment(const Vec& x, double batch) const = 0;

    virtual bool scale_invariant() const { return false; }
    // True when noise_covariance does not depend on x (lets integrators cache
    // the matrix square root).
    virtual bool constant_noise() const { return false; }
    virtual std::size_t dataset_size() const { return 0; }  // 0 = generator-based
};

// L_xi(x) = 1/2 x^T A x - (b + xi)^T x with xi ~ N(0, S): expected gradient
// A x - b, noise covariance S at every x.
class QuadraticGaussianObjective final : public StochasticObjective {
  public:
    QuadraticGaussianObjective(Mat A, Vec b, Mat S);

    std::size_t dim() const override { return b_.size(); }
    double loss(const Vec& x) const override;
    Vec expected_gradient(const Vec& x) const override;
    GradientSample sample_gradient(const Vec& x, double batch, SamplingMode mode,
                                   SampleStream& stream) const override;
    Mat noise_covariance(const Vec& x, double batch) const override;
    Vec hessian_vector_product(const Vec& x, const Vec& v) const override;
    Tensor3 noise_third_moment(const Vec& x, double batch) const override;
    bool constant_noise() const override { return true; }

    const Mat& A() const { return A_; }
    const Vec& b() const { return b_; }
    const Mat& S() const { return S_; }

  private:
    Mat A_, S_, S_sqrt_;
    Vec b_;
};

// Mean Rayleigh quotient over a finite dataset of PSD matrices:
// L_i(x) = x^T A_i x / (2 x^T x). Scale invariant; every per-sample gradient
// is orthogonal to x.
class RayleighQuotientObjective final : public StochasticObjective {
  public:
    explicit RayleighQuotientObjective(std::vector<Mat> dataset);

    std::size_t dim() const override { return d_; }
    double loss(const Vec& x) const override;
    Vec expected_gradient(const Vec& x) const override;
    GradientSample sample_gradient(const Vec& x, double batch, SamplingMode mode,
                                   SampleStream& stream) const override;
    Mat noise_covariance(const Vec& x, double batch) const override;
    double noise_trace(const Vec& x, double batch) const override;
    Vec hessian_vector_product(const Vec& x, const Vec& v) const override;
    Tensor3 noise_third_moment(const Vec& x, double batch) const override;
    bool scale_invariant() const override { return true; }
    std::size_t dataset_size() const override { return data_.size(); }

    const Mat& sample_matrix(std::size_t i) const { return data_[i]; }
    const Mat& mean_matrix() const { return mean_; }

    // Reference implementation of noise_covariance by direct enumeration of
    // per-sample gradients.  noise_covariance itself uses a precontracted
    // fourth-moment table when the dimension is small enough; this method is
    // the equivalence oracle for that fast path.
    Mat noise_covariance_enumerated(const Vec& x, double batch) const;

    void dump(const std::string& path) const;
    static RayleighQuotientObjective load(const std::string& path);

  private:
    // Per-sample gradient at x given y = A_i x; also returns L_i(x).
    void per_sample_gradient(const Vec& x, double sq, const Vec& y, Vec& g, double& li) const;
    // mean_i over the dataset of M = (A_i x)(A_i x)^T together with w = M x
    // and s = x^T M x, evaluated through the fourth-moment table.
    void second_moment_contraction(const Vec& x, Mat& m, Vec& w, double& s) const;

    std::vector<Mat> data_;
    Mat mean_;
    std::size_t d_;
    // fourth_(a*d+b, c*d+e) = mean_i A_i(a,c) * A_i(b,e); empty when the
    // dimension is too large to precontract.
    Mat fourth_;
    bool fast_cov_ = false;
};

// 1-D linear loss L_a(x) = a x with a ~ Poisson(rate): batch-mean gradient is
// Poisson(batch * rate) / batch, so fractional batches are meaningful.
class PoissonLinearObjective final : public StochasticObjective {
  public:
    explicit PoissonLinearObjective(double rate);

    std::size_t dim() const override { return 1; }
    double loss(const Vec& x) const override;
    Vec expected_gradient(const Vec& x) const override;
    GradientSample sample_gradient(const Vec& x, double batch, SamplingMode mode,
                                   SampleStream& stream) const override;
    Mat noise_covariance(const Vec& x, double batch) const override;
    Vec hessian_vector_product(const Vec& x, const Vec& v) const override;
    Tensor3 noise_third_moment(const Vec& x, double batch) const override;
    bool constant_noise() const override { return true; }

    double rate() const { return rate_; }

  private:
    double rate_;
};

// Dataset generator: A_i = Q^T (D_i + offdiag * S_i + offdiag * d * I) Q with
// one random orthogonal Q and D_i = diag(base + U[0,1]^d). An empty base
// reproduces plain U[0,1]^d diagonals; a nonzero base shapes the mean spectrum
// (e.g. one soft mode) while leaving the per-sample jitter unchanged.
// With offdiag = 0 every A_i shares the eigenbasis Q, so per-sample gradients
// vanish exactly along the shared eigenvectors and the gradient noise there is
// purely multiplicative.  offdiag > 0 mixes in per-sample symmetric noise
// (zero-diagonal entries U[-1,1] scaled by offdiag), making the family
// non-commuting so the noise stays additive at the mean minimizer.  The
// offdiag * d * I shift keeps each sample PSD (Gershgorin) and, being a
// multiple of the identity, adds a constant to every per-sample loss without
// changing any gradient.
std::vector<Mat> make_rayleigh_dataset(std::size_t d, std::size_t n, std::uint64_t seed,
                                       const Vec& base = {}, double offdiag = 0.0);

}  // namespace sdelab
