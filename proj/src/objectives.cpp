#include "sdelab/objectives.hpp"

#include "sdelab/kernels.hpp"
#include "sdelab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace sdelab {

namespace {

void check_dim(const StochasticObjective& obj, const Vec& x, const char* where) {
    if (x.size() != obj.dim()) throw std::invalid_argument(std::string(where) + ": dimension mismatch");
}

std::size_t integral_batch(double batch, std::size_t dataset_n, const char* where) {
    if (!(batch >= 1.0) || batch != std::floor(batch))
        throw std::invalid_argument(std::string(where) + ": batch must be a positive integer");
    auto b = static_cast<std::size_t>(batch);
    if (dataset_n > 0 && b > dataset_n * 1000000)
        throw std::invalid_argument(std::string(where) + ": batch implausibly large");
    return b;
}

void require_symmetric(const Mat& m, const char* name) {
    if (m.rows != m.cols) throw std::invalid_argument(std::string(name) + " must be square");
    double scale = max_abs(m);
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = i + 1; j < m.cols; ++j)
            if (std::abs(m(i, j) - m(j, i)) > 1e-12 * std::max(1.0, scale))
                throw std::invalid_argument(std::string(name) + " must be symmetric");
}

}  // namespace

SamplingMode sampling_mode_from_string(const std::string& s) {
    if (s == "with_replacement") return SamplingMode::WithReplacement;
    if (s == "without_replacement") return SamplingMode::WithoutReplacement;
    if (s == "shuffle") return SamplingMode::Shuffle;
    throw std::invalid_argument("unknown sampling mode: " + s);
}

double StochasticObjective::noise_trace(const Vec& x, double batch) const {
    const Mat c = noise_covariance(x, batch);
    double t = 0.0;
    for (std::size_t i = 0; i < c.rows; ++i) t += c(i, i);
    return t;
}

// ---------------------------------------------------------------------------
// QuadraticGaussianObjective

QuadraticGaussianObjective::QuadraticGaussianObjective(Mat A, Vec b, Mat S)
    : A_(std::move(A)), S_(std::move(S)), b_(std::move(b)) {
    require_symmetric(A_, "A");
    require_symmetric(S_, "S");
    if (A_.rows != b_.size() || S_.rows != b_.size())
        throw std::invalid_argument("quadratic objective: A, b, S dimensions must agree");
    EigenSym ea = jacobi_eigen(A_);
    if (ea.values.front() <= 0.0)
        throw std::invalid_argument("quadratic objective: A must be positive definite");
    S_sqrt_ = sym_sqrt(S_);  // also validates PSD
}

double QuadraticGaussianObjective::loss(const Vec& x) const {
    check_dim(*this, x, "loss");
    Vec ax(dim());
    kernels::matvec(dim(), dim(), A_.a.data(), x.data(), ax.data());
    return 0.5 * kernels::dot(dim(), x.data(), ax.data()) - kernels::dot(dim(), b_.data(), x.data());
}

Vec QuadraticGaussianObjective::expected_gradient(const Vec& x) const {
    check_dim(*this, x, "expected_gradient");
    Vec g(dim());
    kernels::matvec(dim(), dim(), A_.a.data(), x.data(), g.data());
    kernels::axpy(dim(), -1.0, b_.data(), g.data());
    return g;
}

GradientSample QuadraticGaussianObjective::sample_gradient(const Vec& x, double batch,
                                                           SamplingMode mode,
                                                           SampleStream& stream) const {
    check_dim(*this, x, "sample_gradient");
    if (mode != SamplingMode::WithReplacement)
        throw std::invalid_argument("quadratic objective: only with_replacement sampling is defined "
                                    "for generator-based noise");
    const std::size_t b = integral_batch(batch, 0, "sample_gradient");
    GradientSample out;
    out.gradient = expected_gradient(x);
    // Mean of `b` iid N(0, S) draws == S^{1/2} z / sqrt(b).
    Vec z(dim());
    for (auto& v : z) v = stream.rng.normal();
    Vec noise(dim());
    kernels::matvec(dim(), dim(), S_sqrt_.a.data(), z.data(), noise.data());
    kernels::axpy(dim(), -1.0 / std::sqrt(static_cast<double>(b)), noise.data(), out.gradient.data());
    return out;
}

Mat QuadraticGaussianObjective::noise_covariance(const Vec& x, double batch) const {
    check_dim(*this, x, "noise_covariance");
    if (!(batch > 0.0)) throw std::invalid_argument("noise_covariance: batch must be positive");
    Mat c = S_;
    kernels::scal(c.a.size(), 1.0 / batch, c.a.data());
    return c;
}

Vec QuadraticGaussianObjective::hessian_vector_product(const Vec& x, const Vec& v) const {
    check_dim(*this, x, "hessian_vector_product");
    check_dim(*this, v, "hessian_vector_product");
    Vec out(dim());
    kernels::matvec(dim(), dim(), A_.a.data(), v.data(), out.data());
    return out;
}

Tensor3 QuadraticGaussianObjective::noise_third_moment(const Vec& x, double batch) const {
    check_dim(*this, x, "noise_third_moment");
    if (!(batch > 0.0)) throw std::invalid_argument("noise_third_moment: batch must be positive");
    return Tensor3(dim());  // Gaussian noise: identically zero
}

// ---------------------------------------------------------------------------
// RayleighQuotientObjective

RayleighQuotientObjective::RayleighQuotientObjective(std::vector<Mat> dataset)
    : data_(std::move(dataset)) {
    if (data_.empty()) throw std::invalid_argument("rayleigh objective: dataset must be nonempty");
    if (data_.size() > 10000) throw std::invalid_argument("rayleigh objective: dataset too large");
    d_ = data_.front().rows;
    if (d_ == 0) throw std::invalid_argument("rayleigh objective: zero dimension");
    mean_ = Mat(d_, d_);
    for (const Mat& m : data_) {
        require_symmetric(m, "dataset matrix");
        if (m.rows != d_) throw std::invalid_argument("rayleigh objective: inconsistent dimensions");
        kernels::axpy(mean_.a.size(), 1.0, m.a.data(), mean_.a.data());
    }
    kernels::scal(mean_.a.size(), 1.0 / static_cast<double>(data_.size()), mean_.a.data());
    for (const Mat& m : data_) {
        EigenSym e = jacobi_eigen(m);
        if (e.values.front() < -1e-10 * std::max(1.0, std::abs(e.values.back())))
            throw std::invalid_argument("rayleigh objective: dataset matrix is not PSD");
    }
    fast_cov_ = d_ <= 24;
    if (fast_cov_) {
        fourth_ = Mat(d_ * d_, d_ * d_);
        for (const Mat& m : data_) {
            for (std::size_t a = 0; a < d_; ++a) {
                for (std::size_t b = 0; b < d_; ++b) {
                    double* row = fourth_.a.data() + (a * d_ + b) * d_ * d_;
                    const double* rb = m.a.data() + b * d_;
                    for (std::size_t c = 0; c < d_; ++c) {
                        kernels::axpy(d_, m(a, c), rb, row + c * d_);
                    }
                }
            }
        }
        kernels::scal(fourth_.a.size(), 1.0 / static_cast<double>(data_.size()), fourth_.a.data());
    }
}

void RayleighQuotientObjective::second_moment_contraction(const Vec& x, Mat& m, Vec& w,
                                                          double& s) const {
    Vec xx(d_ * d_);
    for (std::size_t c = 0; c < d_; ++c) {
        for (std::size_t e = 0; e < d_; ++e) xx[c * d_ + e] = x[c] * x[e];
    }
    m = Mat(d_, d_);
    kernels::matvec(d_ * d_, d_ * d_, fourth_.a.data(), xx.data(), m.a.data());
    w.assign(d_, 0.0);
    kernels::matvec(d_, d_, m.a.data(), x.data(), w.data());
    s = kernels::dot(d_, x.data(), w.data());
}

double RayleighQuotientObjective::loss(const Vec& x) const {
    check_dim(*this, x, "loss");
    const double sq = kernels::sq_norm(d_, x.data());
    if (sq == 0.0) throw std::domain_error("rayleigh objective: undefined at x = 0");
    Vec y(d_);
    kernels::matvec(d_, d_, mean_.a.data(), x.data(), y.data());
    return kernels::dot(d_, x.data(), y.data()) / (2.0 * sq);
}

void RayleighQuotientObjective::per_sample_gradient(const Vec& x, double sq, const Vec& y, Vec& g,
                                                    double& li) const {
    li = kernels::dot(d_, x.data(), y.data()) / (2.0 * sq);
    // g = (y - 2 li x) / sq
    kernels::combine(d_, 1.0 / sq, y.data(), -2.0 * li / sq, x.data(), g.data());
}

Vec RayleighQuotientObjective::expected_gradient(const Vec& x) const {
    check_dim(*this, x, "expected_gradient");
    const double sq = kernels::sq_norm(d_, x.data());
    if (sq == 0.0) throw std::domain_error("rayleigh objective: gradient undefined at x = 0");
    Vec y(d_), g(d_);
    kernels::matvec(d_, d_, mean_.a.data(), x.data(), y.data());
    double li;
    per_sample_gradient(x, sq, y, g, li);
    return g;
}

GradientSample RayleighQuotientObjective::sample_gradient(const Vec& x, double batch,
                                                          SamplingMode mode,
                                                          SampleStream& stream) const {
    check_dim(*this, x, "sample_gradient");
    const double sq = kernels::sq_norm(d_, x.data());
    if (sq == 0.0) throw std::domain_error("rayleigh objective: gradient undefined at x = 0");
    const std::size_t n = data_.size();
    const std::size_t b = integral_batch(batch, n, "sample_gradient");

    GradientSample out;
    out.batch_ids.reserve(b);
    switch (mode) {
        case SamplingMode::WithReplacement:
            for (std::size_t i = 0; i < b; ++i)
                out.batch_ids.push_back(static_cast<std::uint32_t>(stream.rng.uniform_index(n)));
            break;
        case SamplingMode::WithoutReplacement: {
            if (b > n)
                throw std::invalid_argument("sample_gradient: batch exceeds dataset size for "
                                            "without_replacement sampling");
            // Partial Fisher-Yates over a scratch index vector.
            std::vector<std::uint32_t> idx(n);
            for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<std::uint32_t>(i);
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t j = i + stream.rng.uniform_index(n - i);
                std::swap(idx[i], idx[j]);
                out.batch_ids.push_back(idx[i]);
            }
            break;
        }
        case SamplingMode::Shuffle: {
            if (stream.perm.size() != n) {
                stream.perm.resize(n);
                for (std::size_t i = 0; i < n; ++i) stream.perm[i] = static_cast<std::uint32_t>(i);
                stream.cursor = n;  // force reshuffle on first use
            }
            for (std::size_t i = 0; i < b; ++i) {
                if (stream.cursor >= n) {
                    for (std::size_t k = n; k > 1; --k)
                        std::swap(stream.perm[k - 1], stream.perm[stream.rng.uniform_index(k)]);
                    stream.cursor = 0;
                }
                out.batch_ids.push_back(stream.perm[stream.cursor++]);
            }
            break;
        }
    }

    Vec y(d_), ysum(d_, 0.0);
    double lsum = 0.0;
    for (std::uint32_t id : out.batch_ids) {
        kernels::matvec(d_, d_, data_[id].a.data(), x.data(), y.data());
        kernels::axpy(d_, 1.0, y.data(), ysum.data());
        lsum += kernels::dot(d_, x.data(), y.data());
    }
    const double inv_b = 1.0 / static_cast<double>(b);
    const double lbar = lsum * inv_b / (2.0 * sq);
    out.gradient.resize(d_);
    kernels::combine(d_, inv_b / sq, ysum.data(), -2.0 * lbar / sq, x.data(), out.gradient.data());
    return out;
}

Mat RayleighQuotientObjective::noise_covariance(const Vec& x, double batch) const {
    check_dim(*this, x, "noise_covariance");
    if (!(batch > 0.0)) throw std::invalid_argument("noise_covariance: batch must be positive");
    if (!fast_cov_) return noise_covariance_enumerated(x, batch);
    const double sq = kernels::sq_norm(d_, x.data());
    if (sq == 0.0) throw std::domain_error("rayleigh objective: covariance undefined at x = 0");
    Mat m;
    Vec w;
    double s;
    second_moment_contraction(x, m, w, s);
    const Vec gbar = expected_gradient(x);
    const double inv2 = 1.0 / (sq * sq), inv3 = inv2 / sq, inv4 = inv3 / sq;
    Mat out(d_, d_);
    for (std::size_t a = 0; a < d_; ++a) {
        for (std::size_t b = 0; b < d_; ++b) {
            out(a, b) = (m(a, b) * inv2 - (w[a] * x[b] + x[a] * w[b]) * inv3 +
                         s * x[a] * x[b] * inv4 - gbar[a] * gbar[b]) /
                        batch;
        }
    }
    return out;
}

double RayleighQuotientObjective::noise_trace(const Vec& x, double batch) const {
    check_dim(*this, x, "noise_trace");
    if (!(batch > 0.0)) throw std::invalid_argument("noise_trace: batch must be positive");
    const double sq = kernels::sq_norm(d_, x.data());
    if (sq == 0.0) throw std::domain_error("rayleigh objective: covariance undefined at x = 0");
    if (fast_cov_) {
        Mat m;
        Vec w;
        double s;
        second_moment_contraction(x, m, w, s);
        double tr = 0.0;
        for (std::size_t a = 0; a < d_; ++a) tr += m(a, a);
        const Vec gbar = expected_gradient(x);
        const double inv2 = 1.0 / (sq * sq), inv3 = inv2 / sq;
        return (tr * inv2 - s * inv3 - kernels::sq_norm(d_, gbar.data())) / batch;
    }
    const std::size_t n = data_.size();
    Vec y(d_), g(d_), gbar(d_, 0.0);
    double sum_sq = 0.0, li;
    for (std::size_t i = 0; i < n; ++i) {
        kernels::matvec(d_, d_, data_[i].a.data(), x.data(), y.data());
        per_sample_gradient(x, sq, y, g, li);
        sum_sq += kernels::sq_norm(d_, g.data());
        kernels::axpy(d_, 1.0, g.data(), gbar.data());
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    kernels::scal(d_, inv_n, gbar.data());
    return (sum_sq * inv_n - kernels::sq_norm(d_, gbar.data())) / batch;
}

Mat RayleighQuotientObjective::noise_covariance_enumerated(const Vec& x, double batch) const {
    check_dim(*this, x, "noise_covariance");
    if (!(batch > 0.0)) throw std::invalid_argument("noise_covariance: batch must be positive");
    const double sq = kernels::sq_norm(d_, x.data());
    if (sq == 0.0) throw std::domain_error("rayleigh objective: covariance undefined at x = 0");
    const std::size_t n = data_.size();
    Vec y(d_), g(d_), gbar(d_, 0.0);
    Mat second(d_, d_);
    double li;
    for (std::size_t i = 0; i < n; ++i) {
        kernels::matvec(d_, d_, data_[i].a.data(), x.data(), y.data());
        per_sample_gradient(x, sq, y, g, li);
        kernels::outer_acc(d_, 1.0, g.data(), second.a.data());
        kernels::axpy(d_, 1.0, g.data(), gbar.data());
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    kernels::scal(d_, inv_n, gbar.data());
    kernels::scal(second.a.size(), inv_n, second.a.data());
    kernels::outer_acc(d_, -1.0, gbar.data(), second.a.data());
    kernels::scal(second.a.size(), 1.0 / batch, second.a.data());
    return second;
}

Vec RayleighQuotientObjective::hessian_vector_product(const Vec& x, const Vec& v) const {
    check_dim(*this, x, "hessian_vector_product");
    check_dim(*this, v, "hessian_vector_product");
    const double sq = kernels::sq_norm(d_, x.data());
    if (sq == 0.0) throw std::domain_error("rayleigh objective: hessian undefined at x = 0");
    const double lbar = loss(x);
    const Vec grad = expected_gradient(x);
    Vec av(d_);
    kernels::matvec(d_, d_, mean_.a.data(), v.data(), av.data());
    const double gv = kernels::dot(d_, grad.data(), v.data());
    const double xv = kernels::dot(d_, x.data(), v.data());
    // H v = (Abar v - 2 L v - 2 <grad, v> x) / sq - (2 <x, v> / sq) grad
    Vec out(d_);
    kernels::combine(d_, 1.0 / sq, av.data(), -2.0 * lbar / sq, v.data(), out.data());
    kernels::axpy(d_, -2.0 * gv / sq, x.data(), out.data());
    kernels::axpy(d_, -2.0 * xv / sq, grad.data(), out.data());
    return out;
}

Tensor3 RayleighQuotientObjective::noise_third_moment(const Vec& x, double batch) const {
    check_dim(*this, x, "noise_third_moment");
    if (!(batch > 0.0)) throw std::invalid_argument("noise_third_moment: batch must be positive");
    const double sq = kernels::sq_norm(d_, x.data());
    if (sq == 0.0) throw std::domain_error("rayleigh objective: third moment undefined at x = 0");
    const std::size_t n = data_.size();
    Vec y(d_), gbar(d_, 0.0);
    std::vector<Vec> grads(n, Vec(d_));
    double li;
    for (std::size_t i = 0; i < n; ++i) {
        kernels::matvec(d_, d_, data_[i].a.data(), x.data(), y.data());
        per_sample_gradient(x, sq, y, grads[i], li);
        kernels::axpy(d_, 1.0, grads[i].data(), gbar.data());
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    kernels::scal(d_, inv_n, gbar.data());
    Tensor3 t(d_);
    Vec c(d_);
    for (std::size_t i = 0; i < n; ++i) {
        kernels::combine(d_, 1.0, grads[i].data(), -1.0, gbar.data(), c.data());
        kernels::tensor3_acc(d_, inv_n, c.data(), t.a.data());
    }
    // Third cumulant of a batch mean scales as 1/batch^2.
    kernels::scal(t.a.size(), 1.0 / (batch * batch), t.a.data());
    return t;
}

void RayleighQuotientObjective::dump(const std::string& path) const {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("dump: cannot open " + path);
    const char magic[8] = {'S', 'D', 'L', 'B', 'R', 'Q', '0', '1'};
    std::uint64_t d = d_, n = data_.size();
    bool ok = std::fwrite(magic, 1, 8, f) == 8 && std::fwrite(&d, 8, 1, f) == 1 &&
              std::fwrite(&n, 8, 1, f) == 1;
    for (const Mat& m : data_)
        ok = ok && std::fwrite(m.a.data(), sizeof(double), m.a.size(), f) == m.a.size();
    const bool closed = std::fclose(f) == 0;
    if (!ok || !closed) throw std::runtime_error("dump: write failed for " + path);
}

RayleighQuotientObjective RayleighQuotientObjective::load(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("load: cannot open " + path);
    char magic[8];
    std::uint64_t d = 0, n = 0;
    bool ok = std::fread(magic, 1, 8, f) == 8 && std::fread(&d, 8, 1, f) == 1 &&
              std::fread(&n, 8, 1, f) == 1 && std::memcmp(magic, "SDLBRQ01", 8) == 0 && d > 0 &&
              d <= 64 && n > 0 && n <= 10000;
    std::vector<Mat> data;
    if (ok) {
        data.assign(n, Mat(d, d));
        for (Mat& m : data)
            ok = ok && std::fread(m.a.data(), sizeof(double), m.a.size(), f) == m.a.size();
    }
    std::fclose(f);
    if (!ok) throw std::runtime_error("load: malformed dataset file " + path);
    return RayleighQuotientObjective(std::move(data));
}

// ---------------------------------------------------------------------------
// PoissonLinearObjective

PoissonLinearObjective::PoissonLinearObjective(double rate) : rate_(rate) {
    if (!(rate > 0.0)) throw std::invalid_argument("poisson objective: rate must be positive");
}

double PoissonLinearObjective::loss(const Vec& x) const {
    check_dim(*this, x, "loss");
    return rate_ * x[0];
}

Vec PoissonLinearObjective::expected_gradient(const Vec& x) const {
    check_dim(*this, x, "expected_gradient");
    return Vec{rate_};
}

GradientSample PoissonLinearObjective::sample_gradient(const Vec& x, double batch,
                                                       SamplingMode mode,
                                                       SampleStream& stream) const {
    check_dim(*this, x, "sample_gradient");
    if (mode != SamplingMode::WithReplacement)
        throw std::invalid_argument("poisson objective: only with_replacement sampling is defined "
                                    "for generator-based noise");
    if (!(batch > 0.0)) throw std::invalid_argument("sample_gradient: batch must be positive");
    GradientSample out;
    const double z = static_cast<double>(stream.rng.poisson(batch * rate_));
    out.gradient = Vec{z / batch};
    return out;
}

Mat PoissonLinearObjective::noise_covariance(const Vec& x, double batch) const {
    check_dim(*this, x, "noise_covariance");
    if (!(batch > 0.0)) throw std::invalid_argument("noise_covariance: batch must be positive");
    Mat c(1, 1);
    c(0, 0) = rate_ / batch;
    return c;
}

Vec PoissonLinearObjective::hessian_vector_product(const Vec& x, const Vec& v) const {
    check_dim(*this, x, "hessian_vector_product");
    check_dim(*this, v, "hessian_vector_product");
    return Vec{0.0};
}

Tensor3 PoissonLinearObjective::noise_third_moment(const Vec& x, double batch) const {
    check_dim(*this, x, "noise_third_moment");
    if (!(batch > 0.0)) throw std::invalid_argument("noise_third_moment: batch must be positive");
    Tensor3 t(1);
    t(0, 0, 0) = rate_ / (batch * batch);
    return t;
}

// ---------------------------------------------------------------------------

std::vector<Mat> make_rayleigh_dataset(std::size_t d, std::size_t n, std::uint64_t seed,
                                       const Vec& base, double offdiag) {
    if (d == 0 || d > 64) throw std::invalid_argument("make_rayleigh_dataset: need 1 <= d <= 64");
    if (n == 0 || n > 10000)
        throw std::invalid_argument("make_rayleigh_dataset: need 1 <= n <= 10000");
    if (!base.empty() && base.size() != d)
        throw std::invalid_argument("make_rayleigh_dataset: base diagonal has wrong dimension");
    for (double b : base)
        if (b < 0.0) throw std::invalid_argument("make_rayleigh_dataset: base entries must be >= 0");
    if (!(offdiag >= 0.0)) throw std::invalid_argument("make_rayleigh_dataset: offdiag must be >= 0");

    Rng rng = derive_stream(seed, "rayleigh-dataset", 0);
    const Mat q = random_orthogonal(d, rng);
    const Mat qt = transpose(q);
    const double shift = offdiag > 0.0 ? offdiag * static_cast<double>(d) : 0.0;
    std::vector<Mat> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Mat inner(d, d);
        for (std::size_t j = 0; j < d; ++j)
            inner(j, j) = (base.empty() ? 0.0 : base[j]) + rng.uniform() + shift;
        if (offdiag > 0.0) {
            for (std::size_t r = 0; r < d; ++r) {
                for (std::size_t c = r + 1; c < d; ++c) {
                    const double v = offdiag * (2.0 * rng.uniform() - 1.0);
                    inner(r, c) = v;
                    inner(c, r) = v;
                }
            }
        }
        Mat a = mat_mul(qt, mat_mul(inner, q));
        // Symmetrize away the last ulp so construction-time checks are exact.
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = r + 1; c < d; ++c) {
                const double v = 0.5 * (a(r, c) + a(c, r));
                a(r, c) = v;
                a(c, r) = v;
            }
        out.push_back(std::move(a));
    }
    return out;
}

}  // namespace sdelab
