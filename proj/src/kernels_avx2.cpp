#include "sdelab/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define SDELAB_X86 1
#include <immintrin.h>
#endif

#include <cmath>

namespace sdelab::kernels {

#if SDELAB_X86
namespace {

// Horizontal sum with a fixed combination order so results are reproducible.
inline double hsum(__m256d v) {
    alignas(32) double lane[4];
    _mm256_store_pd(lane, v);
    return ((lane[0] + lane[1]) + lane[2]) + lane[3];
}

double dot_avx2(std::size_t n, const double* x, const double* y) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
    double s = hsum(acc);
    for (; i < n; ++i) s = std::fma(x[i], y[i], s);
    return s;
}

double sq_norm_avx2(std::size_t n, const double* x) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s = std::fma(x[i], x[i], s);
    return s;
}

double sum_avx2(std::size_t n, const double* x) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

void axpby_avx2(std::size_t n, double a, const double* x, double b, double* y) {
    const __m256d va = _mm256_set1_pd(a), vb = _mm256_set1_pd(b);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d r = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                    _mm256_mul_pd(vb, _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(y + i, r);
    }
    for (; i < n; ++i) y[i] = std::fma(a, x[i], b * y[i]);
}

void combine_avx2(std::size_t n, double a, const double* x, double b, const double* y, double* out) {
    const __m256d va = _mm256_set1_pd(a), vb = _mm256_set1_pd(b);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d r = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                    _mm256_mul_pd(vb, _mm256_loadu_pd(y + i)));
        _mm256_storeu_pd(out + i, r);
    }
    for (; i < n; ++i) out[i] = std::fma(a, x[i], b * y[i]);
}

void axpy_avx2(std::size_t n, double a, const double* x, double* y) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d r = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, r);
    }
    for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void scal_avx2(std::size_t n, double a, double* x) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

void matvec_avx2(std::size_t rows, std::size_t cols, const double* A, const double* x, double* y) {
    for (std::size_t r = 0; r < rows; ++r) y[r] = dot_avx2(cols, A + r * cols, x);
}

void outer_acc_avx2(std::size_t d, double w, const double* v, double* C) {
    for (std::size_t i = 0; i < d; ++i) axpy_avx2(d, w * v[i], v, C + i * d);
}

void tensor3_acc_avx2(std::size_t d, double w, const double* v, double* T) {
    for (std::size_t i = 0; i < d; ++i) {
        const double wi = w * v[i];
        for (std::size_t j = 0; j < d; ++j) axpy_avx2(d, wi * v[j], v, T + (i * d + j) * d);
    }
}

}  // namespace

const KernelTable avx2_table = {
    dot_avx2,  sq_norm_avx2, sum_avx2,    axpby_avx2,     combine_avx2,
    axpy_avx2, scal_avx2,    matvec_avx2, outer_acc_avx2, tensor3_acc_avx2,
};

#else

const KernelTable avx2_table = {nullptr, nullptr, nullptr, nullptr, nullptr,
                                nullptr, nullptr, nullptr, nullptr, nullptr};

#endif

}  // namespace sdelab::kernels
