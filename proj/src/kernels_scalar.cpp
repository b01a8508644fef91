#include "sdelab/kernels.hpp"

#include <cmath>

namespace sdelab::kernels {
namespace {

double dot_scalar(std::size_t n, const double* x, const double* y) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s = std::fma(x[i], y[i], s);
    return s;
}

double sq_norm_scalar(std::size_t n, const double* x) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s = std::fma(x[i], x[i], s);
    return s;
}

double sum_scalar(std::size_t n, const double* x) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

void axpby_scalar(std::size_t n, double a, const double* x, double b, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(a, x[i], b * y[i]);
}

void combine_scalar(std::size_t n, double a, const double* x, double b, const double* y, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::fma(a, x[i], b * y[i]);
}

void axpy_scalar(std::size_t n, double a, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void scal_scalar(std::size_t n, double a, double* x) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void matvec_scalar(std::size_t rows, std::size_t cols, const double* A, const double* x, double* y) {
    for (std::size_t r = 0; r < rows; ++r) y[r] = dot_scalar(cols, A + r * cols, x);
}

void outer_acc_scalar(std::size_t d, double w, const double* v, double* C) {
    for (std::size_t i = 0; i < d; ++i) {
        const double wi = w * v[i];
        axpy_scalar(d, wi, v, C + i * d);
    }
}

void tensor3_acc_scalar(std::size_t d, double w, const double* v, double* T) {
    for (std::size_t i = 0; i < d; ++i) {
        const double wi = w * v[i];
        for (std::size_t j = 0; j < d; ++j) {
            axpy_scalar(d, wi * v[j], v, T + (i * d + j) * d);
        }
    }
}

}  // namespace

const KernelTable scalar_table = {
    dot_scalar,   sq_norm_scalar, sum_scalar,      axpby_scalar,    combine_scalar,
    axpy_scalar,  scal_scalar,    matvec_scalar,   outer_acc_scalar, tensor3_acc_scalar,
};

}  // namespace sdelab::kernels
