#pragma once

#include <cstddef>
#include <string>

// Data-parallel inner loops. Every kernel has a scalar reference
// implementation and may have ISA-specific variants; one table is selected at
// process start (CPU detection, overridable via SDELAB_SIMD=scalar|avx2) and
// never changes afterwards, so results are reproducible on a given machine.
//
// Scalar variants use std::fma wherever the vector variants use fused
// multiply-add, so elementwise kernels agree bit-for-bit across backends;
// reductions may differ by accumulation order within a few ulp.

namespace sdelab::kernels {

struct KernelTable {
    double (*dot)(std::size_t n, const double* x, const double* y);
    double (*sq_norm)(std::size_t n, const double* x);
    double (*sum)(std::size_t n, const double* x);
    // y[i] = a*x[i] + b*y[i]
    void (*axpby)(std::size_t n, double a, const double* x, double b, double* y);
    // out[i] = a*x[i] + b*y[i]
    void (*combine)(std::size_t n, double a, const double* x, double b, const double* y, double* out);
    // y[i] += a*x[i]
    void (*axpy)(std::size_t n, double a, const double* x, double* y);
    void (*scal)(std::size_t n, double a, double* x);
    // y = A x, A row-major rows x cols
    void (*matvec)(std::size_t rows, std::size_t cols, const double* A, const double* x, double* y);
    // C += w * v v^T, C row-major d x d
    void (*outer_acc)(std::size_t d, double w, const double* v, double* C);
    // T += w * v (x) v (x) v, T dense d^3
    void (*tensor3_acc)(std::size_t d, double w, const double* v, double* T);
};

const KernelTable& table();
const std::string& backend();           // "scalar" or "avx2"
bool set_backend(const std::string&);   // false if unsupported on this CPU
bool cpu_has_avx2();

extern const KernelTable scalar_table;
extern const KernelTable avx2_table;    // entries null on non-x86 builds

// Convenience wrappers.
inline double dot(std::size_t n, const double* x, const double* y) { return table().dot(n, x, y); }
inline double sq_norm(std::size_t n, const double* x) { return table().sq_norm(n, x); }
inline double sum(std::size_t n, const double* x) { return table().sum(n, x); }
inline void axpby(std::size_t n, double a, const double* x, double b, double* y) { table().axpby(n, a, x, b, y); }
inline void combine(std::size_t n, double a, const double* x, double b, const double* y, double* out) {
    table().combine(n, a, x, b, y, out);
}
inline void axpy(std::size_t n, double a, const double* x, double* y) { table().axpy(n, a, x, y); }
inline void scal(std::size_t n, double a, double* x) { table().scal(n, a, x); }
inline void matvec(std::size_t rows, std::size_t cols, const double* A, const double* x, double* y) {
    table().matvec(rows, cols, A, x, y);
}
inline void outer_acc(std::size_t d, double w, const double* v, double* C) { table().outer_acc(d, w, v, C); }
inline void tensor3_acc(std::size_t d, double w, const double* v, double* T) { table().tensor3_acc(d, w, v, T); }

}  // namespace sdelab::kernels
