#include "sdelab/linalg.hpp"

#include "sdelab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sdelab {

EigenSym jacobi_eigen(const Mat& A) {
    if (A.rows != A.cols) throw std::invalid_argument("jacobi_eigen: matrix must be square");
    const std::size_t n = A.rows;
    Mat a = A;
    Mat v = Mat::identity(n);

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
        return std::sqrt(2.0 * s);
    };

    double scale = 0.0;
    for (double x : a.a) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) return {Vec(n, 0.0), v};
    const double tol = 1e-14 * scale;

    for (int sweep = 0; sweep < 64 && off_norm() > tol; ++sweep) {
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                // Smaller-angle root keeps rotations stable.
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    Vec values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = a(i, i);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });

    EigenSym out;
    out.values.resize(n);
    out.vectors = Mat(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = values[order[j]];
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
    }
    return out;
}

Mat sym_sqrt(const Mat& A, double tol_rel) {
    EigenSym e = jacobi_eigen(A);
    const std::size_t n = A.rows;
    double lmax = 0.0;
    for (double l : e.values) lmax = std::max(lmax, std::abs(l));
    for (double l : e.values) {
        if (l < -tol_rel * lmax) {
            throw std::runtime_error("sym_sqrt: matrix has a significantly negative eigenvalue; "
                                     "input is not PSD");
        }
    }
    Mat out(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const double w = std::sqrt(std::max(e.values[k], 0.0));
        if (w == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) {
            const double wi = w * e.vectors(i, k);
            for (std::size_t j = 0; j < n; ++j) out(i, j) += wi * e.vectors(j, k);
        }
    }
    return out;
}

Mat mat_mul(const Mat& A, const Mat& B) {
    if (A.cols != B.rows) throw std::invalid_argument("mat_mul: shape mismatch");
    Mat out(A.rows, B.cols);
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t k = 0; k < A.cols; ++k) {
            const double aik = A(i, k);
            if (aik == 0.0) continue;
            kernels::axpy(B.cols, aik, &B.a[k * B.cols], &out.a[i * B.cols]);
        }
    return out;
}

Mat transpose(const Mat& A) {
    Mat out(A.cols, A.rows);
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t j = 0; j < A.cols; ++j) out(j, i) = A(i, j);
    return out;
}

Mat random_orthogonal(std::size_t d, Rng& rng) {
    Mat q(d, d);
    for (auto& x : q.a) x = rng.normal();
    // Columns orthonormalized by modified Gram-Schmidt, run twice.
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < d; ++j) {
            for (std::size_t k = 0; k < j; ++k) {
                double proj = 0.0;
                for (std::size_t i = 0; i < d; ++i) proj += q(i, j) * q(i, k);
                for (std::size_t i = 0; i < d; ++i) q(i, j) -= proj * q(i, k);
            }
            double nrm = 0.0;
            for (std::size_t i = 0; i < d; ++i) nrm += q(i, j) * q(i, j);
            nrm = std::sqrt(nrm);
            if (nrm < 1e-12) throw std::runtime_error("random_orthogonal: degenerate draw");
            for (std::size_t i = 0; i < d; ++i) q(i, j) /= nrm;
        }
    }
    return q;
}

double max_abs(const Mat& A) {
    double m = 0.0;
    for (double x : A.a) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace sdelab
