#pragma once

#include "sdelab/rng.hpp"
#include "sdelab/vec.hpp"

namespace sdelab {

struct EigenSym {
    Vec values;   // ascending
    Mat vectors;  // columns are eigenvectors, A = V diag(values) V^T
};

// Cyclic Jacobi for symmetric matrices. Dimensions here are small (d <= 64);
// robustness and simplicity are worth more than speed.
EigenSym jacobi_eigen(const Mat& A);

// Symmetric PSD square root via the eigendecomposition. Eigenvalues are
// clamped at zero; an eigenvalue below -tol_rel * max|lambda| indicates the
// input was not PSD and raises std::runtime_error.
Mat sym_sqrt(const Mat& A, double tol_rel = 1e-8);

Mat mat_mul(const Mat& A, const Mat& B);
Mat transpose(const Mat& A);

// Haar-ish random orthogonal matrix: Gaussian entries, modified Gram-Schmidt
// with a second orthogonalization pass.
Mat random_orthogonal(std::size_t d, Rng& rng);

double max_abs(const Mat& A);

}  // namespace sdelab
