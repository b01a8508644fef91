#pragma once

#include <cstddef>
#include <vector>

namespace sdelab {

// Parameter vectors are plain contiguous doubles; every hot loop below runs
// through the kernels module, so no expression-template machinery is needed.
using Vec = std::vector<double>;

// Dense row-major matrix.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static Mat diag(const Vec& d) {
        Mat m(d.size(), d.size());
        for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
        return m;
    }
};

// Dense order-3 tensor, d*d*d entries, index (i,j,k) -> ((i*d)+j)*d+k.
struct Tensor3 {
    std::size_t d = 0;
    std::vector<double> a;

    Tensor3() = default;
    explicit Tensor3(std::size_t dim, double fill = 0.0) : d(dim), a(dim * dim * dim, fill) {}

    double& operator()(std::size_t i, std::size_t j, std::size_t k) { return a[(i * d + j) * d + k]; }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const { return a[(i * d + j) * d + k]; }
};

}  // namespace sdelab
