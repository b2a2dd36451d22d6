#pragma once

#include <vector>

namespace casr::linalg {

/// Dense row-major square matrix.
struct Matrix {
    int n = 0;
    std::vector<double> a;

    Matrix() = default;
    explicit Matrix(int size) : n(size), a(static_cast<std::size_t>(size) * size, 0.0) {}
    static Matrix identity(int size);

    double& operator()(int i, int j) noexcept { return a[static_cast<std::size_t>(i) * n + j]; }
    double operator()(int i, int j) const noexcept { return a[static_cast<std::size_t>(i) * n + j]; }
};

Matrix multiply(const Matrix& x, const Matrix& y);
double trace(const Matrix& m);

struct EigenDecomposition {
    std::vector<double> values;  // ascending
    Matrix vectors;              // column k is the eigenvector of values[k]
    int sweeps = 0;
};

/// Cyclic Jacobi rotations on a symmetric matrix until the off-diagonal
/// Frobenius norm falls below tolerance * ||m||_F. Throws NumericFailure
/// after max_sweeps.
EigenDecomposition jacobi_eigen(const Matrix& m, double tolerance = 1e-12, int max_sweeps = 100);

/// Principal square root of a symmetric PSD matrix; negative eigenvalues
/// from round-off are treated as 0.
Matrix sqrt_psd(const Matrix& m);

}  // namespace casr::linalg
