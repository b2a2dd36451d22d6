#include "casr/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "casr/error.hpp"

namespace casr::linalg {

Matrix Matrix::identity(int size) {
    Matrix m(size);
    for (int i = 0; i < size; ++i) m(i, i) = 1.0;
    return m;
}

Matrix multiply(const Matrix& x, const Matrix& y) {
    if (x.n != y.n) throw InvalidArgument("matrix size mismatch in multiply");
    Matrix r(x.n);
    for (int i = 0; i < x.n; ++i)
        for (int k = 0; k < x.n; ++k) {
            const double xik = x(i, k);
            for (int j = 0; j < x.n; ++j) r(i, j) += xik * y(k, j);
        }
    return r;
}

double trace(const Matrix& m) {
    double t = 0.0;
    for (int i = 0; i < m.n; ++i) t += m(i, i);
    return t;
}

EigenDecomposition jacobi_eigen(const Matrix& m, double tolerance, int max_sweeps) {
    const int n = m.n;
    Matrix a = m;
    Matrix v = Matrix::identity(n);

    double total = 0.0;
    for (double x : a.a) total += x * x;
    const double threshold = tolerance * std::sqrt(total);

    auto off_norm = [&] {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) s += a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    EigenDecomposition out;
    int sweep = 0;
    while (off_norm() > threshold) {
        if (sweep == max_sweeps) {
            throw NumericFailure("Jacobi eigensolver did not converge in " + std::to_string(max_sweeps) + " sweeps");
        }
        ++sweep;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    out.sweeps = sweep;

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) < a(j, j); });
    out.values.resize(static_cast<std::size_t>(n));
    out.vectors = Matrix(n);
    for (int k = 0; k < n; ++k) {
        const int src = order[static_cast<std::size_t>(k)];
        out.values[static_cast<std::size_t>(k)] = a(src, src);
        for (int i = 0; i < n; ++i) out.vectors(i, k) = v(i, src);
    }
    return out;
}

Matrix sqrt_psd(const Matrix& m) {
    const EigenDecomposition e = jacobi_eigen(m);
    const int n = m.n;
    Matrix r(n);
    for (int k = 0; k < n; ++k) {
        const double s = std::sqrt(std::max(0.0, e.values[static_cast<std::size_t>(k)]));
        if (s == 0.0) continue;
        for (int i = 0; i < n; ++i) {
            const double vik = e.vectors(i, k) * s;
            for (int j = 0; j < n; ++j) r(i, j) += vik * e.vectors(j, k);
        }
    }
    return r;
}

}  // namespace casr::linalg
