#include "qc/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace qc {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw RuntimeFault("matmul: shape mismatch (" + std::to_string(a.rows) + "x" +
                           std::to_string(a.cols) + ") * (" + std::to_string(b.rows) + "x" +
                           std::to_string(b.cols) + ")");
    }
    Matrix out(a.rows, b.cols);
    // i-k-j order, fixed summation order for reproducibility.
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            double* orow = out.data.data() + i * out.cols;
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

Matrix identity(std::size_t n) {
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw RuntimeFault("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine(std::span<const double> a, std::span<const double> b) {
    double na = norm(a);
    double nb = norm(b);
    double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

void add_scaled(std::span<double> dst, std::span<const double> src, double scale) {
    if (dst.size() != src.size()) throw RuntimeFault("add_scaled: length mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace qc
