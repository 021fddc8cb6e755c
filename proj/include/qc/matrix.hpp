#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qc/errors.hpp"

namespace qc {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. All model math runs in float64 so the
// finite-difference checks and the serving-equivalence bound stay tight.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix identity(std::size_t n);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
// Cosine of the angle between two vectors, clamped to [-1, 1]. Zero-norm
// handling is the caller's business (the two call sites disagree on it).
double cosine(std::span<const double> a, std::span<const double> b);

void add_scaled(std::span<double> dst, std::span<const double> src, double scale);

bool all_finite(std::span<const double> v);

}  // namespace qc
