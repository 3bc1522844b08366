#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cml/errors.hpp"

namespace cml {

using Vec = std::vector<double>;

// Row-major dense matrix. Plain storage, no BLAS.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    bool same_shape(const Mat& other) const {
        return rows == other.rows && cols == other.cols;
    }
};

inline constexpr double kNormEps = 1e-12;

double dot(std::span<const double> u, std::span<const double> v);
double norm2(std::span<const double> v);
double squared_distance(std::span<const double> u, std::span<const double> v);

// y += a * x
void axpy(double a, std::span<const double> x, std::span<double> y);

// Throws ZeroVectorError when the norm is at or below kNormEps.
Vec l2_normalize(std::span<const double> v);
void l2_normalize_in_place(std::span<double> v);

// Cosine of two unit vectors, clamped to [-1, 1].
double cosine(std::span<const double> u, std::span<const double> v);

// log(sum(exp(xs))) via max-shift. Throws EmptyInputError.
double log_sum_exp(std::span<const double> xs);

// Shift-invariant softmax; entries in [0,1], sum 1. Throws EmptyInputError.
Vec stable_softmax(std::span<const double> xs);

}  // namespace cml
