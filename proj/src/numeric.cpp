#include "cml/numeric.hpp"

#include <algorithm>
#include <cmath>

namespace cml {

double dot(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw DimensionMismatchError("dot: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
    return acc;
}

double norm2(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

double squared_distance(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw DimensionMismatchError("squared_distance: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u[i] - v[i];
        acc += d * d;
    }
    return acc;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    if (x.size() != y.size()) throw DimensionMismatchError("axpy: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

Vec l2_normalize(std::span<const double> v) {
    Vec out(v.begin(), v.end());
    l2_normalize_in_place(out);
    return out;
}

void l2_normalize_in_place(std::span<double> v) {
    const double n = norm2(v);
    if (n <= kNormEps) throw ZeroVectorError("l2_normalize: norm below 1e-12");
    const double inv = 1.0 / n;
    for (double& x : v) x *= inv;
}

double cosine(std::span<const double> u, std::span<const double> v) {
    return std::clamp(dot(u, v), -1.0, 1.0);
}

double log_sum_exp(std::span<const double> xs) {
    if (xs.empty()) throw EmptyInputError("log_sum_exp: empty input");
    const double m = *std::max_element(xs.begin(), xs.end());
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - m);
    return m + std::log(acc);
}

Vec stable_softmax(std::span<const double> xs) {
    if (xs.empty()) throw EmptyInputError("stable_softmax: empty input");
    const double m = *std::max_element(xs.begin(), xs.end());
    Vec out(xs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out[i] = std::exp(xs[i] - m);
        total += out[i];
    }
    const double inv = 1.0 / total;
    for (double& p : out) p *= inv;
    return out;
}

}  // namespace cml
