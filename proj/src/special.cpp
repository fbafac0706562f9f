// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldlb/special.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "ldlb/error.hpp"

namespace ldlb {

double erfinv(double x) {
    if (!(x > -1.0 && x < 1.0)) {
        if (x == 1.0) return std::numeric_limits<double>::infinity();
        if (x == -1.0) return -std::numeric_limits<double>::infinity();
        throw DomainError("erfinv: argument outside (-1, 1)");
    }
    if (x == 0.0) return 0.0;

    // Giles' single-precision rational approximation as the starting point.
    double w = -std::log((1.0 - x) * (1.0 + x));
    double p;
    if (w < 5.0) {
        w -= 2.5;
        p = 2.81022636e-08;
        p = 3.43273939e-07 + p * w;
        p = -3.5233877e-06 + p * w;
        p = -4.39150654e-06 + p * w;
        p = 0.00021858087 + p * w;
        p = -0.00125372503 + p * w;
        p = -0.00417768164 + p * w;
        p = 0.246640727 + p * w;
        p = 1.50140941 + p * w;
    } else {
        w = std::sqrt(w) - 3.0;
        p = -0.000200214257;
        p = 0.000100950558 + p * w;
        p = 0.00134934322 + p * w;
        p = -0.00367342844 + p * w;
        p = 0.00573950773 + p * w;
        p = -0.0076224613 + p * w;
        p = 0.00943887047 + p * w;
        p = 1.00167406 + p * w;
        p = 2.83297682 + p * w;
    }
    double y = p * x;

    const double two_over_sqrt_pi = 2.0 / std::sqrt(std::numbers::pi);
    for (int i = 0; i < 2; ++i) {
        const double residual = std::erf(y) - x;
        y -= residual / (two_over_sqrt_pi * std::exp(-y * y));
    }
    return y;
}

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) return -std::numeric_limits<double>::infinity();
    const double m = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double e : v) s += std::exp(e - m);
    return m + std::log(s);
}

double log_sigmoid(double x) {
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

} // namespace ldlb
