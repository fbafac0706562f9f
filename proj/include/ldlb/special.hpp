// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

namespace ldlb {

/// Inverse error function on (-1, 1). Rational initial guess refined with two
/// Newton steps; relative error <= 1e-14 away from the |x| -> 1 tails.
double erfinv(double x);

/// log(sum(exp(v))) with max-shift.
double log_sum_exp(std::span<const double> v);

/// log(sigmoid(x)) evaluated without overflow.
double log_sigmoid(double x);

double softplus(double x);

} // namespace ldlb
