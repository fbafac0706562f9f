// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>

#include "ldlb/sde.hpp"

namespace ldlb {

/// Objective weightings: Wll = g^2/sigma2 (likelihood), Wun = 1, Wre = g^2.
enum class WeightingMechanism { Wll, Wun, Wre };
enum class TSamplingStrategy { Uniform, ImportanceSampled };

std::string_view to_string(WeightingMechanism m);
std::string_view to_string(TSamplingStrategy s);
WeightingMechanism parse_mechanism(std::string_view name);
TSamplingStrategy parse_strategy(std::string_view name);

struct TDraw {
    double t = 0.0;
    double is_weight = 1.0;  // 1 / r(t); (1 - t_cutoff) for Uniform
    double obj_weight = 1.0; // w(t) of the mechanism the draw was made for
};

double weight(const SdeSchedule& s, WeightingMechanism m, double t);

/// Throws ConfigError when `strategy` has no proposal for (schedule, mechanism).
void check_supported(const SdeSchedule& s, WeightingMechanism m, TSamplingStrategy strategy);

/// Importance-sampling density on [t_cutoff, 1]. GeometricVpsde + Wll is
/// uniform; SubVpsde reuses the LinearVpsde proposals with the same beta and
/// sigma2_0.
double proposal_pdf(const SdeSchedule& s, WeightingMechanism m, double t);
double proposal_cdf(const SdeSchedule& s, WeightingMechanism m, double t);

/// Deterministic in rho in [0, 1]. rho = 0 maps to t_cutoff, rho = 1 to 1.
TDraw sample_t(const SdeSchedule& s, WeightingMechanism m, TSamplingStrategy strategy, double rho);

/// is_weight * w_target(t) / 2: the per-draw factor on ||eps - eps_theta||^2
/// that makes the estimator unbiased for the target-weighted integral.
double combined_weight(const SdeSchedule& s, const TDraw& draw, WeightingMechanism target);

} // namespace ldlb
