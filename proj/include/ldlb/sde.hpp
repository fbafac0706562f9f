// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace ldlb {

enum class SdeKind { LinearVpsde, GeometricVpsde, Vesde, SubVpsde };

std::string_view to_string(SdeKind kind);
/// Accepts "linear_vpsde", "geometric_vpsde", "vesde", "sub_vpsde".
SdeKind parse_sde_kind(std::string_view name);

/// Diffusion SDE dz = f(t) z dt + g(t) dw on t in [0, 1] together with its
/// initial variance sigma2_0 and the lower integration/training bound
/// t_cutoff. Only the fields relevant to `kind` are read.
///
/// LinearVpsde / SubVpsde: beta(t) = beta0 + (beta1 - beta0) t.
/// GeometricVpsde: sigma2_t = sigma2_min (sigma2_max / sigma2_min)^t, VP drift.
/// Vesde: zero drift, sigma2_t grows geometrically from sigma2_min.
struct SdeSchedule {
    SdeKind kind = SdeKind::LinearVpsde;
    double beta0 = 0.1;
    double beta1 = 20.0;
    double sigma2_min = 0.0;
    double sigma2_max = 0.0;
    double sigma2_0 = 0.0;
    double t_cutoff = 0.01;

    static SdeSchedule linear_vpsde(double beta0, double beta1, double sigma2_0 = 0.0,
                                    std::optional<double> t_cutoff = std::nullopt);
    static SdeSchedule sub_vpsde(double beta0, double beta1, double sigma2_0 = 0.0,
                                 std::optional<double> t_cutoff = std::nullopt);
    static SdeSchedule geometric_vpsde(double sigma2_min, double sigma2_max,
                                       std::optional<double> t_cutoff = std::nullopt);
    static SdeSchedule vesde(double sigma2_min, double sigma2_max,
                             std::optional<double> t_cutoff = std::nullopt);

    /// Default cutoff: 0.01 when sigma2_0 = 0, otherwise 0 (or, for a
    /// SubVpsde with sigma2_0 > 0, the point where sigma2_t starts to grow).
    static double default_cutoff(const SdeSchedule& s);

    /// Throws ConfigError naming the offending field.
    void validate() const;

    bool is_variance_preserving() const {
        return kind == SdeKind::LinearVpsde || kind == SdeKind::GeometricVpsde;
    }
};

/// Mean coefficient m(t), variance sigma2_t of q(z_t | z_0) and the variance
/// ring_var of diffused standard-Normal data.
struct KernelParams {
    double mean_coeff = 1.0;
    double var = 0.0;
    double ring_var = 1.0;
};

/// Instantaneous rate: beta(t) for the VPSDE family, g^2(t) for Vesde.
double beta(const SdeSchedule& s, double t);
/// Linear drift coefficient f(t).
double drift_coeff(const SdeSchedule& s, double t);
/// Squared diffusion coefficient g^2(t).
double diffusion_sq(const SdeSchedule& s, double t);
/// B(t) = int_0^t beta(s) ds for LinearVpsde / SubVpsde (closed form).
double integrated_beta(const SdeSchedule& s, double t);

KernelParams kernel(const SdeSchedule& s, double t);
/// d sigma2_t / dt, analytic.
double var_derivative(const SdeSchedule& s, double t);
/// d ring_var / dt, analytic.
double ring_var_derivative(const SdeSchedule& s, double t);

/// Time t with sigma2(t) = v for v in [sigma2(t_cutoff), sigma2(1)].
double inverse_var(const SdeSchedule& s, double v);
/// Time t with ring_var(t) = v (Vesde and SubVpsde only; VP kinds have a
/// constant ring variance).
double inverse_ring_var(const SdeSchedule& s, double v);

/// m(t) z0 + sqrt(sigma2_t) eps, written into `out`.
void sample_transition(const SdeSchedule& s, std::span<const double> z0, double t,
                       std::span<const double> eps, std::span<double> out);
void sample_transition(const SdeSchedule& s, std::span<const float> z0, double t,
                       std::span<const float> eps, std::span<float> out);

/// |ring_var - var - (1 - sigma2_0) m(t)^2|.
double ring_var_identity_residual(const SdeSchedule& s, double t);

/// t clamped into [0, 1] when it is outside by at most 1e-12; DomainError otherwise.
double checked_time(double t);

} // namespace ldlb
