// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldlb/sde.hpp"

#include <cmath>
#include <string>

#include "ldlb/error.hpp"

namespace ldlb {

namespace {

constexpr double kTimeSlack = 1e-12;

double log_ratio(const SdeSchedule& s) { return std::log(s.sigma2_max / s.sigma2_min); }

// sigma2_min (sigma2_max / sigma2_min)^t, shared by GeometricVpsde and Vesde.
double geometric_part(const SdeSchedule& s, double t) {
    return s.sigma2_min * std::exp(t * log_ratio(s));
}

// Time where a SubVpsde with sigma2_0 > 0 reaches its minimum variance.
double sub_vpsde_turning_point(const SdeSchedule& s) {
    if (s.sigma2_0 <= 0.0) return 0.0;
    const double target_b = -std::log1p(-0.5 * s.sigma2_0);
    const double d = s.beta1 - s.beta0;
    return 2.0 * target_b / (s.beta0 + std::sqrt(s.beta0 * s.beta0 + 2.0 * d * target_b));
}

// Root of beta0 t + (beta1 - beta0) t^2 / 2 = b for b >= 0.
double time_from_integrated_beta(const SdeSchedule& s, double b) {
    const double d = s.beta1 - s.beta0;
    return 2.0 * b / (s.beta0 + std::sqrt(s.beta0 * s.beta0 + 2.0 * d * b));
}

double clamp_variance(const SdeSchedule& s, double v, double lo, double hi, const char* what) {
    const double slack = 1e-12 * std::max(1.0, std::abs(hi));
    if (!(v >= lo - slack && v <= hi + slack)) {
        throw DomainError(std::string(what) + ": variance " + std::to_string(v) +
                          " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "] for " +
                          std::string(to_string(s.kind)));
    }
    return std::min(std::max(v, lo), hi);
}

} // namespace

std::string_view to_string(SdeKind kind) {
    switch (kind) {
        case SdeKind::LinearVpsde: return "linear_vpsde";
        case SdeKind::GeometricVpsde: return "geometric_vpsde";
        case SdeKind::Vesde: return "vesde";
        case SdeKind::SubVpsde: return "sub_vpsde";
    }
    return "unknown";
}

SdeKind parse_sde_kind(std::string_view name) {
    if (name == "linear_vpsde" || name == "vpsde") return SdeKind::LinearVpsde;
    if (name == "geometric_vpsde") return SdeKind::GeometricVpsde;
    if (name == "vesde") return SdeKind::Vesde;
    if (name == "sub_vpsde") return SdeKind::SubVpsde;
    throw ConfigError("schedule.kind: unknown SDE kind '" + std::string(name) + "'");
}

double SdeSchedule::default_cutoff(const SdeSchedule& s) {
    if (s.kind == SdeKind::SubVpsde && s.sigma2_0 > 0.0) return sub_vpsde_turning_point(s);
    return s.sigma2_0 == 0.0 ? 0.01 : 0.0;
}

SdeSchedule SdeSchedule::linear_vpsde(double beta0, double beta1, double sigma2_0,
                                      std::optional<double> t_cutoff) {
    SdeSchedule s;
    s.kind = SdeKind::LinearVpsde;
    s.beta0 = beta0;
    s.beta1 = beta1;
    s.sigma2_0 = sigma2_0;
    s.t_cutoff = t_cutoff.value_or(default_cutoff(s));
    s.validate();
    return s;
}

SdeSchedule SdeSchedule::sub_vpsde(double beta0, double beta1, double sigma2_0,
                                   std::optional<double> t_cutoff) {
    SdeSchedule s;
    s.kind = SdeKind::SubVpsde;
    s.beta0 = beta0;
    s.beta1 = beta1;
    s.sigma2_0 = sigma2_0;
    s.t_cutoff = t_cutoff.value_or(default_cutoff(s));
    s.validate();
    return s;
}

SdeSchedule SdeSchedule::geometric_vpsde(double sigma2_min, double sigma2_max,
                                         std::optional<double> t_cutoff) {
    SdeSchedule s;
    s.kind = SdeKind::GeometricVpsde;
    s.sigma2_min = sigma2_min;
    s.sigma2_max = sigma2_max;
    s.sigma2_0 = sigma2_min;
    s.t_cutoff = t_cutoff.value_or(0.0);
    s.validate();
    return s;
}

SdeSchedule SdeSchedule::vesde(double sigma2_min, double sigma2_max, std::optional<double> t_cutoff) {
    SdeSchedule s;
    s.kind = SdeKind::Vesde;
    s.sigma2_min = sigma2_min;
    s.sigma2_max = sigma2_max;
    s.sigma2_0 = sigma2_min;
    s.t_cutoff = t_cutoff.value_or(0.0);
    s.validate();
    return s;
}

void SdeSchedule::validate() const {
    if (!(t_cutoff >= 0.0 && t_cutoff < 1.0)) throw ConfigError("schedule.t_cutoff: must lie in [0, 1)");
    switch (kind) {
        case SdeKind::LinearVpsde:
        case SdeKind::SubVpsde:
            if (!(beta0 > 0.0)) throw ConfigError("schedule.beta0: must be > 0");
            if (!(beta1 > beta0)) throw ConfigError("schedule.beta1: must be > beta0");
            if (!(sigma2_0 >= 0.0 && sigma2_0 < 1.0)) throw ConfigError("schedule.sigma2_0: must lie in [0, 1)");
            if (sigma2_0 == 0.0 && !(t_cutoff > 0.0))
                throw ConfigError("schedule.t_cutoff: must be > 0 when sigma2_0 = 0");
            if (kind == SdeKind::SubVpsde && t_cutoff < sub_vpsde_turning_point(*this) - 1e-15)
                throw ConfigError("schedule.t_cutoff: sub_vpsde variance decreases below t = " +
                                  std::to_string(sub_vpsde_turning_point(*this)) + " for this sigma2_0");
            break;
        case SdeKind::GeometricVpsde:
            if (!(sigma2_min > 0.0)) throw ConfigError("schedule.sigma2_min: must be > 0");
            if (!(sigma2_max > sigma2_min)) throw ConfigError("schedule.sigma2_max: must be > sigma2_min");
            if (!(sigma2_max < 1.0)) throw ConfigError("schedule.sigma2_max: must be < 1 for geometric_vpsde");
            if (sigma2_0 != sigma2_min) throw ConfigError("schedule.sigma2_0: must equal sigma2_min");
            break;
        case SdeKind::Vesde:
            if (!(sigma2_min > 0.0)) throw ConfigError("schedule.sigma2_min: must be > 0");
            if (!(sigma2_max > sigma2_min)) throw ConfigError("schedule.sigma2_max: must be > sigma2_min");
            if (!(sigma2_min < 1.0)) throw ConfigError("schedule.sigma2_min: must be < 1 for vesde");
            if (sigma2_0 != sigma2_min) throw ConfigError("schedule.sigma2_0: must equal sigma2_min");
            break;
    }
}

double checked_time(double t) {
    if (t >= 0.0 && t <= 1.0) return t;
    if (t < 0.0 && t >= -kTimeSlack) return 0.0;
    if (t > 1.0 && t <= 1.0 + kTimeSlack) return 1.0;
    throw DomainError("time " + std::to_string(t) + " outside [0, 1]");
}

double integrated_beta(const SdeSchedule& s, double t) {
    t = checked_time(t);
    return s.beta0 * t + 0.5 * (s.beta1 - s.beta0) * t * t;
}

double beta(const SdeSchedule& s, double t) {
    t = checked_time(t);
    switch (s.kind) {
        case SdeKind::LinearVpsde:
        case SdeKind::SubVpsde: return s.beta0 + (s.beta1 - s.beta0) * t;
        case SdeKind::GeometricVpsde: {
            const double v = geometric_part(s, t);
            return v / (1.0 - v) * log_ratio(s);
        }
        case SdeKind::Vesde: return geometric_part(s, t) * log_ratio(s);
    }
    return 0.0;
}

double drift_coeff(const SdeSchedule& s, double t) {
    return s.kind == SdeKind::Vesde ? 0.0 : -0.5 * beta(s, t);
}

double diffusion_sq(const SdeSchedule& s, double t) {
    if (s.kind == SdeKind::SubVpsde) {
        return beta(s, t) * -std::expm1(-2.0 * integrated_beta(s, t));
    }
    return beta(s, t);
}

KernelParams kernel(const SdeSchedule& s, double t) {
    t = checked_time(t);
    KernelParams k;
    switch (s.kind) {
        case SdeKind::LinearVpsde: {
            const double b = integrated_beta(s, t);
            const double decay = std::exp(-b);
            k.mean_coeff = std::exp(-0.5 * b);
            k.var = -std::expm1(-b) + s.sigma2_0 * decay;
            k.ring_var = 1.0;
            break;
        }
        case SdeKind::SubVpsde: {
            const double b = integrated_beta(s, t);
            const double decay = std::exp(-b);
            const double grown = -std::expm1(-b);
            k.mean_coeff = std::exp(-0.5 * b);
            k.var = grown * grown + s.sigma2_0 * decay;
            k.ring_var = grown * grown + decay;
            break;
        }
        case SdeKind::GeometricVpsde: {
            k.var = geometric_part(s, t);
            k.mean_coeff = std::sqrt((1.0 - k.var) / (1.0 - s.sigma2_min));
            k.ring_var = 1.0;
            break;
        }
        case SdeKind::Vesde: {
            const double g = geometric_part(s, t);
            k.mean_coeff = 1.0;
            k.var = s.sigma2_0 - s.sigma2_min + g;
            k.ring_var = 1.0 - s.sigma2_min + g;
            break;
        }
    }
    return k;
}

double var_derivative(const SdeSchedule& s, double t) {
    t = checked_time(t);
    switch (s.kind) {
        case SdeKind::LinearVpsde:
            return beta(s, t) * (1.0 - s.sigma2_0) * std::exp(-integrated_beta(s, t));
        case SdeKind::SubVpsde: {
            const double decay = std::exp(-integrated_beta(s, t));
            return beta(s, t) * decay * (2.0 * (1.0 - decay) - s.sigma2_0);
        }
        case SdeKind::GeometricVpsde:
        case SdeKind::Vesde: return geometric_part(s, t) * log_ratio(s);
    }
    return 0.0;
}

double ring_var_derivative(const SdeSchedule& s, double t) {
    t = checked_time(t);
    switch (s.kind) {
        case SdeKind::LinearVpsde:
        case SdeKind::GeometricVpsde: return 0.0;
        case SdeKind::SubVpsde: {
            const double decay = std::exp(-integrated_beta(s, t));
            return beta(s, t) * decay * (1.0 - 2.0 * decay);
        }
        case SdeKind::Vesde: return geometric_part(s, t) * log_ratio(s);
    }
    return 0.0;
}

double inverse_var(const SdeSchedule& s, double v) {
    const double lo = kernel(s, s.t_cutoff).var;
    const double hi = kernel(s, 1.0).var;
    v = clamp_variance(s, v, lo, hi, "inverse_var");
    double t = 0.0;
    switch (s.kind) {
        case SdeKind::LinearVpsde: {
            const double b = std::log1p(-s.sigma2_0) - std::log1p(-v);
            t = time_from_integrated_beta(s, std::max(b, 0.0));
            break;
        }
        case SdeKind::SubVpsde: {
            // y = exp(-B) solves y^2 - (2 - sigma2_0) y + (1 - v) = 0; the
            // smaller root is the increasing branch of sigma2_t.
            const double a = 2.0 - s.sigma2_0;
            const double disc = std::max(a * a - 4.0 * (1.0 - v), 0.0);
            const double large = 0.5 * (a + std::sqrt(disc));
            const double y = (1.0 - v) / large;
            t = time_from_integrated_beta(s, std::max(-std::log(y), 0.0));
            break;
        }
        case SdeKind::GeometricVpsde: t = std::log(v / s.sigma2_min) / log_ratio(s); break;
        case SdeKind::Vesde: t = std::log((v - s.sigma2_0 + s.sigma2_min) / s.sigma2_min) / log_ratio(s); break;
    }
    return std::min(std::max(t, s.t_cutoff), 1.0);
}

double inverse_ring_var(const SdeSchedule& s, double v) {
    switch (s.kind) {
        case SdeKind::Vesde: {
            const double lo = kernel(s, s.t_cutoff).ring_var;
            const double hi = kernel(s, 1.0).ring_var;
            v = clamp_variance(s, v, lo, hi, "inverse_ring_var");
            const double t = std::log((v - 1.0 + s.sigma2_min) / s.sigma2_min) / log_ratio(s);
            return std::min(std::max(t, s.t_cutoff), 1.0);
        }
        default: throw DomainError("inverse_ring_var: ring variance is not invertible for " +
                                   std::string(to_string(s.kind)));
    }
}

namespace {

template <class Real>
void sample_transition_impl(const SdeSchedule& s, std::span<const Real> z0, double t,
                            std::span<const Real> eps, std::span<Real> out) {
    if (z0.size() != eps.size() || z0.size() != out.size())
        throw DomainError("sample_transition: dimension mismatch");
    const KernelParams k = kernel(s, t);
    const double sd = std::sqrt(k.var);
    for (std::size_t i = 0; i < z0.size(); ++i) {
        out[i] = static_cast<Real>(k.mean_coeff * static_cast<double>(z0[i]) + sd * static_cast<double>(eps[i]));
    }
}

} // namespace

void sample_transition(const SdeSchedule& s, std::span<const double> z0, double t,
                       std::span<const double> eps, std::span<double> out) {
    sample_transition_impl(s, z0, t, eps, out);
}

void sample_transition(const SdeSchedule& s, std::span<const float> z0, double t,
                       std::span<const float> eps, std::span<float> out) {
    sample_transition_impl(s, z0, t, eps, out);
}

double ring_var_identity_residual(const SdeSchedule& s, double t) {
    const KernelParams k = kernel(s, t);
    return std::abs(k.ring_var - k.var - (1.0 - s.sigma2_0) * k.mean_coeff * k.mean_coeff);
}

} // namespace ldlb
