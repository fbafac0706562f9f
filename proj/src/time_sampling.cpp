// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldlb/time_sampling.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ldlb/error.hpp"
#include "ldlb/special.hpp"

namespace ldlb {

namespace {

// Every proposal is r(t) = phi'(t) / (phi(1) - phi(t_cutoff)) for a monotone phi.
enum class Family { Uniform, LogVar, Var, Erf, VeLogRatio, VeLogRing };

struct Proposal {
    Family family;
    SdeSchedule sched; // schedule the proposal is derived from
};

Proposal make_proposal(const SdeSchedule& s, WeightingMechanism m) {
    SdeSchedule base = s;
    if (s.kind == SdeKind::SubVpsde) base.kind = SdeKind::LinearVpsde;
    switch (base.kind) {
        case SdeKind::LinearVpsde:
            switch (m) {
                case WeightingMechanism::Wll: return {Family::LogVar, base};
                case WeightingMechanism::Wun: return {Family::Erf, base};
                case WeightingMechanism::Wre: return {Family::Var, base};
            }
            break;
        case SdeKind::GeometricVpsde:
            switch (m) {
                case WeightingMechanism::Wll: return {Family::Uniform, base};
                case WeightingMechanism::Wun:
                    throw ConfigError("t_sampling: no importance-sampling proposal for geometric_vpsde with wun");
                case WeightingMechanism::Wre: return {Family::Var, base};
            }
            break;
        case SdeKind::Vesde:
            switch (m) {
                case WeightingMechanism::Wll:
                case WeightingMechanism::Wun: return {Family::VeLogRatio, base};
                case WeightingMechanism::Wre: return {Family::VeLogRing, base};
            }
            break;
        case SdeKind::SubVpsde: break;
    }
    throw ConfigError("t_sampling: unsupported proposal");
}

double erf_scale(const SdeSchedule& s) { return std::sqrt(0.5 * (s.beta1 - s.beta0)); }
double erf_shift(const SdeSchedule& s) { return s.beta0 / (s.beta1 - s.beta0); }
double erf_arg(const SdeSchedule& s, double t) { return erf_scale(s) * (t + erf_shift(s)); }

double ve_log_ratio(const SdeSchedule& s) { return std::log(s.sigma2_max / s.sigma2_min); }

double phi(const Proposal& p, double t) {
    const SdeSchedule& s = p.sched;
    switch (p.family) {
        case Family::Uniform: return t;
        case Family::LogVar: return std::log(kernel(s, t).var);
        case Family::Var: return kernel(s, t).var;
        case Family::Erf: {
            // int (1 - sigma2_t) dt up to the constant factor (1 - sigma2_0)
            // exp(beta0^2 / (2 d)) sqrt(pi / (2 d)), d = beta1 - beta0.
            return std::erf(erf_arg(s, t));
        }
        case Family::VeLogRatio: {
            const KernelParams k = kernel(s, t);
            return std::log(k.var) - std::log(k.ring_var);
        }
        case Family::VeLogRing: return std::log(kernel(s, t).ring_var);
    }
    return 0.0;
}

double phi_derivative(const Proposal& p, double t) {
    const SdeSchedule& s = p.sched;
    switch (p.family) {
        case Family::Uniform: return 1.0;
        case Family::LogVar: return var_derivative(s, t) / kernel(s, t).var;
        case Family::Var: return var_derivative(s, t);
        case Family::Erf: {
            const double x = erf_arg(s, t);
            return 2.0 / std::sqrt(std::numbers::pi) * std::exp(-x * x) * erf_scale(s);
        }
        case Family::VeLogRatio: {
            const KernelParams k = kernel(s, t);
            return ve_log_ratio(s) * (1.0 - s.sigma2_min) / k.ring_var;
        }
        case Family::VeLogRing: return ring_var_derivative(s, t) / kernel(s, t).ring_var;
    }
    return 0.0;
}

double phi_inverse(const Proposal& p, double u) {
    const SdeSchedule& s = p.sched;
    switch (p.family) {
        case Family::Uniform: return u;
        case Family::LogVar: return inverse_var(s, std::exp(u));
        case Family::Var: return inverse_var(s, u);
        case Family::Erf: return erfinv(u) / erf_scale(s) - erf_shift(s);
        case Family::VeLogRatio: {
            // k = sigma2 / ring_var = g / (c + g) with g = sigma2_min r^t, c = 1 - sigma2_min.
            const double k = std::exp(u);
            const double c = 1.0 - s.sigma2_min;
            const double g = k * c / (1.0 - k);
            return std::log(g / s.sigma2_min) / ve_log_ratio(s);
        }
        case Family::VeLogRing: return inverse_ring_var(s, std::exp(u));
    }
    return 0.0;
}

double clamp_to_support(const SdeSchedule& s, double t) {
    return std::min(std::max(t, s.t_cutoff), 1.0);
}

void check_support_time(const SdeSchedule& s, double t) {
    if (t < s.t_cutoff - 1e-12 || t > 1.0 + 1e-12)
        throw DomainError("t_sampling: t = " + std::to_string(t) + " outside [t_cutoff, 1]");
}

} // namespace

std::string_view to_string(WeightingMechanism m) {
    switch (m) {
        case WeightingMechanism::Wll: return "wll";
        case WeightingMechanism::Wun: return "wun";
        case WeightingMechanism::Wre: return "wre";
    }
    return "unknown";
}

std::string_view to_string(TSamplingStrategy s) {
    return s == TSamplingStrategy::Uniform ? "uniform" : "is";
}

WeightingMechanism parse_mechanism(std::string_view name) {
    if (name == "wll" || name == "ll") return WeightingMechanism::Wll;
    if (name == "wun" || name == "un") return WeightingMechanism::Wun;
    if (name == "wre" || name == "re") return WeightingMechanism::Wre;
    throw ConfigError("mechanism: unknown weighting '" + std::string(name) + "'");
}

TSamplingStrategy parse_strategy(std::string_view name) {
    if (name == "uniform") return TSamplingStrategy::Uniform;
    if (name == "is" || name == "importance_sampled") return TSamplingStrategy::ImportanceSampled;
    throw ConfigError("sgm_strategy: unknown t-sampling strategy '" + std::string(name) + "'");
}

double weight(const SdeSchedule& s, WeightingMechanism m, double t) {
    switch (m) {
        case WeightingMechanism::Wll: {
            const double v = kernel(s, t).var;
            if (!(v > 0.0)) throw DomainError("weight: sigma2_t = 0 at t = " + std::to_string(t));
            return diffusion_sq(s, t) / v;
        }
        case WeightingMechanism::Wun: return 1.0;
        case WeightingMechanism::Wre: return diffusion_sq(s, t);
    }
    return 0.0;
}

void check_supported(const SdeSchedule& s, WeightingMechanism m, TSamplingStrategy strategy) {
    if (strategy == TSamplingStrategy::ImportanceSampled) (void)make_proposal(s, m);
}

double proposal_pdf(const SdeSchedule& s, WeightingMechanism m, double t) {
    check_support_time(s, t);
    t = clamp_to_support(s, t);
    const Proposal p = make_proposal(s, m);
    return phi_derivative(p, t) / (phi(p, 1.0) - phi(p, s.t_cutoff));
}

double proposal_cdf(const SdeSchedule& s, WeightingMechanism m, double t) {
    check_support_time(s, t);
    t = clamp_to_support(s, t);
    const Proposal p = make_proposal(s, m);
    const double lo = phi(p, s.t_cutoff);
    return (phi(p, t) - lo) / (phi(p, 1.0) - lo);
}

TDraw sample_t(const SdeSchedule& s, WeightingMechanism m, TSamplingStrategy strategy, double rho) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw DomainError("sample_t: rho outside [0, 1]");
    TDraw d;
    if (strategy == TSamplingStrategy::Uniform) {
        d.t = s.t_cutoff + (1.0 - s.t_cutoff) * rho;
        d.is_weight = 1.0 - s.t_cutoff;
    } else {
        const Proposal p = make_proposal(s, m);
        const double lo = phi(p, s.t_cutoff);
        const double hi = phi(p, 1.0);
        if (rho == 0.0) {
            d.t = s.t_cutoff;
        } else if (rho == 1.0) {
            d.t = 1.0;
        } else {
            d.t = clamp_to_support(s, phi_inverse(p, lo + rho * (hi - lo)));
        }
        d.is_weight = (hi - lo) / phi_derivative(p, d.t);
    }
    d.obj_weight = weight(s, m, d.t);
    return d;
}

double combined_weight(const SdeSchedule& s, const TDraw& draw, WeightingMechanism target) {
    return draw.is_weight * weight(s, target, draw.t) * 0.5;
}

} // namespace ldlb
