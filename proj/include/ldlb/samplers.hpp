// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "ldlb/nn.hpp"
#include "ldlb/score_prior.hpp"
#include "ldlb/sde.hpp"
#include "ldlb/vae.hpp"

namespace ldlb {

struct OdeSolverConfig {
    double rtol = 1e-5;
    double atol = 1e-5;
    double t_start = 1.0;
    /// 0 selects the default floor: 1e-5 when sigma2_0 > 0, else 1e-6.
    double t_end = 0.0;
    std::size_t max_steps = 100000;
    /// Integrate the whole batch with shared steps (true) or each row alone.
    bool joint = true;

    void validate() const;
};

double default_t_end(const SdeSchedule& s);
double resolved_t_end(const SdeSchedule& s, const OdeSolverConfig& cfg);

struct OdeStats {
    std::size_t nfe = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;

    OdeStats& operator+=(const OdeStats& o) {
        nfe += o.nfe;
        accepted += o.accepted;
        rejected += o.rejected;
        return *this;
    }
};

using OdeRhs = std::function<void(double t, std::span<const double> y, std::span<double> dy)>;

/// Dormand-Prince 5(4) with FSAL and a PI step-size controller (safety 0.9,
/// step ratio clamped to [0.2, 10]). Integrates y from t0 to t1 in place;
/// t1 < t0 integrates backwards. nfe = 1 + 6 * (accepted + rejected).
OdeStats dopri5(const OdeRhs& rhs, double t0, double t1, std::vector<double>& y, double rtol, double atol,
                std::size_t max_steps);

/// f(t) z - g^2(t)/2 * score = f(t) z + g^2(t) / (2 sigma_t) * eps_theta.
template <class Real>
Tensor<double> probability_flow_rhs(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<double>& z,
                                    double t);

struct SampleResult {
    Tensor<double> z0;
    OdeStats stats;
};

/// Integrates the probability-flow ODE from t_start down to t_end.
template <class Real>
SampleResult ode_sample(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<double>& z1,
                        const OdeSolverConfig& cfg);

/// Euler-Maruyama on the reverse SDE over a uniform grid from 1 to t_end:
/// z <- z - (f z - g^2 score) h + g sqrt(h) xi.
template <class Real>
Tensor<double> ancestral_sample(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<double>& z1,
                                std::size_t n_steps, Rng& rng, double t_end = 0.0);

struct LikelihoodResult {
    std::vector<double> log_p;     // per row, averaged over probes
    std::vector<double> std_error; // per row, across probes (0 when exact)
    OdeStats stats;
};

/// log p(z0) = log N(z1; 0, I) + int_{t_end}^{1} div(rhs) dt. The divergence
/// uses n_probes Rademacher probes (fixed per trajectory) or the exact trace
/// when n_probes = 0.
template <class Real>
LikelihoodResult ode_log_likelihood(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<double>& z0,
                                    const OdeSolverConfig& cfg, std::size_t n_probes, Rng& rng);

struct NelboResult {
    double nelbo = 0.0;
    double std_error = 0.0;
    double recon = 0.0;
    double neg_entropy = 0.0;
    double cross_entropy = 0.0; // -log p(z0) averaged
    std::size_t count = 0;
};

/// recon + neg_entropy - log p(z0) averaged over x with one posterior sample each.
template <class Real>
NelboResult eval_nelbo(const Vae<Real>& vae, const MixedScoreNet<Real>& msn, const SdeSchedule& s,
                       const Tensor<Real>& x, const OdeSolverConfig& cfg, std::size_t n_probes, Rng& rng);

struct IwBiasResult {
    double bias = 0.0;
    double std_error = 0.0;
    /// Second-order prediction (s^2 / 2) (1 - sum p_k^2), p = softmax(w).
    double predicted = 0.0;
};

/// Mean over trials of logmeanexp(w + s eps) minus logmeanexp(w), using the
/// first K entries of true_logps (cycled if shorter).
IwBiasResult iw_bias_probe(std::span<const double> true_logps, double noise_var, std::size_t K, std::size_t n_trials,
                           std::uint64_t seed);

} // namespace ldlb
