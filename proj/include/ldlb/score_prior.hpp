// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ldlb/nn.hpp"
#include "ldlb/sde.hpp"

namespace ldlb {

/// eps_theta(z, t) = (sigma_t / ring_var_t)(1 - alpha) * z + alpha * eps'(z, t),
/// alpha = logistic(alpha_logits), one coefficient per latent channel.
template <class Real>
class MixedScoreNet {
public:
    MixedScoreNet() = default;
    MixedScoreNet(std::size_t latent_dim, const std::vector<std::size_t>& hidden, std::size_t time_embed_dim = 64,
                  double alpha_init = 0.01);

    std::vector<Real> alpha_logits;
    DenseNet<Real> eps_net;
    /// Number of eps_theta forward evaluations since construction.
    mutable std::size_t forward_evals = 0;

    std::size_t latent_dim() const { return alpha_logits.size(); }
    std::vector<double> alpha() const;
    double alpha_max() const;
    void set_alpha(double a);

    /// alpha_logits, then the eps_net spans.
    std::vector<std::span<Real>> param_spans();
    std::vector<std::span<const Real>> param_spans() const;

    /// He-uniform hidden layers, zero final layer so eps' starts at 0.
    void init(Rng& rng);
};

template <class Real>
struct MixedGrads {
    std::vector<Real> dalpha_logits;
    Grads<Real> net;

    MixedGrads() = default;
    explicit MixedGrads(const MixedScoreNet<Real>& msn)
        : dalpha_logits(msn.latent_dim(), Real(0)), net(msn.eps_net) {}

    void zero();
    void add(const MixedGrads& other, Real scale = Real(1));
    void scale(Real s);
    double squared_norm() const;
    std::vector<std::span<Real>> spans();
    std::vector<std::span<const Real>> spans() const;
};

/// Forward pass state kept for one or more reverse passes.
template <class Real>
struct EpsForward {
    Tensor<Real> z;
    std::vector<double> t;
    std::vector<double> normal_coeff; // sigma_t / ring_var_t per row
    ForwardTrace<Real> trace;         // of eps'
    Tensor<Real> eps;                 // eps_theta
};

template <class Real>
EpsForward<Real> eps_forward(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<Real>& z,
                             std::span<const double> t);

/// One time per row of z.
template <class Real>
Tensor<Real> eps_theta(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<Real>& z,
                       std::span<const double> t);

/// -eps_theta / sigma_t. DomainError where sigma_t = 0.
template <class Real>
Tensor<Real> score(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<Real>& z,
                   std::span<const double> t);

template <class Real>
struct EpsGradResult {
    MixedGrads<Real> grads;
    Tensor<Real> z_grad;
};

/// Gradients of <upstream, eps_theta> from a stored forward pass.
template <class Real>
EpsGradResult<Real> eps_backward(const MixedScoreNet<Real>& msn, const EpsForward<Real>& fwd,
                                 const Tensor<Real>& upstream, bool want_param_grads = true);

template <class Real>
EpsGradResult<Real> grad_eps_theta(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<Real>& z,
                                   std::span<const double> t, const Tensor<Real>& upstream);

/// Per-row probe^T (d eps_theta / dz) probe.
template <class Real>
std::vector<double> eps_divergence_probe(const MixedScoreNet<Real>& msn, const SdeSchedule& s,
                                         const Tensor<Real>& z, std::span<const double> t,
                                         const Tensor<Real>& probe);

/// Exact tr(d eps_theta / dz) per row via D reverse passes (small D only).
template <class Real>
std::vector<double> eps_divergence_exact(const MixedScoreNet<Real>& msn, const SdeSchedule& s,
                                         const Tensor<Real>& z, std::span<const double> t);

} // namespace ldlb
