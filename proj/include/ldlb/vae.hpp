// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "ldlb/nn.hpp"

namespace ldlb {

enum class DecoderKind { Bernoulli, Gaussian };

std::string_view to_string(DecoderKind k);
DecoderKind parse_decoder_kind(std::string_view name);

inline constexpr double kLogVarMin = -15.0;
inline constexpr double kLogVarMax = 5.0;
/// Bernoulli logits are clipped to this magnitude inside the likelihood.
inline constexpr double kLogitBound = 50.0;
/// Scale applied to the He-initialised output layers of encoder and decoder.
inline constexpr double kOutputInitGain = 0.1;

/// Encoder emits (mean, log-variance) of q(z0|x); the decoder emits Bernoulli
/// logits or (mean, log-variance) of p(x|z0).
template <class Real>
class Vae {
public:
    Vae() = default;
    Vae(std::size_t data_dim, std::size_t latent_dim, const std::vector<std::size_t>& hidden, DecoderKind kind);

    DenseNet<Real> encoder;
    DenseNet<Real> decoder;
    std::size_t data_dim = 0;
    std::size_t latent_dim = 0;
    DecoderKind kind = DecoderKind::Gaussian;

    void init(Rng& rng);
    /// Encoder spans, then decoder spans.
    std::vector<std::span<Real>> param_spans();
    std::vector<std::span<const Real>> param_spans() const;
};

template <class Real>
struct VaeGrads {
    Grads<Real> enc;
    Grads<Real> dec;

    VaeGrads() = default;
    explicit VaeGrads(const Vae<Real>& v) : enc(v.encoder), dec(v.decoder) {}

    void zero() { enc.zero(); dec.zero(); }
    void add(const VaeGrads& o, Real s = Real(1)) { enc.add(o.enc, s); dec.add(o.dec, s); }
    void scale(Real s) { enc.scale(s); dec.scale(s); }
    double squared_norm() const { return enc.squared_norm() + dec.squared_norm(); }
    std::vector<std::span<Real>> spans();
    std::vector<std::span<const Real>> spans() const;
};

template <class Real>
struct Posterior {
    Tensor<Real> mean;
    Tensor<Real> logvar; // clamped to [kLogVarMin, kLogVarMax]
    Tensor<Real> var;
    std::vector<unsigned char> clamped; // 1 where the raw log-variance was clamped
    ForwardTrace<Real> trace;
};

template <class Real>
Posterior<Real> encode(const Vae<Real>& vae, const Tensor<Real>& x);

/// mean + sqrt(var) * eps.
template <class Real>
Tensor<Real> reparam_sample(const Tensor<Real>& mean, const Tensor<Real>& var, const Tensor<Real>& eps);

/// Per-row log N(z0; mean, diag(var)).
template <class Real>
std::vector<double> neg_entropy_term(const Tensor<Real>& mean, const Tensor<Real>& var, const Tensor<Real>& z0);

/// Per-row KL(N(mean, var) || N(0, I)).
template <class Real>
std::vector<double> standard_kl(const Tensor<Real>& mean, const Tensor<Real>& var);

template <class Real>
struct ReconResult {
    std::vector<double> nll;  // per-row -log p(x | z0)
    Tensor<Real> out_grad;    // d(sum of nll) / d(decoder output)
    ForwardTrace<Real> trace; // decoder trace
};

template <class Real>
ReconResult<Real> recon_forward(const Vae<Real>& vae, const Tensor<Real>& x, const Tensor<Real>& z0);

/// Per-row -log p(x | z0).
template <class Real>
std::vector<double> recon_term(const Vae<Real>& vae, const Tensor<Real>& x, const Tensor<Real>& z0);

/// Accumulates decoder gradients of sum_i row_scale[i] * nll_i and returns
/// the gradient w.r.t. z0 (rows scaled identically).
template <class Real>
Tensor<Real> decoder_backward(const Vae<Real>& vae, const ReconResult<Real>& r, std::span<const double> row_scale,
                              VaeGrads<Real>& accum);

/// Accumulates encoder gradients given dL/dmean and dL/dlogvar (w.r.t. the
/// clamped log-variance; clamped entries pass no gradient).
template <class Real>
void encoder_backward(const Vae<Real>& vae, const Posterior<Real>& post, const Tensor<Real>& dmean,
                      const Tensor<Real>& dlogvar, VaeGrads<Real>& accum);

/// Decoder mean: Bernoulli probabilities or Gaussian means.
template <class Real>
Tensor<Real> decode_mean(const Vae<Real>& vae, const Tensor<Real>& z0);

/// Two-level hierarchical prior p(z) = prod_l N(z_l; mu_l(z_<l), sigma_l(z_<l)^2).
struct HierGroupParams {
    using Evaluator = std::function<void(std::span<const double> prev, std::span<double> mu, std::span<double> sigma)>;
    std::vector<std::size_t> group_dims;
    std::vector<Evaluator> groups; // groups[l] sees the concatenation of z_0 .. z_{l-1}

    std::size_t total_dim() const;
    /// Random two-group instance: constant group 0, affine mean and
    /// exp(tanh(affine)) scale for group 1.
    static HierGroupParams synthetic_two_group(std::size_t d0, std::size_t d1, Rng& rng);
};

struct HierTransform {
    std::vector<double> eps;
    double log_det = 0.0; // log |d eps / d z| = -sum log sigma_l
};

HierTransform hier_to_standard(const HierGroupParams& g, std::span<const double> z);
std::vector<double> standard_to_hier(const HierGroupParams& g, std::span<const double> eps);
double hier_log_density(const HierGroupParams& g, std::span<const double> z);

} // namespace ldlb
