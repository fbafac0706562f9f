// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ldlb/nn.hpp"
#include "ldlb/score_prior.hpp"
#include "ldlb/sde.hpp"
#include "ldlb/time_sampling.hpp"
#include "ldlb/vae.hpp"

namespace ldlb {

/// Which t-batch trains the encoder in dual-objective training: a fresh draw
/// from the likelihood proposal, or the prior's draw reweighted to Wll.
enum class QObjT { Rew, SeparateLl };
enum class Algorithm { Alg1 = 1, Alg2 = 2, Alg3 = 3 };

std::string_view to_string(QObjT q);
QObjT parse_q_obj_t(std::string_view name);

struct TrainConfig {
    SdeSchedule schedule;
    WeightingMechanism mechanism = WeightingMechanism::Wll;
    TSamplingStrategy sgm_strategy = TSamplingStrategy::ImportanceSampled;
    /// Strategy for likelihood-weighted draws that train the encoder.
    TSamplingStrategy q_strategy = TSamplingStrategy::ImportanceSampled;
    QObjT q_obj_t = QObjT::SeparateLl;
    std::size_t batch_size = 128;
    double lr_vae = 1e-3;
    double lr_prior = 1e-3;
    std::size_t epochs_pretrain = 20;
    std::size_t epochs_main = 20;
    /// When > 0 these replace the epoch counts as total optimizer steps.
    std::size_t steps_pretrain = 0;
    std::size_t steps_main = 0;
    double kl_beta = 1.0;
    double kl_warmup_fraction = 0.3;
    std::uint64_t seed = 0;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Wll -> Alg1; otherwise separate_ll -> Alg2, rew -> Alg3.
Algorithm select_algorithm(const TrainConfig& cfg);

struct ModelConfig {
    std::size_t data_dim = 2;
    std::size_t latent_dim = 2;
    std::vector<std::size_t> vae_hidden{128, 128};
    std::vector<std::size_t> prior_hidden{256, 256, 256};
    std::size_t time_embed_dim = 64;
    DecoderKind decoder = DecoderKind::Gaussian;
    double alpha_init = 0.01;

    void validate() const;
};

/// Per-datapoint averages in nats. nelbo = recon + neg_entropy + cross_entropy.
struct LossBreakdown {
    double recon = 0.0;
    double neg_entropy = 0.0;
    double cross_entropy = 0.0;
    double nelbo = 0.0;
    double ce_const = 0.0;
    double kl = 0.0;         // pretraining only
    double prior_loss = 0.0; // mechanism-weighted prior objective
    double grad_norm = 0.0;
};

template <class Real>
struct TrainState {
    TrainConfig cfg;
    ModelConfig model;
    Vae<Real> vae;
    MixedScoreNet<Real> prior;
    AdamState<Real> adam_vae;
    AdamState<Real> adam_prior;
    std::uint64_t pretrain_step = 0;
    std::uint64_t step = 0;
    /// Directory receiving the diagnostic dump when a loss goes non-finite.
    std::string dump_dir;

    /// Builds and initializes all networks from cfg.seed.
    static TrainState create(const TrainConfig& cfg, const ModelConfig& model);
};

/// D/2 log(2 pi e sigma2(t_cutoff)).
double ce_constant(const SdeSchedule& s, std::size_t latent_dim);

std::vector<TDraw> draw_times(const SdeSchedule& s, WeightingMechanism m, TSamplingStrategy strategy, std::size_t n,
                              Rng& rng);

/// Per-row single-sample estimate of CE(q(z0) || p(z0)) for given latents:
/// combined_weight(draw, Wll) ||eps - eps_theta(z_t, t)||^2 + ce_const, with t
/// drawn for `mechanism` under `strategy`.
template <class Real>
std::vector<double> cross_entropy_estimate_latent(const MixedScoreNet<Real>& msn, const SdeSchedule& s,
                                                  WeightingMechanism mechanism, TSamplingStrategy strategy,
                                                  const Tensor<Real>& z0, Rng& rng);

/// Batch mean of the estimate with z0 ~ q(z0|x).
template <class Real>
double cross_entropy_estimate(const Vae<Real>& vae, const MixedScoreNet<Real>& msn, const SdeSchedule& s,
                              WeightingMechanism mechanism, TSamplingStrategy strategy, const Tensor<Real>& x,
                              Rng& rng);

template <class Real>
struct GradientEstimate {
    MixedGrads<Real> prior;
    VaeGrads<Real> vae;
    LossBreakdown loss;
};

/// Gradients every algorithm would apply, evaluated at the current parameters
/// (for Alg2 the encoder/decoder gradient uses the not-yet-updated prior).
/// Random streams derive from (stream_seed, purpose, step).
template <class Real>
GradientEstimate<Real> estimate_gradients(const TrainState<Real>& state, const Tensor<Real>& x, Algorithm alg,
                                          std::uint64_t stream_seed, std::uint64_t step);

template <class Real>
LossBreakdown train_step_alg1(TrainState<Real>& state, const Tensor<Real>& x);
template <class Real>
LossBreakdown train_step_alg2(TrainState<Real>& state, const Tensor<Real>& x);
template <class Real>
LossBreakdown train_step_alg3(TrainState<Real>& state, const Tensor<Real>& x);
/// Dispatches on select_algorithm(state.cfg).
template <class Real>
LossBreakdown train_step(TrainState<Real>& state, const Tensor<Real>& x);

/// VAE step against a standard-Normal prior with the linear KL warm-up.
template <class Real>
LossBreakdown pretrain_step(TrainState<Real>& state, const Tensor<Real>& x, std::size_t total_pretrain_steps);

double kl_weight(const TrainConfig& cfg, std::uint64_t step, std::size_t total_pretrain_steps);

/// recon + KL(q || N(0, I)) per datapoint with one posterior sample.
template <class Real>
LossBreakdown eval_standard_elbo(const Vae<Real>& vae, const Tensor<Real>& x, Rng& rng);

struct VarianceDiagnostic {
    double mean = 0.0;
    double std = 0.0;
    double stderr_mean = 0.0;
    std::size_t n = 0;
};

/// Per-draw objective is_weight * w(t) / 2 * ||eps - eps*(z_t, t)||^2 with
/// z0 ~ N(0, (1 - sigma2_0) I), alpha = 0 and eps* the optimal Normal eps.
VarianceDiagnostic variance_diagnostic(const SdeSchedule& s, WeightingMechanism m, TSamplingStrategy strategy,
                                       std::size_t n_draws, std::size_t latent_dim, std::uint64_t seed);

/// is_weight * w(t) * E||eps - eps*||^2 at fixed t for the same Gaussian setup,
/// using the closed form of the inner expectation.
double gaussian_integrand(const SdeSchedule& s, WeightingMechanism m, TSamplingStrategy strategy, double t,
                          std::size_t latent_dim);

} // namespace ldlb
