// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldlb/objectives.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

#include <json.hpp>

#include "ldlb/error.hpp"

namespace ldlb {

namespace {

template <class Real>
Tensor<Real> normal_tensor(std::size_t n, std::size_t d, Rng& rng) {
    Tensor<Real> t(n, d);
    for (auto& v : t.data) v = static_cast<Real>(rng.normal());
    return t;
}

// ||eps - eps_theta(z_t, t)||^2 per row for z_t = m(t) z0 + sigma_t eps.
template <class Real>
struct DsmEval {
    std::vector<TDraw> draws;
    Tensor<Real> noise;
    std::vector<double> mean_coeff;
    EpsForward<Real> fwd;
    std::vector<double> dsm;
};

template <class Real>
DsmEval<Real> dsm_eval(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<Real>& z0,
                       std::vector<TDraw> draws, Tensor<Real> noise) {
    const std::size_t n = z0.rows();
    const std::size_t d = z0.cols();
    DsmEval<Real> e;
    e.draws = std::move(draws);
    e.noise = std::move(noise);
    e.mean_coeff.resize(n);
    std::vector<double> t(n);
    Tensor<Real> zt(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = e.draws[i].t;
        const KernelParams k = kernel(s, t[i]);
        e.mean_coeff[i] = k.mean_coeff;
        const double sd = std::sqrt(k.var);
        for (std::size_t j = 0; j < d; ++j)
            zt(i, j) = static_cast<Real>(k.mean_coeff * static_cast<double>(z0(i, j)) + sd * e.noise(i, j));
    }
    e.fwd = eps_forward(msn, s, zt, t);
    e.dsm.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double r = static_cast<double>(e.noise(i, j)) - e.fwd.eps(i, j);
            acc += r * r;
        }
        e.dsm[i] = acc;
    }
    return e;
}

// Upstream gradient of sum_i scale_i * dsm_i with respect to eps_theta.
template <class Real>
Tensor<Real> dsm_upstream(const DsmEval<Real>& e, std::span<const double> scale) {
    Tensor<Real> up(e.noise.rows(), e.noise.cols());
    for (std::size_t i = 0; i < up.rows(); ++i)
        for (std::size_t j = 0; j < up.cols(); ++j)
            up(i, j) = static_cast<Real>(-2.0 * scale[i] * (static_cast<double>(e.noise(i, j)) - e.fwd.eps(i, j)));
    return up;
}

template <class Real>
struct EncodedBatch {
    Posterior<Real> post;
    Tensor<Real> eps0;
    Tensor<Real> z0;
    ReconResult<Real> recon;
    std::vector<double> neg_entropy;
};

template <class Real>
EncodedBatch<Real> encode_batch(const Vae<Real>& vae, const Tensor<Real>& x, Rng& rng) {
    EncodedBatch<Real> b;
    b.post = encode(vae, x);
    b.eps0 = normal_tensor<Real>(x.rows(), vae.latent_dim, rng);
    b.z0 = reparam_sample(b.post.mean, b.post.var, b.eps0);
    b.recon = recon_forward(vae, x, b.z0);
    b.neg_entropy = neg_entropy_term(b.post.mean, b.post.var, b.z0);
    return b;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Encoder/decoder gradient of mean_i [recon_i + neg_entropy_i] plus the
// z0-gradient `dz0_extra` already carrying the cross-entropy path.
template <class Real>
void vae_backward(const Vae<Real>& vae, const EncodedBatch<Real>& b, const Tensor<Real>& dz0_extra,
                  VaeGrads<Real>& g) {
    const std::size_t n = b.z0.rows();
    const std::size_t d = b.z0.cols();
    const std::vector<double> row_scale(n, 1.0 / static_cast<double>(n));
    Tensor<Real> dz0 = decoder_backward(vae, b.recon, row_scale, g);
    Tensor<Real> dlogvar(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double dz = static_cast<double>(dz0(i, j)) + dz0_extra(i, j);
            dz0(i, j) = static_cast<Real>(dz);
            // z0 = mean + exp(logvar / 2) eps0; the entropy term contributes -1/2 per dim.
            const double sd = std::sqrt(static_cast<double>(b.post.var(i, j)));
            dlogvar(i, j) = static_cast<Real>(dz * 0.5 * sd * b.eps0(i, j) - 0.5 / static_cast<double>(n));
        }
    }
    encoder_backward(vae, b.post, dz0, dlogvar, g);
}

// z0-gradient of sum_i scale_i * dsm_i through z_t = m z0 + sigma eps.
template <class Real>
Tensor<Real> dz0_from_ce(const EpsGradResult<Real>& r, const DsmEval<Real>& e) {
    Tensor<Real> dz0 = r.z_grad;
    for (std::size_t i = 0; i < dz0.rows(); ++i)
        for (std::size_t j = 0; j < dz0.cols(); ++j) dz0(i, j) = static_cast<Real>(e.mean_coeff[i] * dz0(i, j));
    return dz0;
}

template <class Real>
void fill_vae_losses(LossBreakdown& l, const EncodedBatch<Real>& b, const DsmEval<Real>& e,
                     const std::vector<double>& ll_scale_sum, double ce_const) {
    l.recon = mean_of(b.recon.nll);
    l.neg_entropy = mean_of(b.neg_entropy);
    double ce = 0.0;
    for (std::size_t i = 0; i < e.dsm.size(); ++i) ce += ll_scale_sum[i] * e.dsm[i];
    l.ce_const = ce_const;
    l.cross_entropy = ce / static_cast<double>(e.dsm.size()) + ce_const;
    l.nelbo = l.recon + l.neg_entropy + l.cross_entropy;
}

struct Streams {
    Rng enc, t_prior, t_vae, eps_prior, eps_vae;
    Streams(std::uint64_t seed, std::uint64_t step)
        : enc(seed, StreamPurpose::Encoder, step), t_prior(seed, StreamPurpose::TimePrior, step),
          t_vae(seed, StreamPurpose::TimeVae, step), eps_prior(seed, StreamPurpose::Diffusion, step, 0),
          eps_vae(seed, StreamPurpose::Diffusion, step, 1) {}
};

std::vector<double> weights_for(const SdeSchedule& s, const std::vector<TDraw>& draws, WeightingMechanism target,
                                std::size_t n) {
    std::vector<double> w(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i)
        w[i] = combined_weight(s, draws[i], target) / static_cast<double>(n);
    return w;
}

template <class Real>
void check_finite_or_dump(const TrainState<Real>& st, const LossBreakdown& l, const std::vector<TDraw>& draws,
                          const char* phase) {
    const bool ok = std::isfinite(l.nelbo) && std::isfinite(l.grad_norm) && std::isfinite(l.prior_loss);
    if (ok) return;
    std::string where;
    if (!st.dump_dir.empty()) {
        nlohmann::json j;
        j["phase"] = phase;
        j["step"] = st.step;
        j["pretrain_step"] = st.pretrain_step;
        j["recon"] = l.recon;
        j["neg_entropy"] = l.neg_entropy;
        j["cross_entropy"] = l.cross_entropy;
        j["prior_loss"] = l.prior_loss;
        j["grad_norm"] = l.grad_norm;
        j["alpha"] = st.prior.alpha();
        std::vector<double> ts;
        for (const auto& d : draws) ts.push_back(d.t);
        j["t"] = ts;
        std::filesystem::create_directories(st.dump_dir);
        const auto path = std::filesystem::path(st.dump_dir) / ("nan_dump_step" + std::to_string(st.step) + ".json");
        std::ofstream(path) << j.dump(2) << "\n";
        where = " (diagnostics written to " + path.string() + ")";
    }
    throw NumericalError(std::string(phase) + ": non-finite loss or gradient at step " + std::to_string(st.step) +
                         where);
}

template <class Real>
void apply_prior(TrainState<Real>& st, const MixedGrads<Real>& g) {
    adam_step(st.adam_prior, st.prior.param_spans(), g.spans(), AdamConfig{st.cfg.lr_prior});
}

template <class Real>
void apply_vae(TrainState<Real>& st, const VaeGrads<Real>& g) {
    adam_step(st.adam_vae, st.vae.param_spans(), g.spans(), AdamConfig{st.cfg.lr_vae});
}

// Prior update phase shared by Alg2: t ~ r_mech, z0 treated as data.
template <class Real>
std::pair<MixedGrads<Real>, double> prior_phase(const TrainState<Real>& st, const Tensor<Real>& z0, Streams& rs,
                                                std::vector<TDraw>& draws_out) {
    const auto& c = st.cfg;
    const std::size_t n = z0.rows();
    auto draws = draw_times(c.schedule, c.mechanism, c.sgm_strategy, n, rs.t_prior);
    auto noise = normal_tensor<Real>(n, z0.cols(), rs.eps_prior);
    auto e = dsm_eval(st.prior, c.schedule, z0, draws, std::move(noise));
    const auto w = weights_for(c.schedule, e.draws, c.mechanism, n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) loss += w[i] * e.dsm[i];
    auto r = eps_backward(st.prior, e.fwd, dsm_upstream(e, w), true);
    draws_out = e.draws;
    return {std::move(r.grads), loss};
}

// Encoder/decoder phase of Alg2: fresh t ~ r_ll, current prior held fixed.
template <class Real>
std::pair<VaeGrads<Real>, LossBreakdown> vae_phase_ll(const TrainState<Real>& st, const EncodedBatch<Real>& b,
                                                      Streams& rs, std::vector<TDraw>& draws_out) {
    const auto& c = st.cfg;
    const std::size_t n = b.z0.rows();
    auto draws = draw_times(c.schedule, WeightingMechanism::Wll, c.q_strategy, n, rs.t_vae);
    auto noise = normal_tensor<Real>(n, b.z0.cols(), rs.eps_vae);
    auto e = dsm_eval(st.prior, c.schedule, b.z0, draws, std::move(noise));
    const auto w = weights_for(c.schedule, e.draws, WeightingMechanism::Wll, n);
    auto r = eps_backward(st.prior, e.fwd, dsm_upstream(e, w), false);
    VaeGrads<Real> g(st.vae);
    vae_backward(st.vae, b, dz0_from_ce(r, e), g);
    LossBreakdown l;
    std::vector<double> wsum(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) wsum[i] = w[i] * static_cast<double>(n);
    fill_vae_losses(l, b, e, wsum, ce_constant(c.schedule, st.prior.latent_dim()));
    draws_out = e.draws;
    return {std::move(g), l};
}

// Alg1 and Alg3 share a single t-batch and one eps_theta evaluation.
template <class Real>
GradientEstimate<Real> shared_t_gradients(const TrainState<Real>& st, const EncodedBatch<Real>& b, Streams& rs,
                                          WeightingMechanism prior_mech, std::vector<TDraw>& draws_out) {
    const auto& c = st.cfg;
    const std::size_t n = b.z0.rows();
    auto draws = draw_times(c.schedule, prior_mech, c.sgm_strategy, n, rs.t_prior);
    auto noise = normal_tensor<Real>(n, b.z0.cols(), rs.eps_prior);
    auto e = dsm_eval(st.prior, c.schedule, b.z0, draws, std::move(noise));
    const auto w_ll = weights_for(c.schedule, e.draws, WeightingMechanism::Wll, n);

    GradientEstimate<Real> out;
    out.vae = VaeGrads<Real>(st.vae);
    if (prior_mech == WeightingMechanism::Wll) {
        // One reverse pass serves both parameter groups.
        auto r = eps_backward(st.prior, e.fwd, dsm_upstream(e, w_ll), true);
        vae_backward(st.vae, b, dz0_from_ce(r, e), out.vae);
        out.prior = std::move(r.grads);
        double pl = 0.0;
        for (std::size_t i = 0; i < n; ++i) pl += w_ll[i] * e.dsm[i];
        out.loss.prior_loss = pl;
    } else {
        const auto w_mech = weights_for(c.schedule, e.draws, prior_mech, n);
        auto rp = eps_backward(st.prior, e.fwd, dsm_upstream(e, w_mech), true);
        auto rq = eps_backward(st.prior, e.fwd, dsm_upstream(e, w_ll), false);
        vae_backward(st.vae, b, dz0_from_ce(rq, e), out.vae);
        out.prior = std::move(rp.grads);
        double pl = 0.0;
        for (std::size_t i = 0; i < n; ++i) pl += w_mech[i] * e.dsm[i];
        out.loss.prior_loss = pl;
    }
    std::vector<double> wsum(n);
    for (std::size_t i = 0; i < n; ++i) wsum[i] = w_ll[i] * static_cast<double>(n);
    const double pl = out.loss.prior_loss;
    fill_vae_losses(out.loss, b, e, wsum, ce_constant(c.schedule, st.prior.latent_dim()));
    out.loss.prior_loss = pl;
    draws_out = e.draws;
    return out;
}

template <class Real>
void finish_norm(LossBreakdown& l, const MixedGrads<Real>& p, const VaeGrads<Real>& v) {
    l.grad_norm = std::sqrt(p.squared_norm() + v.squared_norm());
}

} // namespace

std::string_view to_string(QObjT q) { return q == QObjT::Rew ? "rew" : "separate_ll"; }

QObjT parse_q_obj_t(std::string_view name) {
    if (name == "rew") return QObjT::Rew;
    if (name == "separate_ll") return QObjT::SeparateLl;
    throw ConfigError("train.q_obj_t: expected 'rew' or 'separate_ll', got '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
    schedule.validate();
    check_supported(schedule, mechanism, sgm_strategy);
    check_supported(schedule, WeightingMechanism::Wll, q_strategy);
    if (batch_size == 0) throw ConfigError("train.batch_size: must be > 0");
    if (!(lr_vae > 0.0)) throw ConfigError("train.lr_vae: must be > 0");
    if (!(lr_prior > 0.0)) throw ConfigError("train.lr_prior: must be > 0");
    if (!(kl_beta > 0.0)) throw ConfigError("train.kl_beta: must be > 0");
    if (!(kl_warmup_fraction >= 0.0 && kl_warmup_fraction <= 1.0))
        throw ConfigError("train.kl_warmup_fraction: must lie in [0, 1]");
}

void ModelConfig::validate() const {
    if (data_dim == 0) throw ConfigError("model.data_dim: must be > 0");
    if (latent_dim == 0) throw ConfigError("model.latent_dim: must be > 0");
    if (time_embed_dim % 2 != 0) throw ConfigError("model.time_embed_dim: must be even");
    if (!(alpha_init > 0.0 && alpha_init < 1.0)) throw ConfigError("model.alpha_init: must lie in (0, 1)");
    for (auto h : vae_hidden)
        if (h == 0) throw ConfigError("model.vae_hidden: zero width");
    for (auto h : prior_hidden)
        if (h == 0) throw ConfigError("model.prior_hidden: zero width");
}

Algorithm select_algorithm(const TrainConfig& cfg) {
    if (cfg.mechanism == WeightingMechanism::Wll) return Algorithm::Alg1;
    return cfg.q_obj_t == QObjT::SeparateLl ? Algorithm::Alg2 : Algorithm::Alg3;
}

template <class Real>
TrainState<Real> TrainState<Real>::create(const TrainConfig& cfg, const ModelConfig& model) {
    cfg.validate();
    model.validate();
    TrainState st;
    st.cfg = cfg;
    st.model = model;
    st.vae = Vae<Real>(model.data_dim, model.latent_dim, model.vae_hidden, model.decoder);
    st.prior = MixedScoreNet<Real>(model.latent_dim, model.prior_hidden, model.time_embed_dim, model.alpha_init);
    Rng init_vae(cfg.seed, StreamPurpose::Init, 0);
    Rng init_prior(cfg.seed, StreamPurpose::Init, 1);
    st.vae.init(init_vae);
    st.prior.init(init_prior);
    st.adam_vae = AdamState<Real>(st.vae.param_spans());
    st.adam_prior = AdamState<Real>(st.prior.param_spans());
    return st;
}

double ce_constant(const SdeSchedule& s, std::size_t latent_dim) {
    const double v = kernel(s, s.t_cutoff).var;
    return 0.5 * static_cast<double>(latent_dim) * std::log(2.0 * std::numbers::pi * std::numbers::e * v);
}

std::vector<TDraw> draw_times(const SdeSchedule& s, WeightingMechanism m, TSamplingStrategy strategy, std::size_t n,
                              Rng& rng) {
    std::vector<TDraw> out(n);
    for (auto& d : out) d = sample_t(s, m, strategy, rng.uniform());
    return out;
}

template <class Real>
std::vector<double> cross_entropy_estimate_latent(const MixedScoreNet<Real>& msn, const SdeSchedule& s,
                                                  WeightingMechanism mechanism, TSamplingStrategy strategy,
                                                  const Tensor<Real>& z0, Rng& rng) {
    const std::size_t n = z0.rows();
    auto draws = draw_times(s, mechanism, strategy, n, rng);
    auto noise = normal_tensor<Real>(n, z0.cols(), rng);
    const auto e = dsm_eval(msn, s, z0, std::move(draws), std::move(noise));
    const double c = ce_constant(s, z0.cols());
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = combined_weight(s, e.draws[i], WeightingMechanism::Wll) * e.dsm[i] + c;
    return out;
}

template <class Real>
double cross_entropy_estimate(const Vae<Real>& vae, const MixedScoreNet<Real>& msn, const SdeSchedule& s,
                              WeightingMechanism mechanism, TSamplingStrategy strategy, const Tensor<Real>& x,
                              Rng& rng) {
    const auto post = encode(vae, x);
    const auto eps0 = normal_tensor<Real>(x.rows(), vae.latent_dim, rng);
    const auto z0 = reparam_sample(post.mean, post.var, eps0);
    return mean_of(cross_entropy_estimate_latent(msn, s, mechanism, strategy, z0, rng));
}

template <class Real>
GradientEstimate<Real> estimate_gradients(const TrainState<Real>& st, const Tensor<Real>& x, Algorithm alg,
                                          std::uint64_t stream_seed, std::uint64_t step) {
    Streams rs(stream_seed, step);
    const auto b = encode_batch(st.vae, x, rs.enc);
    std::vector<TDraw> draws;
    GradientEstimate<Real> out;
    switch (alg) {
        case Algorithm::Alg1:
            out = shared_t_gradients(st, b, rs, WeightingMechanism::Wll, draws);
            break;
        case Algorithm::Alg3:
            out = shared_t_gradients(st, b, rs, st.cfg.mechanism, draws);
            break;
        case Algorithm::Alg2: {
            auto [pg, pl] = prior_phase(st, b.z0, rs, draws);
            auto [vg, l] = vae_phase_ll(st, b, rs, draws);
            out.prior = std::move(pg);
            out.vae = std::move(vg);
            out.loss = l;
            out.loss.prior_loss = pl;
            break;
        }
    }
    finish_norm(out.loss, out.prior, out.vae);
    return out;
}

template <class Real>
LossBreakdown train_step_alg1(TrainState<Real>& st, const Tensor<Real>& x) {
    if (st.cfg.mechanism != WeightingMechanism::Wll)
        throw ConfigError("train.mechanism: algorithm 1 requires wll");
    Streams rs(st.cfg.seed, st.step);
    const auto b = encode_batch(st.vae, x, rs.enc);
    std::vector<TDraw> draws;
    auto g = shared_t_gradients(st, b, rs, WeightingMechanism::Wll, draws);
    finish_norm(g.loss, g.prior, g.vae);
    check_finite_or_dump(st, g.loss, draws, "train_step_alg1");
    apply_prior(st, g.prior);
    apply_vae(st, g.vae);
    ++st.step;
    return g.loss;
}

template <class Real>
LossBreakdown train_step_alg2(TrainState<Real>& st, const Tensor<Real>& x) {
    Streams rs(st.cfg.seed, st.step);
    const auto b = encode_batch(st.vae, x, rs.enc);
    std::vector<TDraw> draws;
    auto [pg, pl] = prior_phase(st, b.z0, rs, draws);
    LossBreakdown pre;
    pre.prior_loss = pl;
    pre.grad_norm = std::sqrt(pg.squared_norm());
    check_finite_or_dump(st, pre, draws, "train_step_alg2/prior");
    apply_prior(st, pg);
    auto [vg, l] = vae_phase_ll(st, b, rs, draws);
    l.prior_loss = pl;
    finish_norm(l, pg, vg);
    check_finite_or_dump(st, l, draws, "train_step_alg2/vae");
    apply_vae(st, vg);
    ++st.step;
    return l;
}

template <class Real>
LossBreakdown train_step_alg3(TrainState<Real>& st, const Tensor<Real>& x) {
    Streams rs(st.cfg.seed, st.step);
    const auto b = encode_batch(st.vae, x, rs.enc);
    std::vector<TDraw> draws;
    auto g = shared_t_gradients(st, b, rs, st.cfg.mechanism, draws);
    finish_norm(g.loss, g.prior, g.vae);
    check_finite_or_dump(st, g.loss, draws, "train_step_alg3");
    apply_prior(st, g.prior);
    apply_vae(st, g.vae);
    ++st.step;
    return g.loss;
}

template <class Real>
LossBreakdown train_step(TrainState<Real>& st, const Tensor<Real>& x) {
    switch (select_algorithm(st.cfg)) {
        case Algorithm::Alg1: return train_step_alg1(st, x);
        case Algorithm::Alg2: return train_step_alg2(st, x);
        case Algorithm::Alg3: return train_step_alg3(st, x);
    }
    throw ConfigError("train: no algorithm selected");
}

double kl_weight(const TrainConfig& cfg, std::uint64_t step, std::size_t total_pretrain_steps) {
    const double warm = cfg.kl_warmup_fraction * static_cast<double>(total_pretrain_steps);
    if (warm <= 0.0) return cfg.kl_beta;
    return cfg.kl_beta * std::min(1.0, static_cast<double>(step) / warm);
}

template <class Real>
LossBreakdown pretrain_step(TrainState<Real>& st, const Tensor<Real>& x, std::size_t total_pretrain_steps) {
    Rng rng(st.cfg.seed, StreamPurpose::Encoder, st.pretrain_step, 7);
    const auto b = encode_batch(st.vae, x, rng);
    const std::size_t n = x.rows();
    const std::size_t d = st.vae.latent_dim;
    const double kw = kl_weight(st.cfg, st.pretrain_step, total_pretrain_steps);
    const auto kl = standard_kl(b.post.mean, b.post.var);

    VaeGrads<Real> g(st.vae);
    const std::vector<double> row_scale(n, 1.0 / static_cast<double>(n));
    Tensor<Real> dz0 = decoder_backward(st.vae, b.recon, row_scale, g);
    Tensor<Real> dlogvar(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double dz = dz0(i, j);
            const double v = b.post.var(i, j);
            dz0(i, j) = static_cast<Real>(dz + kw * b.post.mean(i, j) / static_cast<double>(n));
            dlogvar(i, j) = static_cast<Real>(dz * 0.5 * std::sqrt(v) * b.eps0(i, j) +
                                              kw * 0.5 * (v - 1.0) / static_cast<double>(n));
        }
    }
    encoder_backward(st.vae, b.post, dz0, dlogvar, g);

    LossBreakdown l;
    l.recon = mean_of(b.recon.nll);
    l.kl = mean_of(kl);
    l.neg_entropy = mean_of(b.neg_entropy);
    l.nelbo = l.recon + l.kl;
    l.grad_norm = std::sqrt(g.squared_norm());
    check_finite_or_dump(st, l, {}, "pretrain_step");
    apply_vae(st, g);
    ++st.pretrain_step;
    return l;
}

template <class Real>
LossBreakdown eval_standard_elbo(const Vae<Real>& vae, const Tensor<Real>& x, Rng& rng) {
    const auto b = encode_batch(vae, x, rng);
    LossBreakdown l;
    l.recon = mean_of(b.recon.nll);
    l.kl = mean_of(standard_kl(b.post.mean, b.post.var));
    l.neg_entropy = mean_of(b.neg_entropy);
    l.nelbo = l.recon + l.kl;
    return l;
}

double gaussian_integrand(const SdeSchedule& s, WeightingMechanism m, TSamplingStrategy strategy, double t,
                          std::size_t latent_dim) {
    const KernelParams k = kernel(s, t);
    const double inner = static_cast<double>(latent_dim) * (k.ring_var - k.var) / k.ring_var;
    const double is_w =
        strategy == TSamplingStrategy::Uniform ? 1.0 - s.t_cutoff : 1.0 / proposal_pdf(s, m, t);
    return is_w * weight(s, m, t) * inner;
}

VarianceDiagnostic variance_diagnostic(const SdeSchedule& s, WeightingMechanism m, TSamplingStrategy strategy,
                                       std::size_t n_draws, std::size_t latent_dim, std::uint64_t seed) {
    check_supported(s, m, strategy);
    Rng rng(seed, StreamPurpose::Diagnostic);
    const double data_sd = std::sqrt(1.0 - s.sigma2_0);
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t k = 0; k < n_draws; ++k) {
        const TDraw d = sample_t(s, m, strategy, rng.uniform());
        const KernelParams kp = kernel(s, d.t);
        const double sd = std::sqrt(kp.var);
        const double c = sd / kp.ring_var;
        double dsm = 0.0;
        for (std::size_t j = 0; j < latent_dim; ++j) {
            const double z0 = data_sd * rng.normal();
            const double e = rng.normal();
            const double zt = kp.mean_coeff * z0 + sd * e;
            const double r = e - c * zt;
            dsm += r * r;
        }
        const double v = combined_weight(s, d, m) * dsm;
        sum += v;
        sum_sq += v * v;
    }
    VarianceDiagnostic out;
    out.n = n_draws;
    const double nn = static_cast<double>(n_draws);
    out.mean = sum / nn;
    out.std = n_draws > 1 ? std::sqrt(std::max(0.0, (sum_sq - nn * out.mean * out.mean) / (nn - 1.0))) : 0.0;
    out.stderr_mean = out.std / std::sqrt(nn);
    return out;
}

#define LDLB_INSTANTIATE_OBJ(Real)                                                                                 \
    template struct TrainState<Real>;                                                                              \
    template std::vector<double> cross_entropy_estimate_latent(const MixedScoreNet<Real>&, const SdeSchedule&,     \
                                                               WeightingMechanism, TSamplingStrategy,              \
                                                               const Tensor<Real>&, Rng&);                         \
    template double cross_entropy_estimate(const Vae<Real>&, const MixedScoreNet<Real>&, const SdeSchedule&,       \
                                           WeightingMechanism, TSamplingStrategy, const Tensor<Real>&, Rng&);      \
    template GradientEstimate<Real> estimate_gradients(const TrainState<Real>&, const Tensor<Real>&, Algorithm,    \
                                                       std::uint64_t, std::uint64_t);                              \
    template LossBreakdown train_step_alg1(TrainState<Real>&, const Tensor<Real>&);                                \
    template LossBreakdown train_step_alg2(TrainState<Real>&, const Tensor<Real>&);                                \
    template LossBreakdown train_step_alg3(TrainState<Real>&, const Tensor<Real>&);                                \
    template LossBreakdown train_step(TrainState<Real>&, const Tensor<Real>&);                                     \
    template LossBreakdown pretrain_step(TrainState<Real>&, const Tensor<Real>&, std::size_t);                     \
    template LossBreakdown eval_standard_elbo(const Vae<Real>&, const Tensor<Real>&, Rng&);

LDLB_INSTANTIATE_OBJ(float)
LDLB_INSTANTIATE_OBJ(double)

} // namespace ldlb
