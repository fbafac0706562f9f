// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldlb/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ldlb/error.hpp"
#include "ldlb/special.hpp"

namespace ldlb {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

std::vector<std::size_t> chain(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> d{in};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(out);
    return d;
}

void check_same_shape(const char* what, std::size_t r0, std::size_t c0, std::size_t r1, std::size_t c1) {
    if (r0 != r1 || c0 != c1) throw ShapeError(std::string(what) + ": shape mismatch");
}

} // namespace

std::string_view to_string(DecoderKind k) { return k == DecoderKind::Bernoulli ? "bernoulli" : "gaussian"; }

DecoderKind parse_decoder_kind(std::string_view name) {
    if (name == "bernoulli") return DecoderKind::Bernoulli;
    if (name == "gaussian") return DecoderKind::Gaussian;
    throw ConfigError("decoder: unknown kind '" + std::string(name) + "'");
}

template <class Real>
Vae<Real>::Vae(std::size_t data_dim_, std::size_t latent_dim_, const std::vector<std::size_t>& hidden,
               DecoderKind kind_)
    : encoder(chain(data_dim_, hidden, 2 * latent_dim_), Activation::Swish, Activation::Linear),
      decoder(chain(latent_dim_, hidden, kind_ == DecoderKind::Gaussian ? 2 * data_dim_ : data_dim_),
              Activation::Swish, Activation::Linear),
      data_dim(data_dim_), latent_dim(latent_dim_), kind(kind_) {}

template <class Real>
void Vae<Real>::init(Rng& rng) {
    encoder.init_he_uniform(rng, false);
    decoder.init_he_uniform(rng, false);
    // Small output heads: q(z0|x) starts near N(0, I) with means that still
    // separate the inputs, and the decoder starts near unit variance.
    for (DenseNet<Real>* net : {&encoder, &decoder})
        for (auto& w : net->layers.back().w) w = static_cast<Real>(kOutputInitGain * w);
}

template <class Real>
std::vector<std::span<Real>> Vae<Real>::param_spans() {
    auto out = encoder.param_spans();
    for (auto s : decoder.param_spans()) out.push_back(s);
    return out;
}

template <class Real>
std::vector<std::span<const Real>> Vae<Real>::param_spans() const {
    auto out = encoder.param_spans();
    for (auto s : decoder.param_spans()) out.push_back(s);
    return out;
}

template <class Real>
std::vector<std::span<Real>> VaeGrads<Real>::spans() {
    auto out = enc.spans();
    for (auto s : dec.spans()) out.push_back(s);
    return out;
}

template <class Real>
std::vector<std::span<const Real>> VaeGrads<Real>::spans() const {
    auto out = enc.spans();
    for (auto s : dec.spans()) out.push_back(s);
    return out;
}

template <class Real>
Posterior<Real> encode(const Vae<Real>& vae, const Tensor<Real>& x) {
    Posterior<Real> p;
    p.trace = forward_trace(vae.encoder, x);
    p.trace.output.check_finite("encoder output");
    const std::size_t n = x.rows();
    const std::size_t d = vae.latent_dim;
    p.mean = Tensor<Real>(n, d);
    p.logvar = Tensor<Real>(n, d);
    p.var = Tensor<Real>(n, d);
    p.clamped.assign(n * d, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            p.mean(i, j) = p.trace.output(i, j);
            const double raw = p.trace.output(i, d + j);
            const double lv = std::clamp(raw, kLogVarMin, kLogVarMax);
            p.clamped[i * d + j] = (lv != raw);
            p.logvar(i, j) = static_cast<Real>(lv);
            p.var(i, j) = static_cast<Real>(std::exp(lv));
        }
    }
    return p;
}

template <class Real>
Tensor<Real> reparam_sample(const Tensor<Real>& mean, const Tensor<Real>& var, const Tensor<Real>& eps) {
    check_same_shape("reparam_sample", mean.rows(), mean.cols(), var.rows(), var.cols());
    check_same_shape("reparam_sample", mean.rows(), mean.cols(), eps.rows(), eps.cols());
    Tensor<Real> z = mean;
    for (std::size_t k = 0; k < z.data.size(); ++k)
        z.data[k] = static_cast<Real>(mean.data[k] + std::sqrt(static_cast<double>(var.data[k])) * eps.data[k]);
    return z;
}

template <class Real>
std::vector<double> neg_entropy_term(const Tensor<Real>& mean, const Tensor<Real>& var, const Tensor<Real>& z0) {
    check_same_shape("neg_entropy_term", mean.rows(), mean.cols(), var.rows(), var.cols());
    check_same_shape("neg_entropy_term", mean.rows(), mean.cols(), z0.rows(), z0.cols());
    std::vector<double> out(mean.rows(), 0.0);
    for (std::size_t i = 0; i < mean.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < mean.cols(); ++j) {
            const double v = var(i, j);
            const double r = static_cast<double>(z0(i, j)) - mean(i, j);
            s += -0.5 * (kLog2Pi + std::log(v) + r * r / v);
        }
        out[i] = s;
    }
    return out;
}

template <class Real>
std::vector<double> standard_kl(const Tensor<Real>& mean, const Tensor<Real>& var) {
    check_same_shape("standard_kl", mean.rows(), mean.cols(), var.rows(), var.cols());
    std::vector<double> out(mean.rows(), 0.0);
    for (std::size_t i = 0; i < mean.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < mean.cols(); ++j) {
            const double m = mean(i, j);
            const double v = var(i, j);
            s += 0.5 * (m * m + v - 1.0 - std::log(v));
        }
        out[i] = s;
    }
    return out;
}

template <class Real>
ReconResult<Real> recon_forward(const Vae<Real>& vae, const Tensor<Real>& x, const Tensor<Real>& z0) {
    if (x.cols() != vae.data_dim) throw ShapeError("recon_term: data dimension mismatch");
    if (z0.rows() != x.rows()) throw ShapeError("recon_term: batch size mismatch");
    ReconResult<Real> r;
    r.trace = forward_trace(vae.decoder, z0);
    const Tensor<Real>& out = r.trace.output;
    const std::size_t n = x.rows();
    const std::size_t dx = vae.data_dim;
    r.nll.assign(n, 0.0);
    r.out_grad = Tensor<Real>(n, out.cols());
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < dx; ++j) {
            const double xv = x(i, j);
            if (vae.kind == DecoderKind::Bernoulli) {
                const double raw = out(i, j);
                const double l = std::clamp(raw, -kLogitBound, kLogitBound);
                // -[x log sigmoid(l) + (1 - x) log sigmoid(-l)] = softplus(l) - x l
                s += softplus(l) - xv * l;
                const double p = 0.5 * (1.0 + std::tanh(0.5 * l));
                r.out_grad(i, j) = static_cast<Real>(l == raw ? p - xv : 0.0);
            } else {
                const double m = out(i, j);
                const double raw = out(i, dx + j);
                const double lv = std::clamp(raw, kLogVarMin, kLogVarMax);
                const double v = std::exp(lv);
                const double d = xv - m;
                s += 0.5 * (kLog2Pi + lv + d * d / v);
                r.out_grad(i, j) = static_cast<Real>(-d / v);
                r.out_grad(i, dx + j) = static_cast<Real>(lv == raw ? 0.5 * (1.0 - d * d / v) : 0.0);
            }
        }
        r.nll[i] = s;
    }
    return r;
}

template <class Real>
std::vector<double> recon_term(const Vae<Real>& vae, const Tensor<Real>& x, const Tensor<Real>& z0) {
    return recon_forward(vae, x, z0).nll;
}

template <class Real>
Tensor<Real> decoder_backward(const Vae<Real>& vae, const ReconResult<Real>& r, std::span<const double> row_scale,
                              VaeGrads<Real>& accum) {
    Tensor<Real> up = r.out_grad;
    if (row_scale.size() != up.rows()) throw ShapeError("decoder_backward: need one scale per row");
    for (std::size_t i = 0; i < up.rows(); ++i)
        for (std::size_t j = 0; j < up.cols(); ++j) up(i, j) = static_cast<Real>(up(i, j) * row_scale[i]);
    auto b = backward(vae.decoder, r.trace, up, true);
    accum.dec.add(b.grads);
    return std::move(b.input_grad);
}

template <class Real>
void encoder_backward(const Vae<Real>& vae, const Posterior<Real>& post, const Tensor<Real>& dmean,
                      const Tensor<Real>& dlogvar, VaeGrads<Real>& accum) {
    const std::size_t n = post.mean.rows();
    const std::size_t d = vae.latent_dim;
    check_same_shape("encoder_backward", n, d, dmean.rows(), dmean.cols());
    check_same_shape("encoder_backward", n, d, dlogvar.rows(), dlogvar.cols());
    Tensor<Real> up(n, 2 * d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            up(i, j) = dmean(i, j);
            up(i, d + j) = post.clamped[i * d + j] ? Real(0) : dlogvar(i, j);
        }
    }
    auto b = backward(vae.encoder, post.trace, up, true);
    accum.enc.add(b.grads);
}

template <class Real>
Tensor<Real> decode_mean(const Vae<Real>& vae, const Tensor<Real>& z0) {
    const Tensor<Real> out = forward(vae.decoder, z0);
    Tensor<Real> m(z0.rows(), vae.data_dim);
    for (std::size_t i = 0; i < z0.rows(); ++i) {
        for (std::size_t j = 0; j < vae.data_dim; ++j) {
            const double v = out(i, j);
            m(i, j) = static_cast<Real>(vae.kind == DecoderKind::Bernoulli ? 0.5 * (1.0 + std::tanh(0.5 * v)) : v);
        }
    }
    return m;
}

std::size_t HierGroupParams::total_dim() const {
    std::size_t n = 0;
    for (auto d : group_dims) n += d;
    return n;
}

HierGroupParams HierGroupParams::synthetic_two_group(std::size_t d0, std::size_t d1, Rng& rng) {
    HierGroupParams g;
    g.group_dims = {d0, d1};
    std::vector<double> mu0(d0), sig0(d0);
    for (std::size_t j = 0; j < d0; ++j) {
        mu0[j] = rng.normal();
        sig0[j] = std::exp(0.5 * rng.normal());
    }
    g.groups.emplace_back([mu0, sig0](std::span<const double>, std::span<double> mu, std::span<double> sigma) {
        std::copy(mu0.begin(), mu0.end(), mu.begin());
        std::copy(sig0.begin(), sig0.end(), sigma.begin());
    });
    std::vector<double> a(d1 * d0), c(d1), bm(d1 * d0), e(d1);
    for (auto& v : a) v = rng.normal() / std::sqrt(static_cast<double>(d0));
    for (auto& v : bm) v = rng.normal() / std::sqrt(static_cast<double>(d0));
    for (auto& v : c) v = rng.normal();
    for (auto& v : e) v = 0.5 * rng.normal();
    g.groups.emplace_back([=](std::span<const double> prev, std::span<double> mu, std::span<double> sigma) {
        for (std::size_t k = 0; k < d1; ++k) {
            double m = c[k];
            double s = e[k];
            for (std::size_t j = 0; j < d0; ++j) {
                m += a[k * d0 + j] * prev[j];
                s += bm[k * d0 + j] * prev[j];
            }
            mu[k] = m;
            sigma[k] = std::exp(std::tanh(s));
        }
    });
    return g;
}

namespace {

void check_hier(const HierGroupParams& g, std::size_t n) {
    if (g.group_dims.size() != g.groups.size()) throw ConfigError("hier: group_dims and groups differ in length");
    if (n != g.total_dim()) throw ShapeError("hier: latent size does not match the group layout");
}

} // namespace

HierTransform hier_to_standard(const HierGroupParams& g, std::span<const double> z) {
    check_hier(g, z.size());
    HierTransform out;
    out.eps.resize(z.size());
    std::size_t off = 0;
    for (std::size_t l = 0; l < g.groups.size(); ++l) {
        const std::size_t d = g.group_dims[l];
        std::vector<double> mu(d), sigma(d);
        g.groups[l](z.subspan(0, off), mu, sigma);
        for (std::size_t k = 0; k < d; ++k) {
            if (!(sigma[k] > 0.0)) throw DomainError("hier_to_standard: non-positive sigma");
            out.eps[off + k] = (z[off + k] - mu[k]) / sigma[k];
            out.log_det -= std::log(sigma[k]);
        }
        off += d;
    }
    return out;
}

std::vector<double> standard_to_hier(const HierGroupParams& g, std::span<const double> eps) {
    check_hier(g, eps.size());
    std::vector<double> z(eps.size());
    std::size_t off = 0;
    for (std::size_t l = 0; l < g.groups.size(); ++l) {
        const std::size_t d = g.group_dims[l];
        std::vector<double> mu(d), sigma(d);
        g.groups[l](std::span<const double>(z).subspan(0, off), mu, sigma);
        for (std::size_t k = 0; k < d; ++k) z[off + k] = mu[k] + sigma[k] * eps[off + k];
        off += d;
    }
    return z;
}

double hier_log_density(const HierGroupParams& g, std::span<const double> z) {
    check_hier(g, z.size());
    double lp = 0.0;
    std::size_t off = 0;
    for (std::size_t l = 0; l < g.groups.size(); ++l) {
        const std::size_t d = g.group_dims[l];
        std::vector<double> mu(d), sigma(d);
        g.groups[l](z.subspan(0, off), mu, sigma);
        for (std::size_t k = 0; k < d; ++k) {
            const double r = (z[off + k] - mu[k]) / sigma[k];
            lp += -0.5 * (kLog2Pi + r * r) - std::log(sigma[k]);
        }
        off += d;
    }
    return lp;
}

#define LDLB_INSTANTIATE_VAE(Real)                                                                             \
    template class Vae<Real>;                                                                                  \
    template struct VaeGrads<Real>;                                                                            \
    template Posterior<Real> encode(const Vae<Real>&, const Tensor<Real>&);                                    \
    template Tensor<Real> reparam_sample(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&);       \
    template std::vector<double> neg_entropy_term(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&); \
    template std::vector<double> standard_kl(const Tensor<Real>&, const Tensor<Real>&);                        \
    template ReconResult<Real> recon_forward(const Vae<Real>&, const Tensor<Real>&, const Tensor<Real>&);      \
    template std::vector<double> recon_term(const Vae<Real>&, const Tensor<Real>&, const Tensor<Real>&);       \
    template Tensor<Real> decoder_backward(const Vae<Real>&, const ReconResult<Real>&, std::span<const double>, \
                                           VaeGrads<Real>&);                                                   \
    template void encoder_backward(const Vae<Real>&, const Posterior<Real>&, const Tensor<Real>&,              \
                                   const Tensor<Real>&, VaeGrads<Real>&);                                      \
    template Tensor<Real> decode_mean(const Vae<Real>&, const Tensor<Real>&);

LDLB_INSTANTIATE_VAE(float)
LDLB_INSTANTIATE_VAE(double)

} // namespace ldlb
