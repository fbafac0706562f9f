// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldlb/score_prior.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ldlb/error.hpp"

namespace ldlb {

namespace {

double logistic(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

std::vector<std::size_t> net_dims(std::size_t d, const std::vector<std::size_t>& hidden) {
    std::vector<std::size_t> dims{d};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(d);
    return dims;
}

} // namespace

template <class Real>
MixedScoreNet<Real>::MixedScoreNet(std::size_t latent_dim, const std::vector<std::size_t>& hidden,
                                   std::size_t time_embed_dim, double alpha_init)
    : eps_net(net_dims(latent_dim, hidden), Activation::Swish, Activation::Linear, time_embed_dim) {
    if (latent_dim == 0) throw ConfigError("latent_dim: must be > 0");
    alpha_logits.assign(latent_dim, Real(0));
    set_alpha(alpha_init);
}

template <class Real>
std::vector<double> MixedScoreNet<Real>::alpha() const {
    std::vector<double> a(alpha_logits.size());
    for (std::size_t j = 0; j < a.size(); ++j) a[j] = logistic(alpha_logits[j]);
    return a;
}

template <class Real>
double MixedScoreNet<Real>::alpha_max() const {
    const auto a = alpha();
    return a.empty() ? 0.0 : *std::max_element(a.begin(), a.end());
}

template <class Real>
void MixedScoreNet<Real>::set_alpha(double a) {
    if (!(a > 0.0 && a < 1.0)) throw ConfigError("alpha_init: must lie in (0, 1)");
    std::fill(alpha_logits.begin(), alpha_logits.end(), static_cast<Real>(std::log(a / (1.0 - a))));
}

template <class Real>
std::vector<std::span<Real>> MixedScoreNet<Real>::param_spans() {
    std::vector<std::span<Real>> out{std::span<Real>(alpha_logits)};
    for (auto s : eps_net.param_spans()) out.push_back(s);
    return out;
}

template <class Real>
std::vector<std::span<const Real>> MixedScoreNet<Real>::param_spans() const {
    std::vector<std::span<const Real>> out{std::span<const Real>(alpha_logits)};
    for (auto s : eps_net.param_spans()) out.push_back(s);
    return out;
}

template <class Real>
void MixedScoreNet<Real>::init(Rng& rng) {
    eps_net.init_he_uniform(rng, true);
}

template <class Real>
void MixedGrads<Real>::zero() {
    std::fill(dalpha_logits.begin(), dalpha_logits.end(), Real(0));
    net.zero();
}

template <class Real>
void MixedGrads<Real>::add(const MixedGrads& other, Real scale) {
    for (std::size_t j = 0; j < dalpha_logits.size(); ++j) dalpha_logits[j] += scale * other.dalpha_logits[j];
    net.add(other.net, scale);
}

template <class Real>
void MixedGrads<Real>::scale(Real s) {
    for (auto& g : dalpha_logits) g *= s;
    net.scale(s);
}

template <class Real>
double MixedGrads<Real>::squared_norm() const {
    double s = net.squared_norm();
    for (Real g : dalpha_logits) s += static_cast<double>(g) * g;
    return s;
}

template <class Real>
std::vector<std::span<Real>> MixedGrads<Real>::spans() {
    std::vector<std::span<Real>> out{std::span<Real>(dalpha_logits)};
    for (auto s : net.spans()) out.push_back(s);
    return out;
}

template <class Real>
std::vector<std::span<const Real>> MixedGrads<Real>::spans() const {
    std::vector<std::span<const Real>> out{std::span<const Real>(dalpha_logits)};
    for (auto s : net.spans()) out.push_back(s);
    return out;
}

template <class Real>
EpsForward<Real> eps_forward(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<Real>& z,
                             std::span<const double> t) {
    const std::size_t n = z.rows();
    const std::size_t d = msn.latent_dim();
    if (z.cols() != d) throw ShapeError("eps_theta: latent has " + std::to_string(z.cols()) + " dims, prior expects " +
                                        std::to_string(d));
    if (t.size() != n) throw ShapeError("eps_theta: need one time per row");
    EpsForward<Real> f;
    f.z = z;
    f.t.assign(t.begin(), t.end());
    f.normal_coeff.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0 && t[i] == t[i - 1]) {
            f.normal_coeff[i] = f.normal_coeff[i - 1];
            continue;
        }
        const KernelParams k = kernel(s, t[i]);
        f.normal_coeff[i] = std::sqrt(k.var) / k.ring_var;
    }
    f.trace = forward_trace(msn.eps_net, z, t);
    ++msn.forward_evals;
    const auto a = msn.alpha();
    f.eps = Tensor<Real>(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            f.eps(i, j) = static_cast<Real>(f.normal_coeff[i] * (1.0 - a[j]) * z(i, j) + a[j] * f.trace.output(i, j));
        }
    }
    return f;
}

template <class Real>
Tensor<Real> eps_theta(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<Real>& z,
                       std::span<const double> t) {
    return eps_forward(msn, s, z, t).eps;
}

template <class Real>
Tensor<Real> score(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<Real>& z,
                   std::span<const double> t) {
    Tensor<Real> e = eps_theta(msn, s, z, t);
    const std::size_t d = e.cols();
    double sd = 0.0;
    for (std::size_t i = 0; i < e.rows(); ++i) {
        if (i == 0 || t[i] != t[i - 1]) sd = std::sqrt(kernel(s, t[i]).var);
        if (!(sd > 0.0)) throw DomainError("score: sigma_t = 0 at t = " + std::to_string(t[i]));
        Real* row = e.row(i);
        for (std::size_t j = 0; j < d; ++j) row[j] = static_cast<Real>(-row[j] / sd);
    }
    return e;
}

template <class Real>
EpsGradResult<Real> eps_backward(const MixedScoreNet<Real>& msn, const EpsForward<Real>& fwd,
                                 const Tensor<Real>& upstream, bool want_param_grads) {
    const std::size_t n = fwd.z.rows();
    const std::size_t d = msn.latent_dim();
    if (upstream.rows() != n || upstream.cols() != d) throw ShapeError("eps_backward: upstream shape mismatch");
    const auto a = msn.alpha();
    Tensor<Real> net_up(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) net_up(i, j) = static_cast<Real>(a[j] * upstream(i, j));

    auto nb = backward(msn.eps_net, fwd.trace, net_up, want_param_grads);
    EpsGradResult<Real> r;
    r.grads.dalpha_logits.assign(d, Real(0));
    r.grads.net = std::move(nb.grads);
    r.z_grad = std::move(nb.input_grad);
    std::vector<double> dlogit(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double up = upstream(i, j);
            const double normal = fwd.normal_coeff[i] * fwd.z(i, j);
            r.z_grad(i, j) = static_cast<Real>(r.z_grad(i, j) + up * fwd.normal_coeff[i] * (1.0 - a[j]));
            dlogit[j] += up * (fwd.trace.output(i, j) - normal);
        }
    }
    for (std::size_t j = 0; j < d; ++j) r.grads.dalpha_logits[j] = static_cast<Real>(dlogit[j] * a[j] * (1.0 - a[j]));
    return r;
}

template <class Real>
EpsGradResult<Real> grad_eps_theta(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<Real>& z,
                                   std::span<const double> t, const Tensor<Real>& upstream) {
    return eps_backward(msn, eps_forward(msn, s, z, t), upstream, true);
}

template <class Real>
std::vector<double> eps_divergence_probe(const MixedScoreNet<Real>& msn, const SdeSchedule& s,
                                         const Tensor<Real>& z, std::span<const double> t,
                                         const Tensor<Real>& probe) {
    const auto fwd = eps_forward(msn, s, z, t);
    const auto g = eps_backward(msn, fwd, probe, false);
    std::vector<double> out(z.rows(), 0.0);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) acc += static_cast<double>(probe(i, j)) * g.z_grad(i, j);
        out[i] = acc;
    }
    return out;
}

template <class Real>
std::vector<double> eps_divergence_exact(const MixedScoreNet<Real>& msn, const SdeSchedule& s,
                                         const Tensor<Real>& z, std::span<const double> t) {
    const auto fwd = eps_forward(msn, s, z, t);
    const std::size_t d = z.cols();
    std::vector<double> out(z.rows(), 0.0);
    Tensor<Real> basis(z.rows(), d);
    for (std::size_t j = 0; j < d; ++j) {
        std::fill(basis.data.begin(), basis.data.end(), Real(0));
        for (std::size_t i = 0; i < z.rows(); ++i) basis(i, j) = Real(1);
        const auto g = eps_backward(msn, fwd, basis, false);
        for (std::size_t i = 0; i < z.rows(); ++i) out[i] += g.z_grad(i, j);
    }
    return out;
}

#define LDLB_INSTANTIATE_SCORE(Real)                                                                              \
    template class MixedScoreNet<Real>;                                                                           \
    template struct MixedGrads<Real>;                                                                             \
    template EpsForward<Real> eps_forward(const MixedScoreNet<Real>&, const SdeSchedule&, const Tensor<Real>&,    \
                                          std::span<const double>);                                               \
    template Tensor<Real> eps_theta(const MixedScoreNet<Real>&, const SdeSchedule&, const Tensor<Real>&,          \
                                    std::span<const double>);                                                     \
    template Tensor<Real> score(const MixedScoreNet<Real>&, const SdeSchedule&, const Tensor<Real>&,              \
                                std::span<const double>);                                                         \
    template EpsGradResult<Real> eps_backward(const MixedScoreNet<Real>&, const EpsForward<Real>&,                \
                                              const Tensor<Real>&, bool);                                         \
    template EpsGradResult<Real> grad_eps_theta(const MixedScoreNet<Real>&, const SdeSchedule&,                   \
                                                const Tensor<Real>&, std::span<const double>,                     \
                                                const Tensor<Real>&);                                             \
    template std::vector<double> eps_divergence_probe(const MixedScoreNet<Real>&, const SdeSchedule&,             \
                                                      const Tensor<Real>&, std::span<const double>,               \
                                                      const Tensor<Real>&);                                       \
    template std::vector<double> eps_divergence_exact(const MixedScoreNet<Real>&, const SdeSchedule&,             \
                                                      const Tensor<Real>&, std::span<const double>);

LDLB_INSTANTIATE_SCORE(float)
LDLB_INSTANTIATE_SCORE(double)

} // namespace ldlb
