// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldlb/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ldlb/error.hpp"
#include "ldlb/parallel.hpp"
#include "ldlb/special.hpp"

namespace ldlb {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Dormand-Prince tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200, e6 = 22.0 / 525,
                 e7 = -1.0 / 40;

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 10.0;
constexpr double kAlpha = 0.17; // PI exponents on the current and previous error
constexpr double kBeta = 0.04;

double rms(std::span<const double> v, std::span<const double> scale) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double r = v[i] / scale[i];
        s += r * r;
    }
    return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

template <class Real>
Tensor<Real> to_real(const Tensor<double>& z) {
    Tensor<Real> out(z.rows(), z.cols());
    for (std::size_t k = 0; k < z.data.size(); ++k) out.data[k] = static_cast<Real>(z.data[k]);
    return out;
}

Tensor<double> row_slice(const Tensor<double>& z, std::size_t i) {
    Tensor<double> r(1, z.cols());
    std::copy(z.row(i), z.row(i) + z.cols(), r.row(0));
    return r;
}

// Augmented likelihood dynamics for a block of rows: y = [z (n*d), int div (n)].
template <class Real>
struct LikelihoodRhs {
    const MixedScoreNet<Real>& msn;
    const SdeSchedule& s;
    std::size_t n, d;
    const Tensor<Real>* probe; // null selects the exact trace

    void operator()(double t, std::span<const double> y, std::span<double> dy) const {
        Tensor<Real> z(n, d);
        for (std::size_t k = 0; k < n * d; ++k) z.data[k] = static_cast<Real>(y[k]);
        const std::vector<double> tv(n, t);
        const auto fwd = eps_forward(msn, s, z, tv);
        const double f = drift_coeff(s, t);
        const double g2 = diffusion_sq(s, t);
        const double sd = std::sqrt(kernel(s, t).var);
        if (!(sd > 0.0)) throw DomainError("probability flow: sigma_t = 0 at t = " + std::to_string(t));
        const double c = 0.5 * g2 / sd;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) dy[i * d + j] = f * y[i * d + j] + c * fwd.eps(i, j);

        std::vector<double> tr(n, 0.0);
        if (probe) {
            const auto g = eps_backward(msn, fwd, *probe, false);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) tr[i] += static_cast<double>((*probe)(i, j)) * g.z_grad(i, j);
        } else {
            Tensor<Real> basis(n, d);
            for (std::size_t j = 0; j < d; ++j) {
                std::fill(basis.data.begin(), basis.data.end(), Real(0));
                for (std::size_t i = 0; i < n; ++i) basis(i, j) = Real(1);
                const auto g = eps_backward(msn, fwd, basis, false);
                for (std::size_t i = 0; i < n; ++i) tr[i] += g.z_grad(i, j);
            }
        }
        for (std::size_t i = 0; i < n; ++i) dy[n * d + i] = f * static_cast<double>(d) + c * tr[i];
    }
};

// One likelihood pass over `z0` rows [r0, r1) with the given probe rows.
template <class Real>
OdeStats likelihood_block(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<double>& z0,
                          std::size_t r0, std::size_t r1, const Tensor<Real>* probe_all, double t_end,
                          const OdeSolverConfig& cfg, std::vector<double>& log_p) {
    const std::size_t n = r1 - r0;
    const std::size_t d = z0.cols();
    std::vector<double> y(n * d + n, 0.0);
    for (std::size_t i = 0; i < n; ++i) std::copy(z0.row(r0 + i), z0.row(r0 + i) + d, y.begin() + i * d);
    Tensor<Real> probe;
    if (probe_all) {
        probe = Tensor<Real>(n, d);
        for (std::size_t i = 0; i < n; ++i) std::copy(probe_all->row(r0 + i), probe_all->row(r0 + i) + d, probe.row(i));
    }
    LikelihoodRhs<Real> rhs{msn, s, n, d, probe_all ? &probe : nullptr};
    const OdeStats st = dopri5(std::cref(rhs), t_end, cfg.t_start, y, cfg.rtol, cfg.atol, cfg.max_steps);
    for (std::size_t i = 0; i < n; ++i) {
        double lp = 0.0;
        for (std::size_t j = 0; j < d; ++j) lp += -0.5 * (kLog2Pi + y[i * d + j] * y[i * d + j]);
        log_p[r0 + i] = lp + y[n * d + i];
    }
    return st;
}

} // namespace

void OdeSolverConfig::validate() const {
    if (!(rtol > 0.0)) throw ConfigError("solver.rtol: must be > 0");
    if (!(atol > 0.0)) throw ConfigError("solver.atol: must be > 0");
    if (!(t_end >= 0.0)) throw ConfigError("solver.t_end: must be >= 0");
    if (t_end > 0.0 && !(t_end < t_start)) throw ConfigError("solver.t_end: must be < t_start");
    if (!(t_start > 0.0 && t_start <= 1.0)) throw ConfigError("solver.t_start: must lie in (0, 1]");
    if (max_steps == 0) throw ConfigError("solver.max_steps: must be > 0");
}

double default_t_end(const SdeSchedule& s) { return s.sigma2_0 > 0.0 ? 1e-5 : 1e-6; }

double resolved_t_end(const SdeSchedule& s, const OdeSolverConfig& cfg) {
    return cfg.t_end > 0.0 ? cfg.t_end : default_t_end(s);
}

OdeStats dopri5(const OdeRhs& rhs, double t0, double t1, std::vector<double>& y, double rtol, double atol,
                std::size_t max_steps) {
    OdeStats st;
    const std::size_t n = y.size();
    if (t0 == t1 || n == 0) return st;
    const double dir = t1 > t0 ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);

    std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y_new(n), err(n), scale(n);
    rhs(t0, y, k1);
    ++st.nfe;

    for (std::size_t i = 0; i < n; ++i) scale[i] = atol + rtol * std::abs(y[i]);
    const double d0 = rms(y, scale);
    const double d1 = rms(k1, scale);
    double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::min(h, span);

    double t = t0;
    double err_prev = 1e-4;
    bool last_rejected = false;
    while (dir * (t1 - t) > 0.0) {
        if (st.accepted + st.rejected >= max_steps)
            throw NumericalError("dopri5: max_steps (" + std::to_string(max_steps) + ") exceeded at t = " +
                                 std::to_string(t));
        if (h < 1e-14 * std::max(1.0, std::abs(t))) throw NumericalError("dopri5: step size underflow");
        const bool final_step = h >= std::abs(t1 - t);
        if (final_step) h = std::abs(t1 - t);
        const double hs = dir * h;

        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + hs * a21 * k1[i];
        rhs(t + c2 * hs, tmp, k2);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + hs * (a31 * k1[i] + a32 * k2[i]);
        rhs(t + c3 * hs, tmp, k3);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + hs * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        rhs(t + c4 * hs, tmp, k4);
        for (std::size_t i = 0; i < n; ++i)
            tmp[i] = y[i] + hs * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        rhs(t + c5 * hs, tmp, k5);
        for (std::size_t i = 0; i < n; ++i)
            tmp[i] = y[i] + hs * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        const double t_next = final_step ? t1 : t + hs;
        rhs(t_next, tmp, k6);
        for (std::size_t i = 0; i < n; ++i)
            y_new[i] = y[i] + hs * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
        rhs(t_next, y_new, k7);
        st.nfe += 6;

        for (std::size_t i = 0; i < n; ++i) {
            err[i] = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            scale[i] = atol + rtol * std::max(std::abs(y[i]), std::abs(y_new[i]));
        }
        const double e = rms(err, scale);
        if (!std::isfinite(e)) throw NumericalError("dopri5: non-finite error estimate at t = " + std::to_string(t));

        if (e <= 1.0) {
            ++st.accepted;
            t = t_next;
            y.swap(y_new);
            k1.swap(k7);
            double factor = e == 0.0 ? kMaxFactor
                                     : kSafety * std::pow(e, -kAlpha) * std::pow(std::max(err_prev, 1e-4), kBeta);
            factor = std::clamp(factor, kMinFactor, kMaxFactor);
            if (last_rejected) factor = std::min(factor, 1.0);
            h *= factor;
            err_prev = e;
            last_rejected = false;
        } else {
            ++st.rejected;
            const double factor = std::clamp(kSafety * std::pow(e, -kAlpha), kMinFactor, 1.0);
            h *= factor;
            last_rejected = true;
        }
    }
    return st;
}

template <class Real>
Tensor<double> probability_flow_rhs(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<double>& z,
                                    double t) {
    const std::vector<double> tv(z.rows(), t);
    const Tensor<Real> e = eps_theta(msn, s, to_real<Real>(z), tv);
    const double f = drift_coeff(s, t);
    const double sd = std::sqrt(kernel(s, t).var);
    if (!(sd > 0.0)) throw DomainError("probability flow: sigma_t = 0 at t = " + std::to_string(t));
    const double c = 0.5 * diffusion_sq(s, t) / sd;
    Tensor<double> out(z.rows(), z.cols());
    for (std::size_t k = 0; k < z.data.size(); ++k) out.data[k] = f * z.data[k] + c * e.data[k];
    return out;
}

template <class Real>
SampleResult ode_sample(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<double>& z1,
                        const OdeSolverConfig& cfg) {
    cfg.validate();
    const double t_end = resolved_t_end(s, cfg);
    const std::size_t d = z1.cols();
    SampleResult res;
    res.z0 = z1;
    auto solve = [&](Tensor<double>& block) {
        const std::size_t n = block.rows();
        auto rhs = [&](double t, std::span<const double> y, std::span<double> dy) {
            Tensor<double> z(n, d);
            std::copy(y.begin(), y.end(), z.data.begin());
            const auto v = probability_flow_rhs(msn, s, z, t);
            std::copy(v.data.begin(), v.data.end(), dy.begin());
        };
        return dopri5(rhs, cfg.t_start, t_end, block.data, cfg.rtol, cfg.atol, cfg.max_steps);
    };
    if (cfg.joint) {
        res.stats = solve(res.z0);
    } else {
        std::vector<OdeStats> per(z1.rows());
        parallel_chunks(z1.rows(), 1, [&](std::size_t, std::size_t i, std::size_t) {
            Tensor<double> row = row_slice(z1, i);
            per[i] = solve(row);
            std::copy(row.data.begin(), row.data.end(), res.z0.row(i));
        });
        for (const auto& p : per) res.stats += p;
    }
    return res;
}

template <class Real>
Tensor<double> ancestral_sample(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<double>& z1,
                                std::size_t n_steps, Rng& rng, double t_end) {
    if (n_steps < 1) throw ConfigError("ancestral_sample: n_steps must be >= 1");
    if (t_end <= 0.0) t_end = default_t_end(s);
    const double h = (1.0 - t_end) / static_cast<double>(n_steps);
    const double sqrt_h = std::sqrt(h);
    const std::size_t n = z1.rows();
    const std::size_t d = z1.cols();
    Tensor<double> z = z1;
    // Rows advance in fixed blocks through all steps; noise is drawn block by block.
    constexpr std::size_t kBlock = 1024;
    for (std::size_t r0 = 0; r0 < n; r0 += kBlock) {
        const std::size_t rows = std::min(kBlock, n - r0);
        Tensor<Real> zb(rows, d);
        std::vector<double> state(z.data.begin() + r0 * d, z.data.begin() + (r0 + rows) * d);
        for (std::size_t k = 0; k < n_steps; ++k) {
            const double t = 1.0 - static_cast<double>(k) * h;
            const std::vector<double> tv(rows, t);
            for (std::size_t i = 0; i < state.size(); ++i) zb.data[i] = static_cast<Real>(state[i]);
            const Tensor<Real> sc = score(msn, s, zb, tv);
            const double f = drift_coeff(s, t);
            const double g2 = diffusion_sq(s, t);
            const double g = std::sqrt(g2);
            for (std::size_t i = 0; i < state.size(); ++i) {
                const double drift = f * state[i] - g2 * static_cast<double>(sc.data[i]);
                state[i] = state[i] - drift * h + g * sqrt_h * rng.normal();
            }
        }
        std::copy(state.begin(), state.end(), z.data.begin() + r0 * d);
    }
    return z;
}

template <class Real>
LikelihoodResult ode_log_likelihood(const MixedScoreNet<Real>& msn, const SdeSchedule& s, const Tensor<double>& z0,
                                    const OdeSolverConfig& cfg, std::size_t n_probes, Rng& rng) {
    cfg.validate();
    const double t_end = resolved_t_end(s, cfg);
    const std::size_t n = z0.rows();
    const std::size_t d = z0.cols();
    if (d != msn.latent_dim()) throw ShapeError("ode_log_likelihood: latent dimension mismatch");
    LikelihoodResult res;
    const std::size_t passes = std::max<std::size_t>(n_probes, 1);
    std::vector<double> sum(n, 0.0), sum_sq(n, 0.0);
    for (std::size_t p = 0; p < passes; ++p) {
        Tensor<Real> probe;
        if (n_probes > 0) {
            probe = Tensor<Real>(n, d);
            for (auto& v : probe.data) v = static_cast<Real>(rng.rademacher());
        }
        const Tensor<Real>* probe_ptr = n_probes > 0 ? &probe : nullptr;
        std::vector<double> lp(n, 0.0);
        if (cfg.joint) {
            res.stats += likelihood_block(msn, s, z0, 0, n, probe_ptr, t_end, cfg, lp);
        } else {
            std::vector<OdeStats> per(n);
            parallel_chunks(n, 1, [&](std::size_t, std::size_t i, std::size_t) {
                per[i] = likelihood_block(msn, s, z0, i, i + 1, probe_ptr, t_end, cfg, lp);
            });
            for (const auto& st : per) res.stats += st;
        }
        for (std::size_t i = 0; i < n; ++i) {
            sum[i] += lp[i];
            sum_sq[i] += lp[i] * lp[i];
        }
    }
    res.log_p.resize(n);
    res.std_error.assign(n, 0.0);
    const double np = static_cast<double>(passes);
    for (std::size_t i = 0; i < n; ++i) {
        res.log_p[i] = sum[i] / np;
        if (passes > 1) {
            const double var = std::max(0.0, (sum_sq[i] - np * res.log_p[i] * res.log_p[i]) / (np - 1.0));
            res.std_error[i] = std::sqrt(var / np);
        }
    }
    return res;
}

template <class Real>
NelboResult eval_nelbo(const Vae<Real>& vae, const MixedScoreNet<Real>& msn, const SdeSchedule& s,
                       const Tensor<Real>& x, const OdeSolverConfig& cfg, std::size_t n_probes, Rng& rng) {
    const auto post = encode(vae, x);
    Tensor<Real> eps0(x.rows(), vae.latent_dim);
    for (auto& v : eps0.data) v = static_cast<Real>(rng.normal());
    const auto z0 = reparam_sample(post.mean, post.var, eps0);
    const auto recon = recon_term(vae, x, z0);
    const auto negent = neg_entropy_term(post.mean, post.var, z0);
    Tensor<double> z0d(z0.rows(), z0.cols());
    for (std::size_t k = 0; k < z0.data.size(); ++k) z0d.data[k] = z0.data[k];
    const auto lik = ode_log_likelihood(msn, s, z0d, cfg, n_probes, rng);

    NelboResult r;
    r.count = x.rows();
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double v = recon[i] + negent[i] - lik.log_p[i];
        sum += v;
        sum_sq += v * v;
        r.recon += recon[i];
        r.neg_entropy += negent[i];
        r.cross_entropy -= lik.log_p[i];
    }
    const double n = static_cast<double>(x.rows());
    r.nelbo = sum / n;
    r.recon /= n;
    r.neg_entropy /= n;
    r.cross_entropy /= n;
    r.std_error = x.rows() > 1 ? std::sqrt(std::max(0.0, (sum_sq - n * r.nelbo * r.nelbo) / (n - 1.0)) / n) : 0.0;
    return r;
}

IwBiasResult iw_bias_probe(std::span<const double> true_logps, double noise_var, std::size_t K, std::size_t n_trials,
                           std::uint64_t seed) {
    if (true_logps.empty() || K == 0) throw ConfigError("iw_bias: need K >= 1 and at least one log-weight");
    if (!(noise_var >= 0.0)) throw ConfigError("iw_bias: noise variance must be >= 0");
    std::vector<double> w(K);
    for (std::size_t k = 0; k < K; ++k) w[k] = true_logps[k % true_logps.size()];
    const double log_k = std::log(static_cast<double>(K));
    const double truth = log_sum_exp(w) - log_k;

    IwBiasResult r;
    double sum_p2 = 0.0;
    for (double v : w) {
        const double p = std::exp(v - truth - log_k);
        sum_p2 += p * p;
    }
    r.predicted = 0.5 * noise_var * (1.0 - sum_p2);

    const double sd = std::sqrt(noise_var);
    Rng rng(seed, StreamPurpose::Diagnostic);
    std::vector<double> noisy(K);
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t trial = 0; trial < n_trials; ++trial) {
        for (std::size_t k = 0; k < K; ++k) noisy[k] = w[k] + sd * rng.normal();
        const double b = log_sum_exp(noisy) - log_k - truth;
        sum += b;
        sum_sq += b * b;
    }
    const double nt = static_cast<double>(n_trials);
    r.bias = sum / nt;
    r.std_error = n_trials > 1 ? std::sqrt(std::max(0.0, (sum_sq - nt * r.bias * r.bias) / (nt - 1.0)) / nt) : 0.0;
    return r;
}

#define LDLB_INSTANTIATE_SAMPLERS(Real)                                                                          \
    template Tensor<double> probability_flow_rhs(const MixedScoreNet<Real>&, const SdeSchedule&,                 \
                                                 const Tensor<double>&, double);                                 \
    template SampleResult ode_sample(const MixedScoreNet<Real>&, const SdeSchedule&, const Tensor<double>&,      \
                                     const OdeSolverConfig&);                                                    \
    template Tensor<double> ancestral_sample(const MixedScoreNet<Real>&, const SdeSchedule&,                     \
                                             const Tensor<double>&, std::size_t, Rng&, double);                  \
    template LikelihoodResult ode_log_likelihood(const MixedScoreNet<Real>&, const SdeSchedule&,                 \
                                                 const Tensor<double>&, const OdeSolverConfig&, std::size_t,     \
                                                 Rng&);                                                          \
    template NelboResult eval_nelbo(const Vae<Real>&, const MixedScoreNet<Real>&, const SdeSchedule&,            \
                                    const Tensor<Real>&, const OdeSolverConfig&, std::size_t, Rng&);

LDLB_INSTANTIATE_SAMPLERS(float)
LDLB_INSTANTIATE_SAMPLERS(double)

} // namespace ldlb
