// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance runner. Prints one PASS / FAIL / SKIPPED line per criterion on
// stdout (details go to stderr) and exits non-zero when any criterion fails.
// Arguments select a subset of criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ldlb/checkpoint.hpp"
#include "ldlb/config.hpp"
#include "ldlb/data.hpp"
#include "ldlb/error.hpp"
#include "ldlb/experiment.hpp"
#include "ldlb/log.hpp"
#include "ldlb/nn.hpp"
#include "ldlb/objectives.hpp"
#include "ldlb/rng.hpp"
#include "ldlb/samplers.hpp"
#include "ldlb/score_prior.hpp"
#include "ldlb/sde.hpp"
#include "ldlb/time_sampling.hpp"
#include "ldlb/vae.hpp"

#ifndef LDLB_SOURCE_DIR
#define LDLB_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using namespace ldlb;

namespace {

enum class Status { Pass, Fail, Skipped };

struct Outcome {
    Status status = Status::Fail;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string g(double v) { return fmt("%.4g", v); }

double rel(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-300); }

constexpr double kAlphaOff = -800.0;
constexpr double kAlphaOn = 800.0;

// ---------------------------------------------------------------- 1

struct KernelOracle {
    SdeSchedule s;
    double t;
    double mean_coeff, var, ring_var;
};

// Extended-precision values computed with mpmath.
std::vector<KernelOracle> kernel_oracles() {
    return {
        {SdeSchedule::linear_vpsde(0.1, 20.0), 1.0, 0.00657158649492961501, 0.99995681425093965870, 1.0},
        {SdeSchedule::linear_vpsde(0.1, 20.0), 0.5, 0.28118288079675237585, 0.92093618754683934399, 1.0},
        {SdeSchedule::linear_vpsde(0.1, 20.0, 3e-5), 0.7, 0.08435257018282649835, 0.99288485736423422343, 1.0},
        {SdeSchedule::sub_vpsde(0.1, 20.0), 0.4, 0.44219690927989865416, 0.64715893797020906034,
         0.84269704454690398083},
        {SdeSchedule::geometric_vpsde(3e-5, 0.999), 0.5, 0.99727395954333586498, 0.005474486277268397720, 1.0},
        {SdeSchedule::vesde(0.01, 50.0), 0.3, 1.0, 0.12873332935452238199, 1.11873332935452238199},
    };
}

// Euler-Maruyama from the point mass z0 = c. Nodes equidistribute
// t + I(t) / I(1) with I = int (g^2 + 2 |f|) ds, so no step is stiff where the
// rate blows up near t = 1; every target time is a node.
struct EmMoments {
    double t, mean, var;
};

std::vector<EmMoments> euler_maruyama(const SdeSchedule& s, double c, std::size_t n_paths, std::size_t n_steps,
                                      const std::vector<double>& targets, std::uint64_t seed) {
    const std::size_t fine = 200000;
    std::vector<double> phi(fine + 1, 0.0), tt(fine + 1);
    auto rate = [&](double t) { return diffusion_sq(s, t) + 2.0 * std::fabs(drift_coeff(s, t)); };
    for (std::size_t i = 0; i <= fine; ++i) tt[i] = static_cast<double>(i) / fine;
    for (std::size_t i = 1; i <= fine; ++i) phi[i] = phi[i - 1] + 0.5 * (rate(tt[i - 1]) + rate(tt[i])) / fine;
    const double total = phi.back();
    for (std::size_t i = 0; i <= fine; ++i) phi[i] = tt[i] + phi[i] / total;
    auto phi_inv = [&](double p) {
        const auto it = std::lower_bound(phi.begin(), phi.end(), p);
        if (it == phi.begin()) return 0.0;
        if (it == phi.end()) return 1.0;
        const std::size_t k = static_cast<std::size_t>(it - phi.begin());
        const double w = (p - phi[k - 1]) / (phi[k] - phi[k - 1]);
        return tt[k - 1] + w * (tt[k] - tt[k - 1]);
    };
    auto phi_at = [&](double t) {
        const double x = t * fine;
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(x), fine - 1);
        return phi[k] + (x - k) * (phi[k + 1] - phi[k]);
    };

    // Steps per segment between consecutive targets, proportional to the phi span.
    std::vector<double> grid{0.0};
    double t_prev = 0.0;
    std::size_t used = 0;
    const double span = phi_at(targets.back());
    for (std::size_t j = 0; j < targets.size(); ++j) {
        const double p0 = phi_at(t_prev), p1 = phi_at(targets[j]);
        std::size_t m = (j + 1 == targets.size())
                            ? n_steps - used
                            : std::max<std::size_t>(1, std::lround(n_steps * (p1 - p0) / span));
        used += m;
        for (std::size_t k = 1; k < m; ++k) grid.push_back(phi_inv(p0 + (p1 - p0) * k / m));
        grid.push_back(targets[j]);
        t_prev = targets[j];
    }

    std::vector<double> z(n_paths, c);
    Rng rng(seed);
    std::vector<EmMoments> out;
    std::size_t next = 0;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const double t = grid[k], h = grid[k + 1] - t;
        const double a = 1.0 + drift_coeff(s, t) * h, b = std::sqrt(diffusion_sq(s, t) * h);
        for (double& v : z) v = a * v + b * rng.normal();
        if (next < targets.size() && grid[k + 1] == targets[next]) {
            double m = 0.0, q = 0.0;
            for (double v : z) m += v;
            m /= n_paths;
            for (double v : z) q += (v - m) * (v - m);
            out.push_back({targets[next], m, q / (n_paths - 1)});
            ++next;
        }
    }
    return out;
}

Outcome criterion1() {
    Outcome o{Status::Pass, ""};
    double worst_kernel = 0.0;
    for (const auto& k : kernel_oracles()) {
        const auto kp = kernel(k.s, k.t);
        worst_kernel = std::max({worst_kernel, rel(kp.var, k.var), rel(kp.ring_var, k.ring_var)});
        worst_kernel = std::max(worst_kernel, rel(kp.mean_coeff, k.mean_coeff));
        worst_kernel = std::max(worst_kernel, ring_var_identity_residual(k.s, k.t));
    }
    if (!(worst_kernel <= 1e-10)) o.status = Status::Fail;

    const std::vector<SdeSchedule> kinds{SdeSchedule::linear_vpsde(0.1, 20.0), SdeSchedule::sub_vpsde(0.1, 20.0),
                                         SdeSchedule::geometric_vpsde(3e-5, 0.999), SdeSchedule::vesde(0.01, 50.0)};
    const double c = 1.5;
    double worst_mean = 0.0, worst_var = 0.0;
    std::uint64_t seed = 11;
    for (const auto& s : kinds) {
        const auto em = euler_maruyama(s, c, 100000, 1000, {0.25, 0.5, 1.0}, seed++);
        for (const auto& e : em) {
            const auto kp = kernel(s, e.t);
            const double m = kp.mean_coeff * c;
            const double v = kp.var - s.sigma2_0 * kp.mean_coeff * kp.mean_coeff;
            const double dm = std::fabs(e.mean - m) / std::sqrt(v), dv = rel(e.var, v);
            std::cerr << "  [1] " << to_string(s.kind) << " t=" << e.t << " mean " << g(e.mean) << " vs " << g(m)
                      << " var " << g(e.var) << " vs " << g(v) << "\n";
            worst_mean = std::max(worst_mean, dm);
            worst_var = std::max(worst_var, dv);
        }
    }
    if (!(worst_mean <= 0.02 && worst_var <= 0.02)) o.status = Status::Fail;
    o.detail = "kernel rel err " + g(worst_kernel) + " (tol 1e-10); EM |dmean|/sigma " + g(worst_mean) +
               ", var rel err " + g(worst_var) + " (tol 0.02)";
    return o;
}

// ---------------------------------------------------------------- 2

Outcome criterion2() {
    const auto s = SdeSchedule::geometric_vpsde(3e-5, 0.999);
    const double rate = 10.41331267596853520; // ln(0.999 / 3e-5), mpmath
    double worst_rate = 0.0, lo = INFINITY, hi = -INFINITY, sum = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double t = s.t_cutoff + (1.0 - s.t_cutoff) * i / 99.0;
        worst_rate = std::max(worst_rate, rel(var_derivative(s, t) / kernel(s, t).var, rate));
        const double v = gaussian_integrand(s, WeightingMechanism::Wll, TSamplingStrategy::Uniform, t, 1);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        sum += v;
    }
    const double spread = (hi - lo) / (sum / 100.0);
    const bool ok = worst_rate <= 1e-8 && spread <= 0.01;
    return {ok ? Status::Pass : Status::Fail, "d log sigma2/dt rel err " + g(worst_rate) +
                                                  " (tol 1e-8); integrand spread " + g(spread) + " (tol 0.01)"};
}

// ---------------------------------------------------------------- 3

// Kolmogorov-Smirnov distance of n draws against the proposal cdf obtained by
// integrating proposal_pdf (Simpson on a fine uniform grid).
double ks_distance(const SdeSchedule& s, WeightingMechanism m, std::size_t n, std::uint64_t seed, double& mass) {
    const std::size_t cells = 20000;
    const double a = s.t_cutoff, h = (1.0 - a) / cells;
    std::vector<double> cdf(cells + 1, 0.0);
    for (std::size_t i = 0; i < cells; ++i) {
        const double t0 = a + i * h;
        cdf[i + 1] = cdf[i] + h / 6.0 *
                                  (proposal_pdf(s, m, t0) + 4.0 * proposal_pdf(s, m, t0 + 0.5 * h) +
                                   proposal_pdf(s, m, std::min(1.0, t0 + h)));
    }
    mass = cdf.back();
    for (double& v : cdf) v /= mass;
    auto ref = [&](double t) {
        const double x = (t - a) / h;
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(x, 0.0)), cells - 1);
        return cdf[k] + (x - k) * (cdf[k + 1] - cdf[k]);
    };
    Rng rng(seed);
    std::vector<double> t(n);
    for (auto& v : t) v = sample_t(s, m, TSamplingStrategy::ImportanceSampled, rng.uniform()).t;
    std::sort(t.begin(), t.end());
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = ref(t[i]);
        d = std::max({d, std::fabs(f - static_cast<double>(i) / n), std::fabs(f - static_cast<double>(i + 1) / n)});
    }
    return d;
}

Outcome criterion3() {
    const std::vector<SdeSchedule> kinds{SdeSchedule::linear_vpsde(0.1, 20.0), SdeSchedule::sub_vpsde(0.1, 20.0),
                                         SdeSchedule::geometric_vpsde(3e-5, 0.999), SdeSchedule::vesde(0.01, 50.0)};
    double worst = 0.0;
    std::size_t tested = 0;
    std::uint64_t seed = 31;
    for (const auto& s : kinds)
        for (auto m : {WeightingMechanism::Wll, WeightingMechanism::Wun, WeightingMechanism::Wre}) {
            try {
                check_supported(s, m, TSamplingStrategy::ImportanceSampled);
            } catch (const ConfigError&) {
                std::cerr << "  [3] " << to_string(s.kind) << "/" << to_string(m) << " has no proposal\n";
                continue;
            }
            double mass = 0.0;
            const double d = ks_distance(s, m, 1000000, seed++, mass);
            std::cerr << "  [3] " << to_string(s.kind) << "/" << to_string(m) << " KS " << g(d) << " pdf mass "
                      << fmt("%.10f", mass) << "\n";
            worst = std::max(worst, d);
            ++tested;
        }
    const auto s = SdeSchedule::linear_vpsde(0.1, 20.0);
    const std::size_t dim = 2;
    const auto is = variance_diagnostic(s, WeightingMechanism::Wll, TSamplingStrategy::ImportanceSampled, 1000000,
                                        dim, 301);
    const auto un = variance_diagnostic(s, WeightingMechanism::Wll, TSamplingStrategy::Uniform, 1000000, dim, 302);
    const double ratio = is.std / un.std;
    const bool ok = worst < 0.002 && ratio <= 0.3;
    return {ok ? Status::Pass : Status::Fail, std::to_string(tested) + " samplers, max KS " + g(worst) +
                                                  " (tol 0.002); Wll IS/Uniform std ratio at D=2 " + g(ratio) +
                                                  " (tol 0.3)"};
}

// ---------------------------------------------------------------- 4

Outcome criterion4() {
    const auto s = SdeSchedule::linear_vpsde(0.1, 20.0, 3e-5);
    MixedScoreNet<double> msn(1, {16}, 8);
    Rng init(41);
    msn.init(init);
    std::fill(msn.alpha_logits.begin(), msn.alpha_logits.end(), kAlphaOff);
    const std::size_t batch = 500000, batches = 20;
    Rng zr(42), tr(43);
    double sum = 0.0, sq = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
        Tensor<double> z0(batch, 1);
        for (auto& v : z0.data) v = std::sqrt(1.0 - s.sigma2_0) * zr.normal();
        const auto ce = cross_entropy_estimate_latent(msn, s, WeightingMechanism::Wll,
                                                      TSamplingStrategy::ImportanceSampled, z0, tr);
        for (double v : ce) {
            sum += v;
            sq += v * v;
        }
    }
    const double n = static_cast<double>(batch * batches);
    const double mean = sum / n, se = std::sqrt((sq / n - mean * mean) / n);
    const double target = 0.5 * std::log(2.0 * M_PI * std::exp(1.0));
    const bool ok = std::fabs(mean - target) <= 0.01;
    return {ok ? Status::Pass : Status::Fail, "CE " + fmt("%.5f", mean) + " +- " + fmt("%.5f", se) + " vs " +
                                                  fmt("%.5f", target) + " (tol 0.01), t_cutoff " +
                                                  g(s.t_cutoff)};
}

// ---------------------------------------------------------------- 5

Outcome criterion5() {
    double worst_ll = 0.0;
    const std::size_t dim = 4;
    for (const auto& s : {SdeSchedule::linear_vpsde(0.1, 20.0), SdeSchedule::geometric_vpsde(3e-5, 0.999)}) {
        MixedScoreNet<double> msn(dim, {32, 32}, 16);
        Rng init(51);
        msn.init(init);
        std::fill(msn.alpha_logits.begin(), msn.alpha_logits.end(), kAlphaOff);
        Rng zr(52);
        Tensor<double> z0(64, dim);
        for (auto& v : z0.data) v = 1.5 * zr.normal();
        for (std::size_t probes : {std::size_t{0}, std::size_t{4}}) {
            Rng pr(53);
            const auto r = ode_log_likelihood(msn, s, z0, OdeSolverConfig{}, probes, pr);
            for (std::size_t i = 0; i < z0.rows(); ++i) {
                double q = 0.0;
                for (std::size_t j = 0; j < dim; ++j) q += z0(i, j) * z0(i, j);
                const double exact = -0.5 * q - 0.5 * dim * std::log(2.0 * M_PI);
                worst_ll = std::max(worst_ll, std::fabs(r.log_p[i] - exact) / dim);
            }
        }
    }

    // Random 8x8 linear maps 2 I + N(0, 1) in the z-block of a one-layer eps'.
    double worst_tr = 0.0;
    const auto s = SdeSchedule::linear_vpsde(0.1, 20.0);
    for (std::uint64_t k = 0; k < 5; ++k) {
        MixedScoreNet<double> msn(8, {}, 8);
        Rng wr(500 + k);
        auto& L = msn.eps_net.layers.front();
        for (auto& w : L.w) w = wr.normal();
        for (std::size_t i = 0; i < 8; ++i) L.w[i * L.in + i] += 2.0;
        for (auto& b : L.b) b = wr.normal();
        std::fill(msn.alpha_logits.begin(), msn.alpha_logits.end(), kAlphaOn);
        const std::size_t n = 100000;
        Tensor<double> z(n, 8), probe(n, 8);
        for (auto& v : z.data) v = wr.normal();
        Rng pr(600 + k);
        for (auto& v : probe.data) v = pr.rademacher();
        const std::vector<double> t(n, 0.5);
        const auto est = eps_divergence_probe(msn, s, z, t, probe);
        const double mean = std::accumulate(est.begin(), est.end(), 0.0) / n;
        Tensor<double> z1(1, 8);
        std::copy(z.row(0), z.row(0) + 8, z1.data.begin());
        const double exact = eps_divergence_exact(msn, s, z1, std::vector<double>{0.5})[0];
        std::cerr << "  [5] map " << k << " Hutchinson " << g(mean) << " exact " << g(exact) << "\n";
        worst_tr = std::max(worst_tr, rel(mean, exact));
    }
    const bool ok = worst_ll <= 1e-3 && worst_tr <= 0.01;
    return {ok ? Status::Pass : Status::Fail, "alpha=0 log-lik err per dim " + g(worst_ll) +
                                                  " (tol 1e-3); Hutchinson rel err " + g(worst_tr) +
                                                  " (tol 0.01)"};
}

// ---------------------------------------------------------------- 6

template <class Real>
DenseNet<double> widen(const DenseNet<Real>& net) {
    DenseNet<double> out;
    out.time_embed_dim = net.time_embed_dim;
    for (const auto& L : net.layers) {
        DenseLayer<double> d;
        d.in = L.in;
        d.out = L.out;
        d.act = L.act;
        d.w.assign(L.w.begin(), L.w.end());
        d.b.assign(L.b.begin(), L.b.end());
        out.layers.push_back(std::move(d));
    }
    return out;
}

template <class Real>
Tensor<double> widen(const Tensor<Real>& t) {
    Tensor<double> out(t.shape);
    out.data.assign(t.data.begin(), t.data.end());
    return out;
}

template <class Real>
double inner(const Tensor<Real>& a, const Tensor<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += static_cast<double>(a.data[i]) * b.data[i];
    return s;
}

Tensor<float> random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    Tensor<float> t(r, c);
    for (auto& v : t.data) v = static_cast<float>(scale * rng.normal());
    return t;
}

// Worst relative error of float gradients against central differences of a
// double-precision loss; entries below 1e-2 of the largest gradient are
// compared on that absolute scale.
double fd_worst(const std::vector<std::span<double>>& params, const std::vector<std::span<const float>>& grads,
                const std::function<double()>& loss) {
    double gmax = 0.0;
    for (const auto& gs : grads)
        for (float v : gs) gmax = std::max(gmax, std::fabs(static_cast<double>(v)));
    const double floor = std::max(1e-2 * gmax, 1e-12);
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k)
        for (std::size_t i = 0; i < params[k].size(); ++i) {
            double& p = params[k][i];
            const double old = p, h = 1e-5 * std::max(1.0, std::fabs(old));
            p = old + h;
            const double a = loss();
            p = old - h;
            const double b = loss();
            p = old;
            const double num = (a - b) / (2 * h), ana = grads[k][i];
            worst = std::max(worst, std::fabs(ana - num) / std::max({std::fabs(ana), std::fabs(num), floor}));
        }
    return worst;
}

std::vector<std::span<const float>> as_const(std::vector<std::span<float>> v) {
    return {v.begin(), v.end()};
}

double dense_check(const std::vector<std::size_t>& dims, Activation hidden, Activation output, std::size_t embed,
                   std::uint64_t seed) {
    Rng rng(seed);
    DenseNet<float> net(dims, hidden, output, embed);
    net.init_he_uniform(rng, false);
    for (auto& L : net.layers)
        for (auto& b : L.b) b = static_cast<float>(0.1 * rng.normal());
    const std::size_t n = 5;
    const auto x = random_tensor(n, dims.front(), rng);
    const auto up = random_tensor(n, dims.back(), rng);
    std::vector<double> t(embed ? n : 0);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.1 + 0.2 * i;
    auto res = backward(net, forward_trace(net, x, t), up, true);
    auto wnet = widen(net);
    auto wx = widen(x);
    const auto wup = widen(up);
    auto params = wnet.param_spans();
    params.push_back(std::span<double>(wx.data));
    auto grads = as_const(res.grads.spans());
    grads.push_back(std::span<const float>(res.input_grad.data));
    return fd_worst(params, grads, [&] { return inner(forward(wnet, wx, t), wup); });
}

double mixed_check(const SdeSchedule& s, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t dim = 4, n = 6;
    MixedScoreNet<float> msn(dim, {32, 32}, 16);
    msn.init(rng);
    msn.eps_net.init_he_uniform(rng, false);
    for (auto& a : msn.alpha_logits) a = static_cast<float>(rng.normal());
    const auto z = random_tensor(n, dim, rng);
    const auto up = random_tensor(n, dim, rng);
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = 0.05 + 0.18 * i;
    auto res = eps_backward(msn, eps_forward(msn, s, z, t), up, true);
    MixedScoreNet<double> w;
    w.alpha_logits.assign(msn.alpha_logits.begin(), msn.alpha_logits.end());
    w.eps_net = widen(msn.eps_net);
    auto wz = widen(z);
    const auto wup = widen(up);
    auto params = w.param_spans();
    params.push_back(std::span<double>(wz.data));
    auto grads = as_const(res.grads.spans());
    grads.push_back(std::span<const float>(res.z_grad.data));
    return fd_worst(params, grads, [&] { return inner(eps_theta(w, s, wz, t), wup); });
}

Vae<double> widen(const Vae<float>& v) {
    Vae<double> w;
    w.encoder = widen(v.encoder);
    w.decoder = widen(v.decoder);
    w.data_dim = v.data_dim;
    w.latent_dim = v.latent_dim;
    w.kind = v.kind;
    return w;
}

double decoder_check(DecoderKind kind, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = 5, data = 8, latent = 3;
    Vae<float> vae(data, latent, {32}, kind);
    vae.init(rng);
    vae.decoder.init_he_uniform(rng, false);
    auto x = random_tensor(n, data, rng);
    if (kind == DecoderKind::Bernoulli)
        for (auto& v : x.data) v = v > 0 ? 1.0f : 0.0f;
    const auto z0 = random_tensor(n, latent, rng);
    VaeGrads<float> acc(vae);
    acc.zero();
    const std::vector<double> ones(n, 1.0);
    const auto zg = decoder_backward(vae, recon_forward(vae, x, z0), ones, acc);
    auto w = widen(vae);
    const auto wx = widen(x);
    auto wz = widen(z0);
    auto params = w.decoder.param_spans();
    params.push_back(std::span<double>(wz.data));
    auto grads = as_const(acc.dec.spans());
    grads.push_back(std::span<const float>(zg.data));
    return fd_worst(params, grads, [&] {
        const auto r = recon_term(w, wx, wz);
        return std::accumulate(r.begin(), r.end(), 0.0);
    });
}

double encoder_check(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = 5, data = 8, latent = 3;
    Vae<float> vae(data, latent, {32}, DecoderKind::Gaussian);
    vae.init(rng);
    vae.encoder.init_he_uniform(rng, false);
    for (auto& w : vae.encoder.layers.back().w) w *= 0.2f;
    const auto x = random_tensor(n, data, rng);
    const auto dm = random_tensor(n, latent, rng);
    const auto dl = random_tensor(n, latent, rng);
    VaeGrads<float> acc(vae);
    acc.zero();
    encoder_backward(vae, encode(vae, x), dm, dl, acc);
    auto w = widen(vae);
    const auto wx = widen(x), wdm = widen(dm), wdl = widen(dl);
    return fd_worst(w.encoder.param_spans(), as_const(acc.enc.spans()), [&] {
        const auto p = encode(w, wx);
        return inner(p.mean, wdm) + inner(p.logvar, wdl);
    });
}

Outcome criterion6() {
    std::vector<std::pair<std::string, double>> checks{
        {"dense swish/tanh", dense_check({16, 24, 24, 16}, Activation::Swish, Activation::Tanh, 8, 61)},
        {"dense swish/linear", dense_check({2, 32, 32, 2}, Activation::Swish, Activation::Linear, 16, 62)},
        {"dense tanh untimed", dense_check({6, 12, 3}, Activation::Tanh, Activation::Linear, 0, 63)},
        {"mixed linear_vpsde", mixed_check(SdeSchedule::linear_vpsde(0.1, 20.0), 64)},
        {"mixed geometric_vpsde", mixed_check(SdeSchedule::geometric_vpsde(3e-5, 0.999), 65)},
        {"mixed vesde", mixed_check(SdeSchedule::vesde(0.01, 50.0), 66)},
        {"mixed sub_vpsde", mixed_check(SdeSchedule::sub_vpsde(0.1, 20.0), 67)},
        {"decoder bernoulli", decoder_check(DecoderKind::Bernoulli, 68)},
        {"decoder gaussian", decoder_check(DecoderKind::Gaussian, 69)},
        {"encoder", encoder_check(70)},
    };
    double worst = 0.0;
    std::string name;
    for (const auto& [n, e] : checks) {
        std::cerr << "  [6] " << n << " " << g(e) << "\n";
        if (!(e <= worst)) {
            worst = e;
            name = n;
        }
    }
    return {worst < 1e-3 ? Status::Pass : Status::Fail,
            std::to_string(checks.size()) + " float gradient checks, max rel err " + g(worst) + " (" + name +
                ", tol 1e-3)"};
}

// ---------------------------------------------------------------- 7 / 8

fs::path work_dir() {
    const fs::path p = fs::current_path() / "acceptance_runs";
    fs::create_directories(p);
    return p;
}

std::string source_path(const std::string& rel_path) { return (fs::path(LDLB_SOURCE_DIR) / rel_path).string(); }

std::vector<std::vector<double>> read_csv(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> r;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) r.push_back(std::stod(cell));
        rows.push_back(std::move(r));
    }
    return rows;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Pretrain, then end-to-end training; the baseline is the standard-prior
// NELBO of the pretrained VAE on the same held-out set.
struct RunResult {
    double baseline = 0.0;
    double lsgm = 0.0;
    double lsgm_se = 0.0;
    std::string samples;
};

RunResult pretrain_train_eval(ExperimentConfig c) {
    Experiment ex(c);
    ex.run("pretrain");
    const std::string pre = (fs::path(c.output_dir) / "checkpoints" / "pretrain.ckpt").string();
    ex.run("train");
    RunResult r;
    r.baseline = ex.run("eval-nelbo", pre)["standard_prior_nelbo"].get<double>();
    const auto e = ex.run("eval-nelbo");
    r.lsgm = e["nelbo"].get<double>();
    r.lsgm_se = e["std_error"].get<double>();
    r.samples = ex.run("sample")["samples"].get<std::string>();
    return r;
}

Outcome criterion7() {
    const auto centers = toy8gauss_centers();
    const double radius = 3.0 * 0.1;
    std::vector<double> gains;
    std::size_t min_modes = centers.size();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ExperimentConfig c = load_experiment_config(source_path("configs/toy8gauss.json"));
        c.seed = seed;
        c.train.mechanism = WeightingMechanism::Wun;
        c.train.q_obj_t = QObjT::SeparateLl;
        c.train.schedule = SdeSchedule::linear_vpsde(0.1, 20.0);
        c.eval_probes = 0;
        c.output_dir = (work_dir() / ("toy8gauss_seed" + std::to_string(seed))).string();
        if (select_algorithm(c.train) != Algorithm::Alg2) return {Status::Fail, "configuration does not select Alg2"};
        const RunResult r = pretrain_train_eval(c);
        const auto xs = read_csv(r.samples);
        std::vector<std::size_t> hits(centers.size(), 0);
        for (const auto& x : xs) {
            std::size_t best = 0;
            double bd = INFINITY;
            for (std::size_t k = 0; k < centers.size(); ++k) {
                const double d = std::hypot(x[0] - centers[k].first, x[1] - centers[k].second);
                if (d < bd) {
                    bd = d;
                    best = k;
                }
            }
            if (bd <= radius) ++hits[best];
        }
        std::size_t modes = 0;
        for (auto h : hits) modes += static_cast<double>(h) >= 0.02 * xs.size();
        min_modes = std::min(min_modes, modes);
        gains.push_back(r.baseline - r.lsgm);
        std::cerr << "  [7] seed " << seed << " baseline " << g(r.baseline) << " lsgm " << g(r.lsgm) << " +- "
                  << g(r.lsgm_se) << " modes " << modes << "/8\n";
    }
    const double med = median(gains);
    const bool ok = med >= 0.1 && min_modes >= 7;
    return {ok ? Status::Pass : Status::Fail, "median NELBO gain " + fmt("%.3f", med) +
                                                  " nats (tol 0.1); fewest modes covered " +
                                                  std::to_string(min_modes) + "/8 (tol 7)"};
}

Outcome criterion8() {
    nlohmann::json j;
    std::ifstream(source_path("configs/mnist_small.json")) >> j;
    for (const char* key : {"data_path", "eval_data_path"})
        if (j.contains(key) && fs::path(j[key].get<std::string>()).is_relative())
            j[key] = source_path(j[key].get<std::string>());
    const std::string images = j["data_path"].get<std::string>();
    if (!fs::exists(images)) return {Status::Skipped, "MNIST images not found at " + images};
    if (j.contains("eval_data_path") && !fs::exists(j["eval_data_path"].get<std::string>())) j.erase("eval_data_path");
    ExperimentConfig c = experiment_from_json(j);
    c.output_dir = (work_dir() / "mnist_small").string();
    const RunResult r = pretrain_train_eval(c);
    const double gain = r.baseline - r.lsgm;
    return {gain >= 1.0 ? Status::Pass : Status::Fail, "baseline " + g(r.baseline) + " lsgm " + g(r.lsgm) +
                                                           " gain " + fmt("%.3f", gain) + " nats (tol 1)"};
}

// ---------------------------------------------------------------- 9

Outcome criterion9() {
    Rng rng(91);
    std::vector<double> logps(100);
    for (auto& w : logps) w = rng.normal();
    const std::vector<double> s2{0.0, 0.01, 0.05, 0.1, 0.25};
    std::vector<double> bias;
    bool ok = true;
    std::string detail = "bias";
    for (std::size_t i = 0; i < s2.size(); ++i) {
        const auto r = iw_bias_probe(logps, s2[i], 100, 100000, 92 + i);
        bias.push_back(r.bias);
        detail += " " + g(r.bias);
        if (r.bias > 2.0 * s2[i] + 1e-15) ok = false;
        if (i > 0 && !(bias[i] > bias[i - 1])) ok = false;
    }
    return {ok ? Status::Pass : Status::Fail, detail + " at s2 0/0.01/0.05/0.1/0.25 (increasing, <= 2 s2)"};
}

// ---------------------------------------------------------------- 10

template <class G>
double project(const G& grads, const std::vector<double>& u) {
    double s = 0.0;
    std::size_t k = 0;
    for (const auto& sp : grads.spans())
        for (float v : sp) s += u[k++] * static_cast<double>(v);
    return s;
}

// Two-sided p-value of a paired z-test; identical pairs give p = 1.
double paired_p(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double m = 0.0, q = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += a[i] - b[i];
    m /= n;
    for (std::size_t i = 0; i < n; ++i) q += (a[i] - b[i] - m) * (a[i] - b[i] - m);
    const double se = std::sqrt(q / (n - 1) / n);
    if (se == 0.0) return m == 0.0 ? 1.0 : 0.0;
    return std::erfc(std::fabs(m / se) / std::sqrt(2.0));
}

Outcome criterion10() {
    ExperimentConfig c = load_experiment_config(source_path("configs/toy8gauss.json"));
    c.train.mechanism = WeightingMechanism::Wll;
    c.train.seed = 101;
    TrainState<float> st = TrainState<float>::create(c.train, c.model);
    const Dataset data = gen_toy("toy8gauss", 4096, 102);
    std::vector<std::size_t> rows(c.train.batch_size);
    for (std::size_t step = 0; step < 400; ++step) {
        const auto perm = epoch_permutation(data.size(), 103, step);
        std::copy(perm.begin(), perm.begin() + rows.size(), rows.begin());
        const auto x = make_batch<float>(data, rows, 103, step);
        if (step < 200)
            pretrain_step(st, x, 200);
        else
            train_step_alg2(st, x);
    }
    std::iota(rows.begin(), rows.end(), 0);
    const auto x = make_batch<float>(data, rows, 104, 0);

    const std::size_t n_prior = [&] {
        std::size_t k = 0;
        for (const auto& sp : st.prior.param_spans()) k += sp.size();
        return k;
    }();
    const std::size_t n_vae = [&] {
        std::size_t k = 0;
        for (const auto& sp : st.vae.param_spans()) k += sp.size();
        return k;
    }();
    Rng ur(105);
    std::vector<double> up(n_prior), uv(n_vae);
    for (auto& v : up) v = ur.normal();
    for (auto& v : uv) v = ur.normal();

    const std::size_t draws = 10000;
    std::vector<double> p[3], v[3];
    for (int a = 0; a < 3; ++a) {
        p[a].resize(draws);
        v[a].resize(draws);
    }
    const Algorithm algs[3] = {Algorithm::Alg1, Algorithm::Alg2, Algorithm::Alg3};
    for (std::size_t k = 0; k < draws; ++k)
        for (int a = 0; a < 3; ++a) {
            const auto e = estimate_gradients(st, x, algs[a], 1000 + k, 0);
            p[a][k] = project(e.prior, up);
            v[a][k] = project(e.vae, uv);
        }
    const double p12 = std::min(paired_p(p[0], p[1]), paired_p(v[0], v[1]));
    const double p13 = std::min(paired_p(p[0], p[2]), paired_p(v[0], v[2]));
    const double p23 = std::min(paired_p(p[1], p[2]), paired_p(v[1], v[2]));
    const double worst = std::min({p12, p13, p23});
    return {worst > 0.01 ? Status::Pass : Status::Fail, "min paired p-value Alg1/2 " + g(p12) + ", Alg1/3 " +
                                                            g(p13) + ", Alg2/3 " + g(p23) + " (tol > 0.01)"};
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    Outcome (*run)();
};

const char* label(Status s) {
    switch (s) {
    case Status::Pass: return "PASS";
    case Status::Fail: return "FAIL";
    case Status::Skipped: return "SKIPPED";
    }
    return "FAIL";
}

} // namespace

int main(int argc, char** argv) {
    set_log_level(LogLevel::Error);
    const std::vector<Criterion> all{
        {1, "schedule oracles", 60, criterion1},        {2, "geometric constancy", 60, criterion2},
        {3, "IS correctness", 300, criterion3},         {4, "cross-entropy fixed point", 60, criterion4},
        {5, "likelihood oracle", 120, criterion5},      {6, "gradient suite", 120, criterion6},
        {7, "toy end-to-end", 900, criterion7},         {8, "MNIST direction", 4 * 3600, criterion8},
        {9, "IW bias", 60, criterion9},                 {10, "algorithm equivalence", 300, criterion10},
    };
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
    int failures = 0;
    for (const auto& c : all) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), c.id) == selected.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {Status::Fail, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (o.status == Status::Pass && secs > c.budget_s) {
            o.status = Status::Fail;
            o.detail += "; over the runtime budget";
        }
        failures += o.status == Status::Fail;
        std::printf("%-7s criterion %2d %s: %s [%.1f s, budget %.0f s]\n", label(o.status), c.id, c.name,
                    o.detail.c_str(), secs, c.budget_s);
        std::fflush(stdout);
    }
    return failures ? 1 : 0;
}
