// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldlb/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ldlb/error.hpp"
#include "ldlb/parallel.hpp"

namespace ldlb {

namespace {

constexpr std::size_t kRowChunk = 32;

template <class Real>
Real sigmoid(Real x) {
    return x >= Real(0) ? Real(1) / (Real(1) + std::exp(-x)) : std::exp(x) / (Real(1) + std::exp(x));
}

template <class Real>
Real activate(Activation a, Real x) {
    switch (a) {
        case Activation::Linear: return x;
        case Activation::Swish: return x * sigmoid(x);
        case Activation::Tanh: return std::tanh(x);
    }
    return x;
}

template <class Real>
Real activate_derivative(Activation a, Real x) {
    switch (a) {
        case Activation::Linear: return Real(1);
        case Activation::Swish: {
            const Real s = sigmoid(x);
            return s + x * s * (Real(1) - s);
        }
        case Activation::Tanh: {
            const Real y = std::tanh(x);
            return Real(1) - y * y;
        }
    }
    return Real(1);
}

// Eight independent partial sums so the loop vectorizes without reassociation flags.
template <class Real>
Real dot(const Real* a, const Real* b, std::size_t n) {
    Real acc[8] = {};
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
        for (int k = 0; k < 8; ++k) acc[k] += a[j + k] * b[j + k];
    }
    Real s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for (; j < n; ++j) s += a[j] * b[j];
    return s;
}

template <class Real>
void axpy(Real alpha, const Real* x, Real* y, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) y[j] += alpha * x[j];
}

template <class Real>
Tensor<Real> build_input(const DenseNet<Real>& net, const Tensor<Real>& x, std::span<const double> t) {
    if (net.layers.empty()) throw ShapeError("forward: empty network");
    if (x.shape.size() < 1 || x.cols() != net.input_dim())
        throw ShapeError("forward: input has " + std::to_string(x.cols()) + " columns, network expects " +
                         std::to_string(net.input_dim()));
    const std::size_t n = x.rows();
    if (net.time_embed_dim == 0) {
        if (!t.empty()) throw ShapeError("forward: time supplied to an unconditioned network");
        Tensor<Real> in(n, x.cols());
        in.data = x.data;
        return in;
    }
    if (t.size() != n) throw ShapeError("forward: need one time per row");
    const std::size_t d = x.cols();
    const std::size_t e = net.time_embed_dim;
    Tensor<Real> in(n, d + e);
    std::vector<double> emb(e);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(x.row(i), x.row(i) + d, in.row(i));
        if (i == 0 || t[i] != t[i - 1]) time_embedding(t[i], e, emb);
        for (std::size_t k = 0; k < e; ++k) in(i, d + k) = static_cast<Real>(emb[k]);
    }
    return in;
}

template <class Real>
void layer_forward(const DenseLayer<Real>& L, const Tensor<Real>& in, Tensor<Real>& pre, Tensor<Real>& out) {
    const std::size_t n = in.rows();
    pre = Tensor<Real>(n, L.out);
    out = Tensor<Real>(n, L.out);
    parallel_chunks(n, kRowChunk, [&](std::size_t, std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            const Real* xi = in.row(i);
            Real* pi = pre.row(i);
            Real* oi = out.row(i);
            for (std::size_t o = 0; o < L.out; ++o) {
                pi[o] = dot(L.w.data() + o * L.in, xi, L.in) + L.b[o];
                oi[o] = activate(L.act, pi[o]);
            }
        }
    });
}

} // namespace

template <class Real>
Tensor<Real>::Tensor(std::vector<std::size_t> dims, Real fill) : shape(std::move(dims)) {
    const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    data.assign(n, fill);
}

template <class Real>
std::size_t Tensor<Real>::trailing_product() const {
    if (shape.size() < 2) return shape.empty() ? 0 : 1;
    return std::accumulate(shape.begin() + 1, shape.end(), std::size_t{1}, std::multiplies<>());
}

template <class Real>
bool Tensor<Real>::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](Real v) { return std::isfinite(v); });
}

template <class Real>
void Tensor<Real>::check_finite(std::string_view what) const {
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!std::isfinite(data[i]))
            throw NumericalError(std::string(what) + ": non-finite value at flat index " + std::to_string(i));
    }
}

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::Linear: return "linear";
        case Activation::Swish: return "swish";
        case Activation::Tanh: return "tanh";
    }
    return "unknown";
}

Activation parse_activation(std::string_view name) {
    if (name == "linear") return Activation::Linear;
    if (name == "swish") return Activation::Swish;
    if (name == "tanh") return Activation::Tanh;
    throw ConfigError("activation: unknown '" + std::string(name) + "'");
}

template <class Real>
DenseNet<Real>::DenseNet(const std::vector<std::size_t>& dims, Activation hidden, Activation output,
                         std::size_t embed_dim)
    : time_embed_dim(embed_dim) {
    if (dims.size() < 2) throw ShapeError("DenseNet: need at least input and output dims");
    if (embed_dim % 2 != 0) throw ConfigError("time_embed_dim: must be even");
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        DenseLayer<Real> L;
        L.in = dims[l] + (l == 0 ? embed_dim : 0);
        L.out = dims[l + 1];
        if (L.in == 0 || L.out == 0) throw ShapeError("DenseNet: zero-width layer");
        L.w.assign(L.in * L.out, Real(0));
        L.b.assign(L.out, Real(0));
        L.act = (l + 2 == dims.size()) ? output : hidden;
        layers.push_back(std::move(L));
    }
}

template <class Real>
std::size_t DenseNet<Real>::param_count() const {
    std::size_t n = 0;
    for (const auto& L : layers) n += L.w.size() + L.b.size();
    return n;
}

template <class Real>
std::vector<std::span<Real>> DenseNet<Real>::param_spans() {
    std::vector<std::span<Real>> out;
    for (auto& L : layers) {
        out.emplace_back(L.w);
        out.emplace_back(L.b);
    }
    return out;
}

template <class Real>
std::vector<std::span<const Real>> DenseNet<Real>::param_spans() const {
    std::vector<std::span<const Real>> out;
    for (const auto& L : layers) {
        out.emplace_back(L.w);
        out.emplace_back(L.b);
    }
    return out;
}

template <class Real>
void DenseNet<Real>::init_he_uniform(Rng& rng, bool zero_last_layer) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
        auto& L = layers[l];
        std::fill(L.b.begin(), L.b.end(), Real(0));
        if (zero_last_layer && l + 1 == layers.size()) {
            std::fill(L.w.begin(), L.w.end(), Real(0));
            continue;
        }
        const double limit = std::sqrt(6.0 / static_cast<double>(L.in));
        for (auto& w : L.w) w = static_cast<Real>((2.0 * rng.uniform() - 1.0) * limit);
    }
}

template <class Real>
Grads<Real>::Grads(const DenseNet<Real>& net) {
    for (const auto& L : net.layers) {
        dw.emplace_back(L.w.size(), Real(0));
        db.emplace_back(L.b.size(), Real(0));
    }
}

template <class Real>
void Grads<Real>::zero() {
    for (auto& v : dw) std::fill(v.begin(), v.end(), Real(0));
    for (auto& v : db) std::fill(v.begin(), v.end(), Real(0));
}

template <class Real>
void Grads<Real>::add(const Grads& other, Real scale) {
    if (other.dw.size() != dw.size()) throw ShapeError("Grads::add: layer count mismatch");
    for (std::size_t l = 0; l < dw.size(); ++l) {
        axpy(scale, other.dw[l].data(), dw[l].data(), dw[l].size());
        axpy(scale, other.db[l].data(), db[l].data(), db[l].size());
    }
}

template <class Real>
void Grads<Real>::scale(Real s) {
    for (auto& v : dw)
        for (auto& x : v) x *= s;
    for (auto& v : db)
        for (auto& x : v) x *= s;
}

template <class Real>
double Grads<Real>::squared_norm() const {
    double s = 0.0;
    for (const auto& v : dw)
        for (Real x : v) s += static_cast<double>(x) * x;
    for (const auto& v : db)
        for (Real x : v) s += static_cast<double>(x) * x;
    return s;
}

template <class Real>
std::vector<std::span<Real>> Grads<Real>::spans() {
    std::vector<std::span<Real>> out;
    for (std::size_t l = 0; l < dw.size(); ++l) {
        out.emplace_back(dw[l]);
        out.emplace_back(db[l]);
    }
    return out;
}

template <class Real>
std::vector<std::span<const Real>> Grads<Real>::spans() const {
    std::vector<std::span<const Real>> out;
    for (std::size_t l = 0; l < dw.size(); ++l) {
        out.emplace_back(dw[l]);
        out.emplace_back(db[l]);
    }
    return out;
}

void time_embedding(double t, std::size_t dim, std::span<double> out) {
    if (out.size() != dim || dim % 2 != 0) throw ShapeError("time_embedding: bad output size");
    const std::size_t half = dim / 2;
    const double scaled = kTimeEmbedScale * t;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        out[i] = std::sin(scaled * freq);
        out[half + i] = std::cos(scaled * freq);
    }
}

template <class Real>
ForwardTrace<Real> forward_trace(const DenseNet<Real>& net, const Tensor<Real>& x, std::span<const double> t) {
    ForwardTrace<Real> tr;
    tr.inputs.reserve(net.layers.size());
    tr.pre.resize(net.layers.size());
    tr.inputs.push_back(build_input(net, x, t));
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        Tensor<Real> out;
        layer_forward(net.layers[l], tr.inputs[l], tr.pre[l], out);
        if (l + 1 < net.layers.size()) {
            tr.inputs.push_back(std::move(out));
        } else {
            tr.output = std::move(out);
        }
    }
    return tr;
}

template <class Real>
Tensor<Real> forward(const DenseNet<Real>& net, const Tensor<Real>& x, std::span<const double> t) {
    Tensor<Real> cur = build_input(net, x, t);
    for (const auto& L : net.layers) {
        Tensor<Real> pre, out;
        layer_forward(L, cur, pre, out);
        cur = std::move(out);
    }
    return cur;
}

template <class Real>
BackwardResult<Real> backward(const DenseNet<Real>& net, const ForwardTrace<Real>& trace,
                              const Tensor<Real>& upstream, bool want_param_grads) {
    const std::size_t n = trace.output.rows();
    if (upstream.rows() != n || upstream.cols() != net.output_dim())
        throw ShapeError("backward: upstream shape does not match network output");

    BackwardResult<Real> res;
    res.grads = Grads<Real>(net);
    Tensor<Real> delta = upstream; // gradient w.r.t. current layer output
    const std::size_t chunks = chunk_count(n, kRowChunk);

    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const auto& L = net.layers[li];
        const Tensor<Real>& in = trace.inputs[li];
        const Tensor<Real>& pre = trace.pre[li];
        for (std::size_t i = 0; i < n; ++i) {
            Real* d = delta.row(i);
            const Real* p = pre.row(i);
            for (std::size_t o = 0; o < L.out; ++o) d[o] *= activate_derivative(L.act, p[o]);
        }

        if (want_param_grads) {
            // Per-chunk partial sums reduced in chunk order keep the result
            // independent of the worker count.
            std::vector<std::vector<Real>> part_w(chunks), part_b(chunks);
            parallel_chunks(n, kRowChunk, [&](std::size_t c, std::size_t r0, std::size_t r1) {
                auto& pw = part_w[c];
                auto& pb = part_b[c];
                pw.assign(L.w.size(), Real(0));
                pb.assign(L.b.size(), Real(0));
                for (std::size_t i = r0; i < r1; ++i) {
                    const Real* d = delta.row(i);
                    const Real* xi = in.row(i);
                    for (std::size_t o = 0; o < L.out; ++o) {
                        if (d[o] == Real(0)) continue;
                        axpy(d[o], xi, pw.data() + o * L.in, L.in);
                        pb[o] += d[o];
                    }
                }
            });
            auto& gw = res.grads.dw[li];
            auto& gb = res.grads.db[li];
            for (std::size_t c = 0; c < chunks; ++c) {
                axpy(Real(1), part_w[c].data(), gw.data(), gw.size());
                axpy(Real(1), part_b[c].data(), gb.data(), gb.size());
            }
        }

        Tensor<Real> next(n, L.in);
        parallel_chunks(n, kRowChunk, [&](std::size_t, std::size_t r0, std::size_t r1) {
            for (std::size_t i = r0; i < r1; ++i) {
                const Real* d = delta.row(i);
                Real* nx = next.row(i);
                for (std::size_t o = 0; o < L.out; ++o) {
                    if (d[o] == Real(0)) continue;
                    axpy(d[o], L.w.data() + o * L.in, nx, L.in);
                }
            }
        });
        delta = std::move(next);
    }

    const std::size_t d_in = net.input_dim();
    if (net.time_embed_dim == 0) {
        res.input_grad = std::move(delta);
    } else {
        res.input_grad = Tensor<Real>(n, d_in);
        for (std::size_t i = 0; i < n; ++i) std::copy(delta.row(i), delta.row(i) + d_in, res.input_grad.row(i));
    }
    return res;
}

template <class Real>
BackwardResult<Real> backward(const DenseNet<Real>& net, const Tensor<Real>& x, std::span<const double> t,
                              const Tensor<Real>& upstream) {
    return backward(net, forward_trace(net, x, t), upstream, true);
}

template <class Real>
std::vector<double> jacobian_vector_trace_probe(const DenseNet<Real>& net, const Tensor<Real>& x,
                                                std::span<const double> t, const Tensor<Real>& probe) {
    if (net.input_dim() != net.output_dim()) throw ShapeError("trace probe: network is not square");
    if (probe.rows() != x.rows() || probe.cols() != net.output_dim())
        throw ShapeError("trace probe: probe shape mismatch");
    const auto tr = forward_trace(net, x, t);
    const auto res = backward(net, tr, probe, false);
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < probe.cols(); ++j) s += static_cast<double>(probe(i, j)) * res.input_grad(i, j);
        out[i] = s;
    }
    return out;
}

template <class Real>
AdamState<Real>::AdamState(const std::vector<std::span<Real>>& params) {
    for (const auto& p : params) {
        m.emplace_back(p.size(), Real(0));
        v.emplace_back(p.size(), Real(0));
    }
}

template <class Real>
void adam_step(AdamState<Real>& state, const std::vector<std::span<Real>>& params,
               const std::vector<std::span<const Real>>& grads, const AdamConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adam_step: parameter/gradient/state lists differ in length");
    ++state.step;
    const double bc_m = 1.0 - std::pow(cfg.beta_m, static_cast<double>(state.step));
    const double bc_v = 1.0 - std::pow(cfg.beta_v, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k];
        auto g = grads[k];
        if (p.size() != g.size() || p.size() != state.m[k].size())
            throw ShapeError("adam_step: buffer size mismatch");
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            const double mi = cfg.beta_m * m[i] + (1.0 - cfg.beta_m) * gi;
            const double vi = cfg.beta_v * v[i] + (1.0 - cfg.beta_v) * gi * gi;
            m[i] = static_cast<Real>(mi);
            v[i] = static_cast<Real>(vi);
            const double update = cfg.lr * (mi / bc_m) / (std::sqrt(vi / bc_v) + cfg.eps);
            p[i] = static_cast<Real>(p[i] - update);
        }
    }
}

#define LDLB_INSTANTIATE_NN(Real)                                                                              \
    template struct Tensor<Real>;                                                                              \
    template class DenseNet<Real>;                                                                             \
    template struct Grads<Real>;                                                                               \
    template struct AdamState<Real>;                                                                           \
    template Tensor<Real> forward(const DenseNet<Real>&, const Tensor<Real>&, std::span<const double>);        \
    template ForwardTrace<Real> forward_trace(const DenseNet<Real>&, const Tensor<Real>&,                      \
                                              std::span<const double>);                                        \
    template BackwardResult<Real> backward(const DenseNet<Real>&, const ForwardTrace<Real>&,                   \
                                           const Tensor<Real>&, bool);                                         \
    template BackwardResult<Real> backward(const DenseNet<Real>&, const Tensor<Real>&, std::span<const double>, \
                                           const Tensor<Real>&);                                               \
    template std::vector<double> jacobian_vector_trace_probe(const DenseNet<Real>&, const Tensor<Real>&,       \
                                                             std::span<const double>, const Tensor<Real>&);    \
    template void adam_step(AdamState<Real>&, const std::vector<std::span<Real>>&,                             \
                            const std::vector<std::span<const Real>>&, const AdamConfig&);

LDLB_INSTANTIATE_NN(float)
LDLB_INSTANTIATE_NN(double)

} // namespace ldlb
