// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ldlb/rng.hpp"

namespace ldlb {

/// Row-major buffer. 2-D tensors are batch-major (rows = samples).
template <class Real>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<Real> data;

    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, Real fill = Real(0))
        : shape{rows, cols}, data(rows * cols, fill) {}
    explicit Tensor(std::vector<std::size_t> dims, Real fill = Real(0));

    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    /// Product of all trailing dimensions.
    std::size_t cols() const {
        if (shape.size() == 2) return shape[1];
        return trailing_product();
    }
    std::size_t size() const { return data.size(); }

    Real* row(std::size_t i) { return data.data() + i * cols(); }
    const Real* row(std::size_t i) const { return data.data() + i * cols(); }
    Real& operator()(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    Real operator()(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

    bool all_finite() const;
    /// Throws NumericalError naming `what` on the first non-finite entry.
    void check_finite(std::string_view what) const;

private:
    std::size_t trailing_product() const;
};

enum class Activation { Linear, Swish, Tanh };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

template <class Real>
struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<Real> w; // out x in, row-major
    std::vector<Real> b; // out
    Activation act = Activation::Linear;
};

/// Multi-layer perceptron. With time_embed_dim > 0 the sinusoidal embedding
/// of t is appended to the input, so layers[0].in = input_dim + time_embed_dim.
template <class Real>
class DenseNet {
public:
    DenseNet() = default;
    /// dims = {input, hidden..., output}; `hidden` applies to every layer but
    /// the last, which uses `output`.
    DenseNet(const std::vector<std::size_t>& dims, Activation hidden, Activation output,
             std::size_t time_embed_dim = 0);

    std::vector<DenseLayer<Real>> layers;
    std::size_t time_embed_dim = 0;

    std::size_t input_dim() const { return layers.front().in - time_embed_dim; }
    std::size_t output_dim() const { return layers.back().out; }
    std::size_t param_count() const;

    /// Weight then bias of each layer, in layer order.
    std::vector<std::span<Real>> param_spans();
    std::vector<std::span<const Real>> param_spans() const;

    /// He-uniform weights, zero biases; optionally zeroes the final layer.
    void init_he_uniform(Rng& rng, bool zero_last_layer);
};

template <class Real>
struct Grads {
    std::vector<std::vector<Real>> dw;
    std::vector<std::vector<Real>> db;

    Grads() = default;
    explicit Grads(const DenseNet<Real>& net);

    void zero();
    void add(const Grads& other, Real scale = Real(1));
    void scale(Real s);
    double squared_norm() const;
    /// Same order as DenseNet::param_spans.
    std::vector<std::span<Real>> spans();
    std::vector<std::span<const Real>> spans() const;
};

/// Activations kept for the reverse pass. inputs[l] is the input of layer l
/// (including the time embedding for l = 0), pre[l] its pre-activation.
template <class Real>
struct ForwardTrace {
    std::vector<Tensor<Real>> inputs;
    std::vector<Tensor<Real>> pre;
    Tensor<Real> output;
};

/// t is multiplied by this before the sinusoidal features are taken.
inline constexpr double kTimeEmbedScale = 100.0;

/// Sinusoidal embedding: frequencies exp(-ln(10000) i / (E/2)) applied to
/// kTimeEmbedScale * t, sin block followed by cos block.
void time_embedding(double t, std::size_t dim, std::span<double> out);

/// `t` holds one time per row (empty iff time_embed_dim = 0).
template <class Real>
Tensor<Real> forward(const DenseNet<Real>& net, const Tensor<Real>& x, std::span<const double> t = {});

template <class Real>
ForwardTrace<Real> forward_trace(const DenseNet<Real>& net, const Tensor<Real>& x,
                                 std::span<const double> t = {});

template <class Real>
struct BackwardResult {
    Grads<Real> grads;
    Tensor<Real> input_grad; // batch x input_dim (time embedding excluded)
};

/// Exact gradients of <upstream, forward(x)> with respect to parameters and x.
template <class Real>
BackwardResult<Real> backward(const DenseNet<Real>& net, const ForwardTrace<Real>& trace,
                              const Tensor<Real>& upstream, bool want_param_grads = true);

template <class Real>
BackwardResult<Real> backward(const DenseNet<Real>& net, const Tensor<Real>& x, std::span<const double> t,
                              const Tensor<Real>& upstream);

/// Per-row probe^T J probe, computed from the input gradient of <probe, f(x)>.
template <class Real>
std::vector<double> jacobian_vector_trace_probe(const DenseNet<Real>& net, const Tensor<Real>& x,
                                                std::span<const double> t, const Tensor<Real>& probe);

template <class Real>
struct AdamState {
    std::vector<std::vector<Real>> m;
    std::vector<std::vector<Real>> v;
    std::uint64_t step = 0;

    AdamState() = default;
    explicit AdamState(const std::vector<std::span<Real>>& params);
};

struct AdamConfig {
    double lr = 1e-3;
    double beta_m = 0.9;
    double beta_v = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam update; params and grads are parallel span lists.
template <class Real>
void adam_step(AdamState<Real>& state, const std::vector<std::span<Real>>& params,
               const std::vector<std::span<const Real>>& grads, const AdamConfig& cfg);

} // namespace ldlb
