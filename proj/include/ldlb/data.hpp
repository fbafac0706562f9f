// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ldlb/nn.hpp"

namespace ldlb {

struct Dataset {
    std::string name;
    Tensor<double> x;        // n x ... (MNIST: n x 28 x 28 grayscale in [0, 1])
    std::vector<int> labels; // empty when unavailable
    /// Pixels are Bernoulli-resampled per epoch from (seed, epoch).
    bool dynamic_binarization = false;

    std::size_t size() const { return x.rows(); }
    std::size_t dim() const { return x.cols(); }
};

/// IDX image file (magic 0x00000803, big-endian dims). Optional label file
/// (magic 0x00000801) must agree in count. Throws IoError on bad magic or
/// truncation.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path = "");

/// "toy8gauss": 8 Gaussians (std 0.1) on a radius-2 circle, label = mode.
/// "swissroll": 2-D roll, t ~ U[1.5 pi, 4.5 pi], (t cos t, t sin t) / 5 plus
/// N(0, 0.1^2) noise.
Dataset gen_toy(const std::string& name, std::size_t n, std::uint64_t seed);

/// Fixed-size mode centers of toy8gauss.
std::vector<std::pair<double, double>> toy8gauss_centers();

/// Permutation of [0, n) for a given epoch.
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

/// Gathers rows; binarized datasets draw each pixel from the stream
/// (seed, Binarize, epoch, row index).
template <class Real>
Tensor<Real> make_batch(const Dataset& d, std::span<const std::size_t> rows, std::uint64_t seed, std::uint64_t epoch);

} // namespace ldlb
