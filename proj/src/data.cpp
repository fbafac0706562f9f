// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldlb/data.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

#include "ldlb/error.hpp"
#include "ldlb/rng.hpp"

namespace ldlb {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
    if (off + 4 > b.size()) throw IoError("'" + path + "': truncated IDX header");
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) | (std::uint32_t(b[off + 2]) << 8) |
           std::uint32_t(b[off + 3]);
}

} // namespace

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = read_file(images_path);
    const std::uint32_t magic = be32(img, 0, images_path);
    if (magic != 0x00000803)
        throw IoError("'" + images_path + "': bad IDX image magic 0x" + [&] {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%08x", magic);
            return std::string(buf);
        }());
    const std::size_t n = be32(img, 4, images_path);
    const std::size_t rows = be32(img, 8, images_path);
    const std::size_t cols = be32(img, 12, images_path);
    const std::size_t need = 16 + n * rows * cols;
    if (img.size() < need)
        throw IoError("'" + images_path + "': truncated, expected " + std::to_string(need) + " bytes, got " +
                      std::to_string(img.size()));
    Dataset d;
    d.name = "mnist-binarized";
    d.dynamic_binarization = true;
    d.x = Tensor<double>(std::vector<std::size_t>{n, rows, cols});
    for (std::size_t k = 0; k < n * rows * cols; ++k) d.x.data[k] = img[16 + k] / 255.0;

    if (!labels_path.empty()) {
        const auto lab = read_file(labels_path);
        if (be32(lab, 0, labels_path) != 0x00000801) throw IoError("'" + labels_path + "': bad IDX label magic");
        const std::size_t m = be32(lab, 4, labels_path);
        if (m != n) throw IoError("'" + labels_path + "': label count does not match image count");
        if (lab.size() < 8 + m) throw IoError("'" + labels_path + "': truncated");
        d.labels.assign(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(m));
    }
    return d;
}

std::vector<std::pair<double, double>> toy8gauss_centers() {
    std::vector<std::pair<double, double>> c;
    for (int k = 0; k < 8; ++k) {
        const double a = 2.0 * std::numbers::pi * k / 8.0;
        c.emplace_back(2.0 * std::cos(a), 2.0 * std::sin(a));
    }
    return c;
}

Dataset gen_toy(const std::string& name, std::size_t n, std::uint64_t seed) {
    Rng rng(seed, StreamPurpose::Data);
    Dataset d;
    d.name = name;
    d.x = Tensor<double>(n, 2);
    if (name == "toy8gauss") {
        const auto centers = toy8gauss_centers();
        d.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const int k = static_cast<int>(rng.next() % 8);
            d.labels[i] = k;
            d.x(i, 0) = centers[k].first + 0.1 * rng.normal();
            d.x(i, 1) = centers[k].second + 0.1 * rng.normal();
        }
    } else if (name == "swissroll") {
        for (std::size_t i = 0; i < n; ++i) {
            const double t = 1.5 * std::numbers::pi * (1.0 + 2.0 * rng.uniform());
            d.x(i, 0) = t * std::cos(t) / 5.0 + 0.1 * rng.normal();
            d.x(i, 1) = t * std::sin(t) / 5.0 + 0.1 * rng.normal();
        }
    } else {
        throw ConfigError("dataset: unknown toy set '" + name + "'");
    }
    return d;
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    Rng rng(seed, StreamPurpose::Data, epoch + 1);
    // Explicit Fisher-Yates: std::shuffle's draw pattern is implementation-defined.
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.next() % i]);
    return p;
}

template <class Real>
Tensor<Real> make_batch(const Dataset& d, std::span<const std::size_t> rows, std::uint64_t seed, std::uint64_t epoch) {
    const std::size_t dim = d.dim();
    Tensor<Real> b(rows.size(), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::size_t i = rows[r];
        if (i >= d.size()) throw ShapeError("make_batch: row index out of range");
        const double* src = d.x.row(i);
        if (d.dynamic_binarization) {
            Rng rng(seed, StreamPurpose::Binarize, epoch, i);
            for (std::size_t j = 0; j < dim; ++j) b(r, j) = rng.uniform() < src[j] ? Real(1) : Real(0);
        } else {
            for (std::size_t j = 0; j < dim; ++j) b(r, j) = static_cast<Real>(src[j]);
        }
    }
    return b;
}

template Tensor<float> make_batch(const Dataset&, std::span<const std::size_t>, std::uint64_t, std::uint64_t);
template Tensor<double> make_batch(const Dataset&, std::span<const std::size_t>, std::uint64_t, std::uint64_t);

} // namespace ldlb
