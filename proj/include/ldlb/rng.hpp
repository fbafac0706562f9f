// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace ldlb {

/// Purposes for which independent random streams are derived.
enum class StreamPurpose : std::uint64_t {
    Data = 1,
    Init = 2,
    Encoder = 3,
    TimePrior = 4,
    TimeVae = 5,
    Diffusion = 6,
    Probe = 7,
    Sampling = 8,
    Binarize = 9,
    Eval = 10,
    Diagnostic = 11,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-style seed derivation: the stream for (seed, purpose, step, worker)
/// does not depend on how many draws any other stream has consumed.
inline std::uint64_t derive_seed(std::uint64_t seed, StreamPurpose purpose,
                                 std::uint64_t step = 0, std::uint64_t worker = 0) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
    h = splitmix64(h ^ step);
    h = splitmix64(h ^ (worker * 0x632be59bd9b4e019ULL));
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, StreamPurpose purpose, std::uint64_t step = 0, std::uint64_t worker = 0)
        : engine_(derive_seed(seed, purpose, step, worker)) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double normal() { return normal_(engine_); }
    double rademacher() { return (engine_() >> 63) ? 1.0 : -1.0; }
    bool bernoulli(double p) { return uniform() < p; }
    std::uint64_t next() { return engine_(); }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace ldlb
