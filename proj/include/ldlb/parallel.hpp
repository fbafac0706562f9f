// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace ldlb {

/// Process-wide worker count used by batch fan-out. 0 selects hardware concurrency.
void set_num_workers(std::size_t n);
std::size_t num_workers();

/// Runs fn(chunk_index, begin, end) over fixed-size chunks of [0, n). The chunk
/// layout depends only on n and chunk, never on the worker count, so callers
/// that reduce per-chunk results in chunk order are deterministic.
void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

inline std::size_t chunk_count(std::size_t n, std::size_t chunk) { return (n + chunk - 1) / chunk; }

} // namespace ldlb
