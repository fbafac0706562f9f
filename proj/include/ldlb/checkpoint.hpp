// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "ldlb/objectives.hpp"

namespace ldlb {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "LDLB" | u32 version | u64 header length | JSON header | buffers.
// Buffers are little-endian, element type from header "dtype" (f32 or f64), in
// order: vae params, prior params, adam_vae m, v, adam_prior m, v. Within each
// group the order is the param_spans() declaration order.

/// Writes atomically (temporary file then rename).
template <class Real>
void save_checkpoint(const std::string& path, const TrainState<Real>& state);

/// Header only; cheap way to discover dtype and configuration.
nlohmann::json read_checkpoint_header(const std::string& path);

/// Rebuilds the state from the stored configuration and restores every buffer
/// and counter, so the next step matches an uninterrupted run.
template <class Real>
TrainState<Real> load_checkpoint(const std::string& path);

} // namespace ldlb
