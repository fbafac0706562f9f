// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

namespace ldlb {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

/// Initialized from LDLB_LOG (error | info | debug; default info).
LogLevel log_level();
void set_log_level(LogLevel level);
LogLevel parse_log_level(const std::string& name);

/// Writes "[ldlb level] msg" to stderr when `level` is enabled.
void log(LogLevel level, const std::string& msg);

inline void log_error(const std::string& msg) { log(LogLevel::Error, msg); }
inline void log_info(const std::string& msg) { log(LogLevel::Info, msg); }
inline void log_debug(const std::string& msg) { log(LogLevel::Debug, msg); }

} // namespace ldlb
