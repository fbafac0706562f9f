// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldlb/log.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <mutex>

#include "ldlb/error.hpp"

namespace ldlb {

namespace {

LogLevel from_env() {
    const char* v = std::getenv("LDLB_LOG");
    if (!v || !*v) return LogLevel::Info;
    try {
        return parse_log_level(v);
    } catch (const ConfigError&) {
        std::fprintf(stderr, "[ldlb error] LDLB_LOG: unknown level '%s', using info\n", v);
        return LogLevel::Info;
    }
}

std::atomic<int>& level_slot() {
    static std::atomic<int> level{static_cast<int>(from_env())};
    return level;
}

std::mutex& io_mutex() {
    static std::mutex m;
    return m;
}

} // namespace

LogLevel parse_log_level(const std::string& name) {
    if (name == "error") return LogLevel::Error;
    if (name == "info") return LogLevel::Info;
    if (name == "debug") return LogLevel::Debug;
    throw ConfigError("log level: expected error, info or debug, got '" + name + "'");
}

LogLevel log_level() { return static_cast<LogLevel>(level_slot().load()); }

void set_log_level(LogLevel level) { level_slot().store(static_cast<int>(level)); }

void log(LogLevel level, const std::string& msg) {
    if (static_cast<int>(level) > level_slot().load()) return;
    static const char* names[] = {"error", "info", "debug"};
    std::lock_guard<std::mutex> lock(io_mutex());
    std::fprintf(stderr, "[ldlb %s] %s\n", names[static_cast<int>(level)], msg.c_str());
}

} // namespace ldlb
