// Copyright (C) 2026 The ldlb Authors
// SPDX-License-Identifier: Apache-2.0

#include "ldlb/ldlb.h"

#include <cstring>
#include <new>
#include <string>

#include "ldlb/config.hpp"
#include "ldlb/error.hpp"
#include "ldlb/experiment.hpp"
#include "ldlb/log.hpp"
#include "ldlb/parallel.hpp"
#include "ldlb/sde.hpp"
#include "ldlb/time_sampling.hpp"

struct ldlb_experiment {
    ldlb::ExperimentConfig cfg;
};

struct ldlb_schedule {
    ldlb::SdeSchedule s;
};

namespace {

thread_local std::string t_last_error;

ldlb_status fail(ldlb_status st, const char* msg) {
    t_last_error = msg;
    return st;
}

template <class F>
ldlb_status guarded(F&& f) {
    try {
        t_last_error.clear();
        f();
        return LDLB_OK;
    } catch (const ldlb::ConfigError& e) {
        return fail(LDLB_ERR_CONFIG, e.what());
    } catch (const ldlb::DomainError& e) {
        return fail(LDLB_ERR_DOMAIN, e.what());
    } catch (const ldlb::ShapeError& e) {
        return fail(LDLB_ERR_SHAPE, e.what());
    } catch (const ldlb::IoError& e) {
        return fail(LDLB_ERR_IO, e.what());
    } catch (const ldlb::NumericalError& e) {
        return fail(LDLB_ERR_NUMERICAL, e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(LDLB_ERR_CONFIG, e.what());
    } catch (const std::bad_alloc&) {
        return fail(LDLB_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(LDLB_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(LDLB_ERR_INTERNAL, "unknown exception");
    }
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

#define LDLB_REQUIRE(cond, what) \
    if (!(cond)) return fail(LDLB_ERR_INVALID_ARGUMENT, what " must not be null")

} // namespace

extern "C" {

const char* ldlb_version(void) { return "0.1.0"; }

const char* ldlb_status_name(ldlb_status status) {
    switch (status) {
    case LDLB_OK: return "ok";
    case LDLB_ERR_INVALID_ARGUMENT: return "invalid argument";
    case LDLB_ERR_CONFIG: return "configuration error";
    case LDLB_ERR_DOMAIN: return "domain error";
    case LDLB_ERR_SHAPE: return "shape error";
    case LDLB_ERR_IO: return "i/o error";
    case LDLB_ERR_NUMERICAL: return "numerical error";
    case LDLB_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* ldlb_last_error(void) { return t_last_error.c_str(); }

ldlb_status ldlb_set_num_workers(size_t n) {
    return guarded([&] { ldlb::set_num_workers(n); });
}

size_t ldlb_num_workers(void) { return ldlb::num_workers(); }

ldlb_status ldlb_set_log_level(const char* level) {
    LDLB_REQUIRE(level, "level");
    return guarded([&] { ldlb::set_log_level(ldlb::parse_log_level(level)); });
}

void ldlb_string_free(char* s) { delete[] s; }

ldlb_status ldlb_experiment_from_file(const char* path, ldlb_experiment** out) {
    LDLB_REQUIRE(path, "path");
    LDLB_REQUIRE(out, "out");
    *out = nullptr;
    return guarded([&] { *out = new ldlb_experiment{ldlb::load_experiment_config(path)}; });
}

ldlb_status ldlb_experiment_from_json(const char* json, ldlb_experiment** out) {
    LDLB_REQUIRE(json, "json");
    LDLB_REQUIRE(out, "out");
    *out = nullptr;
    return guarded([&] {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(json);
        } catch (const nlohmann::json::parse_error& e) {
            throw ldlb::ConfigError(std::string("config: ") + e.what());
        }
        *out = new ldlb_experiment{ldlb::experiment_from_json(j)};
    });
}

void ldlb_experiment_free(ldlb_experiment* e) { delete e; }

ldlb_status ldlb_experiment_set_seed(ldlb_experiment* e, uint64_t seed) {
    LDLB_REQUIRE(e, "experiment");
    return guarded([&] {
        e->cfg.seed = seed;
        e->cfg.train.seed = seed;
    });
}

ldlb_status ldlb_experiment_set_output_dir(ldlb_experiment* e, const char* dir) {
    LDLB_REQUIRE(e, "experiment");
    LDLB_REQUIRE(dir, "dir");
    return guarded([&] {
        if (!*dir) throw ldlb::ConfigError("output_dir: must not be empty");
        e->cfg.output_dir = dir;
    });
}

ldlb_status ldlb_experiment_config_json(const ldlb_experiment* e, char** out) {
    LDLB_REQUIRE(e, "experiment");
    LDLB_REQUIRE(out, "out");
    *out = nullptr;
    return guarded([&] { *out = dup_string(ldlb::to_json(e->cfg).dump(2)); });
}

ldlb_status ldlb_experiment_run(ldlb_experiment* e, const char* subcommand, const char* checkpoint, char** summary) {
    LDLB_REQUIRE(e, "experiment");
    LDLB_REQUIRE(subcommand, "subcommand");
    if (summary) *summary = nullptr;
    return guarded([&] {
        ldlb::Experiment x(e->cfg);
        const auto result = x.run(subcommand, checkpoint ? checkpoint : "");
        if (summary) *summary = dup_string(result.dump(2));
    });
}

ldlb_status ldlb_schedule_from_json(const char* json, ldlb_schedule** out) {
    LDLB_REQUIRE(json, "json");
    LDLB_REQUIRE(out, "out");
    *out = nullptr;
    return guarded([&] {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(json);
        } catch (const nlohmann::json::parse_error& e) {
            throw ldlb::ConfigError(std::string("schedule: ") + e.what());
        }
        *out = new ldlb_schedule{ldlb::schedule_from_json(j)};
    });
}

void ldlb_schedule_free(ldlb_schedule* s) { delete s; }

ldlb_status ldlb_schedule_kernel(const ldlb_schedule* s, double t, double* mean_coeff, double* var, double* ring_var) {
    LDLB_REQUIRE(s, "schedule");
    return guarded([&] {
        const auto k = ldlb::kernel(s->s, t);
        if (mean_coeff) *mean_coeff = k.mean_coeff;
        if (var) *var = k.var;
        if (ring_var) *ring_var = k.ring_var;
    });
}

ldlb_status ldlb_schedule_diffusion(const ldlb_schedule* s, double t, double* beta, double* g2) {
    LDLB_REQUIRE(s, "schedule");
    return guarded([&] {
        if (beta) *beta = ldlb::beta(s->s, t);
        if (g2) *g2 = ldlb::diffusion_sq(s->s, t);
    });
}

ldlb_status ldlb_schedule_cutoff(const ldlb_schedule* s, double* t_cutoff) {
    LDLB_REQUIRE(s, "schedule");
    LDLB_REQUIRE(t_cutoff, "t_cutoff");
    *t_cutoff = s->s.t_cutoff;
    t_last_error.clear();
    return LDLB_OK;
}

ldlb_status ldlb_schedule_sample_t(const ldlb_schedule* s, const char* mechanism, const char* strategy, double rho,
                                   double* t, double* is_weight, double* obj_weight) {
    LDLB_REQUIRE(s, "schedule");
    LDLB_REQUIRE(mechanism, "mechanism");
    LDLB_REQUIRE(strategy, "strategy");
    return guarded([&] {
        const auto d =
            ldlb::sample_t(s->s, ldlb::parse_mechanism(mechanism), ldlb::parse_strategy(strategy), rho);
        if (t) *t = d.t;
        if (is_weight) *is_weight = d.is_weight;
        if (obj_weight) *obj_weight = d.obj_weight;
    });
}

} // extern "C"
