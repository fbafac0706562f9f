/* Copyright (C) 2026 The ldlb Authors
 * SPDX-License-Identifier: Apache-2.0 */

#ifndef LDLB_LDLB_H
#define LDLB_LDLB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define LDLB_API __declspec(dllexport)
#else
#define LDLB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ldlb_status {
    LDLB_OK = 0,
    LDLB_ERR_INVALID_ARGUMENT = 1, /* null handle or pointer */
    LDLB_ERR_CONFIG = 2,
    LDLB_ERR_DOMAIN = 3,
    LDLB_ERR_SHAPE = 4,
    LDLB_ERR_IO = 5,
    LDLB_ERR_NUMERICAL = 6,
    LDLB_ERR_INTERNAL = 7
} ldlb_status;

typedef struct ldlb_experiment ldlb_experiment;
typedef struct ldlb_schedule ldlb_schedule;

LDLB_API const char* ldlb_version(void);
LDLB_API const char* ldlb_status_name(ldlb_status status);

/* Message of the last failed call on this thread; "" after a success. The
 * pointer stays valid until the next ldlb call on the same thread. */
LDLB_API const char* ldlb_last_error(void);

/* 0 selects the hardware concurrency. Results are bitwise reproducible only
 * with one worker. */
LDLB_API ldlb_status ldlb_set_num_workers(size_t n);
LDLB_API size_t ldlb_num_workers(void);
/* "error", "info" or "debug". */
LDLB_API ldlb_status ldlb_set_log_level(const char* level);

/* Strings returned through char** are owned by the caller. */
LDLB_API void ldlb_string_free(char* s);

LDLB_API ldlb_status ldlb_experiment_from_file(const char* path, ldlb_experiment** out);
LDLB_API ldlb_status ldlb_experiment_from_json(const char* json, ldlb_experiment** out);
LDLB_API void ldlb_experiment_free(ldlb_experiment* e);
LDLB_API ldlb_status ldlb_experiment_set_seed(ldlb_experiment* e, uint64_t seed);
LDLB_API ldlb_status ldlb_experiment_set_output_dir(ldlb_experiment* e, const char* dir);
LDLB_API ldlb_status ldlb_experiment_config_json(const ldlb_experiment* e, char** out);
/* subcommand: pretrain | train | sample | eval-nelbo | variance-report |
 * schedule-dump | iw-bias. checkpoint may be NULL. summary may be NULL;
 * otherwise it receives a JSON document describing the outputs. */
LDLB_API ldlb_status ldlb_experiment_run(ldlb_experiment* e, const char* subcommand, const char* checkpoint,
                                         char** summary);

LDLB_API ldlb_status ldlb_schedule_from_json(const char* json, ldlb_schedule** out);
LDLB_API void ldlb_schedule_free(ldlb_schedule* s);
/* Null output pointers are skipped. */
LDLB_API ldlb_status ldlb_schedule_kernel(const ldlb_schedule* s, double t, double* mean_coeff, double* var,
                                          double* ring_var);
LDLB_API ldlb_status ldlb_schedule_diffusion(const ldlb_schedule* s, double t, double* beta, double* g2);
LDLB_API ldlb_status ldlb_schedule_cutoff(const ldlb_schedule* s, double* t_cutoff);
/* Inverse-CDF draw of t for rho in [0, 1]. */
LDLB_API ldlb_status ldlb_schedule_sample_t(const ldlb_schedule* s, const char* mechanism, const char* strategy,
                                            double rho, double* t, double* is_weight, double* obj_weight);

#ifdef __cplusplus
}
#endif

#endif /* LDLB_LDLB_H */
