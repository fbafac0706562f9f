/* Copyright (C) 2026 The ldlb Authors
 * SPDX-License-Identifier: Apache-2.0 */

/* Compiles the public header as C and drives a few calls through it. */
#include "ldlb/ldlb.h"

#include <string.h>

int ldlb_c_header_check(void) {
    ldlb_schedule* s = NULL;
    double m = 0.0, v = 0.0, r = 0.0;
    int ok = 1;
    if (ldlb_schedule_from_json("{\"kind\": \"vesde\", \"sigma2_min\": 0.01, \"sigma2_max\": 50.0}", &s) != LDLB_OK)
        return 0;
    ok = ok && ldlb_schedule_kernel(s, 0.0, &m, &v, &r) == LDLB_OK;
    ok = ok && m == 1.0 && v == 0.01;
    ok = ok && ldlb_schedule_kernel(s, 2.0, &m, &v, &r) == LDLB_ERR_DOMAIN;
    ok = ok && strlen(ldlb_last_error()) > 0;
    ldlb_schedule_free(s);
    ok = ok && strcmp(ldlb_status_name(LDLB_ERR_IO), "") != 0;
    return ok;
}
