/* Build: cc smoke.c -I../include -L../../../target/release -lskelqbx_ffi -lm -o smoke */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "skelqbx.h"

static int check(int32_t rc) {
    if (rc != SKQ_OK) {
        fprintf(stderr, "error %d: %s\n", rc, skq_last_error_message());
        exit(1);
    }
    return rc;
}

int main(void) {
    SkqDiscretization *disc = NULL;
    SkqSolver *solver = NULL;
    check(skq_starfish_new(0.25, 4, 64, 8, 0.5, &disc));
    size_t n = skq_discretization_len(disc);
    double *sigma = malloc(n * sizeof *sigma), *b = malloc(n * sizeof *b), *x = malloc(n * sizeof *x);
    for (size_t i = 0; i < n; i++) sigma[i] = sin(0.1 * (double)i);
    check(skq_dense_apply(disc, SKQ_LAYER_DOUBLE, 8, sigma, b, n));
    check(skq_solver_new(disc, SKQ_LAYER_DOUBLE, 8, 1.15, 64, 1e-10, 4, &solver));
    check(skq_solver_solve(solver, b, x, n));
    double err = 0.0, nrm = 0.0;
    for (size_t i = 0; i < n; i++) {
        err += (x[i] - sigma[i]) * (x[i] - sigma[i]);
        nrm += sigma[i] * sigma[i];
    }
    printf("skelqbx %s: n = %zu, relative error %.2e\n", skq_version(), n, sqrt(err / nrm));
    skq_solver_free(solver);
    skq_discretization_free(disc);
    free(sigma);
    free(b);
    free(x);
    return 0;
}
