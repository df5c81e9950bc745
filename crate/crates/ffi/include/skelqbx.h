#ifndef SKELQBX_H
#define SKELQBX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define SKQ_OK 0

#define SKQ_ERR_INVALID_PARAMETER 1

#define SKQ_ERR_SINGULAR_EVALUATION 2

#define SKQ_ERR_CENTER_COLLISION 3

#define SKQ_ERR_ACCURACY_VIOLATION 4

#define SKQ_ERR_GEOMETRY 5

#define SKQ_ERR_NON_FINITE 6

#define SKQ_ERR_TREE_DEPTH 7

#define SKQ_ERR_SINGULAR_BLOCK 8

#define SKQ_ERR_SINGULAR_REDUCED 9

#define SKQ_ERR_DIMENSION 10

#define SKQ_ERR_CONFIG 11

#define SKQ_ERR_IO 12

#define SKQ_ERR_CSV 13

#define SKQ_ERR_NULL_POINTER 100

#define SKQ_ERR_PANIC 101

#define SKQ_LAYER_SINGLE 0

#define SKQ_LAYER_DOUBLE 1

/**
 * Nodes, weights, normals and QBX centers of a panel discretization.
 */
typedef struct SkqDiscretization SkqDiscretization;

/**
 * Compressed factorization of a layer-potential operator.
 */
typedef struct SkqSolver SkqSolver;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, empty after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *skq_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *skq_version(void);

/**
 * Starfish curve `r(t) = 1 + amplitude sin((arms + 1) t)` with `panels`
 * Gauss-Legendre panels of `order` nodes.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
int32_t skq_starfish_new(double amplitude,
                         uint32_t arms,
                         uintptr_t panels,
                         uintptr_t order,
                         double qbx_scale,
                         struct SkqDiscretization **out);

/**
 * # Safety
 * `out` must be valid for one pointer write.
 */
int32_t skq_circle_new(double radius,
                       uintptr_t panels,
                       uintptr_t order,
                       double qbx_scale,
                       struct SkqDiscretization **out);

/**
 * Torus with `panels_u x panels_v` panels of `order x order` nodes.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
int32_t skq_torus_new(double major,
                      double minor,
                      uintptr_t panels_u,
                      uintptr_t panels_v,
                      uintptr_t order,
                      double qbx_scale,
                      struct SkqDiscretization **out);

/**
 * Cubed sphere with `n_edge x n_edge` panels per face.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
int32_t skq_sphere_new(double radius,
                       uintptr_t n_edge,
                       uintptr_t order,
                       double qbx_scale,
                       struct SkqDiscretization **out);

/**
 * Number of nodes, 0 for a null handle.
 *
 * # Safety
 * `disc` must be null or a live handle.
 */
uintptr_t skq_discretization_len(const struct SkqDiscretization *disc);

/**
 * Copy node coordinates as `x0 y0 z0 x1 ...` into `xyz` (`3 * len` doubles).
 *
 * # Safety
 * `disc` must be a live handle and `xyz` valid for `len` writes.
 */
int32_t skq_discretization_nodes(const struct SkqDiscretization *disc, double *xyz, uintptr_t len);

/**
 * Copy quadrature weights into `w` (`len` doubles).
 *
 * # Safety
 * `disc` must be a live handle and `w` valid for `len` writes.
 */
int32_t skq_discretization_weights(const struct SkqDiscretization *disc, double *w, uintptr_t len);

/**
 * # Safety
 * `disc` must be null or a handle not yet freed.
 */
void skq_discretization_free(struct SkqDiscretization *disc);

/**
 * Dense reference product `y = A v` by direct QBX evaluation.
 *
 * # Safety
 * `disc` must be a live handle; `v` and `y` valid for `len` doubles.
 */
int32_t skq_dense_apply(const struct SkqDiscretization *disc,
                        int32_t layer,
                        uintptr_t p_qbx,
                        const double *v,
                        double *y,
                        uintptr_t len);

/**
 * Compress the operator on `disc`. The solver keeps its own copy of the
 * geometry, so `disc` may be freed afterwards.
 *
 * # Safety
 * `disc` must be a live handle and `out` valid for one pointer write.
 */
int32_t skq_solver_new(const struct SkqDiscretization *disc,
                       int32_t layer,
                       uintptr_t p_qbx,
                       double alpha,
                       uintptr_t proxy_count,
                       double tol,
                       uintptr_t leaf_panels,
                       struct SkqSolver **out);

/**
 * Number of unknowns, 0 for a null handle.
 *
 * # Safety
 * `solver` must be null or a live handle.
 */
uintptr_t skq_solver_len(const struct SkqSolver *solver);

/**
 * Solve `A x = b`.
 *
 * # Safety
 * `solver` must be a live handle; `b` and `x` valid for `len` doubles.
 */
int32_t skq_solver_solve(const struct SkqSolver *solver, const double *b, double *x, uintptr_t len);

/**
 * Compressed product `y = A v`.
 *
 * # Safety
 * `solver` must be a live handle; `v` and `y` valid for `len` doubles.
 */
int32_t skq_solver_apply(const struct SkqSolver *solver, const double *v, double *y, uintptr_t len);

/**
 * # Safety
 * `solver` must be null or a handle not yet freed.
 */
void skq_solver_free(struct SkqSolver *solver);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKELQBX_H */
