#ifndef SOAR_H
#define SOAR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SoarExample {
  SOAR_EXAMPLE_EXAMPLE1 = 1,
  SOAR_EXAMPLE_EXAMPLE2 = 2,
} SoarExample;

typedef enum SoarMethod {
  SOAR_METHOD_SOAR1 = 1,
  SOAR_METHOD_SOAR2 = 2,
  SOAR_METHOD_SOAR3 = 3,
  SOAR_METHOD_SOAR4 = 4,
  SOAR_METHOD_DRM = 5,
  SOAR_METHOD_NU = 6,
  SOAR_METHOD_NESTEROV = 7,
} SoarMethod;

typedef enum SoarStatus {
  SOAR_STATUS_OK = 0,
  SOAR_STATUS_NULL_POINTER = 1,
  SOAR_STATUS_INVALID_ARGUMENT = 2,
  SOAR_STATUS_PARSE = 3,
  SOAR_STATUS_MESH = 4,
  SOAR_STATUS_SINGULAR = 5,
  SOAR_STATUS_NOT_CONVERGED = 6,
  SOAR_STATUS_NON_FINITE = 7,
  SOAR_STATUS_IO = 8,
  SOAR_STATUS_PANIC = 9,
} SoarStatus;

typedef enum SoarTermination {
  SOAR_TERMINATION_DISCREPANCY_MET = 0,
  SOAR_TERMINATION_MAX_ITERATIONS = 1,
} SoarTermination;

typedef struct SoarMesh SoarMesh;

typedef struct SoarProblem SoarProblem;

typedef struct SoarRun SoarRun;

/**
 * Run parameters; obtain defaults from `soar_run_config_default`.
 */
typedef struct SoarRunConfig {
  enum SoarMethod method;
  double delta_prime;
  uint64_t seed;
  double dt;
  double eta;
  double r;
  double t0;
  double tau;
  bool absorb_c0;
  /**
   * Non-positive selects the disk constant for the problem radius.
   */
  double c0;
  double eps0;
  size_t n_max;
  double p0;
  double q0;
  double drm_eta;
  double drm_dt;
  double drm_c_eps;
  double nu;
  double nesterov_alpha;
  double nesterov_omega;
  /**
   * Evaluate Nesterov's gradient at the extrapolated point (else at p_k).
   */
  bool nesterov_gradient_at_z;
} SoarRunConfig;

typedef struct SoarRunRow {
  size_t k;
  double t;
  double chi;
  double v;
  double qnorm_p;
  /**
   * NaN when no reference source is known.
   */
  double l2err;
} SoarRunRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *soar_version(void);

/**
 * Message of the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *soar_last_error_message(void);

/**
 * Generates a structured disk mesh.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum SoarStatus soar_mesh_generate(double radius, size_t rings, struct SoarMesh **out);

/**
 * Loads a mesh file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SoarStatus soar_mesh_load(const char *path, struct SoarMesh **out);

/**
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t soar_mesh_node_count(const struct SoarMesh *mesh);

/**
 * # Safety
 * `mesh` must be null or a live handle.
 */
size_t soar_mesh_triangle_count(const struct SoarMesh *mesh);

/**
 * Longest triangle side; NaN for a null handle.
 *
 * # Safety
 * `mesh` must be null or a live handle.
 */
double soar_mesh_h(const struct SoarMesh *mesh);

/**
 * # Safety
 * `mesh` must be null or a handle not yet freed.
 */
void soar_mesh_free(struct SoarMesh *mesh);

/**
 * Builds a problem: exact data on a fine disk mesh, and the factorized
 * forward operator on a coarse one.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SoarStatus soar_problem_new(enum SoarExample example,
                                 double radius,
                                 size_t fine_rings,
                                 size_t coarse_rings,
                                 struct SoarProblem **out);

/**
 * Number of unknown source coefficients.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t soar_problem_m0(const struct SoarProblem *problem);

/**
 * Copies the true source coefficients into `buf` (length must equal m0).
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum SoarStatus soar_problem_truth(const struct SoarProblem *problem, double *buf, size_t len);

/**
 * # Safety
 * `problem` must be null or a handle not yet freed.
 */
void soar_problem_free(struct SoarProblem *problem);

struct SoarRunConfig soar_run_config_default(void);

/**
 * Draws noisy data (seeded by `config.seed`) and runs the configured
 * method. The same seed and noise level give the same data as the
 * command line `solve`.
 *
 * # Safety
 * `problem` and `config` must be live pointers and `out` a valid pointer.
 */
enum SoarStatus soar_run(const struct SoarProblem *problem,
                         const struct SoarRunConfig *config,
                         struct SoarRun **out);

/**
 * Index of the returned iterate.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t soar_run_iterations(const struct SoarRun *run);

/**
 * # Safety
 * `run` must be a live handle.
 */
enum SoarTermination soar_run_termination(const struct SoarRun *run);

/**
 * Relative L² error of the returned source; NaN for a null handle.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
double soar_run_l2err(const struct SoarRun *run);

/**
 * Noise level δ of the data used.
 *
 * # Safety
 * `run` must be null or a live handle.
 */
double soar_run_delta(const struct SoarRun *run);

/**
 * Number of history rows (iterations + 1).
 *
 * # Safety
 * `run` must be null or a live handle.
 */
size_t soar_run_history_len(const struct SoarRun *run);

/**
 * # Safety
 * `run` must be a live handle and `row` a valid pointer.
 */
enum SoarStatus soar_run_history_row(const struct SoarRun *run,
                                     size_t index,
                                     struct SoarRunRow *row);

/**
 * Copies the reconstructed coefficients into `buf` (length must equal m0).
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum SoarStatus soar_run_source(const struct SoarRun *run, double *buf, size_t len);

/**
 * # Safety
 * `run` must be null or a handle not yet freed.
 */
void soar_run_free(struct SoarRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOAR_H */
