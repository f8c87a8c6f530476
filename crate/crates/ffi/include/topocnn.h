#ifndef TOPOCNN_H
#define TOPOCNN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TopocnnProblemKind {
  TOPOCNN_PROBLEM_KIND_CANTILEVER = 0,
  TOPOCNN_PROBLEM_KIND_ARCH = 1,
  TOPOCNN_PROBLEM_KIND_MICRO = 2,
} TopocnnProblemKind;

// Result of every fallible call. Values 2 to 4 match the command-line exit codes.
typedef enum TopocnnStatus {
  TOPOCNN_STATUS_OK = 0,
  // A required pointer was null or a string was not UTF-8.
  TOPOCNN_STATUS_NULL_ARGUMENT = 1,
  // Parameters out of range or shapes that do not match.
  TOPOCNN_STATUS_VALIDATION = 2,
  // Unreadable or malformed files.
  TOPOCNN_STATUS_DATA = 3,
  // Solver breakdown or non-finite values.
  TOPOCNN_STATUS_NUMERIC = 4,
  // A Rust panic was caught at the boundary.
  TOPOCNN_STATUS_PANIC = 5,
} TopocnnStatus;

// Element densities on a structured grid, row-major from the top-left.
typedef struct TopocnnDensity TopocnnDensity;

// Trained network loaded from a checkpoint.
typedef struct TopocnnModel TopocnnModel;

// Problem configuration with solver settings.
typedef struct TopocnnProblem TopocnnProblem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *topocnn_version(void);

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *topocnn_last_error_message(void);

// Default configuration for `kind` on an `nelx × nely` grid.
enum TopocnnStatus topocnn_problem_new(enum TopocnnProblemKind kind,
                                       size_t nelx,
                                       size_t nely,
                                       double vf,
                                       struct TopocnnProblem **out_problem);

// Configuration from JSON, in the format of a dataset's `config.json` entry.
enum TopocnnStatus topocnn_problem_from_json(const char *json, struct TopocnnProblem **out_problem);

// Changes the target volume fraction.
enum TopocnnStatus topocnn_problem_set_vf(struct TopocnnProblem *problem, double vf);

void topocnn_problem_free(struct TopocnnProblem *problem);

// Runs the optimizer. `out_objective` may be NULL.
enum TopocnnStatus topocnn_problem_solve(const struct TopocnnProblem *problem,
                                         struct TopocnnDensity **out_density,
                                         double *out_objective);

// Objective of `density` under the problem's physics.
enum TopocnnStatus topocnn_problem_evaluate(const struct TopocnnProblem *problem,
                                            const struct TopocnnDensity *density,
                                            double *out_objective);

// Copies `len == nelx * nely` values in `[0, 1]`.
enum TopocnnStatus topocnn_density_new(size_t nelx,
                                       size_t nely,
                                       const double *values,
                                       size_t len,
                                       struct TopocnnDensity **out_density);

// Elements along x, or 0 for NULL.
size_t topocnn_density_width(const struct TopocnnDensity *density);

// Elements along y, or 0 for NULL.
size_t topocnn_density_height(const struct TopocnnDensity *density);

enum TopocnnStatus topocnn_density_mean(const struct TopocnnDensity *density, double *out_mean);

// Copies the values into `buffer`, which must hold exactly `width * height` doubles.
enum TopocnnStatus topocnn_density_copy_values(const struct TopocnnDensity *density,
                                               double *buffer,
                                               size_t len);

// Writes the field as a binary PGM (solid is black).
enum TopocnnStatus topocnn_density_write_pgm(const struct TopocnnDensity *density,
                                             const char *path);

void topocnn_density_free(struct TopocnnDensity *density);

enum TopocnnStatus topocnn_model_load(const char *path, struct TopocnnModel **out_model);

// Side length of the square input image, or 0 for NULL.
size_t topocnn_model_input_size(const struct TopocnnModel *model);

// Width of the adaptive dense layer (0 for a single dense layer or NULL).
size_t topocnn_model_adaptive_width(const struct TopocnnModel *model);

// Predicted design for volume fraction `vf`.
enum TopocnnStatus topocnn_model_infer(const struct TopocnnModel *model,
                                       double vf,
                                       struct TopocnnDensity **out_density);

void topocnn_model_free(struct TopocnnModel *model);

// Volume error in percent of the target volume.
enum TopocnnStatus topocnn_volume_error(const struct TopocnnDensity *pred,
                                        const struct TopocnnDensity *target,
                                        double *out_percent);

// Objective error in percent of the target objective.
enum TopocnnStatus topocnn_objective_error(const struct TopocnnProblem *problem,
                                           const struct TopocnnDensity *pred,
                                           const struct TopocnnDensity *target,
                                           double *out_percent);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOPOCNN_H */
