#ifndef INFORELAX_H
#define INFORELAX_H

#include <stddef.h>
#include <stdint.h>

typedef enum InfrNorm {
  INFR_NORM_L2 = 0,
  INFR_NORM_L1 = 1,
} InfrNorm;

typedef enum InfrStatus {
  INFR_STATUS_OK = 0,
  INFR_STATUS_NULL_POINTER = 1,
  INFR_STATUS_INVALID_ARGUMENT = 2,
  INFR_STATUS_INVALID_MODEL = 3,
  INFR_STATUS_SOLVER_FAILED = 4,
  INFR_STATUS_INFEASIBLE = 5,
  INFR_STATUS_EXTRACTION_FAILED = 6,
  INFR_STATUS_INTERNAL = 7,
  INFR_STATUS_PANIC = 8,
} InfrStatus;

/*
 Opaque design result handle.
 */
typedef struct InfrDesign InfrDesign;

/*
 Opaque model handle.
 */
typedef struct InfrModel InfrModel;

/*
 Solver and constraint settings for [`infr_design`] and [`infr_certify`].
 */
typedef struct InfrDesignConfig {
  enum InfrNorm norm;
  double rate_bound;
  /*
   `||u||_2` bound for `L2`, `Σ u_t` bound for `L1`.
   */
  double budget;
  double rel_gap_tol;
  uint32_t max_iters;
  uint32_t threads;
} InfrDesignConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the last error message of this thread into `buf` (NUL-terminated,
 truncated to `len`) and returns the full message length in bytes, or 0
 when the last call succeeded.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
size_t infr_last_error(char *buf, size_t len);

/*
 Defaults: l2 norm, rate 1, budget 4, tolerance 1e-8, 100 iterations, 1 thread.
 */
struct InfrDesignConfig infr_design_config_default(void);

/*
 Parses a model document.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum InfrStatus infr_model_from_json(const char *json, struct InfrModel **out);

/*
 The injection model at default parameters. `theta` is a comma separated
 list of uncertain parameters, or null for `kPL` alone.

 # Safety
 `theta` must be null or NUL-terminated, `out` a valid pointer.
 */
enum InfrStatus infr_model_mri(const char *theta, struct InfrModel **out);

/*
 # Safety
 `model` must be null or a handle not yet freed.
 */
void infr_model_free(struct InfrModel *model);

/*
 Length of the stacked input vector, or 0 for a null handle.

 # Safety
 `model` must be null or a live handle.
 */
size_t infr_model_input_len(const struct InfrModel *model);

/*
 Number of parameters, or 0 for a null handle.

 # Safety
 `model` must be null or a live handle.
 */
size_t infr_model_num_params(const struct InfrModel *model);

/*
 Writes the p×p information matrix for input `u` row-major into `out`,
 which must hold `out_len >= p*p` values.

 # Safety
 Pointers must be valid for the given lengths.
 */
enum InfrStatus infr_fisher_information(const struct InfrModel *model,
                                        const double *u,
                                        size_t u_len,
                                        double *out,
                                        size_t out_len);

/*
 Maximizes the information trace under the rate bound and budget.

 # Safety
 `model` must be a live handle, `cfg` and `out` valid pointers.
 */
enum InfrStatus infr_design(const struct InfrModel *model,
                            const struct InfrDesignConfig *cfg,
                            struct InfrDesign **out);

/*
 # Safety
 `design` must be null or a handle not yet freed.
 */
void infr_design_free(struct InfrDesign *design);

/*
 Upper bound on the optimum, NaN for a null handle.

 # Safety
 `design` must be null or a live handle.
 */
double infr_design_value(const struct InfrDesign *design);

/*
 1 when a global maximizer was recovered.

 # Safety
 `design` must be null or a live handle.
 */
int32_t infr_design_exact(const struct InfrDesign *design);

/*
 Candidate value over the bound, NaN when there is none.

 # Safety
 `design` must be null or a live handle.
 */
double infr_design_ratio(const struct InfrDesign *design);

/*
 Copies the recovered input into `out`. Fails with `InvalidArgument` when
 the relaxation was not exact.

 # Safety
 `out` must hold `out_len` values.
 */
enum InfrStatus infr_design_input(const struct InfrDesign *design, double *out, size_t out_len);

/*
 Bounds the optimum by the relaxation and evaluates `candidate`, writing
 `value <= optimum <= bound`. An infeasible candidate gives `Infeasible`.

 # Safety
 Pointers must be valid; `candidate` holds `len` values.
 */
enum InfrStatus infr_certify(const struct InfrModel *model,
                             const struct InfrDesignConfig *cfg,
                             const double *candidate,
                             size_t len,
                             double *value,
                             double *bound);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INFORELAX_H */
