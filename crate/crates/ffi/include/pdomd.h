#ifndef PDOMD_H
#define PDOMD_H

#include <stddef.h>
#include <stdint.h>

/*
 Outcome of a call.
 */
typedef enum PdStatus {
  PD_STATUS_OK = 0,
  PD_STATUS_NULL_POINTER = 1,
  PD_STATUS_INVALID_ARGUMENT = 2,
  PD_STATUS_DIMENSION_MISMATCH = 3,
  PD_STATUS_NON_FINITE = 4,
  /*
   Calls made out of order, e.g. two decisions without an observation between them.
   */
  PD_STATUS_PROTOCOL = 5,
  PD_STATUS_UNSUPPORTED = 6,
  /*
   Configuration rejected.
   */
  PD_STATUS_CONFIG = 7,
  /*
   Solver, oracle or I/O failure.
   */
  PD_STATUS_RUNTIME = 8,
  /*
   A Rust panic was caught at the boundary.
   */
  PD_STATUS_PANIC = 9,
} PdStatus;

typedef enum PdVariant {
  PD_VARIANT_GENERAL = 0,
  PD_VARIANT_SIMPLEX = 1,
} PdVariant;

typedef enum PdGeometry {
  PD_GEOMETRY_EUCLIDEAN = 0,
  PD_GEOMETRY_NEGATIVE_ENTROPY = 1,
} PdGeometry;

/*
 Decision set handle.
 */
typedef struct PdDecisionSet PdDecisionSet;

/*
 Built-in problem handle.
 */
typedef struct PdProblem PdProblem;

/*
 Run record handle.
 */
typedef struct PdRecord PdRecord;

/*
 Online solver handle.
 */
typedef struct PdSolver PdSolver;

/*
 Step-size schedule.
 */
typedef struct PdParams {
  double v;
  double alpha;
  double theta;
  uintptr_t horizon;
  uintptr_t drift_window;
} PdParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null if the last call succeeded.

 The pointer stays valid until the next `pd_*` call on the same thread.
 */
const char *pd_last_error_message(void);

/*
 Default schedule for horizon `horizon`.

 # Safety
 `out` must point to writable memory for one [`PdParams`].
 */
enum PdStatus pd_parameter_schedule(uintptr_t horizon,
                                    enum PdVariant variant,
                                    struct PdParams *out);

/*
 Bregman divergence `D(x, y)` of `n`-vectors.

 # Safety
 `x` and `y` must hold `n` doubles; `out` must be writable.
 */
enum PdStatus pd_bregman_divergence(enum PdGeometry geometry,
                                    const double *x,
                                    const double *y,
                                    uintptr_t n,
                                    double *out);

/*
 Probability simplex of dimension `dim`.
 */
struct PdDecisionSet *pd_set_simplex(uintptr_t dim);

/*
 Box `[lower, upper]` of dimension `dim`.

 # Safety
 `lower` and `upper` must hold `dim` doubles.
 */
struct PdDecisionSet *pd_set_box(const double *lower, const double *upper, uintptr_t dim);

/*
 # Safety
 `set` must come from `pd_set_*` and not be used afterwards. Null is ignored.
 */
void pd_set_free(struct PdDecisionSet *set);

/*
 `argmin_{μ∈set} ⟨p, μ⟩ + αD(μ, y)`, written to `out`.

 # Safety
 `y`, `p` and `out` must hold `n` doubles; `set` must be a live handle.
 */
enum PdStatus pd_mirror_step(enum PdGeometry geometry,
                             const struct PdDecisionSet *set,
                             const double *y,
                             const double *p,
                             uintptr_t n,
                             double alpha,
                             double *out);

/*
 Solver over a copy of `set` with `num_ineq` inequality and `num_eq` equality
 constraints; `targets` holds the `num_eq` right-hand sides.

 # Safety
 `set` and `params` must be valid; `targets` must hold `num_eq` doubles.
 */
struct PdSolver *pd_solver_new(enum PdGeometry geometry,
                               const struct PdDecisionSet *set,
                               uintptr_t num_ineq,
                               const double *targets,
                               uintptr_t num_eq,
                               const struct PdParams *params,
                               enum PdVariant variant);

/*
 # Safety
 `solver` must come from [`pd_solver_new`] and not be used afterwards. Null is ignored.
 */
void pd_solver_free(struct PdSolver *solver);

/*
 Index of the slot the next decision belongs to.

 # Safety
 `solver` must be a live handle or null (returns 0).
 */
uintptr_t pd_solver_slot(const struct PdSolver *solver);

/*
 Chooses the decision for the current slot and updates the multipliers.

 `drift` may be null.

 # Safety
 `decision` must hold `n` doubles, `n` equal to the set dimension.
 */
enum PdStatus pd_solver_decide(struct PdSolver *solver,
                               double *decision,
                               uintptr_t n,
                               double *drift);

/*
 Feeds the current slot's functions evaluated at the decided point.

 `ineq_grads` is `num_ineq × n` and `eq_vectors` is `num_eq × n`, both row-major.

 # Safety
 Every pointer must hold the stated number of doubles.
 */
enum PdStatus pd_solver_observe(struct PdSolver *solver,
                                double objective_value,
                                const double *objective_grad,
                                uintptr_t n,
                                const double *ineq_values,
                                const double *ineq_grads,
                                uintptr_t num_ineq,
                                const double *eq_vectors,
                                uintptr_t num_eq);

/*
 Copies the current multipliers `Q` (length `num_ineq`) and `H` (length `num_eq`).

 # Safety
 `q` and `h` must hold the stated number of doubles.
 */
enum PdStatus pd_solver_duals(const struct PdSolver *solver,
                              double *q,
                              uintptr_t num_ineq,
                              double *h,
                              uintptr_t num_eq);

/*
 Synthetic linear problem on the `d`-simplex.
 */
struct PdProblem *pd_problem_synthetic(uintptr_t d,
                                       uintptr_t num_ineq,
                                       uintptr_t num_eq,
                                       uint64_t seed);

/*
 Problem described by a JSON experiment configuration, built for `horizon` slots.

 # Safety
 `config_json` must be a NUL-terminated string.
 */
struct PdProblem *pd_problem_from_config(const char *config_json, uintptr_t horizon);

/*
 # Safety
 `problem` must come from `pd_problem_*` and not be used afterwards. Null is ignored.
 */
void pd_problem_free(struct PdProblem *problem);

/*
 Decision dimension of the problem (0 for null).

 # Safety
 `problem` must be a live handle or null.
 */
uintptr_t pd_problem_dim(const struct PdProblem *problem);

/*
 Runs the solver on `problem` for `horizon` slots; null on failure.

 # Safety
 `problem` and `params` must be valid.
 */
struct PdRecord *pd_run(const struct PdProblem *problem,
                        uintptr_t horizon,
                        const struct PdParams *params,
                        enum PdVariant variant,
                        enum PdGeometry geometry,
                        uint64_t seed);

/*
 # Safety
 `record` must come from [`pd_run`] and not be used afterwards. Null is ignored.
 */
void pd_record_free(struct PdRecord *record);

/*
 Number of slots in the record (0 for null).

 # Safety
 `record` must be a live handle or null.
 */
uintptr_t pd_record_len(const struct PdRecord *record);

/*
 Decision of slot `t` and its post-update dual norms; `q_norm` and `h_norm` may be null.

 # Safety
 `decision` must hold `n` doubles.
 */
enum PdStatus pd_record_slot(const struct PdRecord *record,
                             uintptr_t t,
                             double *decision,
                             uintptr_t n,
                             double *q_norm,
                             double *h_norm);

/*
 Writes the record to `path`; the extension (`.csv` or `.json`) picks the format.

 # Safety
 `path` must be a NUL-terminated string.
 */
enum PdStatus pd_record_export(const struct PdRecord *record, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PDOMD_H */
