#ifndef PIVOTAL_H
#define PIVOTAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Uncertainty kind selector.
 */
typedef enum PivotalKind {
  PIVOTAL_KIND_MASS = 0,
  PIVOTAL_KIND_COM = 1,
} PivotalKind;

/*
 Optimization mode selector.
 */
typedef enum PivotalMode {
  PIVOTAL_MODE_NOMINAL = 0,
  PIVOTAL_MODE_ROBUST_MASS = 1,
  PIVOTAL_MODE_ROBUST_COM = 2,
} PivotalMode;

/*
 Result of every fallible call.
 */
typedef enum PivotalStatus {
  PIVOTAL_STATUS_OK = 0,
  PIVOTAL_STATUS_NULL_POINTER = 1,
  PIVOTAL_STATUS_INVALID_ARGUMENT = 2,
  PIVOTAL_STATUS_DOMAIN = 3,
  PIVOTAL_STATUS_SINGULAR = 4,
  PIVOTAL_STATUS_SOLVE_FAILED = 5,
  PIVOTAL_STATUS_IO = 6,
  PIVOTAL_STATUS_PANIC = 7,
} PivotalStatus;

/*
 Opaque object parameters.
 */
typedef struct PivotalObject PivotalObject;

/*
 Opaque planned trajectory.
 */
typedef struct PivotalTrajectory PivotalTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or null. Valid until the
 next call on the same thread.
 */
const char *pivotal_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *pivotal_version(void);

/*
 Parses an object configuration (JSON, lengths in mm, mass in g).

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PivotalStatus pivotal_object_from_json(const char *json, struct PivotalObject **out);

/*
 Releases an object; null is ignored.

 # Safety
 `obj` must come from this library and not be used afterwards.
 */
void pivotal_object_free(struct PivotalObject *obj);

/*
 Object mass in kg.

 # Safety
 Pointers must be valid.
 */
enum PivotalStatus pivotal_object_mass(const struct PivotalObject *obj, double *out);

/*
 Solves a pivoting problem with `n` steps and default solver options.
 `n = 0` selects 60 steps for rectangles and 15 for stepped profiles.

 # Safety
 Pointers must be valid.
 */
enum PivotalStatus pivotal_optimize(const struct PivotalObject *obj,
                                    enum PivotalMode mode,
                                    double alpha,
                                    size_t n,
                                    struct PivotalTrajectory **out);

/*
 Parses a trajectory file.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PivotalStatus pivotal_trajectory_from_json(const char *json, struct PivotalTrajectory **out);

/*
 Serializes a trajectory; release the string with [`pivotal_string_free`].

 # Safety
 Pointers must be valid.
 */
enum PivotalStatus pivotal_trajectory_to_json(const struct PivotalTrajectory *traj, char **out);

/*
 Releases a string returned by this library; null is ignored.

 # Safety
 `s` must come from this library and not be used afterwards.
 */
void pivotal_string_free(char *s);

/*
 Releases a trajectory; null is ignored.

 # Safety
 `traj` must come from this library and not be used afterwards.
 */
void pivotal_trajectory_free(struct PivotalTrajectory *traj);

/*
 Number of control steps.

 # Safety
 Pointers must be valid.
 */
enum PivotalStatus pivotal_trajectory_steps(const struct PivotalTrajectory *traj, size_t *out);

/*
 Copies the pose and input of step `k` into `state[2]` and `input[2]`.

 # Safety
 Pointers must be valid; `state` and `input` must hold two doubles each.
 */
enum PivotalStatus pivotal_trajectory_step(const struct PivotalTrajectory *traj,
                                           size_t k,
                                           double *state,
                                           double *input);

/*
 Worst-case margins over the horizon in both directions (N or m).

 # Safety
 Pointers must be valid.
 */
enum PivotalStatus pivotal_trajectory_worst_margins(const struct PivotalTrajectory *traj,
                                                    enum PivotalKind kind,
                                                    double *plus,
                                                    double *minus);

/*
 Static feasibility of one `(pose, input)` pair with `eps` N of added
 weight and CoM shift `r` m.

 # Safety
 Pointers must be valid.
 */
enum PivotalStatus pivotal_static_feasible(const struct PivotalObject *obj,
                                           double theta,
                                           double p_y,
                                           double f_np,
                                           double f_tp,
                                           double eps,
                                           double r,
                                           bool *out);

/*
 Executes the trajectory at each true mass (g); writes 1 to `pass[i]` when
 every step stays statically feasible and 0 otherwise.

 # Safety
 `masses_g` and `pass` must hold `len` elements each (may be null when `len = 0`).
 */
enum PivotalStatus pivotal_sweep_mass(const struct PivotalTrajectory *traj,
                                      const double *masses_g,
                                      size_t len,
                                      uint8_t *pass);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PIVOTAL_H */
