#ifndef GREEDY_H
#define GREEDY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GreedyStatus {
  GREEDY_STATUS_OK = 0,
  GREEDY_STATUS_NULL_POINTER = 1,
  GREEDY_STATUS_INVALID_CONFIG = 2,
  GREEDY_STATUS_CONTRACT = 3,
  GREEDY_STATUS_FORMAT = 4,
  GREEDY_STATUS_IO = 5,
  GREEDY_STATUS_USAGE = 6,
  GREEDY_STATUS_PANIC = 7,
} GreedyStatus;

/**
 * Values of `GreedyConfig::service`.
 */
typedef enum GreedyService {
  GREEDY_SERVICE_EXPONENTIAL = 0,
  GREEDY_SERVICE_DETERMINISTIC = 1,
  GREEDY_SERVICE_GEOMETRIC = 2,
} GreedyService;

/**
 * Values of the `model` argument of the constructors.
 */
typedef enum GreedyModel {
  GREEDY_MODEL_EXPLICIT = 0,
  GREEDY_MODEL_POTENTIAL = 1,
  GREEDY_MODEL_POLLING = 2,
} GreedyModel;

/**
 * Values of `GreedyEvent::kind`.
 */
typedef enum GreedyEventKind {
  GREEDY_EVENT_KIND_ARRIVAL = 0,
  GREEDY_EVENT_KIND_SERVICE_START = 1,
  GREEDY_EVENT_KIND_DEPARTURE = 2,
  GREEDY_EVENT_KIND_REGENERATION = 3,
} GreedyEventKind;

/**
 * Opaque simulator handle.
 */
typedef struct GreedySim GreedySim;

typedef struct GreedyConfig {
  double lambda;
  double mu;
  double speed;
  /**
   * A `GreedyService` value.
   */
  uint32_t service;
  /**
   * Success probability for the geometric law, ignored otherwise.
   */
  double geometric_p;
} GreedyConfig;

typedef struct GreedyEvent {
  double time;
  /**
   * A `GreedyEventKind` value.
   */
  uint32_t kind;
  double server;
  /**
   * NaN when there is no target.
   */
  double target;
  /**
   * -1 when the model does not track customers.
   */
  int64_t customers;
} GreedyEvent;

typedef struct GreedyRegeneration {
  bool censored;
  /**
   * NaN when censored.
   */
  double tau;
  double end_time;
  /**
   * NaN when no arrival was seen.
   */
  double first_arrival;
  uint64_t served;
  double busy_time;
  double travel_time;
  double idle_time;
  double traveled;
} GreedyRegeneration;

/**
 * Verdicts of one coupled run; event indices are -1 when the stopping
 * time was not reached.
 */
typedef struct GreedyCoupled {
  bool identities_ok;
  bool degenerate;
  bool shapes_ok;
  uint64_t events;
  int64_t t_o_event;
  int64_t t_v_event;
  int64_t t_1_event;
  int64_t t_u_event;
} GreedyCoupled;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *greedy_version(void);

/**
 * Message of the last failure on this thread, or NULL. Owned by the
 * library.
 */
const char *greedy_last_error(void);

/**
 * Simulator started from the empty system with the server at 0.
 *
 * # Safety
 * `cfg` must point to a valid config and `out` to writable storage.
 */
enum GreedyStatus greedy_sim_new(const struct GreedyConfig *cfg,
                                 uint32_t model,
                                 uint64_t seed,
                                 struct GreedySim **out);

/**
 * Simulator started serving at 0 with the constant potential `level`
 * (explicit models sample the waiting customers from it).
 *
 * # Safety
 * As for `greedy_sim_new`.
 */
enum GreedyStatus greedy_sim_new_constant(const struct GreedyConfig *cfg,
                                          uint32_t model,
                                          uint64_t seed,
                                          double level,
                                          struct GreedySim **out);

/**
 * Simulator started from a potential given as a JSON profile document.
 *
 * # Safety
 * As for `greedy_sim_new`; `json` must be a NUL-terminated string.
 */
enum GreedyStatus greedy_sim_new_from_json(const struct GreedyConfig *cfg,
                                           uint32_t model,
                                           uint64_t seed,
                                           const char *json,
                                           struct GreedySim **out);

/**
 * # Safety
 * `sim` must come from a constructor and not be used afterwards.
 */
void greedy_sim_free(struct GreedySim *sim);

/**
 * Apply the next event. `*has_event` is false when no event can occur.
 *
 * # Safety
 * All pointers must be valid.
 */
enum GreedyStatus greedy_sim_step(struct GreedySim *sim, struct GreedyEvent *out, bool *has_event);

/**
 * # Safety
 * All pointers must be valid.
 */
enum GreedyStatus greedy_sim_clock(const struct GreedySim *sim, double *out);

/**
 * Run until the system is empty or `horizon`; counters are cumulative
 * from the start of the simulator.
 *
 * # Safety
 * All pointers must be valid.
 */
enum GreedyStatus greedy_sim_run_until_regeneration(struct GreedySim *sim,
                                                    double horizon,
                                                    struct GreedyRegeneration *out);

/**
 * One coupled circle / line / truncated-line run from the constant
 * potential `level`, serving at 0.
 *
 * # Safety
 * All pointers must be valid.
 */
enum GreedyStatus greedy_couple(const struct GreedyConfig *cfg,
                                uint64_t seed,
                                double level,
                                double tolerance,
                                double horizon,
                                struct GreedyCoupled *out);

/**
 * Run a command-line invocation in-process. `argv` holds the arguments
 * after the program name. The main output is returned in `*out_text`
 * (also written to `--out` when given; side tables go to their paths),
 * and `*failed_gates` receives the number of failed gates.
 *
 * # Safety
 * `argv` must hold `argc` NUL-terminated strings; the other pointers must
 * be valid. Free `*out_text` with `greedy_string_free`.
 */
enum GreedyStatus greedy_cli_run(size_t argc,
                                 const char *const *argv,
                                 char **out_text,
                                 uint32_t *failed_gates);

/**
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void greedy_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GREEDY_H */
