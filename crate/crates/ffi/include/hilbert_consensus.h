#ifndef HILBERT_CONSENSUS_H
#define HILBERT_CONSENSUS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HcStatus {
  HC_STATUS_OK = 0,
  HC_STATUS_NULL_POINTER = 1,
  // Bad dimensions, out-of-range indices or parameters outside their domain.
  HC_STATUS_INVALID_ARGUMENT = 2,
  // Scenario text or file could not be parsed or resolved.
  HC_STATUS_CONFIG = 3,
  // A model or hypothesis check failed (not Metzler, not QSC, ...).
  HC_STATUS_CONTRACT = 4,
  HC_STATUS_IO = 5,
  // The caller's buffer is too small; the required size is reported.
  HC_STATUS_BUFFER_TOO_SMALL = 6,
  HC_STATUS_PANIC = 7,
} HcStatus;

typedef enum HcVerdict {
  HC_VERDICT_EXPONENTIAL = 0,
  HC_VERDICT_ASYMPTOTIC = 1,
  HC_VERDICT_UNDECIDED = 2,
  HC_VERDICT_DIVERGING = 3,
} HcVerdict;

// Weighted digraph, `weight(i, j)` being the influence of `j` on `i`.
typedef struct HcDigraph HcDigraph;

// Result of running a scenario: trajectory and certificates.
typedef struct HcRun HcRun;

// A parsed scenario plus the directory its relative paths resolve against.
typedef struct HcScenario HcScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into this library from the same thread.
const char *hc_last_error(void);

// Library version as a static NUL-terminated string.
const char *hc_version(void);

// Hilbert projective distance between two positive vectors of length `n`.
// Infinite when exactly one of them touches the orthant boundary.
//
// # Safety
// `x` and `y` point to `n` doubles; `out` is writable.
enum HcStatus hc_hilbert_distance(const double *x, const double *y, size_t n, double *out_d);

// Distance from `x` to the consensus ray, `ln(max x / min x)`.
//
// # Safety
// `x` points to `n` doubles; `out` is writable.
enum HcStatus hc_distance_to_consensus(const double *x, size_t n, double *out_d);

// Smallest `gamma` whose cone contains `x`. `out_boundary`, when non-NULL,
// is set to 1 if `x` touches the orthant boundary and lies in no cone.
//
// # Safety
// `x` points to `n` doubles; `out_gamma` is writable; `out_boundary` is
// NULL or writable.
enum HcStatus hc_minimal_gamma(const double *x, size_t n, double *out_gamma, int32_t *out_boundary);

// Hilbert diameter of the cone with margin `gamma` in dimension `n`.
//
// # Safety
// `out` is writable.
enum HcStatus hc_cone_diameter(size_t n, double gamma, double *out_d);

// Contraction constant for `n` agents, link bound `delta` and cone margin
// `epsilon`.
//
// # Safety
// `out` is writable.
enum HcStatus hc_contraction_constant(size_t n, double delta, double epsilon, double *out_c);

// Empty digraph on `n` agents.
//
// # Safety
// `out` is writable.
enum HcStatus hc_digraph_new(size_t n, struct HcDigraph **out_g);

// Digraph from an `n × n` row-major weight matrix. The diagonal is ignored.
//
// # Safety
// `weights` points to `n * n` doubles; `out` is writable.
enum HcStatus hc_digraph_from_weights(const double *weights, size_t n, struct HcDigraph **out_g);

// # Safety
// `g` is NULL or a handle from this library not yet freed.
void hc_digraph_free(struct HcDigraph *g);

// # Safety
// `g` is a live handle; `out` is writable.
enum HcStatus hc_digraph_size(const struct HcDigraph *g, size_t *out_n);

// Sets the influence of `j` on `i` (0-based).
//
// # Safety
// `g` is a live handle.
enum HcStatus hc_digraph_set_weight(struct HcDigraph *g, size_t i, size_t j, double w);

// # Safety
// `g` is a live handle; `out` is writable.
enum HcStatus hc_digraph_weight(const struct HcDigraph *g, size_t i, size_t j, double *out_w);

// Quasi-strong connectivity check ignoring weights `<= tol`. Writes 1 or 0
// to `out_qsc`; when connected, `out_center` (if non-NULL) receives the
// smallest agent whose information reaches everyone and `out_margin` (if
// non-NULL) the smallest weight on the witness tree.
//
// # Safety
// `g` is a live handle; `out_qsc` is writable; the others are NULL or writable.
enum HcStatus hc_digraph_is_qsc(const struct HcDigraph *g,
                                double tol,
                                int32_t *out_qsc,
                                size_t *out_center,
                                double *out_margin);

// Loads a scenario file, or a bundled scenario when `path` is one of the
// bundled names.
//
// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum HcStatus hc_scenario_load(const char *path, struct HcScenario **out_s);

// Parses scenario TOML. Relative paths inside resolve against the current
// directory.
//
// # Safety
// `toml` is a NUL-terminated string; `out` is writable.
enum HcStatus hc_scenario_from_toml(const char *toml, struct HcScenario **out_s);

// # Safety
// `s` is NULL or a handle from this library not yet freed.
void hc_scenario_free(struct HcScenario *s);

// Overrides the scenario's random seed.
//
// # Safety
// `s` is a live handle.
enum HcStatus hc_scenario_set_seed(struct HcScenario *s, uint64_t seed);

// Hex SHA-256 of the scenario (64 characters plus NUL). `required`, when
// non-NULL, receives the buffer size needed.
//
// # Safety
// `s` is a live handle; `buf` holds `len` bytes; `required` is NULL or writable.
enum HcStatus hc_scenario_hash(const struct HcScenario *s, char *buf, size_t len, size_t *required);

// Builds, simulates and certifies the scenario.
//
// # Safety
// `s` is a live handle; `out` is writable.
enum HcStatus hc_scenario_run(const struct HcScenario *s, struct HcRun **out_r);

// # Safety
// `r` is NULL or a handle from this library not yet freed.
void hc_run_free(struct HcRun *r);

// Number of samples and number of agents.
//
// # Safety
// `r` is a live handle; the out pointers are NULL or writable.
enum HcStatus hc_run_shape(const struct HcRun *r, size_t *out_samples, size_t *out_agents);

// Time of sample `k` and, when `state` is non-NULL, the state copied into
// `state[0..n]`, where `n` must equal the number of agents.
//
// # Safety
// `r` is a live handle; `out_t` is NULL or writable; `state` is NULL or
// holds `n` doubles.
enum HcStatus hc_run_sample(const struct HcRun *r,
                            size_t k,
                            double *out_t,
                            double *state,
                            size_t n);

// Consensus verdict, decay rate and prefactor of the certified envelope.
// Any out pointer may be NULL.
//
// # Safety
// `r` is a live handle; the out pointers are NULL or writable.
enum HcStatus hc_run_consensus(const struct HcRun *r,
                               enum HcVerdict *out_verdict,
                               double *out_rate,
                               double *out_prefactor);

// Outcome of the lower-bound check: 1 pass, 0 fail, -1 when the scenario
// declares no lower bound. `out_margin` (if non-NULL) receives the worst
// margin.
//
// # Safety
// `r` is a live handle; `out_pass` is writable; `out_margin` is NULL or writable.
enum HcStatus hc_run_lower_bound(const struct HcRun *r, int32_t *out_pass, double *out_margin);

// Writes the trajectory as CSV, in the same format as `hcons simulate`.
//
// # Safety
// `r` is a live handle; `path` is a NUL-terminated string.
enum HcStatus hc_run_write_csv(const struct HcRun *r, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HILBERT_CONSENSUS_H */
