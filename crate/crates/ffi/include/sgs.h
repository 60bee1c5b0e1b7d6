#ifndef SGS_H
#define SGS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SgsStatus {
  SGS_STATUS_OK = 0,
  SGS_STATUS_NULL_POINTER = 1,
  SGS_STATUS_INVALID_UTF8 = 2,
  SGS_STATUS_PARSE_ERROR = 3,
  SGS_STATUS_INVALID_EVIDENCE = 4,
  SGS_STATUS_INVALID_ARGUMENT = 5,
  SGS_STATUS_CAPACITY = 6,
  SGS_STATUS_INTERNAL = 7,
  SGS_STATUS_PANIC = 8,
} SgsStatus;

typedef enum SgsMethod {
  SGS_METHOD_SGS = 0,
  SGS_METHOD_JUNCTION_TREE = 1,
  SGS_METHOD_LBP_IS = 2,
  SGS_METHOD_GIBBS = 3,
  SGS_METHOD_ENUMERATION = 4,
} SgsMethod;

/**
 * Opaque handle to a parsed network.
 */
typedef struct SgsNetwork SgsNetwork;

/**
 * Inference settings. `n_max` of `SIZE_MAX` solves every subset exactly.
 */
typedef struct SgsOptions {
  size_t n_max;
  size_t samples;
  uint64_t seed;
} SgsOptions;

/**
 * Result of a marginal computation.
 */
typedef struct SgsMarginal {
  double log_probability;
  double probability;
  /**
   * Estimated relative standard error; 0 for exact answers.
   */
  double relative_std_error;
  size_t subsets;
  size_t sampled_variables;
} SgsMarginal;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default settings: n_max 15, 1000 samples, seed 0.
 */
struct SgsOptions sgs_options_default(void);

/**
 * Parses a network from TOML text. On success `*out` owns a new handle that
 * must be released with `sgs_network_free`.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SgsStatus sgs_network_parse(const char *text, struct SgsNetwork **out);

/**
 * # Safety
 * `net` must be null or a handle from `sgs_network_parse` not yet freed.
 */
void sgs_network_free(struct SgsNetwork *net);

/**
 * Number of variables, or 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t sgs_network_len(const struct SgsNetwork *net);

/**
 * Writes the canonical text form of the network to `*out`.
 *
 * # Safety
 * `net` must be a live handle and `out` a valid pointer.
 */
enum SgsStatus sgs_network_serialize(const struct SgsNetwork *net, char **out);

/**
 * Computes P(X_e) for `evidence` given as `name=state` pairs separated by
 * commas (empty or null for none). `options` may be null for defaults.
 *
 * # Safety
 * `net` must be a live handle, `evidence` null or NUL-terminated, `options`
 * null or valid, and `out` a valid pointer.
 */
enum SgsStatus sgs_marginal(const struct SgsNetwork *net,
                            const char *evidence,
                            enum SgsMethod method,
                            const struct SgsOptions *options,
                            struct SgsMarginal *out);

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next library call on the same thread.
 */
const char *sgs_last_error_message(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed only once.
 */
void sgs_string_free(char *s);

/**
 * Library version as a static string.
 */
const char *sgs_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SGS_H */
