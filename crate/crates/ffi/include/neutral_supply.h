#ifndef NEUTRAL_SUPPLY_H
#define NEUTRAL_SUPPLY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum NsStatus {
  NS_STATUS_OK = 0,
  NS_STATUS_NULL_POINTER = 1,
  NS_STATUS_INVALID_ARGUMENT = 2,
  NS_STATUS_PARSE = 3,
  NS_STATUS_UNKNOWN_SYSTEM = 4,
  NS_STATUS_HYPOTHESIS = 5,
  NS_STATUS_NOT_ACYCLIC = 6,
  NS_STATUS_ILL_POSED = 7,
  NS_STATUS_UNDECIDED = 8,
  NS_STATUS_NO_CERTIFICATE = 9,
  NS_STATUS_BUFFER_TOO_SMALL = 10,
  NS_STATUS_INTERNAL = 11,
} NsStatus;

// Neutral supplies on every link of a network.
typedef struct NsDecomposition NsDecomposition;

// A network together with its storage certificate, once one is known.
typedef struct NsNetwork NsNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ns_version(void);

// Message of the last failed call on this thread; valid until the next call.
const char *ns_last_error(void);

// Parses a JSON network file. A certificate in the file is attached to
// the handle without being checked.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum NsStatus ns_network_from_json(const char *json, struct NsNetwork **out);

// The built-in DC grid with its published storage attached.
//
// # Safety
// `out` must be a valid pointer.
enum NsStatus ns_network_dcgrid(struct NsNetwork **out);

// # Safety
// `net` must be null or a handle from this library not yet freed.
void ns_network_free(struct NsNetwork *net);

// Overrides the definiteness and rank tolerances used by later calls.
//
// # Safety
// `net` must be a valid handle.
enum NsStatus ns_network_set_tolerance(struct NsNetwork *net, double definiteness, double rank);

// # Safety
// `net` must be a valid handle and `out` a valid pointer.
enum NsStatus ns_network_system_count(const struct NsNetwork *net, size_t *out);

// # Safety
// `net` must be a valid handle and `out` a valid pointer.
enum NsStatus ns_network_is_acyclic(const struct NsNetwork *net, bool *out);

// Searches an additive Lyapunov certificate and attaches it to the handle.
//
// # Safety
// `net` must be a valid handle.
enum NsStatus ns_network_solve_certificate(struct NsNetwork *net);

// Largest eigenvalue of the Lyapunov inequality of the attached certificate.
//
// # Safety
// `net` must be a valid handle and `out` a valid pointer.
enum NsStatus ns_network_certificate_margin(const struct NsNetwork *net, double *out);

// Neutral supplies on every link of an acyclic network, from the attached certificate.
//
// # Safety
// `net` must be a valid handle and `out` a valid pointer.
enum NsStatus ns_decompose(const struct NsNetwork *net, double alpha, struct NsDecomposition **out);

// # Safety
// `dec` must be null or a handle from this library not yet freed.
void ns_decomposition_free(struct NsDecomposition *dec);

// Whether every link is neutral and every system dissipative.
//
// # Safety
// `dec` must be a valid handle and `out` a valid pointer.
enum NsStatus ns_decomposition_holds(const struct NsDecomposition *dec, bool *out);

// Input and output dimensions of the supply on the port of `system` facing `neighbor`.
//
// # Safety
// `dec` must be a valid handle; `nv` and `nw` valid pointers.
enum NsStatus ns_decomposition_supply_dims(const struct NsDecomposition *dec,
                                           uint32_t system,
                                           uint32_t neighbor,
                                           size_t *nv,
                                           size_t *nw);

// Copies the blocks `q` (nv x nv), `s` (nv x nw) and `r` (nw x nw) of the
// supply on the port of `system` facing `neighbor`, row-major.
//
// # Safety
// `dec` must be a valid handle; each buffer must hold at least its stated length.
enum NsStatus ns_decomposition_supply(const struct NsDecomposition *dec,
                                      uint32_t system,
                                      uint32_t neighbor,
                                      double *q,
                                      size_t q_len,
                                      double *s,
                                      size_t s_len,
                                      double *r,
                                      size_t r_len);

// Whether the network stays stable when the link between `i` and `j` is
// scaled by any factor in `[0, 1]`.
//
// # Safety
// `net` must be a valid handle and `out` a valid pointer.
enum NsStatus ns_robust_to_link_removal(const struct NsNetwork *net,
                                        uint32_t i,
                                        uint32_t j,
                                        bool *out);

// Whether the network stays stable when all links of `system` are scaled
// by any common factor in `[0, 1]`.
//
// # Safety
// `net` must be a valid handle and `out` a valid pointer.
enum NsStatus ns_robust_to_system_removal(const struct NsNetwork *net, uint32_t system, bool *out);

// Static name of a status code.
const char *ns_status_name(enum NsStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEUTRAL_SUPPLY_H */
