#ifndef GW_H
#define GW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GwStatus {
  GW_STATUS_OK = 0,
  GW_STATUS_NULL_POINTER = 1,
  GW_STATUS_DOMAIN = 2,
  GW_STATUS_VALIDATION = 3,
  GW_STATUS_PARSE = 4,
  GW_STATUS_REFUSED = 5,
  GW_STATUS_USAGE = 6,
  GW_STATUS_IO = 7,
  GW_STATUS_JSON = 8,
  GW_STATUS_UTF8 = 9,
  GW_STATUS_BUFFER_TOO_SMALL = 10,
  GW_STATUS_PANIC = 11,
} GwStatus;

/**
 * Finite dyadic lattice.
 */
typedef struct GwLattice GwLattice;

/**
 * Constants of one weight pair, with its JSON serialization.
 */
typedef struct GwReport GwReport;

/**
 * Nonnegative weight on a lattice.
 */
typedef struct GwWeight GwWeight;

typedef struct GwConstants {
  double a2;
  double testing;
  double pivotal;
  double n_const;
  double g_norm;
  double half_poisson;
} GwConstants;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t gw_last_error(char *buf, size_t len);

/**
 * Lattice of `2^(dim·depth)` cells on the cube `corner + [0, side)^dim`.
 *
 * # Safety
 * `corner` must point to `dim` doubles; `out` must be writable.
 */
enum GwStatus gw_lattice_new(size_t dim,
                             const double *corner,
                             double side,
                             uint32_t depth,
                             struct GwLattice **out);

/**
 * Number of cells of the lattice.
 *
 * # Safety
 * `lattice` must be a live handle or null (gives 0).
 */
size_t gw_lattice_cells(const struct GwLattice *lattice);

/**
 * # Safety
 * `lattice` must come from [`gw_lattice_new`] and not be freed twice.
 */
void gw_lattice_free(struct GwLattice *lattice);

/**
 * Weight from one mass per cell, in row-major cell order.
 *
 * # Safety
 * `masses` must point to `len` doubles; `out` must be writable.
 */
enum GwStatus gw_weight_from_masses(const struct GwLattice *lattice,
                                    const double *masses,
                                    size_t len,
                                    struct GwWeight **out);

/**
 * Weight read from a CSV file `x1[,x2],mass`; atoms snap to cells.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum GwStatus gw_weight_from_csv(const struct GwLattice *lattice,
                                 const char *path,
                                 struct GwWeight **out);

/**
 * Total mass, or NaN for a null handle.
 *
 * # Safety
 * `weight` must be a live handle or null.
 */
double gw_weight_total(const struct GwWeight *weight);

/**
 * # Safety
 * `weight` must come from a `gw_weight_*` constructor and not be freed twice.
 */
void gw_weight_free(struct GwWeight *weight);

/**
 * All constants of the pair `(sigma, w)`. `config_json` may be null for
 * defaults; its `dim` and `depth` are taken from the weights' lattice.
 *
 * # Safety
 * Handles must be live; `config_json` null or NUL-terminated; `out` writable.
 */
enum GwStatus gw_constants(const char *config_json,
                           const struct GwWeight *sigma,
                           const struct GwWeight *w,
                           struct GwReport **out);

/**
 * Headline numbers of a report.
 *
 * # Safety
 * `report` must be a live handle; `out` writable.
 */
enum GwStatus gw_report_constants(const struct GwReport *report, struct GwConstants *out);

/**
 * Copies the JSON report into `buf`. `*needed` receives the length
 * including the NUL; a short buffer gives `GW_STATUS_BUFFER_TOO_SMALL`
 * and writes nothing.
 *
 * # Safety
 * `buf` null or valid for `len` bytes; `needed` writable.
 */
enum GwStatus gw_report_json(const struct GwReport *report, char *buf, size_t len, size_t *needed);

/**
 * # Safety
 * `report` must come from [`gw_constants`] and not be freed twice.
 */
void gw_report_free(struct GwReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GW_H */
