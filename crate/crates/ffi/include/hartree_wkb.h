#ifndef HARTREE_WKB_H
#define HARTREE_WKB_H

#include <stddef.h>
#include <stdint.h>

// Status codes; the nonzero solver codes match the CLI exit codes.
typedef enum HwStatus {
  HW_STATUS_OK = 0,
  HW_STATUS_FAILURE = 1,
  HW_STATUS_CONFIG = 2,
  HW_STATUS_GUARD_TRIP = 3,
  HW_STATUS_RESOLUTION = 4,
  HW_STATUS_BLOW_UP = 5,
  HW_STATUS_NULL_POINTER = 6,
  HW_STATUS_INVALID_UTF8 = 7,
  HW_STATUS_BUFFER_TOO_SMALL = 8,
  HW_STATUS_PANIC = 9,
} HwStatus;

typedef struct HwConfig HwConfig;

typedef struct HwField HwField;

typedef struct HwGrid HwGrid;

// Copies the last error message of this thread; returns the size needed
// including the NUL, and writes nothing when `cap` is too small.
//
// # Safety
// `buf` must be null or valid for `cap` bytes.
size_t hw_last_error_message(char *buf, size_t cap);

// # Safety
// `out` must be valid for one pointer write.
enum HwStatus hw_grid_new(size_t dim, size_t points, double box_length, struct HwGrid **out);

// # Safety
// `grid` must be null or a handle from `hw_grid_new`.
void hw_grid_free(struct HwGrid *grid);

// Number of grid points `M^n`.
//
// # Safety
// `grid` must be a live handle.
size_t hw_grid_len(const struct HwGrid *grid);

// Builds a field from `len = 2·M^n` interleaved `(re, im)` values in
// row-major order.
//
// # Safety
// `values` must be valid for `len` reads; `out` for one pointer write.
enum HwStatus hw_field_from_values(const struct HwGrid *grid,
                                   const double *values,
                                   size_t len,
                                   struct HwField **out);

// Copies the field into `len = 2·M^n` interleaved `(re, im)` values.
//
// # Safety
// `buf` must be valid for `len` writes.
enum HwStatus hw_field_values(const struct HwField *field, double *buf, size_t len);

// # Safety
// `field` must be null or a handle from this library.
void hw_field_free(struct HwField *field);

// `|x|^{-γ} ∗ f` on the periodic box.
//
// # Safety
// `field` must be a live handle; `out` valid for one pointer write.
enum HwStatus hw_riesz_potential(const struct HwField *field, double gamma, struct HwField **out);

// Evolves `a₀ e^{iφ₀/ε}` with the split-step solver to `t_final` using step
// `dt`, which must divide `t_final`.
//
// # Safety
// Handles must be live; `out` valid for one pointer write.
enum HwStatus hw_direct_evolve(const struct HwField *amplitude,
                               const struct HwField *phase,
                               double epsilon,
                               double lambda,
                               double gamma,
                               double t_final,
                               double dt,
                               struct HwField **out);

// Parses configuration text; on `HW_STATUS_CONFIG` the message lists
// every violation, one per line.
//
// # Safety
// `text` must be a NUL-terminated string; `out` valid for one pointer write.
enum HwStatus hw_config_parse(const char *text, struct HwConfig **out);

// Canonical text of a configuration; see [`hw_last_error_message`] for the
// buffer convention.
//
// # Safety
// `buf` must be null or valid for `cap` bytes; `needed` null or writable.
enum HwStatus hw_config_canonical(const struct HwConfig *config,
                                  char *buf,
                                  size_t cap,
                                  size_t *needed);

// Runs `subcommand` (as spelled on the command line) and writes outputs to
// `out_dir`. `*exit_code` receives the CLI exit code of the run.
//
// # Safety
// Strings must be NUL-terminated; `exit_code` null or writable.
enum HwStatus hw_run(const struct HwConfig *config,
                     const char *subcommand,
                     const char *out_dir,
                     int32_t *exit_code);

// # Safety
// `config` must be null or a handle from `hw_config_parse`.
void hw_config_free(struct HwConfig *config);

#endif  /* HARTREE_WKB_H */
