#ifndef MIF_H
#define MIF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MifStatus {
  MIF_STATUS_OK = 0,
  MIF_STATUS_NULL_POINTER = 1,
  MIF_STATUS_INVALID_ARGUMENT = 2,
  MIF_STATUS_CONFIG = 3,
  MIF_STATUS_SIMULATION = 4,
  MIF_STATUS_DATA = 5,
  // Localization requested before a full window of history exists.
  MIF_STATUS_NOT_READY = 6,
  MIF_STATUS_PANIC = 99,
} MifStatus;

// Opaque streaming detector.
typedef struct MifDetector MifDetector;

// One frame's detector output. Entropy fields are 0 while `ready` is false.
typedef struct MifSample {
  bool ready;
  // Normalized dissimilarity, spatial and temporal entropy.
  double h_d;
  double h_s;
  double h_t;
  // Fused statistic H.
  double h;
  // Reference signal H_r.
  double threshold;
  bool alarm;
} MifSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *mif_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *mif_version(void);

// Creates a detector for the 24-cell benchmark pack.
//
// `params_toml` is the text of a calibrated params file, or NULL for the
// shipped tuned params.
//
// # Safety
// `params_toml` must be NULL or a valid NUL-terminated string; `out` must
// be a valid pointer to writable storage.
enum MifStatus mif_detector_new(const char *params_toml, struct MifDetector **out);

// Feeds one frame: `n_temps` cell temperatures (K, by serial) and
// `n_volts` group voltages (V).
//
// # Safety
// `det` must come from `mif_detector_new`; the arrays must hold the given
// counts; `out` must be writable.
enum MifStatus mif_detector_push(struct MifDetector *det,
                                 const double *temps,
                                 size_t n_temps,
                                 const double *volts,
                                 size_t n_volts,
                                 struct MifSample *out);

// Estimated fault cell serial (1-based) from the last W frames.
//
// # Safety
// `det` must come from `mif_detector_new`; `cell` must be writable.
enum MifStatus mif_detector_localize(const struct MifDetector *det, uint32_t *cell);

// Releases a detector. NULL is ignored.
//
// # Safety
// `det` must be NULL or come from `mif_detector_new`, and not be used
// afterwards.
void mif_detector_free(struct MifDetector *det);

// Open-circuit voltage of one cell at `soc` (clamped to [0, 1]).
double mif_ocv_of_soc(double soc);

// Volumetric ISC heat (W/m³) at terminal voltage `v`; NaN for
// non-positive resistance or radius.
double mif_isc_power_density(double v, double r_short, double r_equiv);

// Simulates the scenario config at `config_path` and writes the telemetry
// CSV to `out_path`.
//
// # Safety
// Both arguments must be valid NUL-terminated strings.
enum MifStatus mif_simulate_to_csv(const char *config_path, const char *out_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIF_H */
