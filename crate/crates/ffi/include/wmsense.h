#ifndef WMSENSE_H
#define WMSENSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call.
 */
typedef enum WmsStatus {
  WMS_STATUS_OK = 0,
  /**
   * A parameter is outside the domain of the operation.
   */
  WMS_STATUS_DOMAIN = 1,
  /**
   * The interface is not in total internal reflection.
   */
  WMS_STATUS_NOT_TIR = 2,
  WMS_STATUS_CONFIG = 3,
  /**
   * Input data is malformed or insufficient.
   */
  WMS_STATUS_DATA = 4,
  WMS_STATUS_NUMERICAL = 5,
  WMS_STATUS_IO = 6,
  /**
   * A required pointer argument was null.
   */
  WMS_STATUS_NULL_POINTER = 7,
  /**
   * Internal panic caught at the boundary.
   */
  WMS_STATUS_PANIC = 8,
} WmsStatus;

/**
 * Opaque pixel grid.
 */
typedef struct WmsGrid WmsGrid;

/**
 * Opaque post-selection scheme.
 */
typedef struct WmsScheme WmsScheme;

/**
 * Opaque source spectrum.
 */
typedef struct WmsSource WmsSource;

/**
 * Detector noise parameters. `classical` is 0 for the power law and 1 for
 * the exponential reading; `poisson_variance` is 0 for mean counts and 1
 * for squared mean counts.
 */
typedef struct WmsNoiseParams {
  double dark_mean;
  double dark_sigma;
  double classical_a;
  double classical_b;
  uint32_t classical;
  uint32_t poisson_variance;
  bool shot_noise;
  uint64_t rng_seed;
} WmsNoiseParams;

/**
 * Langmuir fit result; concentrations in g/mL, responses in nm.
 */
typedef struct WmsLangmuirFit {
  double r_max;
  double k_a;
  double residual_rms;
  double r_max_stderr;
  double k_a_stderr;
  size_t iterations;
  bool converged;
} WmsLangmuirFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a
 * successful call. Valid until the next call on the same thread.
 */
const char *wms_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *wms_version(void);

/**
 * Critical angle in radians.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum WmsStatus wms_critical_angle(double n1, double n2, double *out);

/**
 * TIR phase difference in radians; `theta` in radians.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum WmsStatus wms_tir_phase(double n1, double n2, double theta, double *out);

/**
 * Derivative of the TIR phase with respect to `n2`, rad/RIU.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum WmsStatus wms_dphase_dn(double n1, double n2, double theta, double *out);

/**
 * Bias placing the extinction point at `lambda0`, in `[0, pi)`.
 */
double wms_bias_for_inverse_regime(double tau, double lambda0, double phi);

/**
 * The reference two-component superluminescent-diode spectrum.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum WmsStatus wms_source_measured_sld(struct WmsSource **out);

/**
 * Sum of `n` Gaussians `a exp(-(l - c)^2 / w^2)`.
 *
 * # Safety
 * The three arrays must hold `n` readable values; `out` must be valid for writes.
 */
enum WmsStatus wms_source_new(const double *amplitudes,
                              const double *centers_nm,
                              const double *widths_nm,
                              size_t n,
                              struct WmsSource **out);

/**
 * Intensity-weighted mean wavelength, nm.
 *
 * # Safety
 * `source` must be a live handle and `out` valid for writes.
 */
enum WmsStatus wms_source_mean_wavelength(const struct WmsSource *source, double *out);

/**
 * # Safety
 * `source` must be null or a handle not yet freed.
 */
void wms_source_free(struct WmsSource *source);

/**
 * Uniform grid of `pixel_count` pixels from `lambda_start_nm`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum WmsStatus wms_grid_new(size_t pixel_count,
                            double lambda_start_nm,
                            double lambda_step_nm,
                            struct WmsGrid **out);

/**
 * The reference 3648-pixel grid over 750..950 nm.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum WmsStatus wms_grid_default(struct WmsGrid **out);

/**
 * Number of pixels, or 0 for a null handle.
 *
 * # Safety
 * `grid` must be null or a live handle.
 */
size_t wms_grid_pixel_count(const struct WmsGrid *grid);

/**
 * # Safety
 * `grid` must be null or a handle not yet freed.
 */
void wms_grid_free(struct WmsGrid *grid);

/**
 * Biased scheme with coupling `tau` (rad/nm) and bias `epsilon` (rad).
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum WmsStatus wms_scheme_biased(double tau, double epsilon, struct WmsScheme **out);

/**
 * Standard (unbiased) scheme with coupling `tau` (rad/nm).
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum WmsStatus wms_scheme_standard(double tau, struct WmsScheme **out);

/**
 * # Safety
 * `scheme` must be null or a handle not yet freed.
 */
void wms_scheme_free(struct WmsScheme *scheme);

/**
 * Expected-count post-selected frame with its brightest pixel at
 * `peak_counts`, written into `out_counts[0..len]`; `len` must equal the
 * grid's pixel count.
 *
 * # Safety
 * Handles must be live; `out_counts` must hold `len` writable values.
 */
enum WmsStatus wms_render_frame(const struct WmsScheme *scheme,
                                double phi,
                                const struct WmsSource *source,
                                const struct WmsGrid *grid,
                                double peak_counts,
                                double *out_counts,
                                size_t len);

/**
 * Centroid (nm) of dark-subtracted counts; negative pixels count as zero.
 *
 * # Safety
 * `counts` must hold `len` readable values; `grid` live; `out` writable.
 */
enum WmsStatus wms_centroid(const double *counts,
                            size_t len,
                            const struct WmsGrid *grid,
                            double *out);

/**
 * Numeric centroid slope with respect to the TIR phase, nm/rad.
 *
 * # Safety
 * Handles must be live; `out` writable.
 */
enum WmsStatus wms_phase_sensitivity(const struct WmsScheme *scheme,
                                     double phi,
                                     const struct WmsSource *source,
                                     const struct WmsGrid *grid,
                                     double *out);

/**
 * Reference detector noise parameters.
 */
struct WmsNoiseParams wms_noise_params_default(void);

/**
 * Delta-method centroid standard deviation (nm) for an expected-count frame.
 *
 * # Safety
 * `counts` must hold `len` readable values; `grid` and `params` live; `out` writable.
 */
enum WmsStatus wms_analytic_centroid_sigma(const double *counts,
                                           size_t len,
                                           const struct WmsGrid *grid,
                                           const struct WmsNoiseParams *params,
                                           double *out);

/**
 * Index resolution after averaging `n` acquisitions, RIU.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum WmsStatus wms_resolution(double sigma_s, double sigma_c, double s_ri, uint64_t n, double *out);

/**
 * Least-squares Langmuir fit to `n` equilibrium points.
 *
 * # Safety
 * Both arrays must hold `n` readable values; `out` writable.
 */
enum WmsStatus wms_fit_langmuir(const double *concentrations,
                                const double *responses,
                                size_t n,
                                struct WmsLangmuirFit *out);

/**
 * Concentration (g/mL) whose fitted response equals `3 sigma_blank`.
 *
 * # Safety
 * `fit` must be readable and `out` writable.
 */
enum WmsStatus wms_limit_of_detection(const struct WmsLangmuirFit *fit,
                                      double sigma_blank,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WMSENSE_H */
