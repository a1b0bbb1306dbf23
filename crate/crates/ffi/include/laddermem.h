#ifndef LADDERMEM_H
#define LADDERMEM_H

#include <stddef.h>
#include <stdint.h>

typedef enum LmStatus {
  LM_STATUS_OK = 0,
  LM_STATUS_NULL_POINTER = 1,
  LM_STATUS_INVALID_ARGUMENT = 2,
  LM_STATUS_PARSE = 3,
  LM_STATUS_GRID_MISMATCH = 4,
  LM_STATUS_NUMERICAL = 5,
  LM_STATUS_IO = 6,
  LM_STATUS_PANIC = 7,
} LmStatus;

// Opaque time-binned count trace.
typedef struct LmHistogram LmHistogram;

// Opaque Monte-Carlo decay curve.
typedef struct LmMcResult LmMcResult;

// Opaque curve on a uniform detuning grid.
typedef struct LmSpectralCurve LmSpectralCurve;

typedef struct LmSpinwaveParams {
  double eta0;
  double tau_s_ns;
  double tau_bar_ns;
  double t0_ns;
  double a;
  double b;
  double c;
  double d;
  double f23_mhz;
  double f34_mhz;
  double f45_mhz;
} LmSpinwaveParams;

typedef struct LmWindows {
  double read_in_lo_ns;
  double read_in_hi_ns;
  double read_out_lo_ns;
  double read_out_hi_ns;
  double noise_lo_ns;
  double noise_hi_ns;
} LmWindows;

typedef struct LmAnalysis {
  double eta_in;
  double eta_in_err;
  double eta_out;
  double eta_out_err;
  double eta_int;
  double eta_int_err;
  double eta_e2e;
  double eta_e2e_err;
  // Lower bound when `snr_is_lower_bound` is nonzero; `snr_err` is then NaN.
  double snr;
  double snr_err;
  uint8_t snr_is_lower_bound;
} LmAnalysis;

typedef struct LmBenchmark {
  double eta_src;
  double eta_t;
  double eta_p;
  double eta_qd_mem;
  double gamma_hom_qd_mhz;
  double gamma_inhom_mhz;
  double repetition_rate_hz;
  double window_fwhm_mhz;
  // 1 treats the window as a normalized filter (upper bound).
  double window_peak_efficiency;
  double setup_transmission;
  double detector_efficiency;
  double ref_mean_photons;
  double ref_eta_int;
  double ref_snr;
} LmBenchmark;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread, or null. Valid until the
// next failing call on the same thread.
const char *lm_last_error(void);

// Library version as a static NUL-terminated string.
const char *lm_version(void);

// One-dimensional RMS thermal velocity, m/s.
enum LmStatus lm_thermal_velocity(double temperature_k, double atomic_mass_kg, double *out_m_s);

// Cesium number density in a standard cell, m^-3.
enum LmStatus lm_cesium_number_density(double temperature_k, double *out_m3);

// Spinwave wavelength of the cesium counter-propagating ladder, micrometres.
enum LmStatus lm_cesium_spinwave_wavelength_um(double *out_um);

// Gaussian transform-limited linewidth, MHz.
enum LmStatus lm_fourier_limited_linewidth(double pulse_fwhm_ns, double *out_mhz);

// Reference storage-time parameters with cesium hyperfine splittings.
struct LmSpinwaveParams lm_spinwave_reference_params(void);

// Evaluates the storage efficiency at `n` times.
enum LmStatus lm_spinwave_efficiency(const struct LmSpinwaveParams *params,
                                     const double *times_ns,
                                     uintptr_t n,
                                     double *out_eta);

// 1/e time of the oscillation envelope, ns; NaN when never reached.
enum LmStatus lm_spinwave_one_over_e_time(const struct LmSpinwaveParams *params, double *out_ns);

// Parses a histogram CSV document.
enum LmStatus lm_histogram_from_csv(const char *csv, struct LmHistogram **out_handle);

uintptr_t lm_histogram_len(const struct LmHistogram *h);

// Sum of all bins.
uint64_t lm_histogram_total(const struct LmHistogram *h);

void lm_histogram_free(struct LmHistogram *h);

// Windows spanning each peak down to `fraction` of its maximum.
enum LmStatus lm_windows_from_threshold(const struct LmHistogram *signal,
                                        const struct LmHistogram *reference,
                                        double fraction,
                                        struct LmWindows *out_windows);

// Efficiencies and SNR of a signal/reference/noise trio.
enum LmStatus lm_analyze(const struct LmHistogram *signal,
                         const struct LmHistogram *reference,
                         const struct LmHistogram *noise,
                         const struct LmWindows *windows,
                         double setup_transmission,
                         double detector_efficiency,
                         struct LmAnalysis *out_analysis);

// Gaussian of the given FWHM and peak on `len` points starting at `start_mhz`.
enum LmStatus lm_spectral_gaussian(double start_mhz,
                                   double spacing_mhz,
                                   uintptr_t len,
                                   double center_mhz,
                                   double fwhm_mhz,
                                   double peak,
                                   struct LmSpectralCurve **out_handle);

// Curve from `len` samples on a uniform grid.
enum LmStatus lm_spectral_from_values(double start_mhz,
                                      double spacing_mhz,
                                      const double *values,
                                      uintptr_t len,
                                      struct LmSpectralCurve **out_handle);

// Parses a spectral CSV document.
enum LmStatus lm_spectral_from_csv(const char *csv, struct LmSpectralCurve **out_handle);

uintptr_t lm_spectral_len(const struct LmSpectralCurve *c);

// Copies up to `capacity` samples into `buffer`; `out_written` receives the count.
enum LmStatus lm_spectral_values(const struct LmSpectralCurve *c,
                                 double *buffer,
                                 uintptr_t capacity,
                                 uintptr_t *out_written);

enum LmStatus lm_spectral_convolve(const struct LmSpectralCurve *e,
                                   const struct LmSpectralCurve *m,
                                   struct LmSpectralCurve **out_handle);

// Regularized deconvolution of `d` by `e`.
enum LmStatus lm_spectral_deconvolve(const struct LmSpectralCurve *d,
                                     const struct LmSpectralCurve *e,
                                     double epsilon,
                                     struct LmSpectralCurve **out_handle);

// Overlap of acceptance window `m` with photon spectrum `s`.
enum LmStatus lm_expected_efficiency(const struct LmSpectralCurve *m,
                                     const struct LmSpectralCurve *s,
                                     double *out_eta);

// Gaussian fit of a curve; writes FWHM and centre.
enum LmStatus lm_spectral_fit_gaussian(const struct LmSpectralCurve *c,
                                       double *out_fwhm_mhz,
                                       double *out_center_mhz);

void lm_spectral_free(struct LmSpectralCurve *c);

// Single-component decay for the cesium counter-propagating ladder.
// `workers` 0 uses the global thread pool; results do not depend on it.
enum LmStatus lm_mc_simulate(uintptr_t n_atoms,
                             uint64_t seed,
                             double temperature_k,
                             const double *times_ns,
                             uintptr_t n_times,
                             uintptr_t workers,
                             struct LmMcResult **out_handle);

uintptr_t lm_mc_len(const struct LmMcResult *r);

enum LmStatus lm_mc_point(const struct LmMcResult *r,
                          uintptr_t index,
                          double *out_t_ns,
                          double *out_efficiency,
                          double *out_stderr);

void lm_mc_free(struct LmMcResult *r);

// Expected SNR against noise calibrated from a weak-coherent reference run.
enum LmStatus lm_expected_snr(const struct LmBenchmark *b, double *out_snr);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LADDERMEM_H */
