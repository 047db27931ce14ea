//! C ABI over the `wmsense` core.
//!
//! Every fallible function returns a [`WmsStatus`] and writes its result
//! through an out-pointer. On failure the message is kept per thread and
//! can be read with [`wms_last_error_message`]. Sources, grids and schemes
//! are opaque handles owned by the caller and released with their `_free`
//! function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wmsense::calibration::phase_sensitivity;
use wmsense::design::{bias_for_inverse_regime, resolution, AveragingModel};
use wmsense::kinetics::{fit_langmuir, limit_of_detection, BindingPoint, LangmuirFit};
use wmsense::noise::{analytic_centroid_sigma, ClassicalNoise, NoiseParams, PoissonVariance};
use wmsense::optics::{critical_angle, dphase_dn, tir_phase, InterfaceParams, SchemeParams};
use wmsense::spectral::{centroid, render_ideal_frame, PixelGrid, SourceComponent, SourceSpectrum, SpectrumFrame};
use wmsense::Error;

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WmsStatus {
    Ok = 0,
    /// A parameter is outside the domain of the operation.
    Domain = 1,
    /// The interface is not in total internal reflection.
    NotTir = 2,
    Config = 3,
    /// Input data is malformed or insufficient.
    Data = 4,
    Numerical = 5,
    Io = 6,
    /// A required pointer argument was null.
    NullPointer = 7,
    /// Internal panic caught at the boundary.
    Panic = 8,
}

impl From<&Error> for WmsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => WmsStatus::Domain,
            Error::NotTir { .. } => WmsStatus::NotTir,
            Error::Config { .. } => WmsStatus::Config,
            Error::Data(_) => WmsStatus::Data,
            Error::Numerical(_) => WmsStatus::Numerical,
            Error::Io { .. } => WmsStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(WmsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(WmsStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(WmsStatus::NullPointer, format!("`{what}` is null"))
}

/// Run `f`, recording its error and converting panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> WmsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            WmsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            WmsStatus::Panic
        }
    }
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn in_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or null after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn wms_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wms_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Critical angle in radians.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wms_critical_angle(n1: f64, n2: f64, out: *mut f64) -> WmsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = critical_angle(n1, n2)?;
        Ok(())
    })
}

/// TIR phase difference in radians; `theta` in radians.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wms_tir_phase(n1: f64, n2: f64, theta: f64, out: *mut f64) -> WmsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = tir_phase(&InterfaceParams::new(n1, n2, theta)?)?;
        Ok(())
    })
}

/// Derivative of the TIR phase with respect to `n2`, rad/RIU.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wms_dphase_dn(n1: f64, n2: f64, theta: f64, out: *mut f64) -> WmsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = dphase_dn(&InterfaceParams::new(n1, n2, theta)?)?;
        Ok(())
    })
}

/// Bias placing the extinction point at `lambda0`, in `[0, pi)`.
#[no_mangle]
pub extern "C" fn wms_bias_for_inverse_regime(tau: f64, lambda0: f64, phi: f64) -> f64 {
    bias_for_inverse_regime(tau, lambda0, phi)
}

/// Opaque source spectrum.
pub struct WmsSource(SourceSpectrum);

/// Opaque pixel grid.
pub struct WmsGrid(PixelGrid);

/// Opaque post-selection scheme.
pub struct WmsScheme(SchemeParams);

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// The reference two-component superluminescent-diode spectrum.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wms_source_measured_sld(out: *mut *mut WmsSource) -> WmsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = boxed(WmsSource(SourceSpectrum::measured_sld()));
        Ok(())
    })
}

/// Sum of `n` Gaussians `a exp(-(l - c)^2 / w^2)`.
///
/// # Safety
/// The three arrays must hold `n` readable values; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wms_source_new(
    amplitudes: *const f64,
    centers_nm: *const f64,
    widths_nm: *const f64,
    n: usize,
    out: *mut *mut WmsSource,
) -> WmsStatus {
    guard(|| {
        let a = in_slice(amplitudes, n, "amplitudes")?;
        let c = in_slice(centers_nm, n, "centers_nm")?;
        let w = in_slice(widths_nm, n, "widths_nm")?;
        let out = out_ref(out, "out")?;
        let comps = (0..n)
            .map(|i| SourceComponent {
                amplitude: a[i],
                center: c[i],
                width: w[i],
            })
            .collect();
        *out = boxed(WmsSource(SourceSpectrum::new(comps)?));
        Ok(())
    })
}

/// Intensity-weighted mean wavelength, nm.
///
/// # Safety
/// `source` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wms_source_mean_wavelength(source: *const WmsSource, out: *mut f64) -> WmsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = in_ref(source, "source")?.0.mean_wavelength();
        Ok(())
    })
}

/// # Safety
/// `source` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wms_source_free(source: *mut WmsSource) {
    if !source.is_null() {
        drop(Box::from_raw(source));
    }
}

/// Uniform grid of `pixel_count` pixels from `lambda_start_nm`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wms_grid_new(
    pixel_count: usize,
    lambda_start_nm: f64,
    lambda_step_nm: f64,
    out: *mut *mut WmsGrid,
) -> WmsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = boxed(WmsGrid(PixelGrid::new(pixel_count, lambda_start_nm, lambda_step_nm)?));
        Ok(())
    })
}

/// The reference 3648-pixel grid over 750..950 nm.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wms_grid_default(out: *mut *mut WmsGrid) -> WmsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = boxed(WmsGrid(PixelGrid::default()));
        Ok(())
    })
}

/// Number of pixels, or 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn wms_grid_pixel_count(grid: *const WmsGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.pixel_count)
}

/// # Safety
/// `grid` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wms_grid_free(grid: *mut WmsGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Biased scheme with coupling `tau` (rad/nm) and bias `epsilon` (rad).
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wms_scheme_biased(tau: f64, epsilon: f64, out: *mut *mut WmsScheme) -> WmsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = boxed(WmsScheme(SchemeParams::biased(tau, epsilon)?));
        Ok(())
    })
}

/// Standard (unbiased) scheme with coupling `tau` (rad/nm).
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wms_scheme_standard(tau: f64, out: *mut *mut WmsScheme) -> WmsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = boxed(WmsScheme(SchemeParams::standard(tau)?));
        Ok(())
    })
}

/// # Safety
/// `scheme` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn wms_scheme_free(scheme: *mut WmsScheme) {
    if !scheme.is_null() {
        drop(Box::from_raw(scheme));
    }
}

/// Expected-count post-selected frame with its brightest pixel at
/// `peak_counts`, written into `out_counts[0..len]`; `len` must equal the
/// grid's pixel count.
///
/// # Safety
/// Handles must be live; `out_counts` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn wms_render_frame(
    scheme: *const WmsScheme,
    phi: f64,
    source: *const WmsSource,
    grid: *const WmsGrid,
    peak_counts: f64,
    out_counts: *mut f64,
    len: usize,
) -> WmsStatus {
    guard(|| {
        let scheme = in_ref(scheme, "scheme")?;
        let source = in_ref(source, "source")?;
        let grid = in_ref(grid, "grid")?;
        if out_counts.is_null() {
            return Err(null("out_counts"));
        }
        if len != grid.0.pixel_count {
            return Err(Error::Data(format!("buffer holds {len} values, grid has {}", grid.0.pixel_count)).into());
        }
        let frame = render_ideal_frame(&scheme.0, phi, &source.0, &grid.0, peak_counts)?;
        std::slice::from_raw_parts_mut(out_counts, len).copy_from_slice(&frame.counts);
        Ok(())
    })
}

/// Centroid (nm) of dark-subtracted counts; negative pixels count as zero.
///
/// # Safety
/// `counts` must hold `len` readable values; `grid` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wms_centroid(
    counts: *const f64,
    len: usize,
    grid: *const WmsGrid,
    out: *mut f64,
) -> WmsStatus {
    guard(|| {
        let counts = in_slice(counts, len, "counts")?;
        let grid = in_ref(grid, "grid")?;
        let out = out_ref(out, "out")?;
        *out = centroid(&SpectrumFrame::new(counts.to_vec(), true), &grid.0)?;
        Ok(())
    })
}

/// Numeric centroid slope with respect to the TIR phase, nm/rad.
///
/// # Safety
/// Handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wms_phase_sensitivity(
    scheme: *const WmsScheme,
    phi: f64,
    source: *const WmsSource,
    grid: *const WmsGrid,
    out: *mut f64,
) -> WmsStatus {
    guard(|| {
        let (scheme, source, grid) = (in_ref(scheme, "scheme")?, in_ref(source, "source")?, in_ref(grid, "grid")?);
        let out = out_ref(out, "out")?;
        *out = phase_sensitivity(&scheme.0, phi, &source.0, &grid.0)?;
        Ok(())
    })
}

/// Detector noise parameters. `classical` is 0 for the power law and 1 for
/// the exponential reading; `poisson_variance` is 0 for mean counts and 1
/// for squared mean counts.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmsNoiseParams {
    pub dark_mean: f64,
    pub dark_sigma: f64,
    pub classical_a: f64,
    pub classical_b: f64,
    pub classical: u32,
    pub poisson_variance: u32,
    pub shot_noise: bool,
    pub rng_seed: u64,
}

fn noise_from_c(p: WmsNoiseParams) -> Result<NoiseParams, Failure> {
    {
        let classical = match p.classical {
            0 => ClassicalNoise::PowerLaw,
            1 => ClassicalNoise::PaperLiteral,
            k => return Err(Error::Domain(format!("unknown classical noise selector {k}")).into()),
        };
        let poisson_variance = match p.poisson_variance {
            0 => PoissonVariance::MeanCounts,
            1 => PoissonVariance::PaperSquared,
            k => return Err(Error::Domain(format!("unknown shot-noise selector {k}")).into()),
        };
        let out = NoiseParams {
            dark_mean: p.dark_mean,
            dark_sigma: p.dark_sigma,
            classical_a: p.classical_a,
            classical_b: p.classical_b,
            classical,
            poisson_variance,
            shot_noise: p.shot_noise,
            rng_seed: p.rng_seed,
        };
        out.validate()?;
        Ok(out)
    }
}

/// Reference detector noise parameters.
#[no_mangle]
pub extern "C" fn wms_noise_params_default() -> WmsNoiseParams {
    let p = NoiseParams::default();
    WmsNoiseParams {
        dark_mean: p.dark_mean,
        dark_sigma: p.dark_sigma,
        classical_a: p.classical_a,
        classical_b: p.classical_b,
        classical: 0,
        poisson_variance: 0,
        shot_noise: p.shot_noise,
        rng_seed: p.rng_seed,
    }
}

/// Delta-method centroid standard deviation (nm) for an expected-count frame.
///
/// # Safety
/// `counts` must hold `len` readable values; `grid` and `params` live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wms_analytic_centroid_sigma(
    counts: *const f64,
    len: usize,
    grid: *const WmsGrid,
    params: *const WmsNoiseParams,
    out: *mut f64,
) -> WmsStatus {
    guard(|| {
        let counts = in_slice(counts, len, "counts")?;
        let grid = in_ref(grid, "grid")?;
        let params = noise_from_c(*in_ref(params, "params")?)?;
        let out = out_ref(out, "out")?;
        *out = analytic_centroid_sigma(&SpectrumFrame::new(counts.to_vec(), true), &grid.0, &params)?;
        Ok(())
    })
}

/// Index resolution after averaging `n` acquisitions, RIU.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn wms_resolution(sigma_s: f64, sigma_c: f64, s_ri: f64, n: u64, out: *mut f64) -> WmsStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = resolution(&AveragingModel::new(sigma_s, sigma_c, s_ri)?, n)?;
        Ok(())
    })
}

/// Langmuir fit result; concentrations in g/mL, responses in nm.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmsLangmuirFit {
    pub r_max: f64,
    pub k_a: f64,
    pub residual_rms: f64,
    pub r_max_stderr: f64,
    pub k_a_stderr: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl From<LangmuirFit> for WmsLangmuirFit {
    fn from(f: LangmuirFit) -> Self {
        Self {
            r_max: f.r_max,
            k_a: f.k_a,
            residual_rms: f.residual_rms,
            r_max_stderr: f.r_max_stderr,
            k_a_stderr: f.k_a_stderr,
            iterations: f.iterations,
            converged: f.converged,
        }
    }
}

/// Least-squares Langmuir fit to `n` equilibrium points.
///
/// # Safety
/// Both arrays must hold `n` readable values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wms_fit_langmuir(
    concentrations: *const f64,
    responses: *const f64,
    n: usize,
    out: *mut WmsLangmuirFit,
) -> WmsStatus {
    guard(|| {
        let c = in_slice(concentrations, n, "concentrations")?;
        let r = in_slice(responses, n, "responses")?;
        let out = out_ref(out, "out")?;
        let pts: Vec<BindingPoint> = c.iter().zip(r).map(|(&c, &r)| BindingPoint::new(c, r)).collect();
        *out = fit_langmuir(&pts)?.into();
        Ok(())
    })
}

/// Concentration (g/mL) whose fitted response equals `3 sigma_blank`.
///
/// # Safety
/// `fit` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wms_limit_of_detection(
    fit: *const WmsLangmuirFit,
    sigma_blank: f64,
    out: *mut f64,
) -> WmsStatus {
    guard(|| {
        let f = in_ref(fit, "fit")?;
        let core = LangmuirFit {
            r_max: f.r_max,
            k_a: f.k_a,
            residual_rms: f.residual_rms,
            converged: f.converged,
            iterations: f.iterations,
            r_max_stderr: f.r_max_stderr,
            k_a_stderr: f.k_a_stderr,
        };
        let out = out_ref(out, "out")?;
        *out = limit_of_detection(&core, sigma_blank)?;
        Ok(())
    })
}
