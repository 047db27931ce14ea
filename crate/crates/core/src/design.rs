//! Operating-point selection, scheme comparison and resolution modelling.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::calibration::{phase_sensitivity_sampled, DEFAULT_PHASE_STEP};
use crate::error::{Error, Result};
use crate::optics::{
    critical_angle, dphase_dn, in_inverse_regime, reduce_detuning, standard_branch_tau, tir_phase, InterfaceParams, Scheme,
    SchemeParams, DEFAULT_REGIME_RATIO,
};
use crate::spectral::{PixelGrid, SampledSource, SourceSpectrum};

/// Bias that puts the extinction point at `lambda0`, reduced into `[0, pi)`.
pub fn bias_for_inverse_regime(tau: f64, lambda0: f64, phi: f64) -> f64 {
    (tau * lambda0 + 0.5 * phi).rem_euclid(PI)
}

/// A `(theta, tau, epsilon)` triple with its predicted figures of merit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    /// radians
    pub theta: f64,
    /// rad/nm
    pub tau: f64,
    /// radians
    pub epsilon: f64,
    /// TIR phase at this angle, radians.
    pub phi: f64,
    /// nm/rad; NaN when no extinction point falls on the grid.
    pub predicted_s_phi: f64,
    /// rad/RIU
    pub predicted_dphase_dn: f64,
    /// Magnitude of `S_phi * dphi/dn`, nm/RIU.
    pub predicted_s_ri: f64,
    pub regime_ok: bool,
}

impl OperatingPoint {
    fn objective(&self) -> f64 {
        if self.predicted_s_ri.is_finite() {
            self.predicted_s_ri
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Knobs of the angle search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleSearch {
    /// Points of the coarse sweep.
    pub coarse_points: usize,
    /// Bracket width at which golden-section refinement stops, radians.
    pub tolerance: f64,
    /// Exclusion zone above the critical angle, radians.
    pub margin: f64,
    /// Where biased operating points put the extinction point; defaults to
    /// the source's mean wavelength.
    pub lambda_ref: Option<f64>,
    pub phase_step: f64,
    pub regime_ratio: f64,
}

impl Default for AngleSearch {
    fn default() -> Self {
        Self {
            coarse_points: 200,
            tolerance: 1e-5,
            margin: 0.3f64.to_radians(),
            lambda_ref: None,
            phase_step: DEFAULT_PHASE_STEP,
            regime_ratio: DEFAULT_REGIME_RATIO,
        }
    }
}

/// Evaluates operating points for one interface, scheme and source.
#[derive(Debug, Clone)]
pub struct DesignModel<'a> {
    pub iface: InterfaceParams,
    pub scheme: SchemeParams,
    pub grid: &'a PixelGrid,
    sampled: SampledSource,
    lambda_ref: f64,
    sigma_eff: f64,
    settings: AngleSearch,
}

impl<'a> DesignModel<'a> {
    pub fn new(
        iface: InterfaceParams,
        scheme: SchemeParams,
        source: &SourceSpectrum,
        grid: &'a PixelGrid,
        settings: AngleSearch,
    ) -> Result<Self> {
        Ok(Self {
            iface,
            scheme,
            grid,
            sampled: SampledSource::new(source, grid)?,
            lambda_ref: settings.lambda_ref.unwrap_or_else(|| source.mean_wavelength()),
            sigma_eff: source.gaussian_width(),
            settings,
        })
    }

    pub fn lambda_ref(&self) -> f64 {
        self.lambda_ref
    }

    /// Lower end of the admissible angles.
    pub fn feasible_min(&self) -> Result<f64> {
        Ok(critical_angle(self.iface.n1, self.iface.n2)? + self.settings.margin)
    }

    /// Figures of merit at `theta`; biased schemes re-solve the bias so the
    /// extinction point stays at the reference wavelength.
    pub fn evaluate(&self, theta: f64) -> Result<OperatingPoint> {
        let iface = self.iface.with_theta(theta);
        let phi = tir_phase(&iface)?;
        let dphi = dphase_dn(&iface)?;
        let scheme = match self.scheme.variant() {
            Scheme::Biased => self
                .scheme
                .with_epsilon(bias_for_inverse_regime(self.scheme.tau(), self.lambda_ref, phi)),
            Scheme::Standard => self.scheme,
        };
        let s_phi = phase_sensitivity_sampled(&scheme, phi, &self.sampled, self.grid, self.settings.phase_step)
            .unwrap_or(f64::NAN);
        let tau = scheme.tau();
        let eps = scheme.effective_bias(phi, self.lambda_ref);
        let detuning = reduce_detuning(2.0 * tau * self.lambda_ref + phi - 2.0 * eps);
        Ok(OperatingPoint {
            theta,
            tau,
            epsilon: scheme.epsilon(),
            phi,
            predicted_s_phi: s_phi,
            predicted_dphase_dn: dphi,
            predicted_s_ri: (s_phi * dphi).abs(),
            regime_ok: s_phi.is_finite()
                && in_inverse_regime(detuning, tau, self.sigma_eff, self.settings.regime_ratio),
        })
    }

    /// Evenly spaced sweep over `[lo, hi]`, inclusive.
    pub fn sweep(&self, lo: f64, hi: f64, points: usize) -> Result<Vec<OperatingPoint>> {
        if points < 2 {
            return Err(Error::domain("an angle sweep needs at least 2 points"));
        }
        let step = (hi - lo) / (points - 1) as f64;
        (0..points)
            .into_par_iter()
            .map(|k| self.evaluate(if k + 1 == points { hi } else { lo + step * k as f64 }))
            .collect()
    }
}

/// Result of [`optimize_angle`].
#[derive(Debug, Clone, PartialEq)]
pub struct AngleOptimum {
    pub best: OperatingPoint,
    /// The coarse sweep, in angle order.
    pub sweep: Vec<OperatingPoint>,
    /// Swept range actually used, radians.
    pub range: (f64, f64),
}

/// Angle in `theta_range` maximising the predicted index sensitivity.
///
/// A coarse sweep locates the best bracket and golden-section search
/// refines inside it. The returned angle is never below
/// `critical_angle + margin`.
pub fn optimize_angle(
    iface: InterfaceParams,
    scheme: SchemeParams,
    source: &SourceSpectrum,
    grid: &PixelGrid,
    theta_range: (f64, f64),
    settings: AngleSearch,
) -> Result<AngleOptimum> {
    let model = DesignModel::new(iface, scheme, source, grid, settings)?;
    let lo = theta_range.0.max(model.feasible_min()?);
    let hi = theta_range.1.min(std::f64::consts::FRAC_PI_2 - 1e-9);
    if !(hi > lo) {
        return Err(Error::domain(format!(
            "no feasible angle in [{:.4}, {:.4}] deg above critical + margin ({:.4} deg)",
            theta_range.0.to_degrees(),
            theta_range.1.to_degrees(),
            model.feasible_min()?.to_degrees()
        )));
    }
    let sweep = model.sweep(lo, hi, settings.coarse_points.max(3))?;
    let (k_best, _) = sweep
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.objective().total_cmp(&b.1.objective()))
        .expect("non-empty sweep");
    if !sweep[k_best].objective().is_finite() {
        return Err(Error::numerical("sensitivity is undefined over the whole angle range"));
    }
    let a = sweep[k_best.saturating_sub(1)].theta;
    let b = sweep[(k_best + 1).min(sweep.len() - 1)].theta;
    let (theta, _) = golden_section_max(
        |t| model.evaluate(t).map(|p| p.objective()).unwrap_or(f64::NEG_INFINITY),
        a,
        b,
        settings.tolerance,
    );
    // Golden-section never probes the bracket ends, so a maximum on the
    // range boundary is represented by the coarse point itself.
    let refined = model.evaluate(theta)?;
    let best = if sweep[k_best].objective() > refined.objective() {
        sweep[k_best]
    } else {
        refined
    };
    Ok(AngleOptimum {
        best,
        sweep,
        range: (lo, hi),
    })
}

/// Maximum of a unimodal `f` on `[a, b]`; only interior points are
/// evaluated.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// One row of [`compare_schemes`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeComparison {
    pub tau: f64,
    /// Numeric phase sensitivity of the optimally biased scheme, nm/rad.
    pub s_biased: f64,
    /// `1 / tau_0` with `tau_0 = pi / (2 lambda0)`, nm/rad.
    pub s_standard_best: f64,
    pub biased_exceeds: bool,
}

/// Standard-scheme phase-sensitivity ceiling `2 lambda0 / pi`.
pub fn standard_ceiling(lambda0: f64) -> Result<f64> {
    Ok(1.0 / standard_branch_tau(lambda0, 0)?)
}

/// Biased versus best standard phase sensitivity for each coupling.
///
/// The biased scheme puts its extinction point at the source's mean
/// wavelength. The standard scheme is limited to the admissible couplings
/// `(m + 1/2) pi / lambda0`, of which `m = 0` gives the largest sensitivity.
pub fn compare_schemes(
    tau_values: &[f64],
    lambda0: f64,
    source: &SourceSpectrum,
    grid: &PixelGrid,
) -> Result<Vec<SchemeComparison>> {
    let sampled = SampledSource::new(source, grid)?;
    let ceiling = standard_ceiling(lambda0)?;
    let lambda_ext = source.mean_wavelength();
    tau_values
        .par_iter()
        .map(|&tau| {
            let scheme = SchemeParams::biased(tau, bias_for_inverse_regime(tau, lambda_ext, 0.0))?;
            let s_biased = phase_sensitivity_sampled(&scheme, 0.0, &sampled, grid, DEFAULT_PHASE_STEP)?;
            Ok(SchemeComparison {
                tau,
                s_biased,
                s_standard_best: ceiling,
                biased_exceeds: s_biased > ceiling,
            })
        })
        .collect()
}

/// Stochastic and systematic parts of the detection noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragingModel {
    /// Single-shot stochastic noise, nm.
    pub sigma_s: f64,
    /// Averaging-proof floor, nm.
    pub sigma_c: f64,
    /// nm/RIU
    pub s_ri: f64,
}

impl AveragingModel {
    pub fn new(sigma_s: f64, sigma_c: f64, s_ri: f64) -> Result<Self> {
        if !(sigma_s >= 0.0 && sigma_c >= 0.0) {
            return Err(Error::domain("noise components must be >= 0"));
        }
        if !(s_ri > 0.0) {
            return Err(Error::domain("index sensitivity must be > 0"));
        }
        Ok(Self { sigma_s, sigma_c, s_ri })
    }

    /// Resolution floor reached for unlimited averaging, RIU.
    pub fn floor(&self) -> f64 {
        self.sigma_c / self.s_ri
    }
}

/// Index resolution after averaging `n` acquisitions, RIU.
pub fn resolution(model: &AveragingModel, n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("averaging count must be >= 1"));
    }
    Ok((model.sigma_s.powi(2) / n as f64 + model.sigma_c.powi(2)).sqrt() / model.s_ri)
}

/// Measured resolution at one averaging count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionPoint {
    pub n: u64,
    /// RIU
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDecomposition {
    pub model: AveragingModel,
    /// Set when a fitted variance came out negative and was clamped to 0.
    pub warnings: Vec<String>,
}

/// Fit `(r_N s_RI)^2 = sigma_s^2 / N + sigma_c^2`, linear in `1/N`.
///
/// Residuals are taken relative to each observed variance so that every
/// point carries the same weight under multiplicative scatter.
pub fn fit_noise_decomposition(points: &[ResolutionPoint], s_ri: f64) -> Result<NoiseDecomposition> {
    if !(s_ri > 0.0) {
        return Err(Error::domain("index sensitivity must be > 0"));
    }
    if points.iter().any(|p| p.n == 0 || !(p.r > 0.0)) {
        return Err(Error::data("resolution points need N >= 1 and r > 0"));
    }
    let first = points.first().ok_or_else(|| Error::data("no resolution points"))?.n;
    if points.iter().all(|p| p.n == first) {
        return Err(Error::data("noise decomposition needs at least 2 distinct N values"));
    }
    let xs: Vec<f64> = points.iter().map(|p| 1.0 / p.n as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| (p.r * s_ri).powi(2)).collect();
    let ws: Vec<f64> = ys.iter().map(|y| 1.0 / (y * y)).collect();
    let sw: f64 = ws.iter().sum();
    let xm = xs.iter().zip(&ws).map(|(x, w)| w * x).sum::<f64>() / sw;
    let ym = ys.iter().zip(&ws).map(|(y, w)| w * y).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((x, y), w) in xs.iter().zip(&ys).zip(&ws) {
        sxx += w * (x - xm) * (x - xm);
        sxy += w * (x - xm) * (y - ym);
    }
    let mut var_s = sxy / sxx;
    let mut var_c = ym - var_s * xm;
    let mut warnings = Vec::new();
    if var_s < 0.0 {
        warnings.push(format!("fitted stochastic variance {var_s:e} nm^2 clamped to 0"));
        var_s = 0.0;
        // refit the floor alone
        var_c = ym;
    }
    if var_c < 0.0 {
        warnings.push(format!("fitted floor variance {var_c:e} nm^2 clamped to 0"));
        var_c = 0.0;
        let sxx0: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x * x).sum();
        var_s = (xs.iter().zip(&ys).zip(&ws).map(|((x, y), w)| w * x * y).sum::<f64>() / sxx0).max(0.0);
    }
    Ok(NoiseDecomposition {
        model: AveragingModel::new(var_s.sqrt(), var_c.sqrt(), s_ri)?,
        warnings,
    })
}

/// Predicted index sensitivity `|S_phi * dphi/dn|` at a single interface
/// configuration, nm/RIU.
pub fn predicted_ri_sensitivity(
    iface: &InterfaceParams,
    scheme: &SchemeParams,
    source: &SourceSpectrum,
    grid: &PixelGrid,
) -> Result<f64> {
    let phi = tir_phase(iface)?;
    let s_phi = crate::calibration::phase_sensitivity(scheme, phi, source, grid)?;
    Ok((s_phi * dphase_dn(iface)?).abs())
}
