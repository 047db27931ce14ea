//! Closed-form optics of the sensing head.
//!
//! Total internal reflection on the prism base imprints a p/s phase
//! difference `phi` that depends on the analyte index. The polarization
//! rotator couples that phase to wavelength with strength `tau` (rad/nm),
//! and post-selection turns it into a spectral weight whose intensity
//! centroid moves with `phi`.
//!
//! Conventions: angles in radians, wavelengths in nm, `tau` in rad/nm. A
//! Gaussian meter of width `sigma0` has the intensity profile
//! `exp(-(lambda - lambda0)^2 / sigma0^2)`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

/// Prism/analyte pair and internal incidence angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceParams {
    /// Prism refractive index.
    pub n1: f64,
    /// Analyte refractive index.
    pub n2: f64,
    /// Internal incidence angle, radians.
    pub theta: f64,
}

impl InterfaceParams {
    pub fn new(n1: f64, n2: f64, theta: f64) -> Result<Self> {
        if !(n2 > 0.0 && n1 > n2) {
            return Err(Error::domain(format!(
                "refractive indices must satisfy n1 > n2 > 0 (n1 = {n1}, n2 = {n2})"
            )));
        }
        if !(theta > 0.0 && theta < FRAC_PI_2) {
            return Err(Error::domain(format!(
                "incidence angle must lie in (0, pi/2), got {theta}"
            )));
        }
        Ok(Self { n1, n2, theta })
    }

    pub fn with_n2(self, n2: f64) -> Self {
        Self { n2, ..self }
    }

    pub fn with_theta(self, theta: f64) -> Self {
        Self { theta, ..self }
    }

    pub fn critical_angle(&self) -> Result<f64> {
        critical_angle(self.n1, self.n2)
    }

    /// True when `sin(theta) >= n2/n1`.
    pub fn is_tir(&self) -> bool {
        self.n1 * self.theta.sin() >= self.n2
    }

    fn check_tir(&self) -> Result<()> {
        if self.is_tir() {
            Ok(())
        } else {
            Err(Error::NotTir {
                sin_theta: self.theta.sin(),
                ratio: self.n2 / self.n1,
            })
        }
    }
}

/// Measurement variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Post-selection with an adjustable bias phase.
    Biased,
    /// Conventional post-selection; bias fixed at zero.
    Standard,
}

/// Coupling strength and post-selection bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    variant: Scheme,
    tau: f64,
    epsilon: f64,
}

impl SchemeParams {
    pub fn biased(tau: f64, epsilon: f64) -> Result<Self> {
        check_tau(tau)?;
        if !epsilon.is_finite() {
            return Err(Error::domain("bias phase must be finite"));
        }
        Ok(Self {
            variant: Scheme::Biased,
            tau,
            epsilon,
        })
    }

    pub fn standard(tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(Self {
            variant: Scheme::Standard,
            tau,
            epsilon: 0.0,
        })
    }

    /// Standard scheme on the admissible coupling `(m + 1/2) pi / lambda0`.
    pub fn standard_at_branch(lambda0: f64, branch: u32) -> Result<Self> {
        Self::standard(standard_branch_tau(lambda0, branch)?)
    }

    pub fn variant(&self) -> Scheme {
        self.variant
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Same scheme with a new bias. Ignored for the standard scheme.
    pub fn with_epsilon(self, epsilon: f64) -> Self {
        match self.variant {
            Scheme::Biased => Self { epsilon, ..self },
            Scheme::Standard => self,
        }
    }

    /// Argument `a` such that the post-selected weight is `sin^2(a)`.
    #[inline]
    pub(crate) fn selection_argument(&self, phi: f64, lambda: f64) -> f64 {
        match self.variant {
            Scheme::Biased => self.tau * lambda + 0.5 * phi - self.epsilon,
            // cos^2(x) = sin^2(x + pi/2)
            Scheme::Standard => self.tau * lambda + 0.5 * phi + FRAC_PI_2,
        }
    }

    /// Bias entering the shift formula. For the standard scheme this is the
    /// `(m + 1/2) pi` branch offset nearest to `tau * lambda0 + phi / 2`.
    pub fn effective_bias(&self, phi: f64, lambda0: f64) -> f64 {
        match self.variant {
            Scheme::Biased => self.epsilon,
            Scheme::Standard => {
                let m = ((self.tau * lambda0 + 0.5 * phi) / PI - 0.5).round();
                (m + 0.5) * PI
            }
        }
    }

    /// Wavelengths within `[lo, hi]` where the post-selected weight vanishes.
    pub fn extinction_points(&self, phi: f64, lo: f64, hi: f64) -> Vec<f64> {
        // selection_argument(lambda) = k pi  =>  lambda = (k pi - offset) / tau
        let offset = self.selection_argument(phi, 0.0);
        let k_lo = ((self.tau * lo + offset) / PI).ceil() as i64;
        let k_hi = ((self.tau * hi + offset) / PI).floor() as i64;
        (k_lo..=k_hi)
            .map(|k| (k as f64 * PI - offset) / self.tau)
            .filter(|l| *l >= lo && *l <= hi)
            .collect()
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("coupling strength must be > 0, got {tau}")))
    }
}

/// Admissible standard-scheme coupling on branch `m`.
pub fn standard_branch_tau(lambda0: f64, branch: u32) -> Result<f64> {
    if !(lambda0 > 0.0) {
        return Err(Error::domain("reference wavelength must be > 0"));
    }
    Ok((branch as f64 + 0.5) * PI / lambda0)
}

/// Critical angle `asin(n2/n1)` in radians.
pub fn critical_angle(n1: f64, n2: f64) -> Result<f64> {
    if !(n2 > 0.0 && n1 > n2) {
        return Err(Error::domain(format!(
            "critical angle needs n1 > n2 > 0 (n1 = {n1}, n2 = {n2})"
        )));
    }
    Ok((n2 / n1).asin())
}

/// Phase difference between p and s on total internal reflection.
pub fn tir_phase(iface: &InterfaceParams) -> Result<f64> {
    iface.check_tir()?;
    let InterfaceParams { n1, n2, theta } = *iface;
    let s = theta.sin();
    let radicand = (n1 * s).powi(2) - n2 * n2;
    // Rounding right at the critical angle can leave a tiny negative.
    let root = radicand.max(0.0).sqrt();
    Ok(2.0 * (root / (n1 * s * theta.tan())).atan())
}

/// Analytic derivative of [`tir_phase`] with respect to the analyte index.
pub fn dphase_dn(iface: &InterfaceParams) -> Result<f64> {
    iface.check_tir()?;
    let InterfaceParams { n1, n2, theta } = *iface;
    let s = theta.sin();
    let radicand = (n1 * s).powi(2) - n2 * n2;
    if !(radicand > 0.0) {
        return Err(Error::domain(
            "phase derivative diverges at the critical angle",
        ));
    }
    let root = radicand.sqrt();
    let denom = n1 * s * theta.tan();
    let g = root / denom;
    let dg = -n2 / (root * denom);
    Ok(2.0 * dg / (1.0 + g * g))
}

/// Post-selected spectral weight at `lambda` given the source intensity there.
#[inline]
pub fn postselected_weight(scheme: &SchemeParams, phi: f64, lambda: f64, intensity: f64) -> f64 {
    scheme.selection_argument(phi, lambda).sin().powi(2) * intensity
}

/// Post-selected spectral weight for a source given as a function.
pub fn postselected_density<F>(scheme: &SchemeParams, phi: f64, lambda: f64, source_psd: F) -> f64
where
    F: Fn(f64) -> f64,
{
    postselected_weight(scheme, phi, lambda, source_psd(lambda))
}

/// Default bound on `|tau lambda0 - eps + phi/2| / (tau sigma0)` for the
/// inverse weak-value regime.
pub const DEFAULT_REGIME_RATIO: f64 = 0.2;

/// Closed-form centroid shift for a single-Gaussian source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticShift {
    /// Centroid shift relative to `lambda0`, nm.
    pub shift: f64,
    /// `2 tau lambda0 + phi - 2 eps` folded into `(-pi, pi]`, radians.
    pub detuning: f64,
    /// Whether the inverse weak-value condition holds.
    pub regime_ok: bool,
}

pub fn analytic_shift(scheme: &SchemeParams, phi: f64, lambda0: f64, sigma0: f64) -> AnalyticShift {
    analytic_shift_with_threshold(scheme, phi, lambda0, sigma0, DEFAULT_REGIME_RATIO)
}

pub fn analytic_shift_with_threshold(
    scheme: &SchemeParams,
    phi: f64,
    lambda0: f64,
    sigma0: f64,
    regime_ratio: f64,
) -> AnalyticShift {
    let tau = scheme.tau();
    let eps = scheme.effective_bias(phi, lambda0);
    let detuning = reduce_detuning(2.0 * tau * lambda0 + phi - 2.0 * eps);
    let ts2 = tau * sigma0 * sigma0;
    let shift = 2.0 * ts2 * detuning / (2.0 * tau * ts2 + detuning * detuning);
    AnalyticShift {
        shift,
        detuning,
        regime_ok: in_inverse_regime(detuning, tau, sigma0, regime_ratio),
    }
}

/// Detuning folded into `(-pi, pi]`. The post-selected weight has period
/// `pi` in `detuning / 2`, so shifting by `2 pi` leaves the spectrum unchanged.
pub fn reduce_detuning(detuning: f64) -> f64 {
    let r = detuning - 2.0 * PI * (detuning / (2.0 * PI)).round();
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// `|detuning / 2| < ratio * tau * sigma0`.
pub fn in_inverse_regime(detuning: f64, tau: f64, sigma0: f64, ratio: f64) -> bool {
    (0.5 * detuning).abs() < ratio * tau * sigma0
}
