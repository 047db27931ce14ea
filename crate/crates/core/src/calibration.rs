//! From sensorgrams to sensitivities: NaCl index line, step segmentation,
//! linear sensitivity regression and numeric phase sensitivity.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::optics::SchemeParams;
use crate::spectral::{
    centroid_of_counts, NegativeCounts, PixelGrid, SampledSource, Sensorgram, ShiftSample, SourceSpectrum,
};

/// NaCl concentration to index line plus a fitted shift-vs-index line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationModel {
    /// RIU
    pub ri_intercept: f64,
    /// RIU per g/L
    pub ri_slope: f64,
    /// nm per RIU
    pub sensitivity_slope: f64,
    /// nm
    pub sensitivity_intercept: f64,
    pub r_squared: f64,
    /// nm per RIU; NaN when the fit has no residual degrees of freedom.
    pub slope_stderr: f64,
}

impl Default for CalibrationModel {
    fn default() -> Self {
        Self {
            ri_intercept: 1.3305,
            ri_slope: 1.471e-4,
            sensitivity_slope: 0.0,
            sensitivity_intercept: 0.0,
            r_squared: 0.0,
            slope_stderr: f64::NAN,
        }
    }
}

/// Refractive index of NaCl solution at `conc` g/L.
pub fn nacl_ri(conc: f64, model: &CalibrationModel) -> Result<f64> {
    if !(conc >= 0.0) {
        return Err(Error::domain(format!("concentration must be >= 0, got {conc}")));
    }
    Ok(model.ri_intercept + model.ri_slope * conc)
}

/// One constant-level interval of an injection sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub label: String,
    pub start: f64,
    pub end: f64,
    /// Concentration or index of this level, per the schedule's unit.
    pub value: f64,
}

/// Unit of [`Level::value`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LevelUnit {
    /// NaCl concentration, g/L.
    #[default]
    NaclGramsPerLiter,
    /// Refractive index, RIU.
    RefractiveIndex,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepSchedule {
    levels: Vec<Level>,
    pub unit: LevelUnit,
}

impl StepSchedule {
    pub fn new(levels: Vec<Level>, unit: LevelUnit) -> Result<Self> {
        for (i, l) in levels.iter().enumerate() {
            if !(l.end > l.start) {
                return Err(Error::data(format!(
                    "level `{}` (#{i}) has end {} <= start {}",
                    l.label, l.end, l.start
                )));
            }
        }
        if let Some(w) = levels.windows(2).find(|w| w[1].start <= w[0].end) {
            return Err(Error::data(format!(
                "levels `{}` and `{}` overlap or are out of order",
                w[0].label, w[1].label
            )));
        }
        Ok(Self { levels, unit })
    }

    /// `count` back-to-back levels of length `duration` starting at t = 0.
    pub fn uniform(values: &[f64], duration: f64, unit: LevelUnit) -> Result<Self> {
        let levels = values
            .iter()
            .enumerate()
            .map(|(i, &value)| Level {
                label: format!("level{i}"),
                start: i as f64 * duration,
                // half-open in practice: leave a gap smaller than any sample spacing
                end: (i + 1) as f64 * duration - duration * 1e-9,
                value,
            })
            .collect();
        Self::new(levels, unit)
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Refractive index of every level.
    pub fn indices(&self, model: &CalibrationModel) -> Result<Vec<f64>> {
        self.levels
            .iter()
            .map(|l| match self.unit {
                LevelUnit::NaclGramsPerLiter => nacl_ri(l.value, model),
                LevelUnit::RefractiveIndex => Ok(l.value),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelStats {
    pub label: String,
    pub level_value: f64,
    /// nm
    pub mean_shift: f64,
    /// Sample standard deviation, nm.
    pub std_shift: f64,
    pub n_samples: usize,
}

/// Fraction of each level discarded at its start.
pub const DEFAULT_SETTLE_FRACTION: f64 = 0.1;

/// Mean and spread of the shift within every level of `schedule`.
pub fn segment_levels(sg: &Sensorgram, schedule: &StepSchedule, settle_fraction: f64) -> Result<Vec<LevelStats>> {
    if !(0.0..1.0).contains(&settle_fraction) {
        return Err(Error::domain("settle fraction must lie in [0, 1)"));
    }
    schedule
        .levels()
        .iter()
        .map(|level| {
            let inside: Vec<f64> = sg.window(level.start, level.end).map(|s| s.shift).collect();
            let skip = (settle_fraction * inside.len() as f64).floor() as usize;
            let kept = &inside[skip..];
            if kept.len() < 2 {
                return Err(Error::data(format!(
                    "level `{}` [{}, {}] has {} usable samples, need at least 2",
                    level.label,
                    level.start,
                    level.end,
                    kept.len()
                )));
            }
            let n = kept.len() as f64;
            let mean = kept.iter().sum::<f64>() / n;
            let var = kept.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Ok(LevelStats {
                label: level.label.clone(),
                level_value: level.value,
                mean_shift: mean,
                std_shift: var.sqrt(),
                n_samples: kept.len(),
            })
        })
        .collect()
}

/// `(index, mean shift)` pair for the regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityPoint {
    /// RIU
    pub n: f64,
    /// nm
    pub mean_shift: f64,
}

/// Ordinary least-squares line `shift = s_RI * n + b`.
pub fn fit_sensitivity(points: &[SensitivityPoint]) -> Result<CalibrationModel> {
    weighted_line(points, None)
}

/// Weighted line with per-point standard deviations `sigmas`.
pub fn fit_sensitivity_weighted(points: &[SensitivityPoint], sigmas: &[f64]) -> Result<CalibrationModel> {
    if sigmas.len() != points.len() {
        return Err(Error::data("one sigma per point is required"));
    }
    if sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::data("weights need strictly positive sigmas"));
    }
    weighted_line(points, Some(sigmas))
}

fn weighted_line(points: &[SensitivityPoint], sigmas: Option<&[f64]>) -> Result<CalibrationModel> {
    if points.len() < 2 {
        return Err(Error::data("sensitivity fit needs at least 2 points"));
    }
    let w: Vec<f64> = match sigmas {
        Some(s) => s.iter().map(|s| 1.0 / (s * s)).collect(),
        None => vec![1.0; points.len()],
    };
    let sw: f64 = w.iter().sum();
    let xm = points.iter().zip(&w).map(|(p, w)| w * p.n).sum::<f64>() / sw;
    let ym = points.iter().zip(&w).map(|(p, w)| w * p.mean_shift).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (p, w) in points.iter().zip(&w) {
        let dx = p.n - xm;
        let dy = p.mean_shift - ym;
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    let spread = points
        .iter()
        .map(|p| (p.n - xm).abs())
        .fold(0.0, f64::max);
    if !(sxx > 0.0) || spread <= 1e-15 * xm.abs() {
        return Err(Error::data("sensitivity fit needs at least 2 distinct index values"));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ssr: f64 = points
        .iter()
        .zip(&w)
        .map(|(p, w)| w * (p.mean_shift - slope * p.n - intercept).powi(2))
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ssr / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let dof = points.len() as f64 - 2.0;
    let slope_stderr = if dof > 0.0 {
        (ssr / dof / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(CalibrationModel {
        sensitivity_slope: slope,
        sensitivity_intercept: intercept,
        r_squared,
        slope_stderr,
        ..CalibrationModel::default()
    })
}

/// Level table to regression points.
pub fn sensitivity_points(
    stats: &[LevelStats],
    schedule: &StepSchedule,
    model: &CalibrationModel,
) -> Result<Vec<SensitivityPoint>> {
    let idx = schedule.indices(model)?;
    Ok(stats
        .iter()
        .zip(idx)
        .map(|(s, n)| SensitivityPoint {
            n,
            mean_shift: s.mean_shift,
        })
        .collect())
}

/// Default finite-difference step in phase, radians.
pub const DEFAULT_PHASE_STEP: f64 = 1e-4;

/// Numeric `d(centroid)/d(phi)` at `phi0`, nm/rad.
pub fn phase_sensitivity(
    scheme: &SchemeParams,
    phi0: f64,
    source: &SourceSpectrum,
    grid: &PixelGrid,
) -> Result<f64> {
    let sampled = SampledSource::new(source, grid)?;
    phase_sensitivity_sampled(scheme, phi0, &sampled, grid, DEFAULT_PHASE_STEP)
}

/// As [`phase_sensitivity`], reusing a pre-sampled source.
pub fn phase_sensitivity_sampled(
    scheme: &SchemeParams,
    phi0: f64,
    source: &SampledSource,
    grid: &PixelGrid,
    step: f64,
) -> Result<f64> {
    if !(step > 0.0) {
        return Err(Error::domain("phase step must be > 0"));
    }
    if scheme
        .extinction_points(phi0, grid.lambda_start, grid.lambda_end())
        .is_empty()
    {
        return Err(Error::domain(format!(
            "no extinction point inside {}..{} nm at phi = {phi0}",
            grid.lambda_start,
            grid.lambda_end()
        )));
    }
    let c = |phi: f64| -> Result<f64> {
        let f = source.render(scheme, phi, grid, 1.0)?;
        centroid_of_counts(&f.counts, grid, NegativeCounts::Clamp)
    };
    Ok((c(phi0 + step)? - c(phi0 - step)?) / (2.0 * step))
}

/// Noisy staircase sensorgram: `samples_per_level` points spread evenly
/// over each level, with true shift `s_ri * (n_level - n_first)`.
pub fn synthetic_staircase<R: Rng + ?Sized>(
    schedule: &StepSchedule,
    model: &CalibrationModel,
    s_ri: f64,
    noise_sigma: f64,
    samples_per_level: usize,
    rng: &mut R,
) -> Result<Sensorgram> {
    let idx = schedule.indices(model)?;
    let n_ref = *idx.first().ok_or_else(|| Error::data("schedule has no levels"))?;
    let normal = Normal::new(0.0, noise_sigma.max(0.0)).map_err(|e| Error::domain(e.to_string()))?;
    let mut samples = Vec::with_capacity(samples_per_level * idx.len());
    for (level, n) in schedule.levels().iter().zip(&idx) {
        let dt = (level.end - level.start) / samples_per_level as f64;
        for k in 0..samples_per_level {
            samples.push(ShiftSample {
                time: level.start + (k as f64 + 0.5) * dt,
                shift: s_ri * (n - n_ref) + normal.sample(rng),
            });
        }
    }
    Sensorgram::new(samples)
}
