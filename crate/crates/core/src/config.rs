//! Run-config file: sectioned `key = value` TOML, parsed strictly.
//!
//! Every section is optional and falls back to the reference instrument.
//! Unknown keys are rejected with their full path.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::calibration::{CalibrationModel, Level, LevelUnit, StepSchedule, DEFAULT_SETTLE_FRACTION};
use crate::design::{bias_for_inverse_regime, AngleSearch};
use crate::error::{Error, Result};
use crate::noise::{ClassicalNoise, NoiseParams, PoissonVariance};
use crate::optics::{standard_branch_tau, InterfaceParams, Scheme, SchemeParams, DEFAULT_REGIME_RATIO};
use crate::spectral::{
    NegativeCounts, PixelGrid, SourceComponent, SourceSpectrum, DEFAULT_LAMBDA_END, DEFAULT_LAMBDA_START,
    DEFAULT_PEAK_COUNTS, DEFAULT_PIXEL_COUNT,
};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Worker threads for Monte-Carlo and sweeps; 0 picks automatically.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub interface: InterfaceSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub noise: NoiseSection,
    pub schedule: Option<ScheduleSection>,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub outputs: OutputsSection,
    #[serde(default)]
    pub shift: ShiftSection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default)]
    pub resolution: ResolutionSection,
    #[serde(default)]
    pub kinetics: KineticsSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterfaceSection {
    pub n1: f64,
    pub n2: f64,
    pub theta_deg: f64,
}

impl Default for InterfaceSection {
    fn default() -> Self {
        Self {
            n1: 1.75,
            n2: 1.3305,
            theta_deg: 50.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auto {
    Auto,
}

/// A number or the keyword `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum AutoOr {
    Value(f64),
    Auto(Auto),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKey {
    Biased,
    Standard,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub variant: VariantKey,
    /// rad/nm, or `"auto"` for the standard branch coupling.
    pub tau: AutoOr,
    /// radians, or `"auto"` to place the extinction point at `lambda0_nm`.
    pub epsilon: AutoOr,
    /// Standard-scheme branch index `m`.
    pub branch: u32,
    /// Reference wavelength; defaults to the source mean wavelength.
    pub lambda0_nm: Option<f64>,
    pub regime_ratio: f64,
}

impl Default for SchemeSection {
    fn default() -> Self {
        Self {
            variant: VariantKey::Biased,
            tau: AutoOr::Value(2e-4),
            epsilon: AutoOr::Auto(Auto::Auto),
            branch: 0,
            lambda0_nm: None,
            regime_ratio: DEFAULT_REGIME_RATIO,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentEntry {
    pub amplitude: f64,
    pub center_nm: f64,
    pub width_nm: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSection {
    pub components: Vec<ComponentEntry>,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            components: SourceSpectrum::measured_sld()
                .components()
                .iter()
                .map(|c| ComponentEntry {
                    amplitude: c.amplitude,
                    center_nm: c.center,
                    width_nm: c.width,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub pixel_count: usize,
    pub lambda_start_nm: f64,
    pub lambda_step_nm: f64,
    pub peak_counts: f64,
    /// Optional clip level, counts.
    pub saturation: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            pixel_count: DEFAULT_PIXEL_COUNT,
            lambda_start_nm: DEFAULT_LAMBDA_START,
            lambda_step_nm: (DEFAULT_LAMBDA_END - DEFAULT_LAMBDA_START) / DEFAULT_PIXEL_COUNT as f64,
            peak_counts: DEFAULT_PEAK_COUNTS,
            saturation: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassicalKey {
    PowerLaw,
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum PoissonKey {
    #[serde(rename = "mean")]
    Mean,
    #[serde(rename = "paper_squared")]
    PaperSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeKey {
    Clamp,
    Keep,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub dark_mean: f64,
    pub dark_sigma: f64,
    pub classical_a: f64,
    pub classical_b: f64,
    pub classical: ClassicalKey,
    pub classical_enabled: bool,
    pub poisson_variance: PoissonKey,
    pub shot_noise: bool,
    /// Monte-Carlo trials for `noise`.
    pub trials: usize,
    /// Treatment of negative dark-subtracted pixels in Monte-Carlo centroids.
    pub negative_counts: NegativeKey,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let p = NoiseParams::default();
        Self {
            dark_mean: p.dark_mean,
            dark_sigma: p.dark_sigma,
            classical_a: p.classical_a,
            classical_b: p.classical_b,
            classical: ClassicalKey::PowerLaw,
            classical_enabled: true,
            poisson_variance: PoissonKey::Mean,
            shot_noise: true,
            trials: 10_000,
            negative_counts: NegativeKey::Keep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum UnitKey {
    #[serde(rename = "nacl_g_per_L")]
    NaclGramsPerLiter,
    #[serde(rename = "ri")]
    RefractiveIndex,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelEntry {
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default = "default_unit")]
    pub unit: UnitKey,
    #[serde(default = "default_settle")]
    pub settle_fraction: f64,
    pub levels: Vec<LevelEntry>,
}

fn default_unit() -> UnitKey {
    UnitKey::NaclGramsPerLiter
}

fn default_settle() -> f64 {
    DEFAULT_SETTLE_FRACTION
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    pub ri_intercept: f64,
    pub ri_slope: f64,
    /// Weight the regression by per-level standard deviations.
    pub weighted: bool,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let m = CalibrationModel::default();
        Self {
            ri_intercept: m.ri_intercept,
            ri_slope: m.ri_slope,
            weighted: false,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputsSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKey {
    Phi,
    Epsilon,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftSection {
    pub sweep: SweepKey,
    /// Offsets from the operating point, radians.
    pub start_rad: f64,
    pub stop_rad: f64,
    pub points: usize,
}

impl Default for ShiftSection {
    fn default() -> Self {
        Self {
            sweep: SweepKey::Phi,
            start_rad: -0.02,
            stop_rad: 0.02,
            points: 201,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeSection {
    /// Defaults to critical angle + margin.
    pub theta_min_deg: Option<f64>,
    pub theta_max_deg: f64,
    pub points: usize,
    pub margin_deg: f64,
    pub tolerance_rad: f64,
    /// Angles whose predicted sensitivity is reported alongside the optimum.
    pub probe_angles_deg: Vec<f64>,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self {
            theta_min_deg: None,
            theta_max_deg: 60.0,
            points: 200,
            margin_deg: 0.3,
            tolerance_rad: 1e-5,
            probe_angles_deg: vec![50.8, 51.9, 54.0],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    /// rad/nm; defaults to a decade sweep ending at the first standard branch.
    pub taus: Option<Vec<f64>>,
    pub lambda0_nm: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            taus: None,
            lambda0_nm: 833.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolutionSection {
    /// nm/RIU
    pub s_ri: f64,
    /// Synthetic curve parameters, used when no input file is given.
    pub sigma_s_nm: f64,
    pub sigma_c_nm: f64,
    pub n_values: Vec<u64>,
    /// Relative (multiplicative) scatter on the synthetic curve.
    pub noise_rel: f64,
}

impl Default for ResolutionSection {
    fn default() -> Self {
        Self {
            s_ri: 13605.0,
            sigma_s_nm: 5.3e-3,
            sigma_c_nm: 2e-3,
            n_values: (0..10).map(|k| 1u64 << k).collect(),
            noise_rel: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KineticsSection {
    pub sigma_blank_nm: f64,
    pub molar_mass_g_per_mol: Option<f64>,
}

impl Default for KineticsSection {
    fn default() -> Self {
        Self {
            sigma_blank_nm: 5.3e-3,
            molar_mass_g_per_mol: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    /// Seconds between frames when following a schedule.
    pub frame_interval_s: f64,
    /// Write expected counts instead of noisy raw frames.
    pub ideal: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            frame_interval_s: 1.0,
            ideal: false,
        }
    }
}

/// Parse a run-config from TOML text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<file>", e.to_string().trim()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<root>".to_string() } else { path }, e.inner().to_string().trim())
    })
}

pub fn load_config(path: &Path) -> Result<(RunConfig, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::config(path.display().to_string(), "not UTF-8"))?;
    Ok((parse_config(text)?, bytes))
}

impl RunConfig {
    pub fn interface(&self) -> Result<InterfaceParams> {
        let s = &self.interface;
        InterfaceParams::new(s.n1, s.n2, s.theta_deg.to_radians()).map_err(|e| Error::config("interface", e.to_string()))
    }

    pub fn source(&self) -> Result<SourceSpectrum> {
        SourceSpectrum::new(
            self.source
                .components
                .iter()
                .map(|c| SourceComponent {
                    amplitude: c.amplitude,
                    center: c.center_nm,
                    width: c.width_nm,
                })
                .collect(),
        )
        .map_err(|e| Error::config("source.components", e.to_string()))
    }

    pub fn grid(&self) -> Result<PixelGrid> {
        let g = &self.grid;
        if !(g.peak_counts > 0.0) {
            return Err(Error::config("grid.peak_counts", "must be > 0"));
        }
        PixelGrid::new(g.pixel_count, g.lambda_start_nm, g.lambda_step_nm).map_err(|e| Error::config("grid", e.to_string()))
    }

    /// Reference wavelength for bias and branch selection.
    pub fn lambda_ref(&self) -> Result<f64> {
        match self.scheme.lambda0_nm {
            Some(l) if l > 0.0 => Ok(l),
            Some(_) => Err(Error::config("scheme.lambda0_nm", "must be > 0")),
            None => Ok(self.source()?.mean_wavelength()),
        }
    }

    /// Scheme at TIR phase `phi`, resolving `"auto"` entries.
    pub fn scheme_at(&self, phi: f64) -> Result<SchemeParams> {
        let s = &self.scheme;
        let lambda_ref = self.lambda_ref()?;
        fn wrap(key: &'static str) -> impl Fn(Error) -> Error {
            move |e| Error::config(format!("scheme.{key}"), e.to_string())
        }
        match s.variant {
            VariantKey::Biased => {
                let AutoOr::Value(tau) = s.tau else {
                    return Err(Error::config("scheme.tau", "\"auto\" is only valid for the standard scheme"));
                };
                let eps = match s.epsilon {
                    AutoOr::Value(e) => e,
                    AutoOr::Auto(_) => bias_for_inverse_regime(tau, lambda_ref, phi),
                };
                SchemeParams::biased(tau, eps).map_err(wrap("tau"))
            }
            VariantKey::Standard => {
                if let AutoOr::Value(e) = s.epsilon {
                    if e != 0.0 {
                        return Err(Error::config("scheme.epsilon", "the standard scheme has no bias; use 0 or \"auto\""));
                    }
                }
                let tau = match s.tau {
                    AutoOr::Value(t) => t,
                    AutoOr::Auto(_) => standard_branch_tau(lambda_ref, s.branch).map_err(wrap("branch"))?,
                };
                SchemeParams::standard(tau).map_err(wrap("tau"))
            }
        }
    }

    pub fn variant(&self) -> Scheme {
        match self.scheme.variant {
            VariantKey::Biased => Scheme::Biased,
            VariantKey::Standard => Scheme::Standard,
        }
    }

    pub fn noise_params(&self, seed: u64) -> Result<NoiseParams> {
        let n = &self.noise;
        let p = NoiseParams {
            dark_mean: n.dark_mean,
            dark_sigma: n.dark_sigma,
            classical_a: n.classical_a,
            classical_b: if n.classical_enabled { n.classical_b } else { f64::NEG_INFINITY },
            classical: match n.classical {
                ClassicalKey::PowerLaw => ClassicalNoise::PowerLaw,
                ClassicalKey::PaperLiteral => ClassicalNoise::PaperLiteral,
            },
            poisson_variance: match n.poisson_variance {
                PoissonKey::Mean => PoissonVariance::MeanCounts,
                PoissonKey::PaperSquared => PoissonVariance::PaperSquared,
            },
            shot_noise: n.shot_noise,
            rng_seed: seed,
        };
        p.validate().map_err(|e| Error::config("noise", e.to_string()))?;
        Ok(p)
    }

    pub fn negative_counts(&self) -> NegativeCounts {
        match self.noise.negative_counts {
            NegativeKey::Clamp => NegativeCounts::Clamp,
            NegativeKey::Keep => NegativeCounts::Keep,
        }
    }

    pub fn calibration_model(&self) -> CalibrationModel {
        CalibrationModel {
            ri_intercept: self.calibration.ri_intercept,
            ri_slope: self.calibration.ri_slope,
            ..CalibrationModel::default()
        }
    }

    pub fn schedule(&self) -> Result<StepSchedule> {
        let s = self
            .schedule
            .as_ref()
            .ok_or_else(|| Error::config("schedule", "this command needs a [schedule] section"))?;
        if !(0.0..1.0).contains(&s.settle_fraction) {
            return Err(Error::config("schedule.settle_fraction", "must lie in [0, 1)"));
        }
        let levels = s
            .levels
            .iter()
            .map(|l| Level {
                label: l.label.clone(),
                start: l.start_s,
                end: l.end_s,
                value: l.value,
            })
            .collect();
        let unit = match s.unit {
            UnitKey::NaclGramsPerLiter => LevelUnit::NaclGramsPerLiter,
            UnitKey::RefractiveIndex => LevelUnit::RefractiveIndex,
        };
        StepSchedule::new(levels, unit).map_err(|e| Error::config("schedule.levels", e.to_string()))
    }

    pub fn angle_search(&self) -> Result<AngleSearch> {
        let o = &self.optimize;
        if o.points < 3 {
            return Err(Error::config("optimize.points", "need at least 3 sweep points"));
        }
        if !(o.tolerance_rad > 0.0) {
            return Err(Error::config("optimize.tolerance_rad", "must be > 0"));
        }
        Ok(AngleSearch {
            coarse_points: o.points,
            tolerance: o.tolerance_rad,
            margin: o.margin_deg.to_radians(),
            lambda_ref: Some(self.lambda_ref()?),
            regime_ratio: self.scheme.regime_ratio,
            ..AngleSearch::default()
        })
    }
}
