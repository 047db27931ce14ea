//! Command-line front end. Each command reads the run-config, computes, and
//! returns its tables and report; [`run`] writes them under the output
//! directory and prints the report.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::calibration::{
    fit_sensitivity, fit_sensitivity_weighted, phase_sensitivity_sampled, segment_levels, sensitivity_points,
    DEFAULT_PHASE_STEP,
};
use crate::config::{load_config, parse_config, RunConfig, SweepKey};
use crate::design::{
    compare_schemes, fit_noise_decomposition, optimize_angle, resolution, standard_ceiling, AveragingModel,
    DesignModel, ResolutionPoint,
};
use crate::error::{Error, Result};
use crate::io::{
    binding_from_table, fmt_f64, frame_stack_from_table, frame_stack_table, frame_table, is_frame_stack, read_table,
    sensorgram_from_table, sensorgram_table, CsvTable,
};
use crate::kinetics::{association_constant_molar, fit_langmuir, limit_of_detection};
use crate::noise::{
    analytic_centroid_sigma, monte_carlo_centroid_sigma, simulate_frame_with, stream_rng, subtract_dark,
};
use crate::optics::{dphase_dn, in_inverse_regime, reduce_detuning, tir_phase, Scheme, SchemeParams};
use crate::spectral::{
    centroid_with, shift_series, NegativeCounts, PixelGrid, ReferencePolicy, SampledSource, Segment,
    SpectrumFrame,
};

#[derive(Debug, Clone, Parser)]
#[command(name = "wmsense", version, about = "Weak-measurement TIR refractive-index sensor toolkit")]
pub struct Cli {
    /// Run-config file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// RNG seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Centroid shift over a phase or bias sweep.
    Shift,
    /// Index sensitivity from a staircase sensorgram or frame stack.
    Calibrate {
        /// `time_s,shift_nm` sensorgram or `time_s,<wavelengths...>` frame stack.
        input: PathBuf,
    },
    /// Analytic versus Monte-Carlo centroid noise.
    Noise,
    /// Resolution versus averaging count, with noise decomposition.
    Resolution {
        /// `N,r_RIU` table; a synthetic curve is used when omitted.
        input: Option<PathBuf>,
    },
    /// Incidence angle maximising predicted index sensitivity.
    Optimize,
    /// Langmuir fit and detection limit from a binding curve.
    Kinetics {
        /// `concentration_<unit>,response_nm` table.
        input: PathBuf,
    },
    /// Biased versus standard phase sensitivity over couplings.
    Compare,
    /// Noisy frames (and their sensorgram) for the configured schedule.
    Simulate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Shift => "shift",
            Command::Calibrate { .. } => "calibrate",
            Command::Noise => "noise",
            Command::Resolution { .. } => "resolution",
            Command::Optimize => "optimize",
            Command::Kinetics { .. } => "kinetics",
            Command::Compare => "compare",
            Command::Simulate => "simulate",
        }
    }
}

/// Ordered `key = value` report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn put(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn num(&mut self, key: &str, value: f64) {
        self.put(key, fmt_f64(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self, provenance: &str) -> String {
        let mut out = format!("# {provenance}\n");
        for (k, v) in &self.entries {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// Everything a command produced, before it touches the filesystem.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub command: &'static str,
    pub provenance: String,
    /// `(file name, table)`
    pub tables: Vec<(String, CsvTable)>,
    pub report: Report,
}

/// Resolved run-config plus the values stamped on every output.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Context {
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let (config, bytes) = match &cli.config {
            Some(p) => load_config(p)?,
            None => (parse_config("")?, Vec::new()),
        };
        Ok(Self::new(config, &bytes, cli.seed, cli.out.clone()))
    }

    pub fn new(config: RunConfig, config_bytes: &[u8], seed: Option<u64>, out: Option<PathBuf>) -> Self {
        let digest = Sha256::digest(config_bytes);
        let config_sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        let seed = seed.or(config.seed).unwrap_or(0);
        let out_dir = out
            .or_else(|| config.outputs.dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        Self {
            config,
            config_sha256,
            seed,
            out_dir,
        }
    }

    fn provenance(&self, command: &str) -> String {
        format!("wmsense {command} config_sha256={} seed={}", self.config_sha256, self.seed)
    }
}

/// Run a command without writing anything.
pub fn execute(ctx: &Context, command: &Command) -> Result<CommandOutput> {
    let threads = ctx.config.threads;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    let (tables, report) = pool.install(|| match command {
        Command::Shift => cmd_shift(ctx),
        Command::Calibrate { input } => cmd_calibrate(ctx, input),
        Command::Noise => cmd_noise(ctx),
        Command::Resolution { input } => cmd_resolution(ctx, input.as_deref()),
        Command::Optimize => cmd_optimize(ctx),
        Command::Kinetics { input } => cmd_kinetics(ctx, input),
        Command::Compare => cmd_compare(ctx),
        Command::Simulate => cmd_simulate(ctx),
    })?;
    let provenance = ctx.provenance(command.name());
    Ok(CommandOutput {
        command: command.name(),
        tables: tables
            .into_iter()
            .map(|(name, mut t)| {
                t.comments.insert(0, provenance.clone());
                (name, t)
            })
            .collect(),
        provenance,
        report,
    })
}

/// Write the tables and report of `output` under `dir`; returns the paths.
pub fn write_output(output: &CommandOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for (name, table) in &output.tables {
        let p = dir.join(name);
        std::fs::write(&p, table.render()).map_err(|e| Error::io(&p, e))?;
        paths.push(p);
    }
    let p = dir.join(format!("{}_report.txt", output.command));
    std::fs::write(&p, output.report.render(&output.provenance)).map_err(|e| Error::io(&p, e))?;
    paths.push(p);
    Ok(paths)
}

/// Parse, execute, write and print. Returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = Context::from_cli(cli).and_then(|ctx| {
        let out = execute(&ctx, &cli.command)?;
        let paths = write_output(&out, &ctx.out_dir)?;
        print!("{}", out.report.render(&out.provenance));
        for p in paths {
            println!("# wrote {}", p.display());
        }
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

type Produced = (Vec<(String, CsvTable)>, Report);

fn bool_cell(b: bool) -> String {
    b.to_string()
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 })
        .collect()
}

/// Interface, phase and resolved scheme at the configured angle.
fn operating_point(cfg: &RunConfig) -> Result<(crate::optics::InterfaceParams, f64, SchemeParams)> {
    let iface = cfg.interface()?;
    let phi = tir_phase(&iface)?;
    let scheme = cfg.scheme_at(phi)?;
    Ok((iface, phi, scheme))
}

fn cmd_shift(ctx: &Context) -> Result<Produced> {
    let cfg = &ctx.config;
    let s = &cfg.shift;
    if s.points < 2 {
        return Err(Error::config("shift.points", "need at least 2 points"));
    }
    if !(s.stop_rad > s.start_rad) {
        return Err(Error::config("shift.stop_rad", "must exceed shift.start_rad"));
    }
    let (_, phi0, scheme0) = operating_point(cfg)?;
    if s.sweep == SweepKey::Epsilon && scheme0.variant() == Scheme::Standard {
        return Err(Error::config("shift.sweep", "the standard scheme has no bias to sweep"));
    }
    let source = cfg.source()?;
    let grid = cfg.grid()?;
    let sampled = SampledSource::new(&source, &grid)?;
    let lambda_ref = cfg.lambda_ref()?;
    let sigma_eff = source.gaussian_width();
    let at = |offset: f64| -> (f64, SchemeParams) {
        match s.sweep {
            SweepKey::Phi => (phi0 + offset, scheme0),
            SweepKey::Epsilon => (phi0, scheme0.with_epsilon(scheme0.epsilon() + offset)),
        }
    };
    let centroid_at = |offset: f64| -> Result<f64> {
        let (phi, scheme) = at(offset);
        let f = sampled.render(&scheme, phi, &grid, 1.0)?;
        centroid_with(&f, &grid, NegativeCounts::Clamp)
    };
    let c0 = centroid_at(0.0)?;
    let header = ["sweep_value_rad", "shift_nm", "regime_ok"];
    let mut table = CsvTable::new(header).comment(match s.sweep {
        SweepKey::Phi => "sweep_value_rad is the offset of phi from the operating point",
        SweepKey::Epsilon => "sweep_value_rad is the offset of epsilon from the operating point",
    });
    let offsets = linspace(s.start_rad, s.stop_rad, s.points);
    let rows: Vec<(f64, f64, bool)> = {
        use rayon::prelude::*;
        offsets
            .par_iter()
            .map(|&o| {
                let (phi, scheme) = at(o);
                let d = reduce_detuning(
                    2.0 * scheme.tau() * lambda_ref + phi - 2.0 * scheme.effective_bias(phi, lambda_ref),
                );
                let ok = in_inverse_regime(d, scheme.tau(), sigma_eff, cfg.scheme.regime_ratio);
                Ok((o, centroid_at(o)? - c0, ok))
            })
            .collect::<Result<_>>()?
    };
    for (o, sh, ok) in &rows {
        table.push(vec![fmt_f64(*o), fmt_f64(*sh), bool_cell(*ok)]);
    }
    let s_phi = phase_sensitivity_sampled(&scheme0, phi0, &sampled, &grid, DEFAULT_PHASE_STEP).unwrap_or(f64::NAN);
    let mut r = Report::default();
    r.put("sweep", format!("{:?}", s.sweep).to_lowercase());
    r.put("scheme", format!("{:?}", scheme0.variant()).to_lowercase());
    r.num("tau_rad_per_nm", scheme0.tau());
    r.num("epsilon_rad", scheme0.epsilon());
    r.num("phi_rad", phi0);
    r.num("lambda_ref_nm", lambda_ref);
    r.num("centroid_at_operating_point_nm", c0);
    r.num("phase_sensitivity_nm_per_rad", s_phi);
    r.put("points", rows.len());
    r.put("points_in_regime", rows.iter().filter(|x| x.2).count());
    Ok((vec![("shift.csv".into(), table)], r))
}

fn cmd_calibrate(ctx: &Context, input: &Path) -> Result<Produced> {
    let cfg = &ctx.config;
    let schedule = cfg.schedule()?;
    let settle = cfg.schedule.as_ref().map(|s| s.settle_fraction).unwrap_or_default();
    let model = cfg.calibration_model();
    let t = read_table(input)?;
    let origin = input.display().to_string();
    let sg = if is_frame_stack(&t) {
        let grid = cfg.grid()?;
        let params = cfg.noise_params(ctx.seed)?;
        let frames = frame_stack_from_table(&t, &grid, &origin)?
            .into_iter()
            .map(|f| if f.dark_subtracted { Ok(f) } else { subtract_dark(&f, &params) })
            .collect::<Result<Vec<_>>>()?;
        let segments: Vec<Segment> = schedule
            .levels()
            .iter()
            .map(|l| Segment::new(l.label.clone(), l.start, l.end))
            .collect();
        let first = schedule.levels()[0].label.clone();
        shift_series(&frames, &grid, &ReferencePolicy::Segment(first), &segments)?
    } else {
        sensorgram_from_table(&t, &origin)?
    };
    let stats = segment_levels(&sg, &schedule, settle)?;
    let points = sensitivity_points(&stats, &schedule, &model)?;
    let fit = if cfg.calibration.weighted {
        let sig: Vec<f64> = stats
            .iter()
            .map(|s| s.std_shift / (s.n_samples as f64).sqrt())
            .collect();
        fit_sensitivity_weighted(&points, &sig)?
    } else {
        fit_sensitivity(&points)?
    };
    let mut table = CsvTable::new(["label", "level_value", "n_RIU", "mean_shift_nm", "std_shift_nm", "n_samples"]);
    for (s, p) in stats.iter().zip(&points) {
        table.push(vec![
            s.label.clone(),
            fmt_f64(s.level_value),
            fmt_f64(p.n),
            fmt_f64(s.mean_shift),
            fmt_f64(s.std_shift),
            s.n_samples.to_string(),
        ]);
    }
    let predicted = predicted_chain(cfg).unwrap_or(f64::NAN);
    let mut r = Report::default();
    r.put("levels", stats.len());
    r.put("weighted", cfg.calibration.weighted);
    r.num("s_ri_nm_per_riu", fit.sensitivity_slope);
    r.num("s_ri_stderr_nm_per_riu", fit.slope_stderr);
    r.num("intercept_nm", fit.sensitivity_intercept);
    r.num("r_squared", fit.r_squared);
    r.num("predicted_s_ri_nm_per_riu", predicted);
    Ok((vec![("calibrate_levels.csv".into(), table)], r))
}

/// `|S_phi * dphi/dn|` at the configured operating point.
fn predicted_chain(cfg: &RunConfig) -> Result<f64> {
    let (iface, phi, scheme) = operating_point(cfg)?;
    let source = cfg.source()?;
    let grid = cfg.grid()?;
    let sampled = SampledSource::new(&source, &grid)?;
    let s_phi = phase_sensitivity_sampled(&scheme, phi, &sampled, &grid, DEFAULT_PHASE_STEP)?;
    Ok((s_phi * dphase_dn(&iface)?).abs())
}

fn ideal_frame(cfg: &RunConfig, grid: &PixelGrid, phi: f64, scheme: &SchemeParams) -> Result<SpectrumFrame> {
    let sampled = SampledSource::new(&cfg.source()?, grid)?;
    sampled.render(scheme, phi, grid, cfg.grid.peak_counts)
}

fn cmd_noise(ctx: &Context) -> Result<Produced> {
    let cfg = &ctx.config;
    let (_, phi, scheme) = operating_point(cfg)?;
    let grid = cfg.grid()?;
    let params = cfg.noise_params(ctx.seed)?;
    let ideal = ideal_frame(cfg, &grid, phi, &scheme)?;
    let sigma_s = analytic_centroid_sigma(&ideal, &grid, &params)?;
    if !sigma_s.is_finite() {
        return Err(Error::numerical(
            "analytic centroid noise is not finite; the classical noise model overflows at these counts",
        ));
    }
    let mc = monte_carlo_centroid_sigma(&ideal, &grid, &params, cfg.noise.trials, cfg.negative_counts())?;
    let mut r = Report::default();
    r.put("poisson_variance", format!("{:?}", params.poisson_variance));
    r.put("classical", format!("{:?}", params.classical));
    r.put("negative_counts", format!("{:?}", cfg.negative_counts()));
    r.num("peak_counts", cfg.grid.peak_counts);
    r.num("sigma_s_analytic_nm", sigma_s);
    r.num("sigma_s_monte_carlo_nm", mc.sigma_hat);
    r.num("monte_carlo_standard_error_nm", mc.standard_error);
    r.put("trials", mc.trials);
    let ratio = if sigma_s == 0.0 && mc.sigma_hat == 0.0 {
        1.0
    } else {
        mc.sigma_hat / sigma_s
    };
    r.num("ratio_mc_over_analytic", ratio);
    r.put(
        "within_3_standard_errors",
        (mc.sigma_hat - sigma_s).abs() <= 3.0 * mc.standard_error,
    );
    Ok((Vec::new(), r))
}

fn cmd_resolution(ctx: &Context, input: Option<&Path>) -> Result<Produced> {
    let cfg = &ctx.config;
    let rs = &cfg.resolution;
    let (points, source_label) = match input {
        Some(p) => {
            let t = read_table(p)?;
            (crate::io::resolution_from_table(&t, &p.display().to_string())?, "file")
        }
        None => {
            let truth = AveragingModel::new(rs.sigma_s_nm, rs.sigma_c_nm, rs.s_ri)
                .map_err(|e| Error::config("resolution", e.to_string()))?;
            if !(rs.noise_rel >= 0.0) {
                return Err(Error::config("resolution.noise_rel", "must be >= 0"));
            }
            let mut rng = stream_rng(ctx.seed, 0);
            let pts = rs
                .n_values
                .iter()
                .map(|&n| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let r = resolution(&truth, n).map_err(|e| Error::config("resolution.n_values", e.to_string()))?;
                    Ok(ResolutionPoint {
                        n,
                        r: r * (1.0 + rs.noise_rel * z).max(1e-12),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (pts, "synthetic")
        }
    };
    let dec = fit_noise_decomposition(&points, rs.s_ri)?;
    let mut table = CsvTable::new(["N", "r_RIU", "r_fit_RIU"]);
    for p in &points {
        table.push(vec![p.n.to_string(), fmt_f64(p.r), fmt_f64(resolution(&dec.model, p.n)?)]);
    }
    let mut r = Report::default();
    r.put("data", source_label);
    r.num("s_ri_nm_per_riu", rs.s_ri);
    r.num("sigma_s_nm", dec.model.sigma_s);
    r.num("sigma_c_nm", dec.model.sigma_c);
    r.num("r_1_riu", resolution(&dec.model, 1)?);
    r.num("floor_riu", dec.model.floor());
    r.put("warnings", if dec.warnings.is_empty() { "none".to_string() } else { dec.warnings.join("; ") });
    Ok((vec![("resolution.csv".into(), table)], r))
}

fn cmd_optimize(ctx: &Context) -> Result<Produced> {
    let cfg = &ctx.config;
    let o = &cfg.optimize;
    let (iface, _, scheme) = operating_point(cfg)?;
    let source = cfg.source()?;
    let grid = cfg.grid()?;
    let settings = cfg.angle_search()?;
    let lo = o.theta_min_deg.map(f64::to_radians).unwrap_or(0.0);
    let opt = optimize_angle(iface, scheme, &source, &grid, (lo, o.theta_max_deg.to_radians()), settings)?;
    let mut table = CsvTable::new([
        "theta_deg",
        "S_phi_nm_per_rad",
        "dphi_dn_rad_per_RIU",
        "s_RI_nm_per_RIU",
        "regime_ok",
    ]);
    for p in &opt.sweep {
        table.push(vec![
            fmt_f64(p.theta.to_degrees()),
            fmt_f64(p.predicted_s_phi),
            fmt_f64(p.predicted_dphase_dn),
            fmt_f64(p.predicted_s_ri),
            bool_cell(p.regime_ok),
        ]);
    }
    let b = opt.best;
    let mut r = Report::default();
    r.num("critical_angle_deg", iface.critical_angle()?.to_degrees());
    r.num("range_min_deg", opt.range.0.to_degrees());
    r.num("range_max_deg", opt.range.1.to_degrees());
    r.num("theta_opt_deg", b.theta.to_degrees());
    r.num("tau_rad_per_nm", b.tau);
    r.num("epsilon_rad", b.epsilon);
    r.num("phi_rad", b.phi);
    r.num("s_phi_nm_per_rad", b.predicted_s_phi);
    r.num("dphi_dn_rad_per_riu", b.predicted_dphase_dn);
    r.num("s_ri_nm_per_riu", b.predicted_s_ri);
    r.put("regime_ok", b.regime_ok);
    let model = DesignModel::new(iface, scheme, &source, &grid, settings)?;
    for &deg in &o.probe_angles_deg {
        let key = format!("probe_{}deg_s_ri_nm_per_riu", fmt_f64(deg));
        match model.evaluate(deg.to_radians()) {
            Ok(p) => r.num(&key, p.predicted_s_ri),
            Err(e) => r.put(&key, format!("undefined ({e})")),
        }
    }
    Ok((vec![("optimize_sweep.csv".into(), table)], r))
}

fn cmd_kinetics(ctx: &Context, input: &Path) -> Result<Produced> {
    let cfg = &ctx.config;
    let t = read_table(input)?;
    let points = binding_from_table(&t, &input.display().to_string())?;
    let fit = fit_langmuir(&points)?;
    if !fit.converged {
        return Err(Error::numerical(format!(
            "Langmuir fit did not converge after {} iterations (last r_max = {}, k_a = {})",
            fit.iterations, fit.r_max, fit.k_a
        )));
    }
    let sigma = cfg.kinetics.sigma_blank_nm;
    let lod = limit_of_detection(&fit, sigma)?;
    let mut table = CsvTable::new(["concentration_g_per_mL", "response_nm", "fit_nm"]);
    for p in &points {
        table.push(vec![
            fmt_f64(p.concentration),
            fmt_f64(p.response),
            fmt_f64(fit.response(p.concentration)?),
        ]);
    }
    let mut r = Report::default();
    r.put("points", points.len());
    r.num("r_max_nm", fit.r_max);
    r.num("r_max_stderr_nm", fit.r_max_stderr);
    r.num("k_a_ml_per_g", fit.k_a);
    r.num("k_a_stderr_ml_per_g", fit.k_a_stderr);
    r.num("residual_rms_nm", fit.residual_rms);
    r.put("iterations", fit.iterations);
    r.num("sigma_blank_nm", sigma);
    r.num("lod_g_per_ml", lod);
    r.num("response_at_lod_nm", fit.response(lod)?);
    if let Some(m) = cfg.kinetics.molar_mass_g_per_mol {
        r.num(
            "k_a_per_molar",
            association_constant_molar(fit.k_a, m)
                .map_err(|e| Error::config("kinetics.molar_mass_g_per_mol", e.to_string()))?,
        );
    }
    Ok((vec![("kinetics_fit.csv".into(), table)], r))
}

fn cmd_compare(ctx: &Context) -> Result<Produced> {
    let cfg = &ctx.config;
    let c = &cfg.compare;
    let source = cfg.source()?;
    let grid = cfg.grid()?;
    let ceiling = standard_ceiling(c.lambda0_nm).map_err(|e| Error::config("compare.lambda0_nm", e.to_string()))?;
    let taus = c.taus.clone().unwrap_or_else(|| {
        let tau0 = 1.0 / ceiling;
        vec![5e-5, 1e-4, 2e-4, 5e-4, 1e-3, 1.5e-3, tau0]
    });
    let rows = compare_schemes(&taus, c.lambda0_nm, &source, &grid)?;
    let mut table = CsvTable::new([
        "tau_rad_per_nm",
        "S_biased_nm_per_rad",
        "S_standard_best_nm_per_rad",
        "biased_exceeds",
    ])
    .comment(format!("standard_ceiling_nm_per_rad={}", fmt_f64(ceiling)));
    for row in &rows {
        table.push(vec![
            fmt_f64(row.tau),
            fmt_f64(row.s_biased),
            fmt_f64(row.s_standard_best),
            bool_cell(row.biased_exceeds),
        ]);
    }
    let mut r = Report::default();
    r.num("lambda0_nm", c.lambda0_nm);
    r.num("standard_ceiling_nm_per_rad", ceiling);
    r.num("biased_extinction_nm", source.mean_wavelength());
    r.put("couplings", rows.len());
    r.put("biased_exceeds_count", rows.iter().filter(|x| x.biased_exceeds).count());
    Ok((vec![("compare.csv".into(), table)], r))
}

fn cmd_simulate(ctx: &Context) -> Result<Produced> {
    let cfg = &ctx.config;
    let (iface, phi0, scheme) = operating_point(cfg)?;
    let grid = cfg.grid()?;
    let sampled = SampledSource::new(&cfg.source()?, &grid)?;
    let params = cfg.noise_params(ctx.seed)?;
    let ideal_only = cfg.simulate.ideal;
    let make = |phi: f64, k: u64, t: f64| -> Result<SpectrumFrame> {
        let ideal = sampled.render(&scheme, phi, &grid, cfg.grid.peak_counts)?;
        let mut f = if ideal_only {
            ideal
        } else {
            simulate_frame_with(&ideal, &params, &mut stream_rng(ctx.seed, k))?
        };
        if let Some(level) = cfg.grid.saturation {
            f.saturate(level);
        }
        Ok(f.with_timestamp(t))
    };
    let mut r = Report::default();
    r.put("ideal", ideal_only);
    r.num("phi_rad", phi0);
    r.num("tau_rad_per_nm", scheme.tau());
    r.num("epsilon_rad", scheme.epsilon());
    let Some(_) = cfg.schedule else {
        let f = make(phi0, 0, 0.0)?;
        r.put("frames", 1);
        return Ok((vec![("simulate_frame.csv".into(), frame_table(&f, &grid))], r));
    };
    let schedule = cfg.schedule()?;
    let dt = cfg.simulate.frame_interval_s;
    if !(dt > 0.0) {
        return Err(Error::config("simulate.frame_interval_s", "must be > 0"));
    }
    let indices = schedule.indices(&cfg.calibration_model())?;
    let mut jobs = Vec::new();
    for (level, n2) in schedule.levels().iter().zip(&indices) {
        let phi = tir_phase(&iface.with_n2(*n2))
            .map_err(|e| Error::config("schedule.levels", format!("level `{}`: {e}", level.label)))?;
        let count = ((level.end - level.start) / dt).floor() as usize + 1;
        jobs.extend((0..count).map(|k| (phi, level.start + dt * k as f64)));
    }
    let frames: Vec<SpectrumFrame> = {
        use rayon::prelude::*;
        jobs.par_iter()
            .enumerate()
            .map(|(k, &(phi, t))| make(phi, k as u64, t))
            .collect::<Result<_>>()?
    };
    let segments: Vec<Segment> = schedule
        .levels()
        .iter()
        .map(|l| Segment::new(l.label.clone(), l.start, l.end))
        .collect();
    let subtracted = frames
        .iter()
        .map(|f| if f.dark_subtracted { Ok(f.clone()) } else { subtract_dark(f, &params) })
        .collect::<Result<Vec<_>>>()?;
    let sg = shift_series(
        &subtracted,
        &grid,
        &ReferencePolicy::Segment(schedule.levels()[0].label.clone()),
        &segments,
    )?;
    r.put("frames", frames.len());
    r.put("levels", schedule.levels().len());
    Ok((
        vec![
            ("simulate_frames.csv".into(), frame_stack_table(&frames, &grid)),
            ("simulate_sensorgram.csv".into(), sensorgram_table(&sg)),
        ],
        r,
    ))
}
