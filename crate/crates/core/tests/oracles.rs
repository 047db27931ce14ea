//! Cross-checks of the numeric pipeline against closed forms and against
//! each other.

use wmsense::calibration::{fit_sensitivity, phase_sensitivity, segment_levels, sensitivity_points, StepSchedule};
use wmsense::design::{optimize_angle, AngleSearch, DesignModel};
use wmsense::noise::{
    analytic_centroid_sigma, monte_carlo_centroid_sigma, simulate_frame_with, stream_rng, subtract_dark,
    NoiseParams, PoissonVariance,
};
use wmsense::optics::{analytic_shift, dphase_dn, tir_phase, InterfaceParams, SchemeParams};
use wmsense::spectral::{
    centroid, render_ideal_frame, shift_series, NegativeCounts, PixelGrid, ReferencePolicy, Segment,
    SourceSpectrum,
};
use wmsense::calibration::{CalibrationModel, LevelUnit};

/// Exact centroid offset of `sin^2(tau x + a) exp(-x^2 / s^2)` from the
/// Gaussian centre, by direct Gaussian integration.
fn gaussian_centroid_offset(tau: f64, s: f64, a: f64) -> f64 {
    let e = (-(tau * s).powi(2)).exp();
    tau * s * s * e * (2.0 * a).sin() / (1.0 - e * (2.0 * a).cos())
}

#[test]
fn rendered_centroid_matches_gaussian_integral() {
    let grid = PixelGrid::default();
    let (c, s) = (833.0, 20.0);
    let src = SourceSpectrum::gaussian(c, s).unwrap();
    for tau in [1e-4, 2e-4, 1e-3, 3e-3] {
        for a in [0.001, 0.01, 0.05, 0.3, 1.0, 2.0] {
            // a = tau c + phi/2 - eps with phi = 0
            let scheme = SchemeParams::biased(tau, tau * c - a).unwrap();
            let f = render_ideal_frame(&scheme, 0.0, &src, &grid, 1.0).unwrap();
            let got = centroid(&f, &grid).unwrap() - c;
            let want = gaussian_centroid_offset(tau, s, a);
            assert!((got - want).abs() < 1e-6 * s, "tau {tau} a {a}: {got} vs {want}");
        }
    }
}

#[test]
fn closed_form_shift_agrees_in_the_linear_regime() {
    let grid = PixelGrid::default();
    let (c, s) = (833.0, 20.0);
    let src = SourceSpectrum::gaussian(c, s).unwrap();
    let tau = 2e-4;
    let scheme = SchemeParams::biased(tau, tau * c).unwrap();
    for phi in [-4e-4, -1e-4, 5e-5, 2e-4, 6e-4] {
        let f = render_ideal_frame(&scheme, phi, &src, &grid, 1.0).unwrap();
        let numeric = centroid(&f, &grid).unwrap() - c;
        let closed = analytic_shift(&scheme, phi, c, s);
        assert!(closed.regime_ok);
        assert!((numeric / closed.shift - 1.0).abs() < 0.02, "{phi}: {numeric} vs {}", closed.shift);
    }
}

#[test]
fn shot_noise_scales_as_inverse_root_counts() {
    let grid = PixelGrid::default();
    let src = SourceSpectrum::measured_sld();
    let scheme = SchemeParams::biased(2e-4, 2e-4 * src.mean_wavelength()).unwrap();
    let shot_only = NoiseParams {
        dark_sigma: 0.0,
        classical_b: f64::NEG_INFINITY,
        ..NoiseParams::default()
    };
    let s1 = analytic_centroid_sigma(
        &render_ideal_frame(&scheme, 0.0, &src, &grid, 3000.0).unwrap(),
        &grid,
        &shot_only,
    )
    .unwrap();
    let s4 = analytic_centroid_sigma(
        &render_ideal_frame(&scheme, 0.0, &src, &grid, 12000.0).unwrap(),
        &grid,
        &shot_only,
    )
    .unwrap();
    assert!((s1 / s4 - 2.0).abs() < 1e-9, "{}", s1 / s4);
    // the squared-count reading is independent of brightness
    let sq = NoiseParams {
        poisson_variance: PoissonVariance::PaperSquared,
        ..shot_only
    };
    let q1 = analytic_centroid_sigma(&render_ideal_frame(&scheme, 0.0, &src, &grid, 3000.0).unwrap(), &grid, &sq).unwrap();
    let q4 = analytic_centroid_sigma(&render_ideal_frame(&scheme, 0.0, &src, &grid, 12000.0).unwrap(), &grid, &sq).unwrap();
    assert!((q1 / q4 - 1.0).abs() < 1e-9);
}

#[test]
fn monte_carlo_tracks_analytic_off_the_default_point() {
    let grid = PixelGrid::new(1200, 780.0, 0.1).unwrap();
    let src = SourceSpectrum::gaussian(840.0, 12.0).unwrap();
    let scheme = SchemeParams::biased(5e-4, 5e-4 * 838.0).unwrap();
    let ideal = render_ideal_frame(&scheme, 0.0, &src, &grid, 8000.0).unwrap();
    for (seed, variance) in [(3, PoissonVariance::MeanCounts), (4, PoissonVariance::PaperSquared)] {
        let p = NoiseParams {
            poisson_variance: variance,
            rng_seed: seed,
            ..NoiseParams::default()
        };
        let a = analytic_centroid_sigma(&ideal, &grid, &p).unwrap();
        let mc = monte_carlo_centroid_sigma(&ideal, &grid, &p, 4000, NegativeCounts::Keep).unwrap();
        let z = (mc.sigma_hat - a) / mc.standard_error;
        // the delta method is first order, so allow the squared-count reading a 5% bias
        let ok = z.abs() < 4.0 || (mc.sigma_hat / a - 1.0).abs() < 0.05;
        assert!(ok, "{variance:?}: mc {} analytic {a} z {z}", mc.sigma_hat);
    }
}

#[test]
fn monte_carlo_is_reproducible_and_seed_sensitive() {
    let grid = PixelGrid::new(400, 800.0, 0.2).unwrap();
    let src = SourceSpectrum::gaussian(840.0, 10.0).unwrap();
    let scheme = SchemeParams::biased(1e-3, 0.84).unwrap();
    let ideal = render_ideal_frame(&scheme, 0.0, &src, &grid, 5000.0).unwrap();
    let p = NoiseParams { rng_seed: 11, ..NoiseParams::default() };
    let a = monte_carlo_centroid_sigma(&ideal, &grid, &p, 500, NegativeCounts::Keep).unwrap();
    let b = monte_carlo_centroid_sigma(&ideal, &grid, &p, 500, NegativeCounts::Keep).unwrap();
    assert_eq!(a, b);
    let q = NoiseParams { rng_seed: 12, ..p };
    let c = monte_carlo_centroid_sigma(&ideal, &grid, &q, 500, NegativeCounts::Keep).unwrap();
    assert_ne!(a.sigma_hat, c.sigma_hat);
}

#[test]
fn frame_pipeline_recovers_predicted_index_sensitivity() {
    // staircase of indices rendered as noisy frames, through dark
    // subtraction, centroiding, segmentation and regression
    let grid = PixelGrid::default();
    let src = SourceSpectrum::measured_sld();
    let iface = InterfaceParams::new(1.75, 1.3305, 50.8f64.to_radians()).unwrap();
    let phi0 = tir_phase(&iface).unwrap();
    let tau = 2e-4;
    let scheme = SchemeParams::biased(tau, wmsense::design::bias_for_inverse_regime(tau, src.mean_wavelength(), phi0)).unwrap();
    let schedule = StepSchedule::uniform(&[0.0, 0.25, 0.5, 0.75, 1.0], 20.0, LevelUnit::NaclGramsPerLiter).unwrap();
    let model = CalibrationModel::default();
    let idx = schedule.indices(&model).unwrap();
    let noise = NoiseParams { rng_seed: 5, ..NoiseParams::default() };
    let mut frames = Vec::new();
    let mut k = 0;
    for (level, n2) in schedule.levels().iter().zip(&idx) {
        let phi = tir_phase(&iface.with_n2(*n2)).unwrap();
        let ideal = render_ideal_frame(&scheme, phi, &src, &grid, 12000.0).unwrap();
        for j in 0..20 {
            let raw = simulate_frame_with(&ideal, &noise, &mut stream_rng(noise.rng_seed, k)).unwrap();
            frames.push(subtract_dark(&raw, &noise).unwrap().with_timestamp(level.start + j as f64 * 0.95));
            k += 1;
        }
    }
    let segments: Vec<Segment> = schedule
        .levels()
        .iter()
        .map(|l| Segment::new(l.label.clone(), l.start, l.end))
        .collect();
    let sg = shift_series(&frames, &grid, &ReferencePolicy::Segment("level0".into()), &segments).unwrap();
    let stats = segment_levels(&sg, &schedule, 0.1).unwrap();
    let fit = fit_sensitivity(&sensitivity_points(&stats, &schedule, &model).unwrap()).unwrap();
    let s_phi = phase_sensitivity(&scheme, phi0, &src, &grid).unwrap();
    let predicted = s_phi * dphase_dn(&iface).unwrap();
    assert!((fit.sensitivity_slope / predicted - 1.0).abs() < 0.01, "{} vs {predicted}", fit.sensitivity_slope);
    assert!(fit.r_squared > 0.999);
}

#[test]
fn optimizer_respects_the_critical_margin() {
    let grid = PixelGrid::default();
    let src = SourceSpectrum::measured_sld();
    let iface = InterfaceParams::new(1.75, 1.3305, 50.8f64.to_radians()).unwrap();
    let scheme = SchemeParams::biased(2e-4, 0.3).unwrap();
    let settings = AngleSearch::default();
    let opt = optimize_angle(iface, scheme, &src, &grid, (0.0, 60f64.to_radians()), settings).unwrap();
    let tc = iface.critical_angle().unwrap();
    assert!(opt.best.theta >= tc + settings.margin);
    let model = DesignModel::new(iface, scheme, &src, &grid, settings).unwrap();
    for p in &opt.sweep {
        assert!(p.predicted_s_ri <= opt.best.predicted_s_ri * (1.0 + 1e-9));
        assert_eq!(model.evaluate(p.theta).unwrap(), *p);
    }
}
