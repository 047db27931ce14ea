use std::f64::consts::PI;

use proptest::prelude::*;

use wmsense::calibration::{fit_sensitivity, phase_sensitivity_sampled, SensitivityPoint, DEFAULT_PHASE_STEP};
use wmsense::design::{bias_for_inverse_regime, compare_schemes, resolution, AveragingModel};
use wmsense::kinetics::{fit_langmuir, langmuir_equilibrium, limit_of_detection, BindingPoint};
use wmsense::noise::{analytic_centroid_sigma, NoiseParams};
use wmsense::optics::{
    analytic_shift, critical_angle, dphase_dn, postselected_weight, standard_branch_tau, tir_phase, InterfaceParams, SchemeParams,
};
use wmsense::spectral::{centroid, PixelGrid, SampledSource, SourceSpectrum, SpectrumFrame};

/// Interface strictly inside the TIR range, away from grazing incidence.
fn tir_interface() -> impl Strategy<Value = InterfaceParams> {
    (1.4f64..2.0, 0.5f64..0.95, 0.02f64..0.98).prop_map(|(n1, ratio, frac)| {
        let n2 = n1 * ratio;
        let tc = critical_angle(n1, n2).unwrap();
        let lo = tc + 0.2f64.to_radians();
        let hi = 85f64.to_radians();
        InterfaceParams::new(n1, n2, lo + frac * (hi - lo)).unwrap()
    })
}

fn small_grid() -> PixelGrid {
    PixelGrid::new(800, 780.0, 0.15).unwrap()
}

fn frame_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1000.0, len).prop_filter("needs light", |v| v.iter().sum::<f64>() > 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn phase_derivative_matches_finite_difference(iface in tir_interface()) {
        let h = 1e-7;
        let plus = tir_phase(&iface.with_n2(iface.n2 + h)).unwrap();
        let minus = tir_phase(&iface.with_n2(iface.n2 - h)).unwrap();
        let fd = (plus - minus) / (2.0 * h);
        let an = dphase_dn(&iface).unwrap();
        prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "fd {fd} analytic {an}");
        prop_assert!(an < 0.0);
    }

    #[test]
    fn phase_stays_in_half_turn(iface in tir_interface()) {
        let phi = tir_phase(&iface).unwrap();
        prop_assert!(phi > 0.0 && phi < PI);
    }

    #[test]
    fn weight_is_periodic_in_phase_and_bias(
        tau in 1e-5f64..5e-3,
        eps in -3.0f64..3.0,
        phi in -3.0f64..3.0,
        lambda in 700.0f64..1000.0,
        k in -3i32..3,
    ) {
        let s = SchemeParams::biased(tau, eps).unwrap();
        let w = postselected_weight(&s, phi, lambda, 1.0);
        let w_phi = postselected_weight(&s, phi + 2.0 * PI * k as f64, lambda, 1.0);
        let w_eps = postselected_weight(&s.with_epsilon(eps + PI * k as f64), phi, lambda, 1.0);
        prop_assert!((w - w_phi).abs() < 1e-9);
        prop_assert!((w - w_eps).abs() < 1e-9);
        prop_assert!((0.0..=1.0 + 1e-15).contains(&w));
    }

    #[test]
    fn analytic_shift_is_odd_and_bounded(
        tau in 1e-5f64..2e-3,
        sigma0 in 5.0f64..40.0,
        offset in -0.05f64..0.05,
    ) {
        let lambda0 = 833.0;
        let eps = tau * lambda0;
        let plus = analytic_shift(&SchemeParams::biased(tau, eps).unwrap(), offset, lambda0, sigma0);
        let minus = analytic_shift(&SchemeParams::biased(tau, eps).unwrap(), -offset, lambda0, sigma0);
        prop_assert!((plus.shift + minus.shift).abs() <= 1e-9 * plus.shift.abs().max(1e-12));
        prop_assert!(plus.shift.abs() <= sigma0 / 2f64.sqrt() * (1.0 + 1e-12));
    }

    #[test]
    fn centroid_translates_with_grid_and_ignores_scale(
        counts in frame_strategy(64),
        delta in -50.0f64..50.0,
        scale in 1e-3f64..1e3,
    ) {
        let grid = PixelGrid::new(64, 800.0, 0.5).unwrap();
        let f = SpectrumFrame::new(counts.clone(), true);
        let c = centroid(&f, &grid).unwrap();
        let shifted = centroid(&f, &grid.shifted(delta)).unwrap();
        prop_assert!((shifted - c - delta).abs() < 1e-9);
        let scaled = SpectrumFrame::new(counts.iter().map(|x| x * scale).collect(), true);
        prop_assert!((centroid(&scaled, &grid).unwrap() - c).abs() < 1e-9);
    }

    #[test]
    fn centroid_noise_translates_and_dilates(
        counts in frame_strategy(48),
        delta in -100.0f64..100.0,
        k in 0.1f64..10.0,
    ) {
        let grid = PixelGrid::new(48, 800.0, 0.5).unwrap();
        let f = SpectrumFrame::new(counts, true);
        let p = NoiseParams::default();
        let s = analytic_centroid_sigma(&f, &grid, &p).unwrap();
        let s_t = analytic_centroid_sigma(&f, &grid.shifted(delta), &p).unwrap();
        let dilated = PixelGrid::new(48, 800.0 * k, 0.5 * k).unwrap();
        let s_d = analytic_centroid_sigma(&f, &dilated, &p).unwrap();
        prop_assert!((s_t - s).abs() <= 1e-9 * s);
        prop_assert!((s_d - k * s).abs() <= 1e-9 * k * s);
    }

    #[test]
    fn regression_is_affine_equivariant(
        ys in prop::collection::vec(-10.0f64..10.0, 5),
        a in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
        b in -100.0f64..100.0,
    ) {
        let pts: Vec<SensitivityPoint> = ys
            .iter()
            .enumerate()
            .map(|(i, &y)| SensitivityPoint { n: 1.33 + 1e-4 * i as f64, mean_shift: y })
            .collect();
        let mapped: Vec<SensitivityPoint> = pts
            .iter()
            .map(|p| SensitivityPoint { n: p.n, mean_shift: a * p.mean_shift + b })
            .collect();
        let f = fit_sensitivity(&pts).unwrap();
        let g = fit_sensitivity(&mapped).unwrap();
        let tol = 1e-6 * (1.0 + (a * f.sensitivity_slope).abs());
        prop_assert!((g.sensitivity_slope - a * f.sensitivity_slope).abs() <= tol);
        prop_assert!((g.r_squared - f.r_squared).abs() <= 1e-8);
    }

    #[test]
    fn langmuir_is_monotone_and_concave(
        r_max in 0.01f64..10.0,
        k_a in 1.0f64..1e6,
        c in 1e-9f64..1e-3,
    ) {
        let h = c * 1e-3;
        let r = |x: f64| langmuir_equilibrium(x, r_max, k_a).unwrap();
        prop_assert!(r(c + h) > r(c));
        prop_assert!(r(c + h) - r(c) < r(c) - r(c - h) + 1e-15 * r_max);
        prop_assert!(r(c) < r_max);
    }

    #[test]
    fn detection_limit_grows_with_blank_noise(s1 in 1e-4f64..1e-2, ratio in 1.01f64..3.0) {
        let pts: Vec<BindingPoint> = [1e-6, 2e-6, 4e-6, 8e-6, 16e-6]
            .iter()
            .map(|&c| BindingPoint::new(c, langmuir_equilibrium(c, 0.5, 6553.0).unwrap()))
            .collect();
        let fit = fit_langmuir(&pts).unwrap();
        let l1 = limit_of_detection(&fit, s1).unwrap();
        let l2 = limit_of_detection(&fit, s1 * ratio).unwrap();
        prop_assert!(l2 > l1);
    }

    #[test]
    fn resolution_never_rises_with_averaging(
        sigma_s in 0.0f64..0.1,
        sigma_c in 0.0f64..0.1,
        s_ri in 100.0f64..1e5,
        n in 1u64..100_000,
    ) {
        let m = AveragingModel::new(sigma_s, sigma_c, s_ri).unwrap();
        let a = resolution(&m, n).unwrap();
        let b = resolution(&m, n + 1).unwrap();
        prop_assert!(b <= a);
        prop_assert!(b >= m.floor() * (1.0 - 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn langmuir_fit_scales_with_units(k in 0.1f64..10.0, c_scale in 0.1f64..10.0) {
        let conc = [1e-6, 2e-6, 4e-6, 8e-6, 16e-6, 32e-6];
        let base: Vec<BindingPoint> = conc
            .iter()
            .map(|&c| BindingPoint::new(c, langmuir_equilibrium(c, 0.5, 3e4).unwrap()))
            .collect();
        let f = fit_langmuir(&base).unwrap();
        let scaled: Vec<BindingPoint> = base
            .iter()
            .map(|p| BindingPoint::new(p.concentration * c_scale, p.response * k))
            .collect();
        let g = fit_langmuir(&scaled).unwrap();
        prop_assert!((g.r_max / (k * f.r_max) - 1.0).abs() < 1e-6);
        prop_assert!((g.k_a / (f.k_a / c_scale) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn phase_sensitivity_depends_only_on_detuning(
        tau in 1e-4f64..1e-3,
        phi0 in 0.0f64..2.0,
        delta in -1.0f64..1.0,
    ) {
        // Moving phi and 2 eps together leaves the post-selected spectrum unchanged.
        let grid = small_grid();
        let src = SampledSource::new(&SourceSpectrum::gaussian(840.0, 15.0).unwrap(), &grid).unwrap();
        let eps = bias_for_inverse_regime(tau, 840.0, phi0);
        let a = SchemeParams::biased(tau, eps).unwrap();
        let b = SchemeParams::biased(tau, eps + 0.5 * delta).unwrap();
        let sa = phase_sensitivity_sampled(&a, phi0, &src, &grid, DEFAULT_PHASE_STEP).unwrap();
        let sb = phase_sensitivity_sampled(&b, phi0 + delta, &src, &grid, DEFAULT_PHASE_STEP).unwrap();
        prop_assert!((sa - sb).abs() <= 1e-6 * sa.abs(), "{sa} vs {sb}");
    }

    #[test]
    fn biased_beats_standard_below_first_branch(frac in 0.05f64..0.99) {
        let grid = PixelGrid::default();
        let src = SourceSpectrum::measured_sld();
        let tau0 = standard_branch_tau(833.0, 0).unwrap();
        let rows = compare_schemes(&[frac * tau0], 833.0, &src, &grid).unwrap();
        prop_assert!(rows[0].biased_exceeds, "{:?}", rows[0]);
    }
}
