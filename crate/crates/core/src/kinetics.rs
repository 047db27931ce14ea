//! Langmuir binding: equilibrium model, least-squares fit, detection limit
//! and specificity comparison.
//!
//! Protein concentrations are in g/mL throughout, so `k_a` is in mL/g.

use crate::error::{Error, Result};
use crate::spectral::Sensorgram;

/// Equilibrium response `r_max k_a C / (1 + k_a C)`, nm.
pub fn langmuir_equilibrium(conc: f64, r_max: f64, k_a: f64) -> Result<f64> {
    if !(conc >= 0.0) {
        return Err(Error::domain(format!("concentration must be >= 0, got {conc}")));
    }
    let kc = k_a * conc;
    Ok(r_max * kc / (1.0 + kc))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BindingPoint {
    /// g/mL
    pub concentration: f64,
    /// Equilibrium shift, nm.
    pub response: f64,
}

impl BindingPoint {
    pub fn new(concentration: f64, response: f64) -> Self {
        Self { concentration, response }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangmuirFit {
    /// Saturation shift, nm.
    pub r_max: f64,
    /// Association constant, mL/g.
    pub k_a: f64,
    /// nm
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
    /// From the final linearisation; NaN without residual degrees of freedom.
    pub r_max_stderr: f64,
    pub k_a_stderr: f64,
}

impl LangmuirFit {
    pub fn response(&self, conc: f64) -> Result<f64> {
        langmuir_equilibrium(conc, self.r_max, self.k_a)
    }
}

const MAX_ITERATIONS: usize = 200;
const REL_TOLERANCE: f64 = 1e-8;

/// Least-squares Langmuir fit.
///
/// Starts from the double-reciprocal line `1/R = 1/(r_max k_a) * 1/C +
/// 1/r_max` and refines with Levenberg-Marquardt steps until the relative
/// parameter change drops below 1e-8.
pub fn fit_langmuir(points: &[BindingPoint]) -> Result<LangmuirFit> {
    validate(points)?;
    let (mut r, mut k) = initial_guess(points);
    let mut cost = sum_squares(points, r, k);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_equations(points, r, k);
        let mut accepted = false;
        // inner damping loop: grow lambda until the step lowers the cost
        for _ in 0..60 {
            let a = [
                [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
                [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
            ];
            let Some((dr, dk)) = solve2(a, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let (nr, nk) = (r + dr, k + dk);
            if nk > 0.0 && nr.is_finite() {
                let c = sum_squares(points, nr, nk);
                if c <= cost {
                    let small = (dr / r).abs() < REL_TOLERANCE && (dk / k).abs() < REL_TOLERANCE;
                    r = nr;
                    k = nk;
                    cost = c;
                    lambda = (lambda * 0.1).max(1e-12);
                    accepted = true;
                    converged = small;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left at any damping: stationary point
            converged = cost.is_finite();
            break;
        }
        if converged {
            break;
        }
    }

    let n = points.len() as f64;
    let (jtj, _) = normal_equations(points, r, k);
    let (r_se, k_se) = match invert2(jtj) {
        Some(inv) if n > 2.0 => {
            let s2 = cost / (n - 2.0);
            ((s2 * inv[0][0]).sqrt(), (s2 * inv[1][1]).sqrt())
        }
        _ => (f64::NAN, f64::NAN),
    };
    Ok(LangmuirFit {
        r_max: r,
        k_a: k,
        residual_rms: (cost / n).sqrt(),
        converged: converged && r > 0.0 && k > 0.0,
        iterations,
        r_max_stderr: r_se,
        k_a_stderr: k_se,
    })
}

fn validate(points: &[BindingPoint]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::data("Langmuir fit needs at least 3 points"));
    }
    if points.iter().any(|p| !(p.concentration >= 0.0) || !p.response.is_finite()) {
        return Err(Error::data("binding points need finite responses and concentrations >= 0"));
    }
    let mut nonzero: Vec<f64> = points
        .iter()
        .map(|p| p.concentration)
        .filter(|&c| c > 0.0)
        .collect();
    nonzero.sort_by(f64::total_cmp);
    nonzero.dedup();
    if nonzero.len() < 2 {
        return Err(Error::data("Langmuir fit needs at least 2 distinct nonzero concentrations"));
    }
    let r0 = points[0].response;
    let scale = points.iter().fold(0.0f64, |m, p| m.max(p.response.abs()));
    if scale == 0.0 {
        return Err(Error::data("all responses are zero"));
    }
    if points.iter().all(|p| (p.response - r0).abs() <= 1e-12 * scale) {
        return Err(Error::data(
            "all responses are equal; the association constant is not identifiable",
        ));
    }
    Ok(())
}

fn initial_guess(points: &[BindingPoint]) -> (f64, f64) {
    let recip: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.concentration > 0.0 && p.response > 0.0)
        .map(|p| (1.0 / p.concentration, 1.0 / p.response))
        .collect();
    if recip.len() >= 2 {
        let n = recip.len() as f64;
        let xm = recip.iter().map(|p| p.0).sum::<f64>() / n;
        let ym = recip.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = recip.iter().map(|p| (p.0 - xm).powi(2)).sum();
        let sxy: f64 = recip.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
        if sxx > 0.0 {
            let slope = sxy / sxx;
            let intercept = ym - slope * xm;
            if slope > 0.0 && intercept > 0.0 {
                return (1.0 / intercept, intercept / slope);
            }
        }
    }
    // fallback: saturation just above the largest response, half-saturation
    // at the middle concentration
    let r_top = points.iter().fold(0.0f64, |m, p| m.max(p.response.abs()));
    let mut cs: Vec<f64> = points.iter().map(|p| p.concentration).filter(|&c| c > 0.0).collect();
    cs.sort_by(f64::total_cmp);
    (2.0 * r_top, 1.0 / cs[cs.len() / 2])
}

fn sum_squares(points: &[BindingPoint], r: f64, k: f64) -> f64 {
    points
        .iter()
        .map(|p| {
            let kc = k * p.concentration;
            (p.response - r * kc / (1.0 + kc)).powi(2)
        })
        .sum()
}

/// `J^T J` and `J^T residual` for the model at `(r, k)`.
fn normal_equations(points: &[BindingPoint], r: f64, k: f64) -> ([[f64; 2]; 2], [f64; 2]) {
    let mut jtj = [[0.0; 2]; 2];
    let mut jtr = [0.0; 2];
    for p in points {
        let c = p.concentration;
        let d = 1.0 + k * c;
        let jr = k * c / d;
        let jk = r * c / (d * d);
        let res = p.response - r * jr;
        jtj[0][0] += jr * jr;
        jtj[0][1] += jr * jk;
        jtj[1][1] += jk * jk;
        jtr[0] += jr * res;
        jtr[1] += jk * res;
    }
    jtj[1][0] = jtj[0][1];
    (jtj, jtr)
}

fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> Option<(f64, f64)> {
    let inv = invert2(a)?;
    Some((inv[0][0] * b[0] + inv[0][1] * b[1], inv[1][0] * b[0] + inv[1][1] * b[1]))
}

fn invert2(a: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = (a[0][0] * a[1][1]).abs().max((a[0][1] * a[1][0]).abs());
    if !(det.abs() > 1e-14 * scale) || !det.is_finite() {
        return None;
    }
    Some([
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ])
}

/// Concentration whose fitted equilibrium response equals `3 sigma_blank`.
pub fn limit_of_detection(fit: &LangmuirFit, sigma_blank: f64) -> Result<f64> {
    if !fit.converged {
        return Err(Error::numerical("detection limit needs a converged fit"));
    }
    if !(sigma_blank >= 0.0) {
        return Err(Error::domain("blank standard deviation must be >= 0"));
    }
    let threshold = 3.0 * sigma_blank;
    if threshold >= fit.r_max {
        return Err(Error::domain(format!(
            "3 sigma = {threshold} nm is at or above saturation {} nm; the response never reaches it",
            fit.r_max
        )));
    }
    Ok(threshold / (fit.k_a * (fit.r_max - threshold)))
}

/// Association constant in 1/M for a protein of `molar_mass` g/mol.
pub fn association_constant_molar(k_a: f64, molar_mass: f64) -> Result<f64> {
    if !(molar_mass > 0.0) {
        return Err(Error::domain("molar mass must be > 0"));
    }
    // mL/g * g/mol * 1e-3 L/mL
    Ok(k_a * molar_mass * 1e-3)
}

/// Synthetic association curve `R_eq (1 - exp(-(k_on C + k_off) t))` with
/// `k_off = k_on / k_a`. Only used to generate demo data.
pub fn association_curve(conc: f64, r_max: f64, k_a: f64, k_on: f64, t: f64) -> Result<f64> {
    let r_eq = langmuir_equilibrium(conc, r_max, k_a)?;
    let k_obs = k_on * conc + k_on / k_a;
    Ok(r_eq * (1.0 - (-k_obs * t.max(0.0)).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleKind {
    /// Running buffer only.
    Buffer,
    NonSpecific,
    Specific,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecificityReport {
    /// Mean shift over the end window, nm.
    pub buffer: f64,
    pub nonspecific: f64,
    pub specific: f64,
    /// `specific / nonspecific`; infinite when the nonspecific shift is 0.
    pub ratio: f64,
    /// Set when the ratio could not be formed from a nonzero denominator.
    pub ratio_undefined: bool,
}

/// End-point shifts of buffer, non-specific and specific traces over
/// `window = (start, end)` seconds.
pub fn specificity_report(traces: &[(SampleKind, &Sensorgram)], window: (f64, f64)) -> Result<SpecificityReport> {
    let end_mean = |kind: SampleKind| -> Result<f64> {
        let sg = traces
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, s)| *s)
            .ok_or_else(|| Error::data(format!("missing {kind:?} trace")))?;
        let vals: Vec<f64> = sg.window(window.0, window.1).map(|s| s.shift).collect();
        if vals.is_empty() {
            return Err(Error::data(format!(
                "{kind:?} trace has no samples in [{}, {}]",
                window.0, window.1
            )));
        }
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let buffer = end_mean(SampleKind::Buffer)?;
    let nonspecific = end_mean(SampleKind::NonSpecific)?;
    let specific = end_mean(SampleKind::Specific)?;
    let (ratio, ratio_undefined) = if nonspecific == 0.0 {
        (if specific == 0.0 { f64::NAN } else { f64::INFINITY }, true)
    } else {
        (specific / nonspecific, false)
    };
    Ok(SpecificityReport {
        buffer,
        nonspecific,
        specific,
        ratio,
        ratio_undefined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const BINDING_CONC_UG: [f64; 5] = [0.625, 1.25, 2.5, 5.0, 10.0];

    #[test]
    fn equilibrium_values() {
        assert_eq!(langmuir_equilibrium(0.0, 1.0, 6553.0).unwrap(), 0.0);
        assert_relative_eq!(langmuir_equilibrium(1.0 / 6553.0, 0.8, 6553.0).unwrap(), 0.4, max_relative = 1e-12);
        let r = langmuir_equilibrium(1e-5, 1.0, 6553.0).unwrap();
        assert!((r - 0.0615).abs() < 5e-5);
        assert!(langmuir_equilibrium(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn noise_free_recovery() {
        let pts: Vec<BindingPoint> = BINDING_CONC_UG
            .iter()
            .map(|c| {
                let c = c * 1e-6;
                BindingPoint::new(c, langmuir_equilibrium(c, 1.0, 6553.0).unwrap())
            })
            .collect();
        let fit = fit_langmuir(&pts).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.r_max, 1.0, max_relative = 1e-6);
        assert_relative_eq!(fit.k_a, 6553.0, max_relative = 1e-6);
        for p in &pts {
            assert!((fit.response(p.concentration).unwrap() - p.response).abs() < 1e-9);
        }
    }

    #[test]
    fn saturating_data_recovery() {
        // concentrations spanning the half-saturation point
        let pts: Vec<BindingPoint> = [0.1, 0.3, 1.0, 3.0, 10.0, 30.0]
            .iter()
            .map(|&c| BindingPoint::new(c, langmuir_equilibrium(c, 2.5, 0.7).unwrap()))
            .collect();
        let fit = fit_langmuir(&pts).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.k_a, 0.7, max_relative = 1e-8);
        assert!(fit.residual_rms < 1e-10);
    }

    #[test]
    fn degenerate_inputs() {
        let flat: Vec<BindingPoint> = BINDING_CONC_UG.iter().map(|c| BindingPoint::new(c * 1e-6, 0.3)).collect();
        assert!(fit_langmuir(&flat).is_err());
        let two = [BindingPoint::new(1.0, 1.0), BindingPoint::new(2.0, 1.5)];
        assert!(fit_langmuir(&two).is_err());
        let one_conc = [
            BindingPoint::new(0.0, 0.0),
            BindingPoint::new(2.0, 1.0),
            BindingPoint::new(2.0, 1.1),
        ];
        assert!(fit_langmuir(&one_conc).is_err());
    }

    #[test]
    fn lod_closure_and_special_values() {
        let fit = LangmuirFit {
            r_max: 0.5,
            k_a: 6553.0,
            residual_rms: 0.0,
            converged: true,
            iterations: 1,
            r_max_stderr: 0.0,
            k_a_stderr: 0.0,
        };
        let sigma = 5.3e-3;
        let c = limit_of_detection(&fit, sigma).unwrap();
        let back = fit.response(c).unwrap();
        assert!(((back - 3.0 * sigma) / (3.0 * sigma)).abs() < 1e-12);
        assert_eq!(limit_of_detection(&fit, 0.0).unwrap(), 0.0);
        let half = LangmuirFit { r_max: 6.0 * sigma, ..fit };
        assert_relative_eq!(limit_of_detection(&half, sigma).unwrap(), 1.0 / 6553.0, max_relative = 1e-12);
        assert!(limit_of_detection(&fit, 0.2).is_err());
        assert!(limit_of_detection(&LangmuirFit { converged: false, ..fit }, sigma).is_err());
    }

    #[test]
    fn molar_conversion() {
        let m = association_constant_molar(6553.0, 150_000.0).unwrap();
        assert!((m - 9.83e5).abs() < 1e3);
    }

    #[test]
    fn association_curve_approaches_equilibrium() {
        let eq = langmuir_equilibrium(1e-5, 0.5, 6553.0).unwrap();
        assert_eq!(association_curve(1e-5, 0.5, 6553.0, 1e3, 0.0).unwrap(), 0.0);
        assert!((association_curve(1e-5, 0.5, 6553.0, 1e3, 1e5).unwrap() - eq).abs() < 1e-12);
    }

    fn flat_trace(level: f64) -> Sensorgram {
        Sensorgram::from_pairs((0..100).map(|i| (i as f64, if i < 50 { 0.0 } else { level }))).unwrap()
    }

    #[test]
    fn specificity_ratios() {
        let a = flat_trace(0.2);
        let r = specificity_report(
            &[(SampleKind::Buffer, &a), (SampleKind::NonSpecific, &a), (SampleKind::Specific, &a)],
            (80.0, 99.0),
        )
        .unwrap();
        assert_eq!(r.ratio, 1.0);

        let (pbs, ns, sp) = (flat_trace(0.0), flat_trace(0.01), flat_trace(0.5));
        let r = specificity_report(
            &[(SampleKind::Buffer, &pbs), (SampleKind::NonSpecific, &ns), (SampleKind::Specific, &sp)],
            (80.0, 99.0),
        )
        .unwrap();
        assert_relative_eq!(r.ratio, 50.0, max_relative = 1e-12);

        let r = specificity_report(
            &[(SampleKind::Buffer, &pbs), (SampleKind::NonSpecific, &pbs), (SampleKind::Specific, &sp)],
            (80.0, 99.0),
        )
        .unwrap();
        assert!(r.ratio.is_infinite() && r.ratio_undefined);

        assert!(specificity_report(&[(SampleKind::Buffer, &pbs)], (80.0, 99.0)).is_err());
    }
}
