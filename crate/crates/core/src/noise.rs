//! Per-pixel detector noise and its propagation to the centroid.
//!
//! Each raw pixel reads `photoelectrons + dark + classical`, with Poisson
//! photoelectrons, Gaussian dark level `N(k_d, sigma_d)` and a zero-mean
//! Gaussian classical term whose width depends on the expected count. The
//! centroid noise follows from the delta method; a Monte-Carlo estimator
//! checks it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::{centroid_of_counts, NegativeCounts, PixelGrid, SpectrumFrame};

/// Reading of the fitted classical-noise law `ln sigma = a * x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassicalNoise {
    /// `x = ln(n)`, i.e. `sigma = exp(b) * n^a`.
    #[default]
    PowerLaw,
    /// `x = n`, i.e. `sigma = exp(a * n + b)`.
    PaperLiteral,
}

/// Variance assigned to the photoelectron term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoissonVariance {
    /// `n` (Poisson statistics).
    #[default]
    MeanCounts,
    /// `n^2`, kept as a selectable alternative.
    PaperSquared,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    /// Mean dark level `k_d`, counts.
    pub dark_mean: f64,
    /// Dark noise `sigma_d`, counts.
    pub dark_sigma: f64,
    pub classical_a: f64,
    pub classical_b: f64,
    pub classical: ClassicalNoise,
    pub poisson_variance: PoissonVariance,
    /// Include photoelectron noise at all.
    pub shot_noise: bool,
    pub rng_seed: u64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            dark_mean: 1040.0,
            dark_sigma: 4.5,
            classical_a: 0.46,
            classical_b: -1.58,
            classical: ClassicalNoise::PowerLaw,
            poisson_variance: PoissonVariance::MeanCounts,
            shot_noise: true,
            rng_seed: 0,
        }
    }
}

impl NoiseParams {
    /// Every noise source switched off; the dark level is kept.
    pub fn noiseless() -> Self {
        Self {
            dark_sigma: 0.0,
            classical_b: f64::NEG_INFINITY,
            shot_noise: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dark_sigma >= 0.0) || !(self.dark_mean >= 0.0) {
            return Err(Error::domain("dark level and dark sigma must be >= 0"));
        }
        Ok(())
    }

    /// Variance of one raw pixel with expected count `mean`.
    pub fn pixel_variance(&self, mean: f64) -> f64 {
        let shot = if self.shot_noise {
            match self.poisson_variance {
                PoissonVariance::MeanCounts => mean,
                PoissonVariance::PaperSquared => mean * mean,
            }
        } else {
            0.0
        };
        shot + self.dark_sigma * self.dark_sigma + classical_sigma(mean, self).powi(2)
    }
}

/// Width of the classical noise term at expected count `mean`.
pub fn classical_sigma(mean: f64, params: &NoiseParams) -> f64 {
    let (a, b) = (params.classical_a, params.classical_b);
    match params.classical {
        ClassicalNoise::PowerLaw => {
            if mean <= 0.0 {
                0.0
            } else {
                (a * mean.ln() + b).exp()
            }
        }
        ClassicalNoise::PaperLiteral => (a * mean + b).exp(),
    }
}

/// Generator for the `stream`-th independent draw under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Raw noisy frame for the expected counts in `ideal`, seeded from
/// `params.rng_seed`.
pub fn simulate_frame(ideal: &SpectrumFrame, params: &NoiseParams) -> Result<SpectrumFrame> {
    simulate_frame_with(ideal, params, &mut stream_rng(params.rng_seed, 0))
}

pub fn simulate_frame_with<R: Rng + ?Sized>(
    ideal: &SpectrumFrame,
    params: &NoiseParams,
    rng: &mut R,
) -> Result<SpectrumFrame> {
    params.validate()?;
    let mut counts = Vec::with_capacity(ideal.counts.len());
    for &mean in &ideal.counts {
        if !(mean >= 0.0) {
            return Err(Error::data(format!("expected count {mean} is negative")));
        }
        let photo = if !params.shot_noise || mean == 0.0 {
            mean
        } else {
            match params.poisson_variance {
                PoissonVariance::MeanCounts => Poisson::new(mean)
                    .map_err(|e| Error::numerical(format!("poisson({mean}): {e}")))?
                    .sample(rng),
                // Gaussian carrying the literal n^2 variance.
                PoissonVariance::PaperSquared => mean + mean * standard_normal(rng),
            }
        };
        let dark = params.dark_mean + params.dark_sigma * standard_normal(rng);
        let sigma_l = classical_sigma(mean, params);
        if !sigma_l.is_finite() {
            return Err(Error::numerical(format!(
                "classical noise width overflows at {mean} counts"
            )));
        }
        counts.push(photo + dark + sigma_l * standard_normal(rng));
    }
    Ok(SpectrumFrame {
        counts,
        timestamp: ideal.timestamp,
        dark_subtracted: false,
    })
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

pub fn subtract_dark(frame: &SpectrumFrame, params: &NoiseParams) -> Result<SpectrumFrame> {
    if frame.dark_subtracted {
        return Err(Error::data("frame is already dark-subtracted"));
    }
    Ok(SpectrumFrame {
        counts: frame.counts.iter().map(|c| c - params.dark_mean).collect(),
        timestamp: frame.timestamp,
        dark_subtracted: true,
    })
}

/// Inverse of [`subtract_dark`].
pub fn add_dark(frame: &SpectrumFrame, params: &NoiseParams) -> Result<SpectrumFrame> {
    if !frame.dark_subtracted {
        return Err(Error::data("frame still carries its dark level"));
    }
    Ok(SpectrumFrame {
        counts: frame.counts.iter().map(|c| c + params.dark_mean).collect(),
        timestamp: frame.timestamp,
        dark_subtracted: false,
    })
}

/// Algebraic form used for the centroid sensitivity `d(centroid)/d(n_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightForm {
    /// `(lambda_i - centroid) / sum(n)`.
    Centered,
    /// `sum_j n_j (lambda_i - lambda_j) / sum(n)^2`, evaluated pairwise.
    PairwiseSum,
}

/// Per-pixel sensitivities of the centroid to the pixel counts.
pub fn centroid_weights(ideal: &SpectrumFrame, grid: &PixelGrid, form: WeightForm) -> Result<Vec<f64>> {
    let n = &ideal.counts;
    if n.len() != grid.pixel_count {
        return Err(Error::data("frame and grid sizes differ"));
    }
    let total: f64 = n.iter().sum();
    if !(total > 0.0) {
        return Err(Error::data("centroid noise of an empty frame is undefined"));
    }
    let step = grid.lambda_step;
    let w = match form {
        WeightForm::Centered => {
            let mean_index = n.iter().enumerate().map(|(i, c)| i as f64 * c).sum::<f64>() / total;
            (0..n.len())
                .map(|i| step * (i as f64 - mean_index) / total)
                .collect()
        }
        WeightForm::PairwiseSum => {
            let total2 = total * total;
            (0..n.len())
                .map(|i| {
                    let s: f64 = n
                        .iter()
                        .enumerate()
                        .map(|(j, nj)| nj * step * (i as f64 - j as f64))
                        .sum();
                    s / total2
                })
                .collect()
        }
    };
    Ok(w)
}

/// Delta-method standard deviation of the centroid, nm.
pub fn analytic_centroid_sigma(ideal: &SpectrumFrame, grid: &PixelGrid, params: &NoiseParams) -> Result<f64> {
    let w = centroid_weights(ideal, grid, WeightForm::Centered)?;
    let var: f64 = w
        .iter()
        .zip(&ideal.counts)
        .map(|(wi, &ni)| wi * wi * params.pixel_variance(ni))
        .sum();
    if !var.is_finite() {
        return Err(Error::numerical("centroid variance overflows"));
    }
    Ok(var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    /// Sample standard deviation of the centroid, nm.
    pub sigma_hat: f64,
    /// `sigma_hat / sqrt(2 * trials)`.
    pub standard_error: f64,
    pub trials: usize,
}

pub const MIN_TRIALS: usize = 100;

/// Monte-Carlo spread of the centroid of dark-subtracted noisy frames.
///
/// Trial `k` draws from stream `k` of `params.rng_seed`, so the result does
/// not depend on how the trials are scheduled.
pub fn monte_carlo_centroid_sigma(
    ideal: &SpectrumFrame,
    grid: &PixelGrid,
    params: &NoiseParams,
    trials: usize,
    negatives: NegativeCounts,
) -> Result<McEstimate> {
    if trials < MIN_TRIALS {
        return Err(Error::domain(format!(
            "monte carlo needs at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    if ideal.counts.len() != grid.pixel_count {
        return Err(Error::data("frame and grid sizes differ"));
    }
    let centroids = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(params.rng_seed, k as u64);
            let raw = simulate_frame_with(ideal, params, &mut rng)?;
            let frame = subtract_dark(&raw, params)?;
            centroid_of_counts(&frame.counts, grid, negatives)
        })
        .collect::<Result<Vec<f64>>>()?;
    // Shift by the first trial so identical centroids give exactly zero.
    let c0 = centroids[0];
    let mean = centroids.iter().map(|c| c - c0).sum::<f64>() / trials as f64;
    let var = centroids.iter().map(|c| (c - c0 - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let sigma_hat = var.sqrt();
    Ok(McEstimate {
        sigma_hat,
        standard_error: sigma_hat / (2.0 * trials as f64).sqrt(),
        trials,
    })
}
