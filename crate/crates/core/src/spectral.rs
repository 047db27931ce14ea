//! Light sources, the CCD pixel grid, ideal frame synthesis, and centroid
//! read-out.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::optics::{postselected_weight, SchemeParams};

/// One Gaussian band of a source. The intensity contribution is
/// `amplitude * exp(-(lambda - center)^2 / width^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceComponent {
    pub amplitude: f64,
    /// nm
    pub center: f64,
    /// nm
    pub width: f64,
}

/// Source intensity spectrum as a sum of Gaussian bands.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpectrum {
    components: Vec<SourceComponent>,
}

impl SourceSpectrum {
    pub fn new(components: Vec<SourceComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::domain("source needs at least one component"));
        }
        for (i, c) in components.iter().enumerate() {
            if !(c.amplitude > 0.0 && c.width > 0.0 && c.center.is_finite()) {
                return Err(Error::domain(format!(
                    "source component {i}: amplitude and width must be > 0"
                )));
            }
        }
        Ok(Self { components })
    }

    pub fn gaussian(center: f64, width: f64) -> Result<Self> {
        Self::new(vec![SourceComponent {
            amplitude: 1.0,
            center,
            width,
        }])
    }

    /// Two-band fit of the superluminescent diode used on the reference
    /// instrument (bands at 821.1 nm and 845.8 nm).
    pub fn measured_sld() -> Self {
        Self {
            components: vec![
                SourceComponent {
                    amplitude: 1.0,
                    center: 821.1,
                    width: 7.55,
                },
                SourceComponent {
                    amplitude: 1.035,
                    center: 845.8,
                    width: 19.58,
                },
            ],
        }
    }

    pub fn components(&self) -> &[SourceComponent] {
        &self.components
    }

    /// Spectral intensity at `lambda`.
    #[inline]
    pub fn intensity(&self, lambda: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let u = (lambda - c.center) / c.width;
                c.amplitude * (-u * u).exp()
            })
            .sum()
    }

    /// Integral of the intensity over all wavelengths.
    pub fn total_weight(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.amplitude * c.width * PI.sqrt())
            .sum()
    }

    /// Intensity-weighted mean wavelength of the unfiltered source.
    pub fn mean_wavelength(&self) -> f64 {
        let num: f64 = self
            .components
            .iter()
            .map(|c| c.amplitude * c.width * c.center)
            .sum();
        num / self.components.iter().map(|c| c.amplitude * c.width).sum::<f64>()
    }

    /// Width of the single Gaussian with the same intensity variance; equals
    /// `width` for a one-component source.
    pub fn gaussian_width(&self) -> f64 {
        let norm: f64 = self.components.iter().map(|c| c.amplitude * c.width).sum();
        let mean = self.mean_wavelength();
        let var = self
            .components
            .iter()
            .map(|c| c.amplitude * c.width * (0.5 * c.width * c.width + (c.center - mean).powi(2)))
            .sum::<f64>()
            / norm;
        (2.0 * var).sqrt()
    }
}

/// Linear pixel-to-wavelength map of the detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelGrid {
    pub pixel_count: usize,
    /// Wavelength of pixel 0, nm.
    pub lambda_start: f64,
    /// nm per pixel.
    pub lambda_step: f64,
}

pub const DEFAULT_PIXEL_COUNT: usize = 3648;
pub const DEFAULT_LAMBDA_START: f64 = 750.0;
pub const DEFAULT_LAMBDA_END: f64 = 950.0;

impl Default for PixelGrid {
    fn default() -> Self {
        Self {
            pixel_count: DEFAULT_PIXEL_COUNT,
            lambda_start: DEFAULT_LAMBDA_START,
            lambda_step: (DEFAULT_LAMBDA_END - DEFAULT_LAMBDA_START) / DEFAULT_PIXEL_COUNT as f64,
        }
    }
}

impl PixelGrid {
    pub fn new(pixel_count: usize, lambda_start: f64, lambda_step: f64) -> Result<Self> {
        if pixel_count < 2 {
            return Err(Error::domain("pixel grid needs at least 2 pixels"));
        }
        if !(lambda_step > 0.0) || !lambda_start.is_finite() {
            return Err(Error::domain("pixel grid step must be > 0"));
        }
        Ok(Self {
            pixel_count,
            lambda_start,
            lambda_step,
        })
    }

    #[inline]
    pub fn wavelength(&self, pixel: usize) -> f64 {
        self.lambda_start + pixel as f64 * self.lambda_step
    }

    /// Wavelength of the last pixel.
    pub fn lambda_end(&self) -> f64 {
        self.wavelength(self.pixel_count - 1)
    }

    pub fn wavelengths(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.pixel_count).map(move |i| self.wavelength(i))
    }

    pub fn contains(&self, lambda: f64) -> bool {
        lambda >= self.lambda_start && lambda <= self.lambda_end()
    }

    /// Same grid translated by `delta` nm.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            lambda_start: self.lambda_start + delta,
            ..*self
        }
    }
}

/// Per-pixel counts of one acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumFrame {
    pub counts: Vec<f64>,
    /// Seconds.
    pub timestamp: Option<f64>,
    pub dark_subtracted: bool,
}

impl SpectrumFrame {
    pub fn new(counts: Vec<f64>, dark_subtracted: bool) -> Self {
        Self {
            counts,
            timestamp: None,
            dark_subtracted,
        }
    }

    pub fn with_timestamp(mut self, t: f64) -> Self {
        self.timestamp = Some(t);
        self
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Clip every pixel at `level` counts.
    pub fn saturate(&mut self, level: f64) {
        for c in &mut self.counts {
            *c = c.min(level);
        }
    }

    fn check_grid(&self, grid: &PixelGrid) -> Result<()> {
        if self.counts.len() != grid.pixel_count {
            return Err(Error::data(format!(
                "frame has {} pixels but the grid has {}",
                self.counts.len(),
                grid.pixel_count
            )));
        }
        Ok(())
    }
}

/// Default brightest-pixel level of rendered frames.
pub const DEFAULT_PEAK_COUNTS: f64 = 12000.0;
/// Full scale of a 14-bit readout.
pub const SATURATION_COUNTS: f64 = 16383.0;

/// Unfiltered source intensity sampled at every pixel centre.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSource {
    intensity: Vec<f64>,
}

impl SampledSource {
    pub fn new(source: &SourceSpectrum, grid: &PixelGrid) -> Result<Self> {
        let intensity: Vec<f64> = grid.wavelengths().map(|l| source.intensity(l)).collect();
        let on_grid: f64 = intensity.iter().sum::<f64>() * grid.lambda_step;
        if !(on_grid >= 1e-12 * source.total_weight()) {
            return Err(Error::domain(format!(
                "pixel grid {}..{} nm does not overlap the source spectrum",
                grid.lambda_start,
                grid.lambda_end()
            )));
        }
        Ok(Self { intensity })
    }

    pub fn intensity(&self) -> &[f64] {
        &self.intensity
    }

    /// Post-selected expected-count frame scaled so the brightest pixel
    /// reads `peak_counts`.
    pub fn render(
        &self,
        scheme: &SchemeParams,
        phi: f64,
        grid: &PixelGrid,
        peak_counts: f64,
    ) -> Result<SpectrumFrame> {
        if !(peak_counts > 0.0) {
            return Err(Error::domain("peak counts must be > 0"));
        }
        let mut counts: Vec<f64> = self
            .intensity
            .iter()
            .zip(grid.wavelengths())
            .map(|(&s, l)| postselected_weight(scheme, phi, l, s))
            .collect();
        let max = counts.iter().cloned().fold(0.0, f64::max);
        if !(max > 0.0) {
            return Err(Error::numerical(
                "post-selected spectrum is dark on every pixel",
            ));
        }
        let k = peak_counts / max;
        for c in &mut counts {
            *c *= k;
        }
        Ok(SpectrumFrame::new(counts, true))
    }
}

/// Expected-count frame of the post-selected spectrum.
pub fn render_ideal_frame(
    scheme: &SchemeParams,
    phi: f64,
    source: &SourceSpectrum,
    grid: &PixelGrid,
    peak_counts: f64,
) -> Result<SpectrumFrame> {
    SampledSource::new(source, grid)?.render(scheme, phi, grid, peak_counts)
}

/// How the centroid treats pixels that went negative after dark subtraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativeCounts {
    /// Clamp to zero before summing.
    #[default]
    Clamp,
    /// Use the signed value.
    Keep,
}

/// Intensity-weighted mean wavelength of a dark-subtracted frame.
pub fn centroid(frame: &SpectrumFrame, grid: &PixelGrid) -> Result<f64> {
    centroid_with(frame, grid, NegativeCounts::Clamp)
}

pub fn centroid_with(frame: &SpectrumFrame, grid: &PixelGrid, policy: NegativeCounts) -> Result<f64> {
    frame.check_grid(grid)?;
    if !frame.dark_subtracted {
        return Err(Error::data("centroid requires a dark-subtracted frame"));
    }
    centroid_of_counts(&frame.counts, grid, policy)
}

pub(crate) fn centroid_of_counts(counts: &[f64], grid: &PixelGrid, policy: NegativeCounts) -> Result<f64> {
    // Accumulate relative to the first pixel so the sum does not carry the
    // large common wavelength offset.
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &c) in counts.iter().enumerate() {
        let n = match policy {
            NegativeCounts::Clamp => c.max(0.0),
            NegativeCounts::Keep => c,
        };
        num += n * i as f64;
        den += n;
    }
    if den == 0.0 || !den.is_finite() {
        return Err(Error::data("centroid of an empty frame is undefined"));
    }
    Ok(grid.lambda_start + grid.lambda_step * (num / den))
}

/// One point of a sensorgram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftSample {
    /// Seconds.
    pub time: f64,
    /// nm
    pub shift: f64,
}

/// Labelled time interval `[start, end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub label: String,
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn new(label: impl Into<String>, start: f64, end: f64) -> Self {
        Self {
            label: label.into(),
            start,
            end,
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

/// Central-wavelength shift versus time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sensorgram {
    samples: Vec<ShiftSample>,
    pub segments: Vec<Segment>,
}

impl Sensorgram {
    pub fn new(samples: Vec<ShiftSample>) -> Result<Self> {
        if let Some(w) = samples.windows(2).find(|w| !(w[1].time > w[0].time)) {
            return Err(Error::data(format!(
                "sensorgram times must be strictly increasing ({} then {})",
                w[0].time, w[1].time
            )));
        }
        Ok(Self {
            samples,
            segments: Vec::new(),
        })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(time, shift)| ShiftSample { time, shift })
                .collect(),
        )
    }

    pub fn with_segments(mut self, segments: Vec<Segment>) -> Self {
        self.segments = segments;
        self
    }

    pub fn samples(&self) -> &[ShiftSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Shifts whose time falls in `[start, end]`.
    pub fn window(&self, start: f64, end: f64) -> impl Iterator<Item = &ShiftSample> {
        self.samples
            .iter()
            .filter(move |s| s.time >= start && s.time <= end)
    }
}

/// Reference wavelength subtracted from each centroid.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ReferencePolicy {
    Fixed(f64),
    /// Mean centroid of the first segment labelled `baseline`.
    #[default]
    FirstBaseline,
    /// Mean centroid of the named segment.
    Segment(String),
}

pub const BASELINE_LABEL: &str = "baseline";

/// Sensorgram of centroid shifts. Frames without a timestamp are placed at
/// their index in seconds.
pub fn shift_series(
    frames: &[SpectrumFrame],
    grid: &PixelGrid,
    reference: &ReferencePolicy,
    segments: &[Segment],
) -> Result<Sensorgram> {
    if frames.is_empty() {
        return Err(Error::data("shift series needs at least one frame"));
    }
    let points = frames
        .iter()
        .enumerate()
        .map(|(i, f)| Ok((f.timestamp.unwrap_or(i as f64), centroid(f, grid)?)))
        .collect::<Result<Vec<_>>>()?;

    let lambda_ref = match reference {
        ReferencePolicy::Fixed(l) => *l,
        ReferencePolicy::FirstBaseline | ReferencePolicy::Segment(_) => {
            let label = match reference {
                ReferencePolicy::Segment(l) => l.as_str(),
                _ => BASELINE_LABEL,
            };
            let seg = segments
                .iter()
                .find(|s| s.label == label)
                .ok_or_else(|| Error::data(format!("no `{label}` segment for the reference")))?;
            let inside: Vec<f64> = points
                .iter()
                .filter(|(t, _)| seg.contains(*t))
                .map(|(_, c)| *c)
                .collect();
            if inside.is_empty() {
                return Err(Error::data(format!(
                    "reference segment `{label}` [{}, {}] holds no frames",
                    seg.start, seg.end
                )));
            }
            inside.iter().sum::<f64>() / inside.len() as f64
        }
    };
    Ok(Sensorgram::from_pairs(points.into_iter().map(|(t, c)| (t, c - lambda_ref)))?
        .with_segments(segments.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{analytic_shift, SchemeParams};
    use approx::assert_relative_eq;

    #[test]
    fn default_grid_spans_band() {
        let g = PixelGrid::default();
        assert_eq!(g.pixel_count, 3648);
        assert!((g.lambda_step - 0.0548).abs() < 1e-4);
        assert!(g.contains(833.0));
        assert!(PixelGrid::new(1, 0.0, 1.0).is_err());
        assert!(PixelGrid::new(10, 0.0, 0.0).is_err());
    }

    #[test]
    fn source_validation_and_moments() {
        assert!(SourceSpectrum::new(vec![]).is_err());
        assert!(SourceSpectrum::new(vec![SourceComponent {
            amplitude: 0.0,
            center: 800.0,
            width: 1.0
        }])
        .is_err());
        let s = SourceSpectrum::measured_sld();
        assert!((s.mean_wavelength() - 839.0956).abs() < 1e-3);
        let g = SourceSpectrum::gaussian(833.0, 20.0).unwrap();
        assert_eq!(g.intensity(833.0), 1.0);
        assert_relative_eq!(g.total_weight(), 20.0 * PI.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn unfiltered_frame_follows_source() {
        // standard scheme with vanishing coupling placed at a cos^2 maximum
        let grid = PixelGrid::default();
        let src = SourceSpectrum::gaussian(850.0, 15.0).unwrap();
        let tiny = SchemeParams::standard(1e-12).unwrap();
        let f = render_ideal_frame(&tiny, 0.0, &src, &grid, 1000.0).unwrap();
        assert!(f.dark_subtracted);
        let peak = f.counts.iter().cloned().fold(0.0, f64::max);
        assert_relative_eq!(peak, 1000.0, max_relative = 1e-12);
        let i0 = 1000;
        let ratio = f.counts[i0] / src.intensity(grid.wavelength(i0));
        for (i, c) in f.counts.iter().enumerate().step_by(97) {
            let expect = ratio * src.intensity(grid.wavelength(i));
            assert!((c - expect).abs() <= 1e-9 * 1000.0);
        }
    }

    #[test]
    fn extinct_pixel_reads_zero() {
        let grid = PixelGrid::default();
        let src = SourceSpectrum::measured_sld();
        let tau = 2e-4;
        let px = 1500;
        let lc = grid.wavelength(px);
        let phi = 0.3;
        let s = SchemeParams::biased(tau, tau * lc + 0.5 * phi).unwrap();
        let f = render_ideal_frame(&s, phi, &src, &grid, DEFAULT_PEAK_COUNTS).unwrap();
        assert!(f.counts[px] < 1e-9);
    }

    #[test]
    fn notch_near_833() {
        let grid = PixelGrid::default();
        let src = SourceSpectrum::measured_sld();
        let tau = 2e-4;
        let s = SchemeParams::biased(tau, tau * 833.0).unwrap();
        let f = render_ideal_frame(&s, 0.0, &src, &grid, DEFAULT_PEAK_COUNTS).unwrap();
        // global minimum inside the bright band sits at the extinction point
        let band: Vec<usize> = (0..grid.pixel_count)
            .filter(|&i| (grid.wavelength(i) - 833.0).abs() < 15.0)
            .collect();
        let min_px = *band
            .iter()
            .min_by(|&&a, &&b| f.counts[a].total_cmp(&f.counts[b]))
            .unwrap();
        assert!((grid.wavelength(min_px) - 833.0).abs() < grid.lambda_step);
        // brighter on both sides of the notch
        assert!(f.counts[min_px + 100] > 100.0 * f.counts[min_px].max(1e-6));
        assert!(f.counts[min_px - 100] > 100.0 * f.counts[min_px].max(1e-6));
    }

    #[test]
    fn off_grid_source_is_an_error() {
        let grid = PixelGrid::default();
        let src = SourceSpectrum::gaussian(2000.0, 5.0).unwrap();
        let s = SchemeParams::biased(2e-4, 0.1).unwrap();
        assert!(render_ideal_frame(&s, 0.0, &src, &grid, 100.0).is_err());
        let src = SourceSpectrum::gaussian(833.0, 5.0).unwrap();
        assert!(render_ideal_frame(&s, 0.0, &src, &grid, 0.0).is_err());
    }

    #[test]
    fn centroid_basic_cases() {
        let grid = PixelGrid::new(101, 800.0, 0.5).unwrap();
        let src = SourceSpectrum::gaussian(825.0, 3.0).unwrap();
        let counts: Vec<f64> = grid.wavelengths().map(|l| src.intensity(l)).collect();
        let f = SpectrumFrame::new(counts, true);
        assert!((centroid(&f, &grid).unwrap() - 825.0).abs() < 1e-9);

        let mut counts = vec![0.0; 101];
        counts[10] = 7.0;
        counts[30] = 7.0;
        let f = SpectrumFrame::new(counts, true);
        assert_relative_eq!(
            centroid(&f, &grid).unwrap(),
            0.5 * (grid.wavelength(10) + grid.wavelength(30)),
            max_relative = 1e-15
        );

        let zero = SpectrumFrame::new(vec![0.0; 101], true);
        assert!(centroid(&zero, &grid).is_err());
        let raw = SpectrumFrame::new(vec![1.0; 101], false);
        assert!(centroid(&raw, &grid).is_err());
        let short = SpectrumFrame::new(vec![1.0; 5], true);
        assert!(centroid(&short, &grid).is_err());
    }

    #[test]
    fn negative_policy() {
        let grid = PixelGrid::new(3, 0.0, 1.0).unwrap();
        let f = SpectrumFrame::new(vec![-1.0, 0.0, 2.0], true);
        assert_eq!(centroid(&f, &grid).unwrap(), 2.0);
        assert_eq!(centroid_with(&f, &grid, NegativeCounts::Keep).unwrap(), 4.0);
    }

    #[test]
    fn rendered_centroid_tracks_closed_form() {
        let grid = PixelGrid::default();
        let (l0, s0, tau) = (833.0, 20.0, 2e-4);
        let src = SourceSpectrum::gaussian(l0, s0).unwrap();
        let s = SchemeParams::biased(tau, tau * l0).unwrap();
        for k in -10..=10 {
            let phi = 0.2 * tau * s0 * k as f64 / 10.0 * 2.0;
            let f = render_ideal_frame(&s, phi, &src, &grid, DEFAULT_PEAK_COUNTS).unwrap();
            let numeric = centroid(&f, &grid).unwrap() - l0;
            let closed = analytic_shift(&s, phi, l0, s0).shift;
            assert!((numeric - closed).abs() <= 0.02 * s0, "{k}: {numeric} vs {closed}");
        }
    }

    #[test]
    fn series_reference_policies() {
        let grid = PixelGrid::new(11, 0.0, 1.0).unwrap();
        let mut c = vec![0.0; 11];
        c[4] = 1.0;
        let frames: Vec<SpectrumFrame> = (0..5)
            .map(|i| SpectrumFrame::new(c.clone(), true).with_timestamp(i as f64))
            .collect();
        let segs = vec![Segment::new("baseline", 0.0, 1.5)];
        let sg = shift_series(&frames, &grid, &ReferencePolicy::FirstBaseline, &segs).unwrap();
        assert!(sg.samples().iter().all(|s| s.shift == 0.0));

        let sg = shift_series(&frames[..1], &grid, &ReferencePolicy::Fixed(0.0), &[]).unwrap();
        assert_eq!(sg.samples()[0].shift, 4.0);

        let empty = vec![Segment::new("baseline", 10.0, 11.0)];
        assert!(shift_series(&frames, &grid, &ReferencePolicy::FirstBaseline, &empty).is_err());
        assert!(shift_series(&frames, &grid, &ReferencePolicy::FirstBaseline, &[]).is_err());
        assert!(shift_series(&[], &grid, &ReferencePolicy::Fixed(0.0), &[]).is_err());
    }

    #[test]
    fn step_sequence_height_matches_closed_form() {
        let grid = PixelGrid::default();
        let (l0, s0, tau) = (833.0, 20.0, 2e-4);
        let src = SampledSource::new(&SourceSpectrum::gaussian(l0, s0).unwrap(), &grid).unwrap();
        let s = SchemeParams::biased(tau, tau * l0).unwrap();
        let (phi_a, phi_b) = (-0.0005, 0.0007);
        let frames: Vec<SpectrumFrame> = (0..20)
            .map(|i| {
                let phi = if i < 10 { phi_a } else { phi_b };
                src.render(&s, phi, &grid, 1e4)
                    .unwrap()
                    .with_timestamp(i as f64)
            })
            .collect();
        let segs = vec![Segment::new("baseline", 0.0, 9.0)];
        let sg = shift_series(&frames, &grid, &ReferencePolicy::FirstBaseline, &segs).unwrap();
        let step = sg.samples()[15].shift - sg.samples()[5].shift;
        let expect = analytic_shift(&s, phi_b, l0, s0).shift - analytic_shift(&s, phi_a, l0, s0).shift;
        assert!((step - expect).abs() < 0.02 * s0);
        assert!(sg.samples()[..10].iter().all(|p| p.shift.abs() < 1e-9));
    }

    #[test]
    fn sensorgram_requires_increasing_time() {
        assert!(Sensorgram::from_pairs([(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(Sensorgram::from_pairs([(0.0, 1.0), (1.0, 2.0)]).is_ok());
    }
}
