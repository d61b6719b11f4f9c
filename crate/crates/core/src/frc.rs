//! Fourier ring correlation.
//!
//! For two images with spectra `F₁`, `F₂` the correlation on ring `r` is
//!
//! ```text
//! FRC(r) = Re Σ_{k∈r} F₁(k)·conj(F₂(k)) / √(Σ_{k∈r} |F₁(k)|² · Σ_{k∈r} |F₂(k)|²)
//! ```
//!
//! evaluated on rings `1..=R` (the DC ring is skipped). Rings where either
//! image carries no energy are undefined and dropped from every downstream
//! sum. The same quantity drives the resolution estimate and the training
//! loss `1 - mean_r FRC(r)`, whose gradient is computed analytically in the
//! Fourier domain.

use std::fmt::Write as _;

use rustfft::num_complex::Complex64;

use crate::cube::ChannelImage;
use crate::error::{Error, Result};
use crate::fourier::{dft2, idft2_complex, ComplexField, RingPartition};

/// Fixed 1/7 correlation threshold.
pub const DEFAULT_THRESHOLD: f64 = 1.0 / 7.0;

/// Ring energies below this fraction of the total spectral energy count as zero.
const ENERGY_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
pub struct FrcRing {
    pub ring: usize,
    /// Cycles per pixel of the images the curve was computed on.
    pub frequency: f64,
    pub value: Option<f64>,
    /// `|Σ F₁·conj(F₂)| / √(…)`: the correlation ignoring phase rotation.
    pub magnitude: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrcCurve {
    rings: Vec<FrcRing>,
    /// Ratio of the analysed pixel pitch to the source pixel pitch (2 for
    /// single-image curves, which decimate by two).
    pixel_scale: f64,
}

impl FrcCurve {
    /// Builds a curve from explicit `(frequency, value)` points, mainly for
    /// testing resolution estimation. Frequencies must be strictly
    /// increasing and at most 0.5.
    pub fn from_points(points: &[(f64, Option<f64>)], pixel_scale: f64) -> Result<Self> {
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Validation("frequencies must be strictly increasing".into()));
        }
        if points.iter().any(|p| !(p.0 > 0.0 && p.0 <= 0.5)) {
            return Err(Error::Validation("frequencies must lie in (0, 0.5]".into()));
        }
        if points.iter().any(|p| p.1.is_some_and(|v| !(-1.0..=1.0).contains(&v))) {
            return Err(Error::Validation("correlations must lie in [-1, 1]".into()));
        }
        let rings = points
            .iter()
            .enumerate()
            .map(|(i, &(frequency, value))| FrcRing {
                ring: i + 1,
                frequency,
                value,
                magnitude: value.map(f64::abs),
                samples: 0,
            })
            .collect();
        Ok(Self { rings, pixel_scale })
    }

    pub fn rings(&self) -> &[FrcRing] {
        &self.rings
    }

    pub fn pixel_scale(&self) -> f64 {
        self.pixel_scale
    }

    /// `(ring, value)` for defined rings only.
    pub fn defined(&self) -> impl Iterator<Item = (&FrcRing, f64)> {
        self.rings.iter().filter_map(|r| r.value.map(|v| (r, v)))
    }

    pub fn defined_count(&self) -> usize {
        self.defined().count()
    }

    pub fn is_empty(&self) -> bool {
        self.rings.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionEstimate {
    pub resolution_um: f64,
    /// Crossing frequency in cycles per analysed pixel.
    pub crossing_frequency: f64,
    pub threshold: f64,
    pub nyquist_limited: bool,
    /// Pixel pitch of the analysed images.
    pub effective_pixel_um: f64,
}

struct RingSums {
    cross: Vec<Complex64>,
    energy_a: Vec<f64>,
    energy_b: Vec<f64>,
    floor_a: f64,
    floor_b: f64,
}

fn ring_sums(fa: &ComplexField, fb: &ComplexField, part: &RingPartition) -> RingSums {
    let n = part.ring_count() + 1;
    let mut s = RingSums {
        cross: vec![Complex64::new(0.0, 0.0); n],
        energy_a: vec![0.0; n],
        energy_b: vec![0.0; n],
        floor_a: 0.0,
        floor_b: 0.0,
    };
    let (mut tot_a, mut tot_b) = (0.0, 0.0);
    for (k, (a, b)) in fa.data().iter().zip(fb.data()).enumerate() {
        tot_a += a.norm_sqr();
        tot_b += b.norm_sqr();
        if let Some(r) = part.ring_of(k) {
            s.cross[r] += a * b.conj();
            s.energy_a[r] += a.norm_sqr();
            s.energy_b[r] += b.norm_sqr();
        }
    }
    s.floor_a = ENERGY_FLOOR * tot_a;
    s.floor_b = ENERGY_FLOOR * tot_b;
    s
}

impl RingSums {
    fn defined(&self, r: usize) -> bool {
        self.energy_a[r] > self.floor_a && self.energy_b[r] > self.floor_b
    }
}

fn check_nonzero(img: &ChannelImage, what: &str) -> Result<()> {
    if img.data().iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate(format!("{what} image is all zero")));
    }
    Ok(())
}

fn curve_from_spectra(
    fa: &ComplexField,
    fb: &ComplexField,
    part: &RingPartition,
    pixel_scale: f64,
) -> Result<FrcCurve> {
    let sums = ring_sums(fa, fb, part);
    let rings: Vec<FrcRing> = (1..=part.ring_count())
        .map(|r| {
            let (value, magnitude) = if sums.defined(r) {
                let denom = (sums.energy_a[r] * sums.energy_b[r]).sqrt();
                (
                    Some((sums.cross[r].re / denom).clamp(-1.0, 1.0)),
                    Some((sums.cross[r].norm() / denom).min(1.0)),
                )
            } else {
                (None, None)
            };
            FrcRing {
                ring: r,
                frequency: part.frequency(r),
                value,
                magnitude,
                samples: part.counts()[r],
            }
        })
        .collect();
    if rings.iter().all(|r| r.value.is_none()) {
        return Err(Error::Degenerate("every frequency ring is undefined".into()));
    }
    Ok(FrcCurve { rings, pixel_scale })
}

/// Two-image FRC curve on rings `1..=R`.
pub fn frc_curve(a: &ChannelImage, b: &ChannelImage) -> Result<FrcCurve> {
    a.ensure_same_dims(b, "FRC inputs")?;
    check_nonzero(a, "first")?;
    check_nonzero(b, "second")?;
    let part = RingPartition::new(a.height(), a.width())?;
    curve_from_spectra(&dft2(a), &dft2(b), &part, 1.0)
}

/// Splits an image into its (even row, even column) and (odd row, odd
/// column) sub-lattices, each `⌊H/2⌋ × ⌊W/2⌋`.
pub fn diagonal_split(image: &ChannelImage) -> (ChannelImage, ChannelImage) {
    let (h, w) = (image.height() / 2, image.width() / 2);
    let even = ChannelImage::from_fn(h, w, |r, c| image.get(2 * r, 2 * c));
    let odd = ChannelImage::from_fn(h, w, |r, c| image.get(2 * r + 1, 2 * c + 1));
    (even, odd)
}

/// FRC between the two diagonal sub-lattices of one image. The analysed
/// pixel pitch is twice the source pitch.
pub fn single_image_frc(image: &ChannelImage) -> Result<FrcCurve> {
    if image.height() < 8 || image.width() < 8 {
        return Err(Error::Degenerate(format!(
            "single-image FRC needs at least 8x8, got {}x{}",
            image.height(),
            image.width()
        )));
    }
    let (a, b) = diagonal_split(image);
    let part = RingPartition::new(a.height(), a.width())?;
    curve_from_spectra(&dft2(&a), &dft2(&b), &part, 2.0)
}

/// Resolution from the first downward crossing of `threshold`.
///
/// The crossing frequency is linearly interpolated between the last defined
/// ring at or above the threshold and the first one below it (DC counts as a
/// perfectly correlated ring at frequency 0). Without a crossing the estimate
/// is Nyquist limited: two analysed pixels.
pub fn resolution_from_curve(
    curve: &FrcCurve,
    threshold: f64,
    pixel_size_um: f64,
) -> Result<ResolutionEstimate> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    if !(pixel_size_um.is_finite() && pixel_size_um > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "pixel size must be positive, got {pixel_size_um}"
        )));
    }
    if curve.defined_count() == 0 {
        return Err(Error::Degenerate("FRC curve has no defined rings".into()));
    }
    let effective = pixel_size_um * curve.pixel_scale;
    let mut prev = (0.0, 1.0);
    for (ring, value) in curve.defined() {
        if value < threshold && prev.1 >= threshold {
            let t = (prev.1 - threshold) / (prev.1 - value);
            let f = prev.0 + t * (ring.frequency - prev.0);
            return Ok(ResolutionEstimate {
                resolution_um: effective / f,
                crossing_frequency: f,
                threshold,
                nyquist_limited: false,
                effective_pixel_um: effective,
            });
        }
        prev = (ring.frequency, value);
    }
    Ok(ResolutionEstimate {
        resolution_um: effective / 0.5,
        crossing_frequency: 0.5,
        threshold,
        nyquist_limited: true,
        effective_pixel_um: effective,
    })
}

/// Single-image resolution with the default threshold.
pub fn single_image_resolution(image: &ChannelImage, pixel_size_um: f64) -> Result<ResolutionEstimate> {
    resolution_from_curve(&single_image_frc(image)?, DEFAULT_THRESHOLD, pixel_size_um)
}

/// `ring,freq_cycles_per_px,frc,n_samples` rows, undefined rings left empty,
/// followed by the estimate as comment lines when given.
pub fn curve_to_csv(curve: &FrcCurve, estimate: Option<&ResolutionEstimate>) -> String {
    let mut s = String::from("ring,freq_cycles_per_px,frc,n_samples\n");
    for r in curve.rings() {
        let v = r.value.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", r.ring, r.frequency, v, r.samples);
    }
    if let Some(e) = estimate {
        let _ = writeln!(s, "# resolution_um={}", e.resolution_um);
        let _ = writeln!(s, "# threshold={}", e.threshold);
        let _ = writeln!(s, "# nyquist_limited={}", e.nyquist_limited);
    }
    s
}

/// How per-ring correlations are reduced into the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossReduction {
    /// `1 - mean_r FRC(r)`, bounded in `[0, 2]`.
    #[default]
    Mean,
    /// `1 - Σ_r FRC(r)`, the unnormalized sum.
    Sum,
}

/// Loss value plus its gradient expressed in the Fourier domain.
#[derive(Debug, Clone)]
pub(crate) struct SpectralLoss {
    pub loss: f64,
    /// DFT of `∂L/∂pred`.
    pub gradient_spectrum: ComplexField,
}

/// Loss and gradient from precomputed spectra.
///
/// With `N_r = Re Σ P·conj(T)`, `E_r = Σ|P|²`, `G_r = Σ|T|²` the derivative is
/// `∂FRC_r/∂p = HW·Re IDFT(mask_r·(T - (N_r/E_r)·P)) / √(E_r G_r)`, so the
/// whole gradient needs one inverse transform.
pub(crate) fn loss_from_spectra(
    pred: &ComplexField,
    target: &ComplexField,
    part: &RingPartition,
    reduction: LossReduction,
) -> Result<SpectralLoss> {
    let sums = ring_sums(pred, target, part);
    let n = part.ring_count() + 1;
    let mut coeff_t = vec![0.0; n];
    let mut coeff_p = vec![0.0; n];
    let mut total = 0.0;
    let mut defined = 0usize;
    for r in 1..n {
        if !sums.defined(r) {
            continue;
        }
        let inv = 1.0 / (sums.energy_a[r] * sums.energy_b[r]).sqrt();
        let num = sums.cross[r].re;
        total += num * inv;
        coeff_t[r] = inv;
        coeff_p[r] = inv * num / sums.energy_a[r];
        defined += 1;
    }
    if defined == 0 {
        return Err(Error::Degenerate("every frequency ring is undefined".into()));
    }
    let weight = match reduction {
        LossReduction::Mean => 1.0 / defined as f64,
        LossReduction::Sum => 1.0,
    };
    let loss = 1.0 - weight * total;
    let hw = pred.data().len() as f64;
    let scale = -weight * hw;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .enumerate()
        .map(|(k, (p, t))| match part.ring_of(k) {
            Some(r) if r > 0 && coeff_t[r] != 0.0 => (t * coeff_t[r] - p * coeff_p[r]) * scale,
            _ => Complex64::new(0.0, 0.0),
        })
        .collect();
    Ok(SpectralLoss {
        loss,
        gradient_spectrum: ComplexField::new(pred.height(), pred.width(), data)?,
    })
}

fn loss_inputs(pred: &ChannelImage, target: &ChannelImage) -> Result<RingPartition> {
    pred.ensure_same_dims(target, "FRC loss inputs")?;
    check_nonzero(target, "target")?;
    RingPartition::new(pred.height(), pred.width())
}

pub fn frc_loss_with(pred: &ChannelImage, target: &ChannelImage, reduction: LossReduction) -> Result<f64> {
    let part = loss_inputs(pred, target)?;
    loss_from_spectra(&dft2(pred), &dft2(target), &part, reduction).map(|l| l.loss)
}

/// `1 - mean_r FRC(r)` over defined rings.
pub fn frc_loss(pred: &ChannelImage, target: &ChannelImage) -> Result<f64> {
    frc_loss_with(pred, target, LossReduction::Mean)
}

pub fn frc_loss_gradient_with(
    pred: &ChannelImage,
    target: &ChannelImage,
    reduction: LossReduction,
) -> Result<ChannelImage> {
    let part = loss_inputs(pred, target)?;
    let l = loss_from_spectra(&dft2(pred), &dft2(target), &part, reduction)?;
    let g = idft2_complex(&l.gradient_spectrum);
    ChannelImage::new(pred.height(), pred.width(), g.data().iter().map(|z| z.re).collect())
}

/// Analytic `∂L/∂pred` of [`frc_loss`].
pub fn frc_loss_gradient(pred: &ChannelImage, target: &ChannelImage) -> Result<ChannelImage> {
    frc_loss_gradient_with(pred, target, LossReduction::Mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::white_noise;

    #[test]
    fn self_and_anti_correlation() {
        let a = white_noise(32, 32, 3);
        let neg = a.map(|v| -v);
        for (_, v) in frc_curve(&a, &a).unwrap().defined() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        for (_, v) in frc_curve(&a, &neg).unwrap().defined() {
            assert!((v + 1.0).abs() < 1e-12);
        }
        assert!(frc_loss(&a, &a).unwrap().abs() < 1e-12);
        assert!((frc_loss(&neg, &a).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let a = white_noise(16, 16, 1);
        assert!(frc_curve(&a, &white_noise(16, 8, 1)).is_err());
        assert!(frc_curve(&a, &ChannelImage::zeros(16, 16)).is_err());
        assert!(matches!(
            single_image_frc(&ChannelImage::filled(32, 32, 0.5)),
            Err(Error::Degenerate(_))
        ));
        assert!(single_image_frc(&white_noise(7, 32, 1)).is_err());
        assert!(frc_loss(&a, &ChannelImage::zeros(16, 16)).is_err());
    }

    #[test]
    fn flat_curve_is_nyquist_limited() {
        let pts: Vec<_> = (1..=10).map(|r| (r as f64 / 20.0, Some(1.0))).collect();
        let curve = FrcCurve::from_points(&pts, 1.0).unwrap();
        let e = resolution_from_curve(&curve, DEFAULT_THRESHOLD, 10.0).unwrap();
        assert!(e.nyquist_limited);
        assert_eq!(e.resolution_um, 20.0);
        assert!(resolution_from_curve(&curve, 1.0, 10.0).is_err());
        assert!(resolution_from_curve(&curve, 0.0, 10.0).is_err());
    }

    #[test]
    fn step_curve_crossing() {
        // 1 up to f = 0.2, 0 beyond, rings every 0.05: crossing between 0.2 and 0.25.
        let pts: Vec<_> = (1..=10)
            .map(|r| {
                let f = r as f64 / 20.0;
                (f, Some(if f <= 0.2 + 1e-12 { 1.0 } else { 0.0 }))
            })
            .collect();
        let curve = FrcCurve::from_points(&pts, 1.0).unwrap();
        let e = resolution_from_curve(&curve, 1.0 / 7.0, 10.0).unwrap();
        let f_star = 0.2 + (1.0 - 1.0 / 7.0) * 0.05;
        assert!((e.crossing_frequency - f_star).abs() < 1e-15);
        assert!((e.resolution_um - 10.0 / f_star).abs() < 1e-12);
        assert!(!e.nyquist_limited);
        let doubled = resolution_from_curve(&curve, 1.0 / 7.0, 20.0).unwrap();
        assert!((doubled.resolution_um - 2.0 * e.resolution_um).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let curve = FrcCurve::from_points(&[(0.25, Some(0.5)), (0.5, None)], 2.0).unwrap();
        let e = resolution_from_curve(&curve, 0.25, 1.0).unwrap();
        let csv = curve_to_csv(&curve, Some(&e));
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "ring,freq_cycles_per_px,frc,n_samples");
        assert_eq!(lines[1], "1,0.25,0.5,0");
        assert_eq!(lines[2], "2,0.5,,0");
        assert_eq!(lines[3], "# resolution_um=4");
        assert_eq!(lines[5], "# nyquist_limited=true");
    }
}
