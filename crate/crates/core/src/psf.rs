//! Forward imaging model, difference PSF and radial Gaussian fitting.
//!
//! Under `I = O ⊗ PSF + N` and `I' = O ⊗ PSF' + N'`, the ratio of spectra
//! `Î/Î'` cancels the object and leaves the relative transfer function plus
//! a constant from white noise. Its inverse transform, the difference PSF,
//! is a Gaussian of width `√(σ² - σ'²)` when both PSFs are Gaussian and
//! `I'` is the sharper image.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rustfft::num_complex::Complex64;

use crate::cube::ChannelImage;
use crate::error::{Error, Result};
use crate::fourier::{convolve_periodic, dft2, fftshift, gaussian_kernel, idft2_checked, RingPartition};
use crate::noise::GaussianStream;

/// `FWHM / σ` of a Gaussian, `2√(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Share of the outermost rings used to estimate the white-noise constant.
const OFFSET_RING_FRACTION: f64 = 0.1;

/// The high-ring mean counts as a noise floor only when it is below this
/// share of the low-ring mean.
const OFFSET_DECAY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationConfig {
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl ObservationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.blur_sigma.is_finite() && self.blur_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("blur sigma {}", self.blur_sigma)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("noise sigma {}", self.noise_sigma)));
        }
        Ok(())
    }
}

/// `object ⊗ G(σ_blur) + N(0, σ_noise²)`, periodic boundary, no clamping.
pub fn simulate_observation(object: &ChannelImage, config: &ObservationConfig) -> Result<ChannelImage> {
    config.validate()?;
    let blurred = if config.blur_sigma > 0.0 {
        convolve_periodic(object, &gaussian_kernel(config.blur_sigma, None)?)?
    } else {
        object.clone()
    };
    if config.noise_sigma == 0.0 {
        return Ok(blurred);
    }
    let mut g = GaussianStream::new(config.seed);
    Ok(blurred.map(|v| g.next_normal(v, config.noise_sigma)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferencePsf {
    /// Real-space kernel with its origin shifted to `(H/2, W/2)`.
    pub kernel: ChannelImage,
    pub epsilon: f64,
    /// Constant removed from the spectral ratio before inversion.
    pub offset: f64,
}

impl DifferencePsf {
    pub fn center(&self) -> (usize, usize) {
        (self.kernel.height() / 2, self.kernel.width() / 2)
    }
}

/// Difference PSF `F⁻¹(Î/Î')` of `original` relative to `restored`.
///
/// The division is regularized as `Â·conj(B̂) / (|B̂|² + ε·max|B̂|²)`. The mean
/// ratio over the outermost 10% of rings is taken as the white-noise
/// constant and subtracted before the inverse transform, provided the ratio
/// has decayed there relative to the innermost 10%; otherwise nothing is
/// subtracted and the recorded offset is 0.
pub fn difference_psf(original: &ChannelImage, restored: &ChannelImage, epsilon: f64) -> Result<DifferencePsf> {
    original.ensure_same_dims(restored, "difference PSF inputs")?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon}")));
    }
    let fa = dft2(original);
    let fb = dft2(restored);
    let max_power = fb.data().iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    if max_power == 0.0 {
        return Err(Error::Degenerate("denominator image is all zero".into()));
    }
    let floor = epsilon * max_power;
    let mut ratio = fa.clone();
    for (r, b) in ratio.data_mut().iter_mut().zip(fb.data()) {
        let d = b.norm_sqr() + floor;
        *r = if d > 0.0 { *r * b.conj() / d } else { Complex64::new(0.0, 0.0) };
    }

    let part = RingPartition::new(original.height(), original.width())?;
    let rings = part.ring_count();
    let top = ((rings as f64 * OFFSET_RING_FRACTION).ceil() as usize).clamp(1, rings);
    let first = rings + 1 - top;
    let (mut high, mut nh, mut low, mut nl) = (0.0, 0usize, 0.0, 0usize);
    for (k, z) in ratio.data().iter().enumerate() {
        match part.ring_of(k) {
            Some(r) if r >= first => {
                high += z.re;
                nh += 1;
            }
            Some(r) if (1..=top).contains(&r) => {
                low += z.re;
                nl += 1;
            }
            _ => {}
        }
    }
    let high = if nh > 0 { high / nh as f64 } else { 0.0 };
    let low = if nl > 0 { low / nl as f64 } else { 0.0 };
    // A ratio that has not decayed is all signal; there is no floor to remove.
    let offset = if high.abs() < OFFSET_DECAY * low.abs() { high } else { 0.0 };
    for z in ratio.data_mut() {
        z.re -= offset;
    }
    let kernel = fftshift(&idft2_checked(&ratio)?.image);
    Ok(DifferencePsf {
        kernel,
        epsilon,
        offset,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub sigma: f64,
    pub offset: f64,
    pub fwhm: f64,
    pub residual_rms: f64,
}

/// One radial bin of a centered kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialBin {
    pub rho: f64,
    pub mean: f64,
    pub samples: usize,
}

fn center_distances(kernel: &ChannelImage) -> impl Iterator<Item = (u64, f64)> + '_ {
    let (cy, cx) = (kernel.height() / 2, kernel.width() / 2);
    let (w, data) = (kernel.width(), kernel.data());
    data.iter().enumerate().map(move |(k, &v)| {
        let dy = (k / w) as i64 - cy as i64;
        let dx = (k % w) as i64 - cx as i64;
        ((dy * dy + dx * dx) as u64, v)
    })
}

/// Angular average in 1-pixel bins, `round(ρ)`, out to `min(H,W)/2`.
pub fn radial_profile(kernel: &ChannelImage) -> Vec<RadialBin> {
    let max_r = kernel.height().min(kernel.width()) / 2;
    let mut acc = vec![(0.0, 0usize); max_r + 1];
    for (d2, v) in center_distances(kernel) {
        let b = (d2 as f64).sqrt().round() as usize;
        if b <= max_r {
            acc[b].0 += v;
            acc[b].1 += 1;
        }
    }
    acc.into_iter()
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(r, (s, n))| RadialBin {
            rho: r as f64,
            mean: s / n as f64,
            samples: n,
        })
        .collect()
}

/// Pixels grouped by exact squared distance from the center; averaging
/// inside a group loses nothing because every member sits at the same radius.
struct RadialGroups {
    rho2: Vec<f64>,
    mean: Vec<f64>,
    count: Vec<f64>,
    within_ss: f64,
    total: f64,
    data_var: f64,
}

impl RadialGroups {
    fn build(kernel: &ChannelImage) -> Self {
        let max_r = (kernel.height().min(kernel.width()) / 2) as u64;
        let mut groups: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
        for (d2, v) in center_distances(kernel) {
            if d2 <= max_r * max_r {
                let e = groups.entry(d2).or_default();
                e.0 += v;
                e.1 += v * v;
                e.2 += 1;
            }
        }
        let mut g = RadialGroups {
            rho2: Vec::new(),
            mean: Vec::new(),
            count: Vec::new(),
            within_ss: 0.0,
            total: 0.0,
            data_var: 0.0,
        };
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for (d2, (s, ss, n)) in groups {
            let n = n as f64;
            let m = s / n;
            g.rho2.push(d2 as f64);
            g.mean.push(m);
            g.count.push(n);
            g.within_ss += (ss - n * m * m).max(0.0);
            g.total += n;
            sum += s;
            sum_sq += ss;
        }
        let mu = sum / g.total;
        g.data_var = (sum_sq / g.total - mu * mu).max(0.0);
        g
    }

    /// Closed-form `(A, c)` for fixed `σ` and the per-pixel residual RMS.
    fn solve(&self, sigma: f64) -> (f64, f64, f64) {
        let inv = 1.0 / (2.0 * sigma * sigma);
        let (mut sw, mut sg, mut sgg, mut sy, mut sgy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..self.rho2.len() {
            let (n, y) = (self.count[i], self.mean[i]);
            let g = (-self.rho2[i] * inv).exp();
            sw += n;
            sg += n * g;
            sgg += n * g * g;
            sy += n * y;
            sgy += n * g * y;
        }
        let det = sw * sgg - sg * sg;
        let (a, c) = if det.abs() > 1e-300 {
            ((sw * sgy - sg * sy) / det, (sgg * sy - sg * sgy) / det)
        } else {
            (0.0, sy / sw)
        };
        let mut ss = self.within_ss;
        for i in 0..self.rho2.len() {
            let g = (-self.rho2[i] * inv).exp();
            ss += self.count[i] * (self.mean[i] - a * g - c).powi(2);
        }
        (a, c, (ss / self.total).sqrt())
    }
}

/// Fits `A·exp(-ρ²/(2σ²)) + c` to a centered kernel.
///
/// `σ` is scanned over 200 log-spaced values from 0.25 px to `min(H,W)/4`,
/// then refined by golden-section search around the best grid point; `A`
/// and `c` are solved by linear least squares at every trial `σ`.
pub fn fit_radial_gaussian_image(kernel: &ChannelImage) -> Result<GaussianFit> {
    let groups = RadialGroups::build(kernel);
    let distinct_bins = radial_profile(kernel).len();
    if distinct_bins < 3 {
        return Err(Error::Degenerate(format!(
            "{distinct_bins} radial bins, need at least 3"
        )));
    }
    let lo = 0.25f64;
    let hi = (kernel.height().min(kernel.width()) as f64 / 4.0).max(lo * 1.01);
    const STEPS: usize = 200;
    let grid: Vec<f64> = (0..STEPS)
        .map(|i| lo * (hi / lo).powf(i as f64 / (STEPS - 1) as f64))
        .collect();
    let cost = |s: f64| groups.solve(s).2;
    let best = (0..STEPS)
        .min_by(|&i, &j| cost(grid[i]).total_cmp(&cost(grid[j])))
        .unwrap();
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(STEPS - 1)]);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    while b - a > 1e-10 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = cost(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = cost(x2);
        }
    }
    let mut sigma = 0.5 * (a + b);
    if cost(grid[best]) < cost(sigma) {
        sigma = grid[best];
    }
    let (amplitude, offset, residual_rms) = groups.solve(sigma);
    let data_rms = groups.data_var.sqrt();
    if residual_rms > 0.5 * data_rms {
        return Err(Error::FitFailure(format!(
            "residual RMS {residual_rms:.3e} exceeds half the data RMS {data_rms:.3e}"
        )));
    }
    Ok(GaussianFit {
        amplitude,
        sigma,
        offset,
        fwhm: FWHM_PER_SIGMA * sigma,
        residual_rms,
    })
}

pub fn fit_radial_gaussian(psf: &DifferencePsf) -> Result<GaussianFit> {
    fit_radial_gaussian_image(&psf.kernel)
}

/// FWHM comparison of two restorations against a shared blurrier baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeblurComparison {
    /// Fit of `difference_psf(baseline, candidate)`.
    pub candidate: GaussianFit,
    /// Fit of `difference_psf(baseline, reference)`.
    pub reference: GaussianFit,
    /// `candidate.fwhm / reference.fwhm`; above 1 means the candidate removes
    /// more blur from the baseline than the reference does.
    pub ratio: f64,
}

pub fn compare_deblur(
    candidate: &ChannelImage,
    reference: &ChannelImage,
    baseline: &ChannelImage,
    epsilon: f64,
) -> Result<DeblurComparison> {
    candidate.ensure_same_dims(reference, "candidate vs reference")?;
    candidate.ensure_same_dims(baseline, "candidate vs baseline")?;
    let cand = fit_radial_gaussian(&difference_psf(baseline, candidate, epsilon)?)?;
    let refr = fit_radial_gaussian(&difference_psf(baseline, reference, epsilon)?)?;
    Ok(DeblurComparison {
        candidate: cand,
        reference: refr,
        ratio: cand.fwhm / refr.fwhm,
    })
}

/// `rho_px,mean_value,n_samples` plus the fit summary as a comment line.
pub fn profile_to_csv(psf: &DifferencePsf, fit: Option<&GaussianFit>) -> String {
    let mut s = String::from("rho_px,mean_value,n_samples\n");
    for b in radial_profile(&psf.kernel) {
        let _ = writeln!(s, "{},{},{}", b.rho, b.mean, b.samples);
    }
    if let Some(f) = fit {
        let _ = writeln!(
            s,
            "# A={} sigma_px={} c={} fwhm_px={} residual_rms={}",
            f.amplitude, f.sigma, f.offset, f.fwhm, f.residual_rms
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::uniform_noise;

    #[test]
    fn identity_observation() {
        let obj = uniform_noise(16, 16, 2);
        let cfg = ObservationConfig { blur_sigma: 0.0, noise_sigma: 0.0, seed: 1 };
        assert_eq!(simulate_observation(&obj, &cfg).unwrap(), obj);
        let flat = ChannelImage::filled(32, 32, 0.3);
        let cfg = ObservationConfig { blur_sigma: 2.0, noise_sigma: 0.0, seed: 1 };
        let out = simulate_observation(&flat, &cfg).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.3).abs() < 1e-12));
        let bad = ObservationConfig { blur_sigma: -1.0, noise_sigma: 0.0, seed: 1 };
        assert!(simulate_observation(&flat, &bad).is_err());
    }

    #[test]
    fn fwhm_ratio_constant() {
        assert!((FWHM_PER_SIGMA - 2.0 * (2.0 * 2f64.ln()).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn all_zero_denominator() {
        let a = uniform_noise(16, 16, 1);
        assert!(matches!(
            difference_psf(&a, &ChannelImage::zeros(16, 16), 1e-6),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn too_few_bins() {
        let tiny = ChannelImage::filled(2, 2, 1.0);
        assert!(matches!(fit_radial_gaussian_image(&tiny), Err(Error::Degenerate(_))));
    }

    #[test]
    fn noise_kernel_fails_fit() {
        let k = crate::phantom::white_noise(64, 64, 9);
        assert!(matches!(fit_radial_gaussian_image(&k), Err(Error::FitFailure(_))));
    }
}
