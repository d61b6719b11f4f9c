//! LR/HR pair generation: SNR filter, crop, bicubic resampling and noise.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cube::{ChannelImage, SpectralCube};
use crate::error::{Error, Result};
use crate::fourier::{convolve_periodic, gaussian_kernel};
use crate::noise::{seeded_rng, GaussianStream};
use crate::restore::TrainingConfig;

/// Bicubic kernel parameter.
pub const CUBIC_A: f64 = -0.5;

const SUBSET_STREAM: u64 = u64::MAX;
const PATCH_STREAM: u64 = u64::MAX - 1;

/// Mean squared intensity against a black background: `(1/mn) ΣΣ D(i,j)²`.
pub fn mse_signal(image: &ChannelImage) -> f64 {
    if image.is_empty() {
        return 0.0;
    }
    image.data().iter().map(|v| v * v).sum::<f64>() / image.len() as f64
}

/// Keeps channels with `mse_signal ≥ tau`; returns the reduced cube and
/// the per-channel keep mask.
pub fn filter_low_snr(cube: &SpectralCube, tau: f64) -> Result<(SpectralCube, Vec<bool>)> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("SNR threshold {tau}")));
    }
    let mask: Vec<bool> = cube.channels().iter().map(|c| mse_signal(c) >= tau).collect();
    let (chans, labels): (Vec<_>, Vec<_>) = cube
        .channels()
        .iter()
        .zip(cube.labels())
        .zip(&mask)
        .filter(|(_, &keep)| keep)
        .map(|((c, &l), _)| (c.clone(), l))
        .unzip();
    if chans.is_empty() {
        return Err(Error::Degenerate(format!(
            "every channel falls below the SNR threshold {tau}"
        )));
    }
    Ok((SpectralCube::new(chans, cube.pixel_size_um(), labels)?, mask))
}

/// Top-left `⌊H/s⌋·s × ⌊W/s⌋·s` region of every channel.
pub fn crop_to_multiple(cube: &SpectralCube, scale: usize) -> Result<SpectralCube> {
    if scale == 0 {
        return Err(Error::InvalidParameter("scale must be positive".into()));
    }
    let (h, w) = (cube.height(), cube.width());
    if h < scale || w < scale {
        return Err(Error::Degenerate(format!("{h}x{w} cube is smaller than scale {scale}")));
    }
    let (ch, cw) = (h / scale * scale, w / scale * scale);
    if (ch, cw) == (h, w) {
        return Ok(cube.clone());
    }
    cube.map_channels(|_, c| c.window(0, 0, ch, cw))
}

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn cubic_weight(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResizeDirection {
    Down,
    Up,
}

/// Source taps for one axis: four clamped indices and their weights.
pub fn axis_taps(n_in: usize, n_out: usize, scale: usize, dir: ResizeDirection) -> Vec<([usize; 4], [f64; 4])> {
    let s = scale as f64;
    (0..n_out)
        .map(|o| {
            let src = match dir {
                ResizeDirection::Down => (o as f64 + 0.5) * s - 0.5,
                ResizeDirection::Up => (o as f64 + 0.5) / s - 0.5,
            };
            let base = src.floor() as i64 - 1;
            let mut idx = [0usize; 4];
            let mut wts = [0.0; 4];
            for t in 0..4 {
                let pos = base + t as i64;
                idx[t] = pos.clamp(0, n_in as i64 - 1) as usize;
                wts[t] = cubic_weight(src - pos as f64);
            }
            let total: f64 = wts.iter().sum();
            for w in &mut wts {
                *w /= total;
            }
            (idx, wts)
        })
        .collect()
}

/// Separable bicubic resampling by an integer factor, 4 taps per axis,
/// replicated edges.
pub fn bicubic_resize(image: &ChannelImage, scale: usize, dir: ResizeDirection) -> Result<ChannelImage> {
    if scale == 0 {
        return Err(Error::InvalidParameter("scale must be positive".into()));
    }
    let (h, w) = image.dims();
    let (oh, ow) = match dir {
        ResizeDirection::Down => {
            if h % scale != 0 || w % scale != 0 {
                return Err(Error::DimensionMismatch(format!(
                    "{h}x{w} is not divisible by {scale}"
                )));
            }
            (h / scale, w / scale)
        }
        ResizeDirection::Up => (h * scale, w * scale),
    };
    let xt = axis_taps(w, ow, scale, dir);
    let yt = axis_taps(h, oh, scale, dir);
    let src = image.data();
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        let line = &src[r * w..(r + 1) * w];
        for (c, (idx, wts)) in xt.iter().enumerate() {
            rows[r * ow + c] = (0..4).map(|t| wts[t] * line[idx[t]]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for (r, (idx, wts)) in yt.iter().enumerate() {
        for c in 0..ow {
            out[r * ow + c] = (0..4).map(|t| wts[t] * rows[idx[t] * ow + c]).sum();
        }
    }
    ChannelImage::new(oh, ow, out)
}

pub(crate) fn add_noise_stream(
    image: &ChannelImage,
    sigma: f64,
    seed: u64,
    stream: u64,
    include_background: bool,
) -> Result<ChannelImage> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise sigma {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let mut g = GaussianStream::with_stream(seed, stream);
    Ok(image.map(|v| {
        // one draw per pixel keeps the stream aligned with pixel positions
        let z = g.next_standard();
        if !include_background && v == 0.0 {
            v
        } else {
            (v + sigma * z).clamp(0.0, 1.0)
        }
    }))
}

/// i.i.d. Gaussian noise, clamped to `[0, 1]`. Exact zeros count as
/// background and stay untouched unless `include_background` is set.
pub fn add_gaussian_noise(image: &ChannelImage, sigma: f64, seed: u64, include_background: bool) -> Result<ChannelImage> {
    add_noise_stream(image, sigma, seed, 0, include_background)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationConfig {
    pub scale: usize,
    /// Gaussian blur (HR pixels) applied before downsampling; 0 disables it.
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    /// Share of channels whose background also receives noise.
    pub noisy_fraction: f64,
    /// SNR filter threshold in mean-squared-intensity units.
    pub snr_tau: f64,
    pub seed: u64,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        Self {
            scale: 4,
            blur_sigma: 0.0,
            noise_sigma: 0.02,
            noisy_fraction: 0.2,
            snr_tau: 1e-6,
            seed: 0,
        }
    }
}

impl DegradationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scale < 2 {
            return Err(Error::InvalidParameter(format!("scale {} < 2", self.scale)));
        }
        if !(self.blur_sigma.is_finite() && self.blur_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("blur sigma {}", self.blur_sigma)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("noise sigma {}", self.noise_sigma)));
        }
        if !(0.0..=1.0).contains(&self.noisy_fraction) {
            return Err(Error::InvalidParameter(format!(
                "noisy fraction {} outside [0, 1]",
                self.noisy_fraction
            )));
        }
        if !(self.snr_tau.is_finite() && self.snr_tau >= 0.0) {
            return Err(Error::InvalidParameter(format!("SNR threshold {}", self.snr_tau)));
        }
        Ok(())
    }
}

/// Output of [`degrade_cube`].
#[derive(Debug, Clone, PartialEq)]
pub struct DegradedCube {
    /// Filtered and cropped ground truth.
    pub hr: SpectralCube,
    pub lr: SpectralCube,
    /// Keep decision per input channel.
    pub kept: Vec<bool>,
    /// Indices (into the kept channels) whose background was also noised.
    pub noisy_channels: Vec<usize>,
}

/// Filter → crop → (blur) → bicubic down → noise, for a whole cube.
pub fn degrade_cube(cube: &SpectralCube, cfg: &DegradationConfig) -> Result<DegradedCube> {
    cfg.validate()?;
    let (filtered, kept) = filter_low_snr(cube, cfg.snr_tau)?;
    let hr = crop_to_multiple(&filtered, cfg.scale)?;

    let n = hr.channel_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded_rng(cfg.seed, SUBSET_STREAM));
    let n_noisy = (cfg.noisy_fraction * n as f64).round() as usize;
    let mut noisy_channels: Vec<usize> = order[..n_noisy].to_vec();
    noisy_channels.sort_unstable();

    let blur = if cfg.blur_sigma > 0.0 {
        Some(gaussian_kernel(cfg.blur_sigma, None)?)
    } else {
        None
    };
    let lr_channels = hr
        .channels()
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let src = match &blur {
                Some(k) => convolve_periodic(c, k)?,
                None => c.clone(),
            };
            let down = bicubic_resize(&src, cfg.scale, ResizeDirection::Down)?;
            let with_bg = noisy_channels.binary_search(&i).is_ok();
            add_noise_stream(&down, cfg.noise_sigma, cfg.seed, i as u64, with_bg)
        })
        .collect::<Result<Vec<_>>>()?;
    let lr = SpectralCube::new(
        lr_channels,
        hr.pixel_size_um() * cfg.scale as f64,
        hr.labels().to_vec(),
    )?;
    Ok(DegradedCube {
        hr,
        lr,
        kept,
        noisy_channels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchOrigin {
    /// Index into the input cube (before SNR filtering).
    pub channel: usize,
    /// Top-left corner in LR pixels.
    pub row: usize,
    pub col: usize,
}

/// Aligned LR/HR training patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub scale: usize,
    /// LR patch side.
    pub patch: usize,
    pub lr: Vec<ChannelImage>,
    pub hr: Vec<ChannelImage>,
    pub origins: Vec<PatchOrigin>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.lr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lr.is_empty()
    }
}

/// Degrades `hr` and cuts `⌈area / patch²⌉` random patches per channel.
pub fn make_training_pairs(
    hr: &SpectralCube,
    dcfg: &DegradationConfig,
    tcfg: &TrainingConfig,
) -> Result<PairSet> {
    tcfg.validate()?;
    let degraded = degrade_cube(hr, dcfg)?;
    let p = tcfg.patch;
    let (lh, lw) = (degraded.lr.height(), degraded.lr.width());
    if lh < p || lw < p {
        return Err(Error::Degenerate(format!(
            "LR channels {lh}x{lw} are smaller than one {p}x{p} patch"
        )));
    }
    let source_index: Vec<usize> = degraded
        .kept
        .iter()
        .enumerate()
        .filter(|(_, &k)| k)
        .map(|(i, _)| i)
        .collect();
    let per_channel = (lh * lw).div_ceil(p * p);
    let s = dcfg.scale;
    let mut rng = seeded_rng(dcfg.seed, PATCH_STREAM);
    let mut set = PairSet {
        scale: s,
        patch: p,
        lr: Vec::new(),
        hr: Vec::new(),
        origins: Vec::new(),
    };
    for (i, (lr_c, hr_c)) in degraded
        .lr
        .channels()
        .iter()
        .zip(degraded.hr.channels())
        .enumerate()
    {
        for _ in 0..per_channel {
            let row = rng.random_range(0..=lh - p);
            let col = rng.random_range(0..=lw - p);
            set.lr.push(lr_c.window(row, col, p, p)?);
            set.hr.push(hr_c.window(row * s, col * s, p * s, p * s)?);
            set.origins.push(PatchOrigin {
                channel: source_index[i],
                row,
                col,
            });
        }
    }
    Ok(set)
}
