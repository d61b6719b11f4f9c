//! Natural-scene statistics: MSCN coefficients and (A)GGD fits.

use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;

use crate::cube::ChannelImage;
use crate::error::{Error, Result};

pub const MSCN_WINDOW: usize = 7;
pub const MSCN_SIGMA: f64 = 7.0 / 6.0;
/// Stabilizer for a `[0, 1]` intensity range (1 on the 8-bit scale).
pub const MSCN_C: f64 = 1.0 / 255.0;
pub const FEATURE_COUNT: usize = 36;
pub const MIN_SIDE: usize = 32;

const SHAPE_MIN: f64 = 0.2;
const SHAPE_STEP: f64 = 0.001;
const SHAPE_STEPS: usize = 9801;

/// Pairwise-product offsets: horizontal, vertical, main and anti diagonal.
pub const PRODUCT_OFFSETS: [(usize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

/// Normalized 1-D Gaussian taps.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let mut w: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable same-size filtering with replicated borders.
pub fn filter_replicate(data: &[f64], height: usize, width: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; height * width];
    for i in 0..height {
        for j in 0..width {
            tmp[i * width + j] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * data[i * width + clamp(j as isize + k as isize - r, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; height * width];
    for i in 0..height {
        for j in 0..width {
            out[i * width + j] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp[clamp(i as isize + k as isize - r, height) * width + j])
                .sum();
        }
    }
    out
}

/// Separable filtering over positions where the window fits entirely.
pub fn filter_valid(data: &[f64], height: usize, width: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = taps.len();
    let (oh, ow) = (height + 1 - n, width + 1 - n);
    let mut tmp = vec![0.0; height * ow];
    for i in 0..height {
        for j in 0..ow {
            tmp[i * ow + j] = taps.iter().enumerate().map(|(k, t)| t * data[i * width + j + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = taps.iter().enumerate().map(|(k, t)| t * tmp[(i + k) * ow + j]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean-subtracted contrast-normalized coefficients `(I − μ)/(σ + C)`.
pub fn mscn(image: &ChannelImage) -> Vec<f64> {
    let (h, w) = image.dims();
    let taps = gaussian_taps(MSCN_WINDOW, MSCN_SIGMA);
    let x = image.data();
    let mu = filter_replicate(x, h, w, &taps);
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    let mu2 = filter_replicate(&sq, h, w, &taps);
    x.iter()
        .zip(mu.iter().zip(&mu2))
        .map(|(&v, (&m, &m2))| {
            let sigma = (m2 - m * m).abs().sqrt();
            let z = (v - m) / (sigma + MSCN_C);
            // rounding in flat regions leaves ~1e-13 residue
            if z.abs() < 1e-9 {
                0.0
            } else {
                z
            }
        })
        .collect()
}

struct ShapeTables {
    shapes: Vec<f64>,
    /// `Γ(1/a)Γ(3/a)/Γ(2/a)²`
    ggd_ratio: Vec<f64>,
    /// `Γ(2/a)²/(Γ(1/a)Γ(3/a))`
    aggd_ratio: Vec<f64>,
}

fn tables() -> &'static ShapeTables {
    static T: OnceLock<ShapeTables> = OnceLock::new();
    T.get_or_init(|| {
        let shapes: Vec<f64> = (0..SHAPE_STEPS).map(|i| SHAPE_MIN + SHAPE_STEP * i as f64).collect();
        let log_r: Vec<f64> = shapes
            .iter()
            .map(|a| ln_gamma(1.0 / a) + ln_gamma(3.0 / a) - 2.0 * ln_gamma(2.0 / a))
            .collect();
        ShapeTables {
            ggd_ratio: log_r.iter().map(|l| l.exp()).collect(),
            aggd_ratio: log_r.iter().map(|l| (-l).exp()).collect(),
            shapes,
        }
    })
}

fn argmin_by(values: &[f64], f: impl Fn(f64) -> f64) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, &v) in values.iter().enumerate() {
        let e = f(v);
        if e < best.1 {
            best = (i, e);
        }
    }
    best.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgdFit {
    pub shape: f64,
    pub variance: f64,
}

/// Shape 2, zero spread: what a field of zeros reports.
pub const DEGENERATE_GGD: GgdFit = GgdFit { shape: 2.0, variance: 0.0 };

/// Moment-matching GGD fit on `E[x²]/E[|x|]²`.
pub fn fit_ggd(x: &[f64]) -> GgdFit {
    let n = x.len() as f64;
    let var = x.iter().map(|v| v * v).sum::<f64>() / n;
    let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    if var <= 0.0 || mean_abs <= 0.0 {
        return DEGENERATE_GGD;
    }
    let rho = var / (mean_abs * mean_abs);
    let t = tables();
    let i = argmin_by(&t.ggd_ratio, |r| (rho - r).abs());
    GgdFit {
        shape: t.shapes[i],
        variance: var,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggdFit {
    pub shape: f64,
    pub mean: f64,
    pub left_variance: f64,
    pub right_variance: f64,
}

pub const DEGENERATE_AGGD: AggdFit = AggdFit {
    shape: 2.0,
    mean: 0.0,
    left_variance: 0.0,
    right_variance: 0.0,
};

/// Moment-matching AGGD fit.
pub fn fit_aggd(x: &[f64]) -> AggdFit {
    let (mut sl, mut nl, mut sr, mut nr) = (0.0, 0usize, 0.0, 0usize);
    for &v in x {
        if v < 0.0 {
            sl += v * v;
            nl += 1;
        } else if v > 0.0 {
            sr += v * v;
            nr += 1;
        }
    }
    if nl == 0 || nr == 0 {
        return DEGENERATE_AGGD;
    }
    let left_std = (sl / nl as f64).sqrt();
    let right_std = (sr / nr as f64).sqrt();
    let n = x.len() as f64;
    let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let g = left_std / right_std;
    let r_hat = mean_abs * mean_abs / mean_sq;
    let r_norm = r_hat * (g.powi(3) + 1.0) * (g + 1.0) / (g * g + 1.0).powi(2);
    let t = tables();
    let i = argmin_by(&t.aggd_ratio, |r| (r - r_norm).powi(2));
    let a = t.shapes[i];
    let scale = (ln_gamma(1.0 / a) - ln_gamma(3.0 / a)).exp().sqrt();
    let (bl, br) = (left_std * scale, right_std * scale);
    AggdFit {
        shape: a,
        mean: (br - bl) * (ln_gamma(2.0 / a) - ln_gamma(1.0 / a)).exp(),
        left_variance: left_std * left_std,
        right_variance: right_std * right_std,
    }
}

/// Products of MSCN neighbours along `offset` over the overlapping region.
pub fn pairwise_product(field: &[f64], height: usize, width: usize, offset: (usize, isize)) -> Vec<f64> {
    let (dr, dc) = offset;
    let (c0, c1) = if dc < 0 { (dc.unsigned_abs(), width) } else { (0, width - dc as usize) };
    let mut out = Vec::with_capacity((height - dr) * (c1 - c0));
    for i in 0..height - dr {
        for j in c0..c1 {
            let k = (j as isize + dc) as usize;
            out.push(field[i * width + j] * field[(i + dr) * width + k]);
        }
    }
    out
}

/// 2×2 box average followed by ×2 decimation.
pub fn half_scale(image: &ChannelImage) -> ChannelImage {
    let (h, w) = (image.height() / 2, image.width() / 2);
    ChannelImage::from_fn(h, w, |i, j| {
        0.25 * (image.get(2 * i, 2 * j)
            + image.get(2 * i + 1, 2 * j)
            + image.get(2 * i, 2 * j + 1)
            + image.get(2 * i + 1, 2 * j + 1))
    })
}

/// BRISQUE feature vector: per scale, the GGD `(shape, variance)` of the
/// MSCN field, then `(shape, mean, left variance, right variance)` of each
/// directional product.
#[derive(Debug, Clone, PartialEq)]
pub struct NssFeatures([f64; FEATURE_COUNT]);

impl NssFeatures {
    pub fn new(values: [f64; FEATURE_COUNT]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite NSS feature".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }

    pub fn len(&self) -> usize {
        FEATURE_COUNT
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn scale_features(image: &ChannelImage, out: &mut Vec<f64>) {
    let (h, w) = image.dims();
    let field = mscn(image);
    let g = fit_ggd(&field);
    out.extend([g.shape, g.variance]);
    for off in PRODUCT_OFFSETS {
        let a = fit_aggd(&pairwise_product(&field, h, w, off));
        out.extend([a.shape, a.mean, a.left_variance, a.right_variance]);
    }
}

pub fn brisque_features(image: &ChannelImage) -> Result<NssFeatures> {
    if image.height() < MIN_SIDE || image.width() < MIN_SIDE {
        return Err(Error::InvalidParameter(format!(
            "BRISQUE needs at least {MIN_SIDE}x{MIN_SIDE}, got {}x{}",
            image.height(),
            image.width()
        )));
    }
    let mut v = Vec::with_capacity(FEATURE_COUNT);
    scale_features(image, &mut v);
    scale_features(&half_scale(image), &mut v);
    let arr: [f64; FEATURE_COUNT] = v.try_into().expect("feature count");
    NssFeatures::new(arr)
}
