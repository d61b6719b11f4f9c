//! Image quality assessment: full-reference PSNR and SSIM, no-reference
//! BRISQUE, PIQE and their combination CRISQUE.

mod brisque;
pub mod nss;
mod piqe;

use std::fmt::Write as _;

pub use brisque::{brisque_score, fit_brisque_model, BrisqueModel};
pub use nss::{brisque_features, mscn, NssFeatures, FEATURE_COUNT};
pub use piqe::{assess_block, piqe_score, BlockAssessment};

use crate::cube::{ChannelImage, SpectralCube};
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Peak signal-to-noise ratio in dB for unit peak; `+∞` for identical images.
pub fn psnr(test: &ChannelImage, reference: &ChannelImage) -> Result<f64> {
    test.ensure_same_dims(reference, "PSNR test vs reference")?;
    let mse = test
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / test.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

/// Mean SSIM over all positions where the 11×11 Gaussian window fits.
pub fn ssim(test: &ChannelImage, reference: &ChannelImage) -> Result<f64> {
    test.ensure_same_dims(reference, "SSIM test vs reference")?;
    let (h, w) = test.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidParameter(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let taps = nss::gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let (x, y) = (test.data(), reference.data());
    let filt = |v: &[f64]| nss::filter_valid(v, h, w, &taps).0;
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mx = filt(x);
    let my = filt(y);
    let mxx = filt(&prod(x, x));
    let myy = filt(&prod(y, y));
    let mxy = filt(&prod(x, y));
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|k| {
            let (ux, uy) = (mx[k], my[k]);
            let sxx = mxx[k] - ux * ux;
            let syy = myy[k] - uy * uy;
            let sxy = mxy[k] - ux * uy;
            ((2.0 * ux * uy + SSIM_C1) * (2.0 * sxy + SSIM_C2))
                / ((ux * ux + uy * uy + SSIM_C1) * (sxx + syy + SSIM_C2))
        })
        .sum();
    Ok(total / n as f64)
}

/// `100·(1 − H)` with `H` the harmonic mean of `brisque/100` and `piqe/100`.
pub fn crisque(brisque: f64, piqe: f64) -> Result<f64> {
    for (name, v) in [("BRISQUE", brisque), ("PIQE", piqe)] {
        if !(0.0..=100.0).contains(&v) {
            return Err(Error::InvalidParameter(format!("{name} score {v} outside [0, 100]")));
        }
    }
    let (b, p) = (brisque / 100.0, piqe / 100.0);
    let h = if b == 0.0 || p == 0.0 { 0.0 } else { 2.0 * b * p / (b + p) };
    Ok(((1.0 - h) * 100.0).clamp(0.0, 100.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelScores {
    pub channel: usize,
    pub label: f64,
    pub brisque: f64,
    pub piqe: f64,
    pub crisque: f64,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqaReport {
    pub channels: Vec<ChannelScores>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl IqaReport {
    fn median_of(&self, f: impl Fn(&ChannelScores) -> Option<f64>) -> Option<f64> {
        median(self.channels.iter().filter_map(f).collect())
    }

    pub fn median_brisque(&self) -> Option<f64> {
        self.median_of(|c| Some(c.brisque))
    }

    pub fn median_piqe(&self) -> Option<f64> {
        self.median_of(|c| Some(c.piqe))
    }

    pub fn median_crisque(&self) -> Option<f64> {
        self.median_of(|c| Some(c.crisque))
    }

    pub fn median_psnr(&self) -> Option<f64> {
        self.median_of(|c| c.psnr_db)
    }

    pub fn median_ssim(&self) -> Option<f64> {
        self.median_of(|c| c.ssim)
    }

    /// `channel,mz,brisque,piqe,crisque,psnr_db,ssim` plus median comments.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("channel,mz,brisque,piqe,crisque,psnr_db,ssim\n");
        for c in &self.channels {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                c.channel,
                c.label,
                c.brisque,
                c.piqe,
                c.crisque,
                cell(c.psnr_db),
                cell(c.ssim)
            );
        }
        for (name, v) in [
            ("brisque", self.median_brisque()),
            ("piqe", self.median_piqe()),
            ("crisque", self.median_crisque()),
            ("psnr_db", self.median_psnr()),
            ("ssim", self.median_ssim()),
        ] {
            let _ = writeln!(s, "# median_{name}={}", cell(v));
        }
        s
    }
}

/// `(brisque, piqe, crisque, psnr_db, ssim)`; the last two need a reference.
pub type ChannelAssessment = (f64, f64, f64, Option<f64>, Option<f64>);

pub fn assess_channel(
    image: &ChannelImage,
    reference: Option<&ChannelImage>,
    model: &BrisqueModel,
) -> Result<ChannelAssessment> {
    let b = brisque_score(&brisque_features(image)?, model);
    let p = piqe_score(image)?;
    let c = crisque(b, p)?;
    let (ps, ss) = match reference {
        Some(r) => (Some(psnr(image, r)?), Some(ssim(image, r)?)),
        None => (None, None),
    };
    Ok((b, p, c, ps, ss))
}

/// Scores every channel; the reference, when given, must share dimensions.
pub fn assess_cube(
    cube: &SpectralCube,
    reference: Option<&SpectralCube>,
    model: &BrisqueModel,
) -> Result<IqaReport> {
    if let Some(r) = reference {
        if r.channel_count() != cube.channel_count() {
            return Err(Error::DimensionMismatch(format!(
                "reference has {} channels, test has {}",
                r.channel_count(),
                cube.channel_count()
            )));
        }
    }
    let channels = cube
        .channels()
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let rref = reference.map(|r| &r.channels()[i]);
            let (brisque, piqe, crisque, psnr_db, ssim) = assess_channel(img, rref, model)?;
            Ok(ChannelScores {
                channel: i,
                label: cube.labels()[i],
                brisque,
                piqe,
                crisque,
                psnr_db,
                ssim,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IqaReport { channels })
}
