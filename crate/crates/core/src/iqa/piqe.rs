//! Training-free block-wise distortion score on the MSCN field.

use crate::cube::ChannelImage;
use crate::error::{Error, Result};

use super::nss::{mscn, MIN_SIDE};

pub const BLOCK: usize = 16;
pub const ACTIVITY_THRESHOLD: f64 = 0.1;
pub const SEGMENT_THRESHOLD: f64 = 0.1;
pub const SEGMENT_LEN: usize = 6;
pub const PIQE_C: f64 = 1.0;

fn std_dev(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, s) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n < 2 {
        return 0.0;
    }
    let m = s / n as f64;
    (values.map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Per-block verdict used by [`piqe_score`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockAssessment {
    pub active: bool,
    pub noticeable: bool,
    pub noisy: bool,
    pub variance: f64,
}

impl BlockAssessment {
    pub fn distortion(&self) -> f64 {
        if !self.active {
            return 0.0;
        }
        f64::from(u8::from(self.noticeable)) + if self.noisy { self.variance } else { 0.0 }
    }
}

/// `block` is `BLOCK × BLOCK` row-major MSCN values.
pub fn assess_block(block: &[f64]) -> BlockAssessment {
    let n = BLOCK * BLOCK;
    let mean_abs = block.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let variance = std_dev(block.iter().copied()).powi(2);
    if mean_abs <= ACTIVITY_THRESHOLD {
        return BlockAssessment {
            active: false,
            noticeable: false,
            noisy: false,
            variance,
        };
    }
    let at = |r: usize, c: usize| block[r * BLOCK + c];
    let edges: [Vec<f64>; 4] = [
        (0..BLOCK).map(|c| at(0, c)).collect(),
        (0..BLOCK).map(|c| at(BLOCK - 1, c)).collect(),
        (0..BLOCK).map(|r| at(r, 0)).collect(),
        (0..BLOCK).map(|r| at(r, BLOCK - 1)).collect(),
    ];
    let noticeable = edges.iter().any(|e| {
        e.windows(SEGMENT_LEN)
            .any(|seg| std_dev(seg.iter().copied()) < SEGMENT_THRESHOLD)
    });

    let (c1, c2) = (BLOCK / 2 - 1, BLOCK / 2);
    let center = (0..BLOCK).flat_map(|r| [at(r, c1), at(r, c2)]);
    let surround = (0..BLOCK).flat_map(move |r| {
        (0..BLOCK)
            .filter(move |&c| c != c1 && c != c2)
            .map(move |c| block[r * BLOCK + c])
    });
    let sur = std_dev(surround);
    let cen_sur = if sur > 0.0 { std_dev(center) / sur } else { 0.0 };
    let sigma = variance.sqrt();
    let denom = sigma.max(cen_sur);
    let beta = if denom > 0.0 { (sigma - cen_sur).abs() / denom } else { 0.0 };
    BlockAssessment {
        active: true,
        noticeable,
        noisy: sigma > 2.0 * beta,
        variance,
    }
}

/// Score in `[0, 100]`, lower is better; a constant image scores 100.
pub fn piqe_score(image: &ChannelImage) -> Result<f64> {
    let (h, w) = image.dims();
    if h < MIN_SIDE || w < MIN_SIDE {
        return Err(Error::InvalidParameter(format!(
            "PIQE needs at least {MIN_SIDE}x{MIN_SIDE}, got {h}x{w}"
        )));
    }
    let field = mscn(image);
    let (br, bc) = (h / BLOCK, w / BLOCK);
    let mut block = vec![0.0; BLOCK * BLOCK];
    let (mut active, mut total) = (0usize, 0.0);
    for i in 0..br {
        for j in 0..bc {
            for r in 0..BLOCK {
                let src = (i * BLOCK + r) * w + j * BLOCK;
                block[r * BLOCK..(r + 1) * BLOCK].copy_from_slice(&field[src..src + BLOCK]);
            }
            let a = assess_block(&block);
            if a.active {
                active += 1;
                total += a.distortion();
            }
        }
    }
    Ok((100.0 * (total + PIQE_C) / (active as f64 + PIQE_C)).clamp(0.0, 100.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::white_noise;

    #[test]
    fn constant_image_is_maximal() {
        assert_eq!(piqe_score(&ChannelImage::filled(64, 64, 0.5)).unwrap(), 100.0);
    }

    #[test]
    fn white_noise_scores_high() {
        let s = piqe_score(&white_noise(256, 256, 1)).unwrap();
        assert!(s > 60.0, "{s}");
    }

    #[test]
    fn flat_edge_is_noticeable() {
        let mut b: Vec<f64> = (0..BLOCK * BLOCK).map(|k| if k % 3 == 0 { 1.0 } else { -1.0 }).collect();
        b[..BLOCK].fill(0.5);
        assert!(assess_block(&b).noticeable);
    }

    #[test]
    fn rejects_small_input() {
        assert!(piqe_score(&ChannelImage::zeros(16, 64)).is_err());
    }
}
