//! Deterministic synthetic test objects.

use crate::cube::{ChannelImage, SpectralCube};
use crate::error::Result;
use crate::noise::{seeded_rng, uniform, GaussianStream};

/// Unit-variance Gaussian white noise.
pub fn white_noise(height: usize, width: usize, seed: u64) -> ChannelImage {
    let mut g = GaussianStream::new(seed);
    ChannelImage::from_fn(height, width, |_, _| g.next_standard())
}

/// Uniform `[0, 1)` noise: a flat-spectrum object with a DC offset.
pub fn uniform_noise(height: usize, width: usize, seed: u64) -> ChannelImage {
    let mut rng = seeded_rng(seed, 0);
    ChannelImage::from_fn(height, width, |_, _| uniform(&mut rng))
}

/// Smooth tissue-like object in `[0, 1]`: a sum of random Gaussian blobs
/// of assorted sizes on a zero background, plus a few sharp-edged discs.
pub fn blob_phantom(height: usize, width: usize, seed: u64) -> ChannelImage {
    let mut rng = seeded_rng(seed, 1);
    let scale = height.min(width) as f64;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..24)
        .map(|_| {
            let r = uniform(&mut rng) * height as f64;
            let c = uniform(&mut rng) * width as f64;
            let s = scale * (0.02 + 0.08 * uniform(&mut rng));
            let a = 0.2 + 0.8 * uniform(&mut rng);
            (r, c, s, a)
        })
        .collect();
    let discs: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let r = uniform(&mut rng) * height as f64;
            let c = uniform(&mut rng) * width as f64;
            let rad = scale * (0.02 + 0.05 * uniform(&mut rng));
            let a = 0.1 + 0.3 * uniform(&mut rng);
            (r, c, rad, a)
        })
        .collect();
    let raw = ChannelImage::from_fn(height, width, |y, x| {
        let (y, x) = (y as f64, x as f64);
        let mut v = 0.0;
        for &(r, c, s, a) in &blobs {
            let d2 = (y - r).powi(2) + (x - c).powi(2);
            v += a * (-d2 / (2.0 * s * s)).exp();
        }
        for &(r, c, rad, a) in &discs {
            if (y - r).powi(2) + (x - c).powi(2) <= rad * rad {
                v += a;
            }
        }
        v
    });
    let peak = raw.data().iter().cloned().fold(0.0, f64::max).max(1e-12);
    raw.map(|v| (v / peak).clamp(0.0, 1.0))
}

/// Dense field of small Gaussian spots (σ 0.8–3 px), wrapped periodically
/// and normalized to `[0, 1]`. Carries energy up to high spatial frequencies.
pub fn textured_phantom(height: usize, width: usize, seed: u64) -> ChannelImage {
    let mut rng = seeded_rng(seed, 3);
    let mut img = vec![0.0; height * width];
    for _ in 0..height * width / 64 {
        let r = uniform(&mut rng) * height as f64;
        let c = uniform(&mut rng) * width as f64;
        let s = 0.8 + 2.2 * uniform(&mut rng);
        let a = 0.2 + 0.8 * uniform(&mut rng);
        let reach = (4.0 * s).ceil() as i64;
        let (r0, c0) = (r.floor() as i64, c.floor() as i64);
        for dy in -reach..=reach {
            let y = (r0 + dy).rem_euclid(height as i64) as usize;
            let fy = (r0 + dy) as f64 - r;
            for dx in -reach..=reach {
                let x = (c0 + dx).rem_euclid(width as i64) as usize;
                let fx = (c0 + dx) as f64 - c;
                img[y * width + x] += a * (-(fy * fy + fx * fx) / (2.0 * s * s)).exp();
            }
        }
    }
    let peak = img.iter().cloned().fold(0.0, f64::max).max(1e-12);
    ChannelImage::from_fn(height, width, |y, x| img[y * width + x] / peak)
}

/// Cube of blob phantoms with labels `100, 101, …`.
pub fn phantom_cube(
    channels: usize,
    height: usize,
    width: usize,
    pixel_size_um: f64,
    seed: u64,
) -> Result<SpectralCube> {
    let chans = (0..channels)
        .map(|i| blob_phantom(height, width, seed.wrapping_mul(1000).wrapping_add(i as u64)))
        .collect();
    let labels = (0..channels).map(|i| 100.0 + i as f64).collect();
    SpectralCube::new(chans, pixel_size_um, labels)
}

/// Cube of textured phantoms with labels `100, 101, …`.
pub fn textured_cube(
    channels: usize,
    height: usize,
    width: usize,
    pixel_size_um: f64,
    seed: u64,
) -> Result<SpectralCube> {
    let chans = (0..channels)
        .map(|i| textured_phantom(height, width, seed.wrapping_mul(1000).wrapping_add(i as u64)))
        .collect();
    let labels = (0..channels).map(|i| 100.0 + i as f64).collect();
    SpectralCube::new(chans, pixel_size_um, labels)
}
