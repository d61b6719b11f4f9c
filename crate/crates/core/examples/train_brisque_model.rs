//! Regenerates the bundled BRISQUE scorer.
//!
//! Usage: `cargo run --release -p hyres-core --example train_brisque_model [OUT]`
//!
//! Phantoms are blurred and noised over a fixed ladder; each rung gets a
//! target score that rises with both degradations. A ridge regression maps
//! the 36 NSS features onto that target.

use std::path::PathBuf;

use hyres_core::degrade::add_gaussian_noise;
use hyres_core::fourier::{convolve_periodic, gaussian_kernel};
use hyres_core::iqa::{brisque_features, fit_brisque_model};
use hyres_core::phantom::blob_phantom;

const SIDE: usize = 128;
const PHANTOMS: u64 = 12;
const NOISE: [f64; 9] = [0.0, 0.005, 0.01, 0.02, 0.04, 0.08, 0.12, 0.16, 0.2];
const BLUR: [f64; 4] = [0.0, 0.75, 1.5, 3.0];
const RIDGE: f64 = 1e-2;

fn target(noise: f64, blur: f64) -> f64 {
    let n = (noise / 0.2).min(1.0);
    let b = (blur / 3.0).min(1.0);
    10.0 + 80.0 * (1.0 - (1.0 - n) * (1.0 - b))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args_os().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/iqa/brisque_model.txt")
    });
    let mut feats = Vec::new();
    let mut targets = Vec::new();
    for seed in 0..PHANTOMS {
        let clean = blob_phantom(SIDE, SIDE, 5000 + seed);
        for (bi, &blur) in BLUR.iter().enumerate() {
            let blurred = if blur > 0.0 {
                convolve_periodic(&clean, &gaussian_kernel(blur, None)?)?
            } else {
                clean.clone()
            };
            for (ni, &noise) in NOISE.iter().enumerate() {
                let img = if noise > 0.0 {
                    let s = 10_000 * seed + 100 * bi as u64 + ni as u64;
                    add_gaussian_noise(&blurred, noise, s, true)?
                } else {
                    blurred.clone()
                };
                feats.push(brisque_features(&img)?);
                targets.push(target(noise, blur));
            }
        }
    }
    let note = format!(
        "Linear BRISQUE scorer fit by ridge regression (lambda {RIDGE}) on {} synthetic samples:\n\
         {PHANTOMS} blob phantoms {SIDE}x{SIDE}, Gaussian blur sigma {BLUR:?} px, noise sigma {NOISE:?}.\n\
         Target 10 + 80*(1 - (1 - noise/0.2)(1 - blur/3)). Regenerate with the train_brisque_model example.",
        feats.len()
    );
    let model = fit_brisque_model(&feats, &targets, RIDGE, note)?;
    let rmse = (feats
        .iter()
        .zip(&targets)
        .map(|(f, t)| (model.raw_score(f) - t).powi(2))
        .sum::<f64>()
        / feats.len() as f64)
        .sqrt();
    model.save(&out)?;
    eprintln!("wrote {} (training rmse {rmse:.3})", out.display());
    Ok(())
}
