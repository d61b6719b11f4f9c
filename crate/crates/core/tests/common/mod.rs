#![allow(dead_code)]

use hyres_core::noise::{seeded_rng, uniform};
use hyres_core::ChannelImage;
use proptest::prelude::*;

/// Image of the given size with values drawn uniformly from `[lo, hi)`.
pub fn random_image(h: usize, w: usize, seed: u64, lo: f64, hi: f64) -> ChannelImage {
    let mut rng = seeded_rng(seed, 77);
    ChannelImage::from_fn(h, w, |_, _| lo + (hi - lo) * uniform(&mut rng))
}

pub fn image_strategy(min_side: usize, max_side: usize) -> impl Strategy<Value = ChannelImage> {
    (min_side..=max_side, min_side..=max_side).prop_flat_map(|(h, w)| {
        prop::collection::vec(-1.0f64..1.0, h * w)
            .prop_map(move |d| ChannelImage::new(h, w, d).unwrap())
    })
}

/// Pair of same-sized images with at least one nonzero value each.
pub fn image_pair_strategy(min_side: usize, max_side: usize) -> impl Strategy<Value = (ChannelImage, ChannelImage)> {
    (min_side..=max_side, min_side..=max_side).prop_flat_map(|(h, w)| {
        (
            prop::collection::vec(0.05f64..1.0, h * w),
            prop::collection::vec(-1.0f64..1.0, h * w),
        )
            .prop_map(move |(a, b)| {
                (ChannelImage::new(h, w, a).unwrap(), ChannelImage::new(h, w, b).unwrap())
            })
    })
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
