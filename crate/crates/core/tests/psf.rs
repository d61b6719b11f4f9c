mod common;

use common::random_image;
use std::f64::consts::PI;

use hyres_core::fourier::{convolve_periodic, dft2, gaussian_kernel, idft2, ComplexField};
use hyres_core::noise::{seeded_rng, uniform, GaussianStream};
use hyres_core::phantom::white_noise;
use hyres_core::psf::{
    compare_deblur, difference_psf, fit_radial_gaussian, fit_radial_gaussian_image, profile_to_csv,
    simulate_observation, DifferencePsf, ObservationConfig, FWHM_PER_SIGMA,
};
use hyres_core::ChannelImage;
use proptest::prelude::*;
use rustfft::num_complex::Complex64;

fn gaussian_image(side: usize, a: f64, sigma: f64, c: f64) -> ChannelImage {
    let m = (side / 2) as f64;
    ChannelImage::from_fn(side, side, |r, q| {
        let d2 = (r as f64 - m).powi(2) + (q as f64 - m).powi(2);
        a * (-d2 / (2.0 * sigma * sigma)).exp() + c
    })
}

fn blur(img: &ChannelImage, sigma: f64) -> ChannelImage {
    convolve_periodic(img, &gaussian_kernel(sigma, None).unwrap()).unwrap()
}

/// Real image whose spectrum has unit magnitude and seeded random phases.
fn flat_spectrum_image(side: usize, seed: u64) -> ChannelImage {
    let mut rng = seeded_rng(seed, 5);
    let mut field = ComplexField::zeros(side, side);
    for u in 0..side {
        for v in 0..side {
            let (cu, cv) = ((side - u) % side, (side - v) % side);
            let k = u * side + v;
            let mirror = cu * side + cv;
            if mirror < k {
                continue;
            }
            let z = if mirror == k {
                Complex64::new(if uniform(&mut rng) < 0.5 { -1.0 } else { 1.0 }, 0.0)
            } else {
                Complex64::from_polar(1.0, 2.0 * PI * uniform(&mut rng))
            };
            field.data_mut()[k] = z;
            field.data_mut()[mirror] = z.conj();
        }
    }
    idft2(&field).unwrap()
}

fn center_share(psf: &DifferencePsf) -> f64 {
    let (cy, cx) = psf.center();
    let total: f64 = psf.kernel.data().iter().map(|v| v.abs()).sum();
    psf.kernel.get(cy, cx).abs() / total
}

fn power_range(img: &ChannelImage) -> (f64, f64) {
    let p: Vec<f64> = dft2(img).data().iter().map(|z| z.norm_sqr()).collect();
    (p.iter().copied().fold(f64::INFINITY, f64::min), p.iter().copied().fold(0.0, f64::max))
}

#[test]
fn identical_inputs_give_a_centered_impulse() {
    let a = flat_spectrum_image(64, 3);
    let psf = difference_psf(&a, &a, 1e-8).unwrap();
    assert!(center_share(&psf) >= 0.99);
    assert_eq!(psf.offset, 0.0);
}

/// One nearly empty spectral sample is enough to move the ratio off 1 there;
/// the leaked mass spreads over the whole kernel at the predicted level.
#[test]
fn weak_spectral_sample_leaks_predicted_mass() {
    let a = white_noise(64, 64, 3);
    let (min_p, max_p) = power_range(&a);
    let eps = 1e-8;
    let d = eps * max_p / (min_p + eps * max_p);
    assert!(d > 0.05, "{d}");
    let psf = difference_psf(&a, &a, eps).unwrap();
    assert!(center_share(&psf) < 0.99);
    let (cy, cx) = psf.center();
    let leak = psf
        .kernel
        .data()
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != cy * 64 + cx)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max);
    assert!(leak <= 2.0 * d / 4096.0 * 1.05, "{leak} vs {}", 2.0 * d / 4096.0);
}

#[test]
fn exact_gaussian_is_recovered() {
    let fit = fit_radial_gaussian_image(&gaussian_image(64, 2.0, 3.0, 0.5)).unwrap();
    assert!((fit.amplitude / 2.0 - 1.0).abs() < 1e-6);
    assert!((fit.sigma / 3.0 - 1.0).abs() < 1e-6);
    assert!((fit.offset / 0.5 - 1.0).abs() < 1e-6);
    assert!((fit.fwhm - 7.0645).abs() < 1e-4);
    assert!((fit.fwhm / fit.sigma - FWHM_PER_SIGMA).abs() < 1e-9);
}

#[test]
fn noisy_gaussian_fit_is_stable() {
    let clean = gaussian_image(64, 1.0, 2.5, 0.0);
    for seed in 0..100 {
        let mut g = GaussianStream::new(seed);
        let img = clean.map(|v| g.next_normal(v, 0.01));
        let fit = fit_radial_gaussian_image(&img).unwrap();
        assert!((fit.sigma / 2.5 - 1.0).abs() < 0.03, "seed {seed}: {}", fit.sigma);
    }
}

#[test]
fn blur_pairs_recover_the_quadrature_difference() {
    let obj = white_noise(128, 128, 11);
    for (s1, s2) in [(3.0, 2.0), (4.0, 2.0), (2.0, 1.0)] {
        let psf = difference_psf(&blur(&obj, s1), &blur(&obj, s2), 1e-6).unwrap();
        let fit = fit_radial_gaussian(&psf).unwrap();
        let expect = (s1 * s1 - s2 * s2).sqrt();
        assert!((fit.sigma / expect - 1.0).abs() < 0.05, "({s1},{s2}): {}", fit.sigma);
    }
}

#[test]
fn deblur_comparison_ratios() {
    let obj = white_noise(128, 128, 12);
    let (g1, g2, g3) = (blur(&obj, 1.0), blur(&obj, 2.0), blur(&obj, 3.0));
    let same = compare_deblur(&g2, &g2, &g3, 1e-6).unwrap();
    assert!((same.ratio - 1.0).abs() < 1e-12);
    let cmp = compare_deblur(&g1, &g2, &g3, 1e-6).unwrap();
    let expect = 8f64.sqrt() / 5f64.sqrt();
    assert!((cmp.ratio / expect - 1.0).abs() < 0.08, "{}", cmp.ratio);
}

#[test]
fn swapped_order_gives_the_wider_fit() {
    let obj = white_noise(128, 128, 13);
    let (wide, narrow) = (blur(&obj, 3.0), blur(&obj, 2.0));
    let proper = fit_radial_gaussian(&difference_psf(&wide, &narrow, 1e-6).unwrap()).unwrap();
    match difference_psf(&narrow, &wide, 1e-6).and_then(|p| fit_radial_gaussian(&p)) {
        Ok(fit) => assert!(fit.sigma > proper.sigma, "{} vs {}", fit.sigma, proper.sigma),
        Err(e) => assert!(matches!(e, hyres_core::Error::FitFailure(_)), "{e}"),
    }
}

#[test]
fn profile_csv_layout() {
    let psf = difference_psf(&blur(&white_noise(32, 32, 1), 2.0), &white_noise(32, 32, 1), 1e-6).unwrap();
    let csv = profile_to_csv(&psf, fit_radial_gaussian(&psf).ok().as_ref());
    assert!(csv.starts_with("rho_px,mean_value,n_samples\n0,"));
}

#[test]
fn simulation_examples() {
    let obj = random_image(32, 32, 2, 0.0, 1.0);
    let none = ObservationConfig { blur_sigma: 0.0, noise_sigma: 0.0, seed: 0 };
    assert_eq!(simulate_observation(&obj, &none).unwrap(), obj);

    let flat = ChannelImage::filled(32, 32, 0.6);
    let blurred = simulate_observation(&flat, &ObservationConfig { blur_sigma: 2.0, ..none }).unwrap();
    assert!(blurred.data().iter().all(|v| (v - 0.6).abs() < 1e-12));

    let cfg = ObservationConfig { blur_sigma: 0.0, noise_sigma: 0.05, seed: 9 };
    let noise = simulate_observation(&ChannelImage::zeros(1000, 1000), &cfg).unwrap();
    let mean = noise.mean();
    let std = (noise.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / noise.len() as f64).sqrt();
    assert!(mean.abs() <= 3.0 * 0.05 / 1000.0, "{mean}");
    assert!((std / 0.05 - 1.0).abs() < 0.01, "{std}");
    assert_eq!(noise, simulate_observation(&ChannelImage::zeros(1000, 1000), &cfg).unwrap());
    assert!(simulate_observation(&obj, &ObservationConfig { noise_sigma: -1.0, ..cfg }).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn self_difference_is_impulse_like(seed in 0u64..1000, eps in 1e-10f64..1e-6) {
        let a = white_noise(32, 32, seed);
        let (min_p, max_p) = power_range(&a);
        prop_assume!(eps * max_p <= 1e-3 * min_p);
        prop_assert!(center_share(&difference_psf(&a, &a, eps).unwrap()) >= 0.99);
    }

    #[test]
    fn flat_spectrum_self_difference_is_impulse(seed in 0u64..1000, eps in 1e-10f64..1e-6) {
        let a = flat_spectrum_image(32, seed);
        prop_assert!(center_share(&difference_psf(&a, &a, eps).unwrap()) >= 0.99);
    }

    #[test]
    fn fwhm_is_proportional_to_sigma(sigma in 0.8f64..6.0, a in 0.1f64..5.0, c in -1.0f64..1.0) {
        let fit = fit_radial_gaussian_image(&gaussian_image(48, a, sigma, c)).unwrap();
        prop_assert!((fit.fwhm / fit.sigma - FWHM_PER_SIGMA).abs() < 1e-9);
        prop_assert!((fit.sigma / sigma - 1.0).abs() < 1e-6);
    }

    #[test]
    fn simulation_is_reproducible(seed in any::<u64>(), blur in 0.0f64..2.0, noise in 0.0f64..0.2) {
        let obj = random_image(24, 24, 5, 0.0, 1.0);
        let cfg = ObservationConfig { blur_sigma: blur, noise_sigma: noise, seed };
        prop_assert_eq!(simulate_observation(&obj, &cfg).unwrap(), simulate_observation(&obj, &cfg).unwrap());
    }
}
