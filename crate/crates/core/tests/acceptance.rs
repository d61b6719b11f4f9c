//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any of them fails.

use std::time::{Duration, Instant};

use hyres_core::cube::{decode_cube, encode_cube, ChannelImage, SpectralCube};
use hyres_core::degrade::{
    add_gaussian_noise, bicubic_resize, degrade_cube, make_training_pairs, DegradationConfig, ResizeDirection,
};
use hyres_core::fourier::Kernel;
use hyres_core::frc::{
    frc_curve, frc_loss_gradient, resolution_from_curve, single_image_resolution, DEFAULT_THRESHOLD,
};
use hyres_core::iqa::{assess_channel, crisque, BrisqueModel};
use hyres_core::metrics::{balanced_accuracy, dice, roc_auc, spearman, LabelMask, ScoredLabels};
use hyres_core::noise::{seeded_rng, uniform};
use hyres_core::phantom::{blob_phantom, textured_cube, uniform_noise, white_noise};
use hyres_core::psf::{
    difference_psf, fit_radial_gaussian, simulate_observation, ObservationConfig, DEFAULT_EPSILON,
};
use hyres_core::restore::{apply_restorer, train_restorer, RestorerModel, TrainingConfig};
use rand::Rng;

type Check = Result<String, String>;

fn std_dev(img: &ChannelImage) -> f64 {
    let m = img.mean();
    (img.data().iter().map(|v| (v - m).powi(2)).sum::<f64>() / img.len() as f64).sqrt()
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn frc_exactness() -> Check {
    let mut worst_self = 0.0f64;
    let mut worst_anti = 0.0f64;
    for seed in 0..100 {
        let x = white_noise(32, 32, seed);
        let neg = x.map(|v| -v);
        for (_, v) in frc_curve(&x, &x).map_err(|e| e.to_string())?.defined() {
            worst_self = worst_self.max((v - 1.0).abs());
        }
        for (_, v) in frc_curve(&x, &neg).map_err(|e| e.to_string())?.defined() {
            worst_anti = worst_anti.max((v + 1.0).abs());
        }
    }
    ensure(
        worst_self <= 1e-12 && worst_anti <= 1e-12,
        format!("max |FRC(x,x)-1| = {worst_self:.2e}, max |FRC(x,-x)+1| = {worst_anti:.2e}"),
    )
}

/// The loss is `1 - mean FRC`; differencing the mean directly avoids
/// cancelling against the constant and keeps the oracle's rounding floor
/// below the smallest gradients checked.
fn mean_ring_frc(a: &ChannelImage, b: &ChannelImage) -> Result<f64, String> {
    let curve = frc_curve(a, b).map_err(|e| e.to_string())?;
    let values: Vec<f64> = curve.defined().map(|(_, v)| v).collect();
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

fn gradient_fidelity() -> Check {
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for seed in 0..50u64 {
        let pred = uniform_noise(32, 32, 2 * seed);
        let target = uniform_noise(32, 32, 2 * seed + 1);
        let g = frc_loss_gradient(&pred, &target).map_err(|e| e.to_string())?;
        let mut data = pred.data().to_vec();
        for k in 0..data.len() {
            let a = g.data()[k];
            if a.abs() <= 1e-8 {
                continue;
            }
            let orig = data[k];
            data[k] = orig + h;
            let lp = mean_ring_frc(&ChannelImage::new(32, 32, data.clone()).unwrap(), &target)?;
            data[k] = orig - h;
            let lm = mean_ring_frc(&ChannelImage::new(32, 32, data.clone()).unwrap(), &target)?;
            data[k] = orig;
            let fd = -(lp - lm) / (2.0 * h);
            worst = worst.max((a - fd).abs() / a.abs());
            checked += 1;
        }
    }
    let mut worst_stationary = 0.0f64;
    for seed in 0..50u64 {
        let x = uniform_noise(32, 32, 500 + seed);
        let g = frc_loss_gradient(&x, &x).map_err(|e| e.to_string())?;
        let norm = g.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        worst_stationary = worst_stationary.max(norm);
    }
    ensure(
        worst <= 1e-4 && worst_stationary <= 1e-10,
        format!(
            "max relative FD error {worst:.2e} over {checked} pixels, max |grad| at pred=target {worst_stationary:.2e}"
        ),
    )
}

fn difference_psf_analytics() -> Check {
    let obj = white_noise(128, 128, 11);
    let mut lines = Vec::new();
    let mut ok = true;
    for (s1, s2) in [(3.0f64, 2.0f64), (4.0, 2.0), (2.0, 1.0)] {
        let expected = (s1 * s1 - s2 * s2).sqrt();
        let obs = |sigma: f64, noise: f64, seed: u64| {
            simulate_observation(&obj, &ObservationConfig { blur_sigma: sigma, noise_sigma: noise, seed })
        };
        let a = obs(s1, 0.0, 0).map_err(|e| e.to_string())?;
        let b = obs(s2, 0.0, 0).map_err(|e| e.to_string())?;
        let clean = fit_radial_gaussian(&difference_psf(&a, &b, DEFAULT_EPSILON).map_err(|e| e.to_string())?)
            .map(|f| (f.sigma - expected).abs() / expected);
        // 20 dB: noise standard deviation one tenth of the blurred signal's
        let na = obs(s1, std_dev(&a) / 10.0, 101).map_err(|e| e.to_string())?;
        let nb = obs(s2, std_dev(&b) / 10.0, 202).map_err(|e| e.to_string())?;
        let noisy = fit_radial_gaussian(&difference_psf(&na, &nb, 1e-3).map_err(|e| e.to_string())?)
            .map(|f| (f.sigma - expected).abs() / expected);
        let pass = matches!(clean, Ok(e) if e <= 0.05) && matches!(noisy, Ok(e) if e <= 0.15);
        ok &= pass;
        let show = |r: &Result<f64, _>| match r {
            Ok(e) => format!("{:.1}%", 100.0 * e),
            Err(err) => format!("{err}"),
        };
        lines.push(format!("({s1},{s2}) noiseless {} 20dB {}", show(&clean), show(&noisy)));
    }
    ensure(ok, lines.join("; "))
}

fn deconvolution_emergence() -> Check {
    let mut ok = true;
    let mut lines = Vec::new();
    for seed in [0u64, 1, 2] {
        let hr = textured_cube(8, 256, 256, 10.0, seed).map_err(|e| e.to_string())?;
        let dcfg = DegradationConfig {
            blur_sigma: 1.5,
            seed,
            ..Default::default()
        };
        let tcfg = TrainingConfig {
            epochs: 200,
            seed,
            ..Default::default()
        };
        let pairs = make_training_pairs(&hr, &dcfg, &tcfg).map_err(|e| e.to_string())?;
        let model = train_restorer(&pairs, &tcfg).map_err(|e| e.to_string())?;

        let held_out = textured_cube(1, 256, 256, 10.0, 1000 + seed).map_err(|e| e.to_string())?;
        let lr = degrade_cube(&held_out, &dcfg).map_err(|e| e.to_string())?.lr;
        let up = bicubic_resize(&lr.channels()[0], 4, ResizeDirection::Up).map_err(|e| e.to_string())?;
        let restored = apply_restorer(&model, &lr).map_err(|e| e.to_string())?;
        let restored = &restored.channels()[0];

        let fit = difference_psf(&up, restored, DEFAULT_EPSILON).and_then(|p| fit_radial_gaussian(&p));
        let res_up = single_image_resolution(&up, lr.pixel_size_um() / 4.0).map_err(|e| e.to_string())?;
        let res_restored = single_image_resolution(restored, lr.pixel_size_um() / 4.0).map_err(|e| e.to_string())?;
        let gain = res_up.resolution_um / res_restored.resolution_um;
        let a_ok = matches!(fit, Ok(f) if f.fwhm >= 1.0);
        let b_ok = gain >= 1.5;
        ok &= a_ok && b_ok;
        lines.push(format!(
            "seed {seed}: (a) {} {} (b) {} resolution {:.1} -> {:.1} um, gain {gain:.2}{}",
            if a_ok { "ok" } else { "FAIL" },
            match &fit {
                Ok(f) => format!("FWHM {:.2} px", f.fwhm),
                Err(e) => e.to_string(),
            },
            if b_ok { "ok" } else { "FAIL" },
            res_up.resolution_um,
            res_restored.resolution_um,
            if res_up.nyquist_limited { " (baseline Nyquist limited)" } else { "" },
        ));
    }
    ensure(ok, lines.join("; "))
}

fn resolution_monotonicity() -> Check {
    let obj = white_noise(128, 128, 21);
    let mut single = Vec::new();
    let mut lines = Vec::new();
    let mut agree = true;
    for sigma in [1.0, 2.0, 4.0] {
        let clean = simulate_observation(&obj, &ObservationConfig { blur_sigma: sigma, noise_sigma: 0.0, seed: 0 })
            .map_err(|e| e.to_string())?;
        let noise = std_dev(&clean);
        let draw = |seed| {
            simulate_observation(&obj, &ObservationConfig { blur_sigma: sigma, noise_sigma: noise, seed })
        };
        let first = draw(1).map_err(|e| e.to_string())?;
        let second = draw(2).map_err(|e| e.to_string())?;
        let r1 = single_image_resolution(&first, 1.0).map_err(|e| e.to_string())?.resolution_um;
        let r2 = resolution_from_curve(&frc_curve(&first, &second).map_err(|e| e.to_string())?, DEFAULT_THRESHOLD, 1.0)
            .map_err(|e| e.to_string())?
            .resolution_um;
        let dev = (r1 - r2).abs() / r2;
        agree &= dev <= 0.2;
        single.push(r1);
        lines.push(format!("sigma {sigma}: single {r1:.2} px, two-image {r2:.2} px ({:+.0}%)", 100.0 * (r1 / r2 - 1.0)));
    }
    let monotone = single.windows(2).all(|w| w[1] > w[0]);
    ensure(
        monotone && agree,
        format!("monotone {monotone}, agreement {agree}: {}", lines.join("; ")),
    )
}

fn crisque_contract() -> Check {
    let mut ok = true;
    for b in 0..=100 {
        for p in 0..=100 {
            let (bf, pf) = (b as f64, p as f64);
            let c = crisque(bf, pf).map_err(|e| e.to_string())?;
            ok &= (0.0..=100.0).contains(&c);
            ok &= c == crisque(pf, bf).unwrap();
            if b < 100 {
                let next = crisque(bf + 1.0, pf).unwrap();
                ok &= if p > 0 { next < c } else { next <= c };
            }
        }
    }
    let exact = crisque(40.0, 60.0).map_err(|e| e.to_string())?;
    let grid_ok = ok && (exact - 52.0).abs() <= 1e-12;
    let model = BrisqueModel::bundled();
    let mut lowered = 0;
    for seed in 0..50u64 {
        let clean = blob_phantom(128, 128, 700 + seed);
        let noisy = add_gaussian_noise(&clean, 0.1, seed, true).map_err(|e| e.to_string())?;
        let before = assess_channel(&clean, None, &model).map_err(|e| e.to_string())?.2;
        let after = assess_channel(&noisy, None, &model).map_err(|e| e.to_string())?.2;
        if after < before {
            lowered += 1;
        }
    }
    ensure(
        grid_ok && lowered >= 45,
        format!("grid properties {grid_ok}, crisque(40,60) = {exact}, noise lowered CRISQUE in {lowered}/50"),
    )
}

fn table_arithmetic() -> Check {
    let rows = [
        (0.80, 0.80, 0.80),
        (0.90, 0.90, 0.90),
        (0.60, 0.67, 0.63),
        (0.85, 0.78, 0.82),
        (0.50, 0.50, 0.50),
        (1.00, 0.67, 0.83),
    ];
    let mut worst = 0.0f64;
    for (sens, spec, reported) in rows {
        let b = balanced_accuracy(sens, spec).map_err(|e| e.to_string())?;
        worst = worst.max((b - reported).abs());
    }
    // two rows sit exactly on the rounding boundary
    ensure(worst <= 0.005 + 1e-9, format!("{} rows, max deviation {worst:.4}", rows.len()))
}

fn random_cube(rng: &mut impl Rng) -> SpectralCube {
    let h = rng.random_range(1..12);
    let w = rng.random_range(1..12);
    let n = rng.random_range(1..5);
    let chans = (0..n)
        .map(|_| ChannelImage::from_fn(h, w, |_, _| f64::from(rng.random::<f32>())))
        .collect();
    let mut label = f64::from(rng.random_range(50.0f32..500.0));
    let labels = (0..n)
        .map(|_| {
            label += f64::from(rng.random_range(0.01f32..10.0));
            label
        })
        .collect();
    SpectralCube::new(chans, f64::from(rng.random_range(1.0f32..200.0)), labels).unwrap()
}

fn determinism_and_io() -> Check {
    let mut rng = seeded_rng(8, 0);
    for i in 0..100 {
        let cube = random_cube(&mut rng);
        let bytes = encode_cube(&cube);
        let back = decode_cube(&bytes).map_err(|e| e.to_string())?;
        let same = back.pixel_size_um().to_bits() == cube.pixel_size_um().to_bits()
            && back.labels().iter().zip(cube.labels()).all(|(a, b)| a.to_bits() == b.to_bits())
            && back
                .channels()
                .iter()
                .zip(cube.channels())
                .all(|(a, b)| a.dims() == b.dims() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        if !same || encode_cube(&back) != bytes {
            return Err(format!("cube {i} did not round-trip bit-exactly"));
        }
    }
    let run = || -> Result<(Vec<u8>, String, Vec<u8>), String> {
        let hr = textured_cube(3, 128, 128, 10.0, 5).map_err(|e| e.to_string())?;
        let dcfg = DegradationConfig { blur_sigma: 1.5, seed: 9, ..Default::default() };
        let tcfg = TrainingConfig { epochs: 5, patch: 16, seed: 9, ..Default::default() };
        let degraded = degrade_cube(&hr, &dcfg).map_err(|e| e.to_string())?;
        let pairs = make_training_pairs(&hr, &dcfg, &tcfg).map_err(|e| e.to_string())?;
        let model = train_restorer(&pairs, &tcfg).map_err(|e| e.to_string())?;
        let restored = apply_restorer(&model, &degraded.lr).map_err(|e| e.to_string())?;
        Ok((encode_cube(&degraded.lr), model.to_text(), encode_cube(&restored)))
    };
    let first = run()?;
    let second = run()?;
    ensure(
        first == second,
        format!(
            "100 cubes round-tripped; degrade/train/restore twice: outputs identical = {}",
            first == second
        ),
    )
}

fn oracle_dice(a: &[i32], b: &[i32], class: i32) -> f64 {
    let sa: Vec<usize> = (0..a.len()).filter(|&i| a[i] == class).collect();
    let sb: Vec<usize> = (0..b.len()).filter(|&i| b[i] == class).collect();
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    let inter = sa.iter().filter(|i| sb.contains(i)).count();
    2.0 * inter as f64 / (sa.len() + sb.len()) as f64
}

fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|a| v.iter().filter(|b| *b < a).count() as f64 + 1.0)
            .collect()
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

fn oracle_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn metric_oracles() -> Check {
    let mut rng = seeded_rng(9, 0);
    let mut worst = [0.0f64; 3];
    for _ in 0..1000 {
        let (h, w) = (rng.random_range(1..6), rng.random_range(1..6));
        let a: Vec<i32> = (0..h * w).map(|_| rng.random_range(-1..3)).collect();
        let b: Vec<i32> = (0..h * w).map(|_| rng.random_range(-1..3)).collect();
        let class = rng.random_range(0..3);
        let ma = LabelMask::new(h, w, a.clone()).unwrap();
        let mb = LabelMask::new(h, w, b.clone()).unwrap();
        let d = dice(&ma, &mb, class).map_err(|e| e.to_string())?;
        worst[0] = worst[0].max((d - oracle_dice(&a, &b, class)).abs());

        let n = rng.random_range(3..15);
        // distinct values so the closed-form rank formula applies
        let mut perm: Vec<f64> = (0..n).map(|i| i as f64 + 0.5 * uniform(&mut rng)).collect();
        let x: Vec<f64> = (0..n).map(|_| uniform(&mut rng)).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let s = spearman(&x, &perm).map_err(|e| e.to_string())?;
        worst[1] = worst[1].max((s - oracle_spearman(&x, &perm)).abs());

        let m = rng.random_range(2..20);
        let mut labels: Vec<bool> = (0..m).map(|_| rng.random::<bool>()).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..m).map(|_| f64::from(rng.random_range(0..6))).collect();
        let auc = roc_auc(&ScoredLabels::new(scores.clone(), labels.clone()).unwrap()).map_err(|e| e.to_string())?;
        worst[2] = worst[2].max((auc - oracle_auc(&scores, &labels)).abs());
    }
    ensure(
        worst.iter().all(|&e| e <= 1e-12),
        format!(
            "max deviation dice {:.1e}, spearman {:.1e}, roc_auc {:.1e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn restoration_contract() -> Check {
    let chans = (0..8).map(|i| blob_phantom(25, 20, 40 + i)).collect();
    let lr = SpectralCube::new(chans, 100.0, (0..8).map(|i| 300.0 + i as f64).collect()).unwrap();
    let mut model = RestorerModel::identity(4, 9).map_err(|e| e.to_string())?;
    let weights: Vec<f64> = (0..81).map(|i| if i == 40 { 1.4 } else { -0.005 }).collect();
    model.kernel = Kernel::new(9, weights).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let out = apply_restorer(&model, &lr).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let dims_ok = out.channels().iter().all(|c| c.dims() == (100, 80)) && out.channel_count() == 8;
    let pixel_ok = (out.pixel_size_um() - 25.0).abs() < 1e-12;
    ensure(
        dims_ok && pixel_ok && elapsed < Duration::from_secs(1),
        format!(
            "{} channels of {}x{}, pixel {} um, inference {:.1} ms",
            out.channel_count(),
            out.height(),
            out.width(),
            out.pixel_size_um(),
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

/// Name, check and runtime budget in seconds.
type Criterion = (&'static str, fn() -> Check, u64);

fn main() {
    let criteria: [Criterion; 10] = [
        ("FRC exactness", frc_exactness, 5),
        ("FRC loss gradient fidelity", gradient_fidelity, 60),
        ("difference-PSF analytics", difference_psf_analytics, 30),
        ("deconvolution emergence", deconvolution_emergence, 600),
        ("resolution monotonicity", resolution_monotonicity, 30),
        ("CRISQUE contract", crisque_contract, 120),
        ("balanced accuracy table arithmetic", table_arithmetic, 1),
        ("determinism and cube I/O", determinism_and_io, 120),
        ("metric oracles", metric_oracles, 30),
        ("restoration dimension and speed", restoration_contract, 1),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs < *budget as f64;
        let (pass, detail) = match result {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {detail} [{secs:.2} s of {budget} s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
