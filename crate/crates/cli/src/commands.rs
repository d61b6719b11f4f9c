//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use hyres_core::cube::{import_channels, read_cube, write_cube};
use hyres_core::degrade::{
    bicubic_resize, degrade_cube, make_training_pairs, DegradationConfig, ResizeDirection,
};
use hyres_core::frc::{
    curve_to_csv, frc_curve, resolution_from_curve, single_image_frc, FrcCurve, LossReduction,
    ResolutionEstimate, DEFAULT_THRESHOLD,
};
use hyres_core::iqa::{assess_cube, BrisqueModel, IqaReport};
use hyres_core::metrics::{
    balanced_accuracy, dice_mean, roc_auc, spearman, LabelMask, ScoredLabels,
};
use hyres_core::phantom::textured_cube;
use hyres_core::psf::{difference_psf, fit_radial_gaussian, profile_to_csv, radial_profile, GaussianFit};
use hyres_core::restore::{apply_restorer, train_restorer, RestorerModel, TrainingConfig};
use hyres_core::{ChannelImage, CubeManifest, SpectralCube};

use crate::manifest::{manifest_path_for, RunManifest};
use crate::svg::emit_curve_svg;
use crate::{
    Command, DegradeArgs, DegradeOpts, DiffpsfArgs, FrcArgs, ImportArgs, InfoArgs, IqaArgs, LossKind,
    ReportArgs, RestoreArgs, StatsArgs, TrainArgs, TrainOpts, UsageError,
};

/// Runs one subcommand and writes its manifest. `argv` excludes the program name.
pub fn execute(command: Command, argv: &[String]) -> Result<()> {
    let start = Instant::now();
    let done = match command {
        Command::Import(a) => import(a, argv)?,
        Command::Info(a) => info(a, argv)?,
        Command::Degrade(a) => degrade(a, argv)?,
        Command::Train(a) => train(a, argv)?,
        Command::Restore(a) => restore(a, argv)?,
        Command::Frc(a) => frc(a, argv)?,
        Command::Diffpsf(a) => diffpsf(a, argv)?,
        Command::Iqa(a) => iqa(a, argv)?,
        Command::Stats(a) => stats(a, argv)?,
        Command::Report(a) => report(a, argv)?,
    };
    if let Some((mut manifest, path)) = done {
        manifest.duration_s = start.elapsed().as_secs_f64();
        manifest.write(&path)?;
    }
    Ok(())
}

type Done = Option<(RunManifest, PathBuf)>;

fn finish(manifest: RunManifest, out: &Path) -> Result<Done> {
    Ok(Some((manifest, manifest_path_for(out))))
}

fn load(path: &Path) -> Result<SpectralCube> {
    Ok(read_cube(path)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn channel(cube: &SpectralCube, index: usize) -> Result<&ChannelImage> {
    Ok(cube.channel(index)?)
}

fn degradation_config(o: &DegradeOpts, seed: u64) -> DegradationConfig {
    DegradationConfig {
        scale: o.scale,
        blur_sigma: o.blur_sigma,
        noise_sigma: o.noise_sigma,
        noisy_fraction: o.noisy_fraction,
        snr_tau: o.snr_tau,
        seed,
    }
}

fn training_config(o: &TrainOpts, seed: u64) -> TrainingConfig {
    TrainingConfig {
        epochs: o.epochs,
        batch: o.batch,
        patch: o.patch,
        adv_weight: o.adv_weight,
        reduction: match o.loss {
            LossKind::Frc => LossReduction::Mean,
            LossKind::FrcSum => LossReduction::Sum,
        },
        seed,
        ..Default::default()
    }
}

fn record_degradation(m: &mut RunManifest, c: &DegradationConfig) {
    m.param("scale", c.scale)
        .param("blur_sigma", c.blur_sigma)
        .param("noise_sigma", c.noise_sigma)
        .param("noisy_fraction", c.noisy_fraction)
        .param("snr_tau", c.snr_tau);
}

fn record_training(m: &mut RunManifest, c: &TrainingConfig) {
    m.param("epochs", c.epochs)
        .param("batch", c.batch)
        .param("patch", c.patch)
        .param("learning_rate", c.learning_rate)
        .param("alpha", c.alpha)
        .param("beta", c.beta)
        .param("adv_weight", c.adv_weight)
        .param("kernel_size", c.kernel_size)
        .param(
            "loss",
            match c.reduction {
                LossReduction::Mean => "frc",
                LossReduction::Sum => "frc-sum",
            },
        );
}

fn import(a: ImportArgs, argv: &[String]) -> Result<Done> {
    let manifest = match &a.labels {
        Some(l) => CubeManifest::with_label_file(a.pixel_size, l, a.inputs.clone())?,
        None => {
            let labels = (0..a.inputs.len()).map(|i| i as f64).collect();
            CubeManifest::new(a.pixel_size, labels, a.inputs.clone())?
        }
    };
    let cube = import_channels(&manifest)?;
    write_cube(&cube, &a.out)?;
    println!(
        "imported {} channels of {}x{} at {} um into {}",
        cube.channel_count(),
        cube.height(),
        cube.width(),
        cube.pixel_size_um(),
        a.out.display()
    );
    let mut m = RunManifest::new("import", a.seed.seed, argv);
    m.param("pixel_size_um", a.pixel_size);
    for p in &a.inputs {
        m.input(p);
    }
    if let Some(l) = &a.labels {
        m.input(l);
    }
    m.output(&a.out);
    finish(m, &a.out)
}

fn info(a: InfoArgs, argv: &[String]) -> Result<Done> {
    let cube = load(&a.input)?;
    let labels = cube.labels();
    println!("{}", a.input.display());
    println!("  channels   {}", cube.channel_count());
    println!("  size       {} x {} px", cube.height(), cube.width());
    println!("  pixel size {} um", cube.pixel_size_um());
    println!("  labels     {} .. {}", labels[0], labels[labels.len() - 1]);
    let Some(out) = a.out else {
        return Ok(None);
    };
    let mut csv = String::from("channel,mz,min,max,mean\n");
    for (i, (c, l)) in cube.channels().iter().zip(labels).enumerate() {
        let min = c.data().iter().copied().fold(f64::INFINITY, f64::min);
        let max = c.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(csv, "{i},{l},{min},{max},{}", c.mean());
    }
    write_text(&out, &csv)?;
    let mut m = RunManifest::new("info", a.seed.seed, argv);
    m.input(&a.input).output(&out);
    finish(m, &out)
}

fn degrade(a: DegradeArgs, argv: &[String]) -> Result<Done> {
    let cube = load(&a.input)?;
    let cfg = degradation_config(&a.degrade, a.seed.seed);
    let d = degrade_cube(&cube, &cfg)?;
    write_cube(&d.lr, &a.out)?;
    let kept = d.kept.iter().filter(|&&k| k).count();
    println!(
        "kept {kept}/{} channels, {} with background noise; {}x{} -> {}x{} px",
        d.kept.len(),
        d.noisy_channels.len(),
        d.hr.height(),
        d.hr.width(),
        d.lr.height(),
        d.lr.width()
    );
    let mut m = RunManifest::new("degrade", a.seed.seed, argv);
    record_degradation(&mut m, &cfg);
    m.param("kept_channels", kept)
        .param("noisy_channels", d.noisy_channels.clone())
        .input(&a.input)
        .output(&a.out);
    finish(m, &a.out)
}

fn loss_trace_path(model: &Path) -> PathBuf {
    model.with_extension("loss.csv")
}

fn train(a: TrainArgs, argv: &[String]) -> Result<Done> {
    let hr = load(&a.input)?;
    let dcfg = degradation_config(&a.degrade, a.seed.seed);
    let tcfg = training_config(&a.train, a.seed.seed);
    let pairs = make_training_pairs(&hr, &dcfg, &tcfg)?;
    let model = train_restorer(&pairs, &tcfg)?;
    model.save(&a.out)?;
    let trace = loss_trace_path(&a.out);
    write_text(&trace, &model.loss_trace_csv())?;
    println!(
        "trained on {} pairs for {} epochs, final loss {:.6}",
        pairs.len(),
        tcfg.epochs,
        model.final_loss
    );
    let mut m = RunManifest::new("train", a.seed.seed, argv);
    record_degradation(&mut m, &dcfg);
    record_training(&mut m, &tcfg);
    m.param("pairs", pairs.len()).input(&a.input).output(&a.out).output(&trace);
    finish(m, &a.out)
}

fn restore(a: RestoreArgs, argv: &[String]) -> Result<Done> {
    let lr = load(&a.input)?;
    let model = RestorerModel::load(&a.model)?;
    let out = apply_restorer(&model, &lr)?;
    write_cube(&out, &a.out)?;
    println!(
        "restored {} channels: {}x{} -> {}x{} px, {} -> {} um",
        out.channel_count(),
        lr.height(),
        lr.width(),
        out.height(),
        out.width(),
        lr.pixel_size_um(),
        out.pixel_size_um()
    );
    let mut m = RunManifest::new("restore", a.seed.seed, argv);
    m.param("scale", model.scale).input(&a.input).input(&a.model).output(&a.out);
    finish(m, &a.out)
}

fn curve_points(curve: &FrcCurve) -> Vec<(f64, f64)> {
    curve.defined().map(|(r, v)| (r.frequency, v)).collect()
}

/// Writes the curve CSV and, when at least two rings are defined, its plot.
fn write_frc(curve: &FrcCurve, est: &ResolutionEstimate, out: &Path) -> Result<Vec<PathBuf>> {
    write_text(out, &curve_to_csv(curve, Some(est)))?;
    let mut written = vec![out.to_path_buf()];
    let pts = curve_points(curve);
    if pts.len() >= 2 {
        let svg = out.with_extension("svg");
        emit_curve_svg(&pts, "spatial frequency (cycles/px)", "FRC", &svg)?;
        written.push(svg);
    }
    Ok(written)
}

fn frc(a: FrcArgs, argv: &[String]) -> Result<Done> {
    match (a.single, &a.reference) {
        (true, Some(_)) => bail!(UsageError("--single and --ref are mutually exclusive".into())),
        (false, None) => bail!(UsageError("frc needs either --single or --ref".into())),
        _ => {}
    }
    let cube = load(&a.input)?;
    let img = channel(&cube, a.channel)?;
    let pixel = a.pixel_size.unwrap_or(cube.pixel_size_um());
    let curve = match &a.reference {
        Some(r) => {
            let other = load(r)?;
            frc_curve(img, channel(&other, a.channel)?)?
        }
        None => single_image_frc(img)?,
    };
    let est = resolution_from_curve(&curve, a.threshold, pixel)?;
    let written = write_frc(&curve, &est, &a.out)?;
    println!(
        "resolution {:.3} um at threshold {:.4}{}",
        est.resolution_um,
        est.threshold,
        if est.nyquist_limited { " (Nyquist limited)" } else { "" }
    );
    let mut m = RunManifest::new("frc", a.seed.seed, argv);
    m.param("channel", a.channel)
        .param("single", a.single)
        .param("threshold", a.threshold)
        .param("pixel_size_um", pixel)
        .param("resolution_um", est.resolution_um)
        .param("nyquist_limited", est.nyquist_limited)
        .input(&a.input);
    if let Some(r) = &a.reference {
        m.input(r);
    }
    for p in &written {
        m.output(p);
    }
    finish(m, &a.out)
}

fn fit_summary(fit: &std::result::Result<GaussianFit, hyres_core::Error>) -> String {
    match fit {
        Ok(f) => format!("sigma {:.4} px, FWHM {:.4} px, residual {:.3e}", f.sigma, f.fwhm, f.residual_rms),
        Err(e) => e.to_string(),
    }
}

fn diffpsf(a: DiffpsfArgs, argv: &[String]) -> Result<Done> {
    let restored = load(&a.input)?;
    let baseline = load(&a.reference)?;
    let psf = difference_psf(channel(&baseline, a.channel)?, channel(&restored, a.channel)?, a.epsilon)?;
    let fit = fit_radial_gaussian(&psf);
    write_text(&a.out, &profile_to_csv(&psf, fit.as_ref().ok()))?;
    let svg = a.out.with_extension("svg");
    let pts: Vec<(f64, f64)> = radial_profile(&psf.kernel).iter().map(|b| (b.rho, b.mean)).collect();
    emit_curve_svg(&pts, "radius (px)", "difference PSF", &svg)?;
    println!("{}", fit_summary(&fit));
    let mut m = RunManifest::new("diffpsf", a.seed.seed, argv);
    m.param("channel", a.channel).param("epsilon", a.epsilon).param("offset", psf.offset);
    if let Ok(f) = &fit {
        m.param("sigma_px", f.sigma).param("fwhm_px", f.fwhm);
    }
    m.input(&a.input).input(&a.reference).output(&a.out).output(&svg);
    finish(m, &a.out)
}

fn print_iqa(report: &IqaReport) {
    let show = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    println!(
        "median BRISQUE {} PIQE {} CRISQUE {} PSNR {} SSIM {}",
        show(report.median_brisque()),
        show(report.median_piqe()),
        show(report.median_crisque()),
        show(report.median_psnr()),
        show(report.median_ssim())
    );
}

fn iqa(a: IqaArgs, argv: &[String]) -> Result<Done> {
    let cube = load(&a.input)?;
    let reference = a.reference.as_deref().map(load).transpose()?;
    let model = match &a.model {
        Some(p) => BrisqueModel::load(p)?,
        None => BrisqueModel::bundled(),
    };
    let report = assess_cube(&cube, reference.as_ref(), &model)?;
    write_text(&a.out, &report.to_csv())?;
    print_iqa(&report);
    let mut m = RunManifest::new("iqa", a.seed.seed, argv);
    m.param("bundled_model", a.model.is_none()).input(&a.input);
    for p in a.reference.iter().chain(&a.model) {
        m.input(p);
    }
    m.output(&a.out);
    finish(m, &a.out)
}

/// One `metric,value,n` row.
type StatRow = (String, f64, usize);

fn column(rows: &[csv::StringRecord], i: usize, name: &str) -> Result<Vec<String>> {
    rows.iter()
        .enumerate()
        .map(|(r, rec)| {
            rec.get(i)
                .map(|s| s.trim().to_string())
                .ok_or_else(|| anyhow!("row {}: missing `{name}`", r + 2))
        })
        .collect()
}

fn parse_all<T: std::str::FromStr>(values: &[String], name: &str) -> Result<Vec<T>> {
    values
        .iter()
        .enumerate()
        .map(|(r, v)| v.parse().map_err(|_| anyhow!("row {}: bad `{name}` value {v:?}", r + 2)))
        .collect()
}

fn parse_flag(v: &str) -> Option<bool> {
    match v {
        "1" | "true" | "TRUE" | "True" => Some(true),
        "0" | "false" | "FALSE" | "False" => Some(false),
        _ => None,
    }
}

/// Computes the metric selected by the table's header.
pub fn compute_stats(text: &str) -> Result<Vec<StatRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
    let n = rows.len();
    let names: Vec<&str> = header.iter().map(String::as_str).collect();
    let col = |name: &str| names.iter().position(|h| *h == name);
    let out = match (col("a"), col("b"), col("x"), col("y"), col("score"), col("label")) {
        (Some(i), Some(j), ..) => {
            let a: Vec<i32> = parse_all(&column(&rows, i, "a")?, "a")?;
            let b: Vec<i32> = parse_all(&column(&rows, j, "b")?, "b")?;
            let s = dice_mean(&LabelMask::new(1, n, a)?, &LabelMask::new(1, n, b)?)?;
            let mut out = vec![("dice_mean".to_string(), s.mean, n)];
            out.extend(s.per_class.iter().map(|(c, d)| (format!("dice_class_{c}"), *d, n)));
            out
        }
        (_, _, Some(i), Some(j), ..) => {
            let x: Vec<f64> = parse_all(&column(&rows, i, "x")?, "x")?;
            let y: Vec<f64> = parse_all(&column(&rows, j, "y")?, "y")?;
            vec![("spearman".to_string(), spearman(&x, &y)?, n)]
        }
        (.., Some(i), Some(j)) => {
            let s: Vec<f64> = parse_all(&column(&rows, i, "score")?, "score")?;
            let l = column(&rows, j, "label")?
                .iter()
                .enumerate()
                .map(|(r, v)| parse_flag(v).ok_or_else(|| anyhow!("row {}: bad label {v:?}", r + 2)))
                .collect::<Result<Vec<_>>>()?;
            vec![("roc_auc".to_string(), roc_auc(&ScoredLabels::new(s, l)?)?, n)]
        }
        _ => match (col("sensitivity"), col("specificity")) {
            (Some(i), Some(j)) => {
                let se: Vec<f64> = parse_all(&column(&rows, i, "sensitivity")?, "sensitivity")?;
                let sp: Vec<f64> = parse_all(&column(&rows, j, "specificity")?, "specificity")?;
                se.iter()
                    .zip(&sp)
                    .enumerate()
                    .map(|(r, (a, b))| Ok((format!("balanced_accuracy_{r}"), balanced_accuracy(*a, *b)?, 1)))
                    .collect::<Result<Vec<_>>>()?
            }
            _ => bail!(
                "unrecognised header {:?}; expected a,b or x,y or score,label or sensitivity,specificity",
                header.join(",")
            ),
        },
    };
    Ok(out)
}

pub fn stats_csv(rows: &[StatRow]) -> String {
    let mut s = String::from("metric,value,n\n");
    for (name, v, n) in rows {
        let _ = writeln!(s, "{name},{v},{n}");
    }
    s
}

fn stats(a: StatsArgs, argv: &[String]) -> Result<Done> {
    let text = fs::read_to_string(&a.input).with_context(|| format!("cannot read {}", a.input.display()))?;
    let rows = compute_stats(&text)?;
    write_text(&a.out, &stats_csv(&rows))?;
    for (name, v, n) in &rows {
        println!("{name} = {v:.6} (n = {n})");
    }
    let mut m = RunManifest::new("stats", a.seed.seed, argv);
    m.input(&a.input).output(&a.out);
    finish(m, &a.out)
}

fn report(a: ReportArgs, argv: &[String]) -> Result<Done> {
    let seed = a.seed.seed;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let dir = |name: &str| a.out.join(name);
    let mut m = RunManifest::new("report", seed, argv);
    let mut summary: BTreeMap<&str, f64> = BTreeMap::new();

    let hr = textured_cube(4, 128, 128, a.pixel_size, seed)?;
    let dcfg = degradation_config(
        &DegradeOpts {
            scale: a.scale,
            blur_sigma: a.blur_sigma,
            noise_sigma: a.noise_sigma,
            noisy_fraction: a.noisy_fraction,
            snr_tau: a.snr_tau,
        },
        seed,
    );
    let tcfg = training_config(
        &TrainOpts {
            epochs: a.epochs,
            batch: a.batch,
            patch: a.patch,
            loss: a.loss,
            adv_weight: a.adv_weight,
        },
        seed,
    );
    record_degradation(&mut m, &dcfg);
    record_training(&mut m, &tcfg);
    m.param("channel", a.channel).param("pixel_size_um", a.pixel_size);

    let degraded = degrade_cube(&hr, &dcfg)?;
    let (hr, lr) = (degraded.hr, degraded.lr);
    write_cube(&hr, dir("hr.hyrs"))?;
    write_cube(&lr, dir("lr.hyrs"))?;

    let pairs = make_training_pairs(&hr, &dcfg, &tcfg)?;
    let model = train_restorer(&pairs, &tcfg)?;
    model.save(dir("model.txt"))?;
    write_text(&dir("model.loss.csv"), &model.loss_trace_csv())?;
    let trace: Vec<(f64, f64)> = model.history.iter().map(|e| (e.epoch as f64, e.total)).collect();
    if trace.len() >= 2 {
        emit_curve_svg(&trace, "epoch", "training loss", &dir("model.loss.svg"))?;
        m.output(&dir("model.loss.svg"));
    }

    let restored = apply_restorer(&model, &lr)?;
    write_cube(&restored, dir("restored.hyrs"))?;
    let bicubic = SpectralCube::new(
        lr.channels()
            .iter()
            .map(|c| bicubic_resize(c, a.scale, ResizeDirection::Up))
            .collect::<hyres_core::Result<Vec<_>>>()?,
        restored.pixel_size_um(),
        lr.labels().to_vec(),
    )?;
    write_cube(&bicubic, dir("bicubic.hyrs"))?;
    for p in ["hr.hyrs", "lr.hyrs", "model.txt", "model.loss.csv", "restored.hyrs", "bicubic.hyrs"] {
        m.output(&dir(p));
    }

    let ch = a.channel;
    for (name, cube) in [("hr", &hr), ("bicubic", &bicubic), ("restored", &restored)] {
        let curve = single_image_frc(channel(cube, ch)?)?;
        let est = resolution_from_curve(&curve, DEFAULT_THRESHOLD, cube.pixel_size_um())?;
        for p in write_frc(&curve, &est, &dir(&format!("frc_{name}.csv")))? {
            m.output(&p);
        }
        summary.insert(
            match name {
                "hr" => "resolution_um_hr",
                "bicubic" => "resolution_um_bicubic",
                _ => "resolution_um_restored",
            },
            est.resolution_um,
        );
    }

    let psf = difference_psf(channel(&bicubic, ch)?, channel(&restored, ch)?, hyres_core::psf::DEFAULT_EPSILON)?;
    let fit = fit_radial_gaussian(&psf);
    write_text(&dir("diffpsf.csv"), &profile_to_csv(&psf, fit.as_ref().ok()))?;
    let pts: Vec<(f64, f64)> = radial_profile(&psf.kernel).iter().map(|b| (b.rho, b.mean)).collect();
    emit_curve_svg(&pts, "radius (px)", "difference PSF", &dir("diffpsf.svg"))?;
    m.output(&dir("diffpsf.csv")).output(&dir("diffpsf.svg"));
    if let Ok(f) = &fit {
        summary.insert("diffpsf_fwhm_px", f.fwhm);
    }

    let model_iqa = BrisqueModel::bundled();
    for (name, cube) in [("bicubic", &bicubic), ("restored", &restored)] {
        let rep = assess_cube(cube, Some(&hr), &model_iqa)?;
        write_text(&dir(&format!("iqa_{name}.csv")), &rep.to_csv())?;
        m.output(&dir(&format!("iqa_{name}.csv")));
        let key = |k: &'static str, b: &'static str| if name == "bicubic" { b } else { k };
        if let Some(v) = rep.median_crisque() {
            summary.insert(key("crisque_restored", "crisque_bicubic"), v);
        }
        if let Some(v) = rep.median_psnr() {
            summary.insert(key("psnr_db_restored", "psnr_db_bicubic"), v);
        }
        if let Some(v) = rep.median_ssim() {
            summary.insert(key("ssim_restored", "ssim_bicubic"), v);
        }
    }

    let mut s = String::from("quantity,value\n");
    for (k, v) in &summary {
        let _ = writeln!(s, "{k},{v}");
    }
    write_text(&dir("summary.csv"), &s)?;
    m.output(&dir("summary.csv"));

    println!("report written to {}", a.out.display());
    println!(
        "channel {ch}: resolution {:.2} um (bicubic) -> {:.2} um (restored), HR {:.2} um",
        summary["resolution_um_bicubic"], summary["resolution_um_restored"], summary["resolution_um_hr"]
    );
    println!("difference PSF: {}", fit_summary(&fit));
    Ok(Some((m, dir("manifest.json"))))
}
