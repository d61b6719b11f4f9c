//! Minimal super-resolving restorer: bicubic upsampling followed by one
//! learned `K × K` deconvolution kernel, trained with the FRC loss.
//!
//! Everything runs in the Fourier domain during training. For a pair with
//! upsampled input `U` and target `T`, the prediction spectrum is `Û·K̂`;
//! the loss gradient with respect to the prediction, `Ĝ`, maps to the
//! kernel gradient through the correlation `IDFT(Ĝ·conj(Û))` sampled on
//! the kernel support.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use crate::cube::{ChannelImage, SpectralCube};
use crate::degrade::{bicubic_resize, PairSet, ResizeDirection};
use crate::error::{Error, Result};
use crate::fourier::{convolve_periodic, dft2, idft2_complex, ComplexField, Kernel, RingPartition};
use crate::frc::{loss_from_spectra, LossReduction};
use crate::noise::seeded_rng;

pub const MODEL_FORMAT: &str = "hyres-model/1";

/// Side of the blocks whose means feed the discriminator.
const DISC_BLOCK: usize = 8;

/// Pixel differences this small are rounding residue of the Fourier-domain
/// prediction and get the zero subgradient of `|d|`.
const PIXEL_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch: usize,
    /// LR patch side; HR patches are `scale × patch`.
    pub patch: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Weight of the FRC loss.
    pub alpha: f64,
    /// Weight of the mean absolute pixel difference.
    pub beta: f64,
    /// Final adversarial weight; ramps linearly from 0 over the run.
    pub adv_weight: f64,
    pub kernel_size: usize,
    pub reduction: LossReduction,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch: 8,
            patch: 50,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            alpha: 1.0,
            beta: 0.1,
            adv_weight: 0.0,
            kernel_size: 9,
            reduction: LossReduction::Mean,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch < 1 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        if self.patch < 16 {
            return Err(Error::InvalidParameter(format!("patch {} < 16", self.patch)));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!(
                "kernel size {} is not odd",
                self.kernel_size
            )));
        }
        for (name, v) in [
            ("learning rate", self.learning_rate),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("adversarial weight", self.adv_weight),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidParameter("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Adversarial weight in effect during `epoch`.
    pub fn adv_weight_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return 0.0;
        }
        self.adv_weight * epoch as f64 / (self.epochs - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub frc: f64,
    pub pixel: f64,
    pub adv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestorerModel {
    pub scale: usize,
    pub kernel: Kernel,
    pub seed: u64,
    pub final_loss: f64,
    pub history: Vec<EpochLoss>,
    /// Absent for models loaded from disk.
    pub config: Option<TrainingConfig>,
}

impl RestorerModel {
    /// Untrained model whose kernel is the centered impulse.
    pub fn identity(scale: usize, kernel_size: usize) -> Result<Self> {
        Ok(Self {
            scale,
            kernel: Kernel::delta(kernel_size)?,
            seed: 0,
            final_loss: f64::NAN,
            history: Vec::new(),
            config: None,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "format = {MODEL_FORMAT}");
        let _ = writeln!(s, "scale = {}", self.scale);
        let _ = writeln!(s, "kernel_size = {}", self.kernel.size());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "final_loss = {:.16e}", self.final_loss);
        let values: Vec<String> = self.kernel.weights().iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(s, "kernel = {}", values.join(","));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut fields = std::collections::HashMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("model line without '=': {line:?}")))?;
            fields.insert(k.trim(), v.trim());
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Format(format!("model file lacks `{k}`")))
        };
        if get("format")? != MODEL_FORMAT {
            return Err(Error::Format(format!("unsupported model format {:?}", get("format")?)));
        }
        let int = |k: &str| {
            get(k)?
                .parse::<u64>()
                .map_err(|_| Error::Format(format!("bad integer for `{k}`")))
        };
        let scale = int("scale")? as usize;
        let size = int("kernel_size")? as usize;
        let seed = int("seed")?;
        let final_loss = get("final_loss")?
            .parse::<f64>()
            .map_err(|_| Error::Format("bad final_loss".into()))?;
        let weights = get("kernel")?
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad kernel value {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        if scale < 2 {
            return Err(Error::Format(format!("model scale {scale} < 2")));
        }
        Ok(Self {
            scale,
            kernel: Kernel::new(size, weights)?,
            seed,
            final_loss,
            history: Vec::new(),
            config: None,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// `epoch,loss_total,loss_frc,loss_pixel,loss_adv`.
    pub fn loss_trace_csv(&self) -> String {
        let mut s = String::from("epoch,loss_total,loss_frc,loss_pixel,loss_adv\n");
        for e in &self.history {
            let _ = writeln!(s, "{},{},{},{},{}", e.epoch, e.total, e.frc, e.pixel, e.adv);
        }
        s
    }
}

/// Adam state for a flat parameter vector.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
}

impl Adam {
    const EPS: f64 = 1e-8;

    fn new(n: usize, cfg: &TrainingConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

/// Logistic discriminator on block means: `D(x) = σ(w·f(x) + b)`.
struct Discriminator {
    params: Vec<f64>,
    blocks_r: usize,
    blocks_c: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Discriminator {
    fn new(height: usize, width: usize) -> Self {
        let (br, bc) = (height / DISC_BLOCK, width / DISC_BLOCK);
        Self {
            params: vec![0.0; br * bc + 1],
            blocks_r: br,
            blocks_c: bc,
        }
    }

    fn features(&self, img: &[f64], width: usize) -> Vec<f64> {
        let mut f = vec![0.0; self.blocks_r * self.blocks_c];
        let norm = 1.0 / (DISC_BLOCK * DISC_BLOCK) as f64;
        for br in 0..self.blocks_r {
            for bc in 0..self.blocks_c {
                let mut s = 0.0;
                for r in br * DISC_BLOCK..(br + 1) * DISC_BLOCK {
                    for c in bc * DISC_BLOCK..(bc + 1) * DISC_BLOCK {
                        s += img[r * width + c];
                    }
                }
                f[br * self.blocks_c + bc] = s * norm;
            }
        }
        f
    }

    fn logit(&self, f: &[f64]) -> f64 {
        let n = f.len();
        self.params[n] + f.iter().zip(&self.params[..n]).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `∂z/∂x(pixel)` scaled by `dz`, accumulated into `out`.
    fn backprop_input(&self, dz: f64, width: usize, out: &mut [f64]) {
        let norm = dz / (DISC_BLOCK * DISC_BLOCK) as f64;
        for br in 0..self.blocks_r {
            for bc in 0..self.blocks_c {
                let w = self.params[br * self.blocks_c + bc] * norm;
                for r in br * DISC_BLOCK..(br + 1) * DISC_BLOCK {
                    for c in bc * DISC_BLOCK..(bc + 1) * DISC_BLOCK {
                        out[r * width + c] += w;
                    }
                }
            }
        }
    }
}

/// Per-pair data that stays fixed during training.
struct PreparedPair {
    upsampled: ComplexField,
    target: ComplexField,
    target_pixels: Vec<f64>,
}

struct PairEval {
    frc: f64,
    pixel: f64,
    adv: f64,
    kernel_grad: Vec<f64>,
    pred: Vec<f64>,
}

struct Trainer<'a> {
    cfg: &'a TrainingConfig,
    part: RingPartition,
    height: usize,
    width: usize,
}

impl Trainer<'_> {
    fn eval_pair(
        &self,
        pair: &PreparedPair,
        kernel_spec: &ComplexField,
        kernel_size: usize,
        disc: Option<(&Discriminator, f64)>,
    ) -> Result<PairEval> {
        let (h, w) = (self.height, self.width);
        let n = (h * w) as f64;
        let pred_spec = ComplexField::new(
            h,
            w,
            pair.upsampled
                .data()
                .iter()
                .zip(kernel_spec.data())
                .map(|(u, k)| u * k)
                .collect(),
        )?;
        let pred: Vec<f64> = idft2_complex(&pred_spec).data().iter().map(|z| z.re).collect();

        let mut grad_spec = if self.cfg.alpha > 0.0 {
            let l = loss_from_spectra(&pred_spec, &pair.target, &self.part, self.cfg.reduction)?;
            let mut g = l.gradient_spectrum;
            for z in g.data_mut() {
                *z *= self.cfg.alpha;
            }
            (l.loss, g)
        } else {
            (0.0, ComplexField::zeros(h, w))
        };

        // Pixel and adversarial terms live in real space.
        let mut real_grad = vec![0.0; h * w];
        let mut pixel = 0.0;
        for (k, (&p, &t)) in pred.iter().zip(&pair.target_pixels).enumerate() {
            let d = p - t;
            pixel += d.abs();
            if d.abs() > PIXEL_TIE {
                real_grad[k] = self.cfg.beta * d.signum() / n;
            }
        }
        pixel /= n;

        let mut adv = 0.0;
        if let Some((d, weight)) = disc {
            let z = d.logit(&d.features(&pred, w));
            adv = softplus(-z);
            if weight > 0.0 {
                d.backprop_input(weight * (sigmoid(z) - 1.0), w, &mut real_grad);
            }
        }

        if real_grad.iter().any(|&g| g != 0.0) {
            let rg = ChannelImage::new(h, w, real_grad)?;
            for (z, g) in grad_spec.1.data_mut().iter_mut().zip(dft2(&rg).data()) {
                *z += g;
            }
        }

        // kernel gradient: correlation of the prediction gradient with U
        let mut corr = grad_spec.1;
        for (z, u) in corr.data_mut().iter_mut().zip(pair.upsampled.data()) {
            *z *= u.conj();
        }
        let corr = idft2_complex(&corr);
        let c = (kernel_size / 2) as i64;
        let mut kernel_grad = vec![0.0; kernel_size * kernel_size];
        for a in 0..kernel_size {
            let du = (a as i64 - c).rem_euclid(h as i64) as usize;
            for b in 0..kernel_size {
                let dv = (b as i64 - c).rem_euclid(w as i64) as usize;
                kernel_grad[a * kernel_size + b] = corr.get(du, dv).re;
            }
        }
        Ok(PairEval {
            frc: grad_spec.0,
            pixel,
            adv,
            kernel_grad,
            pred,
        })
    }
}

/// Trains the deconvolution kernel with Adam on `α·L_FRC + β·L1 (+ λ·L_adv)`.
pub fn train_restorer(pairs: &PairSet, cfg: &TrainingConfig) -> Result<RestorerModel> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Degenerate("training set is empty".into()));
    }
    let (h, w) = pairs.hr[0].dims();
    let ks = cfg.kernel_size;
    if ks > h.min(w) {
        return Err(Error::InvalidParameter(format!("kernel {ks} exceeds patch {h}x{w}")));
    }
    let prepared = pairs
        .lr
        .iter()
        .zip(&pairs.hr)
        .map(|(lr, hr)| {
            let up = bicubic_resize(lr, pairs.scale, ResizeDirection::Up)?;
            hr.ensure_same_dims(&up, "upsampled LR vs HR patch")?;
            Ok(PreparedPair {
                upsampled: dft2(&up),
                target: dft2(hr),
                target_pixels: hr.data().to_vec(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let trainer = Trainer {
        cfg,
        part: RingPartition::new(h, w)?,
        height: h,
        width: w,
    };
    let mut weights = Kernel::delta(ks)?.weights().to_vec();
    let mut adam = Adam::new(weights.len(), cfg);
    let mut disc = (cfg.adv_weight > 0.0).then(|| Discriminator::new(h, w));
    let mut disc_adam = disc.as_ref().map(|d| Adam::new(d.params.len(), cfg));
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..prepared.len()).collect();

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut seeded_rng(cfg.seed, epoch as u64));
        let adv_w = cfg.adv_weight_at(epoch);
        let mut sums = EpochLoss {
            epoch,
            total: 0.0,
            frc: 0.0,
            pixel: 0.0,
            adv: 0.0,
        };
        for batch in order.chunks(cfg.batch) {
            let kernel = Kernel::new(ks, weights.clone())?;
            let kspec = kernel.spectrum(h, w)?;
            let mut grad = vec![0.0; weights.len()];
            let mut disc_grad = disc.as_ref().map(|d| vec![0.0; d.params.len()]);
            for &i in batch {
                let e = trainer.eval_pair(&prepared[i], &kspec, ks, disc.as_ref().map(|d| (d, adv_w)))?;
                let total = cfg.alpha * e.frc + cfg.beta * e.pixel + adv_w * e.adv;
                if !total.is_finite() || e.kernel_grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Training(format!(
                        "non-finite loss or gradient at epoch {epoch}, pair {i}"
                    )));
                }
                sums.total += total;
                sums.frc += e.frc;
                sums.pixel += e.pixel;
                sums.adv += e.adv;
                for (g, d) in grad.iter_mut().zip(&e.kernel_grad) {
                    *g += d;
                }
                if let (Some(d), Some(dg)) = (disc.as_ref(), disc_grad.as_mut()) {
                    // -log σ(z_real) - log σ(-z_fake)
                    let fr = d.features(&prepared[i].target_pixels, w);
                    let ff = d.features(&e.pred, w);
                    let gr = sigmoid(d.logit(&fr)) - 1.0;
                    let gf = sigmoid(d.logit(&ff));
                    let nf = fr.len();
                    for j in 0..nf {
                        dg[j] += gr * fr[j] + gf * ff[j];
                    }
                    dg[nf] += gr + gf;
                }
            }
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            adam.step(&mut weights, &grad);
            if let (Some(d), Some(dg), Some(da)) = (disc.as_mut(), disc_grad.as_mut(), disc_adam.as_mut()) {
                dg.iter_mut().for_each(|g| *g *= inv);
                da.step(&mut d.params, dg);
            }
        }
        let n = prepared.len() as f64;
        sums.total /= n;
        sums.frc /= n;
        sums.pixel /= n;
        sums.adv /= n;
        history.push(sums);
    }

    Ok(RestorerModel {
        scale: pairs.scale,
        kernel: Kernel::new(ks, weights)?,
        seed: cfg.seed,
        final_loss: history.last().map_or(f64::NAN, |e| e.total),
        history,
        config: Some(*cfg),
    })
}

/// Upsamples one channel and applies the learned kernel, without clamping.
pub fn restore_channel(model: &RestorerModel, lr: &ChannelImage) -> Result<ChannelImage> {
    let up = bicubic_resize(lr, model.scale, ResizeDirection::Up)?;
    convolve_periodic(&up, &model.kernel)
}

/// Restores every channel: `s·H × s·W`, pixel size divided by `s`,
/// values clamped to `[0, 1]`.
pub fn apply_restorer(model: &RestorerModel, lr: &SpectralCube) -> Result<SpectralCube> {
    let channels = lr
        .channels()
        .iter()
        .map(|c| restore_channel(model, c).map(|img| img.map(|v| v.clamp(0.0, 1.0))))
        .collect::<Result<Vec<_>>>()?;
    SpectralCube::new(
        channels,
        lr.pixel_size_um() / model.scale as f64,
        lr.labels().to_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_text_roundtrip() {
        let mut m = RestorerModel::identity(4, 3).unwrap();
        m.seed = 42;
        m.final_loss = 0.1 + 0.2;
        let w: Vec<f64> = (0..9).map(|i| (i as f64).sin() / 3.0).collect();
        m.kernel = Kernel::new(3, w).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("format = hyres-model/1\nscale = 4\nkernel_size = 3\nseed = 42\n"));
        let back = RestorerModel::from_text(&text).unwrap();
        assert_eq!(back.kernel, m.kernel);
        assert_eq!(back.final_loss, m.final_loss);
        assert_eq!(back.to_text(), text);
        assert!(RestorerModel::from_text("format = other\n").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig { batch: 0, ..Default::default() }.validate().is_err());
        assert!(TrainingConfig { patch: 8, ..Default::default() }.validate().is_err());
        assert!(TrainingConfig { kernel_size: 4, ..Default::default() }.validate().is_err());
        assert!(TrainingConfig::default().validate().is_ok());
    }

    #[test]
    fn adversarial_schedule_starts_at_zero() {
        let cfg = TrainingConfig { epochs: 11, adv_weight: 0.5, ..Default::default() };
        assert_eq!(cfg.adv_weight_at(0), 0.0);
        assert!((cfg.adv_weight_at(10) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(-800.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
    }

    #[test]
    fn kernel_gradient_matches_finite_differences() {
        use crate::frc::frc_loss;
        use crate::phantom::uniform_noise;
        let (h, w, ks) = (24, 24, 5);
        let up = uniform_noise(h, w, 1);
        let target = uniform_noise(h, w, 2);
        let weights: Vec<f64> = (0..ks * ks)
            .map(|i| if i == ks * ks / 2 { 0.8 } else { 0.01 * (i as f64).cos() })
            .collect();
        let cfg = TrainingConfig { beta: 0.0, ..Default::default() };
        let trainer = Trainer { cfg: &cfg, part: RingPartition::new(h, w).unwrap(), height: h, width: w };
        let pair = PreparedPair {
            upsampled: dft2(&up),
            target: dft2(&target),
            target_pixels: target.data().to_vec(),
        };
        let kspec = Kernel::new(ks, weights.clone()).unwrap().spectrum(h, w).unwrap();
        let e = trainer.eval_pair(&pair, &kspec, ks, None).unwrap();
        let loss = |wts: &[f64]| {
            let pred = convolve_periodic(&up, &Kernel::new(ks, wts.to_vec()).unwrap()).unwrap();
            frc_loss(&pred, &target).unwrap()
        };
        assert!((loss(&weights) - e.frc).abs() < 1e-12);
        let step = 1e-6;
        for k in 0..weights.len() {
            let mut p = weights.clone();
            let mut m = weights.clone();
            p[k] += step;
            m[k] -= step;
            let fd = (loss(&p) - loss(&m)) / (2.0 * step);
            assert!((fd - e.kernel_grad[k]).abs() < 1e-6 * (1.0 + fd.abs()), "{k}: {fd} vs {}", e.kernel_grad[k]);
        }
    }

    #[test]
    fn empty_pairs_rejected() {
        let set = PairSet { scale: 4, patch: 16, lr: vec![], hr: vec![], origins: vec![] };
        assert!(train_restorer(&set, &TrainingConfig::default()).is_err());
    }
}
