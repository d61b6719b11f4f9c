//! 2D discrete Fourier transforms, frequency rings, Gaussian kernels and
//! periodic convolution.
//!
//! Transforms are unnormalized forward / `1/(HW)` inverse, with DC at index
//! `(0, 0)`. All convolutions are circular.

use std::cell::RefCell;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::cube::ChannelImage;
use crate::error::{Error, Result};

/// Imaginary residue above which an inverse transform is rejected as non-Hermitian.
pub const SYMMETRY_TOLERANCE: f64 = 1e-6;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Complex 2D field in frequency layout (DC at `(0, 0)`), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {height}x{width} field",
                data.len()
            )));
        }
        if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Validation("non-finite spectral sample".into()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.data[u * self.width + v]
    }

    /// Largest deviation from `X(u,v) = conj(X(-u, -v))`.
    pub fn hermitian_defect(&self) -> f64 {
        let (h, w) = self.dims();
        let mut worst: f64 = 0.0;
        for u in 0..h {
            for v in 0..w {
                let mirror = self.get((h - u) % h, (w - v) % w).conj();
                worst = worst.max((self.get(u, v) - mirror).norm());
            }
        }
        worst
    }
}

fn transform_in_place(height: usize, width: usize, data: &mut [Complex64], inverse: bool) {
    let row_fft = plan(width, inverse);
    for row in data.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = plan(height, inverse);
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for c in 0..width {
        for r in 0..height {
            column[r] = data[r * width + c];
        }
        col_fft.process(&mut column);
        for r in 0..height {
            data[r * width + c] = column[r];
        }
    }
}

/// Unnormalized forward DFT: `X(u,v) = Σ x(i,j) exp(-2πi(ui/H + vj/W))`.
pub fn dft2(image: &ChannelImage) -> ComplexField {
    let (h, w) = image.dims();
    let mut data: Vec<Complex64> = image.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    if !data.is_empty() {
        transform_in_place(h, w, &mut data, false);
    }
    ComplexField {
        height: h,
        width: w,
        data,
    }
}

/// Forward DFT of a complex field.
pub fn dft2_complex(field: &ComplexField) -> ComplexField {
    let mut out = field.clone();
    if !out.data.is_empty() {
        transform_in_place(out.height, out.width, &mut out.data, false);
    }
    out
}

/// Inverse DFT with `1/(HW)` normalization, keeping the complex result.
pub fn idft2_complex(field: &ComplexField) -> ComplexField {
    let mut out = field.clone();
    if !out.data.is_empty() {
        transform_in_place(out.height, out.width, &mut out.data, true);
        let scale = 1.0 / out.data.len() as f64;
        for z in &mut out.data {
            *z *= scale;
        }
    }
    out
}

/// Real inverse transform together with the discarded imaginary residue.
#[derive(Debug, Clone)]
pub struct InverseTransform {
    pub image: ChannelImage,
    pub max_imaginary_residue: f64,
}

/// Inverse DFT of a Hermitian-symmetric field.
///
/// The residue threshold scales with the peak real magnitude once that
/// exceeds 1, so large-valued fields are held to the same relative precision.
pub fn idft2_checked(field: &ComplexField) -> Result<InverseTransform> {
    let out = idft2_complex(field);
    let residue = out.data.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let peak = out.data.iter().map(|z| z.re.abs()).fold(1.0, f64::max);
    if residue > SYMMETRY_TOLERANCE * peak {
        return Err(Error::Symmetry(residue));
    }
    let image = ChannelImage::new(
        field.height,
        field.width,
        out.data.iter().map(|z| z.re).collect(),
    )?;
    Ok(InverseTransform {
        image,
        max_imaginary_residue: residue,
    })
}

pub fn idft2(field: &ComplexField) -> Result<ChannelImage> {
    idft2_checked(field).map(|t| t.image)
}

/// Signed frequency index of DFT bin `k` out of `n` (numpy `fftfreq` order).
#[inline]
pub fn signed_frequency(k: usize, n: usize) -> i64 {
    if k <= (n - 1) / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Assignment of frequency samples to rings of unit width.
///
/// The radius of sample `(u, v)` is measured in units of `1/min(H, W)` cycles
/// per pixel, `ρ = min(H,W)·√((u/H)² + (v/W)²)`, which reduces to `√(u²+v²)`
/// for square images. Ring index is `round(ρ)`; samples beyond ring
/// `R = ⌊min(H,W)/2⌋` are excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct RingPartition {
    height: usize,
    width: usize,
    ring_count: usize,
    index: Vec<Option<u32>>,
    counts: Vec<usize>,
}

impl RingPartition {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::Degenerate(format!(
                "ring partition needs at least 2x2, got {height}x{width}"
            )));
        }
        let m = height.min(width) as f64;
        let ring_count = height.min(width) / 2;
        let mut counts = vec![0usize; ring_count + 1];
        let mut index = Vec::with_capacity(height * width);
        for ku in 0..height {
            let fu = signed_frequency(ku, height) as f64 / height as f64;
            for kv in 0..width {
                let fv = signed_frequency(kv, width) as f64 / width as f64;
                let rho = m * (fu * fu + fv * fv).sqrt();
                let r = rho.round() as usize;
                if r <= ring_count {
                    counts[r] += 1;
                    index.push(Some(r as u32));
                } else {
                    index.push(None);
                }
            }
        }
        Ok(Self {
            height,
            width,
            ring_count,
            index,
            counts,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// `R`: the outermost ring index.
    pub fn ring_count(&self) -> usize {
        self.ring_count
    }

    /// Ring of the sample at flat index `k`, `None` if excluded.
    #[inline]
    pub fn ring_of(&self, k: usize) -> Option<usize> {
        self.index[k].map(|r| r as usize)
    }

    pub fn ring_at(&self, u: usize, v: usize) -> Option<usize> {
        self.ring_of(u * self.width + v)
    }

    /// Sample counts `N_r` for `r = 0..=R`.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn excluded(&self) -> usize {
        self.index.iter().filter(|r| r.is_none()).count()
    }

    /// Normalized frequency of ring `r` in cycles per pixel.
    pub fn frequency(&self, r: usize) -> f64 {
        r as f64 / self.height.min(self.width) as f64
    }
}

pub fn ring_partition(height: usize, width: usize) -> Result<RingPartition> {
    RingPartition::new(height, width)
}

/// Square convolution kernel with odd side length, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("kernel size {size} is not odd")));
        }
        if weights.len() != size * size {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for a {size}x{size} kernel",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation("non-finite kernel weight".into()));
        }
        Ok(Self { size, weights })
    }

    /// Centered unit impulse.
    pub fn delta(size: usize) -> Result<Self> {
        let mut weights = vec![0.0; size * size];
        if size % 2 == 1 {
            weights[(size / 2) * size + size / 2] = 1.0;
        }
        Self::new(size, weights)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// The kernel rotated by 180 degrees.
    pub fn rotated(&self) -> Self {
        let mut weights = self.weights.clone();
        weights.reverse();
        Self {
            size: self.size,
            weights,
        }
    }

    /// Spectrum of the kernel wrapped onto an `h × w` periodic grid with its
    /// center at `(0, 0)`.
    pub fn spectrum(&self, height: usize, width: usize) -> Result<ComplexField> {
        if self.size > height.min(width) {
            return Err(Error::InvalidParameter(format!(
                "kernel side {} exceeds image {height}x{width}",
                self.size
            )));
        }
        let c = self.radius() as i64;
        let mut field = ComplexField::zeros(height, width);
        for a in 0..self.size {
            let du = (a as i64 - c).rem_euclid(height as i64) as usize;
            for b in 0..self.size {
                let dv = (b as i64 - c).rem_euclid(width as i64) as usize;
                field.data[du * width + dv] += Complex64::new(self.get(a, b), 0.0);
            }
        }
        Ok(dft2_complex(&field))
    }
}

/// Smallest odd side covering `6σ`.
pub fn auto_kernel_size(sigma: f64) -> usize {
    let n = (6.0 * sigma).ceil().max(1.0) as usize;
    if n.is_multiple_of(2) {
        n + 1
    } else {
        n
    }
}

/// Normalized isotropic Gaussian `w(i,j) ∝ exp(-(i²+j²)/(2σ²))` on a centered grid.
pub fn gaussian_kernel(sigma: f64, size: Option<usize>) -> Result<Kernel> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let size = size.unwrap_or_else(|| auto_kernel_size(sigma));
    if size.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("kernel size {size} is not odd")));
    }
    let c = (size / 2) as f64;
    let mut weights = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            let (di, dj) = (i as f64 - c, j as f64 - c);
            weights.push((-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Kernel::new(size, weights)
}

/// Circular convolution `y(i,j) = Σ k(a,b) x(i-a+c, j-b+c)` with `c` the
/// kernel center, evaluated directly in the spatial domain.
pub fn convolve_periodic(image: &ChannelImage, kernel: &Kernel) -> Result<ChannelImage> {
    let (h, w) = image.dims();
    if kernel.size > h.min(w) {
        return Err(Error::InvalidParameter(format!(
            "kernel side {} exceeds image {h}x{w}",
            kernel.size
        )));
    }
    let c = kernel.radius();
    let src = image.data();
    let mut out = vec![0.0; h * w];
    for a in 0..kernel.size {
        for b in 0..kernel.size {
            let k = kernel.get(a, b);
            if k == 0.0 {
                continue;
            }
            // out(i, j) += k * x(i - (a - c), j - (b - c))
            let sr = (h + c - a) % h;
            let sc = (w + c - b) % w;
            for i in 0..h {
                let row = &src[((i + sr) % h) * w..((i + sr) % h + 1) * w];
                let dst = &mut out[i * w..(i + 1) * w];
                for (j, d) in dst.iter_mut().enumerate() {
                    let jj = j + sc;
                    *d += k * row[if jj >= w { jj - w } else { jj }];
                }
            }
        }
    }
    ChannelImage::new(h, w, out)
}

/// Moves `(0, 0)` to `(H/2, W/2)`.
pub fn fftshift(image: &ChannelImage) -> ChannelImage {
    let (h, w) = image.dims();
    ChannelImage::from_fn(h, w, |r, c| {
        image.get((r + h - h / 2) % h, (c + w - w / 2) % w)
    })
}

/// Periodic shift by `(dr, dc)`: `out(r, c) = in(r - dr, c - dc)`.
pub fn roll(image: &ChannelImage, dr: i64, dc: i64) -> ChannelImage {
    let (h, w) = image.dims();
    ChannelImage::from_fn(h, w, |r, c| {
        let rr = (r as i64 - dr).rem_euclid(h as i64) as usize;
        let cc = (c as i64 - dc).rem_euclid(w as i64) as usize;
        image.get(rr, cc)
    })
}
