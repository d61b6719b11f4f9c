//! Hyperspectral datacube restoration and physics-aware evaluation.
//!
//! The crate covers the full loop used to judge a super-resolving restorer:
//!
//! * [`cube`]: the [`SpectralCube`] model, the `.hyrs` container, PGM ingestion.
//! * [`fourier`]: 2D DFTs, frequency ring partitions, Gaussian kernels and
//!   periodic convolution.
//! * [`frc`]: Fourier ring correlation curves, single-image resolution
//!   estimates and the FRC loss with its analytic gradient.
//! * [`psf`]: forward imaging model, difference PSF and radial Gaussian fits.
//! * [`iqa`]: PSNR, SSIM, BRISQUE, PIQE and CRISQUE.
//! * [`degrade`] / [`restore`]: the LR/HR pair pipeline and a minimal
//!   learned-deconvolution restorer trained with the FRC loss.
//! * [`metrics`]: Dice, Spearman, ROC-AUC and balanced accuracy.

pub mod cube;
pub mod degrade;
mod error;
pub mod fourier;
pub mod frc;
pub mod iqa;
pub mod metrics;
pub mod noise;
pub mod phantom;
pub mod psf;
pub mod restore;

pub use cube::{ChannelImage, CubeManifest, SpectralCube};
pub use error::{Error, Result};
