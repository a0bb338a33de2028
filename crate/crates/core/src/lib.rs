//! Diffusion-trajectory characterization of distribution shifts.
//!
//! A small denoising diffusion model is trained on in-distribution data. Each
//! sample is then pushed through the forward process at a grid of noise
//! levels, reconstructed with the learned denoiser, and compared to its noisy
//! version with a suite of complementary discrepancy statistics. The
//! concatenation of those statistics across the grid is a trajectory
//! embedding that downstream detectors (isolation forest, k-means, an MLP
//! head) consume in place of a single scalar outlier score.
//!
//! Module map:
//!
//! - [`numerics`]: seeded random streams, dense networks with hand-written
//!   gradients, and a deterministic trainer.
//! - [`diffusion`]: noise schedule, the noise-prediction denoiser, posterior
//!   mean and ancestral reconstruction.
//! - [`metrics`]: MSE, SSIM, LBP/Haar histograms with KL, feature distance,
//!   local complexity, rank-order consistency.
//! - [`trajectory`]: embedding assembly, standardization, embedding files.
//! - [`shiftgen`]: synthetic corpora and covariate/semantic shift families.
//! - [`detectors`]: isolation forest, k-means, classifier head, scalar
//!   baselines and the threshold rule.
//! - [`eval`]: AUROC, clustering accuracy and the benchmark runner.
//! - [`theory`]: the finite counterexample showing that a scalar statistic
//!   cannot separate alternatives sharing its marginal.

pub mod detectors;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod io;
pub mod metrics;
pub mod numerics;
pub mod shiftgen;
pub mod theory;
pub mod trajectory;

pub use error::{Error, Result};

/// Version string embedded in every artifact written by the toolkit.
pub const TOOL_VERSION: &str = concat!("disc/", env!("CARGO_PKG_VERSION"));
