//! Refinement of noisy stereo digital surface models into building-shape
//! surface models with a dual-stream conditional GAN.
//!
//! The crate is organised bottom-up:
//!
//! - [`raster`]: single-band grids, `.r32` I/O, normalization, tiling, mask dilation
//! - [`synth`]: procedural scenes (ground truth, degraded stereo DSM, PAN, footprints)
//! - [`nn`]: a small CPU tensor/layer toolkit with explicit backward passes
//! - [`nets`]: the two-stream WNet generator, a single-stream baseline, and the
//!   conditional patch discriminator
//! - [`objective`]: least-squares adversarial terms plus weighted L1
//! - [`train`]: minibatch adversarial training, checkpoints, tiled inference
//! - [`metrics`]: MAE / RMSE / NMAD / NCC over dilated footprints, height profiles
//! - [`cli`]: the `dsm-refine` command wiring all of the above

pub mod cli;
pub mod error;
pub mod metrics;
pub mod nets;
pub mod nn;
pub mod objective;
pub mod preview;
pub mod raster;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use raster::{RasterGrid, RasterKind};
