//! Numerical core of the k-space reconstruction benchmark.
//!
//! - [`kspace`]: centered orthonormal FFTs, coil combination, cropping and the
//!   virtual single-coil emulation.
//! - [`container`]: the KSB1 case file format.
//! - [`phantom`]: synthetic multi-coil cases with RSS ground truth.
//! - [`sampling`]: Cartesian undersampling masks and track definitions.
//! - [`metrics`]: NMSE / PSNR / SSIM and their aggregation.
//! - [`recon`]: zero-filled, CG-SENSE and TV compressed-sensing baselines.

pub mod container;
pub mod error;
pub mod kspace;
pub mod metrics;
pub mod phantom;
pub mod recon;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
