//! Physics core for simulating a quantum-dot micropost single-photon source.
//!
//! The crate is `no_std` (with `alloc`) and contains only numerical code:
//!
//! - [`cavity`]: normal-incidence transfer-matrix optics of DBR layer stacks,
//!   reflectance spectra and resonance/Q extraction.
//! - [`fdtd`]: an independent 1-D Yee solver over the same stacks, used to
//!   cross-check reflectance and to measure Q from a ringdown.
//! - [`purcell`]: Lorentzian emitter–cavity coupling, decay-rate model,
//!   temperature tuning and the associated fits.
//! - [`source`]: pulse-by-pulse Monte Carlo of a blinking emitter.
//! - [`hbt`]: beamsplitter, detector and correlator models producing
//!   start–stop delay histograms and streak (decay) histograms.
//! - [`analysis`]: peak-area integration, side-peak envelope fitting,
//!   g²(0)/g estimation and lifetime fitting.
//!
//! File formats, configuration, parallel drivers and the command line live in
//! the companion `micropost` crate.
#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analysis;
pub mod cavity;
pub mod fdtd;
pub mod fit;
pub mod hbt;
pub mod purcell;
pub mod rng;
pub mod source;
pub mod special;

/// Speed of light in nm/ns.
pub const SPEED_OF_LIGHT_NM_PER_NS: f64 = 299_792.458;

/// Conversion factor between FWHM and standard deviation of a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;
