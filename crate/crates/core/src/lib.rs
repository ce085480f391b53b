//! Reconstruction laboratory for accelerated Cartesian MRI.
//!
//! The pipeline runs from synthetic multi-coil acquisition through
//! retrospective undersampling to three reconstruction routes:
//!
//! * zero-filled inverse transform ([`simulate::zero_filled_recon`]),
//! * GRAPPA k-space interpolation ([`grappa`]),
//! * a residual dense U-Net trained with an image-plus-Fourier loss
//!   ([`nn`], [`loss`], [`train`]).
//!
//! [`metrics`] compares the routes and [`io`] holds the on-disk formats
//! shared by the `ksr` command-line tool.

pub mod cli;
pub mod error;
pub mod fourier;
pub mod real;
pub mod grappa;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod simulate;
pub mod train;

pub use error::{Error, Result};
pub use fourier::{fft2c, ifft2c, ComplexImage, RealImage};
pub use real::Real;
pub use simulate::{CoilKSpace, SamplingMask, SensitivityMaps};
