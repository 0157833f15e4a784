//! Reconstruction of scattering potentials of the two-dimensional
//! Schrödinger equation from phase and intensity-only scattering data.

pub mod born;
pub mod dataset;
pub mod detector;
pub mod direct;
pub mod error;
pub mod fft;
pub mod forward;
pub mod fourier;
pub mod geometry;
pub mod grid;
pub mod ibs;
pub mod io;
pub mod krylov;
pub mod nufft;
pub mod operators;
pub mod polarization;
pub mod special;

pub use error::{Error, Result};
