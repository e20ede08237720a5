//! Simulation and inversion of spatially resolved homodyne noise
//! measurements: Gaussian states, Hadamard masks, quadrature sweeps and the
//! sign-resolved reconstruction of squeezed and thermal mode profiles.
#![no_std]
// Comparisons are written as `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
extern crate alloc;

pub mod db;
pub mod error;
pub mod fit;
pub mod gaussian;
pub mod measurement;
pub mod optics;
pub mod reconstruction;

pub use error::{Error, ErrorKind, Result};
pub use fit::{fit_points, fit_trace, QuadratureFit};
pub use gaussian::{CovarianceMatrix, ModeNoiseSpec, SymplecticOp};
pub use measurement::{Samples, Scene, ThermalComponent, ThermalModel, TraceId, VarianceTrace};
pub use optics::{FieldGrid, Mask, MaskOrder, MaskSet, ModeKind, ModeSpec, OverlapWeight};
pub use reconstruction::{reconstruct, FitSet, Reconstruction, ReconstructionOptions};
