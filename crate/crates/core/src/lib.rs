//! Reconstruction of magnitude, phase-difference velocity and two-region
//! segmentation from undersampled velocity-encoded MRI k-space data.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cg;
pub mod config;
pub mod error;
pub mod fourier;
pub mod grid;
pub mod io;
pub mod joint;
pub mod measurement;
pub mod metrics;
pub mod pdhg;
pub mod phantom;
pub mod pipeline;
pub mod render;
pub mod sequential;

pub use error::{Error, Result};
pub use rustfft::num_complex::Complex64;
pub use fourier::{make_mask, KSpaceChannel, MaskKind, MaskOptions, SampledFourier, SamplingMask};
pub use grid::{ComplexField, ScalarField, Shape, VectorField};
pub use joint::{run_joint, JointParams, JointState, StopRule};
pub use measurement::{Component, MeasurementSet};
pub use pdhg::PdhgConfig;
pub use phantom::{GroundTruth, PhantomSpec};
pub use sequential::{run_sequential, run_zero_fill, Reconstruction};
