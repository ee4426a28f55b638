//! Numerical laboratory for Dyson Brownian motion with general initial data.
//!
//! The crate covers the deterministic side (free convolution, classical
//! locations, the truncated nonlocal heat kernel, mesoscopic variance
//! functionals) and the stochastic side (DBM and its coupled and
//! short-range variants, Gaussian β-ensembles, matrix marginals), plus the
//! statistics used to compare the two.

pub mod dbm;
pub mod free_convolution;
pub mod homogenization;
pub mod linalg;
pub mod meso_stats;
pub mod nonlocal_heat;
pub mod quad;
pub mod rng;
pub mod special;
pub mod spectral_stats;

pub use dbm::{DbmError, FlowSpec, Trajectory};
pub use free_convolution::{FcError, FcModel, FreeConvolution, Potential};
pub use nonlocal_heat::{HeatError, HeatKernelTable};
pub use rng::NoiseSource;

pub use num_complex::Complex64;
