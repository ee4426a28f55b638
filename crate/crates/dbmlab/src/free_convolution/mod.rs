//! Free convolution of an empirical measure with the semicircle law.
//!
//! For initial data V the Stieltjes transform m = m_fc,t(z) is the root with
//! Im m > 0 of
//!
//! ```text
//! m = (1/N) Σ_i 1 / (V_i − z − t·m).
//! ```
//!
//! Everything else (density, classical locations, the partial-fraction
//! derivative, the energy flow) is read off that root.

mod advect;
mod interpolating;
mod locations;
mod solver;

pub use advect::{advect_energy, advect_energy_with, EnergyPath};
pub use interpolating::{build_interpolating_density, InterpolatingDensity, QuantileCurve};
pub use locations::{density_and_locations, density_and_locations_with, FreeConvolution};
pub use solver::{derived_quantities, solve_stieltjes, DerivedQuantities, FcModel, SolverOptions};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FcError {
    #[error("potential values must be finite and nondecreasing (index {index})")]
    Unsorted { index: usize },
    #[error("potential is empty")]
    Empty,
    #[error("regularity scales must satisfy 0 < g <= G, got g = {g}, G = {big_g}")]
    BadScales { g: f64, big_g: f64 },
    #[error("max |V_i| = {max} exceeds the declared bound {bound}")]
    NormBound { max: f64, bound: f64 },
    #[error("time must be finite and nonnegative, got {0}")]
    BadTime(f64),
    #[error("spectral parameter must have positive imaginary part, got {re} + {im}i")]
    NotUpperHalfPlane { re: f64, im: f64 },
    #[error("fixed-point iteration did not converge at z = {re} + {im}i (residual {residual:e})")]
    NotConverged { re: f64, im: f64, residual: f64 },
    #[error("|1 − t·R₂| = {stability:e} at z = {re} + {im}i, too close to an edge or singular point")]
    Unstable { re: f64, im: f64, stability: f64 },
    #[error("energy window [{lo}, {hi}] is empty or not finite")]
    BadWindow { lo: f64, hi: f64 },
    #[error("energy path left the bulk at t = {t}, E = {energy} (density {density:e})")]
    LeftBulk { t: f64, energy: f64, density: f64 },
    #[error("quantile vector is not strictly increasing at position {index}")]
    NonMonotone { index: usize },
    #[error("alpha must lie in [0, 1], got {0}")]
    BadAlpha(f64),
    #[error("window index k0 = {k0} exceeds the available half-range {available}")]
    WindowTooWide { k0: usize, available: usize },
    #[error("quantile curves describe different system sizes ({0} vs {1})")]
    SizeMismatch(usize, usize),
}

/// Deterministic initial data with its regularity scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    values: Vec<f64>,
    g: f64,
    big_g: f64,
    norm_bound: f64,
}

impl Potential {
    /// Sorted values with regularity scales `g <= big_g`; the norm bound is
    /// taken as max |V_i|.
    pub fn new(values: Vec<f64>, g: f64, big_g: f64) -> Result<Self, FcError> {
        if values.is_empty() {
            return Err(FcError::Empty);
        }
        for (i, w) in values.windows(2).enumerate() {
            if !(w[0] <= w[1]) {
                return Err(FcError::Unsorted { index: i + 1 });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FcError::Unsorted { index: 0 });
        }
        if !(g > 0.0 && g <= big_g && big_g.is_finite()) {
            return Err(FcError::BadScales { g, big_g });
        }
        let norm_bound = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Ok(Self {
            values,
            g,
            big_g,
            norm_bound,
        })
    }

    /// Declare an explicit bound C_V on max |V_i|.
    pub fn with_norm_bound(mut self, bound: f64) -> Result<Self, FcError> {
        if self.norm_bound > bound {
            return Err(FcError::NormBound {
                max: self.norm_bound,
                bound,
            });
        }
        self.norm_bound = bound;
        Ok(self)
    }

    /// N copies of one value.
    pub fn constant(n: usize, value: f64) -> Self {
        Self::new(vec![value; n.max(1)], 1.0, 1.0).expect("constant data is sorted")
    }

    /// V_i = q((i − 1/2)/N) for a nondecreasing quantile function q.
    pub fn from_quantile_fn<F: Fn(f64) -> f64>(n: usize, q: F, g: f64, big_g: f64) -> Result<Self, FcError> {
        let values = (1..=n).map(|i| q((i as f64 - 0.5) / n as f64)).collect();
        Self::new(values, g, big_g)
    }

    /// Quantiles of the uniform law on [a, b].
    pub fn uniform(n: usize, a: f64, b: f64) -> Self {
        Self::from_quantile_fn(n, |p| a + (b - a) * p, 1.0 / n as f64, 1.0)
            .expect("uniform quantiles are sorted")
    }

    /// Quantiles of the semicircle law on [−2, 2].
    pub fn semicircle(n: usize) -> Self {
        Self::from_quantile_fn(n, semicircle_quantile, 1.0 / n as f64, 1.0)
            .expect("semicircle quantiles are sorted")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn big_g(&self) -> f64 {
        self.big_g
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    /// The map V ↦ a·(V − b) used to match a density and a center.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        assert!(a > 0.0, "affine rescaling needs a > 0");
        let values: Vec<f64> = self.values.iter().map(|v| a * (v - b)).collect();
        let norm_bound = values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        Self {
            values,
            g: a * self.g,
            big_g: a * self.big_g,
            norm_bound,
        }
    }

    /// True when the sorted values are symmetric about 0 to `tol`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.values.len();
        (0..n).all(|i| (self.values[i] + self.values[n - 1 - i]).abs() <= tol)
    }
}

/// ρ_sc(x) = √(4 − x²)/(2π).
pub fn semicircle_density(x: f64) -> f64 {
    if x.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - x * x).sqrt() / (2.0 * PI)
    }
}

/// F_sc(x) = 1/2 + x√(4 − x²)/(4π) + arcsin(x/2)/π.
pub fn semicircle_cdf(x: f64) -> f64 {
    if x <= -2.0 {
        0.0
    } else if x >= 2.0 {
        1.0
    } else {
        0.5 + x * (4.0 - x * x).sqrt() / (4.0 * PI) + (0.5 * x).asin() / PI
    }
}

/// Inverse of [`semicircle_cdf`] by bisection to machine precision.
pub fn semicircle_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return -2.0;
    }
    if p >= 1.0 {
        return 2.0;
    }
    let (mut lo, mut hi) = (-2.0f64, 2.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if semicircle_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Classical semicircle locations γ^(sc)_i, i = 1..n, at levels (i − 1/2)/n.
pub fn semicircle_locations(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| semicircle_quantile((i as f64 - 0.5) / n as f64))
        .collect()
}

/// Flat locations γ^𝔣_j = j/(N ρ_sc(0)).
pub fn flat_location(j: i64, n: usize) -> f64 {
    j as f64 * PI / n as f64
}

/// ρ_sc(0) = 1/π.
pub const RHO_SC_0: f64 = 1.0 / PI;
