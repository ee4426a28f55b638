//! Dyson Brownian motion and its relatives.
//!
//! All flows share one SDE,
//!
//! ```text
//! dλ_i = σ·√(2/(βN)) dB_i + [(1/N) Σ_{j∈𝒮(i)} 1/(λ_i − λ_j + ε_ij) − V′(λ_i)/2 + c(t)·1_far(i)] dt
//! ```
//!
//! where 𝒮(i) is either every other particle or the short-range set, and the
//! far-field center drift c(t) only appears in short-range specs. Particle
//! `k` is driven by the Brownian path keyed by `k`, so flows built from the
//! same [`NoiseSource`] are coupled.

mod ensembles;
mod flow;

pub use ensembles::{matrix_marginal, sample_gbe_eigs, sample_goe_matrix};
pub use flow::{interpolate_initial, make_coupled_pair, simulate_flow};

use crate::linalg::LinalgError;
use crate::rng::NoiseSource;
use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DbmError {
    #[error("initial data must be finite and strictly increasing (index {index})")]
    NotOrdered { index: usize },
    #[error("invalid flow spec: {0}")]
    Spec(String),
    #[error("ordering violated at t = {t} after {retries} corrective subdivisions (substep {h:e}, min gap {min_gap:e})")]
    OrderingViolation { t: f64, h: f64, retries: u32, min_gap: f64 },
    #[error("non-finite position at t = {t}, particle {particle}")]
    NonFinite { t: f64, particle: usize },
    #[error("substep shrank below {h:e} at t = {t}; configuration too singular")]
    StepUnderflow { t: f64, h: f64 },
    #[error("time span ({0}, {1}) or step {2} is invalid")]
    BadSpan(f64, f64, f64),
    #[error("coupled flows need equal lengths, got {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("malformed trajectory file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Confining drift −V′(x)/2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Drift {
    None,
    /// V(x) = x²/2, drift −x/2.
    Gaussian,
    /// V(x) = Σ_k c_k x^k with the given coefficients (c_0 first).
    Polynomial(Vec<f64>),
}

impl Drift {
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self {
            Drift::None => 0.0,
            Drift::Gaussian => -0.5 * x,
            Drift::Polynomial(c) => {
                // Horner on V′(x) = Σ k c_k x^{k−1}
                let mut acc = 0.0;
                for k in (1..c.len()).rev() {
                    acc = acc * x + k as f64 * c[k];
                }
                -0.5 * acc
            }
        }
    }
}

/// Piecewise-linear table of the far-field center drift Re m(γ₀(t)).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterDrift {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl CenterDrift {
    pub fn constant(value: f64) -> Self {
        Self {
            times: vec![0.0],
            values: vec![value],
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.values[0];
        }
        if k >= self.times.len() {
            return *self.values.last().expect("non-empty");
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        self.values[k - 1] * (1.0 - w) + self.values[k] * w
    }
}

/// The short-range set 𝒜_q: pairs with |i − j| ≤ ℓ, plus same-side pairs
/// that both lie outside Ĉ_q = {|i| ≤ q·k₀}. Indices are relabeled so the
/// center particle ⌈N/2⌉ has label 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShortRange {
    pub ell: usize,
    pub q_star: f64,
    pub k0: usize,
    /// Particles with |i| ≤ n_a keep only short-range forces.
    pub n_a: f64,
    /// Far particles add the complement sum and the center drift.
    pub far_field: Option<CenterDrift>,
}

impl ShortRange {
    /// ℓ = N^{ω_ℓ}, n_a = N^{ω_A}, k₀ = N/2.
    pub fn from_exponents(n: usize, omega_ell: f64, omega_a: f64, q_star: f64) -> Self {
        let nf = n as f64;
        Self {
            ell: nf.powf(omega_ell).floor().max(1.0) as usize,
            q_star,
            k0: n / 2,
            n_a: nf.powf(omega_a),
            far_field: None,
        }
    }

    #[inline]
    pub fn in_core(&self, i: i64) -> bool {
        (i.unsigned_abs() as f64) <= self.q_star * self.k0 as f64
    }

    /// (i, j) ∈ 𝒜_q in relabeled indices.
    #[inline]
    pub fn contains(&self, i: i64, j: i64) -> bool {
        (i - j).unsigned_abs() as usize <= self.ell || (i * j > 0 && !self.in_core(i) && !self.in_core(j))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Interaction {
    Full,
    ShortRange(ShortRange),
}

/// Everything that defines a flow apart from its initial data and noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub beta: f64,
    pub drift: Drift,
    pub interaction: Interaction,
    /// ε in the denominators λ_i − λ_j ± ε.
    pub eps_reg: f64,
    /// Multiplies the noise; 0 gives the deterministic particle ODE.
    pub noise_scale: f64,
    /// Substeps are refined while h > gap_factor·N·(min gap)².
    pub gap_factor: f64,
    /// Deepest level the gap rule may refine to. At β = 1 pair gaps come
    /// arbitrarily close to zero without colliding, so an uncapped rule
    /// chases them to the underflow level; the implicit nearest-neighbour
    /// step keeps the ordering below this depth.
    #[serde(default = "default_gap_depth")]
    pub gap_depth: u32,
}

fn default_gap_depth() -> u32 {
    4
}

impl Default for FlowSpec {
    fn default() -> Self {
        Self {
            beta: 1.0,
            drift: Drift::None,
            interaction: Interaction::Full,
            eps_reg: 1e-12,
            noise_scale: 1.0,
            gap_factor: 0.1,
            gap_depth: default_gap_depth(),
        }
    }
}

impl FlowSpec {
    /// Plain DBM, β = 1.
    pub fn dbm() -> Self {
        Self::default()
    }

    /// β-DBM with drift −x/2, which leaves the Gaussian β-ensemble invariant.
    pub fn gaussian(beta: f64) -> Self {
        Self {
            beta,
            drift: Drift::Gaussian,
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), DbmError> {
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            return Err(DbmError::Spec(format!("beta must be >= 1, got {}", self.beta)));
        }
        if !(self.eps_reg >= 0.0) || !(self.noise_scale >= 0.0) || !(self.gap_factor > 0.0) {
            return Err(DbmError::Spec("eps_reg, noise_scale >= 0 and gap_factor > 0 required".into()));
        }
        if let Interaction::ShortRange(sr) = &self.interaction {
            if sr.ell >= n {
                return Err(DbmError::Spec(format!("ell = {} must be below N = {}", sr.ell, n)));
            }
            if !(sr.q_star > 0.0 && sr.q_star < 1.0) {
                return Err(DbmError::Spec(format!("q_star must lie in (0, 1), got {}", sr.q_star)));
            }
        }
        Ok(())
    }
}

/// Which states a trajectory keeps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Record {
    /// Initial and final state.
    Final,
    /// Every k-th base step.
    EveryBaseStep(usize),
    /// Base-step ends closest to the given times.
    Times(Vec<f64>),
    /// Every accepted substep.
    AllSubsteps,
}

/// Integrator bookkeeping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub base_steps: u64,
    pub substeps: u64,
    pub retries: u64,
    /// Substeps taken at the depth cap while still coarser than the gap rule.
    pub unresolved: u64,
    pub finest_level: u32,
    pub min_gap: f64,
    pub max_abs: f64,
}

/// Ordered configurations at increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub spec: FlowSpec,
    pub noise: NoiseSource,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.states[0].len()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectories hold at least one state")
    }

    /// Binary snapshots (little endian): magic `DBT1`, N u64, count u64,
    /// seed, experiment, replica u64, then per snapshot the time and N values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), DbmError> {
        w.write_all(b"DBT1")?;
        for v in [
            self.n() as u64,
            self.times.len() as u64,
            self.noise.master_seed,
            self.noise.experiment,
            self.noise.replica,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for (t, s) in self.times.iter().zip(&self.states) {
            w.write_all(&t.to_le_bytes())?;
            for x in s {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads snapshots written by [`Trajectory::write_binary`]; the flow
    /// spec is not stored and must be supplied.
    pub fn read_binary<R: Read>(mut r: R, spec: FlowSpec) -> Result<Self, DbmError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"DBT1" {
            return Err(DbmError::Format("bad magic".into()));
        }
        let mut b8 = [0u8; 8];
        let mut word = |r: &mut R| -> Result<u64, DbmError> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n = word(&mut r)? as usize;
        let count = word(&mut r)? as usize;
        let noise = NoiseSource {
            master_seed: word(&mut r)?,
            experiment: word(&mut r)?,
            replica: word(&mut r)?,
        };
        if n == 0 || count == 0 || n.checked_mul(count).is_none() {
            return Err(DbmError::Format("empty or oversized trajectory".into()));
        }
        let mut times = Vec::with_capacity(count);
        let mut states = Vec::with_capacity(count);
        for _ in 0..count {
            times.push(f64::from_bits(word(&mut r)?));
            let mut s = Vec::with_capacity(n);
            for _ in 0..n {
                s.push(f64::from_bits(word(&mut r)?));
            }
            states.push(s);
        }
        Ok(Self {
            times,
            states,
            spec,
            noise,
            stats: StepStats::default(),
        })
    }

    /// Plain-text summary: min gap, max |position|, step statistics.
    pub fn write_summary<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "particles {}", self.n())?;
        writeln!(w, "snapshots {}", self.times.len())?;
        writeln!(w, "t_start {}", self.times[0])?;
        writeln!(w, "t_end {}", self.times[self.times.len() - 1])?;
        writeln!(w, "min_gap {:e}", self.stats.min_gap)?;
        writeln!(w, "max_abs {}", self.stats.max_abs)?;
        writeln!(w, "base_steps {}", self.stats.base_steps)?;
        writeln!(w, "substeps {}", self.stats.substeps)?;
        writeln!(w, "retries {}", self.stats.retries)?;
        writeln!(w, "unresolved {}", self.stats.unresolved)?;
        writeln!(w, "finest_level {}", self.stats.finest_level)
    }
}

/// Relabeled index of 0-based position `k`: the center ⌈N/2⌉ maps to 0.
#[inline]
pub fn relabel(k: usize, n: usize) -> i64 {
    k as i64 + 1 - n.div_ceil(2) as i64
}

/// 0-based position of the center particle ⌈N/2⌉.
#[inline]
pub fn center_index(n: usize) -> usize {
    n.div_ceil(2) - 1
}
