//! Discrete parabolic propagator along DBM trajectories and the
//! homogenization comparison with the nonlocal heat kernel.
//!
//! Along a trajectory ẑ(t) the generator acts by
//! `(ℒu)_i = Σ_j B_ij (u_j − u_i)` with `B_ij = (1/N)(ẑ_i − ẑ_j)⁻²` on the
//! interaction set, and a propagator column solves `∂_t w = ℒw`,
//! `w(0) = N·δ_a`.

use crate::dbm::{center_index, make_coupled_pair, matrix_marginal, relabel, sample_gbe_eigs};
use crate::dbm::{DbmError, FlowSpec, Interaction, Record, Trajectory};
use crate::free_convolution::{advect_energy_with, FcError, FcModel, Potential, RHO_SC_0};
use crate::nonlocal_heat::{build_kernel_table, GridSpec, HeatError, HeatKernelTable};
use crate::rng::{mix64, NoiseSource};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HomogError {
    #[error("source index {a} outside 0..{n}")]
    SourceOutOfRange { a: usize, n: usize },
    #[error("stability forces dt = {dt:e} below the floor 1e-12 at t = {t}; trajectory too singular")]
    StepFloor { t: f64, dt: f64 },
    #[error("time span ({0}, {1}) is not covered by the trajectory")]
    BadSpan(f64, f64),
    #[error("trajectories differ in length or snapshot count")]
    Mismatch,
    #[error("invalid homogenization parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Dbm(#[from] DbmError),
    #[error(transparent)]
    Fc(#[from] FcError),
    #[error(transparent)]
    Heat(#[from] HeatError),
}

/// Coefficients B_ij(t) = (1/N)(ẑ_i − ẑ_j)⁻² restricted to an interaction set.
#[derive(Clone, Debug, PartialEq)]
pub struct BandGenerator {
    pub interaction: Interaction,
}

impl BandGenerator {
    pub fn new(interaction: Interaction) -> Self {
        Self { interaction }
    }

    /// Every pair interacts.
    pub fn full() -> Self {
        Self::new(Interaction::Full)
    }

    fn for_each_neighbor(&self, z: &[f64], i: usize, mut f: impl FnMut(usize, f64)) {
        let n = z.len();
        let inv_n = 1.0 / n as f64;
        let coef = |j: usize| {
            let d = z[i] - z[j];
            inv_n / (d * d)
        };
        match &self.interaction {
            Interaction::Full => {
                for j in (0..n).filter(|&j| j != i) {
                    f(j, coef(j));
                }
            }
            Interaction::ShortRange(sr) => {
                let li = relabel(i, n);
                let lo = i.saturating_sub(sr.ell);
                let hi = (i + sr.ell).min(n - 1);
                for j in (lo..=hi).filter(|&j| j != i) {
                    f(j, coef(j));
                }
                if !sr.in_core(li) {
                    for j in (0..n).filter(|&j| j < lo || j > hi) {
                        let lj = relabel(j, n);
                        if li * lj > 0 && !sr.in_core(lj) {
                            f(j, coef(j));
                        }
                    }
                }
            }
        }
    }

    /// out_i = Σ_j B_ij (u_j − u_i).
    pub fn apply(&self, z: &[f64], u: &[f64], out: &mut [f64]) {
        for i in 0..z.len() {
            let ui = u[i];
            let mut acc = 0.0;
            self.for_each_neighbor(z, i, |j, b| acc += b * (u[j] - ui));
            out[i] = acc;
        }
    }

    /// max_i Σ_j B_ij.
    pub fn max_row_sum(&self, z: &[f64]) -> f64 {
        (0..z.len())
            .map(|i| {
                let mut s = 0.0;
                self.for_each_neighbor(z, i, |_, b| s += b);
                s
            })
            .fold(0.0, f64::max)
    }

    /// Dense coefficient matrix (row-major, zero diagonal).
    pub fn matrix(&self, z: &[f64]) -> Vec<f64> {
        let n = z.len();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            self.for_each_neighbor(z, i, |j, b| m[i * n + j] = b);
        }
        m
    }
}

/// w(t) = N·𝒰(s, t)·δ_a sampled on the trajectory's time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagatorColumn {
    pub source: usize,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// Explicit Euler steps taken.
    pub steps: u64,
}

impl PropagatorColumn {
    pub fn n(&self) -> usize {
        self.values[0].len()
    }

    /// (1/N) Σ_i w_i at snapshot k.
    pub fn mass(&self, k: usize) -> f64 {
        self.values[k].iter().sum::<f64>() / self.n() as f64
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Snapshot index with the time closest to `t`.
    pub fn index_near(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, &s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }

    pub fn final_values(&self) -> &[f64] {
        self.values.last().expect("columns are never empty")
    }
}

const DT_FLOOR: f64 = 1e-12;

/// Propagate an arbitrary initial vector `w0` over `t_span` along `traj`.
/// The generator is frozen at the left end of each trajectory interval and
/// integrated by explicit Euler with dt ≤ min(dt_max, 1/(2 max row sum)).
pub fn propagate(
    traj: &Trajectory,
    gen: &BandGenerator,
    w0: Vec<f64>,
    t_span: (f64, f64),
    dt_max: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, u64), HomogError> {
    let (s, t) = t_span;
    let ts = &traj.times;
    let tol = 1e-12 * (1.0 + t.abs());
    if !(t >= s) || s < ts[0] - tol || t > ts[ts.len() - 1] + tol {
        return Err(HomogError::BadSpan(s, t));
    }
    let n = traj.n();
    if w0.len() != n {
        return Err(HomogError::Mismatch);
    }
    let mut w = w0;
    let mut dw = vec![0.0; n];
    let mut times = vec![s];
    let mut values = vec![w.clone()];
    let mut steps = 0u64;
    for k in 0..ts.len().saturating_sub(1) {
        let (a, b) = (ts[k].max(s), ts[k + 1].min(t));
        if b <= a {
            continue;
        }
        let z = &traj.states[k];
        let row = gen.max_row_sum(z);
        let dt_stab = if row > 0.0 { 0.5 / row } else { f64::INFINITY };
        let dt = dt_stab.min(dt_max);
        let m = ((b - a) / dt).ceil().max(1.0);
        let h = (b - a) / m;
        if h < DT_FLOOR {
            return Err(HomogError::StepFloor { t: a, dt: h });
        }
        for _ in 0..m as u64 {
            gen.apply(z, &w, &mut dw);
            for (wi, di) in w.iter_mut().zip(&dw) {
                *wi += h * di;
            }
            steps += 1;
        }
        times.push(b);
        values.push(w.clone());
    }
    Ok((times, values, steps))
}

/// Propagator column from source `a` along `traj`.
pub fn kernel_column(
    traj: &Trajectory,
    gen: &BandGenerator,
    a: usize,
    t_span: (f64, f64),
    dt_max: f64,
) -> Result<PropagatorColumn, HomogError> {
    let n = traj.n();
    if a >= n {
        return Err(HomogError::SourceOutOfRange { a, n });
    }
    let mut w0 = vec![0.0; n];
    w0[a] = n as f64;
    let (times, values, steps) = propagate(traj, gen, w0, t_span, dt_max)?;
    Ok(PropagatorColumn {
        source: a,
        times,
        values,
        steps,
    })
}

/// A trajectory that sits at `state` over the given times.
pub fn frozen_trajectory(state: Vec<f64>, times: Vec<f64>) -> Trajectory {
    let states = vec![state; times.len()];
    Trajectory {
        times,
        states,
        spec: FlowSpec::default(),
        noise: NoiseSource::new(0),
        stats: Default::default(),
    }
}

/// Finite-speed, profile and ℓ∞ diagnostics of one column snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelDiagnostics {
    /// Elapsed time t − s.
    pub elapsed: f64,
    /// max |𝒰_ja| over |j − a| > ℓ·N^0.2.
    pub tail_max: f64,
    /// Number of indices in that tail set.
    pub tail_sites: usize,
    /// Smallest C with 𝒰_ja ≤ (C/N)·τ/(((j−a)/N)² + τ²), τ = t ∨ 1/N, over |j − a| ≤ window.
    pub profile_constant: f64,
    /// max_j 𝒰_ja · N(t − s).
    pub energy_constant: f64,
    pub mass: f64,
    pub min_value: f64,
}

/// Diagnostics of snapshot `k` of a column.
pub fn kernel_diagnostics(col: &PropagatorColumn, k: usize, ell: f64, window: usize) -> KernelDiagnostics {
    let n = col.n();
    let nf = n as f64;
    let a = col.source;
    let elapsed = col.times[k] - col.times[0];
    let tau = elapsed.max(1.0 / nf);
    let reach = ell * nf.powf(0.2);
    let w = &col.values[k];
    let mut tail_max = 0.0f64;
    let mut tail_sites = 0;
    let mut profile = 0.0f64;
    let mut peak = 0.0f64;
    for (j, &wj) in w.iter().enumerate() {
        let u = wj / nf;
        let d = j.abs_diff(a);
        if d as f64 > reach {
            tail_sites += 1;
            tail_max = tail_max.max(u.abs());
        }
        if d <= window {
            let x = d as f64 / nf;
            let shape = tau / (x * x + tau * tau) / nf;
            profile = profile.max(u / shape);
        }
        peak = peak.max(u);
    }
    KernelDiagnostics {
        elapsed,
        tail_max,
        tail_sites,
        profile_constant: profile,
        energy_constant: peak * nf * elapsed,
        mass: col.mass(k),
        min_value: w.iter().copied().fold(f64::INFINITY, f64::min),
    }
}

/// Index windows of the homogenization comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualWindow {
    /// 0-based index of i₀ in the x-flow.
    pub i0: usize,
    /// 0-based index of N/2 := ⌈N/2⌉ in the y-flow.
    pub center_y: usize,
    /// Residuals are taken for |i| ≤ i_max.
    pub i_max: usize,
    /// Sum over |j| ≤ j_max.
    pub j_max: usize,
    pub t1: f64,
    /// γ_{i₀}(t₀) and γ_{i₀}(t₀ + t₁) in the x coordinates.
    pub gamma_start: f64,
    pub gamma_end: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogResiduals {
    pub indices: Vec<i64>,
    pub residuals: Vec<f64>,
    pub max_abs: f64,
    pub median_abs: f64,
    /// N · max |r_i|.
    pub scaled_max: f64,
    /// (1/N) Σ_j ζ((i−j)/N, t₁) at i = 0 before normalization.
    pub raw_weight_sum: f64,
    /// True when the windows were clipped to the available indices.
    pub truncated: bool,
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Residuals of the homogenization identity
///
/// ```text
/// r_i = (x_{i₀+i}(t₀+t₁) − γ_{i₀}(t₀+t₁)) − y_{N/2+i}(t₀+t₁)
///       − Σ_{|j| ≤ j_max} w_ij [(x_{i₀+j}(t₀) − γ_{i₀}(t₀)) − y_{N/2+j}(t₀)]
/// ```
///
/// with w_ij ∝ ζ((i−j)/N, t₁) normalized to unit sum over the window. The
/// first and last snapshots of `x` and `y` are taken as t₀ and t₀ + t₁.
pub fn verify_homogenization(
    x: &Trajectory,
    y: &Trajectory,
    zeta: &HeatKernelTable,
    win: &ResidualWindow,
) -> Result<HomogResiduals, HomogError> {
    let n = x.n();
    if y.n() != n {
        return Err(HomogError::Mismatch);
    }
    let (x0, x1) = (&x.states[0], x.final_state());
    let (y0, y1) = (&y.states[0], y.final_state());
    let nf = n as f64;
    let lo = win.i0.min(win.center_y);
    let hi = (n - 1 - win.i0).min(n - 1 - win.center_y);
    let reach = lo.min(hi);
    let mut truncated = false;
    let j_max = if win.j_max > reach {
        truncated = true;
        reach
    } else {
        win.j_max
    };
    let i_max = win.i_max.min(j_max);
    truncated |= i_max < win.i_max;
    let tk = zeta.time_index(win.t1)?;
    let diff0 = |j: i64| {
        let xj = x0[(win.i0 as i64 + j) as usize] - win.gamma_start;
        xj - y0[(win.center_y as i64 + j) as usize]
    };
    let mut indices = Vec::new();
    let mut residuals = Vec::new();
    let mut raw_weight_sum = 0.0;
    for i in -(i_max as i64)..=i_max as i64 {
        let mut weights = Vec::with_capacity(2 * j_max + 1);
        for j in -(j_max as i64)..=j_max as i64 {
            weights.push(zeta.interpolate(tk, (i - j) as f64 / nf)?);
        }
        let total: f64 = weights.iter().sum();
        if i == 0 {
            raw_weight_sum = total / nf;
        }
        let rhs: f64 = weights
            .iter()
            .zip(-(j_max as i64)..=j_max as i64)
            .map(|(w, j)| w / total * diff0(j))
            .sum();
        let lhs = (x1[(win.i0 as i64 + i) as usize] - win.gamma_end) - y1[(win.center_y as i64 + i) as usize];
        indices.push(i);
        residuals.push(lhs - rhs);
    }
    let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    let max_abs = abs.iter().copied().fold(0.0, f64::max);
    let median_abs = median(&mut abs);
    Ok(HomogResiduals {
        indices,
        residuals,
        max_abs,
        median_abs,
        scaled_max: nf * max_abs,
        raw_weight_sum,
        truncated,
    })
}

/// Exponents and step size of a homogenization run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogParams {
    pub omega0: f64,
    pub omega1: f64,
    /// Defaults to ω₁/120.
    pub eps_b: Option<f64>,
    /// SDE base step; defaults to 1e−3/N.
    pub dt: Option<f64>,
    /// Truncation range of ζ in index units.
    pub zeta_eta: f64,
}

impl HomogParams {
    pub fn new(omega0: f64, omega1: f64) -> Self {
        Self {
            omega0,
            omega1,
            eps_b: None,
            dt: None,
            zeta_eta: 1.0,
        }
    }

    /// Each violated hypothesis, stated.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.omega0 > 0.0 && self.omega0 < 1.0) {
            v.push(format!("omega0 = {} must lie in (0, 1) so that t0 = N^omega0/N is mesoscopic", self.omega0));
        }
        if !(self.omega1 > 0.0 && self.omega1 < self.omega0 / 2.0) {
            v.push(format!(
                "omega1 = {} must satisfy 0 < omega1 < omega0/2 = {} (t1 = N^omega1/N)",
                self.omega1,
                self.omega0 / 2.0
            ));
        }
        let eb = self.eps_b();
        let cap = ((self.omega0 / 2.0 - self.omega1) / 3.0).min(self.omega1 / 60.0);
        if !(eb > 0.0 && eb < cap) {
            v.push(format!(
                "eps_b = {eb} must satisfy 0 < eps_b < min((omega0/2 - omega1)/3, omega1/60) = {cap}"
            ));
        }
        if !(self.zeta_eta > 0.0) {
            v.push("zeta_eta must be positive".into());
        }
        v
    }

    pub fn eps_b(&self) -> f64 {
        self.eps_b.unwrap_or(self.omega1 / 120.0)
    }
}

/// Everything a homogenization replica needs that does not depend on the noise.
#[derive(Clone, Debug)]
pub struct HomogPlan {
    pub n: usize,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    /// Affine map V ↦ a(V − b).
    pub a: f64,
    pub b: f64,
    pub rescaled: Potential,
    /// Effective free-convolution time of x at t₀, a²t₀.
    pub t_eff: f64,
    pub window: ResidualWindow,
    pub zeta: HeatKernelTable,
}

/// Center the problem at i₀ = ⌈N/2⌉: compute the affine rescaling that makes
/// γ_{i₀}(t₀) = 0 and ρ_fc,t₀(0) = ρ_sc(0), the advected γ_{i₀}(t₀ + t₁) and
/// the ζ table in index units.
pub fn plan_homogenization(pot: &Potential, params: &HomogParams) -> Result<HomogPlan, HomogError> {
    let bad = params.violations();
    if !bad.is_empty() {
        return Err(HomogError::Params(bad.join("; ")));
    }
    let n = pot.n();
    let nf = n as f64;
    let t0 = nf.powf(params.omega0) / nf;
    let t1 = nf.powf(params.omega1) / nf;
    let i0 = center_index(n);
    let model = FcModel::new(pot.clone(), t0)?;
    let level = (i0 as f64 + 0.5) / nf;
    let b = model.quantile(level)?;
    let a = RHO_SC_0 / model.density(b)?;
    let rescaled = pot.affine(a, b);
    let t_eff = a * a * t0;
    let rmodel = FcModel::new(rescaled.clone(), t_eff)?;
    let gamma_start = rmodel.quantile(level)?;
    let path = advect_energy_with(&rmodel, gamma_start, (t_eff, t_eff + t1), t1 / 50.0)?;
    // index units: generator ρ²∫(u(y) − u(x))/(x − y)² dy with ρ = ρ_sc(0)
    let rate = RHO_SC_0 * RHO_SC_0;
    let grid = GridSpec::for_times(params.zeta_eta, &[t1]);
    let zeta = build_kernel_table(params.zeta_eta, rate, &[t1], grid)?;
    let eb = params.eps_b();
    let i_max = (nf * t1 * nf.powf(eb)).floor() as usize;
    let j_max = nf
        .powf(params.omega1 + (params.omega0 / 2.0 - params.omega1) / 3.0)
        .floor() as usize;
    Ok(HomogPlan {
        n,
        t0,
        t1,
        dt: params.dt.unwrap_or(1e-3 / nf),
        a,
        b,
        rescaled,
        t_eff,
        window: ResidualWindow {
            i0,
            center_y: i0,
            i_max,
            j_max,
            t1,
            gamma_start,
            gamma_end: path.end(),
        },
        zeta,
    })
}

/// One replica: x(t₀) from the matrix marginal of the rescaled data, y(t₀)
/// from the GOE, then the coupled flows over [t₀, t₀ + t₁].
pub fn homogenization_replica(plan: &HomogPlan, noise: &NoiseSource) -> Result<HomogResiduals, HomogError> {
    let nx = noise.experiment(mix64(noise.experiment ^ 0x7830));
    let ny = noise.experiment(mix64(noise.experiment ^ 0x7930));
    let x0 = matrix_marginal(&plan.rescaled, plan.t_eff, &nx)?;
    let y0 = sample_gbe_eigs(plan.n, 1.0, &ny)?;
    let spec = FlowSpec::dbm();
    let (x, y) = make_coupled_pair(
        &x0,
        &y0,
        &spec,
        &spec,
        (plan.t0, plan.t0 + plan.t1),
        plan.dt,
        noise,
        &Record::Final,
    )?;
    verify_homogenization(&x, &y, &plan.zeta, &plan.window)
}
