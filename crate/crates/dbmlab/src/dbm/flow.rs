use super::{relabel, DbmError, FlowSpec, Interaction, Record, StepStats, Trajectory};
use crate::rng::{NoiseSource, ParticleNoise};

/// Deepest refinement level of the Brownian tree (h_base / 2^48).
const MAX_LEVEL: u32 = 48;
/// Quarter-step retries after an ordering violation.
const MAX_RETRIES: u32 = 8;

struct Integrator<'a> {
    spec: &'a FlowSpec,
    n: usize,
    amp: f64,
    noise: Vec<ParticleNoise>,
    x: Vec<f64>,
    trial: Vec<f64>,
    target: Vec<f64>,
    drift: Vec<f64>,
    solver: NeighborSolver,
    t: f64,
    stats: StepStats,
    keep_substeps: bool,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

fn min_gap(x: &[f64]) -> f64 {
    x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn strictly_increasing(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[1] > w[0])
}

/// Implicit nearest-neighbour step: x = argmin |x − y|²/(2h) − c·Σ log(x_{i+1} − x_i),
/// i.e. x − h·F_nn(x) = y. The objective is strictly convex on the ordered
/// chamber with a tridiagonal Hessian, so damped Newton converges and every
/// iterate stays ordered.
struct NeighborSolver {
    grad: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
    step: Vec<f64>,
    cand: Vec<f64>,
    scratch: Vec<f64>,
}

const NEWTON_MAX_ITER: usize = 60;

impl NeighborSolver {
    fn new(n: usize) -> Self {
        Self {
            grad: vec![0.0; n],
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
            step: vec![0.0; n],
            cand: vec![0.0; n],
            scratch: vec![0.0; n],
        }
    }

    fn objective(x: &[f64], y: &[f64], h: f64, c: f64) -> f64 {
        let quad: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (2.0 * h);
        let log: f64 = x.windows(2).map(|w| (w[1] - w[0]).ln()).sum();
        quad - c * log
    }

    /// Writes the solution into `out`; `start` must be strictly increasing.
    fn solve(&mut self, y: &[f64], start: &[f64], h: f64, c: f64, out: &mut [f64]) -> bool {
        let n = y.len();
        if n == 1 {
            out[0] = y[0];
            return true;
        }
        if strictly_increasing(y) {
            out.copy_from_slice(y);
        } else {
            out.copy_from_slice(start);
        }
        let mut phi = Self::objective(out, y, h, c);
        for _ in 0..NEWTON_MAX_ITER {
            for i in 0..n {
                self.grad[i] = (out[i] - y[i]) / h;
                self.diag[i] = 1.0 / h;
            }
            for i in 0..n - 1 {
                let g = out[i + 1] - out[i];
                let k = c / (g * g);
                self.grad[i] += c / g;
                self.grad[i + 1] -= c / g;
                self.diag[i] += k;
                self.diag[i + 1] += k;
                self.off[i] = -k;
            }
            // Thomas algorithm for H·step = −grad
            let mut denom = self.diag[0];
            self.scratch[0] = 0.0;
            self.step[0] = -self.grad[0] / denom;
            for i in 1..n {
                self.scratch[i] = self.off[i - 1] / denom;
                denom = self.diag[i] - self.off[i - 1] * self.scratch[i];
                self.step[i] = (-self.grad[i] - self.off[i - 1] * self.step[i - 1]) / denom;
            }
            for i in (0..n - 1).rev() {
                let s = self.scratch[i + 1] * self.step[i + 1];
                self.step[i] -= s;
            }
            let slope: f64 = self.grad.iter().zip(&self.step).map(|(g, s)| g * s).sum();
            let size = self.step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
            let scale = out.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            if size <= 4.0 * f64::EPSILON * scale {
                return true;
            }
            let min_gap = out.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            // close to the solution Φ differences drown in rounding; take the
            // full step, Newton converges quadratically there
            let local = size <= 1e-6 * min_gap;
            let mut alpha = 1.0;
            loop {
                for i in 0..n {
                    self.cand[i] = out[i] + alpha * self.step[i];
                }
                if strictly_increasing(&self.cand) {
                    if local {
                        break;
                    }
                    let p = Self::objective(&self.cand, y, h, c);
                    if p <= phi + 1e-4 * alpha * slope {
                        phi = p;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-30 {
                    return false;
                }
            }
            out.copy_from_slice(&self.cand);
            if local {
                phi = Self::objective(out, y, h, c);
            }
            if alpha == 1.0 && size <= 1e-14 * scale {
                return true;
            }
        }
        false
    }
}

impl<'a> Integrator<'a> {
    /// Explicit part of the drift: every interacting pair except nearest
    /// neighbours (those are treated implicitly), plus the external drift.
    fn compute_drift(&mut self, t: f64) {
        let n = self.n;
        let x = &self.x;
        let eps = self.spec.eps_reg;
        let inv_n = 1.0 / n as f64;
        let drift = &mut self.drift;
        drift.iter_mut().for_each(|d| *d = 0.0);
        match &self.spec.interaction {
            Interaction::Full => {
                for i in 0..n {
                    let xi = x[i];
                    let mut acc = 0.0;
                    for j in i + 2..n {
                        // ε_ij = −ε for i < j, +ε for i > j: the pair term is antisymmetric
                        let d = 1.0 / (xi - x[j] - eps);
                        acc += d;
                        drift[j] -= d;
                    }
                    drift[i] += acc;
                }
                drift.iter_mut().for_each(|d| *d *= inv_n);
            }
            Interaction::ShortRange(sr) => {
                let pair = |k: usize, j: usize| -> f64 {
                    let e = if k > j { eps } else { -eps };
                    1.0 / (x[k] - x[j] + e)
                };
                let not_nn = |k: usize, j: usize| j != k && j + 1 != k && k + 1 != j;
                for k in 0..n {
                    let li = relabel(k, n);
                    let far = sr.far_field.is_some() && (li.unsigned_abs() as f64) > sr.n_a;
                    let mut acc = 0.0;
                    if far {
                        for j in (0..n).filter(|&j| not_nn(k, j)) {
                            acc += pair(k, j);
                        }
                    } else {
                        let lo = k.saturating_sub(sr.ell);
                        let hi = (k + sr.ell).min(n - 1);
                        for j in (lo..=hi).filter(|&j| not_nn(k, j)) {
                            acc += pair(k, j);
                        }
                        if !sr.in_core(li) {
                            for j in (0..n).filter(|&j| j < lo || j > hi) {
                                let lj = relabel(j, n);
                                if li * lj > 0 && !sr.in_core(lj) {
                                    acc += pair(k, j);
                                }
                            }
                        }
                    }
                    drift[k] = acc * inv_n;
                    if far {
                        drift[k] += sr.far_field.as_ref().expect("far implies table").at(t);
                    }
                }
            }
        }
        for (d, &xi) in drift.iter_mut().zip(x.iter()) {
            *d += self.spec.drift.value(xi);
        }
    }

    /// Advance over tree node (level, index) of base step `step`, with
    /// Brownian increments `d` over its length `h`.
    fn advance(&mut self, step: u64, level: u32, index: u64, h: f64, d: &[f64], retries: u32) -> Result<(), DbmError> {
        let gap = min_gap(&self.x);
        let safe = self.spec.gap_factor * self.n as f64 * gap * gap;
        if h > safe && self.n > 1 {
            if level < self.spec.gap_depth {
                return self.split(step, level, index, h, d, retries, false);
            }
            self.stats.unresolved += 1;
        }
        self.compute_drift(self.t);
        for i in 0..self.n {
            self.target[i] = self.x[i] + h * self.drift[i] + self.amp * d[i];
        }
        if let Some(p) = self.target.iter().position(|v| !v.is_finite()) {
            return Err(DbmError::NonFinite { t: self.t, particle: p });
        }
        let solved = self.solver.solve(&self.target, &self.x, h, 1.0 / self.n as f64, &mut self.trial);
        if !solved || !strictly_increasing(&self.trial) {
            if retries >= MAX_RETRIES {
                return Err(DbmError::OrderingViolation {
                    t: self.t,
                    h,
                    retries,
                    min_gap: gap,
                });
            }
            self.stats.retries += 1;
            return self.split(step, level, index, h, d, retries + 1, true);
        }
        std::mem::swap(&mut self.x, &mut self.trial);
        self.t += h;
        self.stats.substeps += 1;
        self.stats.finest_level = self.stats.finest_level.max(level);
        self.stats.min_gap = self.stats.min_gap.min(min_gap(&self.x));
        if self.keep_substeps {
            self.times.push(self.t);
            self.states.push(self.x.clone());
        }
        Ok(())
    }

    fn halves(&self, step: u64, level: u32, index: u64, h: f64, d: &[f64]) -> (Vec<f64>, Vec<f64>) {
        if self.amp == 0.0 {
            return (vec![0.0; self.n], vec![0.0; self.n]);
        }
        let mut left = Vec::with_capacity(self.n);
        let mut right = Vec::with_capacity(self.n);
        for (p, &di) in self.noise.iter().zip(d) {
            let (l, r) = p.split(step, level, index, di, h);
            left.push(l);
            right.push(r);
        }
        (left, right)
    }

    #[allow(clippy::too_many_arguments)]
    fn split(
        &mut self,
        step: u64,
        level: u32,
        index: u64,
        h: f64,
        d: &[f64],
        retries: u32,
        quarters: bool,
    ) -> Result<(), DbmError> {
        let depth = if quarters { 2 } else { 1 };
        if level + depth > MAX_LEVEL {
            return Err(DbmError::StepUnderflow { t: self.t, h });
        }
        let (dl, dr) = self.halves(step, level, index, h, d);
        if !quarters {
            self.advance(step, level + 1, 2 * index, 0.5 * h, &dl, retries)?;
            return self.advance(step, level + 1, 2 * index + 1, 0.5 * h, &dr, retries);
        }
        for (half, dh) in [(2 * index, dl), (2 * index + 1, dr)] {
            let (ql, qr) = self.halves(step, level + 1, half, 0.5 * h, &dh);
            self.advance(step, level + 2, 2 * half, 0.25 * h, &ql, retries)?;
            self.advance(step, level + 2, 2 * half + 1, 0.25 * h, &qr, retries)?;
        }
        Ok(())
    }
}

/// Integrate the flow `spec` from `initial` over `t_span` with base step at
/// most `dt`, driven by the particle streams of `noise`.
pub fn simulate_flow(
    initial: &[f64],
    spec: &FlowSpec,
    t_span: (f64, f64),
    dt: f64,
    noise: &NoiseSource,
    record: &Record,
) -> Result<Trajectory, DbmError> {
    let n = initial.len();
    if n == 0 {
        return Err(DbmError::NotOrdered { index: 0 });
    }
    if let Some(i) = initial.iter().position(|v| !v.is_finite()) {
        return Err(DbmError::NotOrdered { index: i });
    }
    if let Some(i) = initial.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(DbmError::NotOrdered { index: i + 1 });
    }
    spec.validate(n)?;
    let (t0, t1) = t_span;
    if !(t1 >= t0 && t0.is_finite() && t1.is_finite() && dt > 0.0) {
        return Err(DbmError::BadSpan(t0, t1, dt));
    }
    let steps = ((t1 - t0) / dt).ceil() as u64;
    let h = if steps == 0 { 0.0 } else { (t1 - t0) / steps as f64 };
    let amp = spec.noise_scale * (2.0 / (spec.beta * n as f64)).sqrt();
    let mut it = Integrator {
        spec,
        n,
        amp,
        noise: (0..n).map(|k| noise.particle(k)).collect(),
        x: initial.to_vec(),
        trial: vec![0.0; n],
        target: vec![0.0; n],
        drift: vec![0.0; n],
        solver: NeighborSolver::new(n),
        t: t0,
        stats: StepStats {
            min_gap: min_gap(initial),
            ..StepStats::default()
        },
        keep_substeps: matches!(record, Record::AllSubsteps),
        times: vec![t0],
        states: vec![initial.to_vec()],
    };
    let targets: Vec<u64> = match record {
        Record::Times(ts) => ts
            .iter()
            .filter(|&&s| s > t0 && s <= t1)
            .map(|&s| ((s - t0) / h).round() as u64)
            .collect(),
        _ => Vec::new(),
    };
    for step in 0..steps {
        let d: Vec<f64> = if amp == 0.0 {
            vec![0.0; n]
        } else {
            it.noise.iter().map(|p| p.base_increment(step, h)).collect()
        };
        it.advance(step, 0, 0, h, &d, 0)?;
        // pin the clock to the base grid so rounding does not drift
        it.t = t0 + h * (step + 1) as f64;
        if let Some(last) = it.times.last_mut() {
            if it.keep_substeps {
                *last = it.t;
            }
        }
        it.stats.base_steps += 1;
        let done = step + 1;
        let keep = match record {
            Record::Final | Record::AllSubsteps => false,
            Record::EveryBaseStep(k) => done % (*k).max(1) as u64 == 0 && done < steps,
            Record::Times(_) => targets.contains(&done) && done < steps,
        };
        if keep {
            it.times.push(it.t);
            it.states.push(it.x.clone());
        }
    }
    if !it.keep_substeps && steps > 0 {
        it.times.push(t1);
        it.states.push(it.x.clone());
    }
    it.stats.max_abs = it.x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(Trajectory {
        times: it.times,
        states: it.states,
        spec: spec.clone(),
        noise: *noise,
        stats: it.stats,
    })
}

/// Two flows driven by the same per-particle Brownian motions.
#[allow(clippy::too_many_arguments)]
pub fn make_coupled_pair(
    x0: &[f64],
    y0: &[f64],
    spec_x: &FlowSpec,
    spec_y: &FlowSpec,
    t_span: (f64, f64),
    dt: f64,
    noise: &NoiseSource,
    record: &Record,
) -> Result<(Trajectory, Trajectory), DbmError> {
    if x0.len() != y0.len() {
        return Err(DbmError::LengthMismatch(x0.len(), y0.len()));
    }
    let x = simulate_flow(x0, spec_x, t_span, dt, noise, record)?;
    let y = simulate_flow(y0, spec_y, t_span, dt, noise, record)?;
    Ok((x, y))
}

/// z(0, α) = α·x + (1 − α)·y.
pub fn interpolate_initial(x: &[f64], y: &[f64], alpha: f64) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect()
}
