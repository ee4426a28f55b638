use super::{FcError, Potential};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Tuning of the fixed-point solver and the boundary-value extraction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Residual tolerance |m − F(m)| (scaled by max(1, |m|)).
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the new iterate in the damped fixed-point step.
    pub damping: f64,
    /// Continuation starts at Im z = max(eta_start, 2√t).
    pub eta_start: f64,
    pub eta_ratio: f64,
    /// Distance to the real axis used for boundary values.
    pub eta_small: f64,
    /// Densities below this count as "outside the bulk".
    pub density_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 10_000,
            damping: 0.5,
            eta_start: 1.0,
            eta_ratio: 0.8,
            eta_small: 1e-8,
            density_floor: 1e-3,
        }
    }
}

/// Free convolution of a fixed potential at a fixed time.
#[derive(Clone, Debug)]
pub struct FcModel {
    pot: Arc<Potential>,
    t: f64,
    opts: SolverOptions,
}

/// g_i, R₂ and ∂_z m at one spectral parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivedQuantities {
    pub z: Complex64,
    pub m: Complex64,
    pub g_weights: Vec<Complex64>,
    pub r2: Complex64,
    pub dz_m: Complex64,
    /// |1 − t·R₂|
    pub stability: f64,
    /// 1 + t·∂_z m, equal to 1/(1 − t·R₂)
    pub one_plus_t_dzm: Complex64,
}

impl FcModel {
    pub fn new(pot: impl Into<Arc<Potential>>, t: f64) -> Result<Self, FcError> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(FcError::BadTime(t));
        }
        Ok(Self {
            pot: pot.into(),
            t,
            opts: SolverOptions::default(),
        })
    }

    pub fn with_options(mut self, opts: SolverOptions) -> Self {
        self.opts = opts;
        self
    }

    /// Same potential and options at another time.
    pub fn at_time(&self, t: f64) -> Result<Self, FcError> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(FcError::BadTime(t));
        }
        Ok(Self {
            pot: Arc::clone(&self.pot),
            t,
            opts: self.opts,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn potential(&self) -> &Potential {
        &self.pot
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// Interval guaranteed to contain the support.
    pub fn support_hull(&self) -> (f64, f64) {
        let v = self.pot.values();
        let r = 2.0 * self.t.sqrt();
        (v[0] - r, v[v.len() - 1] + r)
    }

    /// F(m) = (1/N)Σ 1/(V_i − z − t·m) together with R₂ = (1/N)Σ g_i².
    #[inline]
    fn eval(&self, z: Complex64, m: Complex64) -> (Complex64, Complex64) {
        let w = z + self.t * m;
        let mut f = Complex64::new(0.0, 0.0);
        let mut r2 = Complex64::new(0.0, 0.0);
        for &v in self.pot.values() {
            let g = (v - w).inv();
            f += g;
            r2 += g * g;
        }
        let n = self.pot.n() as f64;
        (f / n, r2 / n)
    }

    pub fn residual(&self, z: Complex64, m: Complex64) -> f64 {
        (m - self.eval(z, m).0).norm()
    }

    /// Newton steps guarded by damped fixed-point steps.
    fn refine(&self, z: Complex64, mut m: Complex64, tol: f64, max_iter: usize) -> Result<Complex64, f64> {
        let (mut f, mut r2) = self.eval(z, m);
        let mut res = (m - f).norm();
        for _ in 0..max_iter {
            if res <= tol * m.norm().max(1.0) {
                return Ok(m);
            }
            let newton = m - (m - f) / (1.0 - self.t * r2);
            if newton.im > 0.0 && newton.re.is_finite() && newton.im.is_finite() {
                let (fc, r2c) = self.eval(z, newton);
                let resc = (newton - fc).norm();
                if resc < res {
                    m = newton;
                    f = fc;
                    r2 = r2c;
                    res = resc;
                    continue;
                }
            }
            m = m + self.opts.damping * (f - m);
            let next = self.eval(z, m);
            f = next.0;
            r2 = next.1;
            res = (m - f).norm();
        }
        Err(res)
    }

    /// m_fc,t(z) by η-continuation from the upper half plane.
    pub fn stieltjes(&self, z: Complex64) -> Result<Complex64, FcError> {
        if !(z.im > 0.0) || !z.re.is_finite() {
            return Err(FcError::NotUpperHalfPlane { re: z.re, im: z.im });
        }
        if self.t == 0.0 {
            return Ok(self.eval(z, Complex64::new(0.0, 0.0)).0);
        }
        let target = z.im;
        let mut eta = self.opts.eta_start.max(2.0 * self.t.sqrt()).max(target);
        let mut m = self.eval(Complex64::new(z.re, eta), Complex64::new(0.0, 0.0)).0;
        loop {
            let last = eta <= target;
            let tol = if last { self.opts.tol } else { 1e-9 };
            let zz = Complex64::new(z.re, eta);
            m = self.refine(zz, m, tol, self.opts.max_iter).map_err(|residual| FcError::NotConverged {
                re: z.re,
                im: eta,
                residual,
            })?;
            if last {
                return Ok(m);
            }
            eta = (eta * self.opts.eta_ratio).max(target);
        }
    }

    /// Solve from a nearby root, falling back to full continuation.
    pub fn stieltjes_from(&self, z: Complex64, guess: Complex64) -> Result<Complex64, FcError> {
        if !(z.im > 0.0) {
            return Err(FcError::NotUpperHalfPlane { re: z.re, im: z.im });
        }
        if self.t == 0.0 {
            return Ok(self.eval(z, Complex64::new(0.0, 0.0)).0);
        }
        if guess.im > 0.0 {
            if let Ok(m) = self.refine(z, guess, self.opts.tol, 60) {
                return Ok(m);
            }
        }
        self.stieltjes(z)
    }

    /// m(E + i0) by Richardson extrapolation from η_small and 2η_small.
    /// Returns the extrapolated value and the raw value at η_small.
    pub fn boundary_from(&self, e: f64, guess: Option<Complex64>) -> Result<(Complex64, Complex64), FcError> {
        let eta = self.opts.eta_small;
        let z1 = Complex64::new(e, eta);
        let m1 = match guess {
            Some(g) => self.stieltjes_from(z1, g)?,
            None => self.stieltjes(z1)?,
        };
        if self.t == 0.0 {
            return Ok((m1, m1));
        }
        let m2 = self.stieltjes_from(Complex64::new(e, 2.0 * eta), m1)?;
        let mut m0 = 2.0 * m1 - m2;
        if m0.im < 0.0 {
            m0.im = 0.0;
        }
        Ok((m0, m1))
    }

    pub fn boundary(&self, e: f64) -> Result<Complex64, FcError> {
        Ok(self.boundary_from(e, None)?.0)
    }

    /// ρ_fc,t(E) = Im m(E + i0)/π.
    pub fn density(&self, e: f64) -> Result<f64, FcError> {
        Ok(self.boundary(e)?.im / PI)
    }

    /// CDF from a boundary value m₀ = m(E + i0).
    ///
    /// With ω = E + t·m₀, the log-potential identity gives
    /// F(E) = 1 − (1/π)[(1/N)Σ arg(ω − V_i) + (t/2)·Im m₀²].
    pub fn cdf_from_boundary(&self, e: f64, m0: Complex64) -> f64 {
        let w = Complex64::new(e, 0.0) + self.t * m0;
        let wim = w.im.max(0.0);
        let mut s = 0.0;
        for &v in self.pot.values() {
            s += wim.atan2(w.re - v);
        }
        let f = 1.0 - (s / self.pot.n() as f64 + 0.5 * self.t * (m0 * m0).im) / PI;
        f.clamp(0.0, 1.0)
    }

    pub fn cdf(&self, e: f64) -> Result<f64, FcError> {
        let m0 = self.boundary(e)?;
        Ok(self.cdf_from_boundary(e, m0))
    }

    /// Solve F(x) = level in (lo, hi) by Newton steps inside a bisection
    /// bracket. Position tolerance 1e−12.
    pub(crate) fn solve_level(
        &self,
        level: f64,
        mut lo: f64,
        mut hi: f64,
        start: f64,
        guess: Option<Complex64>,
    ) -> Result<(f64, Option<Complex64>), FcError> {
        let mut x = if start > lo && start < hi { start } else { 0.5 * (lo + hi) };
        let mut mg = guess;
        for _ in 0..400 {
            let (m0, m1) = self.boundary_from(x, mg)?;
            mg = Some(m1);
            let f = self.cdf_from_boundary(x, m0);
            if f < level {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= 1e-12 {
                return Ok((0.5 * (lo + hi), mg));
            }
            let rho = m0.im / PI;
            let mut next = 0.5 * (lo + hi);
            if rho > 1e-10 {
                let newton = x - (f - level) / rho;
                if newton > lo && newton < hi {
                    if (newton - x).abs() < 1e-13 {
                        return Ok((newton, mg));
                    }
                    next = newton;
                }
            }
            x = next;
        }
        Ok((x, mg))
    }

    /// Energy with F = level.
    pub fn quantile(&self, level: f64) -> Result<f64, FcError> {
        let (lo, hi) = self.support_hull();
        Ok(self.solve_level(level, lo - 1e-9, hi + 1e-9, 0.5 * (lo + hi), None)?.0)
    }

    /// Classical locations γ_i, i = 1..n, at levels (i − 1/2)/n.
    pub fn quantiles(&self, n: usize) -> Result<Vec<f64>, FcError> {
        let levels: Vec<f64> = (1..=n).map(|i| (i as f64 - 0.5) / n as f64).collect();
        self.quantiles_at(&levels)
    }

    /// Quantiles at increasing levels, warm-started left to right.
    pub fn quantiles_at(&self, levels: &[f64]) -> Result<Vec<f64>, FcError> {
        let (lo0, hi) = self.support_hull();
        let (mut lo, hi) = (lo0 - 1e-9, hi + 1e-9);
        let mut out = Vec::with_capacity(levels.len());
        let mut guess = None;
        let mut start = 0.5 * (lo + hi);
        let mut prev_level = 0.0;
        for &level in levels {
            let (x, g) = self.solve_level(level, lo, hi, start, guess)?;
            out.push(x);
            guess = g;
            // next start: one local spacing to the right
            let rho = guess.map(|m| m.im / PI).unwrap_or(0.0);
            let gap = level - prev_level;
            prev_level = level;
            start = if rho > 1e-6 { x + gap / rho } else { 0.5 * (x + hi) };
            lo = x - 1e-12;
        }
        Ok(out)
    }

    /// g_i, R₂ and ∂_z m at z.
    pub fn derived(&self, z: Complex64) -> Result<DerivedQuantities, FcError> {
        let m = self.stieltjes(z)?;
        self.derived_at(z, m)
    }

    pub fn derived_at(&self, z: Complex64, m: Complex64) -> Result<DerivedQuantities, FcError> {
        let w = z + self.t * m;
        let g_weights: Vec<Complex64> = self.pot.values().iter().map(|&v| (v - w).inv()).collect();
        let n = self.pot.n() as f64;
        let r2 = g_weights.iter().map(|g| g * g).sum::<Complex64>() / n;
        let denom = 1.0 - self.t * r2;
        let stability = denom.norm();
        if stability < 1e-8 {
            return Err(FcError::Unstable {
                re: z.re,
                im: z.im,
                stability,
            });
        }
        Ok(DerivedQuantities {
            z,
            m,
            g_weights,
            r2,
            dz_m: r2 / denom,
            stability,
            one_plus_t_dzm: denom.inv(),
        })
    }
}

/// m_fc,t(z) for potential `pot`.
pub fn solve_stieltjes(pot: &Potential, t: f64, z: Complex64) -> Result<Complex64, FcError> {
    FcModel::new(pot.clone(), t)?.stieltjes(z)
}

/// g_i, R₂ and ∂_z m for potential `pot` at time `t`.
pub fn derived_quantities(pot: &Potential, t: f64, z: Complex64) -> Result<DerivedQuantities, FcError> {
    FcModel::new(pot.clone(), t)?.derived(z)
}
