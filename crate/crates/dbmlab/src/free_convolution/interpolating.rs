use super::{FcError, FcModel};
use std::f64::consts::PI;

/// Quantile curve x ↦ γ_x on integer knots x = −center, …, len − 1 − center,
/// normalised so that x/N = ∫₀^{γ_x} ρ. Between knots the curve is the
/// cubic Hermite interpolant of the knot positions and slopes.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileCurve {
    n_total: usize,
    center: usize,
    positions: Vec<f64>,
    slopes: Vec<f64>,
}

fn check_increasing(p: &[f64]) -> Result<(), FcError> {
    for (i, w) in p.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(FcError::NonMonotone { index: i + 1 });
        }
    }
    Ok(())
}

impl QuantileCurve {
    /// Knot positions only; slopes from finite differences.
    pub fn from_positions(n_total: usize, positions: Vec<f64>, center: usize) -> Result<Self, FcError> {
        check_increasing(&positions)?;
        let p = &positions;
        let len = p.len();
        if len < 2 || center >= len {
            return Err(FcError::WindowTooWide { k0: center, available: len });
        }
        let slopes = (0..len)
            .map(|i| {
                if i >= 2 && i + 2 < len {
                    (p[i - 2] - 8.0 * p[i - 1] + 8.0 * p[i + 1] - p[i + 2]) / 12.0
                } else if i >= 1 && i + 1 < len {
                    0.5 * (p[i + 1] - p[i - 1])
                } else if i == 0 {
                    p[1] - p[0]
                } else {
                    p[len - 1] - p[len - 2]
                }
            })
            .collect();
        Ok(Self {
            n_total,
            center,
            positions,
            slopes,
        })
    }

    /// Knot positions with exact slopes dγ_x/dx = 1/(N ρ(γ_x)).
    pub fn with_slopes(n_total: usize, positions: Vec<f64>, slopes: Vec<f64>, center: usize) -> Result<Self, FcError> {
        check_increasing(&positions)?;
        if slopes.len() != positions.len() || center >= positions.len() {
            return Err(FcError::WindowTooWide {
                k0: center,
                available: positions.len(),
            });
        }
        if let Some(i) = slopes.iter().position(|s| !(*s > 0.0)) {
            return Err(FcError::NonMonotone { index: i });
        }
        Ok(Self {
            n_total,
            center,
            positions,
            slopes,
        })
    }

    /// γ_x for |x| ≤ k_max from a free convolution, with exact slopes.
    pub fn centered(model: &FcModel, n_total: usize, k_max: usize) -> Result<Self, FcError> {
        let base = model.cdf(0.0)?;
        let levels: Vec<f64> = (0..=2 * k_max)
            .map(|k| base + (k as f64 - k_max as f64) / n_total as f64)
            .collect();
        let positions = model.quantiles_at(&levels)?;
        let mut slopes = Vec::with_capacity(positions.len());
        for &p in &positions {
            let rho = model.boundary(p)?.im / PI;
            slopes.push(1.0 / (n_total as f64 * rho));
        }
        Self::with_slopes(n_total, positions, slopes, k_max)
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    /// Largest k with both ±k available.
    pub fn half_range(&self) -> usize {
        self.center.min(self.positions.len() - 1 - self.center)
    }

    pub fn knot(&self, x: i64) -> f64 {
        self.positions[(x + self.center as i64) as usize]
    }

    /// (γ_x, dγ_x/dx) at real x inside the knot range.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let u = x + self.center as f64;
        let last = self.positions.len() - 1;
        let k = (u.floor().max(0.0) as usize).min(last - 1);
        let s = u - k as f64;
        let (p0, p1) = (self.positions[k], self.positions[k + 1]);
        let (m0, m1) = (self.slopes[k], self.slopes[k + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let value = (2.0 * s3 - 3.0 * s2 + 1.0) * p0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * p1
            + (s3 - s2) * m1;
        let slope = (6.0 * s2 - 6.0 * s) * p0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * p1
            + (3.0 * s2 - 2.0 * s) * m1;
        (value, slope)
    }
}

/// h(y, α) on the window 𝒢_α between the interpolated quantile curves.
#[derive(Clone, Debug)]
pub struct InterpolatingDensity {
    pub alpha: f64,
    pub k0: usize,
    pub window: (f64, f64),
    pub y_grid: Vec<f64>,
    pub h_values: Vec<f64>,
    gamma_v: QuantileCurve,
    gamma_sc: QuantileCurve,
}

impl InterpolatingDensity {
    /// f(x, α) and ∂_x f.
    pub fn f(&self, x: f64) -> (f64, f64) {
        let (a, da) = self.gamma_v.eval(x);
        let (b, db) = self.gamma_sc.eval(x);
        (self.alpha * a + (1.0 - self.alpha) * b, self.alpha * da + (1.0 - self.alpha) * db)
    }

    /// g(y, α), the inverse of f on [−k₀, k₀].
    pub fn inverse(&self, y: f64) -> f64 {
        let k = self.k0 as f64;
        let (mut lo, mut hi) = (-k, k);
        let mut x = 0.0f64.clamp(lo, hi);
        for _ in 0..200 {
            let (v, d) = self.f(x);
            if v < y {
                lo = x;
            } else {
                hi = x;
            }
            let newton = x - (v - y) / d;
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - x).abs() < 1e-14 || hi - lo < 1e-14 {
                return next;
            }
            x = next;
        }
        x
    }

    /// h(y, α) = 1/(N ∂_x f(g(y, α), α)).
    pub fn h(&self, y: f64) -> f64 {
        let x = self.inverse(y);
        1.0 / (self.gamma_v.n_total as f64 * self.f(x).1)
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.h_values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &h| (a.min(h), b.max(h)))
    }
}

/// Build h(·, α) from the quantile curves of ρ_fc,t₀ and ρ_sc on the index
/// window [−k₀, k₀].
pub fn build_interpolating_density(
    gamma_v: &QuantileCurve,
    gamma_sc: &QuantileCurve,
    alpha: f64,
    k0: usize,
) -> Result<InterpolatingDensity, FcError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(FcError::BadAlpha(alpha));
    }
    if gamma_v.n_total != gamma_sc.n_total {
        return Err(FcError::SizeMismatch(gamma_v.n_total, gamma_sc.n_total));
    }
    let available = gamma_v.half_range().min(gamma_sc.half_range());
    if k0 == 0 || k0 > available {
        return Err(FcError::WindowTooWide { k0, available });
    }
    let mut dens = InterpolatingDensity {
        alpha,
        k0,
        window: (0.0, 0.0),
        y_grid: Vec::new(),
        h_values: Vec::new(),
        gamma_v: gamma_v.clone(),
        gamma_sc: gamma_sc.clone(),
    };
    let k = k0 as f64;
    // the interpolant must stay monotone between knots
    let samples = 16 * k0;
    for s in 0..=2 * samples {
        let x = -k + k * s as f64 / samples as f64;
        if !(dens.f(x).1 > 0.0) {
            return Err(FcError::NonMonotone { index: s });
        }
    }
    dens.window = (dens.f(-k).0, dens.f(k).0);
    let m = 16 * k0 + 1;
    let (a, b) = dens.window;
    dens.y_grid = (0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64).collect();
    dens.h_values = dens.y_grid.iter().map(|&y| dens.h(y)).collect();
    Ok(dens)
}
