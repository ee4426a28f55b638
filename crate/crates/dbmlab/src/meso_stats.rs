//! Mesoscopic linear statistics and their limiting objects.
//!
//! Conventions: the Hilbert transform is un-normalized,
//! `(Hf)(x) = p.v. ∫ f(y)/(x − y) dy`, so `H[1/(1+y²)](x) = πx/(1+x²)`.
//! The variance functional is
//!
//! ```text
//! V(φ) = (1/2π²) ∬ ((φ(x) − φ(y))/(x − y))² dx dy = (1/π²) ∫ φ·(Hφ′)
//! ```

use crate::free_convolution::{FcError, FcModel};
use crate::quad::{integrate, integrate_pieces, QuadError};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MesoError {
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Fc(#[from] FcError),
    #[error("test function support [{lo}, {hi}] leaves the density window [{a}, {b}]")]
    OutsideWindow { lo: f64, hi: f64, a: f64, b: f64 },
    #[error("Hilbert transform needs a decay descriptor with positive exponent and radius")]
    BadDecay,
    #[error("invalid test function: {0}")]
    BadFunction(String),
    #[error("stability factor |1 - t R2| = {0:e} too small on the support")]
    Unstable(f64),
    #[error("beta must be positive and A < B")]
    BadEnsemble,
    #[error("at least {need} samples required, got {got}")]
    TooFewSamples { need: usize, got: usize },
}

/// Smooth cutoff: 1 on [−1, 1], 0 outside [−2, 2].
pub fn smooth_cutoff(u: f64) -> f64 {
    let s = u.abs() - 1.0;
    if s <= 0.0 {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    let f = |v: f64| if v > 0.0 { (-1.0 / v).exp() } else { 0.0 };
    let (a, b) = (f(1.0 - s), f(s));
    a / (a + b)
}

fn smooth_cutoff_deriv(u: f64) -> f64 {
    let s = u.abs() - 1.0;
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let f = |v: f64| (-1.0 / v).exp();
    let df = |v: f64| (-1.0 / v).exp() / (v * v);
    let (a, b) = (f(1.0 - s), f(s));
    let (da, db) = (-df(1.0 - s), df(s));
    let d = (da * (a + b) - a * (da + db)) / ((a + b) * (a + b));
    d * u.signum()
}

/// Building blocks of test functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// exp(−(x − c)²/(2w²)).
    Gaussian { center: f64, width: f64 },
    /// exp(1 − 1/(1 − u²)) with u = (x − c)/r, zero for |u| ≥ 1.
    Bump { center: f64, radius: f64 },
    /// √e·u·exp(−u²/2), u = (x − c)/w; odd about c with peak 1.
    GaussianDerivative { center: f64, width: f64 },
    /// Gaussian times cos(k·(x − c)/w).
    Modulated { center: f64, width: f64, k: f64 },
    /// (1 + tanh((x − c)/w))/2.
    Ramp { center: f64, width: f64 },
    /// ∫₀ˣ χ(y/R) p_Λ(t₁, y) dy with the smooth cutoff χ: a smoothed
    /// arctangent that is constant beyond 2R.
    LogCutoff { t1: f64, cutoff: f64 },
}

impl Shape {
    fn value(&self, x: f64) -> f64 {
        match *self {
            Shape::Gaussian { center, width } => {
                let u = (x - center) / width;
                (-0.5 * u * u).exp()
            }
            Shape::Bump { center, radius } => {
                let u = (x - center) / radius;
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - u * u)).exp()
                }
            }
            Shape::GaussianDerivative { center, width } => {
                let u = (x - center) / width;
                (0.5f64).exp() * u * (-0.5 * u * u).exp()
            }
            Shape::Modulated { center, width, k } => {
                let u = (x - center) / width;
                (-0.5 * u * u).exp() * (k * u).cos()
            }
            Shape::Ramp { center, width } => 0.5 * (1.0 + ((x - center) / width).tanh()),
            Shape::LogCutoff { t1, cutoff } => {
                let core = |y: f64| y.atan2(t1) / PI;
                let ax = x.abs();
                if ax <= cutoff {
                    return core(x);
                }
                let outer = ax.min(2.0 * cutoff);
                let shell = integrate(
                    |y| smooth_cutoff(y / cutoff) * t1 / (PI * (t1 * t1 + y * y)),
                    cutoff,
                    outer,
                    1e-15,
                    1e-13,
                )
                .unwrap_or(f64::NAN);
                x.signum() * (core(cutoff) + shell)
            }
        }
    }

    fn deriv(&self, x: f64) -> f64 {
        match *self {
            Shape::Gaussian { center, width } => {
                let u = (x - center) / width;
                -u / width * (-0.5 * u * u).exp()
            }
            Shape::Bump { center, radius } => {
                let u = (x - center) / radius;
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    let q = 1.0 - u * u;
                    (1.0 - 1.0 / q).exp() * (-2.0 * u / (q * q)) / radius
                }
            }
            Shape::GaussianDerivative { center, width } => {
                let u = (x - center) / width;
                (0.5f64).exp() * (1.0 - u * u) * (-0.5 * u * u).exp() / width
            }
            Shape::Modulated { center, width, k } => {
                let u = (x - center) / width;
                let g = (-0.5 * u * u).exp();
                (-u * (k * u).cos() - k * (k * u).sin()) * g / width
            }
            Shape::Ramp { center, width } => {
                let s = 1.0 / ((x - center) / width).cosh();
                0.5 * s * s / width
            }
            Shape::LogCutoff { t1, cutoff } => smooth_cutoff(x / cutoff) * t1 / (PI * (t1 * t1 + x * x)),
        }
    }

    fn second(&self, x: f64) -> f64 {
        match *self {
            Shape::Gaussian { center, width } => {
                let u = (x - center) / width;
                (u * u - 1.0) / (width * width) * (-0.5 * u * u).exp()
            }
            Shape::LogCutoff { t1, cutoff } => {
                let p = t1 / (PI * (t1 * t1 + x * x));
                let dp = -2.0 * x * t1 / (PI * (t1 * t1 + x * x).powi(2));
                smooth_cutoff(x / cutoff) * dp + smooth_cutoff_deriv(x / cutoff) / cutoff * p
            }
            _ => {
                let h = 1e-5 * self.scale();
                (self.deriv(x + h) - self.deriv(x - h)) / (2.0 * h)
            }
        }
    }

    fn scale(&self) -> f64 {
        match *self {
            Shape::Gaussian { width, .. }
            | Shape::GaussianDerivative { width, .. }
            | Shape::Modulated { width, .. }
            | Shape::Ramp { width, .. } => width,
            Shape::Bump { radius, .. } => radius,
            Shape::LogCutoff { t1, .. } => t1,
        }
    }

    /// Interval outside which φ′ vanishes to double precision.
    fn deriv_support(&self) -> (f64, f64) {
        match *self {
            Shape::Gaussian { center, width }
            | Shape::GaussianDerivative { center, width }
            | Shape::Modulated { center, width, .. } => (center - 9.0 * width, center + 9.0 * width),
            Shape::Bump { center, radius } => (center - radius, center + radius),
            Shape::Ramp { center, width } => (center - 20.0 * width, center + 20.0 * width),
            Shape::LogCutoff { cutoff, .. } => (-2.0 * cutoff, 2.0 * cutoff),
        }
    }

    fn limits(&self) -> (f64, f64) {
        match *self {
            Shape::Ramp { .. } => (0.0, 1.0),
            Shape::LogCutoff { .. } => {
                let r = self.value(1e10);
                (-r, r)
            }
            _ => (0.0, 0.0),
        }
    }

    /// Points where φ′ is not smooth or changes character.
    fn breaks(&self) -> Vec<f64> {
        match *self {
            Shape::LogCutoff { t1, cutoff } => vec![-2.0 * cutoff, -cutoff, -t1, 0.0, t1, cutoff, 2.0 * cutoff],
            Shape::Bump { center, radius } => vec![center - radius, center, center + radius],
            _ => {
                let (lo, hi) = self.deriv_support();
                let c = 0.5 * (lo + hi);
                let w = self.scale();
                let mut v = vec![lo];
                for k in [-3.0, -1.0, 0.0, 1.0, 3.0] {
                    v.push(c + k * w);
                }
                v.push(hi);
                v
            }
        }
    }
}

/// Sup and L¹ norms of a test function and its derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub sup: f64,
    pub d1_l1: f64,
    pub d2_l1: f64,
}

/// φ = offset + Σ c_k·shape_k, with the mesoscopic scale t′ carried along.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub terms: Vec<(f64, Shape)>,
    pub offset: f64,
}

impl TestFunction {
    pub fn new(terms: Vec<(f64, Shape)>) -> Self {
        Self { terms, offset: 0.0 }
    }

    pub fn single(shape: Shape) -> Self {
        Self::new(vec![(1.0, shape)])
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            offset: c,
        }
    }

    pub fn gaussian(center: f64, width: f64) -> Self {
        Self::single(Shape::Gaussian { center, width })
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.terms.iter_mut().for_each(|t| t.0 *= c);
        self.offset *= c;
        self
    }

    pub fn shifted(mut self, c: f64) -> Self {
        self.offset += c;
        self
    }

    pub fn value(&self, x: f64) -> f64 {
        self.offset + self.terms.iter().map(|(c, s)| c * s.value(x)).sum::<f64>()
    }

    pub fn deriv(&self, x: f64) -> f64 {
        self.terms.iter().map(|(c, s)| c * s.deriv(x)).sum()
    }

    pub fn second(&self, x: f64) -> f64 {
        self.terms.iter().map(|(c, s)| c * s.second(x)).sum()
    }

    /// Smallest scale among the terms, t′.
    pub fn scale(&self) -> f64 {
        self.terms.iter().map(|(_, s)| s.scale()).fold(f64::INFINITY, f64::min)
    }

    /// Interval carrying φ′; `None` for constants.
    pub fn deriv_support(&self) -> Option<(f64, f64)> {
        self.terms.iter().map(|(_, s)| s.deriv_support()).reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
    }

    /// (φ(−∞), φ(+∞)).
    pub fn limits(&self) -> (f64, f64) {
        self.terms.iter().fold((self.offset, self.offset), |acc, (c, s)| {
            let (l, r) = s.limits();
            (acc.0 + c * l, acc.1 + c * r)
        })
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|(c, _)| *c == 0.0)
    }

    fn breaks(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.terms.iter().flat_map(|(_, s)| s.breaks()).collect();
        b.sort_by(f64::total_cmp);
        b.dedup_by(|a, b| (*a - *b).abs() < 1e-15 * (1.0 + a.abs()));
        b
    }

    /// Norms by adaptive quadrature over the derivative support.
    pub fn norms(&self) -> Result<Norms, MesoError> {
        let Some((lo, hi)) = self.deriv_support() else {
            return Ok(Norms {
                sup: self.offset.abs(),
                d1_l1: 0.0,
                d2_l1: 0.0,
            });
        };
        let b = self.breaks();
        let d1 = integrate_pieces(|x| self.deriv(x).abs(), &b, 1e-12, 1e-9)?;
        let d2 = integrate_pieces(|x| self.second(x).abs(), &b, 1e-10, 1e-8)?;
        let (l, r) = self.limits();
        let mut sup = l.abs().max(r.abs());
        let n = 4000;
        for k in 0..=n {
            sup = sup.max(self.value(lo + (hi - lo) * k as f64 / n as f64).abs());
        }
        Ok(Norms {
            sup,
            d1_l1: d1,
            d2_l1: d2,
        })
    }

    /// Norms from a uniform sample of `n` points (Riemann sums).
    pub fn sampled_norms(&self, n: usize) -> Norms {
        let Some((lo, hi)) = self.deriv_support() else {
            return Norms {
                sup: self.offset.abs(),
                d1_l1: 0.0,
                d2_l1: 0.0,
            };
        };
        let h = (hi - lo) / n as f64;
        let mut out = Norms {
            sup: 0.0,
            d1_l1: 0.0,
            d2_l1: 0.0,
        };
        for k in 0..n {
            let x = lo + (k as f64 + 0.5) * h;
            out.sup = out.sup.max(self.value(x).abs());
            out.d1_l1 += self.deriv(x).abs() * h;
            out.d2_l1 += self.second(x).abs() * h;
        }
        out
    }
}

/// Decay of a function handed to [`hilbert_transform`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Decay {
    /// f = 0 for |y − center| > radius.
    Compact { center: f64, radius: f64 },
    /// |f(y)| ≲ |y − center|^{−exponent} for |y − center| > radius.
    Power { exponent: f64, center: f64, radius: f64 },
}

/// Un-normalized Hilbert transform p.v. ∫ f(y)/(x − y) dy by the pairing
/// ∫₀^∞ (f(x − u) − f(x + u))/u du; the tail of a power-law `f` is mapped to
/// (0, 1] by u = R/s.
pub fn hilbert_transform<F: Fn(f64) -> f64>(f: F, x: f64, decay: Decay, tol: f64) -> Result<f64, MesoError> {
    let pair = |u: f64| (f(x - u) - f(x + u)) / u;
    // breakpoints at the distances from x to a lattice over the core, so
    // that narrow features far from x are always sampled
    let core_breaks = |center: f64, radius: f64| -> (Vec<f64>, f64) {
        let r = (x - center).abs() + radius;
        let mut b = vec![0.0, r];
        for k in -16..=16 {
            let d = (x - (center + radius * k as f64 / 16.0)).abs();
            if d > 0.0 && d < r {
                b.push(d);
            }
        }
        b.sort_by(f64::total_cmp);
        b.dedup_by(|p, q| (*p - *q).abs() <= 1e-14 * r);
        (b, r)
    };
    match decay {
        Decay::Compact { center, radius } => {
            if !(radius > 0.0) {
                return Err(MesoError::BadDecay);
            }
            let (b, _) = core_breaks(center, radius);
            Ok(integrate_pieces(pair, &b, tol, 1e-11)?)
        }
        Decay::Power { exponent, center, radius } => {
            if !(exponent > 0.0 && radius > 0.0) {
                return Err(MesoError::BadDecay);
            }
            let (b, r) = core_breaks(center, radius);
            let near = integrate_pieces(pair, &b, 0.5 * tol, 1e-11)?;
            let far = integrate(
                |s: f64| {
                    let u = r / s;
                    (f(x - u) - f(x + u)) / s
                },
                0.0,
                1.0,
                0.5 * tol,
                1e-12,
            )?;
            Ok(near + far)
        }
    }
}

/// Both forms of the variance functional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    /// (1/2π²)∬ over the capped square, plus the exact outer strips when φ
    /// has equal limits at ±∞.
    pub double_form: f64,
    /// (1/π²)∫ (φ − c)·H(φ′) over the cap, c the mean of the two limits.
    pub hilbert_form: f64,
    /// Outer-strip contribution included in `double_form`.
    pub tail: f64,
    pub cap: (f64, f64),
    /// True when the limits differ and only the capped value is meaningful.
    pub capped_only: bool,
}

impl VarianceReport {
    pub fn relative_gap(&self) -> f64 {
        (self.double_form - self.hilbert_form).abs() / self.double_form.abs().max(f64::MIN_POSITIVE)
    }
}

/// Midpoint rule for the capped double integral on an n×n grid.
fn double_midpoint(phi: &TestFunction, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..n).map(|k| lo + (k as f64 + 0.5) * h).collect();
    let v: Vec<f64> = xs.iter().map(|&x| phi.value(x)).collect();
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..n {
        let d = phi.deriv(xs[i]);
        diag += d * d;
        for j in i + 1..n {
            let q = (v[i] - v[j]) / (xs[i] - xs[j]);
            off += q * q;
        }
    }
    (diag + 2.0 * off) * h * h
}

/// V(φ) over the cap [c − L, c + L], L = `cap` (default 5× the half-width of
/// supp φ′ around its midpoint c).
pub fn variance_functional(phi: &TestFunction, cap: Option<f64>) -> Result<VarianceReport, MesoError> {
    let Some((slo, shi)) = phi.deriv_support() else {
        return Ok(VarianceReport {
            double_form: 0.0,
            hilbert_form: 0.0,
            tail: 0.0,
            cap: (0.0, 0.0),
            capped_only: false,
        });
    };
    if phi.is_constant() {
        return Ok(VarianceReport {
            double_form: 0.0,
            hilbert_form: 0.0,
            tail: 0.0,
            cap: (slo, shi),
            capped_only: false,
        });
    }
    let c = 0.5 * (slo + shi);
    let half = cap.unwrap_or(5.0 * 0.5 * (shi - slo));
    if half < 0.5 * (shi - slo) {
        return Err(MesoError::BadFunction(format!(
            "cap half-width {half} does not cover supp phi' = [{slo}, {shi}]"
        )));
    }
    let (lo, hi) = (c - half, c + half);
    let (l_lim, r_lim) = phi.limits();
    let capped_only = (l_lim - r_lim).abs() > 1e-12 * (1.0 + l_lim.abs());
    let base = 0.5 * (l_lim + r_lim);

    // grid fine enough for the smallest feature, then one Richardson step
    let n = (((hi - lo) / phi.scale()) * 24.0).ceil().clamp(800.0, 6000.0) as usize;
    let coarse = double_midpoint(phi, lo, hi, n);
    let fine = double_midpoint(phi, lo, hi, 2 * n);
    let capped = (4.0 * fine - coarse) / 3.0;

    let mut breaks = phi.breaks();
    breaks.retain(|&b| b > lo && b < hi);
    breaks.insert(0, lo);
    breaks.push(hi);
    let tail = if capped_only {
        0.0
    } else {
        2.0 * integrate_pieces(
            |x| {
                let p = phi.value(x) - base;
                p * p * (1.0 / (hi - x) + 1.0 / (x - lo))
            },
            &breaks,
            1e-14,
            1e-11,
        )?
    };
    let double_form = (capped + tail) / (2.0 * PI * PI);

    let decay = Decay::Compact {
        center: c,
        radius: 0.5 * (shi - slo),
    };
    let mut hb = phi.breaks();
    hb.retain(|&b| b > lo && b < hi);
    hb.insert(0, lo);
    hb.push(hi);
    let mut failure = None;
    let hilbert = integrate_pieces(
        |x| {
            let p = phi.value(x) - base;
            if p == 0.0 {
                return 0.0;
            }
            match hilbert_transform(|y| phi.deriv(y), x, decay, 1e-13) {
                Ok(h) => p * h,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        &hb,
        1e-12,
        1e-10,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(VarianceReport {
        double_form,
        hilbert_form: hilbert / (PI * PI),
        tail: tail / (2.0 * PI * PI),
        cap: (lo, hi),
        capped_only,
    })
}

/// N∫φρ_fc,t, precomputed once per (φ, model).
#[derive(Clone, Debug, PartialEq)]
pub struct Centering {
    /// Reference constant c_ref = φ(−∞).
    pub reference: f64,
    /// ∫(φ − c_ref)·ρ_fc,t.
    pub integral: f64,
}

impl Centering {
    pub fn new(model: &FcModel, phi: &TestFunction) -> Result<Self, MesoError> {
        let (reference, r_lim) = phi.limits();
        let Some((slo, shi)) = phi.deriv_support() else {
            return Ok(Self {
                reference,
                integral: 0.0,
            });
        };
        if phi.is_constant() {
            return Ok(Self {
                reference,
                integral: 0.0,
            });
        }
        let (a, b) = model.support_hull();
        let (a, b) = (a - 1e-9, b + 1e-9);
        let lo = slo.max(a);
        let hi = shi.min(b);
        let mut integral = 0.0;
        let mut failure = None;
        let mut density = |x: f64| match model.density(x) {
            Ok(r) => r,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        };
        if hi > lo {
            let mut breaks = phi.breaks();
            breaks.retain(|&x| x > lo && x < hi);
            breaks.insert(0, lo);
            breaks.push(hi);
            integral += integrate_pieces(|x| (phi.value(x) - reference) * density(x), &breaks, 1e-11, 1e-10)?;
        }
        // beyond supp φ′ on the right φ − c_ref is the constant r_lim − c_ref
        let jump = r_lim - reference;
        if jump != 0.0 && b > hi {
            let mass = integrate(&mut density, hi, b, 1e-12, 1e-10)?;
            integral += jump * mass;
        }
        if let Some(e) = failure {
            return Err(e.into());
        }
        Ok(Self { reference, integral })
    }
}

/// Σφ(λ_i) − N∫φρ_fc,t.
pub fn linear_statistic(eigs: &[f64], phi: &TestFunction, centering: &Centering) -> f64 {
    let n = eigs.len() as f64;
    let s: f64 = eigs.iter().map(|&x| phi.value(x) - centering.reference).sum();
    s - n * centering.integral
}

/// Empirical characteristic function of centered samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharFunction {
    pub lambdas: Vec<f64>,
    pub values: Vec<Complex64>,
    /// 1/√M per component.
    pub std_error: f64,
    pub sample_mean: f64,
    pub sample_variance: f64,
}

/// ψ̂(λ) = mean of exp(iλ(s − s̄)).
pub fn char_function_mc(samples: &[f64], lambdas: &[f64]) -> Result<CharFunction, MesoError> {
    if samples.len() < 100 {
        return Err(MesoError::TooFewSamples {
            need: 100,
            got: samples.len(),
        });
    }
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let values = lambdas
        .iter()
        .map(|&l| {
            if l == 0.0 {
                return Complex64::new(1.0, 0.0);
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for s in samples {
                acc += Complex64::from_polar(1.0, l * (s - mean));
            }
            acc / m
        })
        .collect();
    Ok(CharFunction {
        lambdas: lambdas.to_vec(),
        values,
        std_error: 1.0 / m.sqrt(),
        sample_mean: mean,
        sample_variance: var,
    })
}

/// Monte Carlo statistic values, their characteristic function and the
/// Gaussian prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub values: Vec<f64>,
    pub charfn: CharFunction,
    pub predicted_variance: f64,
    pub predicted_mean: f64,
}

impl CltReport {
    pub fn new(values: Vec<f64>, lambdas: &[f64], predicted_variance: f64, predicted_mean: f64) -> Result<Self, MesoError> {
        let charfn = char_function_mc(&values, lambdas)?;
        Ok(Self {
            values,
            charfn,
            predicted_variance,
            predicted_mean,
        })
    }

    /// Largest |ψ̂(λ) − exp(−λ²V/2)| over the grid.
    pub fn max_deviation(&self) -> f64 {
        self.charfn
            .lambdas
            .iter()
            .zip(&self.charfn.values)
            .map(|(&l, v)| (v - Complex64::new((-0.5 * l * l * self.predicted_variance).exp(), 0.0)).norm())
            .fold(0.0, f64::max)
    }

    pub fn write_table<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "lambda,re_psi,im_psi,error,prediction")?;
        for (l, v) in self.charfn.lambdas.iter().zip(&self.charfn.values) {
            writeln!(
                w,
                "{l},{},{},{},{}",
                v.re,
                v.im,
                self.charfn.std_error,
                (-0.5 * l * l * self.predicted_variance).exp()
            )?;
        }
        Ok(())
    }
}

/// (R₂·∂_z m)(x + i0) by Richardson extrapolation from η and 2η.
fn r2_dzm_boundary(model: &FcModel, x: f64) -> Result<Complex64, MesoError> {
    let eta = model.options().eta_small;
    let at = |e: f64| -> Result<Complex64, MesoError> {
        let d = model.derived(Complex64::new(x, e))?;
        if d.stability.abs() < 1e-8 {
            return Err(MesoError::Unstable(d.stability.abs()));
        }
        Ok(d.r2 * d.dz_m)
    };
    Ok(at(eta)? * 2.0 - at(2.0 * eta)?)
}

/// Mean correction −(t²/π) ∫ φ(x)·Re (R₂ m′)(x + i0) dx of the linear
/// statistic of V + √t·W.
pub fn mean_correction(model: &FcModel, phi: &TestFunction) -> Result<f64, MesoError> {
    let Some((slo, shi)) = phi.deriv_support() else {
        return Ok(0.0);
    };
    let (a, b) = model.support_hull();
    let (l_lim, r_lim) = phi.limits();
    if l_lim != 0.0 || r_lim != 0.0 {
        return Err(MesoError::BadFunction("mean correction needs phi vanishing at infinity".into()));
    }
    let lo = slo.max(a - 1.0);
    let hi = shi.min(b + 1.0);
    if hi <= lo {
        return Ok(0.0);
    }
    let t = model.t();
    let mut breaks = phi.breaks();
    breaks.retain(|&x| x > lo && x < hi);
    breaks.insert(0, lo);
    breaks.push(hi);
    let mut failure = None;
    let v = integrate_pieces(
        |x| {
            let p = phi.value(x);
            if p == 0.0 {
                return 0.0;
            }
            match r2_dzm_boundary(model, x) {
                Ok(c) => p * c.re,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        &breaks,
        1e-10,
        1e-8,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(-t * t / PI * v)
}

/// Equilibrium density ρ_V(x) = weight(x)·√((x − A)(B − x)) on [A, B].
#[derive(Clone, Copy)]
pub struct Equilibrium<'a> {
    pub a: f64,
    pub b: f64,
    pub weight: &'a dyn Fn(f64) -> f64,
}

impl<'a> Equilibrium<'a> {
    pub fn density(&self, x: f64) -> f64 {
        if x <= self.a || x >= self.b {
            0.0
        } else {
            (self.weight)(x) * ((x - self.a) * (self.b - x)).sqrt()
        }
    }
}

/// Gaussian equilibrium on [−2, 2]: weight 1/(2π).
pub fn gaussian_weight(_x: f64) -> f64 {
    1.0 / (2.0 * PI)
}

/// Limiting variance and mean shift of Σφ(λ_i) − N∫φρ_V for the β-ensemble
/// with equilibrium density `eq`.
///
/// With Q the difference quotient of φ and c, r the center and half-width
/// of [A, B],
///
/// ```text
/// V = (1/2βπ²) ∬_{[A,B]²} Q(x,y)² (r² − (x − c)(y − c)) / (σ(x)σ(y)) dx dy
///   = (r²/2βπ²) ∫₀^π∫₀^π Q² (1 − cos θ cos ψ) dθ dψ,   x = c + r cos θ,
/// ```
///
/// evaluated on Gauss–Chebyshev nodes. The shift is
/// δ = −(2/β − 1)/(2π²) ∫ φ (Hρ_V)′/ρ_V.
pub fn beta_variance_and_shift(phi: &TestFunction, eq: &Equilibrium, beta: f64) -> Result<(f64, f64), MesoError> {
    if !(beta > 0.0 && eq.a < eq.b) {
        return Err(MesoError::BadEnsemble);
    }
    let c = 0.5 * (eq.a + eq.b);
    let r = 0.5 * (eq.b - eq.a);
    let variance_at = |n: usize| -> f64 {
        let th: Vec<f64> = (0..n).map(|k| PI * (k as f64 + 0.5) / n as f64).collect();
        let xs: Vec<f64> = th.iter().map(|t| c + r * t.cos()).collect();
        let cs: Vec<f64> = th.iter().map(|t| t.cos()).collect();
        let v: Vec<f64> = xs.iter().map(|&x| phi.value(x)).collect();
        let mut sum = 0.0;
        for i in 0..n {
            let d = phi.deriv(xs[i]);
            sum += d * d * (1.0 - cs[i] * cs[i]);
            for j in i + 1..n {
                let q = (v[i] - v[j]) / (xs[i] - xs[j]);
                sum += 2.0 * q * q * (1.0 - cs[i] * cs[j]);
            }
        }
        let h = PI / n as f64;
        r * r / (2.0 * beta * PI * PI) * sum * h * h
    };
    let mut n = 200;
    let mut prev = variance_at(n);
    let mut variance = prev;
    while n < 6400 {
        n *= 2;
        variance = variance_at(n);
        if (variance - prev).abs() <= 1e-9 * variance.abs().max(1e-300) {
            break;
        }
        prev = variance;
    }

    let factor = 2.0 / beta - 1.0;
    if factor == 0.0 || phi.is_constant() {
        return Ok((variance, 0.0));
    }
    let (slo, shi) = phi.deriv_support().expect("non-constant");
    let (l_lim, r_lim) = phi.limits();
    if l_lim != 0.0 || r_lim != 0.0 {
        return Err(MesoError::BadFunction("shift needs phi vanishing at infinity".into()));
    }
    let lo = slo.max(eq.a);
    let hi = shi.min(eq.b);
    if hi <= lo {
        return Ok((variance, 0.0));
    }
    // ∫ φ (Hρ)′/(wσ) dx = ∫ φ (Hρ)′/w dθ with x = c + r cos θ
    let theta = |x: f64| ((x - c) / r).clamp(-1.0, 1.0).acos();
    let mut breaks: Vec<f64> = phi.breaks().into_iter().filter(|&x| x > lo && x < hi).map(theta).collect();
    breaks.push(theta(lo));
    breaks.push(theta(hi));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let nodes = ChebyshevU::new(256);
    let integral = integrate_pieces(
        |th| {
            let x = c + r * th.cos();
            let p = phi.value(x);
            let w = (eq.weight)(x);
            if p == 0.0 || !(w > 0.0) {
                return 0.0;
            }
            let h = 1e-4 * r;
            let d = (nodes.hilbert(eq, c, r, x + h) - nodes.hilbert(eq, c, r, x - h)) / (2.0 * h);
            p * d / w
        },
        &breaks,
        1e-11,
        1e-9,
    )?;
    Ok((variance, -factor / (2.0 * PI * PI) * integral))
}

/// Second-kind Gauss–Chebyshev rule on [0, π] for ∫ f(cos ψ) sin²ψ dψ.
struct ChebyshevU {
    cos: Vec<f64>,
    weight: Vec<f64>,
}

impl ChebyshevU {
    fn new(n: usize) -> Self {
        let step = PI / (n + 1) as f64;
        let psi: Vec<f64> = (1..=n).map(|k| k as f64 * step).collect();
        Self {
            cos: psi.iter().map(|p| p.cos()).collect(),
            weight: psi.iter().map(|p| step * p.sin().powi(2)).collect(),
        }
    }

    /// p.v. ∫ w(y)σ(y)/(x − y) dy for x inside the support, split as
    /// w(x)·π(x − c) plus a regular remainder.
    fn hilbert(&self, eq: &Equilibrium, c: f64, r: f64, x: f64) -> f64 {
        let wx = (eq.weight)(x);
        let mut rest = 0.0;
        for (&cs, &wt) in self.cos.iter().zip(&self.weight) {
            let y = c + r * cs;
            let gap = x - y;
            let q = if gap.abs() > 1e-7 * r {
                ((eq.weight)(y) - wx) / gap
            } else {
                let e = 1e-5 * r;
                -((eq.weight)(x + e) - (eq.weight)(x - e)) / (2.0 * e)
            };
            rest += q * wt;
        }
        wx * PI * (x - c) + r * r * rest
    }
}

/// Cauchy-kernel log test function φ_N(x) = ∫₀ˣ χ(y/R) p_Λ(t₁, y) dy.
pub fn log_cutoff(t1: f64, cutoff: f64) -> Result<TestFunction, MesoError> {
    if !(t1 > 0.0 && cutoff > t1) {
        return Err(MesoError::BadFunction(format!("need 0 < t1 < cutoff, got t1 = {t1}, cutoff = {cutoff}")));
    }
    Ok(TestFunction::single(Shape::LogCutoff { t1, cutoff }))
}
