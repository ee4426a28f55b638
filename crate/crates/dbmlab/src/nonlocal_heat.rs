//! Heat kernel of the truncated nonlocal generator
//!
//! ```text
//! (K_η f)(x) = ρ ∫_{|x−y| ≤ η} (f(y) − f(x)) / (x − y)² dy
//! ```
//!
//! computed through its Fourier symbol ρ·ψ(ξ, η). The prefactor ρ is the
//! lattice density the kernel stands for; with ρ = ρ_sc(0) = 1/π the
//! symbol tends to |ξ| and the kernel to the Cauchy semigroup p_Λ as η → ∞.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, Read, Write};
use thiserror::Error;

use crate::special::sine_integral;

#[derive(Debug, Error)]
pub enum HeatError {
    #[error("range eta must be positive and finite, got {0}")]
    BadEta(f64),
    #[error("times must be positive, finite and increasing")]
    BadTimes,
    #[error("half-width {half_width} is below the required {required}")]
    GridTooSmall { half_width: f64, required: f64 },
    #[error("spacing {dx} does not resolve the smallest time (need <= {required})")]
    GridTooCoarse { dx: f64, required: f64 },
    #[error("mass {mass:e} near the periodic boundary at t = {t}; a larger half-width is needed")]
    Aliasing { t: f64, mass: f64 },
    #[error("kernel mass at t = {t} is {mass}, outside 1 ± 1e-8")]
    Mass { t: f64, mass: f64 },
    #[error("time {t} is not tabulated (table covers {lo}..={hi} at {count} times)")]
    TimeNotTabulated { t: f64, lo: f64, hi: f64, count: usize },
    #[error("distance {x} outside the tabulated range [-{half_width}, {half_width}]")]
    OutOfRange { x: f64, half_width: f64 },
    #[error("cauchy kernel needs t > 0, got {0}")]
    NonPositiveTime(f64),
    #[error("malformed kernel table file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// ψ(ξ, η) = ∫_{|z|≤η} (1 − cos ξz)/z² dz = 2(|ξ|·Si(|ξ|η) − (1 − cos ξη)/η).
pub fn multiplier_psi(xi: f64, eta: f64) -> f64 {
    let a = xi.abs();
    let u = a * eta;
    if u < 1e-3 {
        // Taylor expansion in u = |ξ|η, the closed form cancels badly here
        let u2 = u * u;
        return a * a * eta * (1.0 - u2 / 36.0 + u2 * u2 / 1800.0);
    }
    let v = 2.0 * (a * sine_integral(u) - 2.0 * (0.5 * u).sin().powi(2) / eta);
    v.max(0.0)
}

/// p_Λ(t, x) = (1/π)·t/(t² + x²).
pub fn cauchy_kernel(t: f64, dx: f64) -> Result<f64, HeatError> {
    if !(t > 0.0) {
        return Err(HeatError::NonPositiveTime(t));
    }
    Ok(t / (PI * (t * t + dx * dx)))
}

/// Uniform grid request: half-width L and spacing Δx. The actual grid is
/// the next power of two of points at spacing Δx covering [−L, L).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    pub dx: f64,
}

impl GridSpec {
    /// Smallest grid meeting the resolution rules for these times.
    pub fn for_times(eta: f64, times: &[f64]) -> Self {
        let tmax = times.iter().cloned().fold(0.0, f64::max);
        let tmin = times.iter().cloned().fold(f64::INFINITY, f64::min);
        Self {
            half_width: 50.0 * eta.max(tmax),
            dx: tmin / 10.0,
        }
    }
}

/// p_t(x) on a symmetric grid for several times.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatKernelTable {
    pub eta: f64,
    /// Density prefactor of the generator.
    pub rate: f64,
    pub times: Vec<f64>,
    pub dx: f64,
    len: usize,
    values: Vec<f64>,
}

impl HeatKernelTable {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn half_width(&self) -> f64 {
        self.dx * (self.len / 2) as f64
    }

    /// Grid point j ∈ [0, len): x_j = (j − len/2)·Δx.
    pub fn x(&self, j: usize) -> f64 {
        (j as f64 - (self.len / 2) as f64) * self.dx
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.len..(k + 1) * self.len]
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.row(k).iter().sum::<f64>() * self.dx
    }

    /// Index of a tabulated time.
    pub fn time_index(&self, t: f64) -> Result<usize, HeatError> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * s.max(1.0))
            .ok_or(HeatError::TimeNotTabulated {
                t,
                lo: self.times[0],
                hi: *self.times.last().expect("tables have times"),
                count: self.times.len(),
            })
    }

    /// Cubic interpolation of row `k` at distance `x`.
    pub fn interpolate(&self, k: usize, x: f64) -> Result<f64, HeatError> {
        let hw = self.half_width();
        if !(x.abs() <= hw - 2.0 * self.dx) {
            return Err(HeatError::OutOfRange { x, half_width: hw });
        }
        let u = x / self.dx + (self.len / 2) as f64;
        let j = u.floor() as usize;
        let s = u - j as f64;
        let r = self.row(k);
        let (p0, p1, p2, p3) = (r[j - 1], r[j], r[j + 1], r[j + 2]);
        // Lagrange weights on nodes −1, 0, 1, 2
        let w0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
        let w1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
        let w2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
        let w3 = (s + 1.0) * s * (s - 1.0) / 6.0;
        Ok(w0 * p0 + w1 * p1 + w2 * p2 + w3 * p3)
    }

    /// ζ(x, t) = p_t(0, x).
    pub fn zeta(&self, x: f64, t: f64) -> Result<f64, HeatError> {
        let k = self.time_index(t)?;
        self.interpolate(k, x)
    }

    /// Binary layout (little endian): magic `HKT1`, len u64, eta, rate,
    /// dx f64, time count u64, times, then row-major values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<(), HeatError> {
        w.write_all(b"HKT1")?;
        w.write_all(&(self.len as u64).to_le_bytes())?;
        for v in [self.eta, self.rate, self.dx] {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(self.times.len() as u64).to_le_bytes())?;
        for t in &self.times {
            w.write_all(&t.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, HeatError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"HKT1" {
            return Err(HeatError::Format("bad magic".into()));
        }
        let mut b8 = [0u8; 8];
        let mut u64_ = |r: &mut R| -> Result<u64, HeatError> {
            r.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let len = u64_(&mut r)? as usize;
        let eta = f64::from_bits(u64_(&mut r)?);
        let rate = f64::from_bits(u64_(&mut r)?);
        let dx = f64::from_bits(u64_(&mut r)?);
        let nt = u64_(&mut r)? as usize;
        if nt == 0 || len == 0 || nt.checked_mul(len).is_none() {
            return Err(HeatError::Format("empty or oversized table".into()));
        }
        let mut times = Vec::with_capacity(nt);
        for _ in 0..nt {
            times.push(f64::from_bits(u64_(&mut r)?));
        }
        let mut values = Vec::with_capacity(nt * len);
        for _ in 0..nt * len {
            values.push(f64::from_bits(u64_(&mut r)?));
        }
        Ok(Self {
            eta,
            rate,
            times,
            dx,
            len,
            values,
        })
    }

    /// Plain-text table `x,p(t_1),p(t_2),…` every `stride` grid points.
    pub fn write_text<W: Write>(&self, mut w: W, stride: usize) -> io::Result<()> {
        write!(w, "x")?;
        for t in &self.times {
            write!(w, ",t={}", t)?;
        }
        writeln!(w)?;
        for j in (0..self.len).step_by(stride.max(1)) {
            write!(w, "{}", self.x(j))?;
            for k in 0..self.times.len() {
                write!(w, ",{}", self.row(k)[j])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// p_t for each t in `times` as the inverse Fourier transform of
/// exp(−t·rate·ψ(ξ, η)) on a periodised power-of-two grid.
pub fn build_kernel_table(eta: f64, rate: f64, times: &[f64], grid: GridSpec) -> Result<HeatKernelTable, HeatError> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(HeatError::BadEta(eta));
    }
    if times.is_empty()
        || times.iter().any(|t| !(*t > 0.0 && t.is_finite()))
        || times.windows(2).any(|w| !(w[1] > w[0]))
        || !(rate > 0.0)
    {
        return Err(HeatError::BadTimes);
    }
    let tmax = *times.last().expect("checked non-empty");
    let required = 50.0 * eta.max(tmax);
    if grid.half_width < required * (1.0 - 1e-12) {
        return Err(HeatError::GridTooSmall {
            half_width: grid.half_width,
            required,
        });
    }
    if grid.dx > times[0] / 10.0 * (1.0 + 1e-12) {
        return Err(HeatError::GridTooCoarse {
            dx: grid.dx,
            required: times[0] / 10.0,
        });
    }
    let len = ((2.0 * grid.half_width / grid.dx).ceil() as usize).next_power_of_two();
    let period = len as f64 * grid.dx;
    let psi: Vec<f64> = (0..=len / 2)
        .map(|k| multiplier_psi(2.0 * PI * k as f64 / period, eta))
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_inverse(len);
    let mut values = Vec::with_capacity(len * times.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for &t in times {
        for (k, b) in buf.iter_mut().enumerate() {
            let kk = if k <= len / 2 { k } else { len - k };
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            *b = Complex64::new(sign * (-t * rate * psi[kk]).exp(), 0.0);
        }
        fft.process(&mut buf);
        let scale = 1.0 / period;
        let mut row: Vec<f64> = buf.iter().map(|c| c.re * scale).collect();
        // evenness: x_j and x_{len−j} are mirror images
        for j in 1..len / 2 {
            let avg = 0.5 * (row[j] + row[len - j]);
            row[j] = avg;
            row[len - j] = avg;
        }
        let mass: f64 = row.iter().sum::<f64>() * grid.dx;
        if (mass - 1.0).abs() > 1e-8 {
            return Err(HeatError::Mass { t, mass });
        }
        let edge = 0.99 * (len / 2) as f64 * grid.dx;
        let boundary_mass: f64 = row
            .iter()
            .enumerate()
            .filter(|(j, _)| ((*j as f64 - (len / 2) as f64) * grid.dx).abs() > edge)
            .map(|(_, v)| v.abs())
            .sum::<f64>()
            * grid.dx;
        if boundary_mass > 1e-6 {
            return Err(HeatError::Aliasing { t, mass: boundary_mass });
        }
        for v in row.iter_mut() {
            *v = v.max(0.0) / mass;
        }
        values.extend_from_slice(&row);
    }
    Ok(HeatKernelTable {
        eta,
        rate,
        times: times.to_vec(),
        dx: grid.dx,
        len,
        values,
    })
}

/// ζ(x, t) from a table, as a free function.
pub fn zeta(table: &HeatKernelTable, x: f64, t: f64) -> Result<f64, HeatError> {
    table.zeta(x, t)
}
