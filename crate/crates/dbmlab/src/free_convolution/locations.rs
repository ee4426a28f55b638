use super::{FcError, FcModel, Potential};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::io::{self, Write};

/// Solved transform on an energy grid plus classical locations.
#[derive(Clone, Debug)]
pub struct FreeConvolution {
    pub t: f64,
    /// Distance to the real axis of the stored grid points.
    pub eta: f64,
    pub energies: Vec<f64>,
    /// m at E + iη on the grid.
    pub m_values: Vec<Complex64>,
    /// Extrapolated density ρ(E) = Im m(E + i0)/π, clamped at 0.
    pub density: Vec<f64>,
    pub quantiles: Vec<f64>,
    /// Grid energies where the density falls below the bulk floor.
    pub low_density: Vec<f64>,
    model: FcModel,
}

impl FreeConvolution {
    pub fn model(&self) -> &FcModel {
        &self.model
    }

    pub fn grid(&self) -> Vec<Complex64> {
        self.energies.iter().map(|&e| Complex64::new(e, self.eta)).collect()
    }

    /// True when some grid energy sits in a region of vanishing density.
    pub fn touches_edge(&self) -> bool {
        !self.low_density.is_empty()
    }

    /// Columnar table `E,eta,re_m,im_m,rho`.
    pub fn write_table<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "E,eta,re_m,im_m,rho")?;
        for (i, e) in self.energies.iter().enumerate() {
            let m = self.m_values[i];
            writeln!(w, "{},{},{},{},{}", e, self.eta, m.re, m.im, self.density[i])?;
        }
        Ok(())
    }

    /// One quantile per line.
    pub fn write_quantiles<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "gamma")?;
        for q in &self.quantiles {
            writeln!(w, "{}", q)?;
        }
        Ok(())
    }
}

/// Density on `window` (201 grid points) and `n_quantiles` classical
/// locations of the free convolution of `pot` at time `t`.
pub fn density_and_locations(
    pot: &Potential,
    t: f64,
    window: (f64, f64),
    n_quantiles: usize,
) -> Result<FreeConvolution, FcError> {
    let model = FcModel::new(pot.clone(), t)?;
    density_and_locations_with(&model, window, 201, n_quantiles)
}

pub fn density_and_locations_with(
    model: &FcModel,
    window: (f64, f64),
    n_energies: usize,
    n_quantiles: usize,
) -> Result<FreeConvolution, FcError> {
    let (lo, hi) = window;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) || n_energies < 2 {
        return Err(FcError::BadWindow { lo, hi });
    }
    let floor = model.options().density_floor;
    let mut energies = Vec::with_capacity(n_energies);
    let mut m_values = Vec::with_capacity(n_energies);
    let mut density = Vec::with_capacity(n_energies);
    let mut low_density = Vec::new();
    let mut guess = None;
    for k in 0..n_energies {
        let e = lo + (hi - lo) * k as f64 / (n_energies - 1) as f64;
        let (m0, m1) = model.boundary_from(e, guess)?;
        guess = Some(m1);
        let rho = m0.im / PI;
        if rho < floor {
            low_density.push(e);
        }
        energies.push(e);
        m_values.push(m1);
        density.push(rho.max(0.0));
    }
    let quantiles = model.quantiles(n_quantiles)?;
    Ok(FreeConvolution {
        t: model.t(),
        eta: model.options().eta_small,
        energies,
        m_values,
        density,
        quantiles,
        low_density,
        model: model.clone(),
    })
}
