use super::{FcError, FcModel, Potential};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Energy path t ↦ γ₀(t) under ∂_t γ = −Re m_fc,t(γ).
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyPath {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
}

impl EnergyPath {
    pub fn end(&self) -> f64 {
        *self.energies.last().expect("paths are never empty")
    }

    /// Linear interpolation in time (clamped to the span).
    pub fn at(&self, t: f64) -> f64 {
        let ts = &self.times;
        let forward = ts[ts.len() - 1] >= ts[0];
        let k = if forward {
            ts.partition_point(|&s| s <= t)
        } else {
            ts.partition_point(|&s| s >= t)
        };
        if k == 0 {
            return self.energies[0];
        }
        if k >= ts.len() {
            return self.end();
        }
        let (t0, t1) = (ts[k - 1], ts[k]);
        let w = (t - t0) / (t1 - t0);
        self.energies[k - 1] * (1.0 - w) + self.energies[k] * w
    }
}

/// RK4 integration of ∂_t γ = −Re m_fc,t(γ + i0) from `e0` at `t_span.0` to
/// `t_span.1` (either direction) with steps of at most `dt`.
pub fn advect_energy(pot: &Potential, e0: f64, t_span: (f64, f64), dt: f64) -> Result<EnergyPath, FcError> {
    let model = FcModel::new(pot.clone(), t_span.0.max(0.0))?;
    advect_energy_with(&model, e0, t_span, dt)
}

pub fn advect_energy_with(
    model: &FcModel,
    e0: f64,
    t_span: (f64, f64),
    dt: f64,
) -> Result<EnergyPath, FcError> {
    let (ta, tb) = t_span;
    if !(ta >= 0.0 && tb >= 0.0 && ta.is_finite() && tb.is_finite()) {
        return Err(FcError::BadTime(if ta < 0.0 { ta } else { tb }));
    }
    if !(dt > 0.0) {
        return Err(FcError::BadTime(dt));
    }
    let steps = ((tb - ta).abs() / dt).ceil().max(1.0) as usize;
    let h = (tb - ta) / steps as f64;
    let floor = model.options().density_floor;
    let mut guess: Option<Complex64> = None;
    let mut velocity = |t: f64, e: f64| -> Result<f64, FcError> {
        let mt = model.at_time(t)?;
        let (m0, m1) = mt.boundary_from(e, guess)?;
        guess = Some(m1);
        let rho = m0.im / PI;
        if rho < floor {
            return Err(FcError::LeftBulk {
                t,
                energy: e,
                density: rho,
            });
        }
        Ok(-m0.re)
    };
    let mut times = Vec::with_capacity(steps + 1);
    let mut energies = Vec::with_capacity(steps + 1);
    let mut e = e0;
    times.push(ta);
    energies.push(e);
    for k in 0..steps {
        let t = ta + h * k as f64;
        let k1 = velocity(t, e)?;
        let k2 = velocity(t + 0.5 * h, e + 0.5 * h * k1)?;
        let k3 = velocity(t + 0.5 * h, e + 0.5 * h * k2)?;
        let k4 = velocity(t + h, e + h * k3)?;
        e += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        times.push(if k + 1 == steps { tb } else { t + h });
        energies.push(e);
    }
    Ok(EnergyPath { times, energies })
}
