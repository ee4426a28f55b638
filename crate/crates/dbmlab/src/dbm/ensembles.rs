use super::DbmError;
use crate::free_convolution::Potential;
use crate::linalg::{eig_sym_tridiag, eigvalsh};
use crate::rng::NoiseSource;
use rand_distr::{ChiSquared, Distribution};

const LANE_GBE: u64 = 0x6265;
const LANE_GOE: u64 = 0x676f;

/// Gaussian β-ensemble eigenvalues from the tridiagonal model, scaled so
/// that the spectrum fills [−2, 2]: λ = eig(T)/√(βn) with T_kk ~ N(0, 2)
/// and T_{k,k+1} ~ χ_{β(n−k)}.
pub fn sample_gbe_eigs(n: usize, beta: f64, noise: &NoiseSource) -> Result<Vec<f64>, DbmError> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(DbmError::Spec(format!("beta must be positive, got {beta}")));
    }
    let mut s = noise.stream(LANE_GBE);
    let diag: Vec<f64> = (0..n).map(|_| std::f64::consts::SQRT_2 * s.normal()).collect();
    let mut off = Vec::with_capacity(n - 1);
    for k in 1..n {
        let chi2 = ChiSquared::new(beta * (n - k) as f64).map_err(|e| DbmError::Spec(e.to_string()))?;
        off.push(chi2.sample(&mut s).sqrt());
    }
    let scale = 1.0 / (beta * n as f64).sqrt();
    let mut ev = eig_sym_tridiag(&diag, &off)?;
    ev.iter_mut().for_each(|v| *v *= scale);
    Ok(ev)
}

/// Dense GOE matrix (row-major) with off-diagonal variance 1/N and
/// diagonal variance 2/N.
pub fn sample_goe_matrix(n: usize, noise: &NoiseSource) -> Vec<f64> {
    let mut s = noise.stream(LANE_GOE);
    let sd = (1.0 / n as f64).sqrt();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = std::f64::consts::SQRT_2 * sd * s.normal();
        for j in i + 1..n {
            let v = sd * s.normal();
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    a
}

/// Eigenvalues of diag(V) + √t·W with W from [`sample_goe_matrix`]; this has
/// the law of DBM at time t started from V.
pub fn matrix_marginal(pot: &Potential, t: f64, noise: &NoiseSource) -> Result<Vec<f64>, DbmError> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(DbmError::BadSpan(0.0, t, 0.0));
    }
    let v = pot.values();
    if t == 0.0 {
        return Ok(v.to_vec());
    }
    let n = v.len();
    let mut a = sample_goe_matrix(n, noise);
    let st = t.sqrt();
    a.iter_mut().for_each(|x| *x *= st);
    for (i, vi) in v.iter().enumerate() {
        a[i * n + i] += vi;
    }
    Ok(eigvalsh(a, n)?)
}
