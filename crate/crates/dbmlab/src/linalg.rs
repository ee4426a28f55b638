//! Symmetric eigenvalues: implicit-shift QL for tridiagonal matrices, nalgebra
//! for dense ones.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("diagonal has length {diag} but off-diagonal has length {off}")]
    Shape { diag: usize, off: usize },
    #[error("QL iteration did not converge within {sweeps} sweeps")]
    NotConverged { sweeps: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off`, sorted ascending.
pub fn eig_sym_tridiag(diag: &[f64], off: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if off.len() + 1 != n {
        return Err(LinalgError::Shape {
            diag: n,
            off: off.len(),
        });
    }
    if diag.iter().chain(off).any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let max_sweeps = 30 * n;
    let mut sweeps = 0;
    for l in 0..n {
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > max_sweeps {
                return Err(LinalgError::NotConverged { sweeps: max_sweeps });
            }
            // Wilkinson-type shift from the leading 2×2 block
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Sorted eigenvalues of a dense symmetric matrix (row-major).
pub fn eigvalsh(a: Vec<f64>, n: usize) -> Result<Vec<f64>, LinalgError> {
    if a.len() != n * n {
        return Err(LinalgError::Shape { diag: n, off: a.len() });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let m = nalgebra::DMatrix::from_row_slice(n, n, &a);
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}
