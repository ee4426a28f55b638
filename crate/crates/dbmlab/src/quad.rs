//! Adaptive one-dimensional quadrature.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadrature on [{a}, {b}] did not reach tolerance {tol:e} (estimate {estimate}, error {error:e})")]
    NotConverged {
        a: f64,
        b: f64,
        tol: f64,
        estimate: f64,
        error: f64,
    },
    #[error("integrand returned a non-finite value at x = {0}")]
    NonFinite(f64),
}

// Kronrod 15-point nodes and weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64), QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite(c));
    }
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let (x1, x2) = (c - dx, c + dx);
        let (f1, f2) = (f(x1), f(x2));
        if !f1.is_finite() {
            return Err(QuadError::NonFinite(x1));
        }
        if !f2.is_finite() {
            return Err(QuadError::NonFinite(x2));
        }
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Ok((kronrod * h, ((kronrod - gauss) * h).abs()))
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// Stops when the summed error estimate drops below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let (v, e) = gk15(&mut f, lo, hi)?;
    let mut pieces = vec![(lo, hi, v, e)];
    let mut total = v;
    let mut err = e;
    const MAX_PIECES: usize = 20_000;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if pieces.len() >= MAX_PIECES {
            return Err(QuadError::NotConverged {
                a,
                b,
                tol: abs_tol.max(rel_tol * total.abs()),
                estimate: sign * total,
                error: err,
            });
        }
        let (k, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (pa, pb, pv, pe) = pieces.swap_remove(k);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            // interval cannot be split further in floating point
            return Err(QuadError::NotConverged {
                a,
                b,
                tol: abs_tol.max(rel_tol * total.abs()),
                estimate: sign * total,
                error: err,
            });
        }
        let (v1, e1) = gk15(&mut f, pa, mid)?;
        let (v2, e2) = gk15(&mut f, mid, pb)?;
        total += v1 + v2 - pv;
        err += e1 + e2 - pe;
        pieces.push((pa, mid, v1, e1));
        pieces.push((mid, pb, v2, e2));
        if pieces.len() % 64 == 0 {
            // refresh sums to keep rounding drift out of the stopping test
            total = pieces.iter().map(|p| p.2).sum();
            err = pieces.iter().map(|p| p.3).sum();
        }
    }
    Ok(sign * pieces.iter().map(|p| p.2).sum::<f64>())
}

/// Integrate over consecutive breakpoints, e.g. to isolate kinks.
pub fn integrate_pieces<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64, QuadError> {
    let mut sum = 0.0;
    let share = abs_tol / breaks.len().max(2) as f64;
    for w in breaks.windows(2) {
        sum += integrate(&mut f, w[0], w[1], share, rel_tol)?;
    }
    Ok(sum)
}

/// Classic recursive adaptive Simpson rule.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, QuadError> {
    fn step<F: FnMut(f64) -> f64>(
        f: &mut F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64, QuadError> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 {
            return Err(QuadError::NotConverged {
                a,
                b,
                tol,
                estimate: left + right,
                error: delta.abs(),
            });
        }
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        Ok(step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(&mut f, a, b, fa, fm, fb, whole, tol, 50)
}
