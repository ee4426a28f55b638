//! Special functions.

use num_complex::Complex64;
use std::f64::consts::FRAC_PI_2;

/// Sine integral Si(x) = ∫₀ˣ sin(s)/s ds.
///
/// Power series below 4; above that the continued fraction for E₁(ix)
/// (modified Lentz). The asymptotic series cannot reach 1e−12 near x = 4,
/// the continued fraction converges to full precision there.
pub fn sine_integral(x: f64) -> f64 {
    if x < 0.0 {
        return -sine_integral(-x);
    }
    if x < 4.0 {
        let x2 = x * x;
        let mut term = x;
        let mut sum = x;
        let mut k = 0u32;
        loop {
            k += 1;
            let n = f64::from(2 * k);
            // term_k = (−1)^k x^{2k+1}/(2k+1)!
            term *= -x2 / (n * (n + 1.0));
            let add = term / (n + 1.0);
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        return sum;
    }
    // E1(ix) = e^{-ix}·CF, Si = π/2 + Im[E1(ix)]
    const TINY: f64 = 1e-300;
    let mut b = Complex64::new(1.0, x);
    let mut c = Complex64::new(1.0 / TINY, 0.0);
    let mut d = b.inv();
    let mut h = d;
    for i in 1..1000 {
        let a = -f64::from(i * i);
        b += 2.0;
        d = (d * a + b).inv();
        c = b + c.inv() * a;
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    let e1 = Complex64::new(x.cos(), -x.sin()) * h;
    FRAC_PI_2 + e1.im
}
