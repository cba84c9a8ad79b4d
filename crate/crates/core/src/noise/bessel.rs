//! Modified Bessel functions of the first kind, integer order.
//!
//! Below [`SERIES_LIMIT`] the positive-term power series is summed directly,
//! which keeps full relative precision. Above it the exp-scaled asymptotic
//! expansion converges to machine precision before its terms start growing.

use std::f64::consts::PI;

/// Switch-over point between the power series and the asymptotic expansion.
pub const SERIES_LIMIT: f64 = 30.0;

/// `I_ν(x)` for `x ≥ 0`. Overflows to `+∞` beyond `x ≈ 713`; use
/// [`bessel_i_scaled`] for ratios.
pub fn bessel_i(nu: u32, x: f64) -> f64 {
    if x <= SERIES_LIMIT {
        series(nu, x)
    } else {
        bessel_i_scaled(nu, x) * x.exp()
    }
}

/// `e^{−x}·I_ν(x)` for `x ≥ 0`.
pub fn bessel_i_scaled(nu: u32, x: f64) -> f64 {
    if x <= SERIES_LIMIT {
        series(nu, x) * (-x).exp()
    } else {
        asymptotic_scaled(nu, x)
    }
}

/// `ln I_ν(x)`.
pub fn ln_bessel_i(nu: u32, x: f64) -> f64 {
    bessel_i_scaled(nu, x).ln() + x
}

fn series(nu: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0 { 1.0 } else { 0.0 };
    }
    let half = 0.5 * x;
    let q = half * half;
    // Leading term (x/2)^ν / ν!
    let mut term = 1.0;
    for k in 1..=nu {
        term *= half / k as f64;
    }
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + nu as f64));
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum
}

fn asymptotic_scaled(nu: u32, x: f64) -> f64 {
    let mu = 4.0 * (nu as f64) * (nu as f64);
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut k = 1.0f64;
    loop {
        let next = -term * (mu - (2.0 * k - 1.0).powi(2)) / (k * 8.0 * x);
        if next.abs() >= term.abs() || next.abs() < 1e-17 * sum.abs() {
            if next.abs() < term.abs() {
                sum += next;
            }
            break;
        }
        sum += next;
        term = next;
        k += 1.0;
    }
    sum / (2.0 * PI * x).sqrt()
}
