//! Log-gamma, digamma and polygamma functions for positive real arguments.
//!
//! All three use the same scheme: shift the argument upward with the
//! functional recurrence until the Stirling/Bernoulli asymptotic series is
//! accurate to machine precision, then evaluate the series.

use std::f64::consts::PI;

/// Bernoulli numbers B_2, B_4, ..., B_30.
const BERNOULLI_EVEN: [f64; 15] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
    8553103.0 / 6.0,
    -23749461029.0 / 870.0,
    8615841276005.0 / 14322.0,
];

/// Highest polygamma order accepted by [`polygamma`].
pub const MAX_POLYGAMMA_ORDER: usize = 16;

const LN_GAMMA_SHIFT: f64 = 12.0;

/// Natural log of the gamma function for `x > 0`. Returns NaN otherwise.
pub fn ln_gamma(x: f64) -> f64 {
    if !(x > 0.0) || x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return f64::INFINITY;
    }
    let mut shift = 1.0;
    let mut xx = x;
    while xx < LN_GAMMA_SHIFT {
        shift *= xx;
        xx += 1.0;
    }
    let inv = 1.0 / xx;
    let inv2 = inv * inv;
    let mut series = 0.0;
    let mut pow = inv;
    for (k, b) in BERNOULLI_EVEN.iter().take(10).enumerate() {
        let n = 2.0 * (k as f64 + 1.0);
        series += b / (n * (n - 1.0)) * pow;
        pow *= inv2;
    }
    (xx - 0.5) * xx.ln() - xx + 0.5 * (2.0 * PI).ln() + series - shift.ln()
}

/// Log of the beta function B(p, q) for `p, q > 0`.
pub fn ln_beta(p: f64, q: f64) -> f64 {
    ln_gamma(p) + ln_gamma(q) - ln_gamma(p + q)
}

/// Digamma ψ(x) = d/dx ln Γ(x) for `x > 0`.
pub fn digamma(x: f64) -> f64 {
    if !(x > 0.0) || x.is_nan() {
        return f64::NAN;
    }
    let mut acc = 0.0;
    let mut xx = x;
    while xx < 14.0 {
        acc -= 1.0 / xx;
        xx += 1.0;
    }
    let inv2 = 1.0 / (xx * xx);
    let mut series = 0.0;
    let mut pow = inv2;
    for (k, b) in BERNOULLI_EVEN.iter().take(10).enumerate() {
        series += b / (2.0 * (k as f64 + 1.0)) * pow;
        pow *= inv2;
    }
    acc + xx.ln() - 0.5 / xx - series
}

/// Polygamma ψ^{(n)}(x) for `x > 0` and `n <= MAX_POLYGAMMA_ORDER`;
/// `n = 0` is the digamma function.
pub fn polygamma(n: usize, x: f64) -> f64 {
    if n == 0 {
        return digamma(x);
    }
    if !(x > 0.0) || x.is_nan() || n > MAX_POLYGAMMA_ORDER {
        return f64::NAN;
    }
    let nf = n as f64;
    let n_fact = factorial(n);
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };

    // ψ^{(n)}(x) = ψ^{(n)}(x + 1) + (-1)^{n+1} n! / x^{n+1}; every shifted term
    // carries the same sign as the result, so the sum is cancellation free.
    let threshold = 20.0 + nf;
    let mut xx = x;
    let mut acc = 0.0;
    while xx < threshold {
        acc += xx.powi(-(n as i32) - 1);
        xx += 1.0;
    }
    acc *= n_fact;

    let inv = 1.0 / xx;
    let inv2 = inv * inv;
    let lead = inv.powi(n as i32);
    let mut series = factorial(n - 1) + 0.5 * n_fact * inv;
    // ratio = (2k + n - 1)! / (2k)!, starting at k = 1.
    let mut ratio = factorial(n + 1) / 2.0;
    let mut pow = inv2;
    for (k, b) in BERNOULLI_EVEN.iter().enumerate() {
        let k = k as f64 + 1.0;
        let term = b * ratio * pow;
        series += term;
        if term.abs() < 1e-18 * series.abs() {
            break;
        }
        ratio *= (2.0 * k + nf) * (2.0 * k + nf + 1.0) / ((2.0 * k + 1.0) * (2.0 * k + 2.0));
        pow *= inv2;
    }
    sign * (acc + series * lead)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}
