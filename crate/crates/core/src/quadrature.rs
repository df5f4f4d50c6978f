//! Globally adaptive Gauss–Kronrod (7/15) quadrature, plus maps from
//! semi-infinite and doubly-infinite ranges onto `[0, 1)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-15,
            rel: 1e-13,
            max_intervals: 4000,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance {
            abs,
            rel,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Which half-line a tail integral covers, relative to its anchor point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Lower,
    Upper,
}

struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
    abs: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 15-point Kronrod panel with its embedded 7-point Gauss estimate.
/// Returns `(kronrod, |kronrod - gauss|, kronrod estimate of ∫|f|)`.
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> (f64, f64, f64) {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs = fc.abs() * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (f1, f2) = (f(center - dx), f(center + dx));
        kronrod += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    (
        kronrod * half,
        ((kronrod - gauss) * half).abs(),
        abs * half.abs(),
    )
}

// Below this fraction of ∫|f| the error estimate is roundoff, not truncation.
const ROUNDOFF_FLOOR: f64 = 50.0 * f64::EPSILON;

/// Adaptive integral of `f` over the finite interval `[lo, hi]`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: Tolerance,
) -> Result<Estimate> {
    if lo == hi {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (value, error, abs) = gk15(&mut f, lo, hi);
    let mut heap = BinaryHeap::new();
    heap.push(Panel {
        lo,
        hi,
        value,
        error,
        abs,
    });
    let mut total = value;
    let mut total_err = error;
    let mut total_abs = abs;
    let mut evaluations = 15;

    while total_err
        > tol
            .abs
            .max(tol.rel * total.abs())
            .max(ROUNDOFF_FLOOR * total_abs)
    {
        if !total.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite integrand on [{lo}, {hi}] after {evaluations} evaluations"
            )));
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::Numeric(format!(
                "quadrature did not converge on [{lo}, {hi}]: estimate {total:e}, error {total_err:e}, {} panels",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Panel is at floating-point resolution; accept what we have.
            heap.push(Panel {
                error: 0.0,
                ..worst
            });
            total_err = heap.iter().map(|p| p.error).sum();
            continue;
        }
        let (v1, e1, a1) = gk15(&mut f, worst.lo, mid);
        let (v2, e2, a2) = gk15(&mut f, mid, worst.hi);
        evaluations += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        total_abs += a1 + a2 - worst.abs;
        heap.push(Panel {
            lo: worst.lo,
            hi: mid,
            value: v1,
            error: e1,
            abs: a1,
        });
        heap.push(Panel {
            lo: mid,
            hi: worst.hi,
            value: v2,
            error: e2,
            abs: a2,
        });
        if total_err < 0.0 {
            total_err = heap.iter().map(|p| p.error).sum();
        }
    }
    // Re-sum to shed accumulated drift from the incremental updates.
    let value = heap.iter().map(|p| p.value).sum();
    Ok(Estimate {
        value,
        error: total_err,
        evaluations,
    })
}

/// Integral of `f` over `[anchor, ∞)` (Upper) or `(-∞, anchor]` (Lower), using
/// `z = anchor ± scale · t / (1 - t)`. `scale` should match the decay length
/// of the integrand near the anchor.
pub fn integrate_tail<F: FnMut(f64) -> f64>(
    mut f: F,
    anchor: f64,
    tail: Tail,
    scale: f64,
    tol: Tolerance,
) -> Result<Estimate> {
    let sign = match tail {
        Tail::Upper => 1.0,
        Tail::Lower => -1.0,
    };
    integrate(
        |t| {
            let s = 1.0 - t;
            let z = anchor + sign * scale * t / s;
            let v = f(z);
            if v == 0.0 {
                0.0
            } else {
                v * scale / (s * s)
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Integral of `f` over the whole real line, split at `center`.
pub fn integrate_line<F: FnMut(f64) -> f64>(
    mut f: F,
    center: f64,
    scale: f64,
    tol: Tolerance,
) -> Result<Estimate> {
    let lower = integrate_tail(&mut f, center, Tail::Lower, scale, tol)?;
    let upper = integrate_tail(&mut f, center, Tail::Upper, scale, tol)?;
    Ok(Estimate {
        value: lower.value + upper.value,
        error: lower.error + upper.error,
        evaluations: lower.evaluations + upper.evaluations,
    })
}
