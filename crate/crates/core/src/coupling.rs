//! Inverse-CDF coupling H^f(a, ·), the function L^f, the operators S and T,
//! the polynomials h_n and the derivative ∂̃ along the coupling.
//!
//! For fixed p, x(a) = H^f(a, p) moves with a and ∂_a ln x = L^f(a, x). The
//! derivative ∂̃ = ∂_a + x L^f ∂_x follows that motion. On the generators
//!
//! ```text
//! ∂̃ ln x    = T(h_1) = L
//! ∂̃ r       = r (α + β r) L
//! ∂̃ T(h_n)  = T(h_{n+1}) - [(a + r) L + ln x] T(h_n) + h_n L
//! ```
//!
//! where r(x) = x f'(x)/f(x) and x r' = r(α + β r) per kernel.

use crate::error::{Error, Result};
use crate::mellin::{MellinFamily, MAX_PSI_ORDER};
use crate::quadrature::{gk15, Tail, Tolerance};
use crate::symbolic::{Poly, Var};

pub const MAX_H_ORDER: usize = 8;
pub const MAX_TILDE_ORDER: usize = 4;

const T_TOL: Tolerance = Tolerance {
    abs: 0.0,
    rel: 1e-13,
    max_intervals: 4000,
};
const KNOTS_PER_WIDTH: f64 = 32.0;
const TABLE_LOG_DROP: f64 = 60.0;
const MAX_KNOTS: usize = 400_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfMode {
    Cdf,
    Inverse,
}

/// m_f(a) with a tabulated CDF for fast, accurate inversion.
///
/// Knots are uniform in the family's z-coordinate. Each knot stores ln F and
/// ln(1 - F), both accumulated from their own tail so neither loses digits.
/// Inversion interpolates z as a cubic Hermite function of ln F (lower half)
/// or ln(1 - F) (upper half).
#[derive(Debug, Clone)]
pub struct CoupledSampler {
    family: MellinFamily,
    a: f64,
    ln_m: f64,
    z: Vec<f64>,
    cum_lower: Vec<f64>,
    cum_upper: Vec<f64>,
    ln_lower: Vec<f64>,
    ln_upper: Vec<f64>,
    ln_phi: Vec<f64>,
}

impl CoupledSampler {
    pub fn new(family: MellinFamily, a: f64) -> Result<Self> {
        let ln_m = family.ln_mellin(a)?;
        let mode = family.mode_z(a);
        let width = family.width_z(a);
        let peak = family.ln_weight(a, mode);
        let step = width / KNOTS_PER_WIDTH;

        let edge = |dir: f64| -> Result<f64> {
            let mut z = mode;
            for _ in 0..(MAX_KNOTS as f64 / KNOTS_PER_WIDTH / 2.0) as usize {
                z += dir * width;
                if family.ln_weight(a, z) - peak < -TABLE_LOG_DROP {
                    return Ok(z);
                }
            }
            Err(Error::Numeric(format!(
                "CDF table for {:?} at a={a} does not fit in {MAX_KNOTS} knots",
                family.kind
            )))
        };
        let lo = edge(-1.0)?;
        let hi = edge(1.0)?;
        let count = ((hi - lo) / step).ceil() as usize + 1;
        let z: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();

        let mut phi = |t: f64| (family.ln_weight(a, t) - ln_m).exp();
        let mut cells = Vec::with_capacity(count - 1);
        for w in z.windows(2) {
            cells.push(gk15(&mut phi, w[0], w[1]).0);
        }
        let mut cum_lower = vec![0.0; count];
        cum_lower[0] = family.tail_integral(a, z[0], Tail::Lower, ln_m, |_| 1.0, T_TOL)?;
        for i in 1..count {
            cum_lower[i] = cum_lower[i - 1] + cells[i - 1];
        }
        let mut cum_upper = vec![0.0; count];
        cum_upper[count - 1] =
            family.tail_integral(a, z[count - 1], Tail::Upper, ln_m, |_| 1.0, T_TOL)?;
        for i in (0..count - 1).rev() {
            cum_upper[i] = cum_upper[i + 1] + cells[i];
        }
        let ln_lower = cum_lower.iter().map(|v| v.ln()).collect();
        let ln_upper = cum_upper.iter().map(|v| v.ln()).collect();
        let ln_phi = z.iter().map(|&t| family.ln_weight(a, t) - ln_m).collect();
        Ok(CoupledSampler {
            family,
            a,
            ln_m,
            z,
            cum_lower,
            cum_upper,
            ln_lower,
            ln_upper,
            ln_phi,
        })
    }

    pub fn family(&self) -> MellinFamily {
        self.family
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn knots(&self) -> usize {
        self.z.len()
    }

    fn ln_density_z(&self, z: f64) -> f64 {
        self.family.ln_weight(self.a, z) - self.ln_m
    }

    /// (F, 1 - F) at coordinate z, each computed without cancellation.
    pub fn cdf_pair_z(&self, z: f64) -> Result<(f64, f64)> {
        let n = self.z.len();
        let mut phi = |t: f64| (self.family.ln_weight(self.a, t) - self.ln_m).exp();
        if z <= self.z[0] || z >= self.z[n - 1] {
            let tail = if z <= self.z[0] {
                Tail::Lower
            } else {
                Tail::Upper
            };
            let mass = self
                .family
                .tail_integral(self.a, z, tail, self.ln_m, |_| 1.0, T_TOL)?;
            return Ok(if tail == Tail::Lower {
                (mass, 1.0 - mass)
            } else {
                (1.0 - mass, mass)
            });
        }
        let i = self.cell_of_z(z);
        let left = gk15(&mut phi, self.z[i], z).0;
        let right = gk15(&mut phi, z, self.z[i + 1]).0;
        Ok((self.cum_lower[i] + left, self.cum_upper[i + 1] + right))
    }

    fn cell_of_z(&self, z: f64) -> usize {
        let step = self.z[1] - self.z[0];
        (((z - self.z[0]) / step).floor() as usize).min(self.z.len() - 2)
    }

    /// F^f(a, x).
    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(self.cdf_pair(x)?.0)
    }

    /// (F^f(a, x), 1 - F^f(a, x)).
    pub fn cdf_pair(&self, x: f64) -> Result<(f64, f64)> {
        if !self.family.in_support(x) {
            let (lo, hi) = self.family.support();
            return Err(Error::Range {
                what: "cdf argument",
                value: x,
                range: format!("({lo}, {hi})"),
            });
        }
        self.cdf_pair_z(self.family.z_of_x(x))
    }

    // Hermite interpolation of z against a monotone log-mass column.
    fn hermite(&self, logs: &[f64], y: f64, lower: bool) -> f64 {
        let n = self.z.len();
        // index i with logs[i] <= y <= logs[i+1] (lower) or logs[i] >= y >= logs[i+1] (upper)
        let i = if lower {
            logs.partition_point(|&v| v <= y).clamp(1, n - 1) - 1
        } else {
            logs.partition_point(|&v| v >= y).clamp(1, n - 1) - 1
        };
        let (y0, y1) = (logs[i], logs[i + 1]);
        let (z0, z1) = (self.z[i], self.z[i + 1]);
        let dy = y1 - y0;
        if dy == 0.0 || !dy.is_finite() {
            return z0;
        }
        // dz/d(ln mass) = mass / φ, negated on the upper column
        let sign = if lower { 1.0 } else { -1.0 };
        let d0 = sign * (logs[i] - self.ln_phi[i]).exp();
        let d1 = sign * (logs[i + 1] - self.ln_phi[i + 1]).exp();
        let t = ((y - y0) / dy).clamp(0.0, 1.0);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * z0 + h10 * dy * d0 + h01 * z1 + h11 * dy * d1
    }

    fn check_probability(p: f64) -> Result<()> {
        if p > 0.0 && p < 1.0 {
            Ok(())
        } else {
            Err(Error::Range {
                what: "probability",
                value: p,
                range: "(0, 1)".into(),
            })
        }
    }

    /// z-coordinate with lower mass p, table interpolation only.
    pub fn quantile_z_fast(&self, p: f64) -> f64 {
        if p <= 0.5 {
            self.hermite(&self.ln_lower, p.ln(), true)
        } else {
            self.hermite(&self.ln_upper, (1.0 - p).ln(), false)
        }
    }

    /// z-coordinate with lower mass p (p ≤ 1/2) or upper mass q = 1 - p,
    /// refined by Newton steps on the exact CDF.
    fn refine(&self, mut z: f64, target: f64, lower: bool) -> Result<f64> {
        let ln_target = target.ln();
        let outside = target
            < if lower {
                self.cum_lower[0]
            } else {
                self.cum_upper[self.z.len() - 1]
            };
        let steps = if outside { 60 } else { 2 };
        for _ in 0..steps {
            let (f, q) = self.cdf_pair_z(z)?;
            let mass = if lower { f } else { q };
            let sign = if lower { 1.0 } else { -1.0 };
            let dz = sign * (mass.ln() - ln_target) * (mass.ln() - self.ln_density_z(z)).exp();
            if !dz.is_finite() {
                break;
            }
            z -= dz;
            if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        Ok(z)
    }

    /// z-coordinate of H^f(a, p), accurate to a few ulps.
    pub fn quantile_z(&self, p: f64) -> Result<f64> {
        Self::check_probability(p)?;
        if p <= 0.5 {
            self.quantile_lower_z(p)
        } else {
            self.quantile_upper_z(1.0 - p)
        }
    }

    /// z with lower mass p.
    pub fn quantile_lower_z(&self, p: f64) -> Result<f64> {
        Self::check_probability(p)?;
        let guess = self.hermite(&self.ln_lower, p.ln(), true);
        self.refine(guess, p, true)
    }

    /// z with upper mass q.
    pub fn quantile_upper_z(&self, q: f64) -> Result<f64> {
        Self::check_probability(q)?;
        let guess = self.hermite(&self.ln_upper, q.ln(), false);
        self.refine(guess, q, false)
    }

    /// H^f(a, p).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        Ok(self.family.x_of_z(self.quantile_z(p)?))
    }

    /// ln H^f(a, p), table interpolation only.
    pub fn log_quantile_fast(&self, p: f64) -> f64 {
        self.family.log_x(self.quantile_z_fast(p))
    }

    /// ln H^f(a, p).
    pub fn log_quantile(&self, p: f64) -> Result<f64> {
        Ok(self.family.log_x(self.quantile_z(p)?))
    }

    /// Exact CDF by tail quadrature (no table).
    fn exact_pair_z(&self, z: f64) -> Result<(f64, f64)> {
        let fam = &self.family;
        let tail = fam.outer_tail(self.a, z);
        let mass = fam.tail_integral(self.a, z, tail, self.ln_m, |_| 1.0, T_TOL)?;
        Ok(match tail {
            Tail::Lower => (mass, 1.0 - mass),
            Tail::Upper => (1.0 - mass, mass),
        })
    }

    /// Inverse CDF by bracketed bisection on the exact CDF to 1e-12 in
    /// (relative) probability, then three Newton steps using the density.
    pub fn inverse_exact(&self, v: f64) -> Result<f64> {
        Self::check_probability(v)?;
        let lower = v <= 0.5;
        let target = if lower { v } else { 1.0 - v };
        let ln_target = target.ln();
        // g(z) increasing in z and zero at the answer
        let g = |z: f64| -> Result<f64> {
            let (f, q) = self.exact_pair_z(z)?;
            Ok(if lower {
                f.ln() - ln_target
            } else {
                ln_target - q.ln()
            })
        };
        let width = self.family.width_z(self.a);
        let mode = self.family.mode_z(self.a);
        let (mut lo, mut hi) = (mode - width, mode + width);
        let mut step = width;
        while g(lo)? > 0.0 {
            step *= 2.0;
            lo -= step;
        }
        step = width;
        while g(hi)? < 0.0 {
            step *= 2.0;
            hi += step;
        }
        let mut z = 0.5 * (lo + hi);
        for _ in 0..400 {
            z = 0.5 * (lo + hi);
            let gz = g(z)?;
            if gz.abs() <= 1e-12 || hi - lo <= 1e-15 * z.abs().max(1.0) {
                break;
            }
            if gz > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
        }
        for _ in 0..3 {
            let (f, q) = self.exact_pair_z(z)?;
            let mass = if lower { f } else { q };
            let sign = if lower { 1.0 } else { -1.0 };
            let dz = sign * (mass.ln() - ln_target) * (mass.ln() - self.ln_density_z(z)).exp();
            if !dz.is_finite() {
                break;
            }
            z -= dz;
        }
        Ok(self.family.x_of_z(z))
    }
}

/// CDF (v in the support) or inverse CDF (v in (0,1)) of m_f(a).
pub fn cdf_and_inverse(sampler: &CoupledSampler, mode: CdfMode, v: f64) -> Result<f64> {
    match mode {
        CdfMode::Cdf => {
            if !sampler.family.in_support(v) {
                let (lo, hi) = sampler.family.support();
                return Err(Error::Range {
                    what: "cdf argument",
                    value: v,
                    range: format!("({lo}, {hi})"),
                });
            }
            Ok(sampler.exact_pair_z(sampler.family.z_of_x(v))?.0)
        }
        CdfMode::Inverse => sampler.inverse_exact(v),
    }
}

/// h_n(a, x) as a polynomial in ψ_k(a) and ln x, built by h_{n+1} = S h_n
/// with S(h) = ∂_a h + h ln x.
#[derive(Debug, Clone, PartialEq)]
pub struct HPoly {
    pub n: usize,
    pub poly: Poly,
}

fn psi_ladder(v: Var) -> Poly {
    match v {
        Var::Psi(k) => Poly::var(Var::Psi(k + 1)),
        _ => Poly::zero(),
    }
}

impl HPoly {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > MAX_H_ORDER {
            return Err(Error::Capability {
                what: "h_n order",
                got: n,
                max: MAX_H_ORDER,
            });
        }
        Ok(HPoly {
            n,
            poly: h_polys(n).pop().unwrap(),
        })
    }

    /// Evaluates with `psi[k]` = ψ_k(a).
    pub fn eval_with(&self, psi: &[f64], log_x: f64) -> f64 {
        eval_psi_logx(&self.poly, psi, log_x)
    }

    pub fn eval(&self, family: &MellinFamily, a: f64, x: f64) -> Result<f64> {
        let psi = family.psi_vector(self.n, a)?;
        Ok(self.eval_with(&psi, x.ln()))
    }
}

/// h_1, ..., h_n.
fn h_polys(n: usize) -> Vec<Poly> {
    let mut out = Vec::with_capacity(n);
    let mut h = Poly::var(Var::Psi(0)).sub(&Poly::var(Var::LogX));
    out.push(h.clone());
    for _ in 1..n {
        h = h.derive(psi_ladder).add(&h.mul(&Poly::var(Var::LogX)));
        out.push(h.clone());
    }
    out
}

fn eval_psi_logx(p: &Poly, psi: &[f64], log_x: f64) -> f64 {
    p.eval(|v| match v {
        Var::Psi(k) => psi[k as usize],
        Var::LogX => log_x,
        _ => f64::NAN,
    })
}

/// h_n(a, x).
pub fn h_poly(family: &MellinFamily, n: usize, a: f64, x: f64) -> Result<f64> {
    if !family.in_support(x) {
        return Err(support_error(family, x));
    }
    HPoly::new(n)?.eval(family, a, x)
}

fn support_error(family: &MellinFamily, x: f64) -> Error {
    let (lo, hi) = family.support();
    Error::Range {
        what: "support point",
        value: x,
        range: format!("({lo}, {hi})"),
    }
}

/// T(h)(a, x) at coordinate z for an h with ∫ h y^{a-1} f(y) dy = 0, using the
/// tail that does not contain the mode.
fn t_mean_zero<H: FnMut(f64) -> f64>(
    family: &MellinFamily,
    a: f64,
    z: f64,
    mut h: H,
) -> Result<f64> {
    let tail = family.outer_tail(a, z);
    let v = family.tail_ratio(a, z, tail, |t| h(family.log_x(t)), T_TOL)?;
    Ok(match tail {
        Tail::Lower => v,
        Tail::Upper => -v,
    })
}

/// L^f(a, x) = T(h_1)(a, x).
pub fn l_func(family: &MellinFamily, a: f64, x: f64) -> Result<f64> {
    if !family.in_support(x) {
        return Err(support_error(family, x));
    }
    family.check_domain(a)?;
    l_func_z(family, a, family.z_of_x(x))
}

/// L^f(a, x(z)).
pub fn l_func_z(family: &MellinFamily, a: f64, z: f64) -> Result<f64> {
    let psi0 = family.psi(0, a)?;
    t_mean_zero(family, a, z, |lx| psi0 - lx)
}

/// T(h)(a, x) = (x^a f(x))^{-1} ∫_0^x h(y) y^{a-1} f(y) dy, where `h` receives ln y.
///
/// When x lies above the mode the integral is taken as total minus the upper
/// tail; a total below roundoff of ∫|h| is treated as exactly zero so that
/// mean-zero integrands keep their relative accuracy far in the tail.
pub fn t_operator<H: Fn(f64) -> f64>(family: &MellinFamily, h: H, a: f64, x: f64) -> Result<f64> {
    if !family.in_support(x) {
        return Err(support_error(family, x));
    }
    family.check_domain(a)?;
    let z = family.z_of_x(x);
    if family.outer_tail(a, z) == Tail::Lower {
        return family.tail_ratio(a, z, Tail::Lower, |t| h(family.log_x(t)), T_TOL);
    }
    let tol = Tolerance::new(0.0, 1e-13);
    let (scale, total) = family.integrate_weighted(a, |t| h(family.log_x(t)), tol)?;
    let (_, total_abs) =
        family.integrate_weighted(a, |t| h(family.log_x(t)).abs(), Tolerance::new(0.0, 1e-6))?;
    let total = if total.abs() <= 1e-12 * total_abs {
        0.0
    } else {
        total
    };
    let upper = family.tail_ratio(a, z, Tail::Upper, |t| h(family.log_x(t)), T_TOL)?;
    Ok(total * (scale - family.ln_boundary(a, z)).exp() - upper)
}

/// T(h_n)(a, x(z)) for n = 1..=count.
pub fn t_h_values(family: &MellinFamily, a: f64, z: f64, count: usize) -> Result<Vec<f64>> {
    if count > MAX_H_ORDER {
        return Err(Error::Capability {
            what: "h_n order",
            got: count,
            max: MAX_H_ORDER,
        });
    }
    let psi = family.psi_vector(count.max(1), a)?;
    h_polys(count)
        .iter()
        .map(|h| t_mean_zero(family, a, z, |lx| eval_psi_logx(h, &psi, lx)))
        .collect()
}

/// ∂̃^k L^f for k = 0..=kmax as symbolic polynomials in a, ψ_j, ln x, r and T(h_n).
#[derive(Debug, Clone)]
pub struct TildeAlgebra {
    family: MellinFamily,
    derivs: Vec<Poly>,
}

impl TildeAlgebra {
    pub fn new(family: MellinFamily, kmax: usize) -> Result<Self> {
        if kmax > MAX_TILDE_ORDER {
            return Err(Error::Capability {
                what: "tilde-derivative order",
                got: kmax,
                max: MAX_TILDE_ORDER,
            });
        }
        let hs = h_polys(kmax + 1);
        let coeffs = family.r_derivative_coefficients();
        let t1 = Poly::var(Var::T(1));
        let rule = |v: Var| -> Poly {
            match v {
                Var::A => Poly::constant(1.0),
                Var::Psi(k) => Poly::var(Var::Psi(k + 1)),
                Var::LogX => t1.clone(),
                Var::Ratio => match coeffs {
                    Some((alpha, beta)) => {
                        let rho = Poly::var(Var::Ratio);
                        rho.mul(&Poly::constant(alpha).add(&rho.scale(beta)))
                            .mul(&t1)
                    }
                    None => Poly::zero(),
                },
                Var::T(n) => {
                    let tn = Poly::var(Var::T(n));
                    let a_plus_r = Poly::var(Var::A).add(&Poly::var(Var::Ratio));
                    Poly::var(Var::T(n + 1))
                        .sub(&a_plus_r.mul(&t1).mul(&tn))
                        .sub(&Poly::var(Var::LogX).mul(&tn))
                        .add(&hs[n as usize - 1].mul(&t1))
                }
                Var::U | Var::R => Poly::zero(),
            }
        };
        let mut derivs = vec![t1.clone()];
        for _ in 0..kmax {
            let next = derivs.last().unwrap().derive(rule);
            derivs.push(next);
        }
        Ok(TildeAlgebra { family, derivs })
    }

    pub fn kmax(&self) -> usize {
        self.derivs.len() - 1
    }

    pub fn poly(&self, k: usize) -> &Poly {
        &self.derivs[k]
    }

    /// ∂̃^k L^f(a, x(z)) for k = 0..=kmax.
    pub fn values_z(&self, a: f64, z: f64) -> Result<Vec<f64>> {
        let kmax = self.kmax();
        let psi = self
            .family
            .psi_vector((kmax + 2).min(MAX_PSI_ORDER + 1), a)?;
        let t = t_h_values(&self.family, a, z, kmax + 1)?;
        let log_x = self.family.log_x(z);
        let rho = if self.family.r_derivative_coefficients().is_some() {
            self.family.r_ratio(z)
        } else {
            0.0
        };
        Ok(self
            .derivs
            .iter()
            .map(|p| {
                p.eval(|v| match v {
                    Var::A => a,
                    Var::Psi(k) => psi[k as usize],
                    Var::LogX => log_x,
                    Var::Ratio => rho,
                    Var::T(n) => t[n as usize - 1],
                    Var::U | Var::R => f64::NAN,
                })
            })
            .collect())
    }
}

/// ∂̃^k L^f(a, x) by both routes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TildeDeriv {
    pub k: usize,
    /// Symbolic recursion through T, S, r and h_n.
    pub recursion: f64,
    /// Nested finite differences of a' ↦ L^f(a', H^f(a', p)) at p = F^f(a, x).
    pub finite_difference: f64,
}

impl TildeDeriv {
    pub fn rel_discrepancy(&self) -> f64 {
        let scale = self.recursion.abs().max(self.finite_difference.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.recursion - self.finite_difference).abs() / scale
        }
    }
}

pub fn tilde_deriv_l(family: &MellinFamily, k: usize, a: f64, x: f64) -> Result<TildeDeriv> {
    if k > MAX_TILDE_ORDER {
        return Err(Error::Capability {
            what: "tilde-derivative order",
            got: k,
            max: MAX_TILDE_ORDER,
        });
    }
    if !family.in_support(x) {
        return Err(support_error(family, x));
    }
    let z = family.z_of_x(x);
    let recursion = TildeAlgebra::new(*family, k)?.values_z(a, z)?[k];
    let finite_difference = tilde_deriv_l_fd(family, k, a, z)?;
    Ok(TildeDeriv {
        k,
        recursion,
        finite_difference,
    })
}

/// Base step of the central differences for order k, before scaling by max(1, |a|).
fn fd_step(k: usize) -> f64 {
    match k {
        0 | 1 => 1e-4,
        2 => 1e-3,
        3 => 1e-2,
        _ => 2e-2,
    }
}

/// Central k-th difference with one Richardson level, shrinking the step so
/// all stencil points stay inside `(lo, hi)`.
pub(crate) fn central_derivative<G: FnMut(f64) -> Result<f64>>(
    mut g: G,
    k: usize,
    a: f64,
    step: f64,
    (lo, hi): (f64, f64),
) -> Result<f64> {
    if k == 0 {
        return g(a);
    }
    let reach = k.div_ceil(2) as f64;
    let mut h = step;
    while a - reach * h <= lo || a + reach * h >= hi {
        h *= 0.5;
    }
    let mut diff = |h: f64| -> Result<f64> {
        Ok(match k {
            1 => (g(a + h)? - g(a - h)?) / (2.0 * h),
            2 => (g(a + h)? - 2.0 * g(a)? + g(a - h)?) / (h * h),
            3 => {
                (g(a + 2.0 * h)? - 2.0 * g(a + h)? + 2.0 * g(a - h)? - g(a - 2.0 * h)?)
                    / (2.0 * h * h * h)
            }
            4 => {
                (g(a + 2.0 * h)? - 4.0 * g(a + h)? + 6.0 * g(a)? - 4.0 * g(a - h)?
                    + g(a - 2.0 * h)?)
                    / (h * h * h * h)
            }
            _ => {
                return Err(Error::Capability {
                    what: "finite-difference order",
                    got: k,
                    max: 4,
                })
            }
        })
    };
    let coarse = diff(h)?;
    let fine = diff(0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

fn tilde_deriv_l_fd(family: &MellinFamily, k: usize, a: f64, z: f64) -> Result<f64> {
    let here = CoupledSampler::new(*family, a)?;
    let (f, q) = here.cdf_pair_z(z)?;
    let lower = f <= 0.5;
    let g = |ap: f64| -> Result<f64> {
        let s = CoupledSampler::new(*family, ap)?;
        let zp = if lower {
            s.quantile_lower_z(f)?
        } else {
            s.quantile_upper_z(q)?
        };
        l_func_z(family, ap, zp)
    };
    central_derivative(g, k, a, fd_step(k) * a.abs().max(1.0), family.domain())
}

/// One grid point of a growth-bound scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub a: f64,
    pub log_x: f64,
    pub value: f64,
    pub ratio: f64,
}

/// |∂̃^k L^f(a, x)| / (1 + |ln x|^{k+1}) over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub k: usize,
    pub rows: Vec<BoundRow>,
    pub max_ratio: f64,
}

impl BoundReport {
    /// Largest ratio among rows with ln x in `[lo, hi]`.
    pub fn max_ratio_within(&self, lo: f64, hi: f64) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.log_x >= lo && r.log_x <= hi)
            .map(|r| r.ratio)
            .fold(0.0, f64::max)
    }
}

pub fn bound_check(
    family: &MellinFamily,
    k: usize,
    a_grid: &[f64],
    log_x_grid: &[f64],
) -> Result<BoundReport> {
    let algebra = TildeAlgebra::new(*family, k)?;
    let mut rows = Vec::with_capacity(a_grid.len() * log_x_grid.len());
    for &a in a_grid {
        family.check_domain(a)?;
        for &lx in log_x_grid {
            let z = family.z_of_log_x(lx);
            let value = algebra.values_z(a, z)?[k];
            let ratio = value.abs() / (1.0 + lx.abs().powi(k as i32 + 1));
            rows.push(BoundRow {
                a,
                log_x: lx,
                value,
                ratio,
            });
        }
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(BoundReport { k, rows, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mellin::KernelKind;
    use approx::assert_relative_eq;

    fn fam(kind: KernelKind, b: f64) -> MellinFamily {
        MellinFamily::new(kind, b).unwrap()
    }

    #[test]
    fn h2_matches_one_application_of_s() {
        let h = HPoly::new(2).unwrap();
        let psi = [0.3, 1.7];
        let lx = -0.8;
        assert_relative_eq!(
            h.eval_with(&psi, lx),
            1.7 + (0.3 - lx) * lx,
            max_relative = 1e-15
        );
        assert!(matches!(HPoly::new(9), Err(Error::Capability { .. })));
        assert_eq!(HPoly::new(5).unwrap().poly.degree_in(Var::LogX), 5);
    }

    #[test]
    fn exp_decay_inverse_is_log_two() {
        let s = CoupledSampler::new(fam(KernelKind::ExpDecay, 1.0), 1.0).unwrap();
        assert_relative_eq!(
            cdf_and_inverse(&s, CdfMode::Inverse, 0.5).unwrap(),
            2f64.ln(),
            max_relative = 1e-12
        );
        assert_relative_eq!(s.quantile(0.5).unwrap(), 2f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(
            s.quantile(0.999).unwrap(),
            -(0.001f64.ln()),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            s.quantile(1e-9).unwrap(),
            -(-1e-9f64).ln_1p(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn uniform_cdf() {
        let s = CoupledSampler::new(fam(KernelKind::BetaKernel, 1.0), 1.0).unwrap();
        assert_relative_eq!(
            cdf_and_inverse(&s, CdfMode::Cdf, 0.25).unwrap(),
            0.25,
            max_relative = 1e-13
        );
        assert_relative_eq!(s.cdf(0.25).unwrap(), 0.25, max_relative = 1e-13);
        assert!(matches!(
            cdf_and_inverse(&s, CdfMode::Cdf, 1.5),
            Err(Error::Range { .. })
        ));
        assert!(matches!(
            cdf_and_inverse(&s, CdfMode::Inverse, 1.0),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn l_func_reference_value() {
        // mpmath: e * ∫_0^1 (-γ - ln y) e^{-y} dy
        let v = l_func(&fam(KernelKind::ExpDecay, 1.0), 1.0, 1.0).unwrap();
        assert_relative_eq!(v, 1.1735630272247269349, max_relative = 1e-12);
    }

    #[test]
    fn t_of_constant_is_scaled_cdf() {
        let f = fam(KernelKind::BetaPrimeKernel, 2.0);
        let a = -0.7;
        let s = CoupledSampler::new(f, a).unwrap();
        for x in [0.05, 0.6, 3.0, 40.0] {
            let t = t_operator(&f, |_| 1.0, a, x).unwrap();
            let z = f.z_of_x(x);
            let want = s.cdf(x).unwrap() * (f.ln_mellin(a).unwrap() - f.ln_boundary(a, z)).exp();
            assert_relative_eq!(t, want, max_relative = 1e-11);
            assert_eq!(t_operator(&f, |_| 0.0, a, x).unwrap(), 0.0);
        }
    }

    #[test]
    fn t_of_h1_is_l() {
        let f = fam(KernelKind::BetaInvKernel, 3.0);
        let a = -1.5;
        let psi0 = f.psi(0, a).unwrap();
        for x in [1.01, 1.7, 2.5, 30.0] {
            let t = t_operator(&f, |lx| psi0 - lx, a, x).unwrap();
            assert_relative_eq!(t, l_func(&f, a, x).unwrap(), max_relative = 1e-8);
        }
    }

    #[test]
    fn tilde_k0_is_l() {
        let f = fam(KernelKind::ExpDecay, 1.3);
        let d = tilde_deriv_l(&f, 0, 2.0, 0.9).unwrap();
        assert_relative_eq!(
            d.recursion,
            l_func(&f, 2.0, 0.9).unwrap(),
            max_relative = 1e-14
        );
        assert!(d.rel_discrepancy() < 1e-12);
        assert!(matches!(
            tilde_deriv_l(&f, 5, 2.0, 0.9),
            Err(Error::Capability { .. })
        ));
    }

    #[test]
    fn beta_prime_ratio_is_bounded_by_b() {
        let f = fam(KernelKind::BetaPrimeKernel, 2.5);
        for z in [-40.0, -3.0, 0.0, 5.0, 40.0] {
            assert!(f.r_ratio(z).abs() <= 2.5);
        }
    }
}
