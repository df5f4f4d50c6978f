//! The polynomials p_n(t, a; r): p_0 = 1 and
//! p_n = ∂_a p_{n-1} + p_{n-1} (t - r ψ_0(a)).
//!
//! They are held in the centered variable u = t - r ψ_0(a), where
//! ∂_a u = -r ψ_1(a), so every term has the shape c(ψ_1, ψ_2, ...) u^i r^j.

use serde::{Deserialize, Serialize};

use crate::coupling::{central_derivative, CoupledSampler};
use crate::error::{Error, Result};
use crate::mellin::MellinFamily;
use crate::quadrature::Tolerance;
use crate::rng::{open_uniform, stream, Role};
use crate::stats::mean_and_stderr;
use crate::symbolic::{Monomial, Poly, Var};

pub const MAX_P_ORDER: usize = 10;

fn derivation(v: Var) -> Poly {
    match v {
        Var::U => Poly::var(Var::R).mul(&Poly::var(Var::Psi(1))).scale(-1.0),
        Var::Psi(k) => Poly::var(Var::Psi(k + 1)),
        _ => Poly::zero(),
    }
}

/// p_0, ..., p_n as polynomials in u, r and ψ_k.
pub fn p_polys(n: usize) -> Result<Vec<Poly>> {
    if n > MAX_P_ORDER {
        return Err(Error::Capability {
            what: "p_n order",
            got: n,
            max: MAX_P_ORDER,
        });
    }
    let u = Poly::var(Var::U);
    let mut out = vec![Poly::constant(1.0)];
    for _ in 0..n {
        let prev = out.last().unwrap();
        out.push(prev.derive(derivation).add(&prev.mul(&u)));
    }
    Ok(out)
}

/// One term c · u^{u_power} r^{r_power}; `coefficient` is a product of ψ_k(a)
/// (k ≥ 1) with a rational prefactor.
#[derive(Debug, Clone, PartialEq)]
pub struct PnTerm {
    pub coefficient: Poly,
    pub u_power: u32,
    pub r_power: u32,
}

#[derive(Debug, Clone)]
pub struct PnPoly {
    pub family: MellinFamily,
    pub a: f64,
    pub r: usize,
    pub n: usize,
    pub poly: Poly,
    psi: Vec<f64>,
}

/// p_n(·, a; r) for the family.
pub fn build_p(family: MellinFamily, n: usize, a: f64, r: usize) -> Result<PnPoly> {
    family.check_domain(a)?;
    if r == 0 {
        return Err(Error::Validation("r must be positive".into()));
    }
    let poly = p_polys(n)?.pop().unwrap();
    let psi = family.psi_vector(n.max(1), a)?;
    Ok(PnPoly {
        family,
        a,
        r,
        n,
        poly,
        psi,
    })
}

impl PnPoly {
    pub fn terms(&self) -> Vec<PnTerm> {
        self.poly
            .terms()
            .map(|(m, c)| {
                let power = |v: Var| m.iter().find(|(w, _)| *w == v).map_or(0, |&(_, e)| e);
                let rest: Monomial = m
                    .iter()
                    .copied()
                    .filter(|(v, _)| !matches!(v, Var::U | Var::R))
                    .collect();
                PnTerm {
                    coefficient: Poly::monomial(rest, c),
                    u_power: power(Var::U),
                    r_power: power(Var::R),
                }
            })
            .collect()
    }

    /// The centering r ψ_0(a).
    pub fn center(&self) -> f64 {
        self.r as f64 * self.psi[0]
    }

    pub fn eval_centered(&self, u: f64) -> f64 {
        let r = self.r as f64;
        self.poly.eval(|v| match v {
            Var::U => u,
            Var::R => r,
            Var::Psi(k) => self.psi[k as usize],
            _ => f64::NAN,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_centered(t - self.center())
    }

    /// Checks the leading term u^n and a_j/2 + b_j ≤ n/2 on every term.
    pub fn check_structure(&self) -> Result<()> {
        let mut leading = 0.0;
        for term in self.terms() {
            if term.u_power + 2 * term.r_power > self.n as u32 {
                return Err(Error::Validation(format!(
                    "term u^{} r^{} exceeds order {}",
                    term.u_power, term.r_power, self.n
                )));
            }
            if term.u_power == self.n as u32 {
                leading += term.coefficient.eval(|_| f64::NAN);
            }
        }
        if leading != 1.0 {
            return Err(Error::Validation(format!(
                "leading coefficient {leading}, expected 1"
            )));
        }
        Ok(())
    }
}

/// e^{λ s} (M_f(a) / M_f(a + λ))^r.
pub fn generating_function(
    family: &MellinFamily,
    a: f64,
    r: usize,
    s: f64,
    lambda: f64,
) -> Result<f64> {
    let ln_ratio = family.ln_mellin(a)? - family.ln_mellin(a + lambda)?;
    Ok((lambda * s + r as f64 * ln_ratio).exp())
}

/// |G(λ) - Σ_{k ≤ K} λ^k p_k(s, a; r) / k!|.
pub fn generating_check(
    family: &MellinFamily,
    a: f64,
    r: usize,
    s: f64,
    lambda: f64,
    k_max: usize,
) -> Result<f64> {
    family.check_domain(a)?;
    family.check_domain(a + lambda)?;
    let g = generating_function(family, a, r, s, lambda)?;
    let polys = p_polys(k_max)?;
    let psi = family.psi_vector(k_max.max(1), a)?;
    let u = s - r as f64 * psi[0];
    let mut sum = 0.0;
    let mut weight = 1.0;
    for (k, p) in polys.iter().enumerate() {
        if k > 0 {
            weight *= lambda / k as f64;
        }
        sum += weight
            * p.eval(|v| match v {
                Var::U => u,
                Var::R => r as f64,
                Var::Psi(j) => psi[j as usize],
                _ => f64::NAN,
            });
    }
    Ok((g - sum).abs())
}

/// ∂^k_λ G(λ) at λ = 0 by central differences (k ≤ 4).
pub fn generating_derivative(
    family: &MellinFamily,
    a: f64,
    r: usize,
    s: f64,
    k: usize,
) -> Result<f64> {
    family.check_domain(a)?;
    let (lo, hi) = family.domain();
    let step = match k {
        0 | 1 => 1e-4,
        2 => 1e-3,
        3 => 1e-2,
        _ => 2e-2,
    };
    central_derivative(
        |l| generating_function(family, a, r, s, l),
        k,
        0.0,
        step,
        (lo - a, hi - a),
    )
}

const MEAN_ZERO_TOL: Tolerance = Tolerance {
    abs: 0.0,
    rel: 1e-13,
    max_intervals: 4000,
};

/// E[g(ln X_1, ln X_2)] for X_1, X_2 i.i.d. m_f(a), by nested quadrature.
pub fn expect_pair<G: FnMut(f64, f64) -> f64>(
    family: &MellinFamily,
    a: f64,
    mut g: G,
) -> Result<f64> {
    let (_, norm) = family.integrate_weighted(a, |_| 1.0, MEAN_ZERO_TOL)?;
    let mut failure = None;
    let (_, outer) = family.integrate_weighted(
        a,
        |z1| {
            let y1 = family.log_x(z1);
            match family.integrate_weighted(a, |z2| g(y1, family.log_x(z2)), MEAN_ZERO_TOL) {
                Ok((_, v)) => v / norm,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        MEAN_ZERO_TOL,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(outer / norm),
    }
}

/// E[p_n(S_r, a; r)] for r ∈ {1, 2}, S_r a sum of r i.i.d. ln X, by quadrature.
pub fn mean_zero_check(family: &MellinFamily, n: usize, a: f64, r: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Validation("n must be positive".into()));
    }
    let p = build_p(*family, n, a, r)?;
    match r {
        1 => family.expect_z(a, |z| p.eval(family.log_x(z)), MEAN_ZERO_TOL),
        2 => expect_pair(family, a, |y1, y2| p.eval(y1 + y2)),
        _ => Err(Error::Capability {
            what: "quadrature convolution depth",
            got: r,
            max: 2,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloMean {
    pub mean: f64,
    pub stderr: f64,
    pub reps: usize,
}

/// Draws `reps` values of S_r and applies `g` to each.
pub fn sample_sums<G: FnMut(f64) -> f64>(
    family: &MellinFamily,
    a: f64,
    r: usize,
    reps: usize,
    seed: u64,
    mut g: G,
) -> Result<Vec<f64>> {
    let sampler = CoupledSampler::new(*family, a)?;
    let mut rng = stream(seed, 0, Role::Aux);
    Ok((0..reps)
        .map(|_| {
            g((0..r)
                .map(|_| sampler.log_quantile_fast(open_uniform(&mut rng)))
                .sum())
        })
        .collect())
}

/// Monte Carlo route for E[p_n(S_r, a; r)], any r.
pub fn mean_zero_mc(
    family: &MellinFamily,
    n: usize,
    a: f64,
    r: usize,
    reps: usize,
    seed: u64,
) -> Result<MonteCarloMean> {
    let p = build_p(*family, n, a, r)?;
    let values = sample_sums(family, a, r, reps, seed, |s| p.eval(s))?;
    let (mean, stderr) = mean_and_stderr(&values);
    Ok(MonteCarloMean { mean, stderr, reps })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IbpLemmaCheck {
    pub n: usize,
    /// ∂^n_a E^a[(ln X_1)^2] by central differences of quadrature values.
    pub derivative: f64,
    /// E^a[(ln X_1)^2 p_n(ln X_1 + ln X_2, a; 2)] by nested quadrature.
    pub weighted: f64,
    pub rel_discrepancy: f64,
}

/// Single-site integration by parts with A = (ln X_1)^2 and r = 2.
pub fn ibp_lemma_check(family: &MellinFamily, n: usize, a: f64) -> Result<IbpLemmaCheck> {
    if !(1..=2).contains(&n) {
        return Err(Error::Capability {
            what: "integration-by-parts order",
            got: n,
            max: 2,
        });
    }
    let second_moment = |ap: f64| -> Result<f64> {
        family.expect_z(ap, |z| family.log_x(z).powi(2), MEAN_ZERO_TOL)
    };
    let step = if n == 1 { 1e-3 } else { 1e-2 } * a.abs().max(1.0);
    let derivative = central_derivative(second_moment, n, a, step, family.domain())?;
    let p = build_p(*family, n, a, 2)?;
    let weighted = expect_pair(family, a, |y1, y2| y1 * y1 * p.eval(y1 + y2))?;
    let scale = derivative.abs().max(weighted.abs());
    let rel = if scale == 0.0 {
        0.0
    } else {
        (derivative - weighted).abs() / scale
    };
    Ok(IbpLemmaCheck {
        n,
        derivative,
        weighted,
        rel_discrepancy: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mellin::KernelKind;
    use approx::assert_relative_eq;

    #[test]
    fn low_orders_by_hand() {
        let f = MellinFamily::new(KernelKind::ExpDecay, 1.0).unwrap();
        let p0 = build_p(f, 0, 2.0, 3).unwrap();
        assert_eq!(p0.eval(0.7), 1.0);
        let p1 = build_p(f, 1, 2.0, 3).unwrap();
        let c = 3.0 * f.psi(0, 2.0).unwrap();
        assert_relative_eq!(p1.eval(0.7), 0.7 - c, max_relative = 1e-15);
        let p2 = build_p(f, 2, 2.0, 3).unwrap();
        let want = (0.7 - c).powi(2) - 3.0 * f.psi(1, 2.0).unwrap();
        assert_relative_eq!(p2.eval(0.7), want, max_relative = 1e-14);
    }

    #[test]
    fn third_order_has_a_sub_leading_r_term() {
        let polys = p_polys(3).unwrap();
        let r_psi2: Monomial = vec![(Var::Psi(2), 1), (Var::R, 1)];
        assert_eq!(polys[3].coefficient(&r_psi2), -1.0);
        let u_r_psi1: Monomial = vec![(Var::Psi(1), 1), (Var::U, 1), (Var::R, 1)];
        assert_eq!(polys[3].coefficient(&u_r_psi1), -3.0);
        assert_eq!(polys[3].coefficient(&vec![(Var::U, 3)]), 1.0);
    }

    #[test]
    fn order_cap() {
        assert!(matches!(p_polys(11), Err(Error::Capability { .. })));
        let f = MellinFamily::new(KernelKind::BetaKernel, 2.0).unwrap();
        assert!(build_p(f, 10, 1.0, 5).unwrap().check_structure().is_ok());
    }

    #[test]
    fn generating_residual_vanishes_at_zero() {
        let f = MellinFamily::new(KernelKind::ExpDecay, 1.0).unwrap();
        assert_eq!(generating_check(&f, 2.0, 1, 0.5, 0.0, 6).unwrap(), 0.0);
        assert!(matches!(
            generating_check(&f, 0.5, 1, 0.5, -1.0, 6),
            Err(Error::Domain { .. })
        ));
    }
}
