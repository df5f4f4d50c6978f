//! The five Mellin kernels, their closed-form transforms, cumulant
//! functions ψ_k and densities, plus the integration coordinate each
//! support is mapped to.
//!
//! Closed forms (b > 0):
//!
//! | kernel f(x)                 | M_f(a)          | domain    | support |
//! |-----------------------------|-----------------|-----------|---------|
//! | e^{-bx}                     | Γ(a) b^{-a}     | (0, ∞)    | (0, ∞)  |
//! | e^{-b/x}                    | Γ(-a) b^{a}     | (-∞, 0)   | (0, ∞)  |
//! | (1-x)^{b-1} on (0,1)        | B(a, b)         | (0, ∞)    | (0, 1)  |
//! | (1-1/x)^{b-1} on (1,∞)      | B(-a, b)        | (-∞, 0)   | (1, ∞)  |
//! | (x/(1+x))^b                 | B(a+b, -a)      | (-b, 0)   | (0, ∞)  |
//!
//! The second and fourth rows follow from the first and third by y = 1/x;
//! the last from ∫ x^{a+b-1}(1+x)^{-b} dx = B(a+b, -a).
//!
//! Every support is mapped onto the real line by a coordinate z: `z = ln x`
//! on (0, ∞), `z = logit x` on (0, 1) and `z = ln(x - 1)` on (1, ∞). In z the
//! weight `x^{a-1} f(x) dx/dz` is smooth and log-concave with exponential
//! tails, which is what the quadrature in this crate integrates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_line, integrate_tail, Tail, Tolerance};
use crate::special::{ln_gamma, polygamma};

/// Highest cumulant order accepted by [`MellinFamily::psi`].
pub const MAX_PSI_ORDER: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    /// f(x) = e^{-bx}: gamma laws.
    ExpDecay,
    /// f(x) = e^{-b/x}: inverse-gamma laws.
    ExpDecayInv,
    /// f(x) = (1-x)^{b-1} on (0,1): beta laws.
    BetaKernel,
    /// f(x) = (1-1/x)^{b-1} on (1,∞): inverse-beta laws.
    BetaInvKernel,
    /// f(x) = (x/(1+x))^b: shifted inverse-beta (beta-prime type) laws.
    BetaPrimeKernel,
}

impl KernelKind {
    pub const ALL: [KernelKind; 5] = [
        KernelKind::ExpDecay,
        KernelKind::ExpDecayInv,
        KernelKind::BetaKernel,
        KernelKind::BetaInvKernel,
        KernelKind::BetaPrimeKernel,
    ];
}

/// A kernel f together with its shape parameter b.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MellinFamily {
    pub kind: KernelKind,
    pub b: f64,
}

#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl MellinFamily {
    pub fn new(kind: KernelKind, b: f64) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::Validation(format!(
                "kernel shape b must be positive and finite, got {b}"
            )));
        }
        Ok(MellinFamily { kind, b })
    }

    /// Open interval of admissible Mellin parameters.
    pub fn domain(&self) -> (f64, f64) {
        match self.kind {
            KernelKind::ExpDecay | KernelKind::BetaKernel => (0.0, f64::INFINITY),
            KernelKind::ExpDecayInv | KernelKind::BetaInvKernel => (f64::NEG_INFINITY, 0.0),
            KernelKind::BetaPrimeKernel => (-self.b, 0.0),
        }
    }

    /// Open support of f.
    pub fn support(&self) -> (f64, f64) {
        match self.kind {
            KernelKind::BetaKernel => (0.0, 1.0),
            KernelKind::BetaInvKernel => (1.0, f64::INFINITY),
            _ => (0.0, f64::INFINITY),
        }
    }

    pub fn check_domain(&self, a: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        if a > lo && a < hi {
            Ok(())
        } else {
            Err(Error::Domain { a, lo, hi })
        }
    }

    pub fn in_support(&self, x: f64) -> bool {
        let (lo, hi) = self.support();
        x > lo && x < hi
    }

    /// ln M_f(a).
    pub fn ln_mellin(&self, a: f64) -> Result<f64> {
        self.check_domain(a)?;
        let b = self.b;
        Ok(match self.kind {
            KernelKind::ExpDecay => ln_gamma(a) - a * b.ln(),
            KernelKind::ExpDecayInv => ln_gamma(-a) + a * b.ln(),
            KernelKind::BetaKernel => ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b),
            KernelKind::BetaInvKernel => ln_gamma(-a) + ln_gamma(b) - ln_gamma(b - a),
            KernelKind::BetaPrimeKernel => ln_gamma(a + b) + ln_gamma(-a) - ln_gamma(b),
        })
    }

    /// M_f(a) = ∫ x^{a-1} f(x) dx.
    pub fn mellin_transform(&self, a: f64) -> Result<f64> {
        self.ln_mellin(a).map(f64::exp)
    }

    /// ψ_k(a) = d^{k+1}/da^{k+1} ln M_f(a), the k-th cumulant of ln X for X ~ m_f(a).
    pub fn psi(&self, k: usize, a: f64) -> Result<f64> {
        if k > MAX_PSI_ORDER {
            return Err(Error::Capability {
                what: "psi order",
                got: k,
                max: MAX_PSI_ORDER,
            });
        }
        self.check_domain(a)?;
        let b = self.b;
        // d^{k+1}/da^{k+1} ln Γ(-a) = (-1)^{k+1} ψ^{(k)}(-a)
        let flip = if k % 2 == 0 { -1.0 } else { 1.0 };
        let log_b = if k == 0 { b.ln() } else { 0.0 };
        Ok(match self.kind {
            KernelKind::ExpDecay => polygamma(k, a) - log_b,
            KernelKind::ExpDecayInv => flip * polygamma(k, -a) + log_b,
            KernelKind::BetaKernel => polygamma(k, a) - polygamma(k, a + b),
            KernelKind::BetaInvKernel => flip * (polygamma(k, -a) - polygamma(k, b - a)),
            KernelKind::BetaPrimeKernel => polygamma(k, a + b) + flip * polygamma(k, -a),
        })
    }

    /// ψ_0(a), ..., ψ_{n-1}(a).
    pub fn psi_vector(&self, n: usize, a: f64) -> Result<Vec<f64>> {
        (0..n).map(|k| self.psi(k, a)).collect()
    }

    /// Density ρ_{f,a}(x) = M_f(a)^{-1} x^{a-1} f(x); zero off the support.
    pub fn density(&self, a: f64, x: f64) -> Result<f64> {
        let ln_m = self.ln_mellin(a)?;
        if !self.in_support(x) {
            return Ok(0.0);
        }
        let z = self.z_of_x(x);
        Ok(((a - 1.0) * x.ln() + self.ln_kernel(z) - ln_m).exp())
    }

    /// E[(ln X)^k] for X ~ m_f(a), from the cumulants ψ_0, ..., ψ_{k-1}.
    pub fn log_moment(&self, a: f64, k: usize) -> Result<f64> {
        self.check_domain(a)?;
        if k > MAX_PSI_ORDER + 1 {
            return Err(Error::Capability {
                what: "log-moment order",
                got: k,
                max: MAX_PSI_ORDER + 1,
            });
        }
        let kappa = self.psi_vector(k, a)?;
        Ok(moments_from_cumulants(&kappa)[k])
    }

    // ---- integration coordinate --------------------------------------

    /// z-coordinate of a support point (NaN off the support).
    pub fn z_of_x(&self, x: f64) -> f64 {
        if !self.in_support(x) {
            return f64::NAN;
        }
        match self.kind {
            KernelKind::BetaKernel => (x / (1.0 - x)).ln(),
            KernelKind::BetaInvKernel => (x - 1.0).ln(),
            _ => x.ln(),
        }
    }

    /// z-coordinate from ln x, accurate when x is close to a finite support edge.
    pub fn z_of_log_x(&self, log_x: f64) -> f64 {
        match self.kind {
            KernelKind::BetaKernel => log_x - (-log_x.exp_m1()).ln(),
            KernelKind::BetaInvKernel => log_x.exp_m1().ln(),
            _ => log_x,
        }
    }

    /// ln x at coordinate z.
    #[inline]
    pub fn log_x(&self, z: f64) -> f64 {
        match self.kind {
            KernelKind::BetaKernel => -softplus(-z),
            KernelKind::BetaInvKernel => softplus(z),
            _ => z,
        }
    }

    #[inline]
    pub fn x_of_z(&self, z: f64) -> f64 {
        match self.kind {
            KernelKind::BetaKernel => 1.0 / (1.0 + (-z).exp()),
            KernelKind::BetaInvKernel => 1.0 + z.exp(),
            _ => z.exp(),
        }
    }

    /// ln f(x) at coordinate z.
    #[inline]
    pub fn ln_kernel(&self, z: f64) -> f64 {
        let b = self.b;
        match self.kind {
            KernelKind::ExpDecay => -b * z.exp(),
            KernelKind::ExpDecayInv => -b * (-z).exp(),
            KernelKind::BetaKernel => -(b - 1.0) * softplus(z),
            KernelKind::BetaInvKernel => (b - 1.0) * (z - softplus(z)),
            KernelKind::BetaPrimeKernel => b * (z - softplus(z)),
        }
    }

    /// ln of the unnormalised z-space weight x^{a-1} f(x) dx/dz.
    #[inline]
    pub fn ln_weight(&self, a: f64, z: f64) -> f64 {
        let b = self.b;
        match self.kind {
            KernelKind::ExpDecay => a * z - b * z.exp(),
            KernelKind::ExpDecayInv => a * z - b * (-z).exp(),
            KernelKind::BetaKernel => -a * softplus(-z) - b * softplus(z),
            KernelKind::BetaInvKernel => (a - b) * softplus(z) + b * z,
            KernelKind::BetaPrimeKernel => (a + b) * z - b * softplus(z),
        }
    }

    /// ln(x^a f(x)): the normaliser appearing in F-type ratios such as L^f.
    #[inline]
    pub fn ln_boundary(&self, a: f64, z: f64) -> f64 {
        a * self.log_x(z) + self.ln_kernel(z)
    }

    /// r(x) = x f'(x) / f(x) at coordinate z.
    #[inline]
    pub fn r_ratio(&self, z: f64) -> f64 {
        let b = self.b;
        match self.kind {
            KernelKind::ExpDecay => -b * z.exp(),
            KernelKind::ExpDecayInv => b * (-z).exp(),
            // x/(1-x) = e^z in logit coordinates
            KernelKind::BetaKernel => -(b - 1.0) * z.exp(),
            // 1/(x-1) = e^{-z}
            KernelKind::BetaInvKernel => (b - 1.0) * (-z).exp(),
            KernelKind::BetaPrimeKernel => b / (1.0 + z.exp()),
        }
    }

    /// Constants (α, β) with x r'(x) = r (α + β r); `None` when r ≡ 0.
    pub fn r_derivative_coefficients(&self) -> Option<(f64, f64)> {
        let b = self.b;
        match self.kind {
            KernelKind::ExpDecay => Some((1.0, 0.0)),
            KernelKind::ExpDecayInv => Some((-1.0, 0.0)),
            KernelKind::BetaKernel if b == 1.0 => None,
            KernelKind::BetaInvKernel if b == 1.0 => None,
            KernelKind::BetaKernel => Some((1.0, -1.0 / (b - 1.0))),
            KernelKind::BetaInvKernel => Some((-1.0, -1.0 / (b - 1.0))),
            KernelKind::BetaPrimeKernel => Some((-1.0, 1.0 / b)),
        }
    }

    /// The z at which the weight is maximal.
    pub fn mode_z(&self, a: f64) -> f64 {
        let b = self.b;
        match self.kind {
            KernelKind::ExpDecay => (a / b).ln(),
            KernelKind::ExpDecayInv => (b / -a).ln(),
            KernelKind::BetaKernel => (a / b).ln(),
            KernelKind::BetaInvKernel => (b / -a).ln(),
            KernelKind::BetaPrimeKernel => ((a + b) / -a).ln(),
        }
    }

    /// Curvature length of the weight at its mode.
    pub fn width_z(&self, a: f64) -> f64 {
        let z = self.mode_z(a);
        let h = 1e-3;
        let curv = (self.ln_weight(a, z + h) - 2.0 * self.ln_weight(a, z)
            + self.ln_weight(a, z - h))
            / (h * h);
        if curv < 0.0 {
            (-1.0 / curv).sqrt()
        } else {
            1.0
        }
    }

    /// d/dz of the log weight at z.
    pub fn ln_weight_slope(&self, a: f64, z: f64) -> f64 {
        let h = 1e-5 * z.abs().max(1.0);
        (self.ln_weight(a, z + h) - self.ln_weight(a, z - h)) / (2.0 * h)
    }

    /// Decay length to use for a tail integral anchored at z.
    pub(crate) fn tail_scale(&self, a: f64, z: f64) -> f64 {
        let width = self.width_z(a);
        let slope = self.ln_weight_slope(a, z).abs();
        if slope * width > 1.0 {
            1.0 / slope
        } else {
            width
        }
    }

    /// The tail from z that does not contain the mode.
    pub(crate) fn outer_tail(&self, a: f64, z: f64) -> Tail {
        if z <= self.mode_z(a) {
            Tail::Lower
        } else {
            Tail::Upper
        }
    }

    /// ∫ g(z) x^{a-1} f(x) dx over the full support, returned as
    /// (ln of the positive scale, integral relative to that scale), i.e. the
    /// integral equals `exp(scale) * value`.
    pub fn integrate_weighted<G: FnMut(f64) -> f64>(
        &self,
        a: f64,
        mut g: G,
        tol: Tolerance,
    ) -> Result<(f64, f64)> {
        self.check_domain(a)?;
        let mode = self.mode_z(a);
        let peak = self.ln_weight(a, mode);
        let width = self.width_z(a);
        let est = integrate_line(
            |z| {
                let w = (self.ln_weight(a, z) - peak).exp();
                if w == 0.0 {
                    0.0
                } else {
                    g(z) * w
                }
            },
            mode,
            width,
            tol,
        )?;
        Ok((peak, est.value))
    }

    /// E[g(Z)] where Z is the z-coordinate of X ~ m_f(a), normalised by
    /// quadrature (independent of the closed-form transform).
    pub fn expect_z<G: FnMut(f64) -> f64>(&self, a: f64, g: G, tol: Tolerance) -> Result<f64> {
        let (_, num) = self.integrate_weighted(a, g, tol)?;
        let (_, den) = self.integrate_weighted(a, |_| 1.0, tol)?;
        Ok(num / den)
    }

    /// ln M_f(a) by quadrature.
    pub fn ln_mellin_quadrature(&self, a: f64) -> Result<f64> {
        let (scale, value) = self.integrate_weighted(a, |_| 1.0, Tolerance::new(0.0, 1e-14))?;
        Ok(scale + value.ln())
    }

    /// ∫ over the tail of z0 of h(z) x^{a-1} f(x) dx, divided by x0^a f(x0).
    pub(crate) fn tail_ratio<G: FnMut(f64) -> f64>(
        &self,
        a: f64,
        z0: f64,
        tail: Tail,
        mut h: G,
        tol: Tolerance,
    ) -> Result<f64> {
        let b = self.b;
        // b e^{±z} is large in the far tails: integrate in dz = z - z0 and
        // subtract the exponents in closed form
        let ln_rel = |dz: f64| -> f64 {
            match self.kind {
                KernelKind::ExpDecay => a * dz - b * z0.exp() * dz.exp_m1(),
                KernelKind::ExpDecayInv => a * dz - b * (-z0).exp() * (-dz).exp_m1(),
                _ => self.ln_weight(a, z0 + dz) - self.ln_boundary(a, z0),
            }
        };
        let sign = match tail {
            Tail::Upper => 1.0,
            Tail::Lower => -1.0,
        };
        let scale = self.tail_scale(a, z0);
        let est = integrate(
            |t| {
                let s = 1.0 - t;
                let dz = sign * scale * t / s;
                let w = ln_rel(dz).exp();
                if w == 0.0 {
                    0.0
                } else {
                    h(z0 + dz) * w * scale / (s * s)
                }
            },
            0.0,
            1.0,
            tol,
        )?;
        Ok(est.value)
    }

    /// ∫ over the tail of z0 of h(z) exp(ln_weight(a, z) - reference) dz.
    pub(crate) fn tail_integral<G: FnMut(f64) -> f64>(
        &self,
        a: f64,
        z0: f64,
        tail: Tail,
        reference: f64,
        mut h: G,
        tol: Tolerance,
    ) -> Result<f64> {
        let scale = self.tail_scale(a, z0);
        let est = integrate_tail(
            |z| {
                let w = (self.ln_weight(a, z) - reference).exp();
                if w == 0.0 {
                    0.0
                } else {
                    h(z) * w
                }
            },
            z0,
            tail,
            scale,
            tol,
        )?;
        Ok(est.value)
    }
}

/// Raw moments m_0..m_n from cumulants κ_1..κ_n (`kappa[j]` holds κ_{j+1}).
pub fn moments_from_cumulants(kappa: &[f64]) -> Vec<f64> {
    let n = kappa.len();
    let mut m = vec![0.0; n + 1];
    m[0] = 1.0;
    for k in 1..=n {
        let mut binom = 1.0; // C(k-1, j-1)
        let mut acc = 0.0;
        for j in 1..=k {
            acc += binom * kappa[j - 1] * m[k - j];
            binom *= (k - j) as f64 / j as f64;
        }
        m[k] = acc;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const EULER_GAMMA: f64 = 0.57721566490153286061;
    const ZETA2: f64 = 1.6449340668482264365;

    fn fam(kind: KernelKind, b: f64) -> MellinFamily {
        MellinFamily::new(kind, b).unwrap()
    }

    #[test]
    fn transform_examples() {
        assert_relative_eq!(
            fam(KernelKind::ExpDecay, 1.0)
                .mellin_transform(3.0)
                .unwrap(),
            2.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            fam(KernelKind::BetaKernel, 1.0)
                .mellin_transform(1.0)
                .unwrap(),
            1.0,
            max_relative = 1e-14
        );
        // mpmath: ∫ x^{-2} (x/(1+x))^2 dx = 1
        assert_relative_eq!(
            fam(KernelKind::BetaPrimeKernel, 2.0)
                .mellin_transform(-1.0)
                .unwrap(),
            1.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn domain_errors_name_the_interval() {
        let f = fam(KernelKind::BetaPrimeKernel, 2.0);
        assert_eq!(
            f.mellin_transform(0.0),
            Err(Error::Domain {
                a: 0.0,
                lo: -2.0,
                hi: 0.0
            })
        );
        assert!(f.mellin_transform(-2.0).is_err());
        assert!(fam(KernelKind::ExpDecay, 1.0).psi(1, -0.5).is_err());
        assert!(fam(KernelKind::ExpDecay, 1.0).density(0.0, 1.0).is_err());
    }

    #[test]
    fn psi_examples() {
        let e = fam(KernelKind::ExpDecay, 1.0);
        assert_relative_eq!(e.psi(0, 1.0).unwrap(), -EULER_GAMMA, max_relative = 1e-14);
        assert_relative_eq!(e.psi(1, 1.0).unwrap(), ZETA2, max_relative = 1e-14);
        let inv = fam(KernelKind::ExpDecayInv, 1.0);
        assert_relative_eq!(inv.psi(1, -1.0).unwrap(), ZETA2, max_relative = 1e-14);
        assert_relative_eq!(inv.psi(0, -1.0).unwrap(), EULER_GAMMA, max_relative = 1e-14);
        assert!(matches!(
            e.psi(MAX_PSI_ORDER + 1, 1.0),
            Err(Error::Capability { .. })
        ));
    }

    #[test]
    fn density_examples() {
        assert_relative_eq!(
            fam(KernelKind::BetaKernel, 1.0).density(1.0, 0.3).unwrap(),
            1.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            fam(KernelKind::ExpDecay, 1.0).density(1.0, 2.0).unwrap(),
            (-2.0f64).exp(),
            max_relative = 1e-14
        );
        assert_eq!(
            fam(KernelKind::BetaInvKernel, 2.0)
                .density(-3.0, 0.5)
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn log_moment_examples() {
        let e = fam(KernelKind::ExpDecay, 1.0);
        for kind in KernelKind::ALL {
            let f = fam(kind, 2.5);
            let (lo, hi) = f.domain();
            let a = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0,
                _ => hi - 1.0,
            };
            assert_eq!(f.log_moment(a, 0).unwrap(), 1.0);
        }
        assert_relative_eq!(
            e.log_moment(1.0, 1).unwrap(),
            -EULER_GAMMA,
            max_relative = 1e-14
        );
        // mpmath: ∫ (ln x)^2 e^{-x} dx
        assert_relative_eq!(
            e.log_moment(1.0, 2).unwrap(),
            1.9781119906559451108,
            max_relative = 1e-14
        );
    }

    #[test]
    fn coordinates_round_trip() {
        for kind in KernelKind::ALL {
            let f = fam(kind, 1.7);
            for z in [-30.0, -3.0, -0.1, 0.0, 0.7, 4.0, 25.0] {
                let x = f.x_of_z(z);
                if !f.in_support(x) {
                    continue;
                }
                assert_relative_eq!(
                    f.z_of_log_x(f.log_x(z)),
                    z,
                    epsilon = 1e-9,
                    max_relative = 1e-9
                );
                assert_relative_eq!(f.log_x(z), x.ln(), epsilon = 1e-15, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn r_ratio_matches_numeric_log_derivative() {
        for kind in KernelKind::ALL {
            let f = fam(kind, 2.5);
            for z in [-2.0, -0.5, 0.3, 1.5] {
                let x = f.x_of_z(z);
                let h = 1e-6 * x.min(1.0);
                let ln_f = |x: f64| f.ln_kernel(f.z_of_x(x));
                let numeric = x * (ln_f(x + h) - ln_f(x - h)) / (2.0 * h);
                assert_relative_eq!(f.r_ratio(z), numeric, epsilon = 1e-7, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn r_derivative_coefficients_match_numeric_derivative() {
        for kind in KernelKind::ALL {
            let f = fam(kind, 2.5);
            let (alpha, beta) = f.r_derivative_coefficients().unwrap();
            for z in [-1.5, 0.2, 1.1] {
                let x = f.x_of_z(z);
                let h = 1e-6 * x.min(1.0);
                let r = |x: f64| f.r_ratio(f.z_of_x(x));
                let numeric = x * (r(x + h) - r(x - h)) / (2.0 * h);
                let rz = f.r_ratio(z);
                assert_relative_eq!(
                    rz * (alpha + beta * rz),
                    numeric,
                    epsilon = 1e-7,
                    max_relative = 1e-5
                );
            }
        }
        assert!(fam(KernelKind::BetaKernel, 1.0)
            .r_derivative_coefficients()
            .is_none());
    }
}
