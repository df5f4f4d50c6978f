//! Sparse multivariate polynomials with exact integer-valued coefficients,
//! used to carry the h_n, p_n and ∂̃^k L^f recursions symbolically.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;

/// Symbols that appear in the recursions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    /// The Mellin parameter a.
    A,
    /// ψ_k(a).
    Psi(u8),
    /// ln x.
    LogX,
    /// u = t - r ψ_0(a).
    U,
    /// The number r of summands.
    R,
    /// r(x) = x f'(x) / f(x).
    Ratio,
    /// T(h_n)(a, x); `T(1)` is L^f.
    T(u8),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::A => write!(f, "a"),
            Var::Psi(k) => write!(f, "psi{k}"),
            Var::LogX => write!(f, "logx"),
            Var::U => write!(f, "u"),
            Var::R => write!(f, "r"),
            Var::Ratio => write!(f, "rho"),
            Var::T(n) => write!(f, "T{n}"),
        }
    }
}

/// A monomial as a sorted list of (variable, positive exponent).
pub type Monomial = Vec<(Var, u32)>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    terms: BTreeMap<Monomial, f64>,
}

fn mono_mul(x: &Monomial, y: &Monomial) -> Monomial {
    let mut out: Monomial = Vec::with_capacity(x.len() + y.len());
    let (mut i, mut j) = (0, 0);
    while i < x.len() || j < y.len() {
        if j == y.len() || (i < x.len() && x[i].0 < y[j].0) {
            out.push(x[i]);
            i += 1;
        } else if i == x.len() || y[j].0 < x[i].0 {
            out.push(y[j]);
            j += 1;
        } else {
            out.push((x[i].0, x[i].1 + y[j].1));
            i += 1;
            j += 1;
        }
    }
    out
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: f64) -> Self {
        let mut p = Poly::zero();
        p.add_term(Vec::new(), c);
        p
    }

    pub fn var(v: Var) -> Self {
        Poly::monomial(vec![(v, 1)], 1.0)
    }

    pub fn monomial(m: Monomial, c: f64) -> Self {
        let mut m = m;
        m.retain(|&(_, e)| e > 0);
        m.sort();
        let mut p = Poly::zero();
        p.add_term(m, c);
        p
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.entry(m) {
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
            Entry::Vacant(v) => {
                v.insert(c);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out.add_term(mono_mul(m1, m2), c1 * c2);
            }
        }
        out
    }

    /// Highest exponent of `v` over all terms.
    pub fn degree_in(&self, v: Var) -> u32 {
        self.terms
            .keys()
            .map(|m| m.iter().find(|(w, _)| *w == v).map_or(0, |&(_, e)| e))
            .max()
            .unwrap_or(0)
    }

    /// Applies the derivation whose action on each variable is `rule`
    /// (product rule, chain rule on powers).
    pub fn derive<F: Fn(Var) -> Poly>(&self, rule: F) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            for (idx, &(v, e)) in m.iter().enumerate() {
                let dv = rule(v);
                if dv.is_zero() {
                    continue;
                }
                let mut rest = m.clone();
                if e == 1 {
                    rest.remove(idx);
                } else {
                    rest[idx].1 = e - 1;
                }
                let factor = Poly::monomial(rest, c * e as f64);
                out = out.add(&factor.mul(&dv));
            }
        }
        out
    }

    /// Evaluates with `value` giving each variable's numeric value.
    pub fn eval<F: Fn(Var) -> f64>(&self, value: F) -> f64 {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut t = *c;
            for &(v, e) in m {
                t *= value(v).powi(e as i32);
            }
            acc += t;
        }
        acc
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (m, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (v, e) in m {
                if *e == 1 {
                    write!(f, "*{v}")?;
                } else {
                    write!(f, "*{v}^{e}")?;
                }
            }
        }
        Ok(())
    }
}
