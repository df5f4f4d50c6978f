//! Set partitions, joint cumulants from moments, and plug-in cumulant
//! estimators with delete-1 jackknife errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_PARTITION_SIZE: usize = 8;

/// A partition of {0, ..., k-1} into blocks.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SetPartition {
    pub blocks: Vec<Vec<usize>>,
}

impl SetPartition {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Block bitmasks over positions 0..k.
    pub fn masks(&self) -> Vec<u32> {
        self.blocks
            .iter()
            .map(|b| b.iter().fold(0u32, |m, &i| m | 1 << i))
            .collect()
    }
}

/// All set partitions of a k-set, via restricted growth strings.
pub fn enumerate_partitions(k: usize) -> Result<Vec<SetPartition>> {
    if k > MAX_PARTITION_SIZE {
        return Err(Error::Capability {
            what: "set partition size",
            got: k,
            max: MAX_PARTITION_SIZE,
        });
    }
    if k == 0 {
        return Ok(vec![SetPartition { blocks: Vec::new() }]);
    }
    let mut out = Vec::new();
    let mut a = vec![0usize; k];
    loop {
        let nblocks = a.iter().max().unwrap() + 1;
        let mut blocks = vec![Vec::new(); nblocks];
        for (i, &b) in a.iter().enumerate() {
            blocks[b].push(i);
        }
        out.push(SetPartition { blocks });
        // next restricted growth string: a[i] <= 1 + max(a[0..i])
        let mut i = k - 1;
        loop {
            if i == 0 {
                return Ok(out);
            }
            let prefix_max = *a[..i].iter().max().unwrap();
            if a[i] <= prefix_max {
                a[i] += 1;
                for v in a.iter_mut().skip(i + 1) {
                    *v = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

pub fn bell(k: usize) -> u64 {
    // Bell triangle
    let mut row = vec![1u64];
    for _ in 0..k {
        let mut next = vec![*row.last().unwrap()];
        for &v in &row {
            let last = *next.last().unwrap();
            next.push(last + v);
        }
        row = next;
    }
    row[0]
}

/// Moment-to-cumulant weights for one order: (coefficient, block masks).
#[derive(Debug, Clone)]
pub struct CumulantPlan {
    pub k: usize,
    terms: Vec<(f64, Vec<u32>)>,
}

impl CumulantPlan {
    pub fn new(k: usize) -> Result<Self> {
        let parts = enumerate_partitions(k)?;
        let terms = parts
            .into_iter()
            .map(|p| {
                let q = p.len();
                let fact: f64 = (1..q).map(|v| v as f64).product();
                let sign = if q % 2 == 1 { 1.0 } else { -1.0 };
                (sign * fact, p.masks())
            })
            .collect();
        Ok(CumulantPlan { k, terms })
    }

    /// κ(X_0, ..., X_{k-1}) given `moment(mask)` = E[Π_{i ∈ mask} X_i].
    pub fn evaluate<M: FnMut(u32) -> f64>(&self, mut moment: M) -> f64 {
        self.terms
            .iter()
            .map(|(c, blocks)| c * blocks.iter().map(|&b| moment(b)).product::<f64>())
            .sum()
    }

    /// As [`evaluate`](Self::evaluate) for variables with zero mean: partitions
    /// containing a singleton contribute nothing.
    pub fn evaluate_centered<M: FnMut(u32) -> f64>(&self, mut moment: M) -> f64 {
        self.terms
            .iter()
            .filter(|(_, blocks)| self.k == 1 || blocks.iter().all(|b| b.count_ones() > 1))
            .map(|(c, blocks)| c * blocks.iter().map(|&b| moment(b)).product::<f64>())
            .sum()
    }
}

/// Joint cumulant from a moment oracle over subsets of {0..k-1}.
pub fn joint_cumulant_from_moments<M: FnMut(u32) -> f64>(k: usize, moment: M) -> Result<f64> {
    Ok(CumulantPlan::new(k)?.evaluate(moment))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CumulantEstimate {
    pub value: f64,
    pub stderr: f64,
    pub k: usize,
    pub n_samples: usize,
}

/// Columns of a sample, centered by their full-sample means, with the sums of
/// products over every subset of a chosen tuple of columns.
struct SubsetSums {
    k: usize,
    rows: Vec<Vec<f64>>,
    sums: Vec<f64>,
}

impl SubsetSums {
    fn new(columns: &[&[f64]]) -> Self {
        let k = columns.len();
        let n = columns[0].len();
        let means: Vec<f64> = columns
            .iter()
            .map(|c| c.iter().sum::<f64>() / n as f64)
            .collect();
        let mut sums = vec![0.0; 1 << k];
        let mut rows = Vec::with_capacity(n);
        for t in 0..n {
            let prod =
                Self::row_products(&(0..k).map(|c| columns[c][t] - means[c]).collect::<Vec<_>>());
            for (s, p) in sums.iter_mut().zip(&prod) {
                *s += p;
            }
            rows.push(prod);
        }
        SubsetSums { k, rows, sums }
    }

    fn row_products(x: &[f64]) -> Vec<f64> {
        let mut prod = vec![1.0; 1 << x.len()];
        for mask in 1usize..prod.len() {
            let low = mask.trailing_zeros() as usize;
            prod[mask] = prod[mask & (mask - 1)] * x[low];
        }
        prod
    }

    fn n(&self) -> usize {
        self.rows.len()
    }

    fn full(&self, plan: &CumulantPlan) -> f64 {
        let n = self.n() as f64;
        plan.evaluate(|m| self.sums[m as usize] / n)
    }

    fn leave_out(&self, plan: &CumulantPlan, t: usize) -> f64 {
        let n1 = (self.n() - 1) as f64;
        let row = &self.rows[t];
        plan.evaluate(|m| (self.sums[m as usize] - row[m as usize]) / n1)
    }
}

fn jackknife_stderr(loo: &[f64]) -> f64 {
    let n = loo.len() as f64;
    let mean = loo.iter().sum::<f64>() / n;
    ((n - 1.0) / n * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
}

/// Plug-in joint cumulant of the k columns of `samples` (n rows × k), with a
/// delete-1 jackknife standard error.
pub fn joint_cumulant_empirical(samples: &[Vec<f64>]) -> Result<CumulantEstimate> {
    let n = samples.len();
    if n < 30 {
        return Err(Error::Validation(format!(
            "need at least 30 samples, got {n}"
        )));
    }
    let k = samples[0].len();
    if k == 0 || samples.iter().any(|r| r.len() != k) {
        return Err(Error::Validation(
            "sample rows must share a positive width".into(),
        ));
    }
    let columns: Vec<Vec<f64>> = (0..k)
        .map(|c| samples.iter().map(|r| r[c]).collect())
        .collect();
    let refs: Vec<&[f64]> = columns.iter().map(|c| c.as_slice()).collect();
    let est = CumulantCombination::single(1.0, (0..k).collect()).estimate(&refs)?;
    Ok(CumulantEstimate { k, ..est })
}

/// A linear combination Σ c_t κ(columns of tuple t), estimated on one sample
/// with a joint jackknife error.
#[derive(Debug, Clone, Default)]
pub struct CumulantCombination {
    pub terms: Vec<(f64, Vec<usize>)>,
}

impl CumulantCombination {
    pub fn single(coef: f64, tuple: Vec<usize>) -> Self {
        CumulantCombination {
            terms: vec![(coef, tuple)],
        }
    }

    pub fn push(&mut self, coef: f64, tuple: Vec<usize>) {
        self.terms.push((coef, tuple));
    }

    /// `data[c]` is column c; tuples index into it.
    pub fn estimate(&self, data: &[&[f64]]) -> Result<CumulantEstimate> {
        let n = data.first().map_or(0, |c| c.len());
        if n < 2 {
            return Err(Error::Validation("need at least two samples".into()));
        }
        let mut value = 0.0;
        let mut loo = vec![0.0; n];
        let mut kmax = 0;
        for (coef, tuple) in &self.terms {
            kmax = kmax.max(tuple.len());
            if tuple.len() == 1 {
                // the centered sums below see only central moments
                let col = data[tuple[0]];
                let total: f64 = col.iter().sum();
                value += coef * total / n as f64;
                for (slot, x) in loo.iter_mut().zip(col) {
                    *slot += coef * (total - x) / (n - 1) as f64;
                }
                continue;
            }
            let plan = CumulantPlan::new(tuple.len())?;
            let cols: Vec<&[f64]> = tuple.iter().map(|&c| data[c]).collect();
            let sums = SubsetSums::new(&cols);
            debug_assert_eq!(sums.k, tuple.len());
            value += coef * sums.full(&plan);
            for (t, slot) in loo.iter_mut().enumerate() {
                *slot += coef * sums.leave_out(&plan, t);
            }
        }
        Ok(CumulantEstimate {
            value,
            stderr: jackknife_stderr(&loo),
            k: kmax,
            n_samples: n,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bell_numbers() {
        let want = [1u64, 1, 2, 5, 15, 52, 203, 877, 4140];
        for (k, &b) in want.iter().enumerate() {
            assert_eq!(enumerate_partitions(k).unwrap().len() as u64, b);
            assert_eq!(bell(k), b);
        }
        assert!(matches!(
            enumerate_partitions(9),
            Err(Error::Capability { .. })
        ));
    }

    #[test]
    fn partitions_are_unique_and_cover() {
        let parts = enumerate_partitions(5).unwrap();
        let mut seen = std::collections::HashSet::new();
        for p in &parts {
            let masks = p.masks();
            assert_eq!(masks.iter().fold(0, |a, m| a | m), 0b11111);
            assert_eq!(masks.iter().map(|m| m.count_ones()).sum::<u32>(), 5);
            let mut key = masks.clone();
            key.sort();
            assert!(seen.insert(key));
        }
    }

    #[test]
    fn second_order_is_plug_in_covariance() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![i as f64, ((i * 7) % 5) as f64])
            .collect();
        let est = joint_cumulant_empirical(&rows).unwrap();
        let n = rows.len() as f64;
        let mx = rows.iter().map(|r| r[0]).sum::<f64>() / n;
        let my = rows.iter().map(|r| r[1]).sum::<f64>() / n;
        let cov = rows.iter().map(|r| (r[0] - mx) * (r[1] - my)).sum::<f64>() / n;
        assert_relative_eq!(est.value, cov, max_relative = 1e-12, epsilon = 1e-12);
    }

    #[test]
    fn cumulants_of_a_point_mass_vanish() {
        let rows: Vec<Vec<f64>> = (0..50).map(|_| vec![2.5, 2.5, 2.5]).collect();
        assert_eq!(joint_cumulant_empirical(&rows).unwrap().value, 0.0);
    }

    #[test]
    fn first_order_terms_are_means() {
        let x: Vec<f64> = (0..40).map(|i| (i % 7) as f64).collect();
        let mean = x.iter().sum::<f64>() / 40.0;
        let mut c = CumulantCombination::single(2.0, vec![0]);
        c.push(1.0, vec![0, 0]);
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 40.0;
        let est = c.estimate(&[&x]).unwrap();
        assert_relative_eq!(est.value, 2.0 * mean + var, max_relative = 1e-13);
        assert!(est.stderr > 0.0);
    }

    #[test]
    fn cumulant_from_exact_moments() {
        // X ~ Exp(1): E X^k = k!, κ_3 = 2
        let fact = |k: u32| (1..=k).map(|v| v as f64).product::<f64>();
        let k3 = joint_cumulant_from_moments(3, |m| fact(m.count_ones())).unwrap();
        assert_relative_eq!(k3, 2.0, max_relative = 1e-14);
    }
}
