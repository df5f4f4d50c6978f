//! Small statistical helpers: Kolmogorov-Smirnov, Pearson correlation and a
//! mergeable streaming accumulator for central moments.

use serde::{Deserialize, Serialize};

/// Kolmogorov-Smirnov statistic of values already mapped through the
/// hypothesised CDF.
pub fn ks_statistic(cdf_values: &[f64]) -> f64 {
    let mut u = cdf_values.to_vec();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &v)| ((i as f64 + 1.0) / n - v).max(v - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov tail probability P(D_n > d), with Stephens'
/// finite-n correction of the argument.
pub fn kolmogorov_pvalue(n: usize, d: f64) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

pub fn mean_and_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Count, mean and central power sums M2..M4, updated one value at a time and
/// merged pairwise (Pébay's formulas).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl MomentAccumulator {
    pub fn push(&mut self, x: f64) {
        let single = MomentAccumulator {
            count: 1,
            mean: x,
            ..Default::default()
        };
        *self = self.merge(&single);
    }

    pub fn merge(&self, other: &MomentAccumulator) -> MomentAccumulator {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let d = other.mean - self.mean;
        let d2 = d * d;
        let mean = self.mean + d * nb / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d * d2 * na * nb * (na - nb) / (n * n)
            + 3.0 * d * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * other.m3 - nb * self.m3) / n;
        MomentAccumulator {
            count: self.count + other.count,
            mean,
            m2,
            m3,
            m4,
        }
    }

    pub fn variance(&self) -> f64 {
        self.m2 / self.count as f64
    }

    /// Plug-in central moment of order 2..4.
    pub fn central(&self, p: u32) -> f64 {
        let n = self.count as f64;
        match p {
            1 => 0.0,
            2 => self.m2 / n,
            3 => self.m3 / n,
            4 => self.m4 / n,
            _ => f64::NAN,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ks_pvalue_reference_points() {
        // P(K > 1.36) ≈ 0.0494, P(K > 1.63) ≈ 0.0098 in the limit
        assert!((kolmogorov_pvalue(1_000_000, 1.36 / 1000.0) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_pvalue(1_000_000, 1.63 / 1000.0) - 0.0098).abs() < 5e-4);
        assert_eq!(kolmogorov_pvalue(100, 0.0), 1.0);
    }

    #[test]
    fn ks_of_perfect_grid() {
        let u: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        assert_relative_eq!(ks_statistic(&u), 0.05, max_relative = 1e-12);
    }

    #[test]
    fn accumulator_matches_two_pass() {
        let xs: Vec<f64> = (0..57)
            .map(|i| ((i * 37 % 11) as f64).sqrt() - 1.3)
            .collect();
        let mut acc = MomentAccumulator::default();
        xs.iter().for_each(|&x| acc.push(x));
        let mut left = MomentAccumulator::default();
        let mut right = MomentAccumulator::default();
        xs[..20].iter().for_each(|&x| left.push(x));
        xs[20..].iter().for_each(|&x| right.push(x));
        let merged = left.merge(&right);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        for p in 2..=4 {
            let direct = xs.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / n;
            assert_relative_eq!(
                acc.central(p as u32),
                direct,
                max_relative = 1e-12,
                epsilon = 1e-14
            );
            assert_relative_eq!(
                merged.central(p as u32),
                direct,
                max_relative = 1e-12,
                epsilon = 1e-14
            );
        }
        assert_relative_eq!(pearson(&xs, &xs), 1.0, max_relative = 1e-14);
    }
}
