//! Exit-point distributions under the quenched polymer measure, quenched
//! cumulants of boundary sums, and the derivatives σ_k of the coupled free
//! energy.
//!
//! Every path leaves the axes once: either it walks east to (l, 0), l ≥ 1,
//! and steps up into the bulk at (l, 1), or it climbs to (0, j), j ≥ 1, and
//! steps east into (1, j). Hence
//!
//! ```text
//! Q(t₁ = l) = exp(S_l + ln Y²_{(l,1)} + ln Z^bulk_{(l,1)→(m,n)} - ln Z)
//! ```
//!
//! and P(t₁ = 0) is the total west mass. When the path reaches (m, 0) it
//! climbs the east column, which the same formula covers through Z^bulk_{(m,1)}.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coupling::{central_derivative, TildeAlgebra, MAX_TILDE_ORDER};
use crate::cumulants::{enumerate_partitions, CumulantPlan};
use crate::error::{Error, Result};
use crate::lattice::{perturb_boundary, Environment, ModelSpec};
use crate::partition::{
    log_partition_shift, logaddexp, logsumexp, prefix_sums, Direction, PartitionTable,
};

pub const MAX_QUENCHED_ORDER: usize = 6;

/// Bulk-only partition functions towards (m, n), filled backwards.
pub fn reverse_partition(env: &Environment) -> PartitionTable {
    let (m, n) = (env.m, env.n);
    let mut t = PartitionTable {
        m,
        n,
        direction: Direction::ReverseBulk,
        values: vec![f64::NAN; (m + 1) * (n + 1)],
    };
    if m == 0 || n == 0 {
        return t;
    }
    t.set(m, n, 0.0);
    for j in (1..=n).rev() {
        for i in (1..=m).rev() {
            if i == m && j == n {
                continue;
            }
            let right = if i < m {
                env.y1(i + 1, j) + t.get(i + 1, j)
            } else {
                f64::NEG_INFINITY
            };
            let up = if j < n {
                env.y2(i, j + 1) + t.get(i, j + 1)
            } else {
                f64::NEG_INFINITY
            };
            t.set(i, j, logaddexp(right, up));
        }
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    /// t₁, the exit point from the south axis.
    South,
    /// t₂, the exit point from the west axis.
    West,
}

/// Quenched law of one exit point: `probs[l]` = Q(t = l), l = 0..=extent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitDistribution {
    pub axis: Axis,
    pub probs: Vec<f64>,
}

impl ExitDistribution {
    pub fn extent(&self) -> usize {
        self.probs.len() - 1
    }

    /// Rows `l,q`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "l,q")?;
        for (l, q) in self.probs.iter().enumerate() {
            writeln!(w, "{l},{q}")?;
        }
        Ok(())
    }
}

/// Both exit distributions and ln Z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitProfile {
    pub log_z: f64,
    pub south: ExitDistribution,
    pub west: ExitDistribution,
}

fn point_mass(axis: Axis, extent: usize, at: usize) -> ExitDistribution {
    let mut probs = vec![0.0; extent + 1];
    probs[at] = 1.0;
    ExitDistribution { axis, probs }
}

fn finish(
    axis: Axis,
    log_terms: &[f64],
    log_other: &[f64],
    log_z: f64,
) -> Result<ExitDistribution> {
    let mut probs = Vec::with_capacity(log_terms.len() + 1);
    let other = if log_other.is_empty() {
        0.0
    } else {
        (logsumexp(log_other) - log_z).exp()
    };
    probs.push(other);
    probs.extend(log_terms.iter().map(|lt| (lt - log_z).exp()));
    for q in probs.iter_mut() {
        if !(*q >= -1e-12 && *q <= 1.0 + 1e-12) {
            return Err(Error::Numeric(format!(
                "exit probability {q} outside [0, 1]"
            )));
        }
        *q = q.clamp(0.0, 1.0);
    }
    Ok(ExitDistribution { axis, probs })
}

fn south_terms(env: &Environment, bulk_row: impl Fn(usize) -> f64) -> Vec<f64> {
    let s = prefix_sums(&env.south);
    (1..=env.m)
        .map(|l| s[l] + env.y2(l, 1) + bulk_row(l))
        .collect()
}

fn west_terms(env: &Environment, bulk_col: impl Fn(usize) -> f64) -> Vec<f64> {
    let w = prefix_sums(&env.west);
    (1..=env.n)
        .map(|j| w[j] + env.y1(1, j) + bulk_col(j))
        .collect()
}

/// Exit distribution along `axis` from the forward and reverse tables.
pub fn exit_distribution(
    env: &Environment,
    forward: &PartitionTable,
    reverse: &PartitionTable,
    axis: Axis,
) -> Result<ExitDistribution> {
    if forward.direction != Direction::Forward || reverse.direction != Direction::ReverseBulk {
        return Err(Error::Validation(
            "exit_distribution needs a forward and a reverse-bulk table".into(),
        ));
    }
    let (m, n) = (env.m, env.n);
    match axis {
        Axis::South if n == 0 => return Ok(point_mass(axis, m, m)),
        Axis::South if m == 0 => return Ok(point_mass(axis, 0, 0)),
        Axis::West if m == 0 => return Ok(point_mass(axis, n, n)),
        Axis::West if n == 0 => return Ok(point_mass(axis, 0, 0)),
        _ => {}
    }
    let log_z = forward.log_z();
    let south = south_terms(env, |l| reverse.get(l, 1));
    let west = west_terms(env, |j| reverse.get(1, j));
    match axis {
        Axis::South => finish(axis, &south, &west, log_z),
        Axis::West => finish(axis, &west, &south, log_z),
    }
}

/// Both exit distributions from one backward sweep with O(m) memory; ln Z is
/// recovered as the total mass of all exits.
pub fn exit_profile(env: &Environment) -> Result<ExitProfile> {
    let (m, n) = (env.m, env.n);
    if m == 0 || n == 0 {
        let log_z = prefix_sums(&env.south)[m] + prefix_sums(&env.west)[n];
        let (s_at, w_at) = if n == 0 { (m, 0) } else { (0, n) };
        return Ok(ExitProfile {
            log_z,
            south: point_mass(Axis::South, m, s_at),
            west: point_mass(Axis::West, n, w_at),
        });
    }
    // row[i - 1] = ln Z^bulk_{(i, j)} for the current j
    let mut row = vec![0.0; m];
    let mut first_col = vec![0.0; n];
    for j in (1..=n).rev() {
        for i in (1..=m).rev() {
            let v = if i == m && j == n {
                0.0
            } else {
                let right = if i < m {
                    env.y1(i + 1, j) + row[i]
                } else {
                    f64::NEG_INFINITY
                };
                let up = if j < n {
                    env.y2(i, j + 1) + row[i - 1]
                } else {
                    f64::NEG_INFINITY
                };
                logaddexp(right, up)
            };
            row[i - 1] = v;
        }
        first_col[j - 1] = row[0];
    }
    let south = south_terms(env, |l| row[l - 1]);
    let west = west_terms(env, |j| first_col[j - 1]);
    let log_z = logaddexp(logsumexp(&south), logsumexp(&west));
    Ok(ExitProfile {
        log_z,
        south: finish(Axis::South, &south, &west, log_z)?,
        west: finish(Axis::West, &west, &south, log_z)?,
    })
}

/// Σ_l l^p Q(t = l).
pub fn exit_moment(dist: &ExitDistribution, p: f64) -> f64 {
    dist.probs
        .iter()
        .enumerate()
        .map(|(l, q)| (l as f64).powf(p) * q)
        .sum()
}

/// Joint quenched cumulant of X_c = Σ_{i ≤ t₁∧r} g_c(i), c = 0..len, where
/// `g[c][i-1]` = g_c(i). Only the south exit distribution is meaningful here.
pub fn quenched_cumulant_of_sums(dist: &ExitDistribution, g: &[&[f64]], r: usize) -> Result<f64> {
    let j = g.len();
    if j == 0 || j > MAX_QUENCHED_ORDER {
        return Err(Error::Capability {
            what: "quenched cumulant order",
            got: j,
            max: MAX_QUENCHED_ORDER,
        });
    }
    if dist.axis != Axis::South {
        return Err(Error::Validation(
            "boundary sums are indexed by the south exit point".into(),
        ));
    }
    let r = r.min(dist.extent());
    if g.iter().any(|col| col.len() < r) {
        return Err(Error::Validation(format!(
            "site values shorter than r = {r}"
        )));
    }
    // collapse exits beyond r: the sums only see t₁ ∧ r
    let mut w = dist.probs[..r].to_vec();
    w.push(dist.probs[r..].iter().sum());
    let sums: Vec<Vec<f64>> = g.iter().map(|col| prefix_sums(&col[..r])).collect();
    let means: Vec<f64> = sums
        .iter()
        .map(|s| s.iter().zip(&w).map(|(v, q)| v * q).sum())
        .collect();
    if j == 1 {
        return Ok(means[0]);
    }
    let plan = CumulantPlan::new(j)?;
    Ok(plan.evaluate_centered(|mask| {
        (0..=r)
            .map(|l| {
                let mut p = w[l];
                for (c, s) in sums.iter().enumerate() {
                    if mask >> c & 1 == 1 {
                        p *= s[l] - means[c];
                    }
                }
                p
            })
            .sum()
    }))
}

/// ∂̃^ℓ L^{f¹}(a, R¹_{i,0}) for ℓ = 0..=lmax and sites i = 1..=r: `values[ℓ][i-1]`.
pub fn site_derivatives(
    env: &Environment,
    spec: &ModelSpec,
    a: f64,
    r: usize,
    lmax: usize,
) -> Result<Vec<Vec<f64>>> {
    site_derivatives_with(&TildeAlgebra::new(spec.f1, lmax)?, env, a, r)
}

/// [`site_derivatives`] with a prebuilt algebra for f¹.
pub fn site_derivatives_with(
    algebra: &TildeAlgebra,
    env: &Environment,
    a: f64,
    r: usize,
) -> Result<Vec<Vec<f64>>> {
    let f1 = env.model.f1;
    let mut values = vec![Vec::with_capacity(r); algebra.kmax() + 1];
    for &lx in env.south.iter().take(r) {
        for (l, v) in algebra
            .values_z(a, f1.z_of_log_x(lx))?
            .into_iter()
            .enumerate()
        {
            values[l].push(v);
        }
    }
    Ok(values)
}

/// σ_1, ..., σ_kmax at a₁ from one exit profile; `algebra` must cover order kmax - 1.
pub fn sigma_series(
    env: &Environment,
    algebra: &TildeAlgebra,
    kmax: usize,
    r: usize,
) -> Result<(ExitProfile, Vec<f64>)> {
    if r > env.m {
        return Err(Error::Validation(format!("r = {r} exceeds m = {}", env.m)));
    }
    let profile = exit_profile(env)?;
    let sites = site_derivatives_with(algebra, env, env.model.a1, r)?;
    let sigmas = (1..=kmax)
        .map(|k| sigma_from_sites(&profile.south, &sites, k, r))
        .collect::<Result<Vec<_>>>()?;
    Ok((profile, sigmas))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaValues {
    pub k: usize,
    pub r: usize,
    pub value: f64,
}

/// σ_k from precomputed site derivatives: the sum over set partitions π of
/// {1..k} of κ^Q_{|π|}(X_{|B|-1} : B ∈ π), X_ℓ = Σ_{i ≤ t₁∧r} ∂̃^ℓ L(R¹_i).
pub fn sigma_from_sites(
    dist: &ExitDistribution,
    sites: &[Vec<f64>],
    k: usize,
    r: usize,
) -> Result<f64> {
    if k == 0 || k > MAX_TILDE_ORDER {
        return Err(Error::Capability {
            what: "sigma order",
            got: k,
            max: MAX_TILDE_ORDER,
        });
    }
    if sites.len() < k {
        return Err(Error::Validation(format!(
            "need site derivatives up to order {}",
            k - 1
        )));
    }
    let mut total = 0.0;
    for p in enumerate_partitions(k)? {
        let cols: Vec<&[f64]> = p
            .blocks
            .iter()
            .map(|b| sites[b.len() - 1].as_slice())
            .collect();
        total += quenched_cumulant_of_sums(dist, &cols, r)?;
    }
    Ok(total)
}

/// σ_k(t₁ ∧ r) = ∂^k/∂a^k ln Z of the environment re-coupled at a on the first r
/// south edges.
pub fn sigma_k(
    env: &Environment,
    spec: &ModelSpec,
    k: usize,
    r: usize,
    a: f64,
) -> Result<SigmaValues> {
    if k == 0 || k > MAX_TILDE_ORDER {
        return Err(Error::Capability {
            what: "sigma order",
            got: k,
            max: MAX_TILDE_ORDER,
        });
    }
    if r > env.m {
        return Err(Error::Validation(format!("r = {r} exceeds m = {}", env.m)));
    }
    let owned;
    let env = if a == spec.a1 {
        env
    } else {
        owned = perturb_boundary(env, spec, a, r)?;
        &owned
    };
    let profile = exit_profile(env)?;
    let sites = site_derivatives(env, spec, a, r, k - 1)?;
    let value = sigma_from_sites(&profile.south, &sites, k, r)?;
    Ok(SigmaValues { k, r, value })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivCheck {
    pub k: usize,
    pub r: usize,
    pub finite_difference: f64,
    pub sigma: f64,
    pub rel_discrepancy: f64,
}

/// Central differences (one Richardson level, step h) of
/// a' ↦ ln Z(perturb_boundary(env, a', r)) - ln Z(env) at a₁ against σ_k.
pub fn deriv_consistency_check(
    env: &Environment,
    spec: &ModelSpec,
    k: usize,
    r: usize,
    h: f64,
) -> Result<DerivCheck> {
    if k == 0 || k > MAX_TILDE_ORDER {
        return Err(Error::Capability {
            what: "derivative check order",
            got: k,
            max: MAX_TILDE_ORDER,
        });
    }
    let sigma = sigma_k(env, spec, k, r, spec.a1)?.value;
    let g =
        |ap: f64| -> Result<f64> { log_partition_shift(env, &perturb_boundary(env, spec, ap, r)?) };
    let fd = central_derivative(g, k, spec.a1, h, spec.f1.domain())?;
    let scale = sigma.abs().max(fd.abs());
    let rel = if scale == 0.0 {
        0.0
    } else {
        (fd - sigma).abs() / scale
    };
    Ok(DerivCheck {
        k,
        r,
        finite_difference: fd,
        sigma,
        rel_discrepancy: rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{sample_environment, ModelKind};
    use crate::partition::{log_partition, path_log_weights};
    use approx::assert_relative_eq;

    #[test]
    fn reverse_table_corners() {
        let spec = ModelSpec::with_defaults(ModelKind::B);
        let env = sample_environment(&spec, 4, 3, 9).unwrap();
        let rev = reverse_partition(&env);
        assert_eq!(rev.get(4, 3), 0.0);
        assert_relative_eq!(rev.get(3, 3), env.y1(4, 3), max_relative = 1e-15);
        assert_relative_eq!(rev.get(4, 2), env.y2(4, 3), max_relative = 1e-15);
    }

    #[test]
    fn exits_match_enumeration_on_3x3() {
        for kind in ModelKind::ALL {
            let spec = ModelSpec::with_defaults(kind);
            let env = sample_environment(&spec, 3, 3, 21).unwrap();
            let paths = path_log_weights(&env).unwrap();
            assert_eq!(paths.len(), 20);
            let lz = logsumexp(&paths.iter().map(|p| p.log_weight).collect::<Vec<_>>());
            let fwd = log_partition(&env);
            let rev = reverse_partition(&env);
            let south = exit_distribution(&env, &fwd, &rev, Axis::South).unwrap();
            let west = exit_distribution(&env, &fwd, &rev, Axis::West).unwrap();
            for l in 0..=3 {
                let want: f64 = paths
                    .iter()
                    .filter(|p| p.t1 == l)
                    .map(|p| (p.log_weight - lz).exp())
                    .sum();
                assert_relative_eq!(south.probs[l], want, epsilon = 1e-12);
                let want: f64 = paths
                    .iter()
                    .filter(|p| p.t2 == l)
                    .map(|p| (p.log_weight - lz).exp())
                    .sum();
                assert_relative_eq!(west.probs[l], want, epsilon = 1e-12);
            }
            let total: f64 =
                south.probs[1..].iter().sum::<f64>() + west.probs[1..].iter().sum::<f64>();
            assert_relative_eq!(total, 1.0, epsilon = 1e-12);
            let prof = exit_profile(&env).unwrap();
            assert_relative_eq!(prof.log_z, fwd.log_z(), max_relative = 1e-14);
            for l in 0..=3 {
                assert_relative_eq!(prof.south.probs[l], south.probs[l], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn degenerate_row() {
        let spec = ModelSpec::with_defaults(ModelKind::IG);
        let env = sample_environment(&spec, 5, 0, 2).unwrap();
        let prof = exit_profile(&env).unwrap();
        assert_eq!(prof.south.probs[5], 1.0);
        assert_eq!(exit_moment(&prof.south, 2.0), 25.0);
        assert_eq!(exit_moment(&prof.south, 0.0), 1.0);
        let g = vec![0.3; 5];
        let c2 = quenched_cumulant_of_sums(&prof.south, &[&g, &g], 5).unwrap();
        assert_eq!(c2, 0.0);
        assert_relative_eq!(
            quenched_cumulant_of_sums(&prof.south, &[&g], 5).unwrap(),
            1.5,
            max_relative = 1e-15
        );
    }

    #[test]
    fn second_quenched_cumulant_is_variance() {
        let spec = ModelSpec::with_defaults(ModelKind::G);
        let env = sample_environment(&spec, 6, 5, 8).unwrap();
        let prof = exit_profile(&env).unwrap();
        let g: Vec<f64> = (0..6).map(|i| 0.2 + i as f64 * 0.1).collect();
        let s = prefix_sums(&g);
        let r = 4;
        let x = |l: usize| s[l.min(r)];
        let mean: f64 = prof
            .south
            .probs
            .iter()
            .enumerate()
            .map(|(l, q)| q * x(l))
            .sum();
        let var: f64 = prof
            .south
            .probs
            .iter()
            .enumerate()
            .map(|(l, q)| q * (x(l) - mean).powi(2))
            .sum();
        assert_relative_eq!(
            quenched_cumulant_of_sums(&prof.south, &[&g, &g], r).unwrap(),
            var,
            max_relative = 1e-12
        );
    }

    #[test]
    fn sigma_on_a_row_is_the_plain_sum() {
        let spec = ModelSpec::with_defaults(ModelKind::IB);
        let env = sample_environment(&spec, 4, 0, 3).unwrap();
        let s1 = sigma_k(&env, &spec, 1, 4, spec.a1).unwrap().value;
        let want: f64 = env
            .south
            .iter()
            .map(|&lx| {
                crate::coupling::l_func_z(&spec.f1, spec.a1, spec.f1.z_of_log_x(lx)).unwrap()
            })
            .sum();
        assert_relative_eq!(s1, want, max_relative = 1e-13);
    }

    #[test]
    fn nothing_recoupled_means_no_derivative() {
        let spec = ModelSpec::with_defaults(ModelKind::G);
        let env = sample_environment(&spec, 5, 5, 4).unwrap();
        let c = deriv_consistency_check(&env, &spec, 1, 0, 1e-3).unwrap();
        assert_eq!(c.sigma, 0.0);
        assert_eq!(c.finite_difference, 0.0);
    }
}
