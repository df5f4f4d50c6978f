//! Named checks, each comparing a computed quantity against a threshold, as
//! run by `betagamma verify` and by the acceptance harness.

use serde::{Deserialize, Serialize};

use crate::coupling::{bound_check, central_derivative, CoupledSampler};
use crate::error::Result;
use crate::exec::Executor;
use crate::lattice::{EnvironmentSampler, ModelSpec};
use crate::mellin::{KernelKind, MellinFamily};
use crate::partition::{
    brute_force_log_z, burke_test, down_right_collect, log_partition, nsew_decompose,
    path_log_weights, Staircase,
};
use crate::polynomials::{generating_check, ibp_lemma_check, mean_zero_check};
use crate::quenched::{deriv_consistency_check, exit_distribution, reverse_partition, Axis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    /// The worst observed value of the checked quantity.
    pub metric: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckOutcome {
    /// Passes iff `metric <= threshold` (NaN fails).
    pub fn at_most(
        name: impl Into<String>,
        metric: f64,
        threshold: f64,
        detail: impl Into<String>,
    ) -> Self {
        CheckOutcome {
            name: name.into(),
            pass: metric <= threshold,
            metric,
            threshold,
            detail: detail.into(),
        }
    }

    /// Passes iff `metric >= threshold`.
    pub fn at_least(
        name: impl Into<String>,
        metric: f64,
        threshold: f64,
        detail: impl Into<String>,
    ) -> Self {
        CheckOutcome {
            name: name.into(),
            pass: metric >= threshold,
            metric,
            threshold,
            detail: detail.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {}: {:.3e} (threshold {:.3e}) {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.metric,
            self.threshold,
            self.detail
        )
    }
}

/// `count` parameters spread through the interior of the domain.
pub fn a_points(family: &MellinFamily, count: usize) -> Vec<f64> {
    let (lo, hi) = family.domain();
    // geometric from 0.2 to 6 away from a finite end of a half-line
    let offset = |i: usize| 0.2 * 30f64.powf(i as f64 / (count - 1).max(1) as f64);
    (0..count)
        .map(|i| match (lo.is_finite(), hi.is_finite()) {
            (true, true) => lo + (hi - lo) * (i as f64 + 1.0) / (count as f64 + 1.0),
            (true, false) => lo + offset(i),
            _ => hi - offset(i),
        })
        .collect()
}

/// Closed-form M_f against quadrature, and ψ_k against central differences of
/// ln M_f for k ≤ 3, over `a`.
pub fn mellin_check(family: &MellinFamily, a: &[f64]) -> Result<(CheckOutcome, CheckOutcome)> {
    let mut worst_transform = 0.0f64;
    let mut worst_psi = 0.0f64;
    for &ap in a {
        let closed = family.ln_mellin(ap)?;
        let quad = family.ln_mellin_quadrature(ap)?;
        worst_transform = worst_transform.max((quad - closed).exp_m1().abs());
        let (lo, hi) = family.domain();
        // the step follows the distance to the nearest pole of ln M_f
        let scale = ap.abs().max(1.0).min(ap - lo).min(hi - ap);
        for k in 0..=3 {
            let exact = family.psi(k, ap)?;
            let step = [1e-4, 1e-3, 1e-2, 2e-2][k] * scale;
            let fd = central_derivative(|x| family.ln_mellin(x), k + 1, ap, step, family.domain())?;
            // ψ_k is a cumulant of order k + 1; odd ones vanish at symmetric points
            let size = exact
                .abs()
                .max(family.psi(1, ap)?.powf((k as f64 + 1.0) / 2.0));
            worst_psi = worst_psi.max((fd - exact).abs() / size);
        }
    }
    let label = format!("{:?}(b={})", family.kind, family.b);
    Ok((
        CheckOutcome::at_most(
            format!("mellin closed form {label}"),
            worst_transform,
            1e-9,
            format!("{} a-points", a.len()),
        ),
        CheckOutcome::at_most(
            format!("psi_k vs finite differences {label}"),
            worst_psi,
            1e-5,
            "k <= 3, relative to max(|psi_k|, psi_1^((k+1)/2))",
        ),
    ))
}

/// E[p_n(S_r)] = 0 by quadrature for r ∈ {1, 2}, n ≤ 4, and the generating
/// function residual at λ = 0.01, K = 6, for the same r.
pub fn polynomial_check(family: &MellinFamily, a: f64) -> Result<(CheckOutcome, CheckOutcome)> {
    let mut worst = 0.0f64;
    for r in 1..=2 {
        for n in 1..=4 {
            worst = worst.max(mean_zero_check(family, n, a, r)?.abs());
        }
    }
    let mut residual = 0.0f64;
    for (r, s) in [(1, 0.5), (1, -1.2), (2, -0.3), (2, 1.7)] {
        residual = residual.max(generating_check(family, a, r, s, 0.01, 6)?);
    }
    let label = format!("{:?}(b={}) a={a}", family.kind, family.b);
    Ok((
        CheckOutcome::at_most(
            format!("E[p_n(S_r)] = 0 {label}"),
            worst,
            1e-8,
            "r in {1,2}, n <= 4",
        ),
        CheckOutcome::at_most(
            format!("generating function {label}"),
            residual,
            1e-12,
            "lambda = 0.01, K = 6",
        ),
    ))
}

/// ∂^n_a E[(ln X_1)^2] against E[(ln X_1)^2 p_n(S_2)], n ∈ {1, 2}.
pub fn ibp_lemma_outcome(family: &MellinFamily, a: f64) -> Result<CheckOutcome> {
    let worst = (1..=2)
        .map(|n| ibp_lemma_check(family, n, a).map(|c| c.rel_discrepancy))
        .collect::<Result<Vec<_>>>()?;
    Ok(CheckOutcome::at_most(
        format!("single-site IBP {:?}(b={}) a={a}", family.kind, family.b),
        worst.into_iter().fold(0.0, f64::max),
        1e-6,
        "A = (ln X1)^2, r = 2, n in {1,2}",
    ))
}

/// DP against path enumeration for every box with m + n ≤ `max_sum`.
pub fn dp_exactness(spec: &ModelSpec, max_sum: usize, seeds: u64) -> Result<CheckOutcome> {
    let sampler = EnvironmentSampler::new(spec)?;
    let mut worst = 0.0f64;
    let mut boxes = 0;
    for m in 0..=max_sum {
        for n in 0..=(max_sum - m) {
            boxes += 1;
            for seed in 0..seeds {
                let env = sampler.sample(m, n, seed, 0)?;
                let dp = log_partition(&env).log_z();
                worst = worst.max((dp - brute_force_log_z(&env)?).abs());
            }
        }
    }
    Ok(CheckOutcome::at_most(
        format!("DP vs enumeration {}", spec.kind),
        worst,
        1e-9,
        format!("{boxes} boxes with m+n <= {max_sum}, {seeds} seeds each"),
    ))
}

/// Exit distributions against enumeration.
pub fn exit_oracle(spec: &ModelSpec, max_sum: usize, seeds: u64) -> Result<CheckOutcome> {
    let sampler = EnvironmentSampler::new(spec)?;
    let mut worst = 0.0f64;
    for m in 1..max_sum {
        for n in 1..=(max_sum - m) {
            for seed in 0..seeds {
                let env = sampler.sample(m, n, seed, 0)?;
                let paths = path_log_weights(&env)?;
                let fwd = log_partition(&env);
                let rev = reverse_partition(&env);
                let lz = fwd.log_z();
                for axis in [Axis::South, Axis::West] {
                    let dist = exit_distribution(&env, &fwd, &rev, axis)?;
                    for (l, q) in dist.probs.iter().enumerate() {
                        let want: f64 = paths
                            .iter()
                            .filter(|p| {
                                if axis == Axis::South {
                                    p.t1 == l
                                } else {
                                    p.t2 == l
                                }
                            })
                            .map(|p| (p.log_weight - lz).exp())
                            .sum();
                        worst = worst.max((q - want).abs());
                    }
                }
            }
        }
    }
    Ok(CheckOutcome::at_most(
        format!("exit distribution vs enumeration {}", spec.kind),
        worst,
        1e-10,
        format!("m+n <= {max_sum}, {seeds} seeds"),
    ))
}

/// W + N = S + E = ln Z on `samples` environments.
pub fn nsew_check(
    spec: &ModelSpec,
    m: usize,
    n: usize,
    samples: usize,
    seed: u64,
    exec: &Executor,
) -> Result<CheckOutcome> {
    let sampler = EnvironmentSampler::new(spec)?.with_r_max(0);
    let defects = exec.try_map(samples, |t| -> Result<f64> {
        let env = sampler.sample(m, n, seed, t as u64)?;
        let table = log_partition(&env);
        Ok(nsew_decompose(&table).defect(table.log_z()))
    })?;
    Ok(CheckOutcome::at_most(
        format!("NSEW {} ({m},{n})", spec.kind),
        defects.into_iter().fold(0.0, f64::max),
        1e-9,
        format!("{samples} samples"),
    ))
}

/// Down-right marginals and pairwise correlations on the anti-diagonal staircase.
pub fn burke_check(
    spec: &ModelSpec,
    m: usize,
    n: usize,
    replicas: usize,
    seed: u64,
    exec: &Executor,
) -> Result<CheckOutcome> {
    let sampler = EnvironmentSampler::new(spec)?.with_r_max(0);
    let path = Staircase::anti_diagonal(m, n);
    let samples = exec.try_map(replicas, |t| {
        let env = sampler.sample(m, n, seed, t as u64)?;
        down_right_collect(&log_partition(&env), &path)
    })?;
    let horizontal = CoupledSampler::new(spec.f1, spec.a1)?;
    let vertical = CoupledSampler::new(spec.f2, spec.a2)?;
    let report = burke_test(&samples, &horizontal, &vertical, 0.01)?;
    let metric = report.ks_pass_fraction.min(report.corr_pass_fraction);
    Ok(CheckOutcome::at_least(
        format!("down-right property {} ({m},{n})", spec.kind),
        metric,
        0.95,
        format!(
            "{} edges, KS pass {:.3}, |corr| <= {:.4} for {:.3} of pairs (max {:.4}), {replicas} replicas",
            report.edges.len(),
            report.ks_pass_fraction,
            report.corr_threshold,
            report.corr_pass_fraction,
            report.max_abs_corr
        ),
    ))
}

/// σ_k against finite differences of the re-coupled free energy.
pub fn sigma_check(
    spec: &ModelSpec,
    k: usize,
    size: usize,
    envs: u64,
    seed: u64,
) -> Result<CheckOutcome> {
    let sampler = EnvironmentSampler::new(spec)?;
    let threshold = if k == 1 { 1e-4 } else { 1e-2 };
    let mut worst = 0.0f64;
    for t in 0..envs {
        let env = sampler.sample(size, size, seed, t)?;
        worst = worst.max(deriv_consistency_check(&env, spec, k, size, 1e-3)?.rel_discrepancy);
    }
    Ok(CheckOutcome::at_most(
        format!(
            "sigma_{k} vs finite differences {} ({size},{size})",
            spec.kind
        ),
        worst,
        threshold,
        format!("{envs} environments, r = {size}"),
    ))
}

/// The three kernels to which the growth bound reduces.
pub fn bound_families() -> [MellinFamily; 3] {
    let f = |k| MellinFamily::new(k, 1.0).expect("b = 1 is valid");
    [
        f(KernelKind::ExpDecay),
        MellinFamily::new(KernelKind::BetaKernel, 2.0).expect("valid"),
        f(KernelKind::BetaPrimeKernel),
    ]
}

/// ln x grid with 61 points per decade over 12 decades of the support; the
/// flag marks points in the outermost decade at either end.
pub fn bound_grid(family: &MellinFamily) -> Vec<(f64, bool)> {
    const PER_DECADE: usize = 61;
    const DECADES: usize = 6;
    let ln10 = std::f64::consts::LN_10;
    // d runs over [-DECADES, DECADES] in steps of 1/61
    let ds: Vec<f64> = (0..=2 * DECADES * PER_DECADE)
        .map(|i| -(DECADES as f64) + i as f64 / PER_DECADE as f64)
        .collect();
    let outer = |d: f64| d.abs() >= DECADES as f64 - 1.0;
    let (lo, hi) = family.support();
    if hi == 1.0 {
        // near 0: x = 10^d, d ∈ [-6, -0.3]; near 1: 1 - x = 10^d
        let mut g: Vec<(f64, bool)> = ds
            .iter()
            .filter(|&&d| d <= -0.3)
            .map(|&d| (d * ln10, outer(d)))
            .collect();
        g.extend(
            ds.iter()
                .rev()
                .filter(|&&d| d <= -0.3)
                .map(|&d| ((-(10f64.powf(d))).ln_1p(), outer(d))),
        );
        g
    } else if lo == 1.0 {
        // x - 1 = 10^d
        ds.iter()
            .map(|&d| (10f64.powf(d).ln_1p(), outer(d)))
            .collect()
    } else {
        ds.iter().map(|&d| (d * ln10, outer(d))).collect()
    }
}

/// Growth bound for ∂̃^k L^f: finite on the grid, and the maximum over the
/// full grid within a factor 2 of the maximum without the outermost decades.
pub fn growth_bound_check(family: &MellinFamily, k: usize, a_count: usize) -> Result<CheckOutcome> {
    let grid = bound_grid(family);
    let log_x: Vec<f64> = grid.iter().map(|g| g.0).collect();
    let a = a_points(family, a_count);
    let report = bound_check(family, k, &a, &log_x)?;
    let inner = report
        .rows
        .iter()
        .enumerate()
        .filter(|(i, _)| !grid[i % grid.len()].1)
        .map(|(_, r)| r.ratio)
        .fold(0.0, f64::max);
    let variation = report.max_ratio / inner;
    let finite = report.rows.iter().all(|r| r.ratio.is_finite());
    let metric = if finite { variation } else { f64::INFINITY };
    Ok(CheckOutcome::at_most(
        format!("growth bound k={k} {:?}(b={})", family.kind, family.b),
        metric,
        2.0,
        format!(
            "max ratio {:.4e}, {} x-points x {} a-values",
            report.max_ratio,
            grid.len(),
            a.len()
        ),
    ))
}

/// Sizes used by [`run_verify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyScale {
    pub dp_max_sum: usize,
    pub dp_seeds: u64,
    pub nsew_samples: usize,
    pub burke_replicas: usize,
    pub sigma_envs: u64,
    pub a_points: usize,
}

impl Default for VerifyScale {
    fn default() -> Self {
        VerifyScale {
            dp_max_sum: 10,
            dp_seeds: 3,
            nsew_samples: 200,
            burke_replicas: 1000,
            sigma_envs: 10,
            a_points: 5,
        }
    }
}

/// Groups of checks selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Suite {
    Mellin,
    Polynomials,
    Ibp,
    Partition,
    ExitOracle,
    Nsew,
    Burke,
    Sigma,
    Bounds,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Mellin,
        Suite::Polynomials,
        Suite::Ibp,
        Suite::Partition,
        Suite::ExitOracle,
        Suite::Nsew,
        Suite::Burke,
        Suite::Sigma,
        Suite::Bounds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Mellin => "mellin",
            Suite::Polynomials => "pn",
            Suite::Ibp => "ibp",
            Suite::Partition => "dp",
            Suite::ExitOracle => "exit",
            Suite::Nsew => "nsew",
            Suite::Burke => "burke",
            Suite::Sigma => "sigma",
            Suite::Bounds => "bounds",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == lower)
            .ok_or_else(|| {
                let names: Vec<&str> = Suite::ALL.iter().map(|x| x.name()).collect();
                crate::error::Error::Validation(format!(
                    "unknown check suite '{s}' (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}

/// Runs the selected suites for one model: the Mellin families of its weights,
/// p_n and IBP at a₁, lattice identities, σ_k and the growth bound of f¹.
pub fn run_verify(
    spec: &ModelSpec,
    seed: u64,
    scale: &VerifyScale,
    suites: &[Suite],
    exec: &Executor,
) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for suite in Suite::ALL.into_iter().filter(|s| suites.contains(s)) {
        match suite {
            Suite::Mellin => {
                let families = if spec.f1 == spec.f2 {
                    vec![spec.f1]
                } else {
                    vec![spec.f1, spec.f2]
                };
                for family in families {
                    let (t, p) = mellin_check(&family, &a_points(&family, scale.a_points))?;
                    out.push(t);
                    out.push(p);
                }
            }
            Suite::Polynomials => {
                let (mean_zero, generating) = polynomial_check(&spec.f1, spec.a1)?;
                out.push(mean_zero);
                out.push(generating);
            }
            Suite::Ibp => out.push(ibp_lemma_outcome(&spec.f1, spec.a1)?),
            Suite::Partition => out.push(dp_exactness(spec, scale.dp_max_sum, scale.dp_seeds)?),
            Suite::ExitOracle => {
                out.push(exit_oracle(spec, scale.dp_max_sum.min(8), scale.dp_seeds)?)
            }
            Suite::Nsew => out.push(nsew_check(spec, 32, 32, scale.nsew_samples, seed, exec)?),
            Suite::Burke => out.push(burke_check(spec, 32, 32, scale.burke_replicas, seed, exec)?),
            Suite::Sigma => {
                for k in 1..=2 {
                    out.push(sigma_check(spec, k, 8, scale.sigma_envs, seed)?);
                }
            }
            Suite::Bounds => {
                for k in 0..=2 {
                    out.push(growth_bound_check(&spec.f1, k, scale.a_points)?);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_points_stay_inside() {
        for kind in KernelKind::ALL {
            let f = MellinFamily::new(kind, 1.5).unwrap();
            let a = a_points(&f, 11);
            assert_eq!(a.len(), 11);
            assert!(
                a.iter().all(|&x| f.check_domain(x).is_ok()),
                "{kind:?} {a:?}"
            );
        }
    }

    #[test]
    fn bound_grid_flags_outer_decades() {
        for f in bound_families() {
            let g = bound_grid(&f);
            let outer = g.iter().filter(|p| p.1).count();
            assert!(
                outer > 100 && outer < g.len() / 2,
                "{:?}: {outer} of {}",
                f.kind,
                g.len()
            );
            assert!(g.iter().all(|p| p.0.is_finite() && f.in_support(p.0.exp())));
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn outcome_lines() {
        let c = CheckOutcome::at_most("x", f64::NAN, 1.0, "");
        assert!(!c.pass);
        assert!(CheckOutcome::at_least("y", 0.97, 0.95, "")
            .line()
            .starts_with("[PASS]"));
    }
}
