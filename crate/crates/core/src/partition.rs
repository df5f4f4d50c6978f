//! Log-space partition functions, the NSEW decomposition and the ratios
//! collected along down-right staircases.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coupling::CoupledSampler;
use crate::error::{Error, Result};
use crate::lattice::Environment;
use crate::stats::{kolmogorov_pvalue, ks_statistic, pearson};

/// Largest m + n accepted by [`brute_force_log_z`].
pub const MAX_ENUMERATION: usize = 14;

#[inline]
pub fn logaddexp(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return y;
    }
    if y == f64::NEG_INFINITY {
        return x;
    }
    let (hi, lo) = if x > y { (x, y) } else { (y, x) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Prefix sums with Neumaier compensation; `out[k]` is the sum of the first k values.
pub fn prefix_sums(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() + 1);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    out.push(0.0);
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        out.push(sum + comp);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    /// ln Z_x for paths from the origin.
    Forward,
    /// ln of the bulk-only partition function from x to (m, n); defined for
    /// x with both coordinates ≥ 1.
    ReverseBulk,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTable {
    pub m: usize,
    pub n: usize,
    pub direction: Direction,
    pub(crate) values: Vec<f64>,
}

impl PartitionTable {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.n + 1) + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * (self.n + 1) + j] = v;
    }

    pub fn log_z(&self) -> f64 {
        match self.direction {
            Direction::Forward => self.get(self.m, self.n),
            Direction::ReverseBulk => f64::NAN,
        }
    }

    /// Rows `i,j,logZ`, skipping undefined cells.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,logZ")?;
        for i in 0..=self.m {
            for j in 0..=self.n {
                let v = self.get(i, j);
                if v.is_finite() {
                    writeln!(w, "{i},{j},{v}")?;
                }
            }
        }
        Ok(())
    }
}

/// Forward dynamic program over the whole box.
pub fn log_partition(env: &Environment) -> PartitionTable {
    let (m, n) = (env.m, env.n);
    let mut t = PartitionTable {
        m,
        n,
        direction: Direction::Forward,
        values: vec![0.0; (m + 1) * (n + 1)],
    };
    let south = prefix_sums(&env.south);
    let west = prefix_sums(&env.west);
    for (i, &s) in south.iter().enumerate() {
        t.set(i, 0, s);
    }
    for (j, &w) in west.iter().enumerate() {
        t.set(0, j, w);
    }
    for i in 1..=m {
        for j in 1..=n {
            let v = logaddexp(
                env.y1(i, j) + t.get(i - 1, j),
                env.y2(i, j) + t.get(i, j - 1),
            );
            t.set(i, j, v);
        }
    }
    t
}

/// ln Z_{m,n} with a single rolling column (O(n) memory).
pub fn log_partition_value(env: &Environment) -> f64 {
    let (m, n) = (env.m, env.n);
    let mut col = prefix_sums(&env.west);
    let south = prefix_sums(&env.south);
    for i in 1..=m {
        col[0] = south[i];
        let base = (i - 1) * n;
        for j in 1..=n {
            col[j] = logaddexp(
                env.bulk1[base + j - 1] + col[j],
                env.bulk2[base + j - 1] + col[j - 1],
            );
        }
    }
    col[n]
}

/// ln Z(other) - ln Z(base) for two environments on the same box, carried as
/// the relative change Z'/Z - 1 through the forward recursion so that small
/// shifts keep their relative precision.
pub fn log_partition_shift(base: &Environment, other: &Environment) -> Result<f64> {
    let (m, n) = (base.m, base.n);
    if other.m != m || other.n != n {
        return Err(Error::Validation("environments must share the box".into()));
    }
    let table = log_partition(base);
    let mut rho = vec![0.0; (m + 1) * (n + 1)];
    let at = |i: usize, j: usize| i * (n + 1) + j;
    // (1 + ρ)(1 + δ) - 1 along one edge
    let step = |r: f64, d: f64| r + d + r * d;
    for i in 1..=m {
        rho[at(i, 0)] = step(
            rho[at(i - 1, 0)],
            (other.south[i - 1] - base.south[i - 1]).exp_m1(),
        );
    }
    for j in 1..=n {
        rho[at(0, j)] = step(
            rho[at(0, j - 1)],
            (other.west[j - 1] - base.west[j - 1]).exp_m1(),
        );
    }
    for i in 1..=m {
        for j in 1..=n {
            let here = table.get(i, j);
            let p_left = (base.y1(i, j) + table.get(i - 1, j) - here).exp();
            let p_down = (base.y2(i, j) + table.get(i, j - 1) - here).exp();
            let d_left = (other.y1(i, j) - base.y1(i, j)).exp_m1();
            let d_down = (other.y2(i, j) - base.y2(i, j)).exp_m1();
            rho[at(i, j)] =
                p_left * step(rho[at(i - 1, j)], d_left) + p_down * step(rho[at(i, j - 1)], d_down);
        }
    }
    Ok(rho[at(m, n)].ln_1p())
}

/// Sum over all up-right paths, enumerated one by one.
pub fn brute_force_log_z(env: &Environment) -> Result<f64> {
    Ok(logsumexp(
        &path_log_weights(env)?
            .into_iter()
            .map(|p| p.log_weight)
            .collect::<Vec<_>>(),
    ))
}

/// One up-right path from (0,0) to (m,n) with its log-weight and exit points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumeratedPath {
    pub log_weight: f64,
    /// Last i with (i, 0) on the path.
    pub t1: usize,
    /// Last j with (0, j) on the path.
    pub t2: usize,
}

pub fn path_log_weights(env: &Environment) -> Result<Vec<EnumeratedPath>> {
    let (m, n) = (env.m, env.n);
    if m + n > MAX_ENUMERATION {
        return Err(Error::Capability {
            what: "path enumeration size m+n",
            got: m + n,
            max: MAX_ENUMERATION,
        });
    }
    let steps = m + n;
    let mut out = Vec::new();
    // bit set = vertical step
    for mask in 0u32..(1u32 << steps) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let (mut i, mut j) = (0usize, 0usize);
        let mut w = 0.0;
        let (mut t1, mut t2) = (0, 0);
        for s in 0..steps {
            if mask >> s & 1 == 1 {
                j += 1;
                w += env.vertical(i, j);
            } else {
                i += 1;
                w += env.horizontal(i, j);
            }
            if j == 0 {
                t1 = i;
            }
            if i == 0 {
                t2 = j;
            }
        }
        out.push(EnumeratedPath {
            log_weight: w,
            t1,
            t2,
        });
    }
    Ok(out)
}

/// Sums of log-ratios along the four sides of the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nsew {
    pub west: f64,
    pub north: f64,
    pub south: f64,
    pub east: f64,
}

impl Nsew {
    /// max(|W + N - S - E|, |W + N - ln Z|).
    pub fn defect(&self, log_z: f64) -> f64 {
        let wn = self.west + self.north;
        (wn - self.south - self.east).abs().max((wn - log_z).abs())
    }
}

pub fn nsew_decompose(table: &PartitionTable) -> Nsew {
    let (m, n) = (table.m, table.n);
    let west = table.get(0, n);
    let south = table.get(m, 0);
    let north: f64 = (1..=m).map(|i| table.get(i, n) - table.get(i - 1, n)).sum();
    let east: f64 = (1..=n).map(|j| table.get(m, j) - table.get(m, j - 1)).sum();
    Nsew {
        west,
        north,
        south,
        east,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    Right,
    Down,
}

/// A down-right lattice path inside the box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Staircase {
    pub start: (usize, usize),
    pub steps: Vec<Step>,
}

impl Staircase {
    /// Down the west axis from (0, n), then east along the south axis.
    pub fn west_south(m: usize, n: usize) -> Self {
        let mut steps = vec![Step::Down; n];
        steps.extend(std::iter::repeat(Step::Right).take(m));
        Staircase {
            start: (0, n),
            steps,
        }
    }

    /// East along the top row, then down the east column.
    pub fn north_east(m: usize, n: usize) -> Self {
        let mut steps = vec![Step::Right; m];
        steps.extend(std::iter::repeat(Step::Down).take(n));
        Staircase {
            start: (0, n),
            steps,
        }
    }

    /// Staircase from (0, n) to (m, 0) hugging the anti-diagonal.
    pub fn anti_diagonal(m: usize, n: usize) -> Self {
        let (mut i, mut j) = (0usize, n);
        let mut steps = Vec::with_capacity(m + n);
        while i < m || j > 0 {
            // right while the point stays on or below the line i/m + j/n = 1
            let right = j == 0 || (i < m && (i * n) <= ((n - j) * m));
            if right {
                i += 1;
                steps.push(Step::Right);
            } else {
                j -= 1;
                steps.push(Step::Down);
            }
        }
        Staircase {
            start: (0, n),
            steps,
        }
    }

    fn validate(&self, m: usize, n: usize) -> Result<()> {
        let (mut i, mut j) = self.start;
        if i > m || j > n {
            return Err(Error::Validation(format!(
                "staircase start {:?} outside the box",
                self.start
            )));
        }
        for (k, s) in self.steps.iter().enumerate() {
            match s {
                Step::Right if i < m => i += 1,
                Step::Down if j > 0 => j -= 1,
                _ => {
                    return Err(Error::Validation(format!(
                        "staircase leaves the box at step {k}"
                    )))
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Ratio Z_x / Z_{x-e₁}; same law as R¹.
    Horizontal,
    /// Ratio Z_x / Z_{x-e₂}; same law as R².
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRatio {
    pub kind: EdgeKind,
    /// Endpoint x of the edge (the end with larger coordinates).
    pub site: (usize, usize),
    pub log_ratio: f64,
}

pub fn down_right_collect(table: &PartitionTable, path: &Staircase) -> Result<Vec<EdgeRatio>> {
    if table.direction != Direction::Forward {
        return Err(Error::Validation("ratios need a forward table".into()));
    }
    path.validate(table.m, table.n)?;
    let (mut i, mut j) = path.start;
    let mut out = Vec::with_capacity(path.steps.len());
    for s in &path.steps {
        match s {
            Step::Right => {
                i += 1;
                out.push(EdgeRatio {
                    kind: EdgeKind::Horizontal,
                    site: (i, j),
                    log_ratio: table.get(i, j) - table.get(i - 1, j),
                });
            }
            Step::Down => {
                out.push(EdgeRatio {
                    kind: EdgeKind::Vertical,
                    site: (i, j),
                    log_ratio: table.get(i, j) - table.get(i, j - 1),
                });
                j -= 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeKs {
    pub kind: EdgeKind,
    pub site: (usize, usize),
    pub statistic: f64,
    pub p_value: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurkeReport {
    pub replicas: usize,
    pub edges: Vec<EdgeKs>,
    pub ks_pass_fraction: f64,
    pub corr_threshold: f64,
    pub max_abs_corr: f64,
    pub corr_pass_fraction: f64,
}

impl BurkeReport {
    /// At least `fraction` of edges pass KS and of pairs pass the correlation bound.
    pub fn passes(&self, fraction: f64) -> bool {
        self.ks_pass_fraction >= fraction && self.corr_pass_fraction >= fraction
    }
}

/// KS test of every edge against its stationary marginal and Pearson
/// correlations of all edge pairs. `samples[r]` holds the ratios of replica r,
/// all collected along the same staircase.
pub fn burke_test(
    samples: &[Vec<EdgeRatio>],
    horizontal_law: &CoupledSampler,
    vertical_law: &CoupledSampler,
    level: f64,
) -> Result<BurkeReport> {
    let replicas = samples.len();
    if replicas < 2 {
        return Err(Error::Validation(
            "burke_test needs at least two replicas".into(),
        ));
    }
    let edges = samples[0].len();
    if samples.iter().any(|s| s.len() != edges) {
        return Err(Error::Validation(
            "replicas disagree on the staircase length".into(),
        ));
    }
    let columns: Vec<Vec<f64>> = (0..edges)
        .map(|e| samples.iter().map(|s| s[e].log_ratio).collect())
        .collect();
    let mut ks = Vec::with_capacity(edges);
    for (e, col) in columns.iter().enumerate() {
        let label = samples[0][e];
        let law = match label.kind {
            EdgeKind::Horizontal => horizontal_law,
            EdgeKind::Vertical => vertical_law,
        };
        let fam = law.family();
        let u = col
            .iter()
            .map(|&lx| law.cdf_pair_z(fam.z_of_log_x(lx)).map(|p| p.0))
            .collect::<Result<Vec<_>>>()?;
        let d = ks_statistic(&u);
        let p = kolmogorov_pvalue(replicas, d);
        ks.push(EdgeKs {
            kind: label.kind,
            site: label.site,
            statistic: d,
            p_value: p,
            pass: p > level,
        });
    }
    let threshold = 4.0 / (replicas as f64).sqrt();
    let (mut pairs, mut ok, mut max_abs) = (0usize, 0usize, 0.0f64);
    for a in 0..edges {
        for b in a + 1..edges {
            let c = pearson(&columns[a], &columns[b]).abs();
            pairs += 1;
            if c <= threshold {
                ok += 1;
            }
            max_abs = max_abs.max(c);
        }
    }
    let ks_pass = ks.iter().filter(|e| e.pass).count() as f64 / edges.max(1) as f64;
    Ok(BurkeReport {
        replicas,
        edges: ks,
        ks_pass_fraction: ks_pass,
        corr_threshold: threshold,
        max_abs_corr: max_abs,
        corr_pass_fraction: if pairs == 0 {
            1.0
        } else {
            ok as f64 / pairs as f64
        },
    })
}
