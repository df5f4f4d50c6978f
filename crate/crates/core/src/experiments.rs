//! Scaling runs along the characteristic direction: centred moments of the
//! free energy and annealed exit-point moments per size N, with log-log slope
//! fits and replica-bootstrap intervals.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::lattice::{make_model, EnvironmentSampler, ModelKind, ModelSpec};
use crate::quenched::{exit_moment, exit_profile};
use crate::rng::{stream, Role};
use crate::stats::mean_and_stderr;

pub const MOMENT_ORDERS: [u32; 4] = [1, 2, 3, 4];
const MIN_REPLICAS: usize = 100;
// stream id reserved for bootstrap resampling
const BOOTSTRAP_REPLICA: u64 = 1 << 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelKind,
    pub mu: f64,
    pub theta: f64,
    pub beta: f64,
    pub n_list: Vec<usize>,
    pub gamma_offset: f64,
    /// Multiplies the N ψ₁^{f²}(a₂) term of m; 1 on the characteristic line.
    pub m_scale: f64,
    pub replicas: usize,
    pub seed: u64,
    pub bootstrap: usize,
    /// Stop after the current N once this many seconds have passed.
    pub time_budget_secs: Option<f64>,
}

impl RunConfig {
    pub fn new(model: ModelKind, n_list: Vec<usize>, replicas: usize, seed: u64) -> Self {
        let (mu, theta) = model.default_params();
        RunConfig {
            model,
            mu,
            theta,
            beta: 1.0,
            n_list,
            gamma_offset: 0.0,
            m_scale: 1.0,
            replicas,
            seed,
            bootstrap: 200,
            time_budget_secs: None,
        }
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        make_model(self.model, self.mu, self.theta, self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list[0] == 0 {
            return Err(Error::Validation(
                "N list must be non-empty and positive".into(),
            ));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation(format!(
                "N list must be strictly increasing, got {:?}",
                self.n_list
            )));
        }
        if self.replicas < MIN_REPLICAS {
            return Err(Error::Validation(format!(
                "scaling runs need at least {MIN_REPLICAS} replicas, got {}",
                self.replicas
            )));
        }
        if !(self.m_scale > 0.0 && self.m_scale.is_finite()) {
            return Err(Error::Validation(format!(
                "m_scale must be positive, got {}",
                self.m_scale
            )));
        }
        self.spec().map(|_| ())
    }

    /// (m, n) = (round(s N ψ₁^{f²}(a₂) + γ N^{2/3}), round(N ψ₁^{f¹}(a₁) + γ N^{2/3})).
    pub fn shape(&self, spec: &ModelSpec, big_n: usize) -> Result<(usize, usize)> {
        let nn = big_n as f64;
        let shift = self.gamma_offset * nn.powf(2.0 / 3.0);
        let m = (self.m_scale * nn * spec.f2.psi(1, spec.a2)? + shift)
            .round()
            .max(1.0) as usize;
        let n = (nn * spec.f1.psi(1, spec.a1)? + shift).round().max(1.0) as usize;
        Ok((m, n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub p: u32,
    pub value: f64,
    pub stderr: f64,
}

/// Per-replica observables at one size.
#[derive(Debug, Clone, PartialEq, Default)]
struct ReplicaColumns {
    log_z_bar: Vec<f64>,
    t1: Vec<[f64; 4]>,
    t2: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub big_n: usize,
    pub m: usize,
    pub n: usize,
    pub replicas: usize,
    /// E[|ln Z̄|^p], ln Z̄ centred by the exact mean m ψ₀^{f¹}(a₁) + n ψ₀^{f²}(a₂).
    pub log_z: Vec<MomentEstimate>,
    /// Annealed E[t₁^p].
    pub exit_t1: Vec<MomentEstimate>,
    pub exit_t2: Vec<MomentEstimate>,
    #[serde(skip)]
    columns: ReplicaColumns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    LogZ,
    ExitT1,
    ExitT2,
}

impl Observable {
    pub const ALL: [Observable; 3] = [Observable::LogZ, Observable::ExitT1, Observable::ExitT2];

    pub fn name(self) -> &'static str {
        match self {
            Observable::LogZ => "logZ",
            Observable::ExitT1 => "t1",
            Observable::ExitT2 => "t2",
        }
    }

    /// Growth exponent predicted for the p-th moment.
    pub fn target_slope(self, p: u32) -> f64 {
        match self {
            Observable::LogZ => p as f64 / 3.0,
            _ => 2.0 * p as f64 / 3.0,
        }
    }
}

impl ScalingPoint {
    pub fn moments(&self, obs: Observable) -> &[MomentEstimate] {
        match obs {
            Observable::LogZ => &self.log_z,
            Observable::ExitT1 => &self.exit_t1,
            Observable::ExitT2 => &self.exit_t2,
        }
    }

    fn values(&self, obs: Observable, p: u32, idx: &mut dyn Iterator<Item = usize>) -> f64 {
        let c = &self.columns;
        let (sum, count) = idx.fold((0.0, 0usize), |(s, k), i| {
            let v = match obs {
                Observable::LogZ => c.log_z_bar[i].abs().powi(p as i32),
                Observable::ExitT1 => c.t1[i][p as usize - 1],
                Observable::ExitT2 => c.t2[i][p as usize - 1],
            };
            (s + v, k + 1)
        });
        sum / count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub observable: Observable,
    pub p: u32,
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub config: RunConfig,
    pub points: Vec<ScalingPoint>,
    pub fits: Vec<SlopeFit>,
}

impl ScalingResult {
    pub fn fit(&self, obs: Observable, p: u32) -> Option<&SlopeFit> {
        self.fits.iter().find(|f| f.observable == obs && f.p == p)
    }
}

/// Weighted least squares of ln value on ln N, weights (value / stderr)^2
/// (uniform when any stderr is zero). The interval is ±1.96 standard errors.
pub fn fit_exponent(points: &[(f64, f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(bad) = points.iter().find(|(n, v, _)| !(*v > 0.0 && *n > 0.0)) {
        return Err(Error::Fit(format!(
            "log-log fit needs positive values, got N={} value={}",
            bad.0, bad.1
        )));
    }
    let uniform = points
        .iter()
        .any(|(_, v, s)| !(*s > 0.0) || !(v / s).is_finite());
    let rows: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(n, v, s)| (n.ln(), v.ln(), if uniform { 1.0 } else { (v / s).powi(2) }))
        .collect();
    let sw: f64 = rows.iter().map(|r| r.2).sum();
    let mx = rows.iter().map(|r| r.2 * r.0).sum::<f64>() / sw;
    let my = rows.iter().map(|r| r.2 * r.1).sum::<f64>() / sw;
    let sxx: f64 = rows.iter().map(|r| r.2 * (r.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all N are equal".into()));
    }
    let sxy: f64 = rows.iter().map(|r| r.2 * (r.0 - mx) * (r.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dof = (rows.len() - 2) as f64;
    let stderr = if uniform {
        let rss: f64 = rows
            .iter()
            .map(|r| (r.1 - intercept - slope * r.0).powi(2))
            .sum();
        if dof > 0.0 {
            (rss / dof / sxx).sqrt()
        } else {
            0.0
        }
    } else {
        (1.0 / sxx).sqrt()
    };
    Ok(SlopeFit {
        observable: Observable::LogZ,
        p: 0,
        slope,
        intercept,
        stderr,
        ci_lo: slope - 1.96 * stderr,
        ci_hi: slope + 1.96 * stderr,
        target: f64::NAN,
    })
}

fn estimates(values: impl Fn(u32) -> Vec<f64>) -> Vec<MomentEstimate> {
    MOMENT_ORDERS
        .iter()
        .map(|&p| {
            let (value, stderr) = mean_and_stderr(&values(p));
            MomentEstimate { p, value, stderr }
        })
        .collect()
}

fn run_point(
    config: &RunConfig,
    spec: &ModelSpec,
    sampler: &EnvironmentSampler,
    big_n: usize,
    exec: &Executor,
) -> Result<ScalingPoint> {
    let (m, n) = config.shape(spec, big_n)?;
    let mean = m as f64 * spec.f1.psi(0, spec.a1)? + n as f64 * spec.f2.psi(0, spec.a2)?;
    // every size draws from its own block of stream ids
    let base = (big_n as u64) << 32;
    let rows = exec.try_map(config.replicas, |t| -> Result<(f64, [f64; 4], [f64; 4])> {
        let env = sampler.sample(m, n, config.seed, base + t as u64)?;
        let profile = exit_profile(&env)?;
        let t1 = MOMENT_ORDERS.map(|p| exit_moment(&profile.south, p as f64));
        let t2 = MOMENT_ORDERS.map(|p| exit_moment(&profile.west, p as f64));
        Ok((profile.log_z - mean, t1, t2))
    })?;
    let mut columns = ReplicaColumns::default();
    for (lz, t1, t2) in rows {
        columns.log_z_bar.push(lz);
        columns.t1.push(t1);
        columns.t2.push(t2);
    }
    let c = &columns;
    let log_z = estimates(|p| c.log_z_bar.iter().map(|v| v.abs().powi(p as i32)).collect());
    let exit_t1 = estimates(|p| c.t1.iter().map(|v| v[p as usize - 1]).collect());
    let exit_t2 = estimates(|p| c.t2.iter().map(|v| v[p as usize - 1]).collect());
    Ok(ScalingPoint {
        big_n,
        m,
        n,
        replicas: config.replicas,
        log_z,
        exit_t1,
        exit_t2,
        columns,
    })
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn fit_all(config: &RunConfig, points: &[ScalingPoint]) -> Result<Vec<SlopeFit>> {
    if points.len() < 3 {
        return Ok(Vec::new());
    }
    let mut fits = Vec::new();
    let mut rng = stream(config.seed, BOOTSTRAP_REPLICA, Role::Aux);
    for obs in Observable::ALL {
        for &p in &MOMENT_ORDERS {
            let data: Vec<(f64, f64, f64)> = points
                .iter()
                .map(|pt| {
                    let e = pt.moments(obs)[p as usize - 1];
                    (pt.big_n as f64, e.value, e.stderr)
                })
                .collect();
            let mut fit = fit_exponent(&data)?;
            fit.observable = obs;
            fit.p = p;
            fit.target = obs.target_slope(p);
            if config.bootstrap >= 2 {
                let mut slopes = Vec::with_capacity(config.bootstrap);
                for _ in 0..config.bootstrap {
                    let resampled: Vec<(f64, f64, f64)> = points
                        .iter()
                        .zip(&data)
                        .map(|(pt, &(nn, _, se))| {
                            let r = pt.replicas;
                            let mut idx = (0..r).map(|_| rng.gen_range(0..r));
                            (nn, pt.values(obs, p, &mut idx), se)
                        })
                        .collect();
                    // a degenerate resample (e.g. all-zero exits) carries no slope
                    if let Ok(f) = fit_exponent(&resampled) {
                        slopes.push(f.slope);
                    }
                }
                if slopes.len() >= 2 {
                    slopes.sort_by(f64::total_cmp);
                    fit.ci_lo = percentile(&slopes, 0.025);
                    fit.ci_hi = percentile(&slopes, 0.975);
                }
            }
            fits.push(fit);
        }
    }
    Ok(fits)
}

/// Runs every size in `config.n_list`. Output depends only on the config, not
/// on the number of workers in `exec`.
pub fn run_scaling(config: &RunConfig, exec: &Executor) -> Result<ScalingResult> {
    config.validate()?;
    let spec = config.spec()?;
    let sampler = EnvironmentSampler::new(&spec)?.with_r_max(0);
    let start = Instant::now();
    let mut points = Vec::with_capacity(config.n_list.len());
    for &big_n in &config.n_list {
        if let (Some(budget), false) = (config.time_budget_secs, points.is_empty()) {
            let elapsed = start.elapsed().as_secs_f64();
            if elapsed > budget {
                return Err(Error::Partial {
                    completed: points.iter().map(|p: &ScalingPoint| p.big_n).collect(),
                    reason: format!("time budget of {budget} s exceeded after {elapsed:.1} s"),
                });
            }
        }
        points.push(run_point(config, &spec, &sampler, big_n, exec)?);
    }
    let fits = fit_all(config, &points)?;
    Ok(ScalingResult {
        config: config.clone(),
        points,
        fits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportFormat {
    Csv,
    Json,
    PlotScript,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "plot" | "gnuplot" | "plotscript" => Ok(ReportFormat::PlotScript),
            other => Err(Error::Validation(format!(
                "unknown report format '{other}' (csv, json, plot)"
            ))),
        }
    }
}

pub const CSV_HEADER: &str = "model,N,m,n,p,moment,stderr,replicas,seed";

/// One row of a moment CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub model: String,
    pub big_n: usize,
    pub m: usize,
    pub n: usize,
    pub p: u32,
    pub moment: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub seed: u64,
}

pub fn moment_rows(result: &ScalingResult, obs: Observable) -> Vec<MomentRow> {
    let model = result.config.model.name().to_string();
    result
        .points
        .iter()
        .flat_map(|pt| {
            let model = model.clone();
            pt.moments(obs).iter().map(move |e| MomentRow {
                model: model.clone(),
                big_n: pt.big_n,
                m: pt.m,
                n: pt.n,
                p: e.p,
                moment: e.value,
                stderr: e.stderr,
                replicas: pt.replicas,
                seed: result.config.seed,
            })
        })
        .collect()
}

pub fn write_moment_csv<W: Write>(rows: &[MomentRow], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.model, r.big_n, r.m, r.n, r.p, r.moment, r.stderr, r.replicas, r.seed
        )?;
    }
    Ok(())
}

pub fn read_moment_csv(text: &str) -> Result<Vec<MomentRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::Validation(format!(
                "unexpected CSV header {other:?}"
            )))
        }
    }
    let bad = |line: &str| Error::Validation(format!("malformed CSV row '{line}'"));
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad(line));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(line));
            let int = |i: usize| f[i].parse::<u64>().map_err(|_| bad(line));
            Ok(MomentRow {
                model: f[0].to_string(),
                big_n: int(1)? as usize,
                m: int(2)? as usize,
                n: int(3)? as usize,
                p: int(4)? as u32,
                moment: num(5)?,
                stderr: num(6)?,
                replicas: int(7)? as usize,
                seed: int(8)?,
            })
        })
        .collect()
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Paths of the CSV files for `base`: free energy, t₁ and t₂.
pub fn csv_paths(base: &Path) -> [PathBuf; 3] {
    [
        with_suffix(base, ".csv"),
        with_suffix(base, "_exit_t1.csv"),
        with_suffix(base, "_exit_t2.csv"),
    ]
}

fn write_csvs(result: &ScalingResult, base: &Path) -> Result<Vec<PathBuf>> {
    let paths = csv_paths(base);
    for (path, obs) in paths.iter().zip(Observable::ALL) {
        let mut buf = Vec::new();
        write_moment_csv(&moment_rows(result, obs), &mut buf)?;
        fs::write(path, buf)?;
    }
    Ok(paths.to_vec())
}

/// gnuplot script plotting every moment order on log-log axes with its fitted line.
pub fn plot_script(result: &ScalingResult, base: &Path) -> String {
    let paths = csv_paths(base);
    let name = |p: &Path| {
        p.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set logscale xy");
    let _ = writeln!(s, "set xlabel 'N'");
    let _ = writeln!(s, "set key left top");
    let _ = writeln!(s, "set terminal pngcairo size 1500,450");
    let _ = writeln!(s, "set output '{}'", name(&with_suffix(base, ".png")));
    let _ = writeln!(s, "set multiplot layout 1,3");
    for (path, obs) in paths.iter().zip(Observable::ALL) {
        let _ = writeln!(
            s,
            "set title '{} ({})'",
            obs.name(),
            result.config.model.name()
        );
        let mut parts = Vec::new();
        for &p in &MOMENT_ORDERS {
            parts.push(format!(
                "'{}' every ::1 using 2:($5=={p} ? $6 : 1/0) with points pt 7 title 'p={p}'",
                name(path)
            ));
            if let Some(f) = result.fit(obs, p) {
                parts.push(format!(
                    "exp({}) * x**{} with lines title sprintf('slope %.3f', {})",
                    f.intercept, f.slope, f.slope
                ));
            }
        }
        let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    }
    let _ = writeln!(s, "unset multiplot");
    s
}

/// Writes the report under the path prefix `base` and returns the files written.
/// CSV: `base.csv` (free energy), `base_exit_t1.csv`, `base_exit_t2.csv`;
/// JSON: `base.json`; plot script: `base.gp` next to its CSV inputs.
pub fn emit_report(
    result: &ScalingResult,
    format: ReportFormat,
    base: &Path,
) -> Result<Vec<PathBuf>> {
    match format {
        ReportFormat::Csv => write_csvs(result, base),
        ReportFormat::Json => {
            let path = with_suffix(base, ".json");
            fs::write(&path, serde_json::to_string_pretty(result)?)?;
            Ok(vec![path])
        }
        ReportFormat::PlotScript => {
            let mut out = write_csvs(result, base)?;
            let path = with_suffix(base, ".gp");
            fs::write(&path, plot_script(result, base))?;
            out.push(path);
            Ok(out)
        }
    }
}
