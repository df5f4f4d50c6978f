use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use betagamma_core::exec::Executor;
use betagamma_core::experiments::{emit_report, run_scaling, Observable, ReportFormat, RunConfig};
use betagamma_core::lattice::{characteristic_shape, make_model, EnvironmentSampler};
use betagamma_core::quenched::exit_profile;
use betagamma_core::verify::{run_verify, Suite, VerifyScale};
use betagamma_core::{ModelKind, ModelSpec};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};

mod config;

use config::FileConfig;

const THREADS_ENV: &str = "BETAGAMMA_THREADS";
const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "betagamma",
    version,
    about = "Stationary beta-gamma polymers: identity checks and scaling runs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the identity and bound checks for one model.
    Verify(VerifyArgs),
    /// Moments of ln Z and of the exit points along the characteristic direction.
    Scaling(ScalingArgs),
    /// Annealed exit-point distributions on one box.
    ExitTimes(ExitArgs),
    /// Sample one environment and write it as JSON.
    DumpEnv(DumpArgs),
}

#[derive(Debug, Clone, Args)]
struct ModelArgs {
    /// Settings file (TOML) with the same keys as the long flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ig, g, b or ib.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Defaults to $BETAGAMMA_THREADS, then 0.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated subset of: mellin, pn, ibp, dp, exit, nsew, burke, sigma, bounds.
    #[arg(long, value_delimiter = ',')]
    checks: Vec<String>,
    /// text or json.
    #[arg(long)]
    format: Option<String>,
    /// Also write the JSON report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScalingArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated, strictly increasing sizes.
    #[arg(long = "N", value_delimiter = ',')]
    n_list: Vec<usize>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    gamma_offset: Option<f64>,
    /// Factor on the m side of the shape; 1 is the characteristic line.
    #[arg(long)]
    m_scale: Option<f64>,
    /// Bootstrap resamples for the slope intervals.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Seconds after which no further N is started.
    #[arg(long)]
    time_budget: Option<f64>,
    /// Output path prefix.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv, json or plot.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Clone, Args)]
struct BoxArgs {
    /// Size along the characteristic direction; ignored when --m and --n are given.
    #[arg(long = "N")]
    big_n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    gamma_offset: Option<f64>,
}

#[derive(Debug, Args)]
struct ExitArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    shape: BoxArgs,
    #[arg(long)]
    replicas: Option<usize>,
    /// Output path prefix for `<out>_south.csv` and `<out>_west.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DumpArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    shape: BoxArgs,
    /// Replica index within the seed's streams.
    #[arg(long, default_value_t = 0)]
    replica: u64,
    /// JSON file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A bad or missing setting; reported with usage text and exit code 2.
#[derive(Debug)]
struct Usage {
    subcommand: &'static str,
    message: String,
}

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Usage {}

fn usage(subcommand: &'static str, message: impl Into<String>) -> anyhow::Error {
    Usage {
        subcommand,
        message: message.into(),
    }
    .into()
}

struct Setup {
    spec: ModelSpec,
    seed: u64,
    exec: Executor,
    file: FileConfig,
}

fn setup(sub: &'static str, args: &ModelArgs) -> anyhow::Result<Setup> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path).map_err(|e| usage(sub, format!("{e:#}")))?,
        None => FileConfig::default(),
    };
    let name = args
        .model
        .clone()
        .or_else(|| file.model.clone())
        .ok_or_else(|| {
            usage(
                sub,
                "the following required arguments were not provided:\n  --model <MODEL>",
            )
        })?;
    let kind: ModelKind = name.parse().map_err(|e| usage(sub, format!("{e}")))?;
    let (mu0, theta0) = kind.default_params();
    let spec = make_model(
        kind,
        args.mu.or(file.mu).unwrap_or(mu0),
        args.theta.or(file.theta).unwrap_or(theta0),
        args.beta.or(file.beta).unwrap_or(1.0),
    )
    .map_err(|e| usage(sub, format!("{e}")))?;
    let threads = match args.threads.or(file.threads) {
        Some(t) => t,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| usage(sub, format!("{THREADS_ENV}={v} is not a thread count")))?,
            Err(_) => 0,
        },
    };
    let seed = args.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    Ok(Setup {
        spec,
        seed,
        exec: Executor::new(threads),
        file,
    })
}

fn shape(
    sub: &'static str,
    spec: &ModelSpec,
    b: &BoxArgs,
    file: &FileConfig,
) -> anyhow::Result<(usize, usize)> {
    let m = b.m.or(file.m);
    let n = b.n.or(file.n);
    if let (Some(m), Some(n)) = (m, n) {
        if m == 0 || n == 0 {
            return Err(usage(sub, "--m and --n must be positive"));
        }
        return Ok((m, n));
    }
    let big_n = b
        .big_n
        .or_else(|| file.n_list.as_ref().and_then(|l| l.first().copied()))
        .ok_or_else(|| usage(sub, "give either --N or both --m and --n"))?;
    Ok(characteristic_shape(
        spec,
        big_n,
        b.gamma_offset.or(file.gamma_offset).unwrap_or(0.0),
    ))
}

fn verify(args: &VerifyArgs) -> anyhow::Result<bool> {
    let sub = "verify";
    let s = setup(sub, &args.model)?;
    let names = if args.checks.is_empty() {
        s.file.checks.clone().unwrap_or_default()
    } else {
        args.checks.clone()
    };
    let suites: Vec<Suite> = if names.is_empty() {
        Suite::ALL.to_vec()
    } else {
        names
            .iter()
            .map(|n| n.parse().map_err(|e| usage(sub, format!("{e}"))))
            .collect::<anyhow::Result<_>>()?
    };
    let json = match args.format.clone().or(s.file.format.clone()).as_deref() {
        None | Some("text") => false,
        Some("json") => true,
        Some(other) => {
            return Err(usage(
                sub,
                format!("unknown verify format '{other}' (text or json)"),
            ))
        }
    };
    let outcomes = run_verify(&s.spec, s.seed, &VerifyScale::default(), &suites, &s.exec)?;
    let report = serde_json::to_string_pretty(&outcomes)?;
    if json {
        println!("{report}");
    } else {
        for c in &outcomes {
            println!("{}", c.line());
        }
    }
    if let Some(path) = args.out.clone().or(s.file.out.clone()) {
        fs::write(&path, &report).with_context(|| format!("writing {}", path.display()))?;
    }
    let failed = outcomes.iter().filter(|c| !c.pass).count();
    if !json {
        println!(
            "{} of {} checks passed",
            outcomes.len() - failed,
            outcomes.len()
        );
    }
    Ok(failed == 0)
}

fn scaling(args: &ScalingArgs) -> anyhow::Result<bool> {
    let sub = "scaling";
    let s = setup(sub, &args.model)?;
    let f = &s.file;
    let n_list = if args.n_list.is_empty() {
        f.n_list.clone().unwrap_or_default()
    } else {
        args.n_list.clone()
    };
    if n_list.is_empty() {
        return Err(usage(
            sub,
            "the following required arguments were not provided:\n  --N <N>",
        ));
    }
    let mut config = RunConfig::new(
        s.spec.kind,
        n_list,
        args.replicas.or(f.replicas).unwrap_or(500),
        s.seed,
    );
    config.mu = s.spec.mu;
    config.theta = s.spec.theta;
    config.beta = s.spec.beta;
    config.gamma_offset = args.gamma_offset.or(f.gamma_offset).unwrap_or(0.0);
    config.m_scale = args.m_scale.or(f.m_scale).unwrap_or(1.0);
    config.bootstrap = args.bootstrap.or(f.bootstrap).unwrap_or(config.bootstrap);
    config.time_budget_secs = args.time_budget.or(f.time_budget);
    config.validate().map_err(|e| usage(sub, format!("{e}")))?;
    let format: ReportFormat = args
        .format
        .clone()
        .or(f.format.clone())
        .unwrap_or_else(|| "csv".into())
        .parse()
        .map_err(|e| usage(sub, format!("{e}")))?;
    let out = args
        .out
        .clone()
        .or(f.out.clone())
        .unwrap_or_else(|| PathBuf::from(format!("scaling_{}", config.model)));

    let result = run_scaling(&config, &s.exec)?;
    println!(
        "{:>6} {:>6} {:>6} {:>14} {:>12} {:>12}",
        "N", "m", "n", "E|lnZ|^2", "E[t1]", "E[t2]"
    );
    for p in &result.points {
        println!(
            "{:>6} {:>6} {:>6} {:>14.6} {:>12.4} {:>12.4}",
            p.big_n, p.m, p.n, p.log_z[1].value, p.exit_t1[0].value, p.exit_t2[0].value
        );
    }
    if !result.fits.is_empty() {
        println!("slopes (log-log, 95% bootstrap interval):");
        for obs in Observable::ALL {
            for p in 1..=2 {
                if let Some(fit) = result.fit(obs, p) {
                    println!(
                        "  {:<5} p={} slope {:.4} [{:.4}, {:.4}] target {:.4}",
                        obs.name(),
                        p,
                        fit.slope,
                        fit.ci_lo,
                        fit.ci_hi,
                        fit.target
                    );
                }
            }
        }
    }
    for path in emit_report(&result, format, &out)? {
        println!("wrote {}", path.display());
    }
    Ok(true)
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn exit_times(args: &ExitArgs) -> anyhow::Result<bool> {
    let sub = "exit-times";
    let s = setup(sub, &args.model)?;
    let (m, n) = shape(sub, &s.spec, &args.shape, &s.file)?;
    let replicas = args.replicas.or(s.file.replicas).unwrap_or(100);
    if replicas == 0 {
        return Err(usage(sub, "--replicas must be positive"));
    }
    let sampler = EnvironmentSampler::new(&s.spec)?.with_r_max(0);
    let profiles = s.exec.try_map(replicas, |t| {
        exit_profile(&sampler.sample(m, n, s.seed, t as u64)?)
    })?;
    let mut south = vec![0.0; m + 1];
    let mut west = vec![0.0; n + 1];
    for p in &profiles {
        south
            .iter_mut()
            .zip(&p.south.probs)
            .for_each(|(acc, q)| *acc += q / replicas as f64);
        west.iter_mut()
            .zip(&p.west.probs)
            .for_each(|(acc, q)| *acc += q / replicas as f64);
    }
    let mean = |d: &[f64]| d.iter().enumerate().map(|(l, q)| l as f64 * q).sum::<f64>();
    println!(
        "{} ({m},{n}), {replicas} replicas: E[t1] = {:.6}, E[t2] = {:.6}",
        s.spec.kind,
        mean(&south),
        mean(&west)
    );
    let out = args
        .out
        .clone()
        .or(s.file.out.clone())
        .unwrap_or_else(|| PathBuf::from(format!("exit_{}", s.spec.kind)));
    for (suffix, probs) in [("_south.csv", &south), ("_west.csv", &west)] {
        let path = with_suffix(&out, suffix);
        let mut w = std::io::BufWriter::new(
            fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
        );
        writeln!(w, "l,q")?;
        for (l, q) in probs.iter().enumerate() {
            writeln!(w, "{l},{q}")?;
        }
        w.flush()?;
        println!("wrote {}", path.display());
    }
    Ok(true)
}

fn dump_env(args: &DumpArgs) -> anyhow::Result<bool> {
    let sub = "dump-env";
    let s = setup(sub, &args.model)?;
    let (m, n) = shape(sub, &s.spec, &args.shape, &s.file)?;
    let env = EnvironmentSampler::new(&s.spec)?.sample(m, n, s.seed, args.replica)?;
    let json = env.to_json()?;
    match args.out.clone().or(s.file.out.clone()) {
        Some(path) => {
            fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(a) => verify(a),
        Command::Scaling(a) => scaling(a),
        Command::ExitTimes(a) => exit_times(a),
        Command::DumpEnv(a) => dump_env(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => match e.downcast_ref::<Usage>() {
            Some(u) => {
                let mut cmd = Cli::command();
                cmd.build();
                let mut sub = cmd
                    .find_subcommand_mut(u.subcommand)
                    .expect("known subcommand")
                    .clone();
                sub.error(ErrorKind::ValueValidation, &u.message).exit()
            }
            None => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}
