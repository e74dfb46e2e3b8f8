//! Command-line front end: reproducible estimation runs with
//! machine-readable reports.
//!
//! Subcommands map onto the library: `estimate` (running chain average),
//! `mse` (coupled-chain error estimation), `compare` (Cholesky baseline vs
//! chain, with timings), `diagnose` (dense oracle report), `sample` (emit
//! chain states as CSV). Reports are JSON on stdout; all wall-clock fields
//! live under `"timing"` so byte-level determinism checks can exclude them.
//!
//! Exit codes: 0 success, 1 numeric failure, 2 usage or I/O error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use gausschain::baseline;
use gausschain::chain::{self, IndexSchedule};
use gausschain::covariance::{validate, CovarianceModel, ModelDescriptor, SYM_TOL};
use gausschain::diagnostics::{self, exp_lipschitz_grid};
use gausschain::estimators::{self, FunctionalDescriptor, TestFunctional};
use gausschain::rng::{lanes, RngStream};
use gausschain::Error as CoreError;

#[derive(Parser)]
#[command(name = "gausschain", version, about = "Markov-chain sampling of Gaussian vectors with O(d) storage")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Running-average estimate of E h(X) from one chain
    Estimate(EstimateArgs),
    /// Coupled-chain estimate of MSE(n; b) over replications
    Mse(MseArgs),
    /// Cholesky baseline vs chain: estimates and timings
    Compare(CompareArgs),
    /// Dense-oracle diagnostics report (small d)
    Diagnose(DiagnoseArgs),
    /// Emit chain state vectors as CSV
    Sample(SampleArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Model: `identity` | `powexp` | `scaledexp` (built from flags) or a
    /// path to a JSON descriptor file
    #[arg(long)]
    model: Option<String>,
    /// Dimension for inline models (kernels place points on the unit grid)
    #[arg(long)]
    d: Option<usize>,
    /// Kernel range parameter
    #[arg(long)]
    r: Option<f64>,
    /// Powered-exponential exponent in (0, 2]
    #[arg(long)]
    theta: Option<f64>,
    /// Scaled-exponential off-diagonal ratio in (0, 1)
    #[arg(long)]
    ratio: Option<f64>,
    /// Functional: `const:<v>` | `max[:<scale>]` | `norm` |
    /// `indicator:<a,...>` | `coordinate:<i>` or inline JSON
    #[arg(long = "h")]
    h: Option<String>,
    /// RNG seed; replication r draws from stream id r
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replications (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Also write the report to this file
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config file; explicit flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Chain length n (states X_b .. X_{n-1} are averaged)
    #[arg(long)]
    n: Option<u64>,
    /// Burn-in; defaults to n/2
    #[arg(long)]
    b: Option<u64>,
}

#[derive(Args)]
struct MseArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n: Option<u64>,
    /// Burn-in; defaults to n/2
    #[arg(long)]
    b: Option<u64>,
    /// Number of independent replications
    #[arg(long)]
    replications: Option<u32>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    n: Option<u64>,
    /// Burn-in; defaults to n/2
    #[arg(long)]
    b: Option<u64>,
    /// Exact samples drawn by the baseline
    #[arg(long)]
    n_prime: Option<u64>,
    /// Target RMSE for the time-ratio column; defaults to the baseline's
    /// own standard error
    #[arg(long)]
    rmse: Option<f64>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Length of the trace-deficit series
    #[arg(long)]
    max_n: Option<usize>,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Steps to run
    #[arg(long)]
    n: Option<u64>,
    /// Comma-separated step counts at which to emit rows; default: n
    #[arg(long)]
    checkpoints: Option<String>,
    /// Write a step-record log (CSV: n,i,g) for replay
    #[arg(long)]
    log_steps: Option<PathBuf>,
}

/// Values an on-disk config file may provide; flags win over these.
#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase", default)]
struct FileConfig {
    model: Option<ModelDescriptor>,
    h: Option<FunctionalDescriptor>,
    n: Option<u64>,
    b: Option<u64>,
    replications: Option<u32>,
    seed: Option<u64>,
    threads: Option<usize>,
    n_prime: Option<u64>,
    max_n: Option<usize>,
}

enum CliError {
    /// Bad flags, unreadable files, malformed JSON -> exit 2
    Usage(String),
    /// Failure in the numerics -> exit 1
    Numeric(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Factorization { .. }
            | CoreError::NonFinite(_)
            | CoreError::NotPositiveSemiDefinite { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage<T: ToString>(msg: T) -> CliError {
    CliError::Usage(msg.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => cmd_estimate(args),
        Command::Mse(args) => cmd_mse(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Sample(args) => cmd_sample(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("numeric error: {msg}");
            ExitCode::from(1)
        }
    }
}

// ---------------------------------------------------------------------
// config resolution

struct Resolved {
    model_desc: ModelDescriptor,
    model: CovarianceModel,
    file: FileConfig,
    seed: u64,
}

fn resolve(common: &CommonArgs) -> CliResult<Resolved> {
    let file: FileConfig = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("bad config {}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };
    let model_desc = resolve_model_descriptor(common, &file)?;
    let model = model_desc.build()?;
    if let CovarianceModel::Dense(m) = &model {
        if m.was_symmetrized() {
            eprintln!("warning: dense input was asymmetric beyond tolerance; symmetrized by (V + V^T)/2");
        }
    }
    let seed = common.seed.or(file.seed).unwrap_or(0);
    if let Some(threads) = common.threads.or(file.threads) {
        if threads == 0 {
            return Err(usage("--threads must be positive"));
        }
        // ignore the error if a pool already exists (e.g. repeated calls in tests)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    Ok(Resolved {
        model_desc,
        model,
        file,
        seed,
    })
}

fn resolve_model_descriptor(common: &CommonArgs, file: &FileConfig) -> CliResult<ModelDescriptor> {
    let Some(spec) = common.model.as_deref() else {
        return file
            .model
            .clone()
            .ok_or_else(|| usage("no model given (--model or config file)"));
    };
    match spec {
        "identity" => {
            let d = common
                .d
                .ok_or_else(|| usage("--model identity needs --d"))?;
            Ok(ModelDescriptor::Identity { d })
        }
        "powexp" => Ok(ModelDescriptor::Powexp {
            d: Some(common.d.ok_or_else(|| usage("--model powexp needs --d"))?),
            locations: None,
            r: common.r.ok_or_else(|| usage("--model powexp needs --r"))?,
            theta: common
                .theta
                .ok_or_else(|| usage("--model powexp needs --theta"))?,
        }),
        "scaledexp" => Ok(ModelDescriptor::Scaledexp {
            d: Some(common.d.ok_or_else(|| usage("--model scaledexp needs --d"))?),
            locations: None,
            r: common.r.ok_or_else(|| usage("--model scaledexp needs --r"))?,
            ratio: common
                .ratio
                .ok_or_else(|| usage("--model scaledexp needs --ratio"))?,
        }),
        path => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read model file {path}: {e}")))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("bad model descriptor {path}: {e}")))
        }
    }
}

fn resolve_functional(
    common: &CommonArgs,
    file: &FileConfig,
) -> CliResult<(FunctionalDescriptor, TestFunctional)> {
    let desc = match common.h.as_deref() {
        Some(spec) => parse_functional_spec(spec)?,
        None => file
            .h
            .clone()
            .ok_or_else(|| usage("no functional given (--h or config file)"))?,
    };
    let h = desc.build()?;
    Ok((desc, h))
}

fn parse_functional_spec(spec: &str) -> CliResult<FunctionalDescriptor> {
    if spec.trim_start().starts_with('{') {
        return serde_json::from_str(spec).map_err(|e| usage(format!("bad functional JSON: {e}")));
    }
    let (name, arg) = match spec.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (spec, None),
    };
    let parse_f64 = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| usage(format!("expected a number in functional spec, got {s:?}")))
    };
    match (name, arg) {
        ("const", Some(v)) => Ok(FunctionalDescriptor::Const { value: parse_f64(v)? }),
        ("max", None) => Ok(FunctionalDescriptor::Max { scale: 1.0 }),
        ("max", Some(v)) => Ok(FunctionalDescriptor::Max { scale: parse_f64(v)? }),
        ("norm", None) => Ok(FunctionalDescriptor::Norm),
        ("indicator", Some(list)) => {
            let threshold = list
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|_| usage(format!("bad indicator thresholds {list:?}")))?;
            Ok(FunctionalDescriptor::IndicatorBelow { threshold })
        }
        ("coordinate", Some(i)) => Ok(FunctionalDescriptor::Coordinate {
            index: i
                .parse()
                .map_err(|_| usage(format!("bad coordinate index {i:?}")))?,
        }),
        _ => Err(usage(format!(
            "unknown functional spec {spec:?} (try const:<v>, max[:<scale>], norm, \
             indicator:<a,...>, coordinate:<i>, or JSON)"
        ))),
    }
}

/// Writes to stdout, treating a closed pipe (e.g. `| head`) as success.
fn print_stdout(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(usage(format!("cannot write to stdout: {e}"))),
    }
}

fn emit(report: &Value, out: Option<&Path>) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| usage(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    print_stdout(&text)?;
    if let Some(path) = out {
        fs::write(path, text.as_bytes())
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn require_n(n: Option<u64>, file: &FileConfig) -> CliResult<u64> {
    n.or(file.n).ok_or_else(|| usage("missing --n"))
}

fn burn_in(b: Option<u64>, file: &FileConfig, n: u64) -> CliResult<u64> {
    let b = b.or(file.b).unwrap_or(n / 2);
    if b >= n {
        return Err(usage(format!("burn-in b = {b} must be smaller than n = {n}")));
    }
    Ok(b)
}

// ---------------------------------------------------------------------
// subcommands

fn cmd_estimate(args: EstimateArgs) -> CliResult<()> {
    let resolved = resolve(&args.common)?;
    let (h_desc, h) = resolve_functional(&args.common, &resolved.file)?;
    let n = require_n(args.n, &resolved.file)?;
    let b = burn_in(args.b, &resolved.file, n)?;
    let start = Instant::now();
    let est = estimators::mcmc_estimate_seeded(&resolved.model, &h, n, b, resolved.seed, 0)?;
    let report = json!({
        "command": "estimate",
        "model": resolved.model_desc,
        "functional": h_desc,
        "estimate": est.estimate,
        "n": est.n,
        "b": est.b,
        "seed": resolved.seed,
        "timing": { "wallSeconds": start.elapsed().as_secs_f64() },
    });
    emit(&report, args.common.out.as_deref())
}

fn cmd_mse(args: MseArgs) -> CliResult<()> {
    let resolved = resolve(&args.common)?;
    let (h_desc, h) = resolve_functional(&args.common, &resolved.file)?;
    let n = require_n(args.n, &resolved.file)?;
    let b = burn_in(args.b, &resolved.file, n)?;
    let replications = args
        .replications
        .or(resolved.file.replications)
        .unwrap_or(100);
    let start = Instant::now();
    let report = estimators::estimate_mse(&resolved.model, &h, n, b, replications, resolved.seed)?;
    let out = json!({
        "command": "mse",
        "model": resolved.model_desc,
        "functional": h_desc,
        "seed": resolved.seed,
        "report": report,
        "rmse": report.mse.sqrt(),
        "timing": { "wallSeconds": start.elapsed().as_secs_f64() },
    });
    emit(&out, args.common.out.as_deref())
}

fn cmd_compare(args: CompareArgs) -> CliResult<()> {
    let resolved = resolve(&args.common)?;
    let (h_desc, h) = resolve_functional(&args.common, &resolved.file)?;
    let n = require_n(args.n, &resolved.file)?;
    let b = burn_in(args.b, &resolved.file, n)?;
    let n_prime = args.n_prime.or(resolved.file.n_prime).unwrap_or(10_000);

    let mcmc_start = Instant::now();
    let mcmc = estimators::mcmc_estimate_seeded(&resolved.model, &h, n, b, resolved.seed, 0)?;
    let mcmc_seconds = mcmc_start.elapsed().as_secs_f64();

    // the baseline side is best-effort: capacity or definiteness failures
    // degrade to a chain-only report
    let mut warning: Option<String> = None;
    let mut mc_value = Value::Null;
    let mut timing = json!({
        "mcmcSeconds": mcmc_seconds,
        "factorizationSeconds": Value::Null,
        "mcSeconds": Value::Null,
        "timeRatio": Value::Null,
    });
    let fact_start = Instant::now();
    match baseline::cholesky(&resolved.model, baseline::DEFAULT_PIVOT_TOL) {
        Ok(factor) => {
            let factorization_seconds = fact_start.elapsed().as_secs_f64();
            let mc_start = Instant::now();
            let mc = baseline::mc_estimate(
                &factor,
                &h,
                n_prime,
                &mut RngStream::new(resolved.seed, lanes::BASELINE),
            )?;
            let mc_seconds = mc_start.elapsed().as_secs_f64();
            // time for the baseline to reach RMSE epsilon, over the chain's
            // measured time; epsilon defaults to the baseline's own stderr
            let epsilon_sq = match args.rmse {
                Some(eps) if eps > 0.0 => eps * eps,
                _ => mc.var_of_mean.max(f64::MIN_POSITIVE),
            };
            let samples_needed = mc.stdev * mc.stdev / epsilon_sq;
            let tau_mc = factorization_seconds + mc_seconds * samples_needed / n_prime as f64;
            mc_value = json!({
                "mean": mc.mean,
                "stdev": mc.stdev,
                "varOfMean": mc.var_of_mean,
                "nPrime": mc.n_prime,
            });
            timing = json!({
                "mcmcSeconds": mcmc_seconds,
                "factorizationSeconds": factorization_seconds,
                "mcSeconds": mc_seconds,
                "timeRatio": tau_mc / mcmc_seconds,
            });
        }
        Err(e @ CoreError::CapacityExceeded { .. }) | Err(e @ CoreError::Factorization { .. }) => {
            warning = Some(format!("baseline unavailable: {e}"));
        }
        Err(e) => return Err(e.into()),
    }

    let report = json!({
        "command": "compare",
        "model": resolved.model_desc,
        "functional": h_desc,
        "seed": resolved.seed,
        "mcmc": { "estimate": mcmc.estimate, "n": mcmc.n, "b": mcmc.b },
        "mc": mc_value,
        "warning": warning,
        "timing": timing,
    });
    emit(&report, args.common.out.as_deref())
}

fn cmd_diagnose(args: DiagnoseArgs) -> CliResult<()> {
    let resolved = resolve(&args.common)?;
    let max_n = args.max_n.or(resolved.file.max_n).unwrap_or(200);
    let d = resolved.model.dim();
    let v = resolved.model.materialize(diagnostics::DIAGNOSTICS_CAP)?;
    let validation = validate(&resolved.model, SYM_TOL)?;
    let lambda = validation.min_eigenvalue;
    let trace = diagnostics::expected_m_norms(&v, max_n)?;
    let df = d as f64;
    let d_sq_over_n: Vec<f64> = (0..=max_n)
        .map(|j| df * df / (j.max(1) as f64))
        .collect();
    let geometric: Vec<f64> = (0..=max_n)
        .map(|j| df * df * (1.0 - lambda / df).powi(j as i32))
        .collect();
    let grid = exp_lipschitz_grid(4.0, 0.05, 20);
    let certification = diagnostics::certify_exp_lipschitz(&grid)?;
    let final_deficit = *trace.values().last().unwrap();
    let report = json!({
        "command": "diagnose",
        "model": resolved.model_desc,
        "d": d,
        "traceDeficitSeries": trace.values(),
        "bounds": {
            "dSqOverN": d_sq_over_n,
            "geometric": geometric,
        },
        "w2Estimates": {
            "sqrtTraceDeficitAtMaxN": final_deficit.max(0.0).sqrt(),
            "dOverSqrtN": estimators::wasserstein_bound(d, max_n.max(1) as u64),
        },
        "certifications": {
            "expLipschitz": certification,
            "validation": validation,
        },
    });
    emit(&report, args.common.out.as_deref())
}

fn cmd_sample(args: SampleArgs) -> CliResult<()> {
    let resolved = resolve(&args.common)?;
    let n = args.n.or(resolved.file.n).unwrap_or(0);
    let d = resolved.model.dim();
    let checkpoints: Vec<u64> = match &args.checkpoints {
        Some(list) => {
            let mut cps = list
                .split(',')
                .map(|t| t.trim().parse::<u64>())
                .collect::<Result<Vec<u64>, _>>()
                .map_err(|_| usage(format!("bad checkpoint list {list:?}")))?;
            cps.sort_unstable();
            cps.dedup();
            if cps.iter().any(|&c| c > n) {
                return Err(usage("checkpoints must not exceed n"));
            }
            cps
        }
        None => vec![n],
    };

    let mut log = match &args.log_steps {
        Some(path) => {
            let mut f = fs::File::create(path)
                .map_err(|e| usage(format!("cannot create {}: {e}", path.display())))?;
            writeln!(f, "n,i,g").map_err(|e| usage(e.to_string()))?;
            Some(f)
        }
        None => None,
    };

    let mut rows: Vec<String> = Vec::with_capacity(checkpoints.len());
    let fmt_row = |step: u64, x: &[f64]| {
        let mut row = String::with_capacity(16 * (d + 1));
        row.push_str(&step.to_string());
        for v in x {
            row.push(',');
            row.push_str(&format!("{v}"));
        }
        row
    };
    if checkpoints.first() == Some(&0) {
        rows.push(fmt_row(0, &vec![0.0; d]));
    }
    let mut schedule = IndexSchedule::uniform_random(
        d,
        RngStream::new(resolved.seed, lanes::id(lanes::INDEX, 0)),
    );
    let mut gaussians = RngStream::new(resolved.seed, lanes::id(lanes::GAUSSIAN, 0));
    let mut io_err: Option<String> = None;
    chain::run(
        &resolved.model,
        &mut schedule,
        &mut gaussians,
        n,
        vec![0.0; d],
        |rec, state| {
            if let Some(f) = log.as_mut() {
                if let Err(e) = writeln!(f, "{},{},{}", rec.n, rec.i, rec.g) {
                    io_err.get_or_insert(e.to_string());
                }
            }
            let steps_done = rec.n + 1;
            if checkpoints.binary_search(&steps_done).is_ok() {
                rows.push(fmt_row(steps_done, state.x()));
            }
        },
    )?;
    if let Some(e) = io_err {
        return Err(usage(format!("step log write failed: {e}")));
    }

    let mut csv = String::new();
    csv.push_str("step");
    for k in 0..d {
        csv.push_str(&format!(",x{k}"));
    }
    csv.push('\n');
    for row in &rows {
        csv.push_str(row);
        csv.push('\n');
    }
    print_stdout(&csv)?;
    if let Some(path) = &args.common.out {
        fs::write(path, csv.as_bytes())
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}
