//! Command-line entry point: flat key-value experiment configs, the
//! run/sweep/oracle/diagnostics commands, and bit-stable CSV/JSON emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::calibrator::{mc_tau_p_star, oracle_tau_p_star};
use crate::environment::{
    conditional_min_eig_estimate, sample_context, ContextDistribution, GroundTruth,
};
use crate::estimator::{log_likelihood_gradient, regularized_log_likelihood, LabeledSample};
use crate::harness::{
    run_experiment, AggregateReport, DistributionSpec, ExperimentConfig, RoundRecord, RunSummary,
    ThetaStarSpec,
};
use crate::numerics::{
    dot, min_eigenvalue, norm2, reg_inc_beta, unit_ball_volume, RngStream, SymMatrix,
};
use crate::policies::{Mode, RefitSchedule};

pub const CSV_FORMAT_VERSION: &str = "scout-csv-v1";
pub const JSON_FORMAT_VERSION: &str = "scout-aggregate-v1";

/// Exit codes: 0 success, 1 validation, 2 runtime, 3 diagnostic failure.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_DIAGNOSTIC: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "scout", version, about = "Safe sequential testing for logistic outcomes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every seed of one experiment configuration.
    Run(RunArgs),
    /// Run a grid of (dimension, alpha) cells.
    Sweep(SweepArgs),
    /// Print the analytic threshold and test rate, with a Monte-Carlo cross-check.
    Oracle(OracleArgs),
    /// Run the numeric validation suite.
    Diagnostics,
    /// Parse and validate a config file, echoing the resolved form.
    ValidateConfig(ConfigOnlyArgs),
}

#[derive(Args, Debug, Default, Clone)]
struct RunArgs {
    /// Flat key-value config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Inclusive seed range `A..B` or comma list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// `rigorous` or `practical`.
    #[arg(long)]
    mode: Option<String>,
    /// Output directory for per-seed CSVs and the aggregate JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Confidence-radius scale factor in (0, 1].
    #[arg(long)]
    cb: Option<f64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    base: RunArgs,
    /// Comma-separated alpha values, one cell per value.
    #[arg(long, required = true)]
    alphas: String,
    /// Comma-separated dimensions, one cell per value.
    #[arg(long, required = true)]
    dims: String,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    dim: usize,
    /// Monte-Carlo cross-check sample count.
    #[arg(long, default_value_t = 1_000_000)]
    mc_samples: usize,
    /// Seed for the cross-check stream.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ConfigOnlyArgs {
    #[arg(long)]
    config: PathBuf,
}

/// Top-level entry; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Oracle(args) => cmd_oracle(&args),
        Command::Diagnostics => cmd_diagnostics(),
        Command::ValidateConfig(args) => cmd_validate_config(&args.config),
    }
}

// ---------------------------------------------------------------------------
// Config file format
// ---------------------------------------------------------------------------

/// Parses the flat `key = value` config format. Unknown keys are errors.
pub fn parse_config_str(text: &str) -> Result<PartialConfig, String> {
    let mut p = PartialConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
        let key = key.trim();
        let value = value.trim();
        let ctx = |e: String| format!("line {} ({key}): {e}", lineno + 1);
        match key {
            "d" => p.d = Some(value.parse().map_err(|e| ctx(format!("{e}")))?),
            "horizon" => p.horizon = Some(value.parse().map_err(|e| ctx(format!("{e}")))?),
            "alpha" => p.alpha = Some(value.parse().map_err(|e| ctx(format!("{e}")))?),
            "delta" => p.delta = Some(value.parse().map_err(|e| ctx(format!("{e}")))?),
            "mode" => p.mode = Some(parse_mode(value).map_err(ctx)?),
            "distribution" => p.distribution = Some(parse_distribution(value).map_err(ctx)?),
            "theta_star" => p.theta_star = Some(parse_theta_star(value).map_err(ctx)?),
            "seeds" => p.seeds = Some(parse_seeds(value).map_err(ctx)?),
            "refit" => p.refit = Some(parse_refit(value).map_err(ctx)?),
            "c_b" => p.c_b = Some(value.parse().map_err(|e| ctx(format!("{e}")))?),
            "eps_min" => p.eps_min = Some(value.parse().map_err(|e| ctx(format!("{e}")))?),
            "out" => p.out = Some(value.to_string()),
            other => return Err(format!("line {}: unknown key `{other}`", lineno + 1)),
        }
    }
    Ok(p)
}

pub fn parse_config_file(path: &Path) -> Result<PartialConfig, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_config_str(&text)
}

fn parse_mode(v: &str) -> Result<Mode, String> {
    match v {
        "practical" => Ok(Mode::Practical),
        "rigorous" => Ok(Mode::Rigorous),
        other => Err(format!("mode must be `practical` or `rigorous`, got `{other}`")),
    }
}

fn parse_refit(v: &str) -> Result<RefitSchedule, String> {
    match v {
        "every-round" => Ok(RefitSchedule::EveryRound),
        "doubling" => Ok(RefitSchedule::Doubling),
        other => Err(format!("refit must be `every-round` or `doubling`, got `{other}`")),
    }
}

fn parse_distribution(v: &str) -> Result<DistributionSpec, String> {
    if v == "uniform-ball" {
        return Ok(DistributionSpec::UniformBall);
    }
    if let Some(rest) = v.strip_prefix("radial:") {
        let (breaks, values) = rest
            .split_once(';')
            .ok_or_else(|| "radial form is `radial:b0,..,bk;v1,..,vk`".to_string())?;
        let breaks = parse_float_list(breaks)?;
        let values = parse_float_list(values)?;
        return Ok(DistributionSpec::Radial { breaks, values });
    }
    Err(format!("distribution must be `uniform-ball` or `radial:...`, got `{v}`"))
}

fn parse_theta_star(v: &str) -> Result<ThetaStarSpec, String> {
    if v == "from-seed" {
        return Ok(ThetaStarSpec::FromSeed);
    }
    if let Some(rest) = v.strip_prefix("explicit:") {
        return Ok(ThetaStarSpec::Explicit(parse_float_list(rest)?));
    }
    Err(format!("theta_star must be `from-seed` or `explicit:v1,..,vd`, got `{v}`"))
}

fn parse_float_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad float `{s}`: {e}")))
        .collect()
}

/// `A..B` inclusive, or a comma list.
pub fn parse_seeds(v: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = v.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("bad seed `{a}`: {e}"))?;
        let b: u64 = b.trim().parse().map_err(|e| format!("bad seed `{b}`: {e}"))?;
        if b < a {
            return Err(format!("empty seed range {a}..{b}"));
        }
        return Ok((a..=b).collect());
    }
    v.split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|e| format!("bad seed `{s}`: {e}")))
        .collect()
}

/// Config fields before defaulting; file values, overridden by flags.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct PartialConfig {
    pub d: Option<usize>,
    pub horizon: Option<usize>,
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub mode: Option<Mode>,
    pub distribution: Option<DistributionSpec>,
    pub theta_star: Option<ThetaStarSpec>,
    pub seeds: Option<Vec<u64>>,
    pub refit: Option<RefitSchedule>,
    pub c_b: Option<f64>,
    pub eps_min: Option<f64>,
    pub out: Option<String>,
}

impl PartialConfig {
    /// Fills defaults and validates. `d`, `horizon`, `alpha`, `delta`, and
    /// `seeds` must be present; everything else has a default.
    pub fn resolve(self) -> Result<ExperimentConfig, String> {
        let need = |name: &str| format!("missing required field `{name}`");
        let config = ExperimentConfig {
            d: self.d.ok_or_else(|| need("d"))?,
            horizon: self.horizon.ok_or_else(|| need("horizon"))?,
            alpha: self.alpha.ok_or_else(|| need("alpha"))?,
            delta: self.delta.ok_or_else(|| need("delta"))?,
            mode: self.mode.unwrap_or(Mode::Practical),
            distribution: self.distribution.unwrap_or(DistributionSpec::UniformBall),
            theta_star: self.theta_star.unwrap_or(ThetaStarSpec::FromSeed),
            seeds: self.seeds.ok_or_else(|| need("seeds"))?,
            refit: self.refit,
            c_b: self.c_b,
            eps_min: self.eps_min.unwrap_or(1e-4),
            out_dir: self.out,
        };
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }
}

/// Canonical flat-format rendering of a resolved config; parsing it back
/// yields an identical config.
pub fn render_config(config: &ExperimentConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "d = {}", config.d);
    let _ = writeln!(s, "horizon = {}", config.horizon);
    let _ = writeln!(s, "alpha = {}", config.alpha);
    let _ = writeln!(s, "delta = {}", config.delta);
    let _ = writeln!(
        s,
        "mode = {}",
        match config.mode {
            Mode::Practical => "practical",
            Mode::Rigorous => "rigorous",
        }
    );
    match &config.distribution {
        DistributionSpec::UniformBall => {
            let _ = writeln!(s, "distribution = uniform-ball");
        }
        DistributionSpec::Radial { breaks, values } => {
            let _ = writeln!(s, "distribution = radial:{};{}", join_floats(breaks), join_floats(values));
        }
    }
    match &config.theta_star {
        ThetaStarSpec::FromSeed => {
            let _ = writeln!(s, "theta_star = from-seed");
        }
        ThetaStarSpec::Explicit(v) => {
            let _ = writeln!(s, "theta_star = explicit:{}", join_floats(v));
        }
    }
    let _ = writeln!(s, "seeds = {}", render_seeds(&config.seeds));
    if let Some(r) = config.refit {
        let _ = writeln!(
            s,
            "refit = {}",
            match r {
                RefitSchedule::EveryRound => "every-round",
                RefitSchedule::Doubling => "doubling",
            }
        );
    }
    if let Some(cb) = config.c_b {
        let _ = writeln!(s, "c_b = {cb}");
    }
    let _ = writeln!(s, "eps_min = {}", config.eps_min);
    if let Some(out) = &config.out_dir {
        let _ = writeln!(s, "out = {out}");
    }
    s
}

fn join_floats(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn render_seeds(seeds: &[u64]) -> String {
    let contiguous = seeds.len() > 1 && seeds.windows(2).all(|w| w[1] == w[0] + 1);
    if contiguous {
        format!("{}..{}", seeds[0], seeds[seeds.len() - 1])
    } else {
        seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
    }
}

fn merge_flags(mut file: PartialConfig, args: &RunArgs) -> Result<PartialConfig, String> {
    if let Some(a) = args.alpha {
        file.alpha = Some(a);
    }
    if let Some(d) = args.delta {
        file.delta = Some(d);
    }
    if let Some(d) = args.dim {
        file.d = Some(d);
    }
    if let Some(h) = args.horizon {
        file.horizon = Some(h);
    }
    if let Some(m) = &args.mode {
        file.mode = Some(parse_mode(m)?);
    }
    if let Some(cb) = args.cb {
        file.c_b = Some(cb);
    }
    if let Some(seed) = args.seed {
        file.seeds = Some(vec![seed]);
    }
    if let Some(spec) = &args.seeds {
        file.seeds = Some(parse_seeds(spec)?);
    }
    if let Some(out) = &args.out {
        file.out = Some(out.display().to_string());
    }
    Ok(file)
}

fn resolve_from_args(args: &RunArgs) -> Result<ExperimentConfig, String> {
    let file = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => PartialConfig::default(),
    };
    merge_flags(file, args)?.resolve()
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

/// Floats in output files carry 9 significant digits.
fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Renders one run's trace as CSV with the config embedded in the header.
pub fn render_csv(config: &ExperimentConfig, seed: u64, records: &[RoundRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# format_version = {CSV_FORMAT_VERSION}");
    let _ = writeln!(s, "# seed = {seed}");
    for line in render_config(config).lines() {
        let _ = writeln!(s, "# {line}");
    }
    let _ = writeln!(s, "t,z,y,y_hat,score,tau_t,b_t,lambda_min,n_theta,n_p,cum_tests,cum_errors");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.z as u8,
            r.y as u8,
            r.y_hat as u8,
            fmt_float(r.score),
            fmt_float(r.tau),
            fmt_float(r.b),
            fmt_float(r.lambda_min),
            r.n_theta,
            r.n_p,
            r.cum_tests,
            r.cum_errors
        );
    }
    s
}

#[derive(serde::Serialize)]
struct AggregateFile<'a> {
    format_version: &'static str,
    config: &'a ExperimentConfig,
    per_seed: &'a [RunSummary],
    aggregate: &'a AggregateReport,
}

pub fn render_aggregate_json(
    config: &ExperimentConfig,
    summaries: &[RunSummary],
    report: &AggregateReport,
) -> String {
    let file = AggregateFile {
        format_version: JSON_FORMAT_VERSION,
        config,
        per_seed: summaries,
        aggregate: report,
    };
    let mut out = serde_json::to_string_pretty(&file).expect("serializable report");
    out.push('\n');
    out
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn execute_run(config: &ExperimentConfig) -> Result<AggregateReport, (i32, String)> {
    let out_dir = config.out_dir.as_ref().map(PathBuf::from);
    if let Some(dir) = &out_dir {
        fs::create_dir_all(dir)
            .map_err(|e| (EXIT_RUNTIME, format!("cannot create {}: {e}", dir.display())))?;
    }
    let config_for_sink = config.clone();
    let (summaries, report) = run_experiment(config, |seed, records| {
        if let Some(dir) = &out_dir {
            let path = dir.join(format!("run_seed{seed}.csv"));
            let csv = render_csv(&config_for_sink, seed, records);
            fs::write(&path, csv).map_err(|e| {
                crate::harness::HarnessError::InvalidConfig(format!(
                    "cannot write {}: {e}",
                    path.display()
                ))
            })?;
        }
        Ok(())
    })
    .map_err(|e| (EXIT_RUNTIME, e.to_string()))?;
    if let Some(dir) = &out_dir {
        let path = dir.join("aggregate.json");
        fs::write(&path, render_aggregate_json(config, &summaries, &report))
            .map_err(|e| (EXIT_RUNTIME, format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(report)
}

fn print_report(config: &ExperimentConfig, report: &AggregateReport) {
    println!(
        "runs = {}  d = {}  alpha = {}  T = {}  mode = {}",
        report.runs,
        config.d,
        config.alpha,
        config.horizon,
        match config.mode {
            Mode::Practical => "practical",
            Mode::Rigorous => "rigorous",
        }
    );
    println!(
        "oracle: tau* = {:.6}  p* = {:.6}",
        report.tau_star, report.p_star
    );
    println!(
        "final test rate: mean = {:.6} (p* + {:.6}); mean excess tests = {:.1}",
        report.mean_final_test_rate,
        report.mean_final_test_rate - report.p_star,
        report.mean_excess_final
    );
    println!(
        "safety: {}/{} runs violated the prefix budget; excess-test log-log slope = {:.3}",
        report.safety_violations, report.runs, report.excess_slope
    );
}

fn cmd_run(args: &RunArgs) -> i32 {
    let config = match resolve_from_args(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_VALIDATION;
        }
    };
    match execute_run(&config) {
        Ok(report) => {
            print_report(&config, &report);
            EXIT_OK
        }
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

fn cmd_sweep(args: &SweepArgs) -> i32 {
    let alphas = match parse_float_list(&args.alphas) {
        Ok(v) if !v.is_empty() => v,
        Ok(_) => {
            eprintln!("config error: empty alpha list");
            return EXIT_VALIDATION;
        }
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_VALIDATION;
        }
    };
    let dims: Vec<usize> = match args
        .dims
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| format!("bad dim `{s}`: {e}")))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(v) if !v.is_empty() => v,
        Ok(_) => {
            eprintln!("config error: empty dim list");
            return EXIT_VALIDATION;
        }
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_VALIDATION;
        }
    };
    let base = {
        let file = match &args.base.config {
            Some(path) => match parse_config_file(path) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return EXIT_VALIDATION;
                }
            },
            None => PartialConfig::default(),
        };
        match merge_flags(file, &args.base) {
            Ok(p) => p,
            Err(e) => {
                eprintln!("config error: {e}");
                return EXIT_VALIDATION;
            }
        }
    };
    let sweep_root = base.out.clone();
    let mut failures = 0;
    for &d in &dims {
        for &alpha in &alphas {
            let mut partial = base.clone();
            partial.d = Some(d);
            partial.alpha = Some(alpha);
            partial.theta_star = Some(ThetaStarSpec::FromSeed);
            partial.out = sweep_root
                .as_ref()
                .map(|root| format!("{root}/sweep_d{d}_alpha{alpha}"));
            let cell = match partial.resolve() {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("cell d={d} alpha={alpha}: {e}");
                    return EXIT_VALIDATION;
                }
            };
            println!("--- cell d = {d}, alpha = {alpha} ---");
            match execute_run(&cell) {
                Ok(report) => print_report(&cell, &report),
                Err((_, msg)) => {
                    eprintln!("cell d={d} alpha={alpha} failed: {msg}");
                    failures += 1;
                }
            }
        }
    }
    if failures > 0 {
        EXIT_RUNTIME
    } else {
        EXIT_OK
    }
}

fn cmd_oracle(args: &OracleArgs) -> i32 {
    if !(args.alpha > 0.0 && args.alpha < 0.5) {
        eprintln!("config error: alpha must lie in (0, 0.5)");
        return EXIT_VALIDATION;
    }
    if args.dim < 1 {
        eprintln!("config error: dim must be at least 1");
        return EXIT_VALIDATION;
    }
    let oracle = match oracle_tau_p_star(args.alpha, args.dim) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    println!("d = {}, alpha = {}", args.dim, args.alpha);
    println!("tau* = {:.9}", oracle.tau_star);
    println!("p*   = {:.9}", oracle.p_star);
    println!("p_err at tau = 0 (never-test error): {:.9}", oracle.p_err_at_zero);
    // Conditioned-covariance eigenvalue lower bound with the uniform-ball
    // density floor m = 1 / V_d(1).
    if oracle.tau_star > 0.0 {
        let d = args.dim;
        let lambda0_min = oracle.tau_star.powi(d as i32 + 2) / (oracle.p_star * (d as f64 + 2.0));
        println!("lambda0_min(tau*, d) = {lambda0_min:.9}  (m = 1/V_d = {:.9})", 1.0 / unit_ball_volume(d));
    } else {
        println!("lambda0_min(tau*, d) undefined at tau* = 0");
    }
    let dist = ContextDistribution::uniform_ball(args.dim);
    let mut rng = RngStream::with_stream(args.seed, 0);
    let gt = GroundTruth::sampled(dist, &mut rng);
    match mc_tau_p_star(&gt, args.alpha, args.mc_samples, &mut rng) {
        Ok(mc) => {
            println!(
                "monte-carlo ({} draws): tau* = {:.9} (delta {:+.2e}), p* = {:.9} (delta {:+.2e}, se {:.2e})",
                args.mc_samples,
                mc.tau_star,
                mc.tau_star - oracle.tau_star,
                mc.p_star,
                mc.p_star - oracle.p_star,
                mc.p_star_std_error
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn cmd_validate_config(path: &Path) -> i32 {
    match parse_config_file(path).and_then(|p| p.resolve()) {
        Ok(config) => {
            print!("{}", render_config(&config));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("config error: {e}");
            EXIT_VALIDATION
        }
    }
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct DiagReport {
    failures: usize,
}

impl DiagReport {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        if ok {
            println!("ok    {name}: {detail}");
        } else {
            println!("FAIL  {name}: {detail}");
            self.failures += 1;
        }
    }
}

/// Numeric validation suite; exit code 3 when any check fails.
fn cmd_diagnostics() -> i32 {
    let mut report = DiagReport { failures: 0 };

    // Closed-form incomplete beta against the arcsine identity.
    {
        let x: f64 = 0.25;
        let expected = (2.0 / std::f64::consts::PI) * (x.sqrt().asin() + (x * (1.0 - x)).sqrt());
        let got = reg_inc_beta(x, 0.5, 1.5).unwrap();
        report.check(
            "incomplete-beta arcsine form",
            (got - expected).abs() <= 1e-6,
            format!("I_0.25(1/2,3/2) = {got:.9}, closed form {expected:.9}"),
        );
    }
    // Symmetry identity on a few points.
    {
        let mut worst: f64 = 0.0;
        for (x, a, b) in [(0.3, 0.5, 1.5), (0.62, 2.0, 4.0), (0.11, 3.5, 0.5)] {
            let v = reg_inc_beta(x, a, b).unwrap() + reg_inc_beta(1.0 - x, b, a).unwrap();
            worst = worst.max((v - 1.0).abs());
        }
        report.check(
            "incomplete-beta symmetry",
            worst <= 1e-9,
            format!("max |I_x(a,b) + I_(1-x)(b,a) - 1| = {worst:.2e}"),
        );
    }
    // Spherical-segment fraction against rejection sampling.
    for d in [2usize, 5] {
        let dist = ContextDistribution::uniform_ball(d);
        let mut rng = RngStream::with_stream(71, d as u64);
        let gt = GroundTruth::sampled(dist.clone(), &mut rng);
        let n = 1_000_000;
        let mut counts = [0usize; 3];
        let taus = [0.3, 0.5, 0.8];
        for _ in 0..n {
            let x = sample_context(&dist, &mut rng);
            let s = dot(&x, gt.theta_star()).abs();
            for (k, &tau) in taus.iter().enumerate() {
                if s <= tau {
                    counts[k] += 1;
                }
            }
        }
        for (k, &tau) in taus.iter().enumerate() {
            let exact = reg_inc_beta(tau * tau, 0.5, (d as f64 + 1.0) / 2.0).unwrap();
            let mc = counts[k] as f64 / n as f64;
            report.check(
                &format!("segment fraction d={d} tau={tau}"),
                (mc - exact).abs() <= 0.01 * exact,
                format!("beta form {exact:.6}, rejection {mc:.6}"),
            );
        }
    }
    // Uniform-ball covariance minimum eigenvalue = 1/(d+2).
    for d in [2usize, 3] {
        let dist = ContextDistribution::uniform_ball(d);
        let mut rng = RngStream::with_stream(72, d as u64);
        let n = 1_000_000;
        let mut m = SymMatrix::zeros(d);
        for _ in 0..n {
            m.add_outer(&sample_context(&dist, &mut rng));
        }
        let rows: Vec<Vec<f64>> =
            (0..d).map(|i| (0..d).map(|j| m.get(i, j) / n as f64).collect()).collect();
        let lam = min_eigenvalue(&SymMatrix::from_rows(&rows)).unwrap();
        let expected = 1.0 / (d as f64 + 2.0);
        report.check(
            &format!("uniform covariance eigenvalue d={d}"),
            (lam - expected).abs() <= 0.01,
            format!("empirical {lam:.5}, expected {expected:.5}"),
        );
    }
    // Conditioned covariance eigenvalue dominates its analytic bound.
    {
        let dist = ContextDistribution::uniform_ball(2);
        let mut rng = RngStream::with_stream(73, 0);
        let gt = GroundTruth::sampled(dist, &mut rng);
        let ce = conditional_min_eig_estimate(&gt, 0.5, 1_000_000, &mut rng).unwrap();
        report.check(
            "conditioned eigenvalue lower bound",
            ce.estimate >= ce.analytic_lower_bound - 3.0 * ce.std_error,
            format!("estimate {:.5} >= bound {:.5}", ce.estimate, ce.analytic_lower_bound),
        );
    }
    // Log-likelihood gradient against central finite differences.
    {
        let mut rng = RngStream::with_stream(74, 0);
        let dist = ContextDistribution::uniform_ball(3);
        let gt = GroundTruth::sampled(dist.clone(), &mut rng);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let samples: Vec<LabeledSample> = (0..12)
                .map(|_| {
                    let x = sample_context(&dist, &mut rng);
                    let y = crate::environment::sample_label(&x, &gt, &mut rng);
                    LabeledSample { x, y }
                })
                .collect();
            let theta: Vec<f64> = (0..3).map(|_| rng.standard_normal() * 0.7).collect();
            let grad = log_likelihood_gradient(&theta, &samples);
            for i in 0..3 {
                let h = 1e-5;
                let mut up = theta.clone();
                up[i] += h;
                let mut dn = theta.clone();
                dn[i] -= h;
                let fd = (regularized_log_likelihood(&up, &samples)
                    - regularized_log_likelihood(&dn, &samples))
                    / (2.0 * h);
                worst = worst.max(((grad[i] - fd) / grad[i].abs().max(1.0)).abs());
            }
        }
        report.check(
            "log-likelihood gradient",
            worst <= 1e-5,
            format!("max relative error vs finite differences = {worst:.2e}"),
        );
    }
    // Analytic oracle internal consistency.
    {
        let o = oracle_tau_p_star(0.1, 2).unwrap();
        let via_beta = reg_inc_beta(o.tau_star * o.tau_star, 0.5, 1.5).unwrap();
        report.check(
            "oracle p* via beta CDF",
            (o.p_star - via_beta).abs() <= 1e-9,
            format!("p* = {:.9}, beta CDF {via_beta:.9}", o.p_star),
        );
        let _ = norm2(&[o.tau_star]);
    }

    if report.failures == 0 {
        println!("all diagnostics passed");
        EXIT_OK
    } else {
        println!("{} diagnostic(s) failed", report.failures);
        EXIT_DIAGNOSTIC
    }
}
