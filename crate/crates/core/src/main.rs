use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stablevar::estimators::{fit, Method};
use stablevar::experiments::{self, ExperimentConfig, DESK_MAX_K};
use stablevar::moments::trajectory_moments;
use stablevar::process::{Simulator, StartState, Trajectory};
use stablevar::Error;

#[derive(Parser)]
#[command(name = "stablevar", version, about = "Stable VAR(1) estimation and Monte-Carlo studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trajectory of the block-rotation design model.
    Simulate(SimulateArgs),
    /// Fit a transition matrix to a trajectory CSV and write JSON.
    Estimate(EstimateArgs),
    /// Low-dimensional study: n = 6, m = 3, T in {24, 216, 600}.
    ReproduceLow(LowArgs),
    /// High-dimensional study over n = 6 * 2^k with timed fits.
    ReproduceHigh(HighArgs),
    /// Time each estimator on one design dimension.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Block size; the model has n = 6p variables.
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// Number of transitions; the file has T + 1 rows.
    #[arg(long = "t")]
    t: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a `y1,...,yn` header line.
    #[arg(long)]
    header: bool,
    /// Initial state: stationary draw or zero.
    #[arg(long, default_value = "stationary")]
    start: StartState,
}

#[derive(Args)]
struct EstimateArgs {
    /// Trajectory CSV, one row per time step.
    #[arg(long)]
    input: PathBuf,
    /// ls | fb | rls | rfb (also fb_sylvester, bls).
    #[arg(long, default_value = "rfb")]
    method: Method,
    /// Rank for rls/rfb; defaults to n.
    #[arg(long)]
    rank: Option<usize>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LowArgs {
    #[arg(long, default_value_t = 1000)]
    repeats: usize,
    /// Base seed; repeat i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Initial state of each simulated series: zero or stationary.
    #[arg(long, default_value = "zero")]
    start: StartState,
}

#[derive(Args)]
struct HighArgs {
    /// Inclusive block-exponent range such as `1..7`, or a single value.
    #[arg(long, default_value = "1..7")]
    k_range: String,
    /// T as a multiple of n.
    #[arg(long, default_value_t = 36)]
    t_mult: usize,
    #[arg(long, default_value_t = 50)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Allow k = 8 and 9 (n = 1536, 3072).
    #[arg(long)]
    full: bool,
    /// Initial state of each simulated series: zero or stationary.
    #[arg(long, default_value = "zero")]
    start: StartState,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 5)]
    k: u32,
    #[arg(long, default_value_t = 36)]
    t_mult: usize,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also allow k above the desk-scale limit.
    #[arg(long)]
    full: bool,
}

/// CLI failure carrying its exit code.
enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::ReproduceLow(a) => reproduce_low(a),
        Command::ReproduceHigh(a) => reproduce_high(a),
        Command::Bench(a) => bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::Io {
                    path: parent.to_path_buf(),
                    source: e,
                })?;
            }
            let file = File::create(p).map_err(|e| Error::Io {
                path: p.to_path_buf(),
                source: e,
            })?;
            Box::new(BufWriter::new(file))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn check_k(k: u32, full: bool) -> Result<(), Failure> {
    if k > DESK_MAX_K && !full {
        return Err(Failure::Usage(format!(
            "k = {k} exceeds the desk-scale limit {DESK_MAX_K}; pass --full to run it"
        )));
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    if a.t == 0 {
        return Err(Failure::Usage("--t must be at least 1".into()));
    }
    let model = experiments::build_paper_f(a.p).map_err(|e| Failure::Usage(e.to_string()))?;
    let traj = Simulator::new(&model)?.simulate_from(a.t, a.seed, a.start)?;
    let mut out = output(a.out.as_deref())?;
    traj.write_csv(&mut out, a.header)?;
    let name = a.out.unwrap_or_else(|| PathBuf::from("<stdout>"));
    out.flush().map_err(|e| Error::Io { path: name, source: e })?;
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<(), Failure> {
    let traj = Trajectory::load_csv(&a.input)?;
    let n = traj.n();
    if traj.transitions() < n {
        eprintln!(
            "warning: only {} transitions for {n} variables; moments may be singular",
            traj.transitions()
        );
    }
    let rank = a.rank.unwrap_or(n);
    if rank == 0 || rank > n {
        return Err(Failure::Usage(format!("--rank must be in 1..={n}, got {rank}")));
    }
    let s = trajectory_moments(&traj)?;
    let est = fit(&s, a.method, rank)?;
    if a.method.guarantees_stability() && !est.is_stable() {
        // Cannot happen for well-posed moments; never hand out such a result.
        eprintln!(
            "internal error: {} produced spectral radius {} >= 1; refusing to write output",
            a.method, est.spectral_radius
        );
        return Err(Failure::Lib(Error::UnstableMatrix {
            rho: est.spectral_radius,
        }));
    }
    for w in &est.warnings {
        eprintln!("warning: {w}");
    }
    let mut out = output(a.out.as_deref())?;
    let name = a.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    serde_json::to_writer_pretty(&mut out, &est.to_json()).map_err(Error::from)?;
    writeln!(out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::Io { path: name, source: e })?;
    Ok(())
}

fn pct(x: f64) -> String {
    format!("{:.4}%", 100.0 * x)
}

fn reproduce_low(a: LowArgs) -> Result<(), Failure> {
    let config = experiments::low_dim_config(a.repeats, a.seed)
        .map_err(|e| Failure::Usage(e.to_string()))?
        .with_start(a.start);
    let pool = experiments::thread_pool().map_err(|e| Failure::Usage(e.to_string()))?;
    let cells = experiments::run_low(&config, &pool)?;
    let written = experiments::write_low_outputs(&a.out, &config, &cells)?;
    println!("{:>5} {:>6} {:>10} {:>10} {:>10}", "T", "method", "unstable", "median e", "median eps");
    for cell in &cells {
        for &method in &config.methods {
            let s = cell.summary(method)?;
            println!(
                "{:>5} {:>6} {:>10} {:>10} {:>10}",
                cell.t,
                method.to_string(),
                pct(s.unstable_rate),
                pct(s.e.median),
                pct(s.epsilon.median)
            );
        }
    }
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn parse_k_range(spec: &str) -> Result<Vec<u32>, Failure> {
    let bad = || Failure::Usage(format!("invalid --k-range '{spec}', expected e.g. 1..7 or 5"));
    let spec_trim = spec.trim();
    let (lo, hi) = match spec_trim.split_once("..") {
        Some((lo, hi)) => (lo, hi.trim_start_matches('=')),
        None => (spec_trim, spec_trim),
    };
    let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok((lo..=hi).collect())
}

fn reproduce_high(a: HighArgs) -> Result<(), Failure> {
    let ks = parse_k_range(&a.k_range)?;
    check_k(*ks.last().unwrap_or(&0), a.full)?;
    let methods = vec![Method::Rls, Method::Rfb];
    // Validates repeats, multiplier and dimensions before any work starts.
    let config = ExperimentConfig::new(ks[0], vec![a.t_mult], a.repeats, a.seed, methods.clone())
        .map_err(|e| Failure::Usage(e.to_string()))?
        .with_start(a.start);
    let pool = experiments::thread_pool().map_err(|e| Failure::Usage(e.to_string()))?;
    println!(
        "{:>3} {:>5} {:>7} {:>6} {:>10} {:>10} {:>12}",
        "k", "n", "T", "method", "median e", "median eps", "mean fit s"
    );
    let cells = experiments::run_high(&config, &ks, &pool, |cell| {
        for &method in &methods {
            if let Ok(s) = cell.summary(method) {
                println!(
                    "{:>3} {:>5} {:>7} {:>6} {:>10} {:>10} {:>12.4e}",
                    cell.k,
                    cell.n,
                    cell.t,
                    method.to_string(),
                    pct(s.e.median),
                    pct(s.epsilon.median),
                    s.mean_fit_seconds
                );
            }
        }
    })?;
    for (method, slope) in experiments::timing_slopes(&cells, &methods) {
        println!("log-log timing slope {method}: {slope:.3}");
    }
    let written = experiments::write_high_outputs(&a.out, &config, &cells)?;
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    check_k(a.k, a.full)?;
    let methods = vec![Method::Ls, Method::Fb11, Method::Rls, Method::Rfb];
    let pool = experiments::thread_pool().map_err(|e| Failure::Usage(e.to_string()))?;
    let config = ExperimentConfig::new(a.k, vec![a.t_mult], a.repeats, a.seed, methods.clone())
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let cells = experiments::run_high(&config, &[a.k], &pool, |_| {})?;
    let cell = &cells[0];
    println!("n = {}, T = {}, repeats = {}", cell.n, cell.t, a.repeats);
    let mut means = Vec::new();
    for &method in &methods {
        let s = cell.summary(method)?;
        println!("{:>6} mean fit {:.4e} s", method.to_string(), s.mean_fit_seconds);
        means.push(s.mean_fit_seconds);
    }
    println!("FB11/LS time ratio {:.3}", means[1] / means[0]);
    println!("RFB/RLS time ratio {:.3}", means[3] / means[2]);
    Ok(())
}
