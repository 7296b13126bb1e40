//! Monte-Carlo studies on the block-rotation design model.
//!
//! The design uses `F = blkdiag(F0, 0_3) ⊗ I_p` with
//! `F0 = [[0.99, -0.1, 0], [0.1, 0.99, 0], [0, 0, 0.95]]`, `Q = I`, `n = 6p`
//! and true rank `3p`. Series lengths are multiples of `n`.
//!
//! Repeat `i` of a cell uses seed `base_seed + i`, so growing `repeats`
//! never changes earlier rows. Repeats may run on a thread pool; results are
//! collected in repeat order.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit, fit_ls, Estimate, Method};
use crate::linalg::{self, Complex64};
use crate::metrics::{self, relative_estimation_error, relative_prediction_error_from_moments, SummaryStats};
use crate::moments::{trajectory_moments, SampleMoments};
use crate::process::{Simulator, StartState, VarModel};

/// Environment variable capping worker threads for Monte-Carlo repeats.
pub const THREADS_ENV: &str = "STABLEVAR_THREADS";

/// Largest block exponent run without an explicit opt-in (`n = 768`).
pub const DESK_MAX_K: u32 = 7;

/// Start state of the design studies. Series begin at rest; this is what
/// reproduces the published full-rank error medians at short lengths.
pub const DESIGN_START: StartState = StartState::Zero;

/// Series lengths of the low-dimensional study as multiples of `n`.
pub const LOW_T_MULTIPLIERS: [usize; 3] = [4, 36, 100];

/// `blkdiag(F0, 0_3) ⊗ I_p` with unit noise covariance.
pub fn build_paper_f(p: usize) -> Result<VarModel> {
    if p == 0 {
        return Err(Error::InvalidInput("p must be at least 1".into()));
    }
    let base = DMatrix::from_row_slice(
        6,
        6,
        &[
            0.99, -0.1, 0.0, 0.0, 0.0, 0.0, //
            0.1, 0.99, 0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.95, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ],
    );
    let f = base.kronecker(&DMatrix::<f64>::identity(p, p));
    VarModel::with_unit_noise(f)
}

/// Description of one Monte-Carlo study on the design model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Block exponent: `p = 2^k`, `n = 6 p`.
    pub k: u32,
    pub m: usize,
    pub t_multipliers: Vec<usize>,
    pub repeats: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub start: StartState,
}

impl ExperimentConfig {
    /// Config with the design rank `m = n/2` and [`DESIGN_START`].
    pub fn new(
        k: u32,
        t_multipliers: Vec<usize>,
        repeats: usize,
        base_seed: u64,
        methods: Vec<Method>,
    ) -> Result<Self> {
        let n = design_dim(k)?;
        let config = ExperimentConfig {
            k,
            m: n / 2,
            t_multipliers,
            repeats,
            base_seed,
            methods,
            start: DESIGN_START,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let n = design_dim(self.k)?;
        if self.m == 0 || self.m > n {
            return Err(Error::InvalidRank { rank: self.m, n });
        }
        if self.repeats == 0 {
            return Err(Error::InvalidInput("repeats must be at least 1".into()));
        }
        if self.t_multipliers.is_empty() || self.t_multipliers.contains(&0) {
            return Err(Error::InvalidInput("T/n multipliers must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidInput("at least one method is required".into()));
        }
        Ok(())
    }

    pub fn with_start(mut self, start: StartState) -> Self {
        self.start = start;
        self
    }

    pub fn p(&self) -> usize {
        1 << self.k
    }

    pub fn n(&self) -> usize {
        6 * self.p()
    }

    pub fn seed(&self, repeat: usize) -> u64 {
        self.base_seed.wrapping_add(repeat as u64)
    }
}

fn design_dim(k: u32) -> Result<usize> {
    if k > 20 {
        return Err(Error::InvalidInput(format!("block exponent k = {k} is too large")));
    }
    Ok(6usize << k)
}

/// One fitted method on one simulated series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub method: Method,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub e: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub fit_seconds: f64,
    #[serde(skip)]
    pub poles: Vec<Complex64>,
}

/// Everything produced for one repeat of a cell.
#[derive(Clone, Debug)]
pub struct RepeatOutcome {
    pub seed: u64,
    pub moments: SampleMoments,
    pub estimates: Vec<Estimate>,
    pub records: Vec<RunRecord>,
}

/// Fits `methods` to precomputed moments and scores them against `truth`.
/// `keep_poles` controls whether full pole sets are stored on the records.
pub fn evaluate_repeat(
    moments: SampleMoments,
    truth: &DMatrix<f64>,
    m: usize,
    methods: &[Method],
    seed: u64,
    keep_poles: bool,
) -> Result<RepeatOutcome> {
    let f_ls = fit_ls(&moments)?.f_hat;
    let mut estimates = Vec::with_capacity(methods.len());
    let mut records = Vec::with_capacity(methods.len());
    for &method in methods {
        let est = fit(&moments, method, m)?;
        let poles = if keep_poles {
            linalg::eig_general(&est.f_hat)?.poles
        } else {
            Vec::new()
        };
        records.push(RunRecord {
            seed,
            method,
            n: moments.n(),
            m: est.rank,
            t: moments.transitions(),
            e: relative_estimation_error(&est.f_hat, truth)?,
            epsilon: relative_prediction_error_from_moments(&est.f_hat, &moments, &f_ls)?,
            rho: est.spectral_radius,
            fit_seconds: est.fit_seconds,
            poles,
        });
        estimates.push(est);
    }
    Ok(RepeatOutcome {
        seed,
        moments,
        estimates,
        records,
    })
}

/// Per-method aggregate for one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub unstable_rate: f64,
    pub e: SummaryStats,
    pub epsilon: SummaryStats,
    pub mean_fit_seconds: f64,
}

/// Results of one `(n, T)` cell.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub k: u32,
    pub n: usize,
    pub m: usize,
    pub t: usize,
    pub t_multiplier: usize,
    pub outcomes: Vec<RepeatOutcome>,
}

impl CellResult {
    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.outcomes.iter().flat_map(|o| o.records.iter())
    }

    pub fn records_for(&self, method: Method) -> Vec<&RunRecord> {
        self.records().filter(|r| r.method == method).collect()
    }

    pub fn summary(&self, method: Method) -> Result<MethodSummary> {
        let records = self.records_for(method);
        let e: Vec<f64> = records.iter().map(|r| r.e).collect();
        let eps: Vec<f64> = records.iter().map(|r| r.epsilon).collect();
        let rho: Vec<f64> = records.iter().map(|r| r.rho).collect();
        let e = metrics::summarize(&e, &rho)?;
        let mean_fit_seconds = records.iter().map(|r| r.fit_seconds).sum::<f64>() / records.len() as f64;
        Ok(MethodSummary {
            method,
            unstable_rate: e.unstable_rate,
            e,
            epsilon: metrics::summarize(&eps, &rho)?,
            mean_fit_seconds,
        })
    }

    /// Drops moments and estimates, keeping only the scored records.
    pub fn compact(&mut self) {
        for o in &mut self.outcomes {
            o.estimates.clear();
        }
    }
}

/// Thread pool honoring `STABLEVAR_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var(THREADS_ENV) {
        let threads: usize = value
            .trim()
            .parse()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| Error::InvalidInput(format!("{THREADS_ENV} must be a positive integer, got '{value}'")))?;
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build thread pool: {e}")))
}

/// Runs every repeat of one cell with the whole pipeline (simulate, moments,
/// fit) in parallel.
pub fn run_cell(
    config: &ExperimentConfig,
    simulator: &Simulator,
    truth: &DMatrix<f64>,
    t_multiplier: usize,
    keep_poles: bool,
    pool: &rayon::ThreadPool,
) -> Result<CellResult> {
    let n = config.n();
    let t = t_multiplier * n;
    let outcomes: Result<Vec<RepeatOutcome>> = pool.install(|| {
        (0..config.repeats)
            .into_par_iter()
            .map(|i| {
                let seed = config.seed(i);
                let moments = trajectory_moments(&simulator.simulate_from(t, seed, config.start)?)?;
                evaluate_repeat(moments, truth, config.m, &config.methods, seed, keep_poles)
            })
            .collect()
    });
    Ok(CellResult {
        k: config.k,
        n,
        m: config.m,
        t,
        t_multiplier,
        outcomes: outcomes?,
    })
}

/// Like [`run_cell`] but only simulation and moments run in parallel; the
/// fits run one at a time so their wall-clock timings are not contended.
pub fn run_timed_cell(
    config: &ExperimentConfig,
    simulator: &Simulator,
    truth: &DMatrix<f64>,
    t_multiplier: usize,
    pool: &rayon::ThreadPool,
) -> Result<CellResult> {
    let n = config.n();
    let t = t_multiplier * n;
    let moments: Result<Vec<SampleMoments>> = pool.install(|| {
        (0..config.repeats)
            .into_par_iter()
            .map(|i| trajectory_moments(&simulator.simulate_from(t, config.seed(i), config.start)?))
            .collect()
    });
    let outcomes = moments?
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut outcome = evaluate_repeat(s, truth, config.m, &config.methods, config.seed(i), false)?;
            outcome.estimates.clear();
            Ok(outcome)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CellResult {
        k: config.k,
        n,
        m: config.m,
        t,
        t_multiplier,
        outcomes,
    })
}

/// Low-dimensional study: `n = 6`, `m = 3`, `T ∈ {24, 216, 600}`.
pub fn low_dim_config(repeats: usize, base_seed: u64) -> Result<ExperimentConfig> {
    ExperimentConfig::new(
        0,
        LOW_T_MULTIPLIERS.to_vec(),
        repeats,
        base_seed,
        vec![Method::Ls, Method::Fb11, Method::Rls, Method::Rfb],
    )
}

pub fn run_low(config: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<Vec<CellResult>> {
    config.validate()?;
    let model = build_paper_f(config.p())?;
    let simulator = Simulator::new(&model)?;
    config
        .t_multipliers
        .iter()
        .map(|&mult| run_cell(config, &simulator, model.f(), mult, true, pool))
        .collect()
}

/// High-dimensional sweep with timed fits. For every `k` in `k_values` and
/// every multiplier of `template`, runs one cell at the design rank `n/2`;
/// repeats, seeds, methods and start state come from `template`.
pub fn run_high(
    template: &ExperimentConfig,
    k_values: &[u32],
    pool: &rayon::ThreadPool,
    mut progress: impl FnMut(&CellResult),
) -> Result<Vec<CellResult>> {
    let mut cells = Vec::with_capacity(k_values.len() * template.t_multipliers.len());
    for &k in k_values {
        let n = design_dim(k)?;
        let config = ExperimentConfig {
            k,
            m: n / 2,
            ..template.clone()
        };
        config.validate()?;
        let model = build_paper_f(config.p())?;
        let simulator = Simulator::new(&model)?;
        for &mult in &config.t_multipliers {
            let cell = run_timed_cell(&config, &simulator, model.f(), mult, pool)?;
            progress(&cell);
            cells.push(cell);
        }
    }
    Ok(cells)
}

/// Least-squares slope of `log(seconds)` against `log(n)`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(n, s)| !(n > 0.0 && s > 0.0)) {
        return Err(Error::InvalidInput(
            "need at least two points with positive size and time".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(n, s)| (n.ln(), s.ln())).collect();
    let count = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / count;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / count;
    let sxy: f64 = logs.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|&(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("all sizes are equal".into()));
    }
    Ok(sxy / sxx)
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut out = create(path)?;
    for line in lines {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Results CSV: `seed,method,n,m,T,e,epsilon,rho,fit_seconds`, one row per
/// `(seed, method)`.
pub fn write_results_csv(path: &Path, cell: &CellResult) -> Result<()> {
    let header = "seed,method,n,m,T,e,epsilon,rho,fit_seconds".to_string();
    let rows = cell.records().map(|r| {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.method,
            r.n,
            r.m,
            r.t,
            num(r.e),
            num(r.epsilon),
            num(r.rho),
            num(r.fit_seconds)
        )
    });
    write_lines(path, std::iter::once(header).chain(rows))
}

/// Every estimated pole: `seed,method,T,re,im,modulus`.
pub fn write_poles_csv(path: &Path, cell: &CellResult) -> Result<()> {
    let header = "seed,method,T,re,im,modulus".to_string();
    let rows = cell.records().flat_map(|r| {
        r.poles.iter().map(move |p| {
            format!("{},{},{},{},{},{}", r.seed, r.method, r.t, num(p.re), num(p.im), num(p.norm()))
        })
    });
    write_lines(path, std::iter::once(header).chain(rows))
}

/// Timing CSV: `method,n,T,fit_seconds`.
pub fn write_timing_csv(path: &Path, cells: &[CellResult]) -> Result<()> {
    let header = "method,n,T,fit_seconds".to_string();
    let rows = cells.iter().flat_map(|c| {
        c.records()
            .map(|r| format!("{},{},{},{}", r.method, r.n, r.t, num(r.fit_seconds)))
            .collect::<Vec<_>>()
    });
    write_lines(path, std::iter::once(header).chain(rows))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellSummary {
    pub k: u32,
    pub n: usize,
    pub m: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub t_multiplier: usize,
    pub repeats: usize,
    pub methods: Vec<MethodSummary>,
}

pub fn cell_summary(cell: &CellResult, methods: &[Method]) -> Result<CellSummary> {
    Ok(CellSummary {
        k: cell.k,
        n: cell.n,
        m: cell.m,
        t: cell.t,
        t_multiplier: cell.t_multiplier,
        repeats: cell.outcomes.len(),
        methods: methods.iter().map(|&m| cell.summary(m)).collect::<Result<_>>()?,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudySummary {
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
    /// Log-log timing slope per method, when more than one `n` was run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timing_slopes: Vec<(Method, f64)>,
}

pub fn write_summary_json(path: &Path, summary: &StudySummary) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, summary)?;
    writeln!(out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Writes `low_T{T}_results.csv`, `low_T{T}_poles.csv` per cell and
/// `low_summary.json`; returns the written paths.
pub fn write_low_outputs(out_dir: &Path, config: &ExperimentConfig, cells: &[CellResult]) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut summaries = Vec::new();
    for cell in cells {
        let results = out_dir.join(format!("low_T{}_results.csv", cell.t));
        let poles = out_dir.join(format!("low_T{}_poles.csv", cell.t));
        write_results_csv(&results, cell)?;
        write_poles_csv(&poles, cell)?;
        written.extend([results, poles]);
        summaries.push(cell_summary(cell, &config.methods)?);
    }
    let summary_path = out_dir.join("low_summary.json");
    write_summary_json(
        &summary_path,
        &StudySummary {
            config: config.clone(),
            cells: summaries,
            timing_slopes: Vec::new(),
        },
    )?;
    written.push(summary_path);
    Ok(written)
}

/// Timing slope per method across the cells' dimensions (mean time per `n`).
pub fn timing_slopes(cells: &[CellResult], methods: &[Method]) -> Vec<(Method, f64)> {
    methods
        .iter()
        .filter_map(|&method| {
            let points: Vec<(f64, f64)> = cells
                .iter()
                .filter_map(|c| c.summary(method).ok().map(|s| (c.n as f64, s.mean_fit_seconds)))
                .collect();
            loglog_slope(&points).ok().map(|slope| (method, slope))
        })
        .collect()
}

/// Writes per-cell results, `high_timing.csv` and `high_summary.json`.
pub fn write_high_outputs(
    out_dir: &Path,
    config: &ExperimentConfig,
    cells: &[CellResult],
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut summaries = Vec::new();
    for cell in cells {
        let results = out_dir.join(format!("high_k{}_T{}n_results.csv", cell.k, cell.t_multiplier));
        write_results_csv(&results, cell)?;
        written.push(results);
        summaries.push(cell_summary(cell, &config.methods)?);
    }
    let timing = out_dir.join("high_timing.csv");
    write_timing_csv(&timing, cells)?;
    written.push(timing);
    let summary_path = out_dir.join("high_summary.json");
    write_summary_json(
        &summary_path,
        &StudySummary {
            config: config.clone(),
            cells: summaries,
            timing_slopes: timing_slopes(cells, &config.methods),
        },
    )?;
    written.push(summary_path);
    Ok(written)
}
