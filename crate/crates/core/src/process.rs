//! The true VAR(1) system `y_t = F y_{t-1} + w_t`, its stationary and
//! time-reversed descriptions, and stationary-start simulation.
//!
//! Random numbers come from `ChaCha8Rng::seed_from_u64(seed)` and standard
//! normals from `rand_distr::StandardNormal` (ziggurat). The draw order is
//! the `n` entries of `z_0`, then `z_1`, ..., `z_T`, each in index order.
//! Trajectories are bit-reproducible for a given build.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DMatrixView};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactor};

/// Ground-truth VAR(1): transition matrix `F` and SPD noise covariance `Q`.
///
/// `F` need not be stable; anything that needs the stationary covariance
/// checks stability itself.
#[derive(Clone, Debug)]
pub struct VarModel {
    f: DMatrix<f64>,
    q: DMatrix<f64>,
}

impl VarModel {
    pub fn new(f: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        let n = linalg::check_square("F", &f)?;
        linalg::check_same_dim("Q", &q, n)?;
        linalg::check_finite("F", &f)?;
        SpdFactor::new(&q)?;
        Ok(VarModel { f, q })
    }

    /// Model with identity noise covariance.
    pub fn with_unit_noise(f: DMatrix<f64>) -> Result<Self> {
        let n = f.nrows();
        Self::new(f, DMatrix::identity(n, n))
    }

    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        linalg::spectral_radius(&self.f)
    }
}

/// Stationary covariance `Π = F Π F' + Q`.
pub fn stationary_covariance(model: &VarModel) -> Result<DMatrix<f64>> {
    linalg::solve_dlyap(model.f(), model.q())
}

/// Time-reversed model `y_{t-1} = F_b y_t + w_{b,t-1}`.
#[derive(Clone, Debug)]
pub struct BackwardsModel {
    pub f_b: DMatrix<f64>,
    pub q_b: DMatrix<f64>,
}

pub fn backwards_model(model: &VarModel) -> Result<BackwardsModel> {
    let pi = stationary_covariance(model)?;
    backwards_model_from(model, &pi)
}

/// Same as [`backwards_model`] with a precomputed stationary covariance.
pub fn backwards_model_from(model: &VarModel, pi: &DMatrix<f64>) -> Result<BackwardsModel> {
    let pi_factor = SpdFactor::new(pi)?;
    // F_b = Π F' Π^{-1}
    let f_b = pi_factor.solve_right(&(pi * model.f().transpose()));
    let q_b = linalg::symmetrize(&(pi - &f_b * pi * f_b.transpose()));
    Ok(BackwardsModel { f_b, q_b })
}

/// `T + 1` observations `y_0..y_T`, stored as the columns of an `n × (T+1)`
/// matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    y: DMatrix<f64>,
    seed: Option<u64>,
}

impl Trajectory {
    /// Wraps observations given as columns. Needs at least two columns and
    /// finite entries.
    pub fn from_columns(y: DMatrix<f64>, seed: Option<u64>) -> Result<Self> {
        if y.nrows() == 0 || y.ncols() < 2 {
            return Err(Error::InvalidInput(format!(
                "a trajectory needs n >= 1 and at least 2 time points, got {}x{}",
                y.nrows(),
                y.ncols()
            )));
        }
        linalg::check_finite("trajectory", &y)?;
        Ok(Trajectory { y, seed })
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    /// Number of transitions `T` (the trajectory holds `T + 1` points).
    pub fn transitions(&self) -> usize {
        self.y.ncols() - 1
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn point(&self, t: usize) -> DMatrixView<'_, f64> {
        self.y.columns(t, 1)
    }

    /// Writes one row per time step with `n` columns and an optional
    /// `y1,...,yn` header. Values carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W, header: bool) -> Result<()> {
        let mut out = BufWriter::new(writer);
        let write_err = |e: std::io::Error| Error::io("<csv output>", e);
        if header {
            let names: Vec<String> = (1..=self.n()).map(|i| format!("y{i}")).collect();
            writeln!(out, "{}", names.join(",")).map_err(write_err)?;
        }
        for col in self.y.column_iter() {
            let row: Vec<String> = col.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", row.join(",")).map_err(write_err)?;
        }
        out.flush().map_err(write_err)
    }

    pub fn save_csv(&self, path: &Path, header: bool) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file, header).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    /// Parses a trajectory CSV. A first row that is not entirely numeric is
    /// taken as a header.
    pub fn read_csv<R: Read>(reader: R, source_name: &Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: source_name.to_path_buf(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);

        let mut values: Vec<f64> = Vec::new();
        let mut n: Option<usize> = None;
        let mut rows = 0usize;
        for (index, record) in rdr.records().enumerate() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map_or(index + 1, |p| p.line() as usize);
            let parsed: std::result::Result<Vec<f64>, _> =
                record.iter().map(|field| field.parse::<f64>()).collect();
            let row = match parsed {
                Ok(row) => row,
                Err(_) if rows == 0 && n.is_none() && index == 0 => {
                    // header row
                    n = Some(record.len());
                    continue;
                }
                Err(e) => return Err(parse_err(line, format!("invalid number: {e}"))),
            };
            let width = *n.get_or_insert(row.len());
            if row.len() != width {
                return Err(parse_err(
                    line,
                    format!("expected {width} columns, found {}", row.len()),
                ));
            }
            if let Some(bad) = row.iter().position(|v| !v.is_finite()) {
                return Err(parse_err(line, format!("non-finite value in column {}", bad + 1)));
            }
            values.extend(row);
            rows += 1;
        }
        let n = n.unwrap_or(0);
        if rows < 2 || n == 0 {
            return Err(parse_err(
                rows + 1,
                format!("need at least 2 rows of data, found {rows}"),
            ));
        }
        Trajectory::from_columns(DMatrix::from_column_slice(n, rows, &values), None)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, path)
    }
}

/// How `y_0` is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartState {
    /// `y_0 ~ N(0, Π)`, so the series is stationary from the first sample.
    #[default]
    Stationary,
    /// `y_0 = 0`. The first draw is still consumed, so the noise sequence
    /// `z_1, z_2, ...` is the same as for [`StartState::Stationary`].
    Zero,
}

impl std::str::FromStr for StartState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stationary" => Ok(StartState::Stationary),
            "zero" => Ok(StartState::Zero),
            other => Err(Error::InvalidInput(format!(
                "unknown start state '{other}' (expected stationary or zero)"
            ))),
        }
    }
}

/// Reusable simulator: caches `chol(Π)` and `Q^{1/2}` for one model.
#[derive(Clone, Debug)]
pub struct Simulator {
    f: DMatrix<f64>,
    q_sqrt: DMatrix<f64>,
    pi_chol: DMatrix<f64>,
}

/// Noise columns generated per batch before shaping by `Q^{1/2}`.
const NOISE_BATCH: usize = 1024;

impl Simulator {
    pub fn new(model: &VarModel) -> Result<Self> {
        let pi = stationary_covariance(model)?;
        Ok(Simulator {
            f: model.f().clone(),
            q_sqrt: linalg::spd_sqrt(model.q())?,
            pi_chol: linalg::cholesky(&pi)?,
        })
    }

    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    /// Draws `y_0 ~ N(0, Π)` and runs `y_t = F y_{t-1} + Q^{1/2} z_t` for
    /// `t = 1..=T`.
    pub fn simulate(&self, transitions: usize, seed: u64) -> Result<Trajectory> {
        self.simulate_from(transitions, seed, StartState::Stationary)
    }

    pub fn simulate_from(&self, transitions: usize, seed: u64, start_state: StartState) -> Result<Trajectory> {
        if transitions == 0 {
            return Err(Error::InvalidInput("T must be at least 1".into()));
        }
        let n = self.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = DMatrix::<f64>::zeros(n, transitions + 1);

        let z0 = DMatrix::<f64>::from_fn(n, 1, |_, _| StandardNormal.sample(&mut rng));
        if start_state == StartState::Stationary {
            y.column_mut(0).copy_from(&(&self.pi_chol * z0).column(0));
        }

        let mut start = 1;
        let mut z = DMatrix::<f64>::zeros(n, NOISE_BATCH.min(transitions));
        while start <= transitions {
            let width = NOISE_BATCH.min(transitions + 1 - start);
            if z.ncols() != width {
                z = DMatrix::zeros(n, width);
            }
            // column-major fill keeps z_t contiguous and in draw order
            for v in z.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            y.columns_mut(start, width).gemm(1.0, &self.q_sqrt, &z, 0.0);
            start += width;
        }

        let mut prev = y.column(0).into_owned();
        for t in 1..=transitions {
            let mut col = y.column_mut(t);
            col.gemv(1.0, &self.f, &prev, 1.0);
            prev.copy_from(&col);
        }
        Trajectory::from_columns(y, Some(seed))
    }
}

pub fn simulate(model: &VarModel, transitions: usize, seed: u64) -> Result<Trajectory> {
    if transitions == 0 {
        return Err(Error::InvalidInput("T must be at least 1".into()));
    }
    Simulator::new(model)?.simulate(transitions, seed)
}
