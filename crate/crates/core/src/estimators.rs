//! Transition-matrix estimators computed from sample moments.
//!
//! | method         | estimate                                        | stable |
//! |----------------|-------------------------------------------------|--------|
//! | `Ls`           | `S10 S00^{-1}`                                  | no     |
//! | `FbSylvester`  | `F S00 P^{-1} + S11 P^{-1} F = 2 S10 P^{-1}`    | yes    |
//! | `Fb11`         | `2 S10 (S00 + S11)^{-1}`                        | yes    |
//! | `Rls`          | rank-`m` least squares                          | no     |
//! | `Rfb`          | rank-`m` forwards-backwards                     | yes    |
//! | `Bls`          | backwards least squares `S01 S11^{-1}`          | no     |
//!
//! Both reduced-rank estimators have the form
//! `S11^{1/2} V_m V_m' S11^{-1/2} F_full`, where `V_m` holds the top `m`
//! eigenvectors of a symmetric matrix built from the moments and `F_full`
//! is the matching full-rank estimate. For `Rls` that matrix is
//! `S11^{-1/2} S10 S00^{-1} S01 S11^{-1/2}` and `F_full = F_LS`. For `Rfb` it
//! is `2 S11^{-1/2} S10 (S00+S11)^{-1} S01 S11^{-1/2}` and `F_full = F_11`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactor, SpdRoots, SymEig};
use crate::moments::SampleMoments;

/// Relative gap below which the `m`-th and `(m+1)`-th eigenvalues of the
/// projector matrix count as tied.
pub const RANK_TIE_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Ls,
    FbSylvester,
    Fb11,
    Rls,
    Rfb,
    Bls,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Ls => "LS",
            Method::FbSylvester => "FB_SYLVESTER",
            Method::Fb11 => "FB11",
            Method::Rls => "RLS",
            Method::Rfb => "RFB",
            Method::Bls => "BLS",
        }
    }

    /// Whether the estimate is stable by construction.
    pub fn guarantees_stability(self) -> bool {
        matches!(self, Method::FbSylvester | Method::Fb11 | Method::Rfb)
    }

    pub fn is_reduced_rank(self) -> bool {
        matches!(self, Method::Rls | Method::Rfb)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts the serialized tags and the short CLI names `ls`, `fb`,
    /// `rls`, `rfb`.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ls" => Ok(Method::Ls),
            "fb" | "fb11" => Ok(Method::Fb11),
            "fb_sylvester" => Ok(Method::FbSylvester),
            "rls" => Ok(Method::Rls),
            "rfb" => Ok(Method::Rfb),
            "bls" => Ok(Method::Bls),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

/// A fitted transition matrix.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub f_hat: DMatrix<f64>,
    pub method: Method,
    pub rank: usize,
    pub q_hat: Option<DMatrix<f64>>,
    /// Wall-clock seconds spent computing `f_hat` (and `q_hat`).
    pub fit_seconds: f64,
    pub spectral_radius: f64,
    pub warnings: Vec<String>,
}

impl Estimate {
    fn finish(
        method: Method,
        rank: usize,
        f_hat: DMatrix<f64>,
        q_hat: Option<DMatrix<f64>>,
        fit_seconds: f64,
        mut warnings: Vec<String>,
    ) -> Result<Self> {
        let spectral_radius = linalg::spectral_radius(&f_hat)?;
        if method.guarantees_stability() && spectral_radius >= 1.0 {
            warnings.push(format!(
                "stability guarantee violated numerically: spectral radius {spectral_radius}"
            ));
        }
        Ok(Estimate {
            f_hat,
            method,
            rank,
            q_hat,
            fit_seconds,
            spectral_radius,
            warnings,
        })
    }

    pub fn n(&self) -> usize {
        self.f_hat.nrows()
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_radius < 1.0
    }

    /// `1 - ρ(F̂)`; negative for unstable estimates.
    pub fn stability_margin(&self) -> f64 {
        1.0 - self.spectral_radius
    }

    pub fn to_json(&self) -> EstimateJson {
        EstimateJson {
            method: self.method,
            n: self.n(),
            rank: self.rank,
            f_hat: row_major(&self.f_hat),
            q_hat: self.q_hat.as_ref().map(row_major),
            spectral_radius: self.spectral_radius,
            fit_seconds: self.fit_seconds,
            warnings: self.warnings.clone(),
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// Serialized form of an [`Estimate`]. Matrices are flattened row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateJson {
    pub method: Method,
    pub n: usize,
    pub rank: usize,
    pub f_hat: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_hat: Option<Vec<f64>>,
    pub spectral_radius: f64,
    pub fit_seconds: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl EstimateJson {
    pub fn f_hat_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.f_hat)
    }

    pub fn q_hat_matrix(&self) -> Option<DMatrix<f64>> {
        self.q_hat
            .as_ref()
            .map(|q| DMatrix::from_row_slice(self.n, self.n, q))
    }
}

fn check_rank(n: usize, rank: usize) -> Result<()> {
    if rank == 0 || rank > n {
        return Err(Error::InvalidRank { rank, n });
    }
    Ok(())
}

/// Full-rank least squares `F̂_LS = S10 S00^{-1}`. Not necessarily stable.
pub fn fit_ls(s: &SampleMoments) -> Result<Estimate> {
    let start = Instant::now();
    let f_hat = SpdFactor::new(s.s00())?.solve_right(s.s10());
    let elapsed = start.elapsed().as_secs_f64();
    Estimate::finish(Method::Ls, s.n(), f_hat, None, elapsed, Vec::new())
}

/// Minimizer of `J(F; P)` for a general SPD weight `P`, from the Sylvester
/// equation `F S00 P^{-1} + S11 P^{-1} F = 2 S10 P^{-1}`.
pub fn fit_fb_sylvester(s: &SampleMoments, p: &DMatrix<f64>) -> Result<Estimate> {
    linalg::check_same_dim("P", p, s.n())?;
    let start = Instant::now();
    let p_factor = SpdFactor::new(p)?;
    // the Sylvester coefficients are only similar to SPD matrices when these are
    SpdFactor::new(s.s00())?;
    SpdFactor::new(s.s11())?;
    let a = p_factor.solve_right(s.s11());
    let b = p_factor.solve_right(s.s00());
    let c = p_factor.solve_right(&(s.s10() * 2.0));
    let f_hat = linalg::solve_sylvester(&a, &b, &c)?;
    let elapsed = start.elapsed().as_secs_f64();
    Estimate::finish(Method::FbSylvester, s.n(), f_hat, None, elapsed, Vec::new())
}

/// Closed-form forwards-backwards estimate `F̂_11 = 2 S10 (S00 + S11)^{-1}`,
/// the `P = S11` case of [`fit_fb_sylvester`].
pub fn fit_fb11(s: &SampleMoments) -> Result<Estimate> {
    let start = Instant::now();
    let sum = s.s00() + s.s11();
    let f_hat = SpdFactor::new(&sum)?.solve_right(&(s.s10() * 2.0));
    let elapsed = start.elapsed().as_secs_f64();
    Estimate::finish(Method::Fb11, s.n(), f_hat, None, elapsed, Vec::new())
}

/// Pieces shared by the two reduced-rank estimators.
struct Projection {
    roots: SpdRoots,
    eig: SymEig,
    /// `S11^{-1/2} F_full`.
    whitened_full: DMatrix<f64>,
}

impl Projection {
    /// `S11^{-1/2} S10 W^{-1} S01 S11^{-1/2}` scaled by `weight`, where `W`
    /// is `S00` (least squares) or `S00 + S11` (forwards-backwards).
    fn build(s: &SampleMoments, inner: &DMatrix<f64>, weight: f64) -> Result<Self> {
        let roots = linalg::spd_roots(s.s11())?;
        let inner = SpdFactor::new(inner)?;
        let g = &roots.inv_sqrt * s.s10();
        // H = W^{-1} (weight G)' so that R = G H and S11^{-1/2} F_full = H'
        let h = inner.solve(&(g.transpose() * weight));
        let r = linalg::symmetrize(&(&g * &h));
        let eig = linalg::sym_eig(&r)?;
        Ok(Projection {
            roots,
            eig,
            whitened_full: h.transpose(),
        })
    }

    /// `S11^{1/2} V_m` for the top `m` eigenvectors.
    fn scaled_basis(&self, m: usize) -> DMatrix<f64> {
        &self.roots.sqrt * self.eig.vectors.columns(0, m)
    }

    /// `S11^{1/2} V_m V_m' S11^{-1/2} F_full`.
    fn project(&self, m: usize) -> DMatrix<f64> {
        let vm = self.eig.vectors.columns(0, m);
        let coeffs = vm.transpose() * &self.whitened_full;
        self.scaled_basis(m) * coeffs
    }

    fn warnings(&self, m: usize) -> Vec<String> {
        let n = self.eig.dim();
        if m >= n {
            return Vec::new();
        }
        let values = &self.eig.values;
        let scale = values[0].abs().max(f64::MIN_POSITIVE);
        if (values[m - 1] - values[m]).abs() <= RANK_TIE_TOL * scale {
            vec![format!(
                "eigenvalues {m} and {} of the projector matrix are tied ({:e}); the rank-{m} subspace is not unique",
                m + 1,
                values[m - 1]
            )]
        } else {
            Vec::new()
        }
    }
}

/// Reduced-rank least squares with its noise covariance
/// `Q̂ = S11^{1/2} (I - V_m D_m² V_m') S11^{1/2}`.
pub fn fit_rls(s: &SampleMoments, m: usize) -> Result<Estimate> {
    check_rank(s.n(), m)?;
    let start = Instant::now();
    let proj = Projection::build(s, s.s00(), 1.0)?;
    let f_hat = proj.project(m);
    let basis = proj.scaled_basis(m);
    let mut weighted = basis.clone();
    for (k, mut col) in weighted.column_iter_mut().enumerate() {
        col *= proj.eig.values[k];
    }
    let q_hat = linalg::symmetrize(&(s.s11() - weighted * basis.transpose()));
    let elapsed = start.elapsed().as_secs_f64();
    let warnings = proj.warnings(m);
    Estimate::finish(Method::Rls, m, f_hat, Some(q_hat), elapsed, warnings)
}

/// Stable reduced-rank forwards-backwards estimate: the rank-`m` minimizer
/// of `J(F; S11)`.
pub fn fit_rfb(s: &SampleMoments, m: usize) -> Result<Estimate> {
    check_rank(s.n(), m)?;
    let start = Instant::now();
    let sum = s.s00() + s.s11();
    let proj = Projection::build(s, &sum, 2.0)?;
    let f_hat = proj.project(m);
    let elapsed = start.elapsed().as_secs_f64();
    let warnings = proj.warnings(m);
    Estimate::finish(Method::Rfb, m, f_hat, None, elapsed, warnings)
}

/// Backwards least squares `F̂_b = S01 S11^{-1}` with
/// `Q̂_b = S00 - S01 S11^{-1} S10`.
pub fn fit_backward_ls(s: &SampleMoments) -> Result<Estimate> {
    let start = Instant::now();
    let f_hat = SpdFactor::new(s.s11())?.solve_right(&s.s01());
    let q_hat = linalg::symmetrize(&(s.s00() - &f_hat * s.s10()));
    let elapsed = start.elapsed().as_secs_f64();
    Estimate::finish(Method::Bls, s.n(), f_hat, Some(q_hat), elapsed, Vec::new())
}

/// Dispatch by method. `rank` is used only by the reduced-rank methods.
/// `FbSylvester` uses `P = S11`.
pub fn fit(s: &SampleMoments, method: Method, rank: usize) -> Result<Estimate> {
    match method {
        Method::Ls => fit_ls(s),
        Method::FbSylvester => fit_fb_sylvester(s, s.s11()),
        Method::Fb11 => fit_fb11(s),
        Method::Rls => fit_rls(s, rank),
        Method::Rfb => fit_rfb(s, rank),
        Method::Bls => fit_backward_ls(s),
    }
}

/// `S11^{-1} - F' S11^{-1} F`. Positive definite certifies `ρ(F) < 1`.
pub fn lyapunov_witness(s: &SampleMoments, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::check_same_dim("F", f, s.n())?;
    let factor = SpdFactor::new(s.s11())?;
    let n = s.n();
    let s11_inv = factor.solve(&DMatrix::identity(n, n));
    let weighted = factor.solve(f);
    Ok(linalg::symmetrize(&(s11_inv - f.transpose() * weighted)))
}
