//! Data matrices, second-moment sufficient statistics and the residual
//! matrices of the forwards-backwards criterion.

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{Error, Result};
use crate::linalg::{self, SpdFactor};
use crate::process::Trajectory;

/// `Y0 = [y_0 .. y_{T-1}]` and `Y1 = [y_1 .. y_T]` as views into the
/// trajectory.
pub fn build_data_matrices(traj: &Trajectory) -> (DMatrixView<'_, f64>, DMatrixView<'_, f64>) {
    let t = traj.transitions();
    let y = traj.observations();
    (y.columns(0, t), y.columns(1, t))
}

/// `S_ij = Y_i Y_j' / T` for `i, j ∈ {0, 1}`. `S01 = S10'` is not stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMoments {
    transitions: usize,
    s00: DMatrix<f64>,
    s11: DMatrix<f64>,
    s10: DMatrix<f64>,
}

impl SampleMoments {
    /// Builds moments from already-computed matrices. `S00` and `S11` are
    /// symmetrized.
    pub fn from_matrices(
        transitions: usize,
        s00: DMatrix<f64>,
        s11: DMatrix<f64>,
        s10: DMatrix<f64>,
    ) -> Result<Self> {
        if transitions == 0 {
            return Err(Error::InvalidInput("T must be at least 1".into()));
        }
        let n = linalg::check_square("S00", &s00)?;
        linalg::check_same_dim("S11", &s11, n)?;
        linalg::check_same_dim("S10", &s10, n)?;
        for (name, m) in [("S00", &s00), ("S11", &s11), ("S10", &s10)] {
            linalg::check_finite(name, m)?;
        }
        Ok(SampleMoments {
            transitions,
            s00: linalg::symmetrize(&s00),
            s11: linalg::symmetrize(&s11),
            s10,
        })
    }

    pub fn n(&self) -> usize {
        self.s00.nrows()
    }

    pub fn transitions(&self) -> usize {
        self.transitions
    }

    pub fn s00(&self) -> &DMatrix<f64> {
        &self.s00
    }

    pub fn s11(&self) -> &DMatrix<f64> {
        &self.s11
    }

    pub fn s10(&self) -> &DMatrix<f64> {
        &self.s10
    }

    pub fn s01(&self) -> DMatrix<f64> {
        self.s10.transpose()
    }
}

pub fn sample_moments(y0: DMatrixView<'_, f64>, y1: DMatrixView<'_, f64>) -> Result<SampleMoments> {
    if y0.shape() != y1.shape() {
        return Err(Error::InvalidInput(format!(
            "Y0 is {:?} but Y1 is {:?}",
            y0.shape(),
            y1.shape()
        )));
    }
    let (n, t) = y0.shape();
    if t == 0 || n == 0 {
        return Err(Error::InvalidInput("T must be at least 1".into()));
    }
    let scale = 1.0 / t as f64;
    let s00 = (y0 * y0.transpose()) * scale;
    let s11 = (y1 * y1.transpose()) * scale;
    let s10 = (y1 * y0.transpose()) * scale;
    SampleMoments::from_matrices(t, s00, s11, s10)
}

pub fn trajectory_moments(traj: &Trajectory) -> Result<SampleMoments> {
    let (y0, y1) = build_data_matrices(traj);
    sample_moments(y0, y1)
}

fn check_f(s: &SampleMoments, f: &DMatrix<f64>) -> Result<()> {
    linalg::check_same_dim("F", f, s.n())?;
    linalg::check_finite("F", f)
}

/// Forwards residual matrix `S11 - F S01 - S10 F' + F S00 F'`.
pub fn residual_forward(s: &SampleMoments, f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_f(s, f)?;
    let cross = s.s10() * f.transpose();
    let out = s.s11() - &cross - cross.transpose() + f * s.s00() * f.transpose();
    Ok(linalg::symmetrize(&out))
}

/// Backwards transition `F_b = P F' P^{-1}`.
pub fn backward_transition(f: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let factor = SpdFactor::new(p)?;
    Ok(factor.solve_right(&(p * f.transpose())))
}

/// Backwards residual matrix `S00 - F_b S10 - S01 F_b' + F_b S11 F_b'` with
/// `F_b = P F' P^{-1}`.
pub fn residual_backward(s: &SampleMoments, f: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_f(s, f)?;
    linalg::check_same_dim("P", p, s.n())?;
    let f_b = backward_transition(f, p)?;
    Ok(backward_residual_for(s, &f_b))
}

/// Backwards residual for an explicit backwards transition matrix.
pub fn backward_residual_for(s: &SampleMoments, f_b: &DMatrix<f64>) -> DMatrix<f64> {
    let cross = f_b * s.s10();
    let out = s.s00() - &cross - cross.transpose() + f_b * s.s11() * f_b.transpose();
    linalg::symmetrize(&out)
}

/// `J(F; P) = trace{P^{-1} (S_wf(F) + S_wb(F))}`.
pub fn criterion_j(s: &SampleMoments, f: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<f64> {
    let total = residual_forward(s, f)? + residual_backward(s, f, p)?;
    Ok(SpdFactor::new(p)?.solve(&total).trace())
}

/// `J_LS(F) = trace{S11^{-1} S_wf(F)}`, the reduced-rank least-squares
/// objective.
pub fn criterion_ls(s: &SampleMoments, f: &DMatrix<f64>) -> Result<f64> {
    let forward = residual_forward(s, f)?;
    Ok(SpdFactor::new(s.s11())?.solve(&forward).trace())
}
