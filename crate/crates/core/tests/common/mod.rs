#![allow(dead_code)]

pub mod oracle;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stablevar::linalg::spectral_radius;
use stablevar::moments::{sample_moments, trajectory_moments};
use stablevar::process::{simulate, VarModel};
use stablevar::SampleMoments;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sd: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
}

/// Random `n x n` matrix rescaled to spectral radius `rho`.
pub fn random_stable(rng: &mut ChaCha8Rng, n: usize, rho: f64) -> DMatrix<f64> {
    let a = gaussian(rng, n, n, 1.0);
    let r = spectral_radius(&a).unwrap();
    a * (rho / r)
}

/// Random SPD matrix with eigenvalues roughly in `[0.5, 2.5]`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = gaussian(rng, n, n, 1.0);
    let q = a.qr().q();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| rng.random_range(0.5..2.5)));
    let s = &q * d * q.transpose();
    (&s + s.transpose()) * 0.5
}

/// Moments of a series from a random stable VAR(1) of dimension `n`.
pub fn random_var_moments(rng: &mut ChaCha8Rng, n: usize, t: usize) -> SampleMoments {
    let rho = rng.random_range(0.3..0.95);
    let f = random_stable(rng, n, rho);
    let model = VarModel::with_unit_noise(f).unwrap();
    let traj = simulate(&model, t, rng.random()).unwrap();
    trajectory_moments(&traj).unwrap()
}

/// Moments of i.i.d. Gaussian data with an arbitrary mixing, not generated by
/// any VAR.
pub fn random_data_moments(rng: &mut ChaCha8Rng, n: usize, t: usize) -> SampleMoments {
    let mix = gaussian(rng, n, n, 1.0) + DMatrix::identity(n, n) * 0.5;
    let y = &mix * gaussian(rng, n, t + 1, 1.0);
    sample_moments(y.columns(0, t), y.columns(1, t)).unwrap()
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
