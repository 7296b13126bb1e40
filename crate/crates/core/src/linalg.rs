//! Dense linear algebra used by the estimators.
//!
//! Thin, deterministic wrappers over `nalgebra` decompositions plus the two
//! matrix-equation solvers (discrete Lyapunov, Sylvester). Every routine here
//! is a pure function of its inputs.

use std::cmp::Ordering;

use nalgebra::{Cholesky, DMatrix, DVector, Schur, SymmetricEigen};
pub use nalgebra::Complex;

pub type Complex64 = Complex<f64>;

use crate::error::{Error, Result};

/// Relative floor below which a symmetric matrix is treated as singular.
pub const SPD_FLOOR: f64 = 1e-12;

/// Largest dimension solved by the dense vectorized (Kronecker) systems.
/// Above it, Lyapunov uses doubling and Sylvester uses Bartels-Stewart.
pub const VEC_SOLVE_MAX_DIM: usize = 16;

const SYMMETRY_TOL: f64 = 1e-8;

pub(crate) fn check_finite(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} has non-finite entries")))
    }
}

pub(crate) fn check_square(name: &str, m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::InvalidInput(format!(
            "{name} must be a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

pub(crate) fn check_same_dim(name: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// `(M + M')/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    let scale = m.norm().max(1.0);
    let asym = (m - m.transpose()).norm();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::InvalidInput(format!(
            "{name} is not symmetric (asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix with a canonical ordering.
///
/// `values` are descending and column `k` of `vectors` belongs to
/// `values[k]`. Each eigenvector has its largest-magnitude entry positive.
/// Exactly equal eigenvalues are ordered by the lexicographically larger
/// eigenvector first.
#[derive(Clone, Debug, PartialEq)]
pub struct SymEig {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEig {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(f(λ)) V'`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[k]);
        }
        symmetrize(&(scaled * self.vectors.transpose()))
    }

    fn check_spd_floor(&self) -> Result<()> {
        let largest = self.values[0];
        let smallest = self.values[self.dim() - 1];
        if !(largest > 0.0) || smallest <= SPD_FLOOR * largest {
            return Err(Error::NotPositiveDefinite {
                eigenvalue: smallest,
            });
        }
        Ok(())
    }
}

fn lexicographic_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    Ordering::Equal
}

pub fn sym_eig(s: &DMatrix<f64>) -> Result<SymEig> {
    let n = check_square("symmetric matrix", s)?;
    check_finite("symmetric matrix", s)?;
    check_symmetric("symmetric matrix", s)?;

    let decomposition = SymmetricEigen::try_new(symmetrize(s), f64::EPSILON, 0)
        .ok_or(Error::NoConvergence(n))?;

    let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|k| {
            let mut v: Vec<f64> = decomposition.eigenvectors.column(k).iter().copied().collect();
            // first index of the largest |entry|
            let mut pivot = 0;
            for (i, x) in v.iter().enumerate() {
                if x.abs() > v[pivot].abs() {
                    pivot = i;
                }
            }
            if v[pivot] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            (decomposition.eigenvalues[k], v)
        })
        .collect();

    pairs.sort_by(|(la, va), (lb, vb)| {
        lb.total_cmp(la).then_with(|| lexicographic_cmp(vb, va))
    });

    let values = DVector::from_iterator(n, pairs.iter().map(|(l, _)| *l));
    let vectors = DMatrix::from_iterator(n, n, pairs.into_iter().flat_map(|(_, v)| v));
    Ok(SymEig { values, vectors })
}

/// Symmetric square root and inverse square root of an SPD matrix, sharing
/// one eigendecomposition.
#[derive(Clone, Debug)]
pub struct SpdRoots {
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
}

pub fn spd_roots(s: &DMatrix<f64>) -> Result<SpdRoots> {
    let eig = sym_eig(s)?;
    eig.check_spd_floor()?;
    Ok(SpdRoots {
        sqrt: eig.reconstruct_with(f64::sqrt),
        inv_sqrt: eig.reconstruct_with(|l| 1.0 / l.sqrt()),
    })
}

pub fn spd_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig(s)?;
    eig.check_spd_floor()?;
    Ok(eig.reconstruct_with(f64::sqrt))
}

pub fn spd_inv_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig(s)?;
    eig.check_spd_floor()?;
    Ok(eig.reconstruct_with(|l| 1.0 / l.sqrt()))
}

/// Lower Cholesky factor `L` with `L L' = S`.
///
/// The positive-definiteness floor is applied to the pivots `L_ii^2`
/// relative to the largest diagonal entry of `S`.
pub fn cholesky(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(SpdFactor::new(s)?.l())
}

/// Cholesky factorization kept around for repeated solves.
pub(crate) struct SpdFactor {
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl SpdFactor {
    pub(crate) fn new(s: &DMatrix<f64>) -> Result<Self> {
        check_square("SPD matrix", s)?;
        check_finite("SPD matrix", s)?;
        check_symmetric("SPD matrix", s)?;
        let scale = s.diagonal().max();
        if !(scale > 0.0) {
            return Err(Error::NotPositiveDefinite { eigenvalue: scale });
        }
        let chol = Cholesky::new(symmetrize(s)).ok_or(Error::NotPositiveDefinite {
            eigenvalue: s.diagonal().min().min(0.0),
        })?;
        let smallest_pivot = chol.l_dirty().diagonal().map(|d| d * d).min();
        if smallest_pivot <= SPD_FLOOR * scale {
            return Err(Error::NotPositiveDefinite {
                eigenvalue: smallest_pivot,
            });
        }
        Ok(SpdFactor { chol })
    }

    pub(crate) fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `S^{-1} B`.
    pub(crate) fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `B S^{-1}`, using symmetry of `S`.
    pub(crate) fn solve_right(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(&b.transpose()).transpose()
    }
}

/// Eigenvalues of a real square matrix, ordered by descending modulus, then
/// descending real part, then descending imaginary part.
#[derive(Clone, Debug, PartialEq)]
pub struct PoleSet {
    pub poles: Vec<Complex64>,
}

impl PoleSet {
    pub fn spectral_radius(&self) -> f64 {
        self.poles.first().map_or(0.0, |p| p.norm())
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.poles.iter().map(|p| p.norm()).collect()
    }

    pub fn len(&self) -> usize {
        self.poles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poles.is_empty()
    }
}

pub fn eig_general(a: &DMatrix<f64>) -> Result<PoleSet> {
    let n = check_square("matrix", a)?;
    check_finite("matrix", a)?;
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 1000 + 100 * n)
        .ok_or(Error::NoConvergence(n))?;
    let mut poles: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    poles.sort_by(|x, y| {
        y.norm()
            .total_cmp(&x.norm())
            .then_with(|| y.re.total_cmp(&x.re))
            .then_with(|| y.im.total_cmp(&x.im))
    });
    Ok(PoleSet { poles })
}

pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eig_general(a)?.spectral_radius())
}

/// Which algorithm `solve_dlyap_with` uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DlyapMethod {
    /// `Vectorized` up to `VEC_SOLVE_MAX_DIM`, `Doubling` above.
    Auto,
    /// `(I - F⊗F) vec(Π) = vec(Q)` by dense LU.
    Vectorized,
    /// Smith doubling: `Π_{k+1} = Π_k + A_k Π_k A_k'`, `A_{k+1} = A_k²`.
    Doubling,
}

/// Solves `Π = F Π F' + Q` for stable `F` and SPD `Q`.
pub fn solve_dlyap(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    solve_dlyap_with(f, q, DlyapMethod::Auto)
}

pub fn solve_dlyap_with(
    f: &DMatrix<f64>,
    q: &DMatrix<f64>,
    method: DlyapMethod,
) -> Result<DMatrix<f64>> {
    let n = check_square("F", f)?;
    check_same_dim("Q", q, n)?;
    check_finite("F", f)?;
    check_finite("Q", q)?;
    check_symmetric("Q", q)?;
    let rho = spectral_radius(f)?;
    if rho >= 1.0 {
        return Err(Error::UnstableMatrix { rho });
    }

    let method = match method {
        DlyapMethod::Auto if n <= VEC_SOLVE_MAX_DIM => DlyapMethod::Vectorized,
        DlyapMethod::Auto => DlyapMethod::Doubling,
        m => m,
    };
    let pi = match method {
        DlyapMethod::Vectorized => dlyap_vectorized(f, q)?,
        _ => dlyap_doubling(f, q),
    };
    Ok(symmetrize(&pi))
}

fn dlyap_vectorized(f: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = f.nrows();
    let nn = n * n;
    // vec(F Π F') = (F ⊗ F) vec(Π), column-major vec
    let system = DMatrix::from_fn(nn, nn, |row, col| {
        let (i, j) = (row % n, row / n);
        let (k, l) = (col % n, col / n);
        let identity = if row == col { 1.0 } else { 0.0 };
        identity - f[(i, k)] * f[(j, l)]
    });
    let rhs = DVector::from_column_slice(q.as_slice());
    let x = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("I - F⊗F is singular".into()))?;
    Ok(DMatrix::from_column_slice(n, n, x.as_slice()))
}

fn dlyap_doubling(f: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = f.clone();
    let mut pi = q.clone();
    for _ in 0..200 {
        let increment = &a * &pi * a.transpose();
        pi += &increment;
        if increment.norm() <= f64::EPSILON * pi.norm() {
            break;
        }
        a = &a * &a;
    }
    pi
}

/// Solves `A X + X B = C` with `A` p×p, `B` q×q and `C` p×q.
pub fn solve_sylvester(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = check_square("A", a)?;
    let q = check_square("B", b)?;
    if p.max(q) <= VEC_SOLVE_MAX_DIM {
        solve_sylvester_vectorized(a, b, c)
    } else {
        solve_sylvester_schur(a, b, c)
    }
}

fn check_sylvester_inputs(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<(usize, usize)> {
    let p = check_square("A", a)?;
    let q = check_square("B", b)?;
    if c.nrows() != p || c.ncols() != q {
        return Err(Error::InvalidInput(format!(
            "C must be {p}x{q}, got {}x{}",
            c.nrows(),
            c.ncols()
        )));
    }
    check_finite("A", a)?;
    check_finite("B", b)?;
    check_finite("C", c)?;
    Ok((p, q))
}

/// Residual postcondition shared by both Sylvester paths.
fn check_sylvester_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("non-finite Sylvester solution".into()));
    }
    let residual = (a * x + x * b - c).norm();
    let bound = 1e-9 * (a.norm() + b.norm()) * x.norm();
    if residual > bound && residual > 1e-12 * c.norm() {
        return Err(Error::SingularSystem(format!(
            "Sylvester residual {residual:e} exceeds {bound:e}; spectra of A and -B overlap"
        )));
    }
    Ok(())
}

/// `(I⊗A + B'⊗I) vec(X) = vec(C)` by dense LU.
pub fn solve_sylvester_vectorized(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (p, q) = check_sylvester_inputs(a, b, c)?;
    let x = kron_sylvester_solve(a, b, c)
        .ok_or_else(|| Error::SingularSystem("I⊗A + B'⊗I is singular".into()))?;
    let x = DMatrix::from_column_slice(p, q, x.as_slice());
    check_sylvester_residual(a, b, c, &x)?;
    Ok(x)
}

fn kron_sylvester_solve<S1, S2, S3>(
    a: &nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::Dyn, S1>,
    b: &nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::Dyn, S2>,
    c: &nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::Dyn, S3>,
) -> Option<DVector<f64>>
where
    S1: nalgebra::Storage<f64, nalgebra::Dyn, nalgebra::Dyn>,
    S2: nalgebra::Storage<f64, nalgebra::Dyn, nalgebra::Dyn>,
    S3: nalgebra::Storage<f64, nalgebra::Dyn, nalgebra::Dyn>,
{
    let p = a.nrows();
    let q = b.nrows();
    let system = DMatrix::from_fn(p * q, p * q, |row, col| {
        let (i, j) = (row % p, row / p);
        let (k, l) = (col % p, col / p);
        let mut v = 0.0;
        if j == l {
            v += a[(i, k)];
        }
        if i == k {
            v += b[(l, j)];
        }
        v
    });
    let rhs = DVector::from_iterator(p * q, c.iter().copied());
    let lu = system.lu();
    // reject numerically singular pivots, not just exact zeros
    let u = lu.u();
    let scale = u.diagonal().abs().max();
    if !(scale > 0.0) || u.diagonal().abs().min() <= 1e-14 * scale {
        return None;
    }
    lu.solve(&rhs)
}

/// Boundaries `[start, end)` of the 1×1 and 2×2 diagonal blocks of an upper
/// quasi-triangular matrix.
fn quasi_triangular_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            blocks.push((i, i + 2));
            i += 2;
        } else {
            blocks.push((i, i + 1));
            i += 1;
        }
    }
    blocks
}

/// Bartels-Stewart: reduce `A` and `B` to real Schur form and solve the
/// quasi-triangular system block by block.
pub fn solve_sylvester_schur(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let (p, q) = check_sylvester_inputs(a, b, c)?;
    let (ua, ta) = Schur::try_new(a.clone(), f64::EPSILON, 1000 + 100 * p)
        .ok_or(Error::NoConvergence(p))?
        .unpack();
    let (ub, tb) = Schur::try_new(b.clone(), f64::EPSILON, 1000 + 100 * q)
        .ok_or(Error::NoConvergence(q))?
        .unpack();

    let c_tilde = ua.transpose() * c * &ub;
    let mut y = DMatrix::<f64>::zeros(p, q);
    let row_blocks = quasi_triangular_blocks(&ta);
    let col_blocks = quasi_triangular_blocks(&tb);

    for &(j0, j1) in &col_blocks {
        for &(i0, i1) in row_blocks.iter().rev() {
            let mut rhs = c_tilde.view((i0, j0), (i1 - i0, j1 - j0)).clone_owned();
            if i1 < p {
                rhs -= ta.view((i0, i1), (i1 - i0, p - i1)) * y.view((i1, j0), (p - i1, j1 - j0));
            }
            if j0 > 0 {
                rhs -= y.view((i0, 0), (i1 - i0, j0)) * tb.view((0, j0), (j0, j1 - j0));
            }
            let block = kron_sylvester_solve(
                &ta.view((i0, i0), (i1 - i0, i1 - i0)),
                &tb.view((j0, j0), (j1 - j0, j1 - j0)),
                &rhs,
            )
            .ok_or_else(|| Error::SingularSystem("spectra of A and -B overlap".into()))?;
            y.view_mut((i0, j0), (i1 - i0, j1 - j0))
                .copy_from_slice(block.as_slice());
        }
    }

    let x = &ua * y * ub.transpose();
    check_sylvester_residual(a, b, c, &x)?;
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = random_matrix(rng, n, n);
        &a * a.transpose() + DMatrix::identity(n, n)
    }

    fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn sym_eig_identity() {
        let e = sym_eig(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(e.values.as_slice(), &[1.0, 1.0, 1.0]);
        let vtv = e.vectors.transpose() * &e.vectors;
        assert!(rel(&vtv, &DMatrix::identity(3, 3)) < 1e-12);
        for col in e.vectors.column_iter() {
            let pivot = col.iamax();
            assert!(col[pivot] > 0.0);
        }
    }

    #[test]
    fn sym_eig_diagonal_is_sorted_signed_permutation() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0, 2.0]));
        let e = sym_eig(&s).unwrap();
        assert_eq!(e.values.as_slice(), &[3.0, 2.0, 1.0]);
        let expected = DMatrix::from_row_slice(3, 3, &[1., 0., 0., 0., 0., 1., 0., 1., 0.]);
        assert!((e.vectors - expected).norm() < 1e-14);
    }

    #[test]
    fn sym_eig_random_reconstruction_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 5, 5);
        let s = symmetrize(&a);
        let e = sym_eig(&s).unwrap();
        assert!(e.values.as_slice().windows(2).all(|w| w[0] >= w[1]));
        let vtv = e.vectors.transpose() * &e.vectors;
        assert!((vtv - DMatrix::identity(5, 5)).norm() < 1e-10);
        assert!(rel(&e.reconstruct_with(|l| l), &s) < 1e-10);
        let again = sym_eig(&s).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn sym_eig_rejects_bad_input() {
        let mut s = DMatrix::identity(2, 2);
        s[(0, 1)] = f64::NAN;
        assert!(matches!(sym_eig(&s), Err(Error::InvalidInput(_))));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(sym_eig(&asym), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn spd_roots_diagonal() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let r = spd_roots(&s).unwrap();
        assert!((r.sqrt - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]))).norm() < 1e-14);
        assert!(
            (r.inv_sqrt - DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0 / 3.0]))).norm()
                < 1e-14
        );
        assert!((spd_sqrt(&DMatrix::identity(3, 3)).unwrap() - DMatrix::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn spd_roots_random_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..7 {
            let s = random_spd(&mut rng, n);
            let r = spd_roots(&s).unwrap();
            assert!(rel(&(&r.sqrt * &r.sqrt), &s) < 1e-9);
            assert!(rel(&(&r.sqrt * &r.inv_sqrt), &DMatrix::identity(n, n)) < 1e-9);
            assert_eq!(r.sqrt, r.sqrt.transpose());
            assert!(rel(&spd_inv_sqrt(&s).unwrap(), &r.sqrt.clone().try_inverse().unwrap()) < 1e-9);
        }
    }

    #[test]
    fn spd_floor_rejects_singular() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-14]));
        match spd_sqrt(&s) {
            Err(Error::NotPositiveDefinite { eigenvalue }) => assert!((eigenvalue - 1e-14).abs() < 1e-20),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
        let indefinite = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(cholesky(&indefinite), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn cholesky_cases() {
        assert_eq!(cholesky(&DMatrix::identity(3, 3)).unwrap(), DMatrix::identity(3, 3));
        let four = DMatrix::from_element(1, 1, 4.0);
        assert_eq!(cholesky(&four).unwrap()[(0, 0)], 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_spd(&mut rng, 6);
        let l = cholesky(&s).unwrap();
        assert!(rel(&(&l * l.transpose()), &s) < 1e-10);
        assert!(l.upper_triangle().iter().enumerate().all(|(k, &v)| k % 7 == 0 || v == 0.0));
    }

    #[test]
    fn spectral_radius_basic() {
        assert_eq!(spectral_radius(&DMatrix::zeros(3, 3)).unwrap(), 0.0);
        let mut bad = DMatrix::identity(2, 2);
        bad[(1, 1)] = f64::INFINITY;
        assert!(matches!(spectral_radius(&bad), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn eig_general_rotation_scale() {
        let a = DMatrix::from_row_slice(2, 2, &[0.99, -0.1, 0.1, 0.99]);
        let poles = eig_general(&a).unwrap();
        assert_eq!(poles.len(), 2);
        assert!((poles.poles[0] - Complex64::new(0.99, 0.1)).norm() < 1e-12);
        assert!((poles.poles[1] - Complex64::new(0.99, -0.1)).norm() < 1e-12);
        assert!((poles.spectral_radius() - 0.9901f64.sqrt()).abs() < 1e-12);

        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.2]));
        let p = eig_general(&d).unwrap();
        assert!((p.poles[0] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!((p.poles[1] - Complex64::new(-0.2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn companion_matrix_roots() {
        // (z - 0.9)(z + 0.5)(z - 0.3) = z^3 - 0.7 z^2 - 0.33 z + 0.135
        let c = DMatrix::from_row_slice(3, 3, &[0.7, 0.33, -0.135, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!((spectral_radius(&c).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn eig_general_determinant_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_matrix(&mut rng, 6, 6);
        let poles = eig_general(&a).unwrap();
        assert_eq!(poles.len(), 6);
        let ac = a.map(|x| Complex64::new(x, 0.0));
        let scale = a.norm().powi(6);
        for &lambda in &poles.poles {
            let shifted = &ac - DMatrix::<Complex64>::identity(6, 6) * lambda;
            let det = shifted.determinant();
            assert!(det.norm() < 1e-8 * scale.max(1.0), "det {det}");
        }
        // conjugate pairing
        for p in poles.poles.iter().filter(|p| p.im.abs() > 1e-12) {
            assert!(poles.poles.iter().any(|q| (q - p.conj()).norm() < 1e-10));
        }
    }

    #[test]
    fn similarity_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_matrix(&mut rng, 5, 5);
        let p = random_matrix(&mut rng, 5, 5) + DMatrix::identity(5, 5) * 3.0;
        let similar = &p * &a * p.clone().try_inverse().unwrap();
        let (r1, r2) = (spectral_radius(&a).unwrap(), spectral_radius(&similar).unwrap());
        assert!((r1 - r2).abs() < 1e-8 * r1);
    }

    #[test]
    fn dlyap_closed_forms() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let pi = solve_dlyap(&DMatrix::zeros(2, 2), &q).unwrap();
        assert!((pi - &q).norm() < 1e-15);
        let scalar = solve_dlyap(&DMatrix::from_element(1, 1, 0.5), &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((scalar[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn dlyap_rejects_unstable_and_mismatch() {
        let f = DMatrix::identity(2, 2) * 1.01;
        assert!(matches!(
            solve_dlyap(&f, &DMatrix::identity(2, 2)),
            Err(Error::UnstableMatrix { .. })
        ));
        assert!(matches!(
            solve_dlyap(&DMatrix::zeros(2, 2), &DMatrix::identity(3, 3)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn dlyap_paths_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [2, 4, 7] {
            let raw = random_matrix(&mut rng, n, n);
            let f = &raw * (0.97 / spectral_radius(&raw).unwrap());
            let q = random_spd(&mut rng, n);
            let v = solve_dlyap_with(&f, &q, DlyapMethod::Vectorized).unwrap();
            let d = solve_dlyap_with(&f, &q, DlyapMethod::Doubling).unwrap();
            assert!(rel(&v, &d) < 1e-8);
            for pi in [&v, &d] {
                let residual = (pi - &f * pi * f.transpose() - &q).norm();
                assert!(residual < 1e-10 * pi.norm(), "n={n} residual {residual:e}");
            }
        }
    }

    #[test]
    fn sylvester_closed_forms() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let i = DMatrix::identity(2, 2);
        let x = solve_sylvester(&i, &i, &(&m * 2.0)).unwrap();
        assert!((x - &m).norm() < 1e-14);
        let s = solve_sylvester(
            &DMatrix::from_element(1, 1, 2.0),
            &DMatrix::from_element(1, 1, 3.0),
            &DMatrix::from_element(1, 1, 10.0),
        )
        .unwrap();
        assert!((s[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn sylvester_paths_meet_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in [1, 3, 4, 9, 20] {
            let a = random_matrix(&mut rng, n, n) + DMatrix::identity(n, n) * 3.0;
            let b = random_matrix(&mut rng, n, n) + DMatrix::identity(n, n) * 3.0;
            let c = random_matrix(&mut rng, n, n);
            let xs = solve_sylvester_schur(&a, &b, &c).unwrap();
            let bound = 1e-9 * (a.norm() + b.norm()) * xs.norm();
            assert!((&a * &xs + &xs * &b - &c).norm() < bound);
            if n <= VEC_SOLVE_MAX_DIM {
                let xv = solve_sylvester_vectorized(&a, &b, &c).unwrap();
                assert!(rel(&xv, &xs) < 1e-9);
            }
        }
    }

    #[test]
    fn sylvester_with_complex_spectra() {
        // rotation blocks exercise the 2x2 quasi-triangular path
        let a = DMatrix::from_row_slice(3, 3, &[1.0, -2.0, 0.1, 2.0, 1.0, 0.0, 0.0, 0.3, 2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, 1.5, -1.5, 0.5]);
        let c = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let xs = solve_sylvester_schur(&a, &b, &c).unwrap();
        let xv = solve_sylvester_vectorized(&a, &b, &c).unwrap();
        assert!(rel(&xs, &xv) < 1e-10);
    }

    #[test]
    fn sylvester_singular() {
        let a = DMatrix::identity(2, 2);
        let b = -DMatrix::identity(2, 2);
        let c = DMatrix::identity(2, 2);
        assert!(matches!(solve_sylvester(&a, &b, &c), Err(Error::SingularSystem(_))));
        assert!(matches!(solve_sylvester_schur(&a, &b, &c), Err(Error::SingularSystem(_))));
    }
}
