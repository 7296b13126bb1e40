//! Brute-force references for the closed-form estimators. Nothing here calls
//! the library's estimators or criteria; only plain nalgebra is used.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stablevar::SampleMoments;

use self::subsets::combinations;
use super::gaussian;

/// `c + tr(F' L) + Σ tr(F' A_k F B_k)` with symmetric `A_k`, `B_k`.
#[derive(Clone, Debug)]
pub struct Quadratic {
    constant: f64,
    linear: DMatrix<f64>,
    terms: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

fn inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("oracle: singular matrix")
}

fn tr_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

impl Quadratic {
    /// Forward-backward criterion `tr{P^-1 (S_wf(F) + S_wb(F))}` with
    /// `F_b = P F' P^-1`.
    pub fn fb(s: &SampleMoments, p: &DMatrix<f64>) -> Self {
        let pi = inv(p);
        let s11 = s.s11();
        Quadratic {
            constant: (&pi * (s.s00() + s11)).trace(),
            linear: &pi * s.s10() * -4.0,
            terms: vec![(pi.clone(), s.s00().clone()), (&pi * s11 * &pi, p.clone())],
        }
    }

    /// Weighted least-squares criterion `tr(S11^-1 S_wf(F))`.
    pub fn ls(s: &SampleMoments) -> Self {
        let w = inv(s.s11());
        Quadratic {
            constant: s.n() as f64,
            linear: &w * s.s10() * -2.0,
            terms: vec![(w, s.s00().clone())],
        }
    }

    pub fn value(&self, f: &DMatrix<f64>) -> f64 {
        self.constant
            + tr_inner(f, &self.linear)
            + self.terms.iter().map(|(a, b)| tr_inner(f, &(a * f * b))).sum::<f64>()
    }

    pub fn gradient(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = self.linear.clone();
        for (a, b) in &self.terms {
            g += a * f * b * 2.0;
        }
        g
    }
}

/// Central differences, one entry at a time.
pub fn finite_diff_grad(objective: impl Fn(&DMatrix<f64>) -> f64, f: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    assert!((1e-8..=1e-4).contains(&h), "step outside [1e-8, 1e-4]");
    let mut g = DMatrix::zeros(f.nrows(), f.ncols());
    let mut x = f.clone();
    for i in 0..f.nrows() {
        for j in 0..f.ncols() {
            let orig = x[(i, j)];
            x[(i, j)] = orig + h;
            let up = objective(&x);
            x[(i, j)] = orig - h;
            let down = objective(&x);
            x[(i, j)] = orig;
            g[(i, j)] = (up - down) / (2.0 * h);
        }
    }
    g
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub j: f64,
    pub f: DMatrix<f64>,
    pub converged: bool,
    pub grad_norm: f64,
    pub restarts_converged: usize,
}

pub const GRAD_TOL: f64 = 1e-10;
const MAX_ITER: usize = 50_000;
const REBALANCE_EVERY: usize = 25;

/// Rewrites `F = AB` as `A = U Σ^{1/2}`, `B = Σ^{1/2} V'` from the thin SVD.
fn rebalance(a: &mut DMatrix<f64>, b: &mut DMatrix<f64>) {
    let m = a.ncols();
    let svd = (&*a * &*b).svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    for k in 0..m {
        let r = svd.singular_values[k].sqrt();
        a.set_column(k, &(u.column(k) * r));
        b.set_row(k, &(vt.row(k) * r));
    }
}

struct Descent {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    value: f64,
    ga: DMatrix<f64>,
    gb: DMatrix<f64>,
}

impl Descent {
    fn new(obj: &Quadratic, a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        let f = &a * &b;
        let g = obj.gradient(&f);
        Descent {
            value: obj.value(&f),
            ga: &g * b.transpose(),
            gb: a.transpose() * &g,
            a,
            b,
        }
    }

    fn grad_norm(&self) -> f64 {
        (self.ga.norm_squared() + self.gb.norm_squared()).sqrt()
    }
}

/// Gradient descent on `(A, B)` with Barzilai-Borwein trial steps and
/// Armijo backtracking. Returns the best point and whether the gradient
/// norm fell below [`GRAD_TOL`].
fn descend(obj: &Quadratic, a0: DMatrix<f64>, b0: DMatrix<f64>) -> (Descent, bool) {
    let mut cur = Descent::new(obj, a0, b0);
    let mut step = 1e-2;
    let mut prev: Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> = None;
    for it in 0..MAX_ITER {
        let gn = cur.grad_norm();
        if gn < GRAD_TOL {
            return (cur, true);
        }
        if it % REBALANCE_EVERY == 0 {
            rebalance(&mut cur.a, &mut cur.b);
            cur = Descent::new(obj, cur.a, cur.b);
            prev = None;
        }
        if let Some((pa, pb, pga, pgb)) = prev.take() {
            let (sa, sb) = (&cur.a - pa, &cur.b - pb);
            let (ya, yb) = (&cur.ga - pga, &cur.gb - pgb);
            let sy = tr_inner(&sa, &ya) + tr_inner(&sb, &yb);
            let ss = sa.norm_squared() + sb.norm_squared();
            if sy > 0.0 {
                step = (ss / sy).clamp(1e-12, 1e6);
            } else {
                step *= 2.0;
            }
        }
        let g2 = gn * gn;
        let slack = 8.0 * f64::EPSILON * cur.value.abs().max(1.0);
        let mut accepted = None;
        let mut t = step;
        for _ in 0..80 {
            let trial = Descent::new(obj, &cur.a - &cur.ga * t, &cur.b - &cur.gb * t);
            let armijo = trial.value <= cur.value - 1e-4 * t * g2;
            // Near the optimum the decrease drops below rounding; accept
            // steps that keep the value flat and shrink the gradient.
            let flat = trial.value <= cur.value + slack && trial.grad_norm() < gn;
            if armijo || flat {
                accepted = Some(trial);
                break;
            }
            t *= 0.5;
        }
        let Some(next) = accepted else {
            return (cur, false);
        };
        step = t;
        prev = Some((cur.a.clone(), cur.b.clone(), cur.ga.clone(), cur.gb.clone()));
        cur = next;
    }
    let converged = cur.grad_norm() < GRAD_TOL;
    (cur, converged)
}

/// Minimizes `obj` over rank-`m` products `F = A B` from `restarts` random
/// starts with entries drawn from `N(0, 0.1^2)`. Deterministic in `seed`.
pub fn numeric_min(obj: &Quadratic, n: usize, m: usize, restarts: usize, seed: u64) -> OracleResult {
    assert!(m >= 1 && m <= n && restarts >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Descent, bool)> = None;
    let mut restarts_converged = 0;
    for _ in 0..restarts {
        let a = gaussian(&mut rng, n, m, 0.1);
        let b = gaussian(&mut rng, m, n, 0.1);
        let (run, ok) = descend(obj, a, b);
        restarts_converged += ok as usize;
        if best.as_ref().is_none_or(|(d, _)| run.value < d.value) {
            best = Some((run, ok));
        }
    }
    let (d, converged) = best.unwrap();
    OracleResult {
        j: d.value,
        f: &d.a * &d.b,
        converged,
        grad_norm: d.grad_norm(),
        restarts_converged,
    }
}

/// `min_{rank F = m} J(F; P)`.
pub fn numeric_min_j(s: &SampleMoments, m: usize, p: &DMatrix<f64>, restarts: usize) -> OracleResult {
    numeric_min(&Quadratic::fb(s, p), s.n(), m, restarts, 0x5eed)
}

/// `min_{rank F = m} tr(S11^-1 S_wf(F))`.
pub fn numeric_min_ls(s: &SampleMoments, m: usize, restarts: usize) -> OracleResult {
    numeric_min(&Quadratic::ls(s), s.n(), m, restarts, 0x5eed)
}

fn sym_sqrt_pair(s: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(s.clone());
    let v = &e.eigenvectors;
    let root = v * DMatrix::from_diagonal(&e.eigenvalues.map(f64::sqrt)) * v.transpose();
    let inv_root = v * DMatrix::from_diagonal(&e.eigenvalues.map(|x| 1.0 / x.sqrt())) * v.transpose();
    (root, inv_root)
}

#[derive(Clone, Debug)]
pub struct ProjectorCheck {
    /// Criterion value for every `m`-subset of eigenvectors, by subset.
    pub values: Vec<(Vec<usize>, f64)>,
    pub eigenvalues: Vec<f64>,
    /// Value of the subset of the `m` largest eigenvalues.
    pub top_value: f64,
    pub best_value: f64,
    pub best_subset: Vec<usize>,
}

/// Projects the full-rank FB estimate onto every `m`-subset of eigenvectors
/// of `R = 2 S11^-1/2 S10 (S00 + S11)^-1 S01 S11^-1/2` and evaluates
/// `J(.; S11)`. Eigenvectors are indexed by descending eigenvalue.
pub fn exhaustive_projector_check(s: &SampleMoments, m: usize) -> ProjectorCheck {
    let n = s.n();
    assert!(n <= 6 && m >= 1 && m <= n);
    let (root, inv_root) = sym_sqrt_pair(s.s11());
    let total = inv(&(s.s00() + s.s11()));
    let r = &inv_root * s.s10() * &total * s.s10().transpose() * &inv_root * 2.0;
    let e = SymmetricEigen::new((&r + r.transpose()) * 0.5);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| e.eigenvalues[j].total_cmp(&e.eigenvalues[i]));
    let f11 = s.s10() * &total * 2.0;
    let obj = Quadratic::fb(s, s.s11());

    let values: Vec<(Vec<usize>, f64)> = combinations(n, m)
        .into_iter()
        .map(|subset| {
            let mut v = DMatrix::zeros(n, m);
            for (c, &k) in subset.iter().enumerate() {
                v.set_column(c, &e.eigenvectors.column(order[k]));
            }
            let f = &root * &v * v.transpose() * &inv_root * &f11;
            (subset, obj.value(&f))
        })
        .collect();
    let (best_subset, best_value) = values
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(s, v)| (s.clone(), *v))
        .unwrap();
    let top_value = values[0].1;
    ProjectorCheck {
        eigenvalues: order.iter().map(|&k| e.eigenvalues[k]).collect(),
        values,
        top_value,
        best_value,
        best_subset,
    }
}

mod subsets {
    /// All `m`-subsets of `0..n` in lexicographic order; the first is
    /// `[0, 1, .., m-1]`.
    pub fn combinations(n: usize, m: usize) -> Vec<Vec<usize>> {
        fn rec(start: usize, n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == m {
                out.push(cur.clone());
                return;
            }
            for k in start..n {
                cur.push(k);
                rec(k + 1, n, m, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(0, n, m, &mut Vec::new(), &mut out);
        out
    }
}
