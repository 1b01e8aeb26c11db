//! Conjugate gradients with deflation and Jacobi preconditioning, and
//! smallest-eigenpair estimation by block inverse subspace iteration.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::assembly::SymmetricSparseOperator;
use crate::par;
use crate::sparse::CsrMatrix;

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = A x`
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
    fn inf_norm(&self) -> f64;
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        CsrMatrix::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }

    fn diagonal(&self) -> Vec<f64> {
        CsrMatrix::diagonal(self)
    }

    fn inf_norm(&self) -> f64 {
        CsrMatrix::inf_norm(self)
    }
}

impl LinearOperator for SymmetricSparseOperator {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.matvec(x, y)
    }

    fn diagonal(&self) -> Vec<f64> {
        self.matrix.diagonal()
    }

    fn inf_norm(&self) -> f64 {
        self.matrix.inf_norm()
    }
}

/// `A + σI`.
struct Shifted<'a> {
    inner: &'a dyn LinearOperator,
    shift: f64,
}

impl LinearOperator for Shifted<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.inner.apply(x, y);
        par::axpy(self.shift, x, y);
    }

    fn diagonal(&self) -> Vec<f64> {
        self.inner.diagonal().into_iter().map(|d| d + self.shift).collect()
    }

    fn inf_norm(&self) -> f64 {
        self.inner.inf_norm() + self.shift.abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// True residual `‖b − Ax‖` of the returned iterate, after projection.
    pub residual_norm: f64,
    /// Norm of the (projected) right-hand side.
    pub rhs_norm: f64,
    pub converged: bool,
    /// Norm of the right-hand-side component removed by deflation.
    pub discarded_rhs: f64,
    /// Recurrence residual norm per iteration, starting at iteration 0.
    pub history: Vec<f64>,
}

impl SolveStats {
    pub fn relative_residual(&self) -> f64 {
        if self.rhs_norm > 0.0 {
            self.residual_norm / self.rhs_norm
        } else {
            self.residual_norm
        }
    }

    /// CSV with header `iteration,residual`.
    pub fn write_history_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "iteration,residual")?;
        for (i, r) in self.history.iter().enumerate() {
            writeln!(out, "{i},{r:e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum KrylovError {
    /// Carries the last iterate, which has the smallest energy-norm error of
    /// all iterates.
    #[error("CG stopped after {} iterations at relative residual {:e}", .stats.iterations, .stats.relative_residual())]
    NoConvergence { x: Vec<f64>, stats: SolveStats },
    #[error("right-hand side has a component {component:e} along the deflation basis (threshold {threshold:e})")]
    IncompatibleRhs { component: f64, threshold: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no gap of factor {gap} around λ_null = {threshold:e}; smallest eigenvalues {eigenvalues:?}")]
    Inconclusive {
        threshold: f64,
        gap: f64,
        eigenvalues: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Relative to the projected right-hand side.
    pub tol: f64,
    pub max_iter: usize,
    pub jacobi: bool,
    /// Largest discarded right-hand-side component, relative to `‖b‖`,
    /// accepted silently.
    pub incompatible_tol: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tol: 1e-10,
            max_iter: 10_000,
            jacobi: true,
            incompatible_tol: 1e-8,
        }
    }
}

/// Removes the components along an orthonormal basis.
pub fn project_out(basis: &[Vec<f64>], v: &mut [f64]) {
    for q in basis {
        let c = par::dot(q, v);
        par::axpy(-c, q, v);
    }
}

pub fn cg_solve(
    a: &dyn LinearOperator,
    b: &[f64],
    opts: &CgOptions,
    deflation: Option<&[Vec<f64>]>,
) -> Result<(Vec<f64>, SolveStats), KrylovError> {
    cg_solve_observed(a, b, None, opts, deflation, |_, _, _| {})
}

/// CG from an initial guess; `observe(iteration, x, residual)` runs after
/// every update.
pub fn cg_solve_observed(
    a: &dyn LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    opts: &CgOptions,
    deflation: Option<&[Vec<f64>]>,
    mut observe: impl FnMut(usize, &[f64], f64),
) -> Result<(Vec<f64>, SolveStats), KrylovError> {
    let n = a.dim();
    if b.len() != n || x0.is_some_and(|x| x.len() != n) {
        return Err(KrylovError::DimensionMismatch(format!(
            "operator has dimension {n}, right-hand side {}",
            b.len()
        )));
    }
    let basis = deflation.unwrap_or(&[]);
    let project = |v: &mut [f64]| project_out(basis, v);

    let mut rhs = b.to_vec();
    project(&mut rhs);
    let diff: Vec<f64> = b.iter().zip(&rhs).map(|(x, y)| x - y).collect();
    let discarded = par::norm(&diff);
    let b_norm = par::norm(b);
    if discarded > opts.incompatible_tol * b_norm {
        return Err(KrylovError::IncompatibleRhs {
            component: discarded,
            threshold: opts.incompatible_tol * b_norm,
        });
    }
    let rhs_norm = par::norm(&rhs);
    let inv_diag: Vec<f64> = if opts.jacobi {
        a.diagonal().into_iter().map(|d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect()
    } else {
        vec![1.0; n]
    };
    let precondition = |r: &[f64]| -> Vec<f64> {
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        project(&mut z);
        z
    };
    let residual_of = |x: &[f64]| -> Vec<f64> {
        let mut ax = vec![0.0; n];
        a.apply(x, &mut ax);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, y)| b - y).collect();
        project(&mut r);
        r
    };

    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    project(&mut x);
    let mut stats = SolveStats {
        iterations: 0,
        residual_norm: 0.0,
        rhs_norm,
        converged: false,
        discarded_rhs: discarded,
        history: Vec::new(),
    };
    if rhs_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        stats.converged = true;
        stats.history.push(0.0);
        return Ok((x, stats));
    }
    let target = opts.tol * rhs_norm;

    let mut r = residual_of(&x);
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = par::dot(&r, &z);
    let mut rn = par::norm(&r);
    stats.history.push(rn);
    let mut q = vec![0.0; n];
    let mut converged = rn <= target;
    let mut it = 0;
    while !converged && it < opts.max_iter {
        it += 1;
        a.apply(&p, &mut q);
        let pq = par::dot(&p, &q);
        if pq <= 0.0 || !pq.is_finite() {
            break;
        }
        let alpha = rz / pq;
        par::axpy(alpha, &p, &mut x);
        par::axpy(-alpha, &q, &mut r);
        if !basis.is_empty() {
            project(&mut r);
        }
        rn = par::norm(&r);
        stats.history.push(rn);
        observe(it, &x, rn);
        if rn <= target {
            // Confirm against the true residual; restart on drift.
            r = residual_of(&x);
            rn = par::norm(&r);
            if rn <= target {
                converged = true;
                break;
            }
            z = precondition(&r);
            p = z.clone();
            rz = par::dot(&r, &z);
            continue;
        }
        z = precondition(&r);
        let rz_new = par::dot(&r, &z);
        par::xpby(&z, rz_new / rz, &mut p);
        rz = rz_new;
    }
    project(&mut x);
    stats.iterations = it;
    stats.residual_norm = par::norm(&residual_of(&x));
    stats.converged = converged && stats.residual_norm <= target;
    if stats.converged {
        Ok((x, stats))
    } else {
        Err(KrylovError::NoConvergence { x, stats })
    }
}

/// Uniform vector in `[-1, 1)ⁿ` from a seeded stream.
fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| 2.0 * ((rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64) - 1.0)
        .collect()
}

/// Orthonormalizes `block` in place (two passes of modified Gram–Schmidt
/// against `fixed` and the preceding columns); collapsed columns are refilled
/// from `rng`.
fn orthonormalize(block: &mut [Vec<f64>], fixed: &[Vec<f64>], rng: &mut ChaCha8Rng) {
    for j in 0..block.len() {
        for attempt in 0..4 {
            let before = par::norm(&block[j]);
            for _ in 0..2 {
                project_out(fixed, &mut block[j]);
                let (done, rest) = block.split_at_mut(j);
                project_out(done, &mut rest[0]);
            }
            let after = par::norm(&block[j]);
            if after > 1e-10 * before && after > 0.0 {
                par::scale(1.0 / after, &mut block[j]);
                break;
            }
            assert!(attempt < 3, "cannot complete an orthonormal block");
            let n = block[j].len();
            block[j] = random_vector(rng, n);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigOptions {
    /// Required residual `‖Av − λv‖ ≤ tol·‖A‖∞`.
    pub tol: f64,
    pub max_sweeps: usize,
    pub inner_max_iter: usize,
    pub inner_tol: f64,
    /// Inner solves use `A + shift·I`.
    pub shift: f64,
    pub seed: u64,
    /// Eigenvalues at or below this count toward the reported null count;
    /// `None` means `1e-9·λ_max`.
    pub null_threshold: Option<f64>,
}

impl Default for EigOptions {
    fn default() -> Self {
        EigOptions {
            tol: 1e-6,
            max_sweeps: 500,
            inner_max_iter: 100,
            inner_tol: 1e-8,
            shift: 1e-10,
            seed: 0x0e16_5eed,
            null_threshold: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub converged: Vec<bool>,
    pub vectors: Vec<Vec<f64>>,
    pub sweeps: usize,
    pub norm_inf: f64,
    pub null_threshold: f64,
    /// Reported eigenvalues at or below `null_threshold`.
    pub null_count: usize,
}

impl SpectrumReport {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|c| *c)
    }
}

/// Largest eigenvalue of a symmetric PSD operator by power iteration.
pub fn lambda_max_estimate(a: &dyn LinearOperator, iterations: usize, seed: u64) -> f64 {
    let n = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = random_vector(&mut rng, n);
    let nv = par::norm(&v);
    par::scale(1.0 / nv, &mut v);
    let mut av = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..iterations {
        a.apply(&v, &mut av);
        lambda = par::dot(&v, &av);
        let nav = par::norm(&av);
        if nav == 0.0 {
            return 0.0;
        }
        v.iter_mut().zip(&av).for_each(|(v, a)| *v = a / nav);
    }
    lambda
}

struct Ritz {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    residuals: Vec<f64>,
}

fn rayleigh_ritz(a: &dyn LinearOperator, y: &[Vec<f64>]) -> Ritz {
    let m = y.len();
    let n = a.dim();
    let ay: Vec<Vec<f64>> = y
        .iter()
        .map(|v| {
            let mut out = vec![0.0; n];
            a.apply(v, &mut out);
            out
        })
        .collect();
    let mut h = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = 0.5 * (par::dot(&y[i], &ay[j]) + par::dot(&y[j], &ay[i]));
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
    let combine = |basis: &[Vec<f64>], col: usize| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (i, b) in basis.iter().enumerate() {
            par::axpy(eig.eigenvectors[(i, col)], b, &mut out);
        }
        out
    };
    let mut values = Vec::with_capacity(m);
    let mut vectors = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    for &col in &order {
        let theta = eig.eigenvalues[col];
        let x = combine(y, col);
        let mut r = combine(&ay, col);
        par::axpy(-theta, &x, &mut r);
        values.push(theta);
        residuals.push(par::norm(&r));
        vectors.push(x);
    }
    Ritz {
        values,
        vectors,
        residuals,
    }
}

/// The `k` smallest eigenpairs of a symmetric PSD operator, optionally on
/// the orthogonal complement of an orthonormal deflation basis.
///
/// Block inverse subspace iteration with block size `k + 2`; each sweep
/// applies a few CG steps of `(A + σI)⁻¹` to every unconverged Ritz vector,
/// locking converged ones out of the inner solves, then performs
/// Rayleigh–Ritz on the block.
pub fn smallest_eigs(
    a: &dyn LinearOperator,
    k: usize,
    opts: &EigOptions,
    deflation: Option<&[Vec<f64>]>,
) -> Result<SpectrumReport, KrylovError> {
    let n = a.dim();
    let user = deflation.unwrap_or(&[]);
    let available = n.saturating_sub(user.len());
    if k == 0 || k > available {
        return Err(KrylovError::DimensionMismatch(format!(
            "cannot estimate {k} eigenpairs of a {available}-dimensional space"
        )));
    }
    let m = (k + 2).min(available);
    let norm_inf = a.inf_norm();
    let tol_abs = opts.tol * norm_inf;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut block: Vec<Vec<f64>> = (0..m).map(|_| random_vector(&mut rng, n)).collect();
    orthonormalize(&mut block, user, &mut rng);
    let mut ritz = rayleigh_ritz(a, &block);
    let shifted = Shifted {
        inner: a,
        shift: opts.shift,
    };
    let inner = CgOptions {
        tol: opts.inner_tol,
        max_iter: opts.inner_max_iter,
        jacobi: true,
        incompatible_tol: f64::INFINITY,
    };
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps && !ritz.residuals[..k].iter().all(|r| *r <= tol_abs) {
        sweeps += 1;
        let locked: Vec<usize> = (0..m).filter(|&i| ritz.residuals[i] <= tol_abs).collect();
        let mut fixed: Vec<Vec<f64>> = user.to_vec();
        fixed.extend(locked.iter().map(|&i| ritz.vectors[i].clone()));
        let mut next: Vec<Vec<f64>> = (0..m)
            .filter(|i| !locked.contains(i))
            .map(|i| {
                let rhs = &ritz.vectors[i];
                match cg_solve(&shifted, rhs, &inner, Some(&fixed)) {
                    Ok((x, _)) | Err(KrylovError::NoConvergence { x, .. }) => x,
                    Err(e) => unreachable!("inner solve: {e}"),
                }
            })
            .collect();
        orthonormalize(&mut next, &fixed, &mut rng);
        let mut y: Vec<Vec<f64>> = locked.iter().map(|&i| ritz.vectors[i].clone()).collect();
        y.extend(next);
        ritz = rayleigh_ritz(a, &y);
    }
    let null_threshold = opts
        .null_threshold
        .unwrap_or_else(|| 1e-9 * lambda_max_estimate(a, 100, opts.seed ^ 0x9e37_79b9));
    let eigenvalues = ritz.values[..k].to_vec();
    let residuals = ritz.residuals[..k].to_vec();
    Ok(SpectrumReport {
        null_count: eigenvalues.iter().filter(|l| **l <= null_threshold).count(),
        converged: residuals.iter().map(|r| *r <= tol_abs).collect(),
        eigenvalues,
        residuals,
        vectors: ritz.vectors.into_iter().take(k).collect(),
        sweeps,
        norm_inf,
        null_threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullspaceOptions {
    /// `None` means `1e-9·λ_max`.
    pub threshold: Option<f64>,
    pub gap: f64,
    pub k_start: usize,
    pub k_max: usize,
    pub eig: EigOptions,
}

impl Default for NullspaceOptions {
    fn default() -> Self {
        NullspaceOptions {
            threshold: None,
            gap: 100.0,
            k_start: 4,
            k_max: 64,
            eig: EigOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NullspaceReport {
    pub dimension: usize,
    pub threshold: f64,
    /// Smallest eigenvalue above the threshold.
    pub first_nonzero: f64,
    pub spectrum: SpectrumReport,
}

/// Counts eigenvalues below `λ_null`, growing `k` until the first eigenvalue
/// above the threshold clears both the threshold and the largest eigenvalue
/// below it by the gap factor.
pub fn nullspace_dim(
    a: &dyn LinearOperator,
    opts: &NullspaceOptions,
) -> Result<NullspaceReport, KrylovError> {
    let threshold = opts
        .threshold
        .unwrap_or_else(|| 1e-9 * lambda_max_estimate(a, 100, opts.eig.seed ^ 0x9e37_79b9));
    let eig = EigOptions {
        null_threshold: Some(threshold),
        ..opts.eig
    };
    let mut k = opts.k_start.max(1).min(a.dim());
    loop {
        let report = smallest_eigs(a, k, &eig, None)?;
        let count = report.null_count;
        if count < k {
            let first = report.eigenvalues[count];
            let below = if count > 0 {
                report.eigenvalues[count - 1].max(0.0)
            } else {
                0.0
            };
            if report.converged[..=count].iter().all(|c| *c)
                && first >= opts.gap * threshold
                && first >= opts.gap * below
            {
                return Ok(NullspaceReport {
                    dimension: count,
                    threshold,
                    first_nonzero: first,
                    spectrum: report,
                });
            }
            return Err(KrylovError::Inconclusive {
                threshold,
                gap: opts.gap,
                eigenvalues: report.eigenvalues,
            });
        }
        if k >= opts.k_max.min(a.dim()) {
            return Err(KrylovError::Inconclusive {
                threshold,
                gap: opts.gap,
                eigenvalues: report.eigenvalues,
            });
        }
        k = (2 * k).min(opts.k_max).min(a.dim());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1D Dirichlet Laplacian with `n` interior points on the unit interval.
    fn laplace_1d(n: usize) -> CsrMatrix {
        let h2 = ((n + 1) as f64).powi(2);
        CsrMatrix::from_rows(
            (0..n)
                .map(|i| {
                    let mut r = Vec::new();
                    if i > 0 {
                        r.push((i - 1, -h2));
                    }
                    r.push((i, 2.0 * h2));
                    if i + 1 < n {
                        r.push((i + 1, -h2));
                    }
                    r
                })
                .collect(),
        )
    }

    /// Periodic 1D Laplacian (singular, kernel = constants).
    fn ring(n: usize) -> CsrMatrix {
        CsrMatrix::from_rows(
            (0..n)
                .map(|i| {
                    let mut r = vec![((i + n - 1) % n, -1.0), (i, 2.0), ((i + 1) % n, -1.0)];
                    r.sort_by_key(|e| e.0);
                    r
                })
                .collect(),
        )
    }

    #[test]
    fn diagonal_system_in_one_step() {
        let a = CsrMatrix::from_rows((0..10).map(|i| vec![(i, 1.0 + i as f64)]).collect());
        let b: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let (x, s) = cg_solve(&a, &b, &CgOptions::default(), None).unwrap();
        assert_eq!(s.iterations, 1);
        for i in 0..10 {
            assert!((x[i] * (1.0 + i as f64) - b[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn dirichlet_laplacian_within_n_iterations() {
        let a = laplace_1d(64);
        let b = vec![1.0; 64];
        let opts = CgOptions {
            jacobi: false,
            ..CgOptions::default()
        };
        let (_, s) = cg_solve(&a, &b, &opts, None).unwrap();
        assert!(s.converged && s.iterations <= 64, "{s:?}");
        assert!(s.residual_norm <= 1e-10 * 8.0);
    }

    #[test]
    fn deflated_singular_solve_has_zero_mean() {
        let n = 50;
        let a = ring(n);
        let q = vec![vec![1.0 / (n as f64).sqrt(); n]];
        let b: Vec<f64> = (0..n).map(|i| (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect();
        let (x, s) = cg_solve(&a, &b, &CgOptions::default(), Some(&q)).unwrap();
        assert!(s.converged);
        assert!(x.iter().sum::<f64>().abs() < 1e-12);

        let shifted: Vec<f64> = b.iter().map(|v| v + 1.0).collect();
        assert!(matches!(
            cg_solve(&a, &shifted, &CgOptions::default(), Some(&q)),
            Err(KrylovError::IncompatibleRhs { .. })
        ));
    }

    #[test]
    fn energy_error_is_monotone() {
        let a = laplace_1d(40);
        let b: Vec<f64> = (0..40).map(|i| ((i * i) as f64 * 0.1).sin()).collect();
        let tight = CgOptions {
            tol: 1e-14,
            ..CgOptions::default()
        };
        let (exact, _) = cg_solve(&a, &b, &tight, None).unwrap();
        let mut errs = Vec::new();
        let _ = cg_solve_observed(&a, &b, None, &tight, None, |_, x, _| {
            let e: Vec<f64> = x.iter().zip(&exact).map(|(p, q)| p - q).collect();
            errs.push(par::dot(&e, &a.mul(&e)));
        });
        assert!(errs.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-24));
    }

    #[test]
    fn no_convergence_returns_iterate() {
        let a = laplace_1d(64);
        let opts = CgOptions {
            max_iter: 3,
            ..CgOptions::default()
        };
        match cg_solve(&a, &vec![1.0; 64], &opts, None) {
            Err(KrylovError::NoConvergence { x, stats }) => {
                assert_eq!(stats.iterations, 3);
                assert!(x.iter().any(|v| *v != 0.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ring_spectrum() {
        let n = 40;
        let r = smallest_eigs(&ring(n), 3, &EigOptions::default(), None).unwrap();
        assert!(r.all_converged());
        let l1 = 4.0 * (std::f64::consts::PI / n as f64).sin().powi(2);
        assert!(r.eigenvalues[0].abs() < 1e-10);
        assert!((r.eigenvalues[1] - l1).abs() < 1e-8 && (r.eigenvalues[2] - l1).abs() < 1e-8);
        assert_eq!(r.null_count, 1);
        let nd = nullspace_dim(&ring(n), &NullspaceOptions::default()).unwrap();
        assert_eq!(nd.dimension, 1);
    }

    #[test]
    fn history_csv() {
        let s = SolveStats {
            iterations: 1,
            residual_norm: 0.0,
            rhs_norm: 1.0,
            converged: true,
            discarded_rhs: 0.0,
            history: vec![1.0, 0.5],
        };
        let mut out = Vec::new();
        s.write_history_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "iteration,residual\n0,1e0\n1,5e-1\n");
    }
}
