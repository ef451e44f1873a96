//! Compressed sparse row storage over a shared, structurally symmetric
//! pattern, plus the direct and Krylov solvers used by the time steppers.

use std::sync::{Arc, Once};

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat, SymbolicSparseColMatRef};
use num_complex::Complex64;
use thiserror::Error;

use crate::elements::DofMap;

pub type C64 = Complex64;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("linear system is singular ({0})")]
    Singular(String),
    #[error(
        "krylov solver stalled at relative residual {residual:e} after {iterations} iterations"
    )]
    KrylovNoConvergence { iterations: usize, residual: f64 },
}

/// Scalars stored in [`CsrMatrix`].
pub trait Scalar: Copy + Default + PartialEq + std::fmt::Debug + Send + Sync + 'static {
    fn to_c64(self) -> C64;
    fn conj(self) -> Self;
    fn abs(self) -> f64;
    fn one() -> Self;
}

impl Scalar for f64 {
    fn to_c64(self) -> C64 {
        C64::new(self, 0.0)
    }
    fn conj(self) -> Self {
        self
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn one() -> Self {
        1.0
    }
}

impl Scalar for C64 {
    fn to_c64(self) -> C64 {
        self
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn abs(self) -> f64 {
        self.norm()
    }
    fn one() -> Self {
        C64::new(1.0, 0.0)
    }
}

/// Sparsity pattern with sorted column indices in every row.
#[derive(Debug, Clone)]
pub struct Pattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    /// Position of `(j, i)` for the entry `(i, j)` stored at each position.
    transpose_pos: Vec<usize>,
}

impl Pattern {
    /// All DOF pairs that share a cell.
    pub fn from_dof_map(dofs: &DofMap) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); dofs.n_dofs];
        for c in 0..dofs.n_cells() {
            let local = dofs.cell_dofs(c);
            for &i in local {
                rows[i].extend_from_slice(local);
            }
        }
        Self::from_rows(rows)
    }

    fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let mut p = Pattern {
            n,
            row_ptr,
            col_idx,
            transpose_pos: Vec::new(),
        };
        let mut tpos = Vec::with_capacity(p.nnz());
        for i in 0..n {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.col_idx[k];
                tpos.push(p.position(j, i).expect("pattern is structurally symmetric"));
            }
        }
        p.transpose_pos = tpos;
        p
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.row(i).binary_search(&j).ok().map(|k| start + k)
    }

    pub fn transpose_position(&self, k: usize) -> usize {
        self.transpose_pos[k]
    }
}

#[derive(Debug, Clone)]
pub struct CsrMatrix<T> {
    pub pattern: Arc<Pattern>,
    pub values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![T::default(); pattern.nnz()];
        CsrMatrix { pattern, values }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.pattern
            .position(i, j)
            .map(|k| self.values[k])
            .unwrap_or_default()
    }

    /// Adds a dense local block (row-major, `dofs.len()^2` entries).
    pub fn add_local(&mut self, dofs: &[usize], local: &[T])
    where
        T: std::ops::AddAssign,
    {
        let n = dofs.len();
        for (a, &i) in dofs.iter().enumerate() {
            for (b, &j) in dofs.iter().enumerate() {
                let k = self.pattern.position(i, j).expect("entry in pattern");
                self.values[k] += local[a * n + b];
            }
        }
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[C64]) -> Vec<C64> {
        let p = &self.pattern;
        (0..p.n)
            .map(|i| {
                (p.row_ptr[i]..p.row_ptr[i + 1])
                    .map(|k| self.values[k].to_c64() * x[p.col_idx[k]])
                    .sum()
            })
            .collect()
    }

    pub fn mul_real(&self, x: &[f64]) -> Vec<C64> {
        let p = &self.pattern;
        (0..p.n)
            .map(|i| {
                (p.row_ptr[i]..p.row_ptr[i + 1])
                    .map(|k| self.values[k].to_c64() * x[p.col_idx[k]])
                    .sum()
            })
            .collect()
    }

    /// `x^H A y`.
    pub fn form(&self, x: &[C64], y: &[C64]) -> C64 {
        let p = &self.pattern;
        let mut acc = C64::new(0.0, 0.0);
        for (i, xi) in x.iter().enumerate().take(p.n) {
            let mut row = C64::new(0.0, 0.0);
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                row += self.values[k].to_c64() * y[p.col_idx[k]];
            }
            acc += xi.conj() * row;
        }
        acc
    }

    /// `v^H A v`.
    pub fn quadratic_form(&self, v: &[C64]) -> C64 {
        self.form(v, v)
    }

    pub fn to_c64(&self) -> CsrMatrix<C64> {
        CsrMatrix {
            pattern: self.pattern.clone(),
            values: self.values.iter().map(|v| v.to_c64()).collect(),
        }
    }

    /// `max |A - A^T|` (or `A - A^H` with `conjugate`).
    pub fn asymmetry(&self, conjugate: bool) -> f64 {
        (0..self.values.len())
            .map(|k| {
                let t = self.values[self.pattern.transpose_position(k)];
                let t = if conjugate { t.conj() } else { t };
                (self.values[k].to_c64() - t.to_c64()).norm()
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Zeroes constrained rows and columns and puts `diagonal` on their
    /// diagonal entries.
    pub fn constrain(&mut self, constrained: &[bool], diagonal: T) {
        let p = self.pattern.clone();
        for i in 0..p.n {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                let j = p.col_idx[k];
                if constrained[i] || constrained[j] {
                    self.values[k] = if i == j { diagonal } else { T::default() };
                }
            }
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.n();
        let mut d = vec![vec![T::default(); n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            for k in self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1] {
                row[self.pattern.col_idx[k]] = self.values[k];
            }
        }
        d
    }
}

/// Sparse LU of complex matrices on a fixed pattern. The symbolic analysis
/// is done once; numeric factorizations reuse it.
pub struct SparseLu {
    pattern: Arc<Pattern>,
    symbolic_mat: SymbolicSparseColMat<usize>,
    symbolic: SymbolicLu<usize>,
    csc_values: Vec<C64>,
}

static SEQUENTIAL: Once = Once::new();

/// Single-threaded factorizations keep reruns bit-identical.
fn force_sequential() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

impl SparseLu {
    pub fn new(pattern: Arc<Pattern>) -> Result<Self, SolverError> {
        force_sequential();
        // CSR of A read as CSC is A^T; the pattern is symmetric so the
        // index arrays carry over and only values need permuting.
        let symbolic_mat = SymbolicSparseColMat::new_checked(
            pattern.n,
            pattern.n,
            pattern.row_ptr.clone(),
            None,
            pattern.col_idx.clone(),
        );
        let symbolic = SymbolicLu::try_new(symbolic_mat.as_ref())
            .map_err(|e| SolverError::Singular(format!("{e:?}")))?;
        let csc_values = vec![C64::new(0.0, 0.0); pattern.nnz()];
        Ok(SparseLu {
            pattern,
            symbolic_mat,
            symbolic,
            csc_values,
        })
    }

    pub fn factor(&mut self, a: &CsrMatrix<C64>) -> Result<Factorization, SolverError> {
        debug_assert!(
            Arc::ptr_eq(&a.pattern, &self.pattern) || a.pattern.nnz() == self.pattern.nnz()
        );
        for k in 0..self.csc_values.len() {
            self.csc_values[k] = a.values[self.pattern.transpose_position(k)];
        }
        let mat = SparseColMatRef::new(
            SymbolicSparseColMatRef::from(self.symbolic_mat.as_ref()),
            &self.csc_values,
        );
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), mat)
            .map_err(|e| SolverError::Singular(format!("{e:?}")))?;
        Ok(Factorization { lu })
    }
}

pub struct Factorization {
    lu: Lu<usize, C64>,
}

impl Factorization {
    pub fn solve_in_place(&self, rhs: &mut [C64]) -> Result<(), SolverError> {
        self.lu
            .solve_in_place(faer::ColMut::from_slice_mut(rhs).as_mat_mut());
        if rhs.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            Ok(())
        } else {
            Err(SolverError::Singular("non-finite solution".into()))
        }
    }

    pub fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>, SolverError> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    pub residual: f64,
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

/// Right-preconditioned restarted GMRES. `x` holds the initial guess and
/// receives the solution.
pub fn gmres(
    a: &CsrMatrix<C64>,
    preconditioner: &Factorization,
    b: &[C64],
    x: &mut [C64],
    tol: f64,
    max_iters: usize,
    restart: usize,
) -> Result<KrylovStats, SolverError> {
    let n = b.len();
    let b_norm = norm(b).max(f64::MIN_POSITIVE);
    let mut total = 0;
    loop {
        let ax = a.mul_vec(x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
        let beta = norm(&r);
        if beta / b_norm <= tol {
            return Ok(KrylovStats {
                iterations: total,
                residual: beta / b_norm,
            });
        }
        if total >= max_iters {
            return Err(SolverError::KrylovNoConvergence {
                iterations: total,
                residual: beta / b_norm,
            });
        }
        let m = restart.min(max_iters - total).max(1);
        let mut basis: Vec<Vec<C64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut h = vec![vec![C64::new(0.0, 0.0); m]; m + 1];
        let mut cs = vec![C64::new(0.0, 0.0); m];
        let mut sn = vec![C64::new(0.0, 0.0); m];
        let mut g = vec![C64::new(0.0, 0.0); m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut steps = 0;
        for j in 0..m {
            let z = preconditioner.solve(&basis[j])?;
            let mut w = a.mul_vec(&z);
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(v, &w);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * vk;
                }
            }
            let wn = norm(&w);
            h[j + 1][j] = C64::new(wn, 0.0);
            for i in 0..j {
                let t = cs[i].conj() * h[i][j] + sn[i].conj() * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = (h[j][j].norm_sqr() + h[j + 1][j].norm_sqr()).sqrt();
            if denom == 0.0 {
                cs[j] = C64::new(1.0, 0.0);
                sn[j] = C64::new(0.0, 0.0);
            } else {
                cs[j] = h[j][j] / denom;
                sn[j] = h[j + 1][j] / denom;
            }
            h[j][j] = cs[j].conj() * h[j][j] + sn[j].conj() * h[j + 1][j];
            h[j + 1][j] = C64::new(0.0, 0.0);
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j].conj() * g[j];
            steps = j + 1;
            total += 1;
            if g[j + 1].norm() / b_norm <= tol || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|z| z / wn).collect());
        }
        // back substitution for the Krylov coefficients
        let mut y = vec![C64::new(0.0, 0.0); steps];
        for i in (0..steps).rev() {
            let mut s = g[i];
            for k in i + 1..steps {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![C64::new(0.0, 0.0); n];
        for (yi, v) in y.iter().zip(&basis) {
            for (u, vk) in update.iter_mut().zip(v) {
                *u += yi * vk;
            }
        }
        let correction = preconditioner.solve(&update)?;
        for (xi, c) in x.iter_mut().zip(&correction) {
            *xi += c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiagonal(n: usize) -> Arc<Pattern> {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![i];
                if i > 0 {
                    r.push(i - 1);
                }
                if i + 1 < n {
                    r.push(i + 1);
                }
                r
            })
            .collect();
        Arc::new(Pattern::from_rows(rows))
    }

    fn test_matrix(n: usize) -> CsrMatrix<C64> {
        let p = tridiagonal(n);
        let mut a = CsrMatrix::zeros(p.clone());
        for i in 0..n {
            a.values[p.position(i, i).unwrap()] = C64::new(4.0, 1.0 + i as f64 * 0.1);
            if i + 1 < n {
                a.values[p.position(i, i + 1).unwrap()] = C64::new(-1.0, 0.3);
                a.values[p.position(i + 1, i).unwrap()] = C64::new(-1.2, 0.0);
            }
        }
        a
    }

    #[test]
    fn lu_solves_nonsymmetric_system() {
        let a = test_matrix(30);
        let x_true: Vec<C64> = (0..30)
            .map(|i| C64::new(i as f64, 1.0 - i as f64 * 0.5))
            .collect();
        let b = a.mul_vec(&x_true);
        let mut lu = SparseLu::new(a.pattern.clone()).unwrap();
        let x = lu.factor(&a).unwrap().solve(&b).unwrap();
        for (x, t) in x.iter().zip(&x_true) {
            assert!((x - t).norm() < 1e-12);
        }
    }

    #[test]
    fn gmres_with_perturbed_preconditioner() {
        let a = test_matrix(50);
        let mut pre = a.clone();
        for v in pre.values.iter_mut() {
            *v *= C64::new(1.05, 0.02);
        }
        let mut lu = SparseLu::new(a.pattern.clone()).unwrap();
        let f = lu.factor(&pre).unwrap();
        let b: Vec<C64> = (0..50).map(|i| C64::new(1.0, i as f64)).collect();
        let mut x = vec![C64::new(0.0, 0.0); 50];
        let stats = gmres(&a, &f, &b, &mut x, 1e-13, 200, 30).unwrap();
        assert!(stats.residual <= 1e-13);
        let r = a.mul_vec(&x);
        let err: f64 = r
            .iter()
            .zip(&b)
            .map(|(r, b)| (r - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn transpose_positions_and_constraints() {
        let mut a = test_matrix(5);
        assert!(a.asymmetry(false) > 0.1);
        a.constrain(&[true, false, false, false, true], C64::new(1.0, 0.0));
        assert_eq!(a.get(0, 0), C64::new(1.0, 0.0));
        assert_eq!(a.get(1, 0), C64::new(0.0, 0.0));
        assert_eq!(a.get(3, 4), C64::new(0.0, 0.0));
    }
}
