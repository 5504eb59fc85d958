//! Sparse/dense linear algebra used by the element methods: triplet assembly,
//! direct factorizations, and the dense generalized symmetric eigensolver.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

/// Triplet accumulator for element-by-element assembly.
///
/// Duplicate entries are summed when the matrix is compressed.
#[derive(Debug, Clone)]
pub struct CooMatrix {
    nrows: usize,
    ncols: usize,
    triplets: Vec<Triplet<usize, usize, f64>>,
}

impl CooMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, triplets: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.triplets.push(Triplet::new(row, col, val));
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = (usize, usize, f64)>) {
        for (r, c, v) in other {
            self.push(r, c, v);
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        let inner =
            SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &self.triplets)
                .expect("triplet indices validated at push time");
        SparseMatrix { inner }
    }
}

/// Compressed sparse-column matrix.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    inner: SparseColMat<usize, f64>,
}

impl SparseMatrix {
    pub fn nrows(&self) -> usize {
        self.inner.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.inner.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.inner.compute_nnz()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols());
        let sym = self.inner.symbolic();
        let col_ptr = sym.col_ptr();
        let row_idx = sym.row_idx();
        let val = self.inner.val();
        let mut y = vec![0.0; self.nrows()];
        for j in 0..self.ncols() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for k in col_ptr[j]..col_ptr[j + 1] {
                y[row_idx[k]] += val[k] * xj;
            }
        }
        y
    }

    /// x^T A y
    pub fn inner_product(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    /// max |A_ij - A_ji| over stored entries, relative to the largest entry.
    pub fn symmetry_error(&self) -> f64 {
        let sym = self.inner.symbolic();
        let col_ptr = sym.col_ptr();
        let row_idx = sym.row_idx();
        let val = self.inner.val();
        let mut scale = 0.0f64;
        for &v in val {
            scale = scale.max(v.abs());
        }
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for j in 0..self.ncols() {
            for k in col_ptr[j]..col_ptr[j + 1] {
                let i = row_idx[k];
                let tij = val[k];
                let tji = self.get(j, i);
                worst = worst.max((tij - tji).abs());
            }
        }
        worst / scale
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let sym = self.inner.symbolic();
        let col_ptr = sym.col_ptr();
        let row_idx = sym.row_idx();
        let val = self.inner.val();
        for k in col_ptr[col]..col_ptr[col + 1] {
            if row_idx[k] == row {
                return val[k];
            }
        }
        0.0
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut out = Mat::zeros(self.nrows(), self.ncols());
        let sym = self.inner.symbolic();
        let col_ptr = sym.col_ptr();
        let row_idx = sym.row_idx();
        let val = self.inner.val();
        for j in 0..self.ncols() {
            for k in col_ptr[j]..col_ptr[j + 1] {
                out[(row_idx[k], j)] = val[k];
            }
        }
        out
    }

    /// Entries in deterministic (col, row) order as (row, col, value).
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let sym = self.inner.symbolic();
        let col_ptr = sym.col_ptr();
        let row_idx = sym.row_idx();
        let val = self.inner.val();
        let mut out = Vec::with_capacity(val.len());
        for j in 0..self.ncols() {
            for k in col_ptr[j]..col_ptr[j + 1] {
                out.push((row_idx[k], j, val[k]));
            }
        }
        out
    }

    /// Coordinate text export: one `row col value` line per stored entry.
    pub fn write_coordinate_text(&self, w: &mut impl std::io::Write) -> Result<()> {
        writeln!(w, "{} {} {}", self.nrows(), self.ncols(), self.nnz())?;
        for (r, c, v) in self.entries() {
            writeln!(w, "{} {} {:.17e}", r, c, v)?;
        }
        Ok(())
    }

    /// Linear combination `a*self + b*other`; the operands must share the
    /// same sparsity pattern (as produced by one assembly routine).
    pub fn linear_combination(&self, a: f64, other: &SparseMatrix, b: f64) -> SparseMatrix {
        let sa = self.inner.symbolic();
        let sb = other.inner.symbolic();
        assert_eq!(sa.col_ptr(), sb.col_ptr(), "pattern mismatch");
        assert_eq!(sa.row_idx(), sb.row_idx(), "pattern mismatch");
        let vals: Vec<f64> = self
            .inner
            .val()
            .iter()
            .zip(other.inner.val())
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        SparseMatrix {
            inner: SparseColMat::new(sa.to_owned().unwrap(), vals),
        }
    }
}

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
pub struct SpdSolver {
    fact: faer::sparse::linalg::solvers::Llt<usize, f64>,
    n: usize,
}

impl SpdSolver {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols());
        let fact = a
            .inner
            .sp_cholesky(faer::Side::Lower)
            .map_err(|e| Error::Factorization(format!("sparse Cholesky failed: {e:?}")))?;
        Ok(Self { fact, n: a.nrows() })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let b = ColRef::from_slice(rhs).to_owned();
        let x = self.fact.solve(b);
        x.iter().copied().collect()
    }

    /// Solve for many right-hand sides at once (columns of `rhs`).
    pub fn solve_mat(&self, rhs: &Mat<f64>) -> Mat<f64> {
        assert_eq!(rhs.nrows(), self.n);
        self.fact.solve(rhs)
    }
}

/// Reusable symbolic Cholesky analysis: graded time stepping refactors a
/// matrix with a fixed pattern every step, so the analysis is paid once.
pub struct SymbolicSpd {
    symbolic: faer::sparse::linalg::solvers::SymbolicLlt<usize>,
    n: usize,
}

impl SymbolicSpd {
    pub fn analyze(a: &SparseMatrix) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols());
        let symbolic = faer::sparse::linalg::solvers::SymbolicLlt::try_new(
            a.inner.symbolic(),
            faer::Side::Lower,
        )
        .map_err(|e| Error::Factorization(format!("symbolic Cholesky failed: {e:?}")))?;
        Ok(Self { symbolic, n: a.nrows() })
    }

    pub fn factor(&self, a: &SparseMatrix) -> Result<SpdSolver> {
        let fact = faer::sparse::linalg::solvers::Llt::try_new_with_symbolic(
            self.symbolic.clone(),
            a.inner.as_ref(),
            faer::Side::Lower,
        )
        .map_err(|e| Error::Factorization(format!("numeric Cholesky failed: {e:?}")))?;
        Ok(SpdSolver { fact, n: self.n })
    }
}

/// Sparse LU factorization for symmetric indefinite (saddle point) systems.
pub struct LuSolver {
    fact: faer::sparse::linalg::solvers::Lu<usize, f64>,
    n: usize,
}

impl LuSolver {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols());
        let fact = a
            .inner
            .sp_lu()
            .map_err(|e| Error::Factorization(format!("sparse LU failed: {e:?}")))?;
        Ok(Self { fact, n: a.nrows() })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n);
        let b = ColRef::from_slice(rhs).to_owned();
        let x = self.fact.solve(b);
        x.iter().copied().collect()
    }
}

/// Column-major dense matrix; the eigenvector container of [`SpectralBasis`].
///
/// [`SpectralBasis`]: crate::fem::SpectralBasis
#[derive(Debug, Clone)]
pub struct ColMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl ColMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn from_faer(m: &Mat<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                out.data[j * m.nrows() + i] = m[(i, j)];
            }
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.nrows + i]
    }
}

/// Generalized symmetric eigenproblem `A v = lambda M v` with `M` positive
/// definite, reduced to standard form through the Cholesky factor of `M`.
///
/// Returns eigenvalues in ascending order and M-orthonormal eigenvectors as
/// the columns of the second output.
pub fn generalized_symmetric_eigen(a: &Mat<f64>, m: &Mat<f64>) -> Result<(Vec<f64>, ColMatrix)> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(m.nrows(), n);
    assert_eq!(m.ncols(), n);
    let llt = m
        .llt(faer::Side::Lower)
        .map_err(|_| Error::Factorization("mass matrix is not positive definite".into()))?;
    let l = llt.L().to_owned();
    // the parallel triangular-solve kernels of faer 0.22 corrupt results
    // for n ~ 3000; run them sequentially (the eigensolver dominates anyway)
    let par = faer::Par::Seq;

    // C = L^{-1} A L^{-T}, computed as two lower-triangular solves.
    let mut t1 = a.clone();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(
        l.as_ref(),
        t1.as_mut(),
        par,
    );
    let mut c = t1.transpose().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l.as_ref(), c.as_mut(), par);
    // symmetrize to scrub the solve roundoff
    for j in 0..n {
        for i in (j + 1)..n {
            let s = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = s;
            c[(j, i)] = s;
        }
    }

    let evd = c
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Factorization(format!("symmetric eigensolver failed: {e:?}")))?;
    let lam: Vec<f64> = evd.S().column_vector().iter().copied().collect();

    // back-transform V = L^{-T} W
    let mut v = evd.U().to_owned();
    let lt = l.transpose().to_owned();
    faer::linalg::triangular_solve::solve_upper_triangular_in_place(lt.as_ref(), v.as_mut(), par);
    // guard against silent solve failures: the basis must be M-orthonormal
    let step = n.div_ceil(12).max(1);
    let probes: Vec<usize> = (0..n).step_by(step).collect();
    let mut defect = 0.0f64;
    for &j in &probes {
        let mut mv = vec![0.0; n];
        for k in 0..n {
            let vkj = v[(k, j)];
            if vkj != 0.0 {
                for (row, slot) in mv.iter_mut().enumerate() {
                    *slot += m[(row, k)] * vkj;
                }
            }
        }
        for &i in &probes {
            let mut ip = 0.0;
            for k in 0..n {
                ip += v[(k, i)] * mv[k];
            }
            let expect = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((ip - expect).abs());
        }
    }
    if defect > 1e-9 {
        return Err(Error::Factorization(format!(
            "eigenbasis lost mass-orthonormality (defect {defect:.2e})"
        )));
    }
    Ok((lam, ColMatrix::from_faer(&v)))
}

/// Neumaier compensated summation; keeps long history sums near machine
/// precision regardless of term count.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let mut acc = NeumaierSum::new();
    for (a, b) in x.iter().zip(y) {
        acc.add(a * b);
    }
    acc.total()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// y += a * x
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
