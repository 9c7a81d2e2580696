//! Thin wrapper over faer's sparse direct solvers.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet as FaerTriplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub val: f64,
}

/// Square matrix stored as unsorted triplets; duplicates are summed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    pub entries: Vec<Triplet>,
}

impl SparseMatrix {
    pub fn new(n: usize) -> Self {
        SparseMatrix {
            n,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push(Triplet { row, col, val });
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for t in &self.entries {
            y[t.row] += t.val * x[t.col];
        }
        y
    }

    /// Dense copy, for tests and small diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for t in &self.entries {
            d[t.row][t.col] += t.val;
        }
        d
    }

    fn to_csc(&self) -> Result<SparseColMat<usize, f64>> {
        let trips: Vec<FaerTriplet<usize, usize, f64>> = self
            .entries
            .iter()
            .map(|t| FaerTriplet::new(t.row, t.col, t.val))
            .collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &trips)
            .map_err(|e| Error::LinearSolve(format!("matrix construction: {e:?}")))
    }

    /// Applies Dirichlet conditions by elimination: constrained rows become
    /// identity rows, constrained columns move to the right-hand side.
    /// `fixed[i]` is the prescribed value of dof `i`, if any.
    pub fn apply_dirichlet(&self, rhs: &mut [f64], fixed: &[Option<f64>]) -> SparseMatrix {
        let mut out = SparseMatrix::new(self.n);
        out.entries.reserve(self.entries.len());
        for t in &self.entries {
            match (fixed[t.row], fixed[t.col]) {
                (Some(_), _) => {}
                (None, Some(v)) => rhs[t.row] -= t.val * v,
                (None, None) => out.entries.push(*t),
            }
        }
        for (i, f) in fixed.iter().enumerate() {
            if let Some(v) = f {
                out.push(i, i, 1.0);
                rhs[i] = *v;
            }
        }
        out
    }
}

fn check_solution(a: &SparseMatrix, x: &[f64], b: &[f64]) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem(
            "factorization produced non-finite values".into(),
        ));
    }
    let ax = a.matvec(x);
    let res = ax
        .iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    let scale_b = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let scale_ax = ax.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let scale = scale_b.max(scale_ax).max(f64::MIN_POSITIVE);
    if res > 1e-6 * scale {
        return Err(Error::SingularSystem(format!(
            "relative residual {:.3e} after direct solve",
            res / scale
        )));
    }
    Ok(())
}

fn col_from(b: &[f64]) -> Mat<f64> {
    Mat::from_fn(b.len(), 1, |i, _| b[i])
}

/// Sparse LU that reuses its symbolic analysis while the pattern is fixed.
#[derive(Default)]
pub struct LuSolver {
    symbolic: Option<(usize, usize, SymbolicLu<usize>)>,
}

impl LuSolver {
    pub fn solve(&mut self, a: &SparseMatrix, b: &[f64]) -> Result<Vec<f64>> {
        let csc = a.to_csc()?;
        let key = (a.n, csc.compute_nnz());
        let symbolic = match &self.symbolic {
            Some((n, nnz, s)) if (*n, *nnz) == key => s.clone(),
            _ => {
                let s = SymbolicLu::try_new(csc.symbolic())
                    .map_err(|e| Error::LinearSolve(format!("symbolic LU: {e:?}")))?;
                self.symbolic = Some((key.0, key.1, s.clone()));
                s
            }
        };
        let lu = Lu::try_new_with_symbolic(symbolic, csc.as_ref())
            .map_err(|e| Error::SingularSystem(format!("LU factorization: {e:?}")))?;
        let x = lu.solve(col_from(b));
        let x: Vec<f64> = (0..a.n).map(|i| x[(i, 0)]).collect();
        check_solution(a, &x, b)?;
        Ok(x)
    }
}

/// Cholesky factor of a symmetric positive definite matrix, kept for
/// repeated right-hand sides.
pub struct CholeskyFactor {
    matrix: SparseMatrix,
    llt: Llt<usize, f64>,
}

impl CholeskyFactor {
    pub fn new(a: SparseMatrix) -> Result<Self> {
        let csc = a.to_csc()?;
        let llt = csc.sp_cholesky(Side::Lower).map_err(|e| {
            Error::SingularSystem(format!(
                "stiffness matrix is not positive definite ({e:?}); \
                 displacement constraints likely leave a rigid-body mode"
            ))
        })?;
        Ok(CholeskyFactor { matrix: a, llt })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let x = self.llt.solve(col_from(b));
        let x: Vec<f64> = (0..self.matrix.n).map(|i| x[(i, 0)]).collect();
        check_solution(&self.matrix, &x, b)?;
        Ok(x)
    }
}
