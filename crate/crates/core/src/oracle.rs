//! Brute-force reference: dense Hermitian diagonalization of `h(g)` and the
//! ground-state projector built from it.
//!
//! Nothing here touches the characteristic function; this module is the
//! independent route that the analytic code is checked against.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use crate::error::{KondoError, Result};
use crate::grid::MomentumGrid;
use crate::hamiltonian::{max_norm, BilinearMatrix, CMatrix, EffectiveHamiltonian};

const ZERO_MODE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct DenseEigenResult {
    pub eigenvalues: Vec<f64>,
    /// Columns aligned with `eigenvalues`.
    pub eigenvectors: CMatrix,
}

impl DenseEigenResult {
    /// `‖hV − VΛ‖_max`.
    pub fn residual(&self, h: &CMatrix) -> f64 {
        let mut r = h * &self.eigenvectors;
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            for i in 0..r.nrows() {
                r[(i, j)] -= self.eigenvectors[(i, j)] * lam;
            }
        }
        max_norm(&r)
    }

    /// `‖V†V − 1‖_max`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.eigenvectors.ncols();
        max_norm(&(self.eigenvectors.adjoint() * &self.eigenvectors - CMatrix::identity(n, n)))
    }
}

/// Full eigen-decomposition of a Hermitian matrix, sorted by eigenvalue.
///
/// Ties are broken by the magnitude of the last component (the impurity slot).
pub fn dense_diagonalize_matrix(h: &CMatrix) -> Result<DenseEigenResult> {
    let n = h.nrows();
    if n == 0 || h.ncols() != n {
        return Err(KondoError::Domain("matrix must be square and non-empty".into()));
    }
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 10_000).ok_or(KondoError::EigenConvergence)?;
    let last = n - 1;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .total_cmp(&eig.eigenvalues[b])
            .then_with(|| eig.eigenvectors[(last, a)].norm().total_cmp(&eig.eigenvectors[(last, b)].norm()))
    });
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let cols: Vec<_> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    Ok(DenseEigenResult { eigenvalues, eigenvectors: CMatrix::from_columns(&cols) })
}

pub fn dense_diagonalize(h: &EffectiveHamiltonian) -> Result<DenseEigenResult> {
    dense_diagonalize_matrix(h.matrix())
}

/// `Ψ = Σ_{ν<0} v v† + (1/2 + ξ) v₀ v₀†`.
pub fn ground_state_projector(eig: &DenseEigenResult, grid: &MomentumGrid, xi: f64) -> Result<BilinearMatrix> {
    let zero = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .ok_or(KondoError::MissingZeroMode { closest: f64::INFINITY, tol: ZERO_MODE_TOL })?;
    let closest = eig.eigenvalues[zero].abs();
    if closest > ZERO_MODE_TOL {
        return Err(KondoError::MissingZeroMode { closest, tol: ZERO_MODE_TOL });
    }
    let n = eig.eigenvectors.nrows();
    let mut psi = CMatrix::zeros(n, n);
    for (a, &lam) in eig.eigenvalues.iter().enumerate() {
        let weight = if a == zero {
            0.5 + xi
        } else if lam < 0.0 {
            1.0
        } else {
            continue;
        };
        let v = eig.eigenvectors.column(a);
        psi += (v * v.adjoint()) * Complex64::new(weight, 0.0);
    }
    BilinearMatrix::new(grid, psi)
}
