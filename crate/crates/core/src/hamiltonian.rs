//! Fermion bilinears, the effective one-body Hamiltonian `h(Φ)`, the classical
//! energy functional and the matrix equation of motion `dΦ/dt = i[h(Φ), Φ]`.
//!
//! Matrices use the basis order `(k = -Λ, …, -1, 1, …, Λ, d)`. The upper index
//! of `Φ_L^K` is the row and the lower index the column, so `Φ_d^k` lives at
//! `(index_of(k), d)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KondoError, Result};
use crate::grid::MomentumGrid;

pub type CMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Classical bilinear `Φ_L^K` (entries are order one; no `1/N`).
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearMatrix {
    lambda: usize,
    data: CMatrix,
}

impl BilinearMatrix {
    pub fn new(grid: &MomentumGrid, data: CMatrix) -> Result<Self> {
        let n = grid.dim();
        if data.nrows() != n || data.ncols() != n {
            return Err(KondoError::Domain(format!(
                "bilinear matrix is {}x{}, grid needs {n}x{n}",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(Self { lambda: grid.lambda(), data })
    }

    pub fn zeros(grid: &MomentumGrid) -> Self {
        let n = grid.dim();
        Self { lambda: grid.lambda(), data: CMatrix::zeros(n, n) }
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn matrix_mut(&mut self) -> &mut CMatrix {
        &mut self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    fn d(&self) -> usize {
        2 * self.lambda
    }

    /// `Φ_d^• = Σ_m Φ_d^m`.
    pub fn impurity_sum(&self) -> Complex64 {
        let d = self.d();
        (0..d).map(|m| self.data[(m, d)]).sum()
    }

    /// Impurity occupation `Φ_d^d`.
    pub fn impurity_occupation(&self) -> Complex64 {
        let d = self.d();
        self.data[(d, d)]
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.data)
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    /// Replace `Φ` by `(Φ + Φ†)/2`, returning the defect that was removed.
    pub fn hermitize(&mut self) -> f64 {
        let defect = self.hermiticity_defect();
        let adj = self.data.adjoint();
        self.data = (&self.data + adj).scale(0.5);
        defect
    }

    /// Row-major `[[re, im], …]` rows, for debugging dumps.
    pub fn to_json(&self) -> serde_json::Value {
        matrix_to_json(&self.data)
    }
}

/// Max-norm of `A - A†`.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest entry modulus.
pub fn max_norm(a: &CMatrix) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Matrix unit `E_L^K` with a single 1 in row `upper`, column `lower`.
pub fn matrix_unit(dim: usize, upper: usize, lower: usize) -> CMatrix {
    let mut e = CMatrix::zeros(dim, dim);
    e[(upper, lower)] = Complex64::new(1.0, 0.0);
    e
}

pub fn matrix_to_json(a: &CMatrix) -> serde_json::Value {
    let rows: Vec<Vec<[f64; 2]>> =
        (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| [a[(i, j)].re, a[(i, j)].im]).collect()).collect();
    serde_json::json!({ "dim": a.nrows(), "rows": rows })
}

/// The effective Hamiltonian `h(g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveHamiltonian {
    g: Complex64,
    data: CMatrix,
}

impl EffectiveHamiltonian {
    pub fn g(&self) -> Complex64 {
        self.g
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn to_json(&self) -> serde_json::Value {
        matrix_to_json(&self.data)
    }
}

/// Renormalized coupling together with the bare coupling it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingState {
    pub g: Complex64,
    pub j: f64,
    pub lambda: usize,
}

impl CouplingState {
    pub fn new(g: Complex64, j: f64, lambda: usize) -> Result<Self> {
        if !(j > 0.0 && j.is_finite()) {
            return Err(KondoError::Domain(format!("bare coupling J must be positive, got {j}")));
        }
        Ok(Self { g, j, lambda })
    }
}

/// `g(Φ) = J Φ_d^•`.
pub fn g_of_phi(phi: &BilinearMatrix, j: f64) -> Complex64 {
    phi.impurity_sum() * j
}

/// Conduction diagonal `ω_k`, `h_d^d = 0`, `h_d^k = -g`, `h_k^d = -g*`.
pub fn assemble_h(grid: &MomentumGrid, g: Complex64) -> EffectiveHamiltonian {
    let n = grid.dim();
    let d = grid.impurity_index();
    let mut h = CMatrix::zeros(n, n);
    for (i, w) in grid.energies().into_iter().enumerate() {
        h[(i, i)] = Complex64::new(w, 0.0);
        h[(i, d)] = -g;
        h[(d, i)] = -g.conj();
    }
    h[(d, d)] = ZERO;
    EffectiveHamiltonian { g, data: h }
}

/// `H(Φ) = Σ_k ω_k Φ_k^k - J |Φ_d^•|²`.
pub fn kondo_energy(phi: &BilinearMatrix, grid: &MomentumGrid, j: f64) -> f64 {
    let m = phi.matrix();
    let free: f64 = grid.energies().iter().enumerate().map(|(i, w)| w * m[(i, i)].re).sum();
    free - j * phi.impurity_sum().norm_sqr()
}

/// Right-hand side of `dΦ/dt = i[h(g(Φ)), Φ]`.
pub fn eom_rhs(phi: &BilinearMatrix, grid: &MomentumGrid, j: f64) -> BilinearMatrix {
    let h = assemble_h(grid, g_of_phi(phi, j));
    BilinearMatrix { lambda: phi.lambda, data: commutator(h.matrix(), phi.matrix()) * I }
}

/// Same flow with the coupling frozen at `g` instead of `J Φ_d^•`.
pub fn eom_rhs_frozen(phi: &BilinearMatrix, grid: &MomentumGrid, g: Complex64) -> BilinearMatrix {
    let h = assemble_h(grid, g);
    BilinearMatrix { lambda: phi.lambda, data: commutator(h.matrix(), phi.matrix()) * I }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        (&a + a.adjoint()).scale(0.5)
    }

    #[test]
    fn h_for_lambda_one() {
        let grid = MomentumGrid::linear(1, 1.0).unwrap();
        let h = assemble_h(&grid, c(1.0, 0.0));
        #[rustfmt::skip]
        let want = [
            [-1.0, 0.0, -1.0],
            [0.0, 1.0, -1.0],
            [-1.0, -1.0, 0.0],
        ];
        for (i, row) in want.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                assert_eq!(h.matrix()[(i, j)], c(x, 0.0));
            }
        }
    }

    #[test]
    fn h_decoupled_and_complex() {
        let grid = MomentumGrid::linear(3, 1.0).unwrap();
        let h = assemble_h(&grid, ZERO);
        let diag: Vec<f64> = (0..7).map(|i| h.matrix()[(i, i)].re).collect();
        assert_eq!(diag, vec![-3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 0.0]);
        assert_eq!(max_norm(&(h.matrix() - CMatrix::from_diagonal(&h.matrix().diagonal()))), 0.0);

        let grid = MomentumGrid::linear(2, 1.0).unwrap();
        let h = assemble_h(&grid, I);
        let d = grid.impurity_index();
        for i in 0..4 {
            assert_eq!(h.matrix()[(i, d)], -I);
            assert_eq!(h.matrix()[(d, i)], I);
        }
        assert_eq!(hermiticity_defect(h.matrix()), 0.0);
    }

    #[test]
    fn g_of_phi_examples() {
        let grid = MomentumGrid::linear(1, 1.0).unwrap();
        assert_eq!(g_of_phi(&BilinearMatrix::zeros(&grid), 2.0), ZERO);

        let mut phi = BilinearMatrix::zeros(&grid);
        let a = 1.0 / (2.0 * 3f64.sqrt());
        phi.matrix_mut()[(0, 2)] = c(a, 0.0);
        phi.matrix_mut()[(1, 2)] = c(a, 0.0);
        assert!((g_of_phi(&phi, 3f64.sqrt()) - c(1.0, 0.0)).norm() < 1e-15);

        let mut phi = BilinearMatrix::zeros(&grid);
        phi.matrix_mut()[(2, 2)] = c(0.7, 0.0);
        assert_eq!(g_of_phi(&phi, 5.0), ZERO);
    }

    #[test]
    fn energy_of_fermi_sea() {
        let grid = MomentumGrid::linear(4, 1.5).unwrap();
        assert_eq!(kondo_energy(&BilinearMatrix::zeros(&grid), &grid, 3.0), 0.0);
        let mut phi = BilinearMatrix::zeros(&grid);
        for k in -4..=-1 {
            let i = grid.index_of(k);
            phi.matrix_mut()[(i, i)] = c(1.0, 0.0);
        }
        assert_eq!(kondo_energy(&phi, &grid, 3.0), -1.5 * 10.0);
    }

    #[test]
    fn rhs_vanishes_for_commuting_diagonal() {
        let grid = MomentumGrid::linear(3, 1.0).unwrap();
        let mut phi = BilinearMatrix::zeros(&grid);
        for i in 0..grid.dim() {
            phi.matrix_mut()[(i, i)] = c(0.1 * i as f64, 0.0);
        }
        assert_eq!(max_norm(eom_rhs(&phi, &grid, 2.0).matrix()), 0.0);
    }

    #[test]
    fn rhs_invariants_random() {
        let grid = MomentumGrid::linear(2, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let phi = BilinearMatrix::new(&grid, random_hermitian(grid.dim(), &mut rng)).unwrap();
            let j = rng.gen_range(0.1..3.0);
            let rhs = eom_rhs(&phi, &grid, j);
            assert!(rhs.hermiticity_defect() < 1e-13);
            assert!(rhs.trace().norm() < 1e-13);
            assert!(rhs.impurity_occupation().norm() < 1e-13);
        }
    }

    #[test]
    fn matrix_units_reproduce_structure_constants() {
        // [E_L^K, E_N^M] = δ_L^M E_N^K - δ_N^K E_L^M, exhaustively for Λ = 2.
        let n = 5;
        for k in 0..n {
            for l in 0..n {
                for m in 0..n {
                    for nn in 0..n {
                        let lhs = commutator(&matrix_unit(n, k, l), &matrix_unit(n, m, nn));
                        let mut rhs = CMatrix::zeros(n, n);
                        if l == m {
                            rhs += matrix_unit(n, k, nn);
                        }
                        if nn == k {
                            rhs -= matrix_unit(n, m, l);
                        }
                        assert_eq!(lhs, rhs, "K={k} L={l} M={m} N={nn}");
                    }
                }
            }
        }
    }

    #[test]
    fn json_dump_shape() {
        let grid = MomentumGrid::linear(1, 1.0).unwrap();
        let v = assemble_h(&grid, c(0.5, 0.25)).to_json();
        assert_eq!(v["dim"], 3);
        assert_eq!(v["rows"][0][2][0], -0.5);
        assert_eq!(v["rows"][2][0][1], 0.25);
    }
}
