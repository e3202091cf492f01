use num_complex::Complex64;
use proptest::prelude::*;

use kondo_core::condensate::{occupations, psi_full, psi_residue};
use kondo_core::grid::MomentumGrid;
use kondo_core::hamiltonian::{assemble_h, commutator, max_norm};
use kondo_core::oracle::{dense_diagonalize, ground_state_projector};
use kondo_core::spectrum::{char_fn, Spectrum};

fn grid_strategy() -> impl Strategy<Value = MomentumGrid> {
    prop::collection::vec(0.05f64..2.0, 1..12).prop_map(|steps| {
        let mut e = Vec::with_capacity(steps.len());
        let mut acc = 0.0;
        for s in steps {
            acc += s;
            e.push(acc);
        }
        MomentumGrid::custom(&e, 1.0).unwrap()
    })
}

fn coupling_strategy() -> impl Strategy<Value = Complex64> {
    (0.01f64..4.0, -3.2f64..3.2).prop_map(|(m, p)| Complex64::from_polar(m, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roots_interlace_and_match_dense(grid in grid_strategy(), g in coupling_strategy()) {
        let spec = Spectrum::find_roots(&grid, g).unwrap();
        let w = grid.positive_energies();
        let lambda = grid.lambda();
        prop_assert_eq!(spec.len(), 2 * lambda + 1);
        prop_assert_eq!(spec.roots()[lambda], 0.0);
        for (i, pair) in w.windows(2).enumerate() {
            let r = spec.roots()[lambda + 1 + i];
            prop_assert!(r > pair[0] && r < pair[1]);
        }
        prop_assert!(spec.roots()[2 * lambda] > w[lambda - 1]);
        for a in 0..lambda {
            prop_assert_eq!(spec.roots()[a], -spec.roots()[2 * lambda - a]);
        }
        let dense = dense_diagonalize(&assemble_h(&grid, g)).unwrap();
        for (a, b) in spec.roots().iter().zip(&dense.eigenvalues) {
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn characteristic_function_is_odd(grid in grid_strategy(), g in coupling_strategy(), nu in 0.01f64..30.0) {
        if let (Ok(a), Ok(b)) = (char_fn(nu, &grid, g), char_fn(-nu, &grid, g)) {
            prop_assert_eq!(a, -b);
        }
    }

    #[test]
    fn condensate_matches_projector(grid in grid_strategy(), g in coupling_strategy(), xi in -0.49f64..0.5) {
        let spec = Spectrum::find_roots(&grid, g).unwrap();
        let occ = occupations(&spec, xi).unwrap();
        let cond = psi_residue(&spec, &occ);
        let h = assemble_h(&grid, g);
        let proj = ground_state_projector(&dense_diagonalize(&h).unwrap(), &grid, xi).unwrap();
        let d = grid.impurity_index();
        for i in 0..grid.n_conduction() {
            prop_assert!((cond.column()[i] - proj.matrix()[(i, d)]).norm() < 1e-9);
        }
        let full = psi_full(&spec, &occ).unwrap();
        prop_assert!(max_norm(&commutator(h.matrix(), full.matrix())) < 1e-9);
        prop_assert!((full.trace().re - (grid.lambda() as f64 + 0.5 + xi)).abs() < 1e-9);
        prop_assert!(full.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn eigenbasis_is_unitary(grid in grid_strategy(), g in coupling_strategy()) {
        let spec = Spectrum::find_roots(&grid, g).unwrap();
        let u = spec.eigenbasis().unwrap();
        let n = grid.dim();
        let defect = max_norm(&(u.adjoint() * u.as_ref() - kondo_core::hamiltonian::CMatrix::identity(n, n)));
        prop_assert!(defect < 1e-10);
    }
}
