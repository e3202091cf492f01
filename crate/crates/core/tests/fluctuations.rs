use num_complex::Complex64;

use kondo_core::condensate::{occupations, psi_full};
use kondo_core::dynamics::{linear_evolve, nonlinear_evolve, r_diagnostic, CouplingMode, FluctuationState};
use kondo_core::grid::MomentumGrid;
use kondo_core::hamiltonian::{max_norm, BilinearMatrix, CMatrix};
use kondo_core::renorm::j_inverse_finite;
use kondo_core::spectrum::{build_spectrum, Spectrum};

const T: f64 = 2.0;
const DT: f64 = 1e-3;

struct Setup {
    grid: MomentumGrid,
    spec: Spectrum,
    psi: BilinearMatrix,
    g: Complex64,
    j: f64,
}

fn setup() -> Setup {
    let grid = MomentumGrid::linear(4, 1.0).unwrap();
    let g = Complex64::new(0.8, 0.3);
    let spec = build_spectrum(&grid, g).unwrap();
    let psi = psi_full(&spec, &occupations(&spec, 0.0).unwrap()).unwrap();
    let j = 1.0 / j_inverse_finite(&grid, g).unwrap();
    Setup { grid, spec, psi, g, j }
}

fn fluctuation(spec: &Spectrum) -> FluctuationState<'_> {
    FluctuationState::from_upper(
        spec,
        [
            (2, 2, Complex64::new(0.5, 0.0)),
            (2, 5, Complex64::new(0.3, -0.2)),
            (4, 6, Complex64::new(-0.1, 0.4)),
            (6, 6, Complex64::new(-0.3, 0.0)),
        ],
        4,
    )
    .unwrap()
}

/// `Φ(T) − Ψ − ε φ_lin(T)` for the given coupling mode.
fn discrepancy(s: &Setup, eps: f64, mode: CouplingMode) -> CMatrix {
    let phi = fluctuation(&s.spec);
    let start =
        BilinearMatrix::new(&s.grid, s.psi.matrix() + phi.to_matrix().unwrap().matrix() * Complex64::new(eps, 0.0))
            .unwrap();
    let traj = nonlinear_evolve(&start, &s.grid, mode, T, DT, 1000).unwrap();
    let lin = linear_evolve(&phi, T).to_matrix().unwrap();
    traj.last().matrix() - s.psi.matrix() - lin.matrix() * Complex64::new(eps, 0.0)
}

#[test]
fn frozen_coupling_flow_is_the_linear_flow() {
    let s = setup();
    for eps in [1e-2, 1e-1, 1.0] {
        let d = discrepancy(&s, eps, CouplingMode::Frozen { g: s.g });
        assert!(max_norm(&d) < 1e-9, "eps={eps}: {:e}", max_norm(&d));
    }
}

#[test]
fn dropped_coupling_shift_is_first_order() {
    let s = setup();
    let phi = fluctuation(&s.spec);
    let r = r_diagnostic(&phi, s.j).unwrap();
    assert!(r.norm() > 1e-3, "test fluctuation must move the coupling");
    let mode = CouplingMode::SelfConsistent { j: s.j };
    let slopes: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&e| max_norm(&discrepancy(&s, e, mode)) / e).collect();
    // ‖Δ‖/ε settles to a nonzero constant set by r(φ).
    assert!((slopes[1] - slopes[2]).abs() < 1e-2 * slopes[2], "{slopes:?}");
    assert!(slopes[2] > 1e-3);
}

#[test]
fn second_order_remainder_scales_quadratically() {
    let s = setup();
    let mode = CouplingMode::SelfConsistent { j: s.j };
    let second = |eps: f64| {
        max_norm(&(discrepancy(&s, eps, mode) - discrepancy(&s, eps / 2.0, mode) * Complex64::new(2.0, 0.0)))
    };
    let d: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&e| second(e)).collect();
    for w in d.windows(2) {
        let slope = (w[0] / w[1]).log10();
        assert!((slope - 2.0).abs() < 0.1, "{d:?}");
    }
}

#[test]
fn mirror_diagonal_fluctuation_does_not_move_coupling() {
    let s = setup();
    let z = s.spec.zero_index();
    let phi = FluctuationState::from_upper(
        &s.spec,
        [(z - 2, z - 2, Complex64::new(0.4, 0.0)), (z + 2, z + 2, Complex64::new(0.4, 0.0))],
        2,
    )
    .unwrap();
    assert!(r_diagnostic(&phi, s.j).unwrap().norm() < 1e-14);
    let d = discrepancy_for(&s, &phi, 1e-2);
    assert!(d < 1e-11, "{d:e}");
}

fn discrepancy_for(s: &Setup, phi: &FluctuationState<'_>, eps: f64) -> f64 {
    let start =
        BilinearMatrix::new(&s.grid, s.psi.matrix() + phi.to_matrix().unwrap().matrix() * Complex64::new(eps, 0.0))
            .unwrap();
    let traj = nonlinear_evolve(&start, &s.grid, CouplingMode::SelfConsistent { j: s.j }, T, DT, 1000).unwrap();
    let lin = linear_evolve(phi, T).to_matrix().unwrap();
    max_norm(&(traj.last().matrix() - s.psi.matrix() - lin.matrix() * Complex64::new(eps, 0.0)))
}
