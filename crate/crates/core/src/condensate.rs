//! Ground-state occupations and the impurity–electron condensate `Ψ_d^k`.
//!
//! Three routes are provided:
//!
//! * [`psi_residue`]: exact finite-`Λ` sum over the roots of `X`,
//! * [`psi_integral`]: the same sum rewritten as an integral along the
//!   imaginary axis, valid for finite grids and for the continuum,
//! * [`psi_linear_closed`]: the continuum integral for exactly linear
//!   dispersion written in terms of `πa coth(πa)`.
//!
//! For finite grids the first two agree to quadrature accuracy.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{KondoError, Result};
use crate::grid::MomentumGrid;
use crate::hamiltonian::{BilinearMatrix, CMatrix};
use crate::quadrature::{integrate_half_line, neumaier_sum};
use crate::spectrum::Spectrum;

/// Absolute tolerance used for the `x`-integrals (their values are `O(1)`).
pub const QUAD_ABS_TOL: f64 = 1e-12;
const QUAD_REL_TOL: f64 = 1e-13;

const ZETA2: f64 = PI * PI / 6.0;

/// Single-particle dispersion used by the continuum routes.
#[derive(Debug, Clone, PartialEq)]
pub enum Dispersion {
    /// Sums truncated at the grid cutoff.
    Finite(MomentumGrid),
    /// `ω_k = c k` for every `k ≥ 1`.
    Linear { slope: f64 },
    /// Tabulated `ω_k` for `k ≤ Λ`, continued as `ω_Λ + c(k − Λ)` beyond.
    Asymptotic(MomentumGrid),
}

impl Dispersion {
    pub fn linear(slope: f64) -> Result<Self> {
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(KondoError::Domain(format!("slope must be positive, got {slope}")));
        }
        Ok(Self::Linear { slope })
    }

    pub fn slope(&self) -> f64 {
        match self {
            Self::Finite(g) | Self::Asymptotic(g) => g.slope(),
            Self::Linear { slope } => *slope,
        }
    }

    /// `ω_k` for signed `k`.
    pub fn omega(&self, k: i64) -> Result<f64> {
        if k == 0 {
            return Err(KondoError::ZeroEnergy { k: 0 });
        }
        let m = k.unsigned_abs() as usize;
        let w = match self {
            Self::Linear { slope } => slope * m as f64,
            Self::Finite(g) => {
                if m > g.lambda() {
                    return Err(KondoError::Domain(format!(
                        "momentum {k} outside finite grid with cutoff {}",
                        g.lambda()
                    )));
                }
                g.positive_energies()[m - 1]
            }
            Self::Asymptotic(g) => {
                let l = g.lambda();
                let w = g.positive_energies();
                if m <= l {
                    w[m - 1]
                } else {
                    w[l - 1] + g.slope() * (m - l) as f64
                }
            }
        };
        Ok(if k < 0 { -w } else { w })
    }

    /// `Σ(y) = Σ_{m>0} 1/(y² + ω_m²)`.
    pub fn sigma(&self, y: f64) -> f64 {
        sigma_sum(y, self)
    }
}

/// `(z coth z − 1)/z²`, regular at `z = 0` where it equals `1/3`.
pub fn coth_kernel(z: f64) -> f64 {
    let z = z.abs();
    if z < 0.05 {
        let z2 = z * z;
        1.0 / 3.0 + z2 * (-1.0 / 45.0 + z2 * (2.0 / 945.0 + z2 * (-1.0 / 4725.0)))
    } else {
        (z / z.tanh() - 1.0) / (z * z)
    }
}

/// `Σ(y)` for the given dispersion.
///
/// Linear continuum: `(−c + πy coth(πy/c)) / (2cy²)`, equal to `π²/(6c²)` at
/// `y = 0`. Asymptotic grids add a midpoint-rule tail beyond the table.
pub fn sigma_sum(y: f64, dispersion: &Dispersion) -> f64 {
    let y = y.abs();
    match dispersion {
        Dispersion::Linear { slope } => {
            let c = *slope;
            PI * PI * coth_kernel(PI * y / c) / (2.0 * c * c)
        }
        Dispersion::Finite(grid) => finite_sigma(y, grid),
        Dispersion::Asymptotic(grid) => {
            let w = grid.positive_energies();
            let c = grid.slope();
            let edge = w[w.len() - 1] + 0.5 * c;
            let tail = if y == 0.0 { 1.0 / (c * edge) } else { (y / edge).atan() / (c * y) };
            finite_sigma(y, grid) + tail
        }
    }
}

fn finite_sigma(y: f64, grid: &MomentumGrid) -> f64 {
    let y2 = y * y;
    neumaier_sum(grid.positive_energies().iter().rev().map(|w| 1.0 / (y2 + w * w)))
}

/// Zero-mode occupation and the occupation vector aligned with a spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupation {
    xi: f64,
    mu: Vec<f64>,
}

impl Occupation {
    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// `μ₀ = 1/2 + ξ`.
    pub fn zero_mode(&self) -> f64 {
        0.5 + self.xi
    }
}

pub fn check_xi(xi: f64) -> Result<()> {
    if xi > -0.5 && xi <= 0.5 {
        Ok(())
    } else {
        Err(KondoError::XiRange(xi))
    }
}

/// `μ_α = (1 − sgn ν_α)/2 + ξ δ_{α,0}`.
pub fn occupations(spectrum: &Spectrum, xi: f64) -> Result<Occupation> {
    check_xi(xi)?;
    let z = spectrum.zero_index();
    let mu = (0..spectrum.len())
        .map(|a| match a.cmp(&z) {
            std::cmp::Ordering::Less => 1.0,
            std::cmp::Ordering::Equal => 0.5 + xi,
            std::cmp::Ordering::Greater => 0.0,
        })
        .collect();
    Ok(Occupation { xi, mu })
}

/// Impurity column `Ψ_d^k` of the ground state.
#[derive(Debug, Clone, PartialEq)]
pub struct Condensate {
    grid: MomentumGrid,
    g: Complex64,
    xi: f64,
    column: Vec<Complex64>,
}

impl Condensate {
    pub fn g(&self) -> Complex64 {
        self.g
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    /// Values in conduction basis order.
    pub fn column(&self) -> &[Complex64] {
        &self.column
    }

    pub fn value(&self, k: i64) -> Complex64 {
        self.column[self.grid.index_of(k)]
    }

    /// `Ψ_{+d}^k = (Ψ_d^k + Ψ_d^{−k})/2`.
    pub fn even_part(&self, k: i64) -> Complex64 {
        (self.value(k) + self.value(-k)) * 0.5
    }

    pub fn odd_part(&self, k: i64) -> Complex64 {
        (self.value(k) - self.value(-k)) * 0.5
    }

    /// `Φ_d^• = Σ_k Ψ_d^k`.
    pub fn impurity_sum(&self) -> Complex64 {
        let re = neumaier_sum(self.column.iter().map(|z| z.re));
        let im = neumaier_sum(self.column.iter().map(|z| z.im));
        Complex64::new(re, im)
    }
}

/// `Σ_α μ_α / (X'(ν_α)(ω_k − ν_α))` for one conduction position; `Ψ_d^k / g`.
pub(crate) fn residue_weight(spectrum: &Spectrum, occ: &Occupation, k_index: usize) -> f64 {
    neumaier_sum(
        occ.mu
            .iter()
            .zip(spectrum.xprime())
            .enumerate()
            .filter(|(_, (m, _))| **m != 0.0)
            .map(|(a, (m, xp))| m / (xp * spectrum.gap(k_index, a))),
    )
}

/// `Ψ_d^k = g Σ_α μ_α / (X'(ν_α)(ω_k − ν_α))` for every conduction momentum.
pub fn psi_residue(spectrum: &Spectrum, occ: &Occupation) -> Condensate {
    let grid = spectrum.grid().clone();
    let g = spectrum.g();
    let column = if g.norm_sqr() == 0.0 {
        vec![Complex64::new(0.0, 0.0); grid.n_conduction()]
    } else {
        (0..grid.n_conduction()).into_par_iter().map(|i| g * residue_weight(spectrum, occ, i)).collect()
    };
    Condensate { grid, g, xi: occ.xi, column }
}

/// Full ground-state matrix `Ψ = U diag(μ) U†`.
pub fn psi_full(spectrum: &Spectrum, occ: &Occupation) -> Result<BilinearMatrix> {
    let u = spectrum.eigenbasis()?;
    let n = u.nrows();
    let mut scaled = u.clone().into_owned();
    for (a, &m) in occ.mu.iter().enumerate() {
        for i in 0..n {
            scaled[(i, a)] *= m;
        }
    }
    let psi: CMatrix = scaled * u.adjoint();
    BilinearMatrix::new(spectrum.grid(), psi)
}

/// Even and odd (in `k`) parts of `Ψ_d^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiParts {
    pub even: Complex64,
    pub odd: Complex64,
}

impl PsiParts {
    pub fn total(&self) -> Complex64 {
        self.even + self.odd
    }
}

/// `∫_0^∞ dx / ((1 + x²)(1 + 2|g|² Σ(|ω| x)))`.
pub(crate) fn even_integral(omega_abs: f64, g2: f64, dispersion: &Dispersion) -> Result<f64> {
    if g2 == 0.0 {
        return Ok(0.5 * PI);
    }
    let r = integrate_half_line(
        |x: f64| 1.0 / ((1.0 + x * x) * (1.0 + 2.0 * g2 * sigma_sum(omega_abs * x, dispersion))),
        1.0,
        QUAD_ABS_TOL,
        QUAD_REL_TOL,
    )?;
    Ok(r.value)
}

/// Contour-integral route, split into even and odd parts.
///
/// Odd part: `g ξ / (ω_k [1 + 2|g|² Σ(0)])` (zero-mode residue).
/// Even part: `(g / π|ω_k|) ∫_0^∞ dx / ((1+x²)(1 + 2|g|² Σ(|ω_k| x)))`.
pub fn psi_integral_parts(k: i64, g: Complex64, xi: f64, dispersion: &Dispersion) -> Result<PsiParts> {
    check_xi(xi)?;
    let w = dispersion.omega(k)?;
    let g2 = g.norm_sqr();
    let odd = g * (xi / (w * (1.0 + 2.0 * g2 * sigma_sum(0.0, dispersion))));
    let even = g * (even_integral(w.abs(), g2, dispersion)? / (PI * w.abs()));
    Ok(PsiParts { even, odd })
}

pub fn psi_integral(k: i64, g: Complex64, xi: f64, dispersion: &Dispersion) -> Result<Complex64> {
    psi_integral_parts(k, g, xi, dispersion).map(|p| p.total())
}

/// Linear-dispersion closed form in terms of `g' = g/c`:
///
/// ```text
/// Ψ_d^k = g' ξ / (k [1 + 2ζ(2)|g'|²])
///       + (g'/π) ∫_0^∞ a² da / ([k² + a²][a² + |g'|²(πa coth πa − 1)])
/// ```
pub fn psi_linear_closed_parts(k: i64, g_prime: Complex64, xi: f64) -> Result<PsiParts> {
    check_xi(xi)?;
    if k == 0 {
        return Err(KondoError::ZeroEnergy { k: 0 });
    }
    let g2 = g_prime.norm_sqr();
    let kf = k as f64;
    let odd = g_prime * (xi / (kf * (1.0 + 2.0 * ZETA2 * g2)));
    let k2 = kf * kf;
    // a²/(a² + |g'|²(πa coth πa − 1)) = 1/(1 + |g'|² π² K(πa)), K(z) = (z coth z − 1)/z²
    let r = integrate_half_line(
        |a: f64| 1.0 / ((k2 + a * a) * (1.0 + g2 * PI * PI * coth_kernel(PI * a))),
        kf.abs(),
        QUAD_ABS_TOL / kf.abs(),
        QUAD_REL_TOL,
    )?;
    let even = g_prime * (r.value / PI);
    Ok(PsiParts { even, odd })
}

pub fn psi_linear_closed(k: i64, g_prime: Complex64, xi: f64) -> Result<Complex64> {
    psi_linear_closed_parts(k, g_prime, xi).map(|p| p.total())
}

/// Where profile values come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSource {
    /// Exact residue sum on a finite grid.
    Finite(MomentumGrid),
    /// Continuum integral route.
    Continuum(Dispersion),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub k: i64,
    pub omega: f64,
    pub psi: Complex64,
    pub even: Complex64,
    pub odd: Complex64,
}

/// `Ψ_d^k` for `k = −k_max, …, −1, 1, …, k_max`, in that order.
pub fn condensate_profile(source: &ProfileSource, g: Complex64, xi: f64, k_max: usize) -> Result<Vec<ProfileRow>> {
    check_xi(xi)?;
    if k_max == 0 {
        return Err(KondoError::Domain("k_max must be at least 1".into()));
    }
    let km = k_max as i64;
    let ks: Vec<i64> = (-km..=-1).chain(1..=km).collect();
    match source {
        ProfileSource::Finite(grid) => {
            if k_max > grid.lambda() {
                return Err(KondoError::Domain(format!("k_max = {k_max} exceeds the grid cutoff {}", grid.lambda())));
            }
            let spec = Spectrum::find_roots(grid, g)?;
            let occ = occupations(&spec, xi)?;
            let cond = psi_residue(&spec, &occ);
            Ok(ks
                .iter()
                .map(|&k| ProfileRow {
                    k,
                    omega: grid.energy(k),
                    psi: cond.value(k),
                    even: cond.even_part(k),
                    odd: cond.odd_part(k),
                })
                .collect())
        }
        ProfileSource::Continuum(dispersion) => {
            let parts = (1..=km)
                .into_par_iter()
                .map(|k| psi_integral_parts(k, g, xi, dispersion))
                .collect::<Result<Vec<_>>>()?;
            ks.iter()
                .map(|&k| {
                    let p = parts[k.unsigned_abs() as usize - 1];
                    let odd = if k > 0 { p.odd } else { -p.odd };
                    Ok(ProfileRow { k, omega: dispersion.omega(k)?, psi: p.even + odd, even: p.even, odd })
                })
                .collect()
        }
    }
}
