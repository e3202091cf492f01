//! Running coupling `J(Λ, g)`, the asymptotic-freedom ratio and the
//! continuum characteristic function `χ₁`.
//!
//! The renormalized coupling `g` is held fixed while the bare `J` absorbs the
//! logarithmic divergence of `Σ_k Ψ_{+d}^k`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::condensate::{even_integral, occupations, residue_weight, Dispersion};
use crate::error::{KondoError, Result};
use crate::grid::MomentumGrid;
use crate::quadrature::neumaier_sum;
use crate::spectrum::Spectrum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunningCoupling {
    pub lambda: usize,
    pub g_abs: f64,
    pub j: f64,
    pub j_inverse: f64,
    /// `J · Σ_{k=1}^Λ 1/ω_k`.
    pub af_ratio: f64,
}

/// `J⁻¹ = Σ_k Ψ_{+d}^k / g` from the exact finite-grid condensate.
pub fn j_inverse_finite(grid: &MomentumGrid, g: Complex64) -> Result<f64> {
    if g.norm_sqr() == 0.0 {
        return Err(KondoError::ZeroCoupling);
    }
    let spec = Spectrum::find_roots(grid, g)?;
    let occ = occupations(&spec, 0.0)?;
    let weights: Vec<f64> = (0..grid.n_conduction()).into_par_iter().map(|i| residue_weight(&spec, &occ, i)).collect();
    Ok(neumaier_sum(weights))
}

/// `Σ_{k=1}^Λ 1/ω_k`, the bare logarithmically divergent sum.
pub fn bare_sum(lambda: usize, dispersion: &Dispersion) -> Result<f64> {
    let terms = (1..=lambda as i64).map(|k| dispersion.omega(k).map(|w| 1.0 / w)).collect::<Result<Vec<_>>>()?;
    Ok(neumaier_sum(terms))
}

/// `J⁻¹(Λ, g) = Σ_{k=1}^Λ (2/π) ∫_0^∞ dy / ([ω_k² + y²][1 + 2|g|² Σ(y)])`.
///
/// At `g = 0` every integral is `π/(2ω_k)` and the result is exactly
/// [`bare_sum`].
pub fn j_inverse_integral(lambda: usize, g: Complex64, dispersion: &Dispersion) -> Result<f64> {
    if lambda == 0 {
        return Err(KondoError::Domain("lambda must be at least 1".into()));
    }
    let g2 = g.norm_sqr();
    if g2 == 0.0 {
        return bare_sum(lambda, dispersion);
    }
    let terms = (1..=lambda as i64)
        .into_par_iter()
        .map(|k| {
            let w = dispersion.omega(k)?;
            Ok(2.0 * even_integral(w, g2, dispersion)? / (PI * w))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(neumaier_sum(terms))
}

/// `J(Λ) Σ_{k=1}^Λ 1/ω_k`, which tends to 1 as `Λ → ∞`.
pub fn af_ratio(lambda: usize, g: Complex64, dispersion: &Dispersion) -> Result<f64> {
    Ok(bare_sum(lambda, dispersion)? / j_inverse_integral(lambda, g, dispersion)?)
}

pub fn running_coupling(lambda: usize, g: Complex64, dispersion: &Dispersion) -> Result<RunningCoupling> {
    let j_inverse = j_inverse_integral(lambda, g, dispersion)?;
    let bare = bare_sum(lambda, dispersion)?;
    Ok(RunningCoupling { lambda, g_abs: g.norm(), j: 1.0 / j_inverse, j_inverse, af_ratio: bare / j_inverse })
}

/// Inverse problem: the `|g|` whose finite-grid self-consistency gives bare
/// coupling `J`. Fails below the critical coupling `1/Σ_k 1/ω_k`.
pub fn solve_g_from_j(grid: &MomentumGrid, j: f64) -> Result<f64> {
    if !(j > 0.0 && j.is_finite()) {
        return Err(KondoError::Domain(format!("J must be positive, got {j}")));
    }
    let target = 1.0 / j;
    let bare = neumaier_sum(grid.positive_energies().iter().map(|w| 1.0 / w));
    if target >= bare {
        return Err(KondoError::SubCritical { j, critical: 1.0 / bare });
    }
    // J⁻¹(|g|) decreases from the bare sum at g = 0 towards 0.
    let f = |x: f64| j_inverse_finite(grid, Complex64::new(x, 0.0)).map(|v| v - target);
    let mut lo = 0.0;
    let mut hi = grid.positive_energies()[0];
    let mut tries = 0;
    while f(hi)? > 0.0 {
        lo = hi;
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(KondoError::Bracket { lo, hi, flo: f64::NAN, fhi: f64::NAN });
        }
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if v == 0.0 {
            return Ok(mid);
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

const ZETA: [f64; 6] = [
    1.644_934_066_848_226_4, // ζ(2)
    1.082_323_233_711_138_2, // ζ(4)
    1.017_343_061_984_449,   // ζ(6)
    1.004_077_356_197_944,   // ζ(8)
    1.000_994_575_127_818_1, // ζ(10)
    1.000_246_086_553_308,   // ζ(12)
];

/// `1/x² − π cot(πx)/x = 2 Σ_{k≥1} 1/(k² − x²)`, with the removable
/// singularity at `x = 0` handled by series.
fn cot_kernel(x: f64) -> f64 {
    let x = x.abs();
    if x < 0.05 {
        let x2 = x * x;
        let mut acc = 0.0;
        for z in ZETA.iter().rev() {
            acc = acc * x2 + z;
        }
        2.0 * acc
    } else {
        let frac = x - x.floor();
        1.0 / (x * x) - PI / (x * (PI * frac).tan())
    }
}

/// `χ₁(ν) = 1 + Σ_{k=1}^∞ 2|g|²/(ω_k² − ν²)` for `ω_k = c k`, via
/// `1 + |g'|² [1/x² − π cot(πx)/x]` with `x = ν/c`, `g' = g/c`.
pub fn chi1(nu: f64, g: Complex64, c: f64) -> Result<f64> {
    if c.is_nan() || c <= 0.0 {
        return Err(KondoError::Domain(format!("slope must be positive, got {c}")));
    }
    let x = (nu / c).abs();
    let nearest = x.round();
    if nearest >= 1.0 && (x - nearest).abs() <= 1e-14 * nearest {
        return Err(KondoError::Pole { nu, k: nearest as i64 });
    }
    let gp2 = g.norm_sqr() / (c * c);
    Ok(1.0 + gp2 * cot_kernel(x))
}

/// `dχ₁/dν`; odd in `ν`, positive between poles for `ν > 0`.
pub fn chi1_deriv(nu: f64, g: Complex64, c: f64) -> Result<f64> {
    chi1(nu, g, c)?;
    let gp2 = g.norm_sqr() / (c * c);
    let x = nu / c;
    let ax = x.abs();
    let d = if ax < 0.05 {
        // 2 Σ ζ(2n) x^{2n-2}, differentiated term by term
        let x2 = ax * ax;
        let mut acc = 0.0;
        for (n, z) in ZETA.iter().enumerate().skip(1).rev() {
            acc = acc * x2 + 2.0 * n as f64 * z;
        }
        2.0 * acc * ax
    } else {
        let s = (PI * (ax - ax.floor())).sin();
        let cot = PI / (PI * (ax - ax.floor())).tan();
        -2.0 / (ax * ax * ax) + cot / (ax * ax) + PI * PI / (s * s * ax)
    };
    Ok(gp2 * d.copysign(x) / c)
}

/// The root of `χ₁` in `(ω_k, ω_{k+1})` for `k = 1..=n`.
///
/// Each root is located by bisection on the fractional offset inside its
/// interval, where `χ₁` increases monotonically from `−∞` to `+∞`.
pub fn chi1_roots(g: Complex64, c: f64, n: usize) -> Result<Vec<f64>> {
    if c.is_nan() || c <= 0.0 {
        return Err(KondoError::Domain(format!("slope must be positive, got {c}")));
    }
    let gp2 = g.norm_sqr() / (c * c);
    if gp2 == 0.0 {
        return Ok(Vec::new());
    }
    (1..=n)
        .into_par_iter()
        .map(|k| {
            let kf = k as f64;
            // x = k + s, cot(πx) = cot(πs)
            let f = |s: f64| {
                let x = kf + s;
                1.0 + gp2 * (1.0 / (x * x) - PI / (x * (PI * s).tan()))
            };
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if f(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 * (kf + hi) {
                    break;
                }
            }
            Ok(c * (kf + 0.5 * (lo + hi)))
        })
        .collect()
}
