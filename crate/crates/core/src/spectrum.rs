//! Eigenvalues and eigenvectors of `h(g)` from its characteristic function
//!
//! ```text
//! X(ν) = ν [1 + Σ_{k=1}^{Λ} 2|g|² / (ω_k² - ν²)]
//! ```
//!
//! `X` is odd, so `ν = 0` is always a root and the others come in `±` pairs.
//! On the positive axis there is exactly one root in every `(ω_k, ω_{k+1})`
//! and one above `ω_Λ`. Each positive root is stored as an offset `t` from the
//! nearest pole, `ν = ω_a + t`, and every denominator `ω_k - ν` is formed from
//! pole differences, which keeps eigenvectors accurate even when a root sits
//! very close to a conduction energy.

use std::borrow::Cow;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{KondoError, Result};
use crate::grid::MomentumGrid;
use crate::hamiltonian::CMatrix;

const MAX_ITER: usize = 300;

/// Where a root sits relative to the conduction poles.
#[derive(Debug, Clone, Copy, PartialEq)]
enum RootRepr {
    Zero,
    /// `ν = sign · (ω_{anchor+1} + offset)`, `anchor` indexes the positive branch.
    Anchored {
        sign: f64,
        anchor: usize,
        offset: f64,
    },
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    grid: MomentumGrid,
    g: Complex64,
    roots: Vec<f64>,
    repr: Vec<RootRepr>,
    xprime: Vec<f64>,
    basis: Option<CMatrix>,
}

/// Find the pole within `1e-14` (relative) of `nu`, if any.
fn pole_at(nu: f64, grid: &MomentumGrid) -> Option<i64> {
    grid.momenta().find(|&k| {
        let w = grid.energy(k);
        (nu - w).abs() <= 1e-14 * w.abs().max(1.0)
    })
}

/// `X(ν) = ν[1 + Σ_{k=1}^Λ 2|g|²/(ω_k² − ν²)]`.
pub fn char_fn(nu: f64, grid: &MomentumGrid, g: Complex64) -> Result<f64> {
    if let Some(k) = pole_at(nu, grid) {
        return Err(KondoError::Pole { nu, k });
    }
    let g2 = g.norm_sqr();
    let s: f64 = grid.positive_energies().iter().map(|&w| 2.0 * g2 / ((w - nu) * (w + nu))).sum();
    Ok(nu * (1.0 + s))
}

/// `X'(ν) = 1 + Σ_k |g|²/(ν − ω_k)²` over all `2Λ` conduction states.
pub fn char_fn_deriv(nu: f64, grid: &MomentumGrid, g: Complex64) -> Result<f64> {
    if let Some(k) = pole_at(nu, grid) {
        return Err(KondoError::Pole { nu, k });
    }
    let g2 = g.norm_sqr();
    let s: f64 =
        grid.positive_energies().iter().map(|&w| g2 / ((nu - w) * (nu - w)) + g2 / ((nu + w) * (nu + w))).sum();
    Ok(1.0 + s)
}

/// Folded secular function `1 + Σ 2G/((ω_m − ν)(ω_m + ν))` written around the
/// anchor pole `ω_a`, multiplied by `s·t` (with `s·t > 0`) so that the anchor
/// singularity cancels. Returns the value and its `t` derivative.
struct AnchoredSecular<'a> {
    w: &'a [f64],
    anchor: usize,
    g2: f64,
    side: f64,
}

impl AnchoredSecular<'_> {
    fn eval(&self, t: f64) -> (f64, f64) {
        let wa = self.w[self.anchor];
        let nu = wa + t;
        let mut rest = 1.0;
        let mut rest_d = 0.0;
        for (m, &wm) in self.w.iter().enumerate() {
            if m == self.anchor {
                continue;
            }
            let a = (wm - wa) - t;
            let b = (wm + wa) + t;
            let p = a * b;
            rest += 2.0 * self.g2 / p;
            rest_d += 4.0 * self.g2 * nu / (p * p);
        }
        let sa = 2.0 * wa + t;
        let value = t * rest - 2.0 * self.g2 / sa;
        let deriv = rest + t * rest_d + 2.0 * self.g2 / (sa * sa);
        (self.side * value, self.side * deriv)
    }

    /// Safeguarded Newton in `t` on a bracket with `F(lo) ≤ 0 ≤ F(hi)`.
    fn solve(&self, mut lo: f64, mut hi: f64) -> Result<f64> {
        let (flo, _) = self.eval(lo);
        let (fhi, _) = self.eval(hi);
        if flo > 0.0 || fhi < 0.0 {
            let wa = self.w[self.anchor];
            return Err(KondoError::Bracket { lo: wa + lo, hi: wa + hi, flo, fhi });
        }
        if flo == 0.0 {
            return Ok(lo);
        }
        if fhi == 0.0 {
            return Ok(hi);
        }
        // Start on the side of the anchor, where F is nearly linear.
        let mut t = if self.side > 0.0 { lo } else { hi };
        for _ in 0..MAX_ITER {
            let (f, df) = self.eval(t);
            if f == 0.0 {
                return Ok(t);
            }
            if f < 0.0 {
                lo = lo.max(t);
            } else {
                hi = hi.min(t);
            }
            let newton = t - f / df;
            let next = if df > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            let scale = next.abs().max(f64::MIN_POSITIVE);
            if (next - t).abs() <= 2.0 * f64::EPSILON * scale
                || (hi - lo) <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs())
            {
                return Ok(next);
            }
            t = next;
        }
        Ok(0.5 * (lo + hi))
    }
}

/// One positive root in `(ω_k, ω_{k+1})` (`k` is the 0-based positive index)
/// or, for `k = Λ-1`, above `ω_Λ`.
fn positive_root(w: &[f64], k: usize, g2: f64) -> Result<RootRepr> {
    let lambda = w.len();
    if k + 1 < lambda {
        let half = 0.5 * (w[k + 1] - w[k]);
        let left = AnchoredSecular { w, anchor: k, g2, side: 1.0 };
        let (fmid, _) = left.eval(half);
        if fmid == 0.0 {
            return Ok(RootRepr::Anchored { sign: 1.0, anchor: k, offset: half });
        }
        if fmid > 0.0 {
            let t = left.solve(0.0, half)?;
            Ok(RootRepr::Anchored { sign: 1.0, anchor: k, offset: t })
        } else {
            let right = AnchoredSecular { w, anchor: k + 1, g2, side: -1.0 };
            // F = -t f on t < 0: F(-half) = half·f(mid) < 0 and F(0) > 0.
            let t = right.solve(-(w[k + 1] - w[k] - half), 0.0)?;
            Ok(RootRepr::Anchored { sign: 1.0, anchor: k + 1, offset: t })
        }
    } else {
        let wl = w[k];
        let sec = AnchoredSecular { w, anchor: k, g2, side: 1.0 };
        // f ≥ 0 at ν² = ω_Λ² + 2Λ|g|² because every term is ≥ -1/Λ.
        let mut hi = (wl * wl + 2.0 * lambda as f64 * g2).sqrt() - wl;
        let mut tries = 0;
        while sec.eval(hi).0 < 0.0 {
            hi *= 2.0;
            tries += 1;
            if tries > 60 {
                let (flo, _) = sec.eval(0.0);
                let (fhi, _) = sec.eval(hi);
                return Err(KondoError::Bracket { lo: wl, hi: wl + hi, flo, fhi });
            }
        }
        let t = sec.solve(0.0, hi)?;
        Ok(RootRepr::Anchored { sign: 1.0, anchor: k, offset: t })
    }
}

impl Spectrum {
    /// All `2Λ+1` roots of `X` and their normalizations `X'(ν_α)`.
    ///
    /// Eigenvectors are produced lazily; see [`Spectrum::eigenvector`] and
    /// [`build_spectrum`].
    pub fn find_roots(grid: &MomentumGrid, g: Complex64) -> Result<Self> {
        let w = grid.positive_energies();
        let lambda = grid.lambda();
        let g2 = g.norm_sqr();

        let positive: Vec<RootRepr> = if g2 == 0.0 {
            (0..lambda).map(|k| RootRepr::Anchored { sign: 1.0, anchor: k, offset: 0.0 }).collect()
        } else {
            (0..lambda).into_par_iter().map(|k| positive_root(w, k, g2)).collect::<Result<Vec<_>>>()?
        };

        let mut repr = Vec::with_capacity(2 * lambda + 1);
        for r in positive.iter().rev() {
            if let RootRepr::Anchored { anchor, offset, .. } = *r {
                repr.push(RootRepr::Anchored { sign: -1.0, anchor, offset });
            }
        }
        repr.push(RootRepr::Zero);
        repr.extend(positive.iter().copied());

        let roots: Vec<f64> = repr
            .iter()
            .map(|r| match *r {
                RootRepr::Zero => 0.0,
                RootRepr::Anchored { sign, anchor, offset } => sign * (w[anchor] + offset),
            })
            .collect();

        let mut spec = Self { grid: grid.clone(), g, roots, repr, xprime: Vec::new(), basis: None };
        spec.check_interlacing()?;
        spec.xprime = (0..spec.roots.len()).into_par_iter().map(|a| spec.xprime_at(a)).collect();
        Ok(spec)
    }

    fn check_interlacing(&self) -> Result<()> {
        let w = self.grid.positive_energies();
        let lambda = self.grid.lambda();
        for (i, r) in self.repr[lambda + 1..].iter().enumerate() {
            let RootRepr::Anchored { anchor, offset, .. } = *r else {
                unreachable!("positive roots are anchored");
            };
            let inside = if self.g.norm_sqr() == 0.0 {
                anchor == i && offset == 0.0
            } else if anchor == i {
                offset > 0.0 && (i + 1 == lambda || w[i] + offset <= w[i + 1])
            } else {
                anchor == i + 1 && offset < 0.0 && w[anchor] + offset >= w[i]
            };
            if !inside {
                let lo = w[i];
                let hi = w.get(i + 1).copied().unwrap_or(f64::INFINITY);
                return Err(KondoError::Bracket { lo, hi, flo: f64::NAN, fhi: f64::NAN });
            }
        }
        Ok(())
    }

    /// `ω_K − ν_α` for conduction basis position `k_index`.
    pub fn gap(&self, k_index: usize, alpha: usize) -> f64 {
        let lambda = self.grid.lambda();
        let w = self.grid.positive_energies();
        let k = self.grid.momentum_at(k_index);
        let m = k.unsigned_abs() as usize - 1;
        match self.repr[alpha] {
            RootRepr::Zero => self.grid.energy(k),
            RootRepr::Anchored { sign, anchor, offset } => {
                let diff = (w[m] - w[anchor]) - offset;
                let sum = (w[m] + w[anchor]) + offset;
                debug_assert!(k_index < 2 * lambda);
                match (sign > 0.0, k > 0) {
                    (true, true) => diff,
                    (true, false) => -sum,
                    (false, true) => sum,
                    (false, false) => -diff,
                }
            }
        }
    }

    fn xprime_at(&self, alpha: usize) -> f64 {
        let g2 = self.g.norm_sqr();
        if g2 == 0.0 {
            return 1.0;
        }
        let s: f64 = (0..self.grid.n_conduction())
            .map(|i| {
                let d = self.gap(i, alpha);
                g2 / (d * d)
            })
            .sum();
        1.0 + s
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    pub fn g(&self) -> Complex64 {
        self.g
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Sorted roots `ν_α`.
    pub fn roots(&self) -> &[f64] {
        &self.roots
    }

    /// `X'(ν_α)`, aligned with [`Spectrum::roots`].
    pub fn xprime(&self) -> &[f64] {
        &self.xprime
    }

    /// Position of the `ν = 0` root (always `Λ`).
    pub fn zero_index(&self) -> usize {
        self.grid.lambda()
    }

    /// `|U_α^d|² = 1/X'(ν_α)`.
    pub fn impurity_weights(&self) -> Vec<f64> {
        self.xprime.iter().map(|x| 1.0 / x).collect()
    }

    /// Impurity amplitude `U_α^d = 1/√X'(ν_α)`, real and positive by convention.
    /// In the decoupled limit only the zero root has impurity weight.
    pub fn impurity_amplitude(&self, alpha: usize) -> f64 {
        if self.g.norm_sqr() == 0.0 {
            return if alpha == self.zero_index() { 1.0 } else { 0.0 };
        }
        1.0 / self.xprime[alpha].sqrt()
    }

    /// Column `U_α`: `U_α^k = g U_α^d / (ω_k − ν_α)`.
    pub fn eigenvector(&self, alpha: usize) -> Result<DVector<Complex64>> {
        let n = self.grid.dim();
        if alpha >= n {
            return Err(KondoError::Index { index: alpha, dim: n });
        }
        let d = self.grid.impurity_index();
        let mut v = DVector::from_element(n, Complex64::new(0.0, 0.0));
        if self.g.norm_sqr() == 0.0 {
            match self.repr[alpha] {
                RootRepr::Zero => v[d] = Complex64::new(1.0, 0.0),
                RootRepr::Anchored { sign, anchor, .. } => {
                    let k = if sign > 0.0 { anchor as i64 + 1 } else { -(anchor as i64) - 1 };
                    v[self.grid.index_of(k)] = Complex64::new(1.0, 0.0);
                }
            }
            return Ok(v);
        }
        let ud = self.impurity_amplitude(alpha);
        v[d] = Complex64::new(ud, 0.0);
        for i in 0..self.grid.n_conduction() {
            let gap = self.gap(i, alpha);
            if gap == 0.0 {
                return Err(KondoError::Pole { nu: self.roots[alpha], k: self.grid.momentum_at(i) });
            }
            v[i] = self.g * (ud / gap);
        }
        Ok(v)
    }

    /// Full unitary `U` with columns `U_α` (cached by [`build_spectrum`]).
    pub fn eigenbasis(&self) -> Result<Cow<'_, CMatrix>> {
        if let Some(b) = &self.basis {
            return Ok(Cow::Borrowed(b));
        }
        Ok(Cow::Owned(self.assemble_basis()?))
    }

    fn assemble_basis(&self) -> Result<CMatrix> {
        let n = self.grid.dim();
        let cols = (0..n).into_par_iter().map(|a| self.eigenvector(a)).collect::<Result<Vec<_>>>()?;
        Ok(CMatrix::from_columns(&cols))
    }

    /// Number of roots strictly inside `(lo, hi)`.
    pub fn count_in(&self, lo: f64, hi: f64) -> usize {
        self.roots.iter().filter(|&&r| r > lo && r < hi).count()
    }
}

/// Roots, normalizations and the cached unitary eigenbasis, with invariants checked.
pub fn build_spectrum(grid: &MomentumGrid, g: Complex64) -> Result<Spectrum> {
    let mut spec = Spectrum::find_roots(grid, g)?;
    let u = spec.assemble_basis()?;
    let n = grid.dim();
    let defect = crate::hamiltonian::max_norm(&(u.adjoint() * &u - CMatrix::identity(n, n)));
    if defect > 1e-10 {
        return Err(KondoError::Domain(format!("eigenbasis unitarity defect {defect:e}")));
    }
    spec.basis = Some(u);
    Ok(spec)
}
