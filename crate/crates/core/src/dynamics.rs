//! Fluctuations around the ground state: the finite-rank linear flow in the
//! eigenbasis of `h(Ψ)`, the full nonlinear matrix flow, the centrally
//! extended bracket and the finite-`N` quasi-particle spectrum.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use nalgebra::DVector;
use num_complex::Complex64;
use num_traits::Num;
use serde::Serialize;

use crate::condensate::occupations;
use crate::error::{KondoError, Result};
use crate::grid::MomentumGrid;
use crate::hamiltonian::{
    assemble_h, eom_rhs, eom_rhs_frozen, hermiticity_defect, kondo_energy, max_norm, BilinearMatrix, CMatrix,
};
use crate::spectrum::Spectrum;

const HERMITICITY_TOL: f64 = 1e-12;
/// Per-step Hermiticity defect above which an RK4 step is rejected.
pub const STEP_DEFECT_LIMIT: f64 = 1e-9;

/// Sparse `φ_β^α` in the eigenbasis of `h(Ψ)`.
#[derive(Debug, Clone)]
pub struct FluctuationState<'a> {
    spectrum: &'a Spectrum,
    entries: BTreeMap<(usize, usize), Complex64>,
    rank: usize,
}

impl<'a> FluctuationState<'a> {
    /// Entries are keyed `(α, β)` = (upper, lower). Both `(α, β)` and `(β, α)`
    /// must be supplied; use [`FluctuationState::from_upper`] otherwise.
    pub fn new<I>(spectrum: &'a Spectrum, entries: I, rank: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, Complex64)>,
    {
        let n = spectrum.len();
        let mut map = BTreeMap::new();
        for (a, b, v) in entries {
            for idx in [a, b] {
                if idx >= n {
                    return Err(KondoError::Index { index: idx, dim: n });
                }
            }
            if v != Complex64::new(0.0, 0.0) {
                map.insert((a, b), v);
            }
        }
        for (&(a, b), v) in &map {
            let partner = map.get(&(b, a)).copied().unwrap_or_default();
            let defect = (v - partner.conj()).norm();
            if defect > HERMITICITY_TOL * v.norm().max(1.0) {
                return Err(KondoError::Domain(format!("fluctuation not Hermitian at ({a}, {b}): defect {defect:e}")));
            }
        }
        let state = Self { spectrum, entries: map, rank };
        let support = state.support().len();
        if support > rank {
            return Err(KondoError::Domain(format!("support of {support} levels exceeds rank bound {rank}")));
        }
        Ok(state)
    }

    /// Builds a Hermitian state from entries with `α ≤ β`; the mirror entries are
    /// filled in by conjugation and diagonal entries are made real.
    pub fn from_upper<I>(spectrum: &'a Spectrum, entries: I, rank: usize) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, Complex64)>,
    {
        let mut full = Vec::new();
        for (a, b, v) in entries {
            match a.cmp(&b) {
                Ordering::Equal => full.push((a, a, Complex64::new(v.re, 0.0))),
                Ordering::Less => {
                    full.push((a, b, v));
                    full.push((b, a, v.conj()));
                }
                Ordering::Greater => {
                    return Err(KondoError::Domain(format!("entry ({a}, {b}) is below the diagonal")));
                }
            }
        }
        Self::new(spectrum, full, rank)
    }

    pub fn spectrum(&self) -> &'a Spectrum {
        self.spectrum
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn entries(&self) -> &BTreeMap<(usize, usize), Complex64> {
        &self.entries
    }

    pub fn get(&self, alpha: usize, beta: usize) -> Complex64 {
        self.entries.get(&(alpha, beta)).copied().unwrap_or_default()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Levels touched by at least one entry.
    pub fn support(&self) -> BTreeSet<usize> {
        self.entries.keys().flat_map(|&(a, b)| [a, b]).collect()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.entries.iter().map(|(&(a, b), v)| (v - self.get(b, a).conj()).norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            spectrum: self.spectrum,
            entries: self.entries.iter().map(|(&k, &v)| (k, v * s)).collect(),
            rank: self.rank,
        }
    }

    /// `φ_L^K = U_α^K φ_β^α U*_L^β` in the momentum basis.
    pub fn to_matrix(&self) -> Result<BilinearMatrix> {
        let grid = self.spectrum.grid();
        let n = grid.dim();
        let vecs: BTreeMap<usize, DVector<Complex64>> =
            self.support().into_iter().map(|a| self.spectrum.eigenvector(a).map(|v| (a, v))).collect::<Result<_>>()?;
        let mut m = CMatrix::zeros(n, n);
        for (&(a, b), &v) in &self.entries {
            m += (&vecs[&a] * vecs[&b].adjoint()) * v;
        }
        BilinearMatrix::new(grid, m)
    }
}

/// `φ_β^α(t) = e^{i(ν_α − ν_β)t} φ_β^α(0)`.
pub fn linear_evolve<'a>(phi: &FluctuationState<'a>, t: f64) -> FluctuationState<'a> {
    let nu = phi.spectrum.roots();
    let entries = phi
        .entries
        .iter()
        .map(|(&(a, b), &v)| {
            let omega = nu[a] - nu[b];
            ((a, b), v * Complex64::from_polar(1.0, omega * t))
        })
        .collect();
    FluctuationState { spectrum: phi.spectrum, entries, rank: phi.rank }
}

/// The coupling shift `r(φ) = J Σ_{αβ} U_α^• φ_β^α U_β^d` that the linear flow drops.
pub fn r_diagnostic(phi: &FluctuationState<'_>, j: f64) -> Result<Complex64> {
    let spec = phi.spectrum;
    let nc = spec.grid().n_conduction();
    let mut column_sum = BTreeMap::new();
    for a in phi.support() {
        let v = spec.eigenvector(a)?;
        column_sum.insert(a, v.rows(0, nc).sum());
    }
    let total: Complex64 =
        phi.entries.iter().map(|(&(a, b), &v)| column_sum[&a] * v * spec.impurity_amplitude(b)).sum();
    Ok(total * j)
}

/// Generator `φ_β^α` of the fluctuation algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Generator {
    pub upper: usize,
    pub lower: usize,
}

impl Generator {
    pub fn new(upper: usize, lower: usize) -> Self {
        Self { upper, lower }
    }
}

/// `−i{φ_β^α, φ_δ^γ}` as a combination of generators plus a central scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketCoefficients<T> {
    pub terms: Vec<(Generator, T)>,
    pub central: T,
}

/// `−i{φ_β^α, φ_δ^γ} = δ_β^γ φ_δ^α − δ_δ^α φ_β^γ + (μ_α − μ_γ) δ_δ^α δ_β^γ`.
pub fn bracket_coefficients<T: Num + Clone>(x: Generator, y: Generator, mu: &[T]) -> BracketCoefficients<T> {
    let (a, b, c, d) = (x.upper, x.lower, y.upper, y.lower);
    let mut acc: BTreeMap<Generator, T> = BTreeMap::new();
    if b == c {
        let e = acc.entry(Generator::new(a, d)).or_insert_with(T::zero);
        *e = e.clone() + T::one();
    }
    if d == a {
        let e = acc.entry(Generator::new(c, b)).or_insert_with(T::zero);
        *e = e.clone() - T::one();
    }
    let central = if d == a && b == c { mu[a].clone() - mu[c].clone() } else { T::zero() };
    BracketCoefficients { terms: acc.into_iter().filter(|(_, v)| !v.is_zero()).collect(), central }
}

/// Element of the centrally extended algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraElement<T> {
    pub coeffs: BTreeMap<Generator, T>,
    pub central: T,
}

impl<T: Num + Clone> AlgebraElement<T> {
    pub fn zero() -> Self {
        Self { coeffs: BTreeMap::new(), central: T::zero() }
    }

    pub fn generator(g: Generator) -> Self {
        Self { coeffs: BTreeMap::from([(g, T::one())]), central: T::zero() }
    }

    pub fn is_zero(&self) -> bool {
        self.central.is_zero() && self.coeffs.values().all(|v| v.is_zero())
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (g, v) in &other.coeffs {
            let e = out.coeffs.entry(*g).or_insert_with(T::zero);
            *e = e.clone() + v.clone();
        }
        out.central = out.central + other.central.clone();
        out.coeffs.retain(|_, v| !v.is_zero());
        out
    }

    /// Bilinear extension of [`bracket_coefficients`]; the central element
    /// brackets to zero with everything.
    pub fn bracket(&self, other: &Self, mu: &[T]) -> Self {
        let mut out = Self::zero();
        for (x, cx) in &self.coeffs {
            for (y, cy) in &other.coeffs {
                let w = cx.clone() * cy.clone();
                let bc = bracket_coefficients(*x, *y, mu);
                for (g, v) in bc.terms {
                    let e = out.coeffs.entry(g).or_insert_with(T::zero);
                    *e = e.clone() + w.clone() * v;
                }
                out.central = out.central + w * bc.central;
            }
        }
        out.coeffs.retain(|_, v| !v.is_zero());
        out
    }
}

/// How the nonlinear flow obtains `g` at each instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CouplingMode {
    /// `g = J Φ_d^•`.
    SelfConsistent { j: f64 },
    /// `g` held fixed; the flow is then linear in `Φ`.
    Frozen { g: Complex64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub energy: f64,
    pub phi_dd: f64,
    /// Largest per-step defect removed by re-Hermitization since the previous sample.
    pub hermiticity_defect: f64,
    /// `max_i |λ_i(Φ(t)) − λ_i(Φ₀)|` over sorted eigenvalues.
    pub spectral_drift: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    pub states: Vec<BilinearMatrix>,
}

impl Trajectory {
    pub fn last(&self) -> &BilinearMatrix {
        self.states.last().expect("trajectory always holds the initial state")
    }
}

fn sorted_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut e: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

fn flow_energy(phi: &BilinearMatrix, grid: &MomentumGrid, mode: CouplingMode) -> f64 {
    match mode {
        CouplingMode::SelfConsistent { j } => kondo_energy(phi, grid, j),
        CouplingMode::Frozen { g } => {
            let h = assemble_h(grid, g);
            (h.matrix().transpose().component_mul(phi.matrix())).sum().re
        }
    }
}

fn rhs(phi: &BilinearMatrix, grid: &MomentumGrid, mode: CouplingMode) -> CMatrix {
    match mode {
        CouplingMode::SelfConsistent { j } => eom_rhs(phi, grid, j).into_matrix(),
        CouplingMode::Frozen { g } => eom_rhs_frozen(phi, grid, g).into_matrix(),
    }
}

/// Classic RK4 for `dΦ/dt = i[h(g), Φ]`, re-Hermitizing after every step.
///
/// Samples (and stored states) are taken every `stride` steps and at `t_final`.
pub fn nonlinear_evolve(
    phi0: &BilinearMatrix,
    grid: &MomentumGrid,
    mode: CouplingMode,
    t_final: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(KondoError::Domain(format!("dt must be positive, got {dt}")));
    }
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(KondoError::Domain(format!("t_final must be non-negative, got {t_final}")));
    }
    if stride == 0 {
        return Err(KondoError::Domain("stride must be at least 1".into()));
    }
    if let CouplingMode::SelfConsistent { j } = mode {
        if !(j >= 0.0 && j.is_finite()) {
            return Err(KondoError::Domain(format!("J must be non-negative, got {j}")));
        }
    }
    let n = grid.dim();
    if phi0.dim() != n {
        return Err(KondoError::Domain(format!("state has dimension {}, grid needs {n}", phi0.dim())));
    }
    let initial_defect = phi0.hermiticity_defect();
    if initial_defect > HERMITICITY_TOL * max_norm(phi0.matrix()).max(1.0) {
        return Err(KondoError::Hermiticity { defect: initial_defect, limit: HERMITICITY_TOL, t: 0.0 });
    }
    let d = grid.impurity_index();
    let eig0 = sorted_eigenvalues(phi0.matrix());
    let sample = |phi: &BilinearMatrix, t: f64, defect: f64| {
        let drift = sorted_eigenvalues(phi.matrix()).iter().zip(&eig0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        TrajectorySample {
            t,
            energy: flow_energy(phi, grid, mode),
            phi_dd: phi.matrix()[(d, d)].re,
            hermiticity_defect: defect,
            spectral_drift: drift,
        }
    };

    let steps = (t_final / dt).round() as usize;
    let mut phi = phi0.clone();
    let mut samples = vec![sample(&phi, 0.0, 0.0)];
    let mut states = vec![phi.clone()];
    let mut window_defect: f64 = 0.0;
    let half = Complex64::new(0.5 * dt, 0.0);
    let full = Complex64::new(dt, 0.0);
    let sixth = Complex64::new(dt / 6.0, 0.0);
    let two = Complex64::new(2.0, 0.0);
    for step in 1..=steps {
        let x = phi.matrix();
        let k1 = rhs(&phi, grid, mode);
        let y2 = BilinearMatrix::new(grid, x + &k1 * half)?;
        let k2 = rhs(&y2, grid, mode);
        let y3 = BilinearMatrix::new(grid, x + &k2 * half)?;
        let k3 = rhs(&y3, grid, mode);
        let y4 = BilinearMatrix::new(grid, x + &k3 * full)?;
        let k4 = rhs(&y4, grid, mode);
        let next = x + (k1 + (k2 + k3) * two + k4) * sixth;
        let t = step as f64 * dt;
        let defect = hermiticity_defect(&next);
        if !defect.is_finite() || defect > STEP_DEFECT_LIMIT {
            return Err(KondoError::Hermiticity { defect, limit: STEP_DEFECT_LIMIT, t });
        }
        phi = BilinearMatrix::new(grid, next)?;
        phi.hermitize();
        window_defect = window_defect.max(defect);
        if step % stride == 0 || step == steps {
            samples.push(sample(&phi, t, window_defect));
            states.push(phi.clone());
            window_defect = 0.0;
        }
    }
    Ok(Trajectory { samples, states })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Excitation {
    /// Root indices `α` lifted above the vacuum.
    pub particles: Vec<usize>,
    /// Root indices `α` emptied below the vacuum.
    pub holes: Vec<usize>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcitationSpectrum {
    pub n_spins: usize,
    pub excitations: Vec<Excitation>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Level {
    alpha: usize,
    cost: f64,
}

fn pair_order(a: &Excitation, b: &Excitation) -> Ordering {
    a.energy
        .total_cmp(&b.energy)
        .then_with(|| a.particles.len().cmp(&b.particles.len()))
        .then_with(|| a.holes.cmp(&b.holes))
        .then_with(|| a.particles.cmp(&b.particles))
}

#[derive(PartialEq)]
struct HeapItem {
    cost: f64,
    h: usize,
    p: usize,
}

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.h.cmp(&self.h)).then_with(|| other.p.cmp(&self.p))
    }
}

/// Cost of the `m`-th cheapest single particle-hole pair (1-based), by
/// best-first search over the two sorted level lists.
fn mth_pair_cost(holes: &[Level], particles: &[Level], zero: usize, m: usize) -> Option<f64> {
    let mut heap = BinaryHeap::new();
    let mut seen = BTreeSet::new();
    heap.push(HeapItem { cost: holes[0].cost + particles[0].cost, h: 0, p: 0 });
    seen.insert((0, 0));
    let mut count = 0;
    let mut last = None;
    while let Some(item) = heap.pop() {
        if holes[item.h].alpha != zero || particles[item.p].alpha != zero {
            count += 1;
            last = Some(item.cost);
            if count == m {
                return last;
            }
        }
        for (h, p) in [(item.h + 1, item.p), (item.h, item.p + 1)] {
            if h < holes.len() && p < particles.len() && seen.insert((h, p)) {
                heap.push(HeapItem { cost: holes[h].cost + particles[p].cost, h, p });
            }
        }
    }
    last
}

/// The `m` lowest excitations of `(1/N) Σ_α ν_α :a†a:` over the normal-ordered
/// vacuum, including multi-pair states up to the `m`-th single-pair energy.
///
/// The zero mode can serve as a hole when `μ₀ > 0` and as a particle when
/// `μ₀ < 1`, but not both within one configuration. Every level is used at
/// most once.
pub fn quasiparticle_excitations(spectrum: &Spectrum, xi: f64, n_spins: usize, m: usize) -> Result<ExcitationSpectrum> {
    if n_spins == 0 {
        return Err(KondoError::Domain("number of spin values must be at least 1".into()));
    }
    if m == 0 {
        return Err(KondoError::Domain("number of excitations must be at least 1".into()));
    }
    let occ = occupations(spectrum, xi)?;
    let nu = spectrum.roots();
    let zero = spectrum.zero_index();
    let mu0 = occ.zero_mode();

    let mut holes: Vec<Level> = (0..zero).map(|a| Level { alpha: a, cost: -nu[a] }).collect();
    let mut particles: Vec<Level> = (zero + 1..nu.len()).map(|a| Level { alpha: a, cost: nu[a] }).collect();
    if mu0 > 0.0 {
        holes.push(Level { alpha: zero, cost: 0.0 });
    }
    if mu0 < 1.0 {
        particles.push(Level { alpha: zero, cost: 0.0 });
    }
    let by_cost = |x: &Level, y: &Level| x.cost.total_cmp(&y.cost).then(x.alpha.cmp(&y.alpha));
    holes.sort_by(by_cost);
    particles.sort_by(by_cost);
    if holes.is_empty() || particles.is_empty() {
        return Ok(ExcitationSpectrum { n_spins, excitations: Vec::new() });
    }
    let Some(budget) = mth_pair_cost(&holes, &particles, zero, m) else {
        return Ok(ExcitationSpectrum { n_spins, excitations: Vec::new() });
    };
    let budget = budget * (1.0 + 1e-12);

    // Depth-first over hole subsets, then particle subsets of equal size.
    let mut found = Vec::new();
    let mut hole_stack = Vec::new();
    enumerate_holes(&holes, &particles, zero, 0, 0.0, budget, &mut hole_stack, &mut found);

    let scale = 1.0 / n_spins as f64;
    let mut excitations: Vec<Excitation> = found
        .into_iter()
        .map(|(mut h, mut p): (Vec<usize>, Vec<usize>)| {
            h.sort_unstable();
            p.sort_unstable();
            let energy = (p.iter().map(|&a| nu[a]).sum::<f64>() - h.iter().map(|&a| nu[a]).sum::<f64>()) * scale;
            Excitation { particles: p, holes: h, energy }
        })
        .collect();
    excitations.sort_by(pair_order);
    excitations.truncate(m);
    Ok(ExcitationSpectrum { n_spins, excitations })
}

#[allow(clippy::too_many_arguments)]
fn enumerate_holes(
    holes: &[Level],
    particles: &[Level],
    zero: usize,
    start: usize,
    cost: f64,
    budget: f64,
    chosen: &mut Vec<usize>,
    out: &mut Vec<(Vec<usize>, Vec<usize>)>,
) {
    if !chosen.is_empty() {
        let mut pstack = Vec::new();
        enumerate_particles(particles, zero, chosen, 0, cost, budget, &mut pstack, out);
    }
    if chosen.len() >= particles.len() {
        return;
    }
    for i in start..holes.len() {
        let c = cost + holes[i].cost;
        if c > budget {
            break;
        }
        chosen.push(holes[i].alpha);
        enumerate_holes(holes, particles, zero, i + 1, c, budget, chosen, out);
        chosen.pop();
    }
}

#[allow(clippy::too_many_arguments)]
fn enumerate_particles(
    particles: &[Level],
    zero: usize,
    holes: &[usize],
    start: usize,
    cost: f64,
    budget: f64,
    chosen: &mut Vec<usize>,
    out: &mut Vec<(Vec<usize>, Vec<usize>)>,
) {
    if chosen.len() == holes.len() {
        out.push((holes.to_vec(), chosen.clone()));
        return;
    }
    let zero_is_hole = holes.contains(&zero);
    for i in start..particles.len() {
        let c = cost + particles[i].cost;
        if c > budget {
            break;
        }
        if zero_is_hole && particles[i].alpha == zero {
            continue;
        }
        chosen.push(particles[i].alpha);
        enumerate_particles(particles, zero, holes, i + 1, c, budget, chosen, out);
        chosen.pop();
    }
}
