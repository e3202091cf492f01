//! Command-line front end.
//!
//! Every run writes its resolved configuration alongside the data: CSV output
//! starts with a `# config: {...}` line, JSON output carries a `config` key.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::condensate::{condensate_profile, occupations, psi_full, psi_residue, Dispersion, ProfileSource};
use crate::dynamics::{nonlinear_evolve, quasiparticle_excitations, CouplingMode};
use crate::error::KondoError;
use crate::grid::{parse_energy_list, parse_grid_config, MomentumGrid};
use crate::hamiltonian::{assemble_h, commutator, max_norm, BilinearMatrix, CMatrix};
use crate::oracle::{dense_diagonalize, ground_state_projector};
use crate::renorm::{chi1, chi1_deriv, chi1_roots, j_inverse_finite, running_coupling, solve_g_from_j};
use crate::spectrum::Spectrum;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Roots of the characteristic function with normalizations and impurity weights
    Spectrum,
    /// Ground-state condensate profile Ψ_d^k
    Condensate,
    /// Bare coupling J and the asymptotic-freedom ratio over a sweep of cutoffs
    RunningCoupling,
    /// Nonlinear matrix flow from a perturbed ground state
    Evolve,
    /// Lowest finite-N quasi-particle excitations
    Excitations,
    /// Analytic routes against dense diagonalization
    Selftest,
}

#[derive(Debug, Parser)]
#[command(name = "kondo", version, about = "Large-N Kondo impurity: spectrum, condensate, running coupling, dynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Momentum cutoff Λ (finite grid)
    #[arg(long, global = true, conflicts_with = "lambda_cont", value_parser = clap::value_parser!(u64).range(1..))]
    pub lambda: Option<u64>,
    /// Use the Λ → ∞ continuum
    #[arg(long, global = true)]
    pub lambda_cont: bool,
    /// Dispersion slope c in ω_k = c k
    #[arg(long, global = true, default_value_t = 1.0)]
    pub slope: f64,
    /// File with the positive energies ω_1..ω_Λ
    #[arg(long, global = true, conflicts_with_all = ["grid", "lambda", "lambda_cont"])]
    pub energies: Option<PathBuf>,
    /// Grid config file (`lambda`, `slope`, `energies` keys)
    #[arg(long, global = true, conflicts_with_all = ["lambda", "lambda_cont"])]
    pub grid: Option<PathBuf>,
    /// Renormalized coupling as MOD[:PHASE_DEGREES]
    #[arg(long, global = true, conflicts_with = "j", allow_hyphen_values = true)]
    pub g: Option<String>,
    /// Bare coupling J; g is obtained by inverse solve on the finite grid
    #[arg(long, global = true)]
    pub j: Option<f64>,
    /// Zero-mode occupation offset ξ ∈ (−1/2, 1/2]
    #[arg(long, global = true, default_value_t = 0.0, allow_hyphen_values = true)]
    pub xi: f64,
    /// Largest |k| in profiles, or number of positive continuum roots
    #[arg(long, global = true, default_value_t = 20)]
    pub kmax: usize,
    #[arg(long, global = true, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, global = true, default_value_t = 10.0)]
    pub t_final: f64,
    /// Emit every n-th time step
    #[arg(long, global = true, default_value_t = 100)]
    pub stride: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Size of the random Hermitian perturbation added to Ψ
    #[arg(long, global = true, default_value_t = 1e-2)]
    pub perturb: f64,
    /// Number of spin values N
    #[arg(long, global = true, default_value_t = 1)]
    pub n_spins: usize,
    /// Number of excitations to list
    #[arg(long, global = true, default_value_t = 10)]
    pub top: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file (stdout if absent)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Rerun the configuration embedded in a previous output
    #[arg(long, global = true, conflicts_with_all = ["lambda", "lambda_cont", "energies", "grid", "g", "j"])]
    pub replay: Option<PathBuf>,
}

/// Coupling as given on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CouplingSpec {
    G { modulus: f64, phase_deg: f64 },
    J { j: f64 },
}

/// Grid choice after reading any input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridSpec {
    Continuum { slope: f64 },
    Linear { lambda: usize, slope: f64 },
    Custom { slope: f64, energies: Vec<f64> },
}

/// Fully resolved run configuration; serialized into every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub grid: GridSpec,
    pub coupling: Option<CouplingSpec>,
    pub xi: f64,
    pub kmax: usize,
    pub dt: f64,
    pub t_final: f64,
    pub stride: usize,
    pub seed: u64,
    pub perturb: f64,
    pub n_spins: usize,
    pub top: usize,
    pub format: Format,
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical { operation: &'static str, source: KondoError },
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numerical { operation, source } => write!(f, "{operation} failed: {source}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_NUMERICAL,
        }
    }
}

fn numerical(operation: &'static str) -> impl FnOnce(KondoError) -> CliError {
    move |source| CliError::Numerical { operation, source }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `MOD` or `MOD:PHASE` (phase in degrees).
pub fn parse_coupling(text: &str) -> Result<(f64, f64), String> {
    let (m, p) = match text.split_once(':') {
        Some((m, p)) => (m, Some(p)),
        None => (text, None),
    };
    let modulus: f64 = m.trim().parse().map_err(|_| format!("bad coupling modulus `{m}`"))?;
    let phase: f64 = match p {
        Some(p) => p.trim().parse().map_err(|_| format!("bad coupling phase `{p}`"))?,
        None => 0.0,
    };
    if !(modulus >= 0.0 && modulus.is_finite()) || !phase.is_finite() {
        return Err(format!("coupling `{text}` must have a finite non-negative modulus"));
    }
    Ok((modulus, phase))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

impl RunConfig {
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        if !(cli.slope > 0.0 && cli.slope.is_finite()) {
            return Err(usage(format!("--slope must be positive, got {}", cli.slope)));
        }
        if !(cli.xi > -0.5 && cli.xi <= 0.5) {
            return Err(usage(format!("--xi must lie in (-1/2, 1/2], got {}", cli.xi)));
        }
        let grid = if let Some(path) = &cli.grid {
            let g = parse_grid_config(&read_file(path)?).map_err(|e| usage(e.to_string()))?;
            grid_spec_of(&g)
        } else if let Some(path) = &cli.energies {
            let e = parse_energy_list(&read_file(path)?).map_err(|e| usage(e.to_string()))?;
            let g = MomentumGrid::custom(&e, cli.slope).map_err(|e| usage(e.to_string()))?;
            grid_spec_of(&g)
        } else if let Some(l) = cli.lambda {
            GridSpec::Linear { lambda: l as usize, slope: cli.slope }
        } else {
            GridSpec::Continuum { slope: cli.slope }
        };
        let coupling = match (&cli.g, cli.j) {
            (Some(text), None) => {
                let (modulus, phase_deg) = parse_coupling(text).map_err(usage)?;
                Some(CouplingSpec::G { modulus, phase_deg })
            }
            (None, Some(j)) => {
                if !(j > 0.0 && j.is_finite()) {
                    return Err(usage(format!("--j must be positive, got {j}")));
                }
                Some(CouplingSpec::J { j })
            }
            (None, None) => None,
            (Some(_), Some(_)) => return Err(usage("give exactly one of --g and --j")),
        };
        if cli.command != Command::Selftest && coupling.is_none() {
            return Err(usage("give exactly one of --g and --j"));
        }
        let finite_only = matches!(cli.command, Command::RunningCoupling | Command::Evolve | Command::Excitations);
        if finite_only && matches!(grid, GridSpec::Continuum { .. }) {
            return Err(usage("this subcommand needs a finite grid (--lambda, --energies or --grid)"));
        }
        if matches!(grid, GridSpec::Continuum { .. }) && matches!(coupling, Some(CouplingSpec::J { .. })) {
            return Err(usage("--j needs a finite grid; the continuum bare coupling vanishes"));
        }
        if cli.kmax == 0 {
            return Err(usage("--kmax must be at least 1"));
        }
        if cli.dt.is_nan() || cli.dt <= 0.0 || cli.t_final.is_nan() || cli.t_final < 0.0 || cli.stride == 0 {
            return Err(usage("--dt and --stride must be positive and --t-final non-negative"));
        }
        if cli.n_spins == 0 || cli.top == 0 {
            return Err(usage("--n-spins and --top must be at least 1"));
        }
        if !cli.perturb.is_finite() {
            return Err(usage("--perturb must be finite"));
        }
        Ok(Self {
            command: cli.command,
            grid,
            coupling,
            xi: cli.xi,
            kmax: cli.kmax,
            dt: cli.dt,
            t_final: cli.t_final,
            stride: cli.stride,
            seed: cli.seed,
            perturb: cli.perturb,
            n_spins: cli.n_spins,
            top: cli.top,
            format: cli.format,
            out: cli.out.clone(),
        })
    }

    fn finite_grid(&self) -> Result<MomentumGrid, CliError> {
        match &self.grid {
            GridSpec::Linear { lambda, slope } => {
                MomentumGrid::linear(*lambda, *slope).map_err(|e| usage(e.to_string()))
            }
            GridSpec::Custom { slope, energies } => {
                MomentumGrid::custom(energies, *slope).map_err(|e| usage(e.to_string()))
            }
            GridSpec::Continuum { .. } => Err(usage("a finite grid is required")),
        }
    }

    /// `g` from `--g`, or by inverse solve from `--j` on the finite grid.
    fn resolve_g(&self) -> Result<Complex64, CliError> {
        match self.coupling {
            Some(CouplingSpec::G { modulus, phase_deg }) => Ok(Complex64::from_polar(modulus, phase_deg.to_radians())),
            Some(CouplingSpec::J { j }) => {
                let grid = self.finite_grid()?;
                solve_g_from_j(&grid, j).map(|x| Complex64::new(x, 0.0)).map_err(numerical("inverse coupling solve"))
            }
            None => Err(usage("no coupling given")),
        }
    }
}

/// Recovers the configuration embedded in a CSV or JSON output.
pub fn embedded_config(text: &str) -> Result<RunConfig, CliError> {
    let value: Value = if let Some(rest) = text.strip_prefix("# config: ") {
        let line = rest.lines().next().unwrap_or("");
        serde_json::from_str(line).map_err(|e| usage(format!("bad config header: {e}")))?
    } else {
        let doc: Value = serde_json::from_str(text).map_err(|e| usage(format!("not a kondo output: {e}")))?;
        doc.get("config").cloned().ok_or_else(|| usage("output has no `config` key"))?
    };
    serde_json::from_value(value).map_err(|e| usage(format!("bad embedded config: {e}")))
}

fn grid_spec_of(g: &MomentumGrid) -> GridSpec {
    if g.is_linear() {
        GridSpec::Linear { lambda: g.lambda(), slope: g.slope() }
    } else {
        GridSpec::Custom { slope: g.slope(), energies: g.positive_energies().to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

/// Column table rendered as CSV or JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

/// 17 significant digits, `-0` printed as `0`.
pub fn format_number(x: f64) -> String {
    let x = if x == 0.0 { 0.0 } else { x };
    format!("{x:.16e}")
}

impl Table {
    fn new(columns: Vec<&'static str>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn to_csv(&self, config: &Value) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# config: {config}");
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Int(i) => i.to_string(),
                    Cell::Num(x) => format_number(*x),
                    Cell::Text(t) => t.clone(),
                })
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self, config: &Value) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut m = Map::new();
                for (name, c) in self.columns.iter().zip(row) {
                    let v = match c {
                        Cell::Int(i) => json!(i),
                        Cell::Num(x) => json!(if *x == 0.0 { 0.0 } else { *x }),
                        Cell::Text(t) => json!(t),
                    };
                    m.insert((*name).to_string(), v);
                }
                Value::Object(m)
            })
            .collect();
        let doc = json!({ "config": config, "columns": self.columns, "rows": rows });
        let mut s = serde_json::to_string_pretty(&doc).expect("table serializes");
        s.push('\n');
        s
    }
}

fn spectrum_table(cfg: &RunConfig, g: Complex64) -> Result<Table, CliError> {
    let mut t = Table::new(vec!["alpha", "nu", "Xprime", "impurity_weight"]);
    if let GridSpec::Continuum { slope } = cfg.grid {
        // Nonzero roots of X = ν χ₁ are the roots of χ₁; X'(0) = χ₁(0).
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        if g.norm_sqr() == 0.0 {
            rows.push((0.0, 1.0, 1.0));
            for k in 1..=cfg.kmax {
                let w = slope * k as f64;
                rows.push((w, 1.0, 0.0));
                rows.push((-w, 1.0, 0.0));
            }
        } else {
            let x0 = chi1(0.0, g, slope).map_err(numerical("continuum spectrum"))?;
            rows.push((0.0, x0, 1.0 / x0));
            for r in chi1_roots(g, slope, cfg.kmax).map_err(numerical("continuum spectrum"))? {
                let xp = r * chi1_deriv(r, g, slope).map_err(numerical("continuum spectrum"))?;
                rows.push((r, xp, 1.0 / xp));
                rows.push((-r, xp, 1.0 / xp));
            }
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (i, (nu, xp, w)) in rows.into_iter().enumerate() {
            t.rows.push(vec![Cell::Int(i as i64), Cell::Num(nu), Cell::Num(xp), Cell::Num(w)]);
        }
        return Ok(t);
    }
    let grid = cfg.finite_grid()?;
    let spec = Spectrum::find_roots(&grid, g).map_err(numerical("root finding"))?;
    for (a, (&nu, &xp)) in spec.roots().iter().zip(spec.xprime()).enumerate() {
        let w = spec.impurity_amplitude(a).powi(2);
        t.rows.push(vec![Cell::Int(a as i64), Cell::Num(nu), Cell::Num(xp), Cell::Num(w)]);
    }
    Ok(t)
}

fn condensate_table(cfg: &RunConfig, g: Complex64) -> Result<Table, CliError> {
    let source = match &cfg.grid {
        GridSpec::Continuum { slope } => {
            ProfileSource::Continuum(Dispersion::linear(*slope).map_err(numerical("dispersion"))?)
        }
        _ => ProfileSource::Finite(cfg.finite_grid()?),
    };
    let rows = condensate_profile(&source, g, cfg.xi, cfg.kmax).map_err(numerical("condensate profile"))?;
    // Even and odd parts are both parallel to g; report their real projections.
    let phase = if g.norm_sqr() == 0.0 { Complex64::new(1.0, 0.0) } else { g.conj() / g.norm() };
    let mut t = Table::new(vec!["k", "omega_k", "re_psi", "im_psi", "even_part", "odd_part"]);
    for r in rows {
        t.rows.push(vec![
            Cell::Int(r.k),
            Cell::Num(r.omega),
            Cell::Num(r.psi.re),
            Cell::Num(r.psi.im),
            Cell::Num((r.even * phase).re),
            Cell::Num((r.odd * phase).re),
        ]);
    }
    Ok(t)
}

/// Cutoffs `10, 100, …` below `top`, then `top` itself.
pub fn cutoff_sweep(top: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut l = 10;
    while l < top {
        out.push(l);
        l *= 10;
    }
    out.push(top);
    out
}

fn running_coupling_table(cfg: &RunConfig, g: Complex64) -> Result<Table, CliError> {
    let mut t = Table::new(vec!["lambda", "g_abs", "j_inverse", "j", "af_ratio"]);
    let (lambdas, dispersion) = match &cfg.grid {
        GridSpec::Linear { lambda, slope } => {
            (cutoff_sweep(*lambda), Dispersion::linear(*slope).map_err(numerical("dispersion"))?)
        }
        _ => {
            let grid = cfg.finite_grid()?;
            (vec![grid.lambda()], Dispersion::Finite(grid))
        }
    };
    for l in lambdas {
        let rc = running_coupling(l, g, &dispersion).map_err(numerical("running coupling"))?;
        t.rows.push(vec![
            Cell::Int(l as i64),
            Cell::Num(rc.g_abs),
            Cell::Num(rc.j_inverse),
            Cell::Num(rc.j),
            Cell::Num(rc.af_ratio),
        ]);
    }
    Ok(t)
}

/// Seeded random Hermitian matrix with entries of size at most `scale`.
pub fn random_hermitian(n: usize, scale: f64, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    (&a + a.adjoint()).scale(0.5 * scale)
}

fn evolve_table(cfg: &RunConfig, g: Complex64) -> Result<Table, CliError> {
    let grid = cfg.finite_grid()?;
    let j = match cfg.coupling {
        Some(CouplingSpec::J { j }) => j,
        _ if g.norm_sqr() == 0.0 => 0.0,
        _ => 1.0 / j_inverse_finite(&grid, g).map_err(numerical("self-consistent coupling"))?,
    };
    let spec = Spectrum::find_roots(&grid, g).map_err(numerical("root finding"))?;
    let occ = occupations(&spec, cfg.xi).map_err(numerical("occupations"))?;
    let psi = psi_full(&spec, &occ).map_err(numerical("ground state"))?;
    let phi0 = BilinearMatrix::new(&grid, psi.matrix() + random_hermitian(grid.dim(), cfg.perturb, cfg.seed))
        .map_err(numerical("initial state"))?;
    let traj = nonlinear_evolve(&phi0, &grid, CouplingMode::SelfConsistent { j }, cfg.t_final, cfg.dt, cfg.stride)
        .map_err(numerical("nonlinear evolution"))?;
    let mut t = Table::new(vec!["t", "energy", "phi_dd", "hermiticity_defect", "spectral_drift"]);
    for s in traj.samples {
        t.rows.push(vec![
            Cell::Num(s.t),
            Cell::Num(s.energy),
            Cell::Num(s.phi_dd),
            Cell::Num(s.hermiticity_defect),
            Cell::Num(s.spectral_drift),
        ]);
    }
    Ok(t)
}

fn join_indices(v: &[usize]) -> String {
    v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(";")
}

fn excitations_table(cfg: &RunConfig, g: Complex64) -> Result<Table, CliError> {
    let grid = cfg.finite_grid()?;
    let spec = Spectrum::find_roots(&grid, g).map_err(numerical("root finding"))?;
    let ex = quasiparticle_excitations(&spec, cfg.xi, cfg.n_spins, cfg.top).map_err(numerical("excitations"))?;
    let mut t = Table::new(vec!["rank", "energy", "particles", "holes"]);
    for (i, e) in ex.excitations.iter().enumerate() {
        t.rows.push(vec![
            Cell::Int(i as i64 + 1),
            Cell::Num(e.energy),
            Cell::Text(join_indices(&e.particles)),
            Cell::Text(join_indices(&e.holes)),
        ]);
    }
    Ok(t)
}

/// One row of the self-test matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SelftestRow {
    pub check: &'static str,
    pub lambda: usize,
    pub grid: &'static str,
    pub g: Complex64,
    pub xi: f64,
    pub error: f64,
    pub tolerance: f64,
}

impl SelftestRow {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

/// Irregular but strictly increasing test grid `ω_k = k + sin(1.7k)/4`.
pub fn irregular_grid(lambda: usize) -> crate::Result<MomentumGrid> {
    let e: Vec<f64> = (1..=lambda).map(|k| k as f64 + 0.25 * (1.7 * k as f64).sin()).collect();
    MomentumGrid::custom(&e, 1.0)
}

/// Roots, condensate and stationarity checked against the dense oracle.
pub fn selftest_rows() -> crate::Result<Vec<SelftestRow>> {
    const TOL: f64 = 1e-10;
    let couplings =
        [Complex64::new(0.0, 0.0), Complex64::new(0.3, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 3.0)];
    let mut rows = Vec::new();
    for lambda in [1usize, 2, 5, 10] {
        for (label, grid) in [("linear", MomentumGrid::linear(lambda, 1.0)?), ("custom", irregular_grid(lambda)?)] {
            for g in couplings {
                let spec = Spectrum::find_roots(&grid, g)?;
                let h = assemble_h(&grid, g);
                let dense = dense_diagonalize(&h)?;
                let root_err =
                    spec.roots().iter().zip(&dense.eigenvalues).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                rows.push(SelftestRow {
                    check: "roots",
                    lambda,
                    grid: label,
                    g,
                    xi: 0.0,
                    error: root_err,
                    tolerance: TOL,
                });
                for xi in [0.0, 0.25, 0.5] {
                    let occ = occupations(&spec, xi)?;
                    let cond = psi_residue(&spec, &occ);
                    let proj = ground_state_projector(&dense, &grid, xi)?;
                    let d = grid.impurity_index();
                    let psi_err = (0..grid.n_conduction())
                        .map(|i| (cond.column()[i] - proj.matrix()[(i, d)]).norm())
                        .fold(0.0, f64::max);
                    rows.push(SelftestRow {
                        check: "condensate",
                        lambda,
                        grid: label,
                        g,
                        xi,
                        error: psi_err,
                        tolerance: TOL,
                    });
                    let full = psi_full(&spec, &occ)?;
                    let comm = max_norm(&commutator(h.matrix(), full.matrix()));
                    rows.push(SelftestRow {
                        check: "stationary",
                        lambda,
                        grid: label,
                        g,
                        xi,
                        error: comm,
                        tolerance: TOL,
                    });
                }
            }
        }
    }
    Ok(rows)
}

fn selftest_table() -> Result<(Table, bool), CliError> {
    let rows = selftest_rows().map_err(numerical("selftest"))?;
    let mut t = Table::new(vec!["check", "lambda", "grid", "re_g", "im_g", "xi", "max_error", "tolerance", "status"]);
    let mut ok = true;
    for r in rows {
        ok &= r.passed();
        t.rows.push(vec![
            Cell::Text(r.check.into()),
            Cell::Int(r.lambda as i64),
            Cell::Text(r.grid.into()),
            Cell::Num(r.g.re),
            Cell::Num(r.g.im),
            Cell::Num(r.xi),
            Cell::Num(r.error),
            Cell::Num(r.tolerance),
            Cell::Text(if r.passed() { "pass" } else { "FAIL" }.into()),
        ]);
    }
    Ok((t, ok))
}

/// Runs one configuration and returns the rendered output with its exit code.
pub fn render(cfg: &RunConfig) -> Result<(String, i32), CliError> {
    let mut code = EXIT_OK;
    let table = match cfg.command {
        Command::Selftest => {
            let (t, ok) = selftest_table()?;
            if !ok {
                code = EXIT_NUMERICAL;
            }
            t
        }
        cmd => {
            let g = cfg.resolve_g()?;
            match cmd {
                Command::Spectrum => spectrum_table(cfg, g)?,
                Command::Condensate => condensate_table(cfg, g)?,
                Command::RunningCoupling => running_coupling_table(cfg, g)?,
                Command::Evolve => evolve_table(cfg, g)?,
                Command::Excitations => excitations_table(cfg, g)?,
                Command::Selftest => unreachable!(),
            }
        }
    };
    let config = serde_json::to_value(cfg).expect("config serializes");
    let text = match cfg.format {
        Format::Csv => table.to_csv(&config),
        Format::Json => table.to_json(&config),
    };
    Ok((text, code))
}

pub fn run(cfg: &RunConfig) -> Result<i32, CliError> {
    let (text, code) = render(cfg)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, text).map_err(CliError::Io)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(CliError::Io)?;
            out.flush().map_err(CliError::Io)?;
        }
    }
    Ok(code)
}

/// Parses arguments, runs, and maps every outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.replay {
        Some(path) => read_file(path).and_then(|t| embedded_config(&t)).and_then(|mut cfg| {
            if cfg.command != cli.command {
                return Err(usage(format!("{} holds a different subcommand", path.display())));
            }
            cfg.out = cli.out.clone();
            run(&cfg)
        }),
        None => RunConfig::from_cli(&cli).and_then(|cfg| run(&cfg)),
    };
    match result {
        Ok(code) => {
            if code != EXIT_OK {
                eprintln!("error: selftest reported failures");
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
