//! Momentum grids and single-particle dispersion relations.
//!
//! Momenta are the nonzero integers `-Λ..=-1, 1..=Λ`. Only the positive branch
//! of the dispersion is stored; `ω_{-k} = -ω_k` holds by construction.
//!
//! All energies are in units of the asymptotic slope `c` unless a different
//! slope is given explicitly; the default slope is 1.

use serde::{Deserialize, Serialize};

use crate::error::{KondoError, Result};

/// Relative tolerance on `ω_Λ / Λ ≈ c` before a warning is attached.
pub const LINEARITY_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumGrid {
    lambda: usize,
    slope: f64,
    positive: Vec<f64>,
    warning: Option<String>,
}

impl MomentumGrid {
    /// Exactly linear dispersion `ω_k = c k`.
    pub fn linear(lambda: usize, slope: f64) -> Result<Self> {
        if lambda == 0 {
            return Err(KondoError::Domain("cutoff lambda must be at least 1".into()));
        }
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(KondoError::Domain(format!("slope must be positive, got {slope}")));
        }
        let positive = (1..=lambda).map(|k| slope * k as f64).collect();
        Ok(Self { lambda, slope, positive, warning: None })
    }

    /// Grid from a table of positive energies `ω_1 < ω_2 < … < ω_Λ`.
    ///
    /// The table must be strictly increasing and positive. If `ω_Λ / Λ`
    /// differs from `slope` by more than 10% the grid is still built but
    /// carries a warning (see [`MomentumGrid::warning`]).
    pub fn custom(positive_energies: &[f64], slope: f64) -> Result<Self> {
        if positive_energies.is_empty() {
            return Err(KondoError::Domain("energy table is empty".into()));
        }
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(KondoError::Domain(format!("slope must be positive, got {slope}")));
        }
        for (i, &w) in positive_energies.iter().enumerate() {
            if !w.is_finite() {
                return Err(KondoError::Domain(format!("omega_{} is not finite", i + 1)));
            }
            if w == 0.0 {
                return Err(KondoError::ZeroEnergy { k: i + 1 });
            }
            if w < 0.0 {
                return Err(KondoError::Domain(format!(
                    "omega_{} = {w} must be positive on the positive branch",
                    i + 1
                )));
            }
        }
        for (i, pair) in positive_energies.windows(2).enumerate() {
            if pair[0] == pair[1] {
                return Err(KondoError::Degenerate { k: i + 1, l: i + 2, value: pair[0] });
            }
            if pair[0] > pair[1] {
                return Err(KondoError::NotMonotone { k: i + 2, prev: pair[0], next: pair[1] });
            }
        }
        let lambda = positive_energies.len();
        let ratio = positive_energies[lambda - 1] / lambda as f64;
        let warning = ((ratio - slope).abs() > LINEARITY_TOLERANCE * slope).then(|| {
            format!(
                "omega_Lambda / Lambda = {ratio} deviates from slope {slope} by more than {}%",
                LINEARITY_TOLERANCE * 100.0
            )
        });
        Ok(Self { lambda, slope, positive: positive_energies.to_vec(), warning })
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    /// Number of conduction states, `2Λ`.
    pub fn n_conduction(&self) -> usize {
        2 * self.lambda
    }

    /// Dimension of the one-particle space including the impurity, `2Λ+1`.
    pub fn dim(&self) -> usize {
        2 * self.lambda + 1
    }

    /// Basis position of the impurity state (always last).
    pub fn impurity_index(&self) -> usize {
        2 * self.lambda
    }

    /// Positive-branch energies `ω_1..ω_Λ`.
    pub fn positive_energies(&self) -> &[f64] {
        &self.positive
    }

    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    /// `ω_k` for a signed momentum `k`. Panics if `k == 0` or `|k| > Λ`.
    pub fn energy(&self, k: i64) -> f64 {
        assert!(k != 0 && k.unsigned_abs() as usize <= self.lambda, "momentum {k} outside grid");
        let w = self.positive[k.unsigned_abs() as usize - 1];
        if k < 0 {
            -w
        } else {
            w
        }
    }

    /// Signed momenta in basis order `-Λ..=-1, 1..=Λ`.
    pub fn momenta(&self) -> impl Iterator<Item = i64> + '_ {
        let l = self.lambda as i64;
        (-l..=-1).chain(1..=l)
    }

    /// Conduction energies in basis order.
    pub fn energies(&self) -> Vec<f64> {
        self.momenta().map(|k| self.energy(k)).collect()
    }

    /// Basis position of momentum `k`.
    pub fn index_of(&self, k: i64) -> usize {
        assert!(k != 0 && k.unsigned_abs() as usize <= self.lambda, "momentum {k} outside grid");
        let l = self.lambda as i64;
        if k < 0 {
            (k + l) as usize
        } else {
            (k + l - 1) as usize
        }
    }

    /// Momentum stored at a conduction basis position.
    pub fn momentum_at(&self, index: usize) -> i64 {
        assert!(index < 2 * self.lambda, "index {index} is not a conduction state");
        let l = self.lambda as i64;
        let i = index as i64;
        if i < l {
            i - l
        } else {
            i - l + 1
        }
    }

    /// True when the grid is exactly `ω_k = c k`.
    pub fn is_linear(&self) -> bool {
        self.positive.iter().enumerate().all(|(i, &w)| w == self.slope * (i + 1) as f64)
    }
}

/// Parse a key-value grid description.
///
/// Recognised keys (one per line, `key = value`, `#` starts a comment):
///
/// * `lambda` - cutoff, required unless `energies` is given
/// * `slope` - asymptotic velocity, default 1
/// * `energies` - comma or whitespace separated positive branch `ω_1..ω_Λ`
pub fn parse_grid_config(text: &str) -> Result<MomentumGrid> {
    let mut lambda: Option<usize> = None;
    let mut slope = 1.0;
    let mut energies: Option<Vec<f64>> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| KondoError::Domain(format!("line {}: expected `key = value`", lineno + 1)))?;
        let value = value.trim();
        match key.trim() {
            "lambda" => {
                lambda = Some(
                    value
                        .parse()
                        .map_err(|_| KondoError::Domain(format!("line {}: bad lambda `{value}`", lineno + 1)))?,
                )
            }
            "slope" => {
                slope = value
                    .parse()
                    .map_err(|_| KondoError::Domain(format!("line {}: bad slope `{value}`", lineno + 1)))?
            }
            "energies" => energies = Some(parse_energy_list(value)?),
            other => return Err(KondoError::Domain(format!("line {}: unknown key `{other}`", lineno + 1))),
        }
    }
    match (lambda, energies) {
        (_, Some(e)) => {
            if let Some(l) = lambda {
                if l != e.len() {
                    return Err(KondoError::Domain(format!("lambda = {l} but {} energies given", e.len())));
                }
            }
            MomentumGrid::custom(&e, slope)
        }
        (Some(l), None) => MomentumGrid::linear(l, slope),
        (None, None) => Err(KondoError::Domain("grid config needs `lambda` or `energies`".into())),
    }
}

/// Parse a list of reals separated by commas and/or whitespace.
pub fn parse_energy_list(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| KondoError::Domain(format!("bad energy value `{s}`"))))
        .collect()
}
