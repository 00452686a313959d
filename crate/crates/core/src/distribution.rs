//! Step CDFs of discrete p-values.
//!
//! A [`DiscreteCdf`] stores the jump points (the attainable p-values) in
//! strictly increasing order together with the probability mass at each
//! jump. Evaluation is right-continuous.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a distribution.
pub const MASS_TOLERANCE: f64 = 1e-10;

/// Relative tolerance under which two p-values are the same support atom.
pub const AGGREGATION_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCdf {
    support: Vec<f64>,
    mass: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscreteCdf {
    pub fn new(support: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidCdf("empty support".into()));
        }
        if support.len() != mass.len() {
            return Err(Error::InvalidCdf(format!(
                "support has {} points but {} masses were given",
                support.len(),
                mass.len()
            )));
        }
        for (i, &s) in support.iter().enumerate() {
            if !s.is_finite() || s <= 0.0 || s > 1.0 {
                return Err(Error::InvalidCdf(format!(
                    "support point {s} at position {i} is outside (0, 1]"
                )));
            }
            if i > 0 && s <= support[i - 1] {
                return Err(Error::InvalidCdf(format!(
                    "support is not strictly increasing at position {i}"
                )));
            }
        }
        if let Some(bad) = mass.iter().find(|&&w| !(w.is_finite() && w > 0.0)) {
            return Err(Error::InvalidCdf(format!("non-positive mass {bad}")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidCdf(format!("masses sum to {total}, not 1")));
        }
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = mass
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        // the top of the staircase is exactly one
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(Self {
            support,
            mass,
            cumulative,
        })
    }

    /// Builds a distribution from unordered `(p-value, mass)` atoms, merging
    /// p-values that agree to within [`AGGREGATION_TOLERANCE`] into the
    /// largest of them.
    pub fn from_atoms(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut mass: Vec<f64> = Vec::with_capacity(atoms.len());
        for (p, w) in atoms {
            match support.last() {
                Some(&key) if same_atom(key, p) => {
                    *support.last_mut().unwrap() = p;
                    *mass.last_mut().unwrap() += w;
                }
                _ => {
                    support.push(p);
                    mass.push(w);
                }
            }
        }
        Self::new(support, mass)
    }

    /// The point mass at 1, the null distribution of a hypothesis that can
    /// never be rejected.
    pub fn degenerate() -> Self {
        Self {
            support: vec![1.0],
            mass: vec![1.0],
            cumulative: vec![1.0],
        }
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// `P(p <= t)`.
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.support.partition_point(|&s| s <= t);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    /// Largest support point not exceeding `t`.
    pub fn largest_atom_at_most(&self, t: f64) -> Option<f64> {
        largest_at_most(&self.support, t)
    }
}

/// Largest element of a sorted slice that does not exceed `t`.
pub fn largest_at_most(sorted: &[f64], t: f64) -> Option<f64> {
    let idx = sorted.partition_point(|&s| s <= t);
    if idx == 0 {
        None
    } else {
        Some(sorted[idx - 1])
    }
}

pub(crate) fn same_atom(a: f64, b: f64) -> bool {
    (a - b).abs() <= AGGREGATION_TOLERANCE * a.abs().max(b.abs())
}
