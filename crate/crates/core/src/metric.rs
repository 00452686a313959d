//! Distances between p-value null distributions.
//!
//! `delta(F, G)` adds the number of jump points that the two CDFs do not
//! share to the sup-norm distance between them. For the binomial test and
//! Fisher's exact test the null CDF is a function of the conditioning
//! statistic alone, and the max-abs distance between statistics serves as a
//! cheap stand-in ([`marginal_distance`]).

use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteCdf;
use crate::error::{Error, Result};
use crate::exact_tests::MarginalVector;

/// Default relative tolerance for treating two support points as equal.
pub const DEFAULT_SUPPORT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    /// Size of the symmetric difference of the two supports.
    pub jump_count_diff: usize,
    /// `sup_t |F(t) - G(t)|`.
    pub sup_norm: f64,
}

impl MetricValue {
    pub fn total(&self) -> f64 {
        self.jump_count_diff as f64 + self.sup_norm
    }
}

/// Computes `delta` with a configurable support tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfMetric {
    pub support_tolerance: f64,
}

impl Default for CdfMetric {
    fn default() -> Self {
        Self {
            support_tolerance: DEFAULT_SUPPORT_TOLERANCE,
        }
    }
}

impl CdfMetric {
    pub fn with_tolerance(support_tolerance: f64) -> Self {
        Self { support_tolerance }
    }

    pub fn delta(&self, f: &DiscreteCdf, g: &DiscreteCdf) -> MetricValue {
        MetricValue {
            jump_count_diff: support_symmetric_difference_count(f, g, self.support_tolerance),
            sup_norm: sup_norm_diff(f, g),
        }
    }
}

/// `|S_f △ S_g|`. Points are matched one-to-one in a single sorted sweep;
/// `a` and `b` match when `|a - b| <= tol * max(|a|, |b|)`.
pub fn support_symmetric_difference_count(f: &DiscreteCdf, g: &DiscreteCdf, tol: f64) -> usize {
    let (a, b) = (f.support(), g.support());
    let (mut i, mut j, mut matched) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let (x, y) = (a[i], b[j]);
        if (x - y).abs() <= tol * x.abs().max(y.abs()) {
            matched += 1;
            i += 1;
            j += 1;
        } else if x < y {
            i += 1;
        } else {
            j += 1;
        }
    }
    a.len() + b.len() - 2 * matched
}

/// Sup-norm distance of two step CDFs, evaluated at the union of jumps.
pub fn sup_norm_diff(f: &DiscreteCdf, g: &DiscreteCdf) -> f64 {
    let (a, b) = (f.support(), g.support());
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut gb) = (0.0_f64, 0.0_f64);
    let mut worst = 0.0_f64;
    while i < a.len() || j < b.len() {
        let t = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= t {
            fa += f.masses()[i];
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            gb += g.masses()[j];
            j += 1;
        }
        worst = worst.max((fa - gb).abs());
    }
    worst.min(1.0)
}

/// `delta` at the default support tolerance.
pub fn delta(f: &DiscreteCdf, g: &DiscreteCdf) -> MetricValue {
    CdfMetric::default().delta(f, g)
}

/// The statistic a conditional test conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditioningStatistic {
    /// Total count of a Poisson pair.
    Total(u64),
    /// Margins of a 2x2 table.
    Margins(MarginalVector),
}

impl ConditioningStatistic {
    /// Scalar used for quantile grouping: the total count, or the first
    /// column total of a table.
    pub fn scalar(&self) -> f64 {
        match self {
            ConditioningStatistic::Total(t) => *t as f64,
            ConditioningStatistic::Margins(m) => m.m_obs() as f64,
        }
    }
}

/// Max-abs entrywise distance between two conditioning statistics.
pub fn marginal_distance(s: &ConditioningStatistic, t: &ConditioningStatistic) -> Result<f64> {
    match (s, t) {
        (ConditioningStatistic::Total(a), ConditioningStatistic::Total(b)) => {
            Ok(a.abs_diff(*b) as f64)
        }
        (ConditioningStatistic::Margins(a), ConditioningStatistic::Margins(b)) => {
            Ok(a.as_array()
                .iter()
                .zip(b.as_array())
                .map(|(x, y)| x.abs_diff(y))
                .max()
                .unwrap_or(0) as f64)
        }
        _ => Err(Error::InvalidComparison),
    }
}
