//! Partitioning hypotheses by the similarity of their null distributions.
//!
//! [`group_by_distances`] is the greedy metric-ball algorithm: repeatedly
//! carve the largest ball of radius `sigma` out of the remaining
//! hypotheses, halving the radius when too few hypotheses are left before
//! `l* - 1` groups exist and growing it by half when the final remainder is
//! still larger than the minimal group size.
//!
//! [`group_by_statistic_quantiles`] is the shortcut used for binomial tests
//! and Fisher's exact tests, where the null CDF is determined by a scalar
//! conditioning statistic and groups are quantile bins of that statistic.

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteCdf;
use crate::error::{Error, Result};
use crate::metric::{marginal_distance, CdfMetric, ConditioningStatistic};

pub const DEFAULT_MAX_RESTARTS: usize = 64;

/// Disjoint groups of hypothesis indices (0-based) covering `0..m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub groups: Vec<Vec<usize>>,
    /// Ball radius the metric algorithm settled on; zero for quantile bins.
    pub radius_final: f64,
    /// Number of radius restarts.
    pub iterations: usize,
}

impl Partition {
    pub fn single(m: usize) -> Self {
        Self {
            groups: vec![(0..m).collect()],
            radius_final: 0.0,
            iterations: 0,
        }
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn num_hypotheses(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Group index of every hypothesis.
    pub fn assignment(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.num_hypotheses()];
        for (g, members) in self.groups.iter().enumerate() {
            for &i in members {
                out[i] = g;
            }
        }
        out
    }

    /// True when the groups are nonempty, disjoint and cover `0..m`.
    pub fn is_cover_of(&self, m: usize) -> bool {
        let mut seen = vec![false; m];
        for members in &self.groups {
            if members.is_empty() {
                return false;
            }
            for &i in members {
                if i >= m || seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupingConfig {
    pub l_star: usize,
    pub g_star: usize,
    pub max_restarts: usize,
}

impl GroupingConfig {
    pub fn new(l_star: usize, g_star: usize) -> Self {
        Self {
            l_star,
            g_star,
            max_restarts: DEFAULT_MAX_RESTARTS,
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if self.l_star == 0 || self.g_star == 0 {
            return Err(Error::InvalidConfig(
                "number of groups and minimal group size must be at least 1".into(),
            ));
        }
        if self.l_star * self.g_star > m {
            return Err(Error::InvalidConfig(format!(
                "{} groups of at least {} hypotheses need more than {m} hypotheses",
                self.l_star, self.g_star
            )));
        }
        Ok(())
    }
}

/// Dense symmetric matrix of pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn<F>(n: usize, dist: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 0.0 } else { dist(i, j) })
                    .collect()
            })
            .collect();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            data.extend(row);
        }
        // mirror the upper triangle so the matrix is exactly symmetric
        for i in 0..n {
            for j in 0..i {
                data[i * n + j] = data[j * n + i];
            }
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// Metric grouping of null CDFs under `delta` at the default tolerance.
pub fn group_by_metric(cdfs: &[DiscreteCdf], cfg: &GroupingConfig) -> Result<Partition> {
    group_by_metric_with(cdfs, &CdfMetric::default(), cfg)
}

pub fn group_by_metric_with(
    cdfs: &[DiscreteCdf],
    metric: &CdfMetric,
    cfg: &GroupingConfig,
) -> Result<Partition> {
    let dist = DistanceMatrix::from_fn(cdfs.len(), |i, j| metric.delta(&cdfs[i], &cdfs[j]).total());
    group_by_distances(&dist, cfg)
}

/// Metric grouping on conditioning statistics, with the max-abs distance in
/// place of `delta`.
pub fn group_by_statistic_distance(
    stats: &[ConditioningStatistic],
    cfg: &GroupingConfig,
) -> Result<Partition> {
    if let Some(first) = stats.first() {
        for s in stats {
            marginal_distance(first, s)?;
        }
    }
    let dist = DistanceMatrix::from_fn(stats.len(), |i, j| {
        marginal_distance(&stats[i], &stats[j]).expect("kinds checked above")
    });
    group_by_distances(&dist, cfg)
}

enum Step {
    Continue,
    Restart(f64),
}

pub fn group_by_distances(dist: &DistanceMatrix, cfg: &GroupingConfig) -> Result<Partition> {
    let m = dist.len();
    if m == 0 {
        return Err(Error::EmptyStudy);
    }
    cfg.validate(m)?;
    let delta_star = dist.max();
    if cfg.l_star == 1 || delta_star == 0.0 {
        return Ok(Partition::single(m));
    }

    let (l_star, g_star) = (cfg.l_star, cfg.g_star);
    let mut sigma = delta_star / (2 * l_star) as f64;
    let mut trace = vec![sigma];
    let mut restarts = 0;

    'attempt: loop {
        let mut remaining: Vec<usize> = (0..m).collect();
        let mut groups: Vec<Vec<usize>> = Vec::with_capacity(l_star);
        let mut level = 1;

        while !remaining.is_empty() && level <= l_star {
            let ball = largest_ball(dist, &remaining, sigma);
            remaining.retain(|i| ball.binary_search(i).is_err());
            groups.push(ball);

            let step = if level < l_star {
                if level == l_star - 1 && remaining.len() == g_star {
                    // the leftover is exactly the minimal size: it becomes the last group
                    groups.push(std::mem::take(&mut remaining));
                    Step::Continue
                } else if remaining.len() <= g_star {
                    Step::Restart(sigma / 2.0)
                } else {
                    Step::Continue
                }
            } else if remaining.len() <= g_star {
                groups
                    .last_mut()
                    .unwrap()
                    .extend(std::mem::take(&mut remaining));
                Step::Continue
            } else {
                Step::Restart(sigma * 1.5)
            };

            if let Step::Restart(next) = step {
                restarts += 1;
                if restarts > cfg.max_restarts {
                    return Err(Error::GroupingDidNotConverge { restarts, trace });
                }
                debug!("grouping restart {restarts}: radius {sigma} -> {next}");
                sigma = next;
                trace.push(sigma);
                continue 'attempt;
            }
            level += 1;
        }

        let last = groups.last_mut().unwrap();
        last.sort_unstable();
        debug_assert!(last.len() >= g_star);
        return Ok(Partition {
            groups,
            radius_final: sigma,
            iterations: restarts,
        });
    }
}

/// Members of the largest `sigma`-ball centred in `remaining` (sorted).
/// Ties go to the lowest centre index.
fn largest_ball(dist: &DistanceMatrix, remaining: &[usize], sigma: f64) -> Vec<usize> {
    let mut best: Option<(usize, usize)> = None;
    for &i in remaining {
        let size = remaining
            .iter()
            .filter(|&&j| dist.get(i, j) <= sigma)
            .count();
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((i, size));
        }
    }
    let (centre, _) = best.expect("remaining is nonempty");
    remaining
        .iter()
        .copied()
        .filter(|&j| dist.get(centre, j) <= sigma)
        .collect()
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Bins hypotheses by quantiles of a scalar statistic: bin `j` holds
/// `q_{j-1} <= s < q_j`, the last bin is closed on the right. Empty bins are
/// dropped.
pub fn group_by_statistic_quantiles(stats: &[f64], l_star: usize) -> Result<Partition> {
    if stats.is_empty() {
        return Err(Error::EmptyStudy);
    }
    if l_star == 0 {
        return Err(Error::InvalidConfig(
            "number of groups must be at least 1".into(),
        ));
    }
    let mut sorted = stats.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (0..=l_star)
        .map(|j| quantile(&sorted, j as f64 / l_star as f64))
        .collect();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); l_star];
    for (i, &s) in stats.iter().enumerate() {
        // first bin whose upper cut exceeds s; everything else lands in the last bin
        let bin = (1..l_star)
            .find(|&j| s < cuts[j])
            .map_or(l_star - 1, |j| j - 1);
        groups[bin].push(i);
    }
    groups.retain(|g| !g.is_empty());
    Ok(Partition {
        groups,
        radius_final: 0.0,
        iterations: 0,
    })
}
