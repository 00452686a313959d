//! The weighted FDR procedure and the Benjamini-Hochberg baseline.
//!
//! Hypotheses are grouped, a null proportion is estimated per group, and
//! each p-value is multiplied by its group's weight `pi/(1 - pi)`. The
//! weighted p-values are then thresholded at the largest `t` for which the
//! plug-in estimate `(1 - pi0*) t / (max(R(t), 1) / m)` stays at or below the
//! nominal level. That threshold is found through the equivalent step-up
//! rule on the sorted weighted p-values.

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize, Serializer};

use crate::distribution::DiscreteCdf;
use crate::error::{Error, Result};
use crate::exact_tests::{CountData, Sidedness};
use crate::grouping::{
    group_by_metric, group_by_statistic_distance, group_by_statistic_quantiles, GroupingConfig,
    Partition,
};
use crate::metric::ConditioningStatistic;
use crate::proportion::{estimate_pi0, groupwise_pi0, overall_pi0, Pi0Config, Pi0Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Procedure {
    Wfdr,
    Bh,
}

impl Procedure {
    pub const ALL: [Procedure; 2] = [Procedure::Wfdr, Procedure::Bh];
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Procedure::Wfdr => "wfdr",
            Procedure::Bh => "bh",
        })
    }
}

impl FromStr for Procedure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wfdr" => Ok(Procedure::Wfdr),
            "bh" => Ok(Procedure::Bh),
            other => Err(Error::InvalidConfig(format!("unknown procedure '{other}'"))),
        }
    }
}

/// Per-group weights; `f64::INFINITY` marks a group whose estimated null
/// proportion is one.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Weights(pub Vec<f64>);

impl Weights {
    pub fn uniform(groups: usize) -> Self {
        Weights(vec![1.0; groups])
    }

    pub fn get(&self, group: usize) -> f64 {
        self.0[group]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Serialize for Weights {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = serializer.serialize_seq(Some(self.0.len()))?;
        for w in &self.0 {
            if w.is_finite() {
                seq.serialize_element(w)?;
            } else {
                seq.serialize_element("inf")?;
            }
        }
        seq.end()
    }
}

/// `w = pi / (1 - pi)`, infinite when `pi = 1`.
pub fn group_weights(estimates: &[f64]) -> Result<Weights> {
    estimates
        .iter()
        .map(|&pi| {
            if !(0.0..=1.0).contains(&pi) {
                Err(Error::InvalidEstimate(pi))
            } else if pi == 1.0 {
                Ok(f64::INFINITY)
            } else {
                Ok(pi / (1.0 - pi))
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(Weights)
}

/// `p_i * w_group(i)`; an infinite weight gives an infinite weighted p-value.
pub fn weighted_pvalues(pvalues: &[f64], partition: &Partition, weights: &Weights) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; pvalues.len()];
    for (g, members) in partition.groups.iter().enumerate() {
        let w = weights.get(g);
        for &i in members {
            out[i] = if w.is_infinite() {
                f64::INFINITY
            } else {
                pvalues[i] * w
            };
        }
    }
    out
}

fn count_at_most(values: &[f64], t: f64) -> usize {
    values.iter().filter(|&&v| v <= t).count()
}

/// Plug-in FDR estimate at threshold `t`.
pub fn fdr_estimate(t: f64, weighted: &[f64], pi0_overall: f64, m: usize) -> f64 {
    let r = count_at_most(weighted, t).max(1);
    let est = (1.0 - pi0_overall) * t / (r as f64 / m as f64);
    est.min(1.0)
}

/// Indices ordered by `(value, index)`; infinities sort last.
pub fn ascending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// `max{i : scale * x_(i) <= i alpha / m}`, zero when the set is empty or
/// `alpha` is zero.
pub fn step_up_count(values: &[f64], order: &[usize], scale: f64, alpha: f64) -> usize {
    if alpha <= 0.0 {
        return 0;
    }
    let m = values.len() as f64;
    order
        .iter()
        .enumerate()
        .rev()
        .find(|&(rank, &i)| scale * values[i] <= (rank + 1) as f64 * alpha / m)
        .map_or(0, |(rank, _)| rank + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    /// Rejection threshold on the weighted p-values.
    pub tau: f64,
    pub k_tilde_star: usize,
    /// Rejected indices, ascending.
    pub rejected: Vec<usize>,
}

/// Threshold on the weighted p-values at nominal level `alpha`.
///
/// When `pi0_overall = 1` nothing is rejected. Otherwise the threshold is
/// the `k`-th smallest weighted p-value for the step-up count `k`, and the
/// rejected set is every weighted p-value at or below it. For `alpha >= 1`
/// the capped estimate never exceeds the level, so every finite weighted
/// p-value is rejected.
pub fn rejection_threshold(alpha: f64, weighted: &[f64], pi0_overall: f64) -> Threshold {
    if pi0_overall >= 1.0 {
        return Threshold {
            tau: 0.0,
            k_tilde_star: 0,
            rejected: Vec::new(),
        };
    }
    let order = ascending_order(weighted);
    let k = step_up_count(weighted, &order, 1.0 - pi0_overall, alpha);
    let tau = if alpha >= 1.0 {
        f64::INFINITY
    } else if k == 0 {
        0.0
    } else {
        weighted[order[k - 1]]
    };
    let mut rejected: Vec<usize> = if alpha >= 1.0 {
        order
            .iter()
            .copied()
            .filter(|&i| weighted[i].is_finite())
            .collect()
    } else {
        order[..k].to_vec()
    };
    rejected.sort_unstable();
    Threshold {
        tau,
        k_tilde_star: k,
        rejected,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionReport {
    pub procedure: Procedure,
    pub alpha: f64,
    /// Rejected indices, ascending.
    pub rejected: Vec<usize>,
    pub threshold: f64,
    pub pi0_overall: Option<f64>,
    pub k_star: Option<usize>,
    pub k_tilde_star: Option<usize>,
    pub weights: Option<Weights>,
}

impl RejectionReport {
    pub fn num_rejected(&self) -> usize {
        self.rejected.len()
    }

    pub fn rejection_flags(&self, m: usize) -> Vec<bool> {
        let mut flags = vec![false; m];
        for &i in &self.rejected {
            flags[i] = true;
        }
        flags
    }
}

/// Benjamini-Hochberg step-up procedure.
pub fn bh_reject(pvalues: &[f64], alpha: f64) -> RejectionReport {
    let order = ascending_order(pvalues);
    let k = step_up_count(pvalues, &order, 1.0, alpha);
    let mut rejected = order[..k].to_vec();
    rejected.sort_unstable();
    RejectionReport {
        procedure: Procedure::Bh,
        alpha,
        rejected,
        threshold: if k == 0 { 0.0 } else { pvalues[order[k - 1]] },
        pi0_overall: None,
        k_star: Some(k),
        k_tilde_star: None,
        weights: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RejectionComparison {
    pub k_star: usize,
    pub k_tilde_star: usize,
    pub wfdr_geq_bh: bool,
}

/// Step-up counts of BH on the raw p-values and of the weighted rule.
pub fn compare_rejection_counts(
    pvalues: &[f64],
    weighted: &[f64],
    pi0_overall: f64,
    alpha: f64,
) -> Result<RejectionComparison> {
    if pi0_overall >= 1.0 {
        return Err(Error::NotApplicable(
            "overall null proportion is one; the weighted procedure rejects nothing".into(),
        ));
    }
    let k_star = step_up_count(pvalues, &ascending_order(pvalues), 1.0, alpha);
    let k_tilde_star = step_up_count(
        weighted,
        &ascending_order(weighted),
        1.0 - pi0_overall,
        alpha,
    );
    Ok(RejectionComparison {
        k_star,
        k_tilde_star,
        wfdr_geq_bh: k_tilde_star >= k_star,
    })
}

/// p-values, null distributions and conditioning statistics of a study.
#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub pvalues: Vec<f64>,
    pub nulls: Vec<DiscreteCdf>,
    pub stats: Vec<ConditioningStatistic>,
}

impl Study {
    /// Runs the exact test of every hypothesis. Hypotheses without data get
    /// `p = 1` and a point-mass null.
    pub fn from_counts(counts: &[CountData], sided: Sidedness) -> Result<Self> {
        let mut pvalues = Vec::with_capacity(counts.len());
        let mut nulls = Vec::with_capacity(counts.len());
        let mut stats = Vec::with_capacity(counts.len());
        for c in counts {
            let out = c.test_or_degenerate(sided)?;
            pvalues.push(out.pvalue);
            nulls.push(out.null);
            stats.push(c.conditioning_statistic());
        }
        Ok(Self {
            pvalues,
            nulls,
            stats,
        })
    }

    pub fn len(&self) -> usize {
        self.pvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pvalues.is_empty()
    }

    pub fn supports(&self) -> Vec<&[f64]> {
        self.nulls.iter().map(DiscreteCdf::support).collect()
    }

    pub fn scalar_stats(&self) -> Vec<f64> {
        self.stats
            .iter()
            .map(ConditioningStatistic::scalar)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum GroupingMethod {
    /// Quantile bins of the scalar conditioning statistic.
    Quantile { l_star: usize },
    /// Metric-ball grouping under `delta` on the null CDFs.
    Metric(GroupingConfig),
    /// Metric-ball grouping under the max-abs distance on conditioning
    /// statistics.
    StatisticMetric(GroupingConfig),
}

impl GroupingMethod {
    pub fn l_star(&self) -> usize {
        match self {
            GroupingMethod::Quantile { l_star } => *l_star,
            GroupingMethod::Metric(c) | GroupingMethod::StatisticMetric(c) => c.l_star,
        }
    }

    /// Partitions the study. A metric grouping that runs out of restarts
    /// falls back to quantile bins.
    pub fn partition(&self, study: &Study) -> Result<Partition> {
        let attempt = match self {
            GroupingMethod::Quantile { l_star } => {
                return group_by_statistic_quantiles(&study.scalar_stats(), *l_star)
            }
            GroupingMethod::Metric(cfg) => group_by_metric(&study.nulls, cfg),
            GroupingMethod::StatisticMetric(cfg) => group_by_statistic_distance(&study.stats, cfg),
        };
        match attempt {
            Err(Error::GroupingDidNotConverge { restarts, .. }) => {
                warn!(
                    "metric grouping gave up after {restarts} restarts; using quantile bins instead"
                );
                group_by_statistic_quantiles(&study.scalar_stats(), self.l_star())
            }
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WfdrConfig {
    pub grouping: GroupingMethod,
    pub pi0: Pi0Config,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WfdrOutcome {
    pub report: RejectionReport,
    pub partition: Partition,
    pub group_estimates: Vec<Pi0Estimate>,
    pub weighted_pvalues: Vec<f64>,
    /// Estimate of the null proportion on the whole, ungrouped study.
    pub pi0_global: Pi0Estimate,
}

/// Weighted FDR procedure, end to end.
pub fn wfdr_reject(study: &Study, alpha: f64, cfg: &WfdrConfig) -> Result<WfdrOutcome> {
    if study.is_empty() {
        return Err(Error::EmptyStudy);
    }
    if study.nulls.len() != study.len() || study.stats.len() != study.len() {
        return Err(Error::InvalidConfig(
            "p-values, null distributions and statistics differ in length".into(),
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!(
            "alpha {alpha} outside [0, 1]"
        )));
    }
    let partition = cfg.grouping.partition(study)?;
    let supports = study.supports();
    let group_estimates = groupwise_pi0(&study.pvalues, &supports, &partition, &cfg.pi0)?;
    let pi0_overall = overall_pi0(&partition, &group_estimates)?;
    let values: Vec<f64> = group_estimates.iter().map(|e| e.value).collect();
    let weights = group_weights(&values)?;
    let weighted = weighted_pvalues(&study.pvalues, &partition, &weights);
    let threshold = rejection_threshold(alpha, &weighted, pi0_overall);
    let pi0_global = estimate_pi0(&study.pvalues, &supports, &cfg.pi0)?;
    Ok(WfdrOutcome {
        report: RejectionReport {
            procedure: Procedure::Wfdr,
            alpha,
            rejected: threshold.rejected,
            threshold: threshold.tau,
            pi0_overall: Some(pi0_overall),
            k_star: None,
            k_tilde_star: Some(threshold.k_tilde_star),
            weights: Some(weights),
        },
        partition,
        group_estimates,
        weighted_pvalues: weighted,
        pi0_global,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_tests::PoissonPair;

    #[test]
    fn weights_from_estimates() {
        let w = group_weights(&[0.5, 0.8, 1.0, 0.0]).unwrap();
        assert_eq!(w.get(0), 1.0);
        assert!((w.get(1) - 4.0).abs() < 1e-12);
        assert!(w.get(2).is_infinite());
        assert_eq!(w.get(3), 0.0);
        assert!(matches!(
            group_weights(&[1.2]),
            Err(Error::InvalidEstimate(_))
        ));
        assert!(matches!(
            group_weights(&[-0.1]),
            Err(Error::InvalidEstimate(_))
        ));
    }

    #[test]
    fn weighting() {
        let part = Partition {
            groups: vec![vec![0, 2], vec![1]],
            radius_final: 0.0,
            iterations: 0,
        };
        let p = [0.02, 0.3, 0.5];
        assert_eq!(
            weighted_pvalues(&p, &part, &Weights::uniform(2)),
            p.to_vec()
        );
        let w = weighted_pvalues(&p, &part, &Weights(vec![4.0, f64::INFINITY]));
        assert!((w[0] - 0.08).abs() < 1e-15);
        assert!(w[1].is_infinite());
        assert_eq!(w[2], 2.0);
    }

    #[test]
    fn infinite_weights_serialise_as_strings() {
        let json = serde_json::to_string(&Weights(vec![0.25, f64::INFINITY])).unwrap();
        assert_eq!(json, r#"[0.25,"inf"]"#);
    }

    #[test]
    fn fdr_estimate_examples() {
        let w = [0.01, 0.02, 0.05, 0.1, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
        assert!((fdr_estimate(0.1, &w, 0.5, 10) - 0.125).abs() < 1e-12);
        assert_eq!(fdr_estimate(0.0, &w, 0.5, 10), 0.0);
        let none = [0.5; 10];
        assert_eq!(fdr_estimate(0.2, &none, 0.0, 10), 1.0);
    }

    #[test]
    fn threshold_worked_example() {
        let w = [0.01, 0.05, 0.6, 0.9];
        let t = rejection_threshold(0.2, &w, 0.5);
        assert_eq!(t.k_tilde_star, 2);
        assert_eq!(t.rejected, vec![0, 1]);
        assert_eq!(t.tau, 0.05);
    }

    #[test]
    fn no_rejections_when_everything_looks_null() {
        let t = rejection_threshold(0.5, &[0.001, 0.002], 1.0);
        assert_eq!(t.tau, 0.0);
        assert!(t.rejected.is_empty());
        let t = rejection_threshold(0.0, &[0.001, 0.002], 0.3);
        assert!(t.rejected.is_empty());
    }

    #[test]
    fn level_one_rejects_every_finite_weighted_pvalue() {
        let t = rejection_threshold(1.0, &[0.9, f64::INFINITY, 5.0], 0.5);
        assert_eq!(t.rejected, vec![0, 2]);
        assert!(t.tau.is_infinite());
    }

    #[test]
    fn ties_are_rejected_together() {
        let w = [0.04, 0.04, 0.04, 0.9];
        let t = rejection_threshold(0.1, &w, 0.0);
        assert_eq!(t.rejected, vec![0, 1, 2]);
    }

    #[test]
    fn bh_examples() {
        let r = bh_reject(&[0.01, 0.02, 0.5, 1.0], 0.1);
        assert_eq!(r.k_star, Some(2));
        assert_eq!(r.rejected, vec![0, 1]);
        assert_eq!(bh_reject(&[1.0; 5], 0.5).num_rejected(), 0);
        assert_eq!(bh_reject(&[0.001, 0.002, 0.0001], 0.05).num_rejected(), 3);
    }

    #[test]
    fn comparison_examples() {
        let p = [0.3, 0.01, 0.02, 0.8];
        let c = compare_rejection_counts(&p, &p, 0.0, 0.1).unwrap();
        assert_eq!(c.k_star, c.k_tilde_star);
        assert!(c.wfdr_geq_bh);

        let raw = [0.04, 0.11, 0.6, 0.9];
        let weighted = [0.01, 0.05, 0.6, 0.9];
        let c = compare_rejection_counts(&raw, &weighted, 0.5, 0.2).unwrap();
        assert_eq!((c.k_star, c.k_tilde_star, c.wfdr_geq_bh), (1, 2, true));

        assert!(matches!(
            compare_rejection_counts(&raw, &weighted, 1.0, 0.2),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn all_ones_reject_nothing() {
        let counts: Vec<CountData> = (0..20)
            .map(|i| CountData::Pair(PoissonPair::new(5 + i % 3, 5 + i % 3)))
            .collect();
        let study = Study::from_counts(&counts, Sidedness::TwoSided).unwrap();
        assert!(study.pvalues.iter().all(|&p| p == 1.0));
        let cfg = WfdrConfig {
            grouping: GroupingMethod::Quantile { l_star: 2 },
            pi0: Pi0Config::binomial_default(),
        };
        let out = wfdr_reject(&study, 0.05, &cfg).unwrap();
        assert_eq!(out.report.pi0_overall, Some(1.0));
        assert!(out.report.rejected.is_empty());
    }

    #[test]
    fn single_group_with_half_weight_matches_direct_threshold() {
        let p = [0.01, 0.05, 0.6, 0.9];
        let part = Partition::single(4);
        let weights = group_weights(&[0.5]).unwrap();
        let w = weighted_pvalues(&p, &part, &weights);
        assert_eq!(w, p.to_vec());
        assert_eq!(rejection_threshold(0.2, &w, 0.5).rejected, vec![0, 1]);
    }
}
