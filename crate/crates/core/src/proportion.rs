//! Estimating the proportion of true nulls from discrete p-values.
//!
//! For each guiding value `tau`, every hypothesis contributes through the
//! largest attainable p-value `lambda <= tau` of its own null distribution:
//! `1{p > lambda} / (1 - lambda)`, or 1 when no attainable p-value lies
//! below `tau`. The trial estimates are averaged over hypotheses and the
//! estimate is their minimum over the guiding grid.

use serde::{Deserialize, Serialize};

use crate::distribution::largest_at_most;
use crate::error::{Error, Result};
use crate::exact_tests::TestFamily;
use crate::grouping::Partition;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pi0Config {
    pub lambda_max: f64,
    pub step: f64,
}

impl Pi0Config {
    pub fn new(lambda_max: f64, step: f64) -> Result<Self> {
        let cfg = Self { lambda_max, step };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Guiding grid for binomial-test p-values.
    pub fn binomial_default() -> Self {
        Self {
            lambda_max: 0.2,
            step: 0.0005,
        }
    }

    /// Guiding grid for Fisher's exact test p-values.
    pub fn fet_default() -> Self {
        Self {
            lambda_max: 0.5,
            step: 0.008,
        }
    }

    pub fn for_family(family: TestFamily) -> Self {
        match family {
            TestFamily::Binomial => Self::binomial_default(),
            TestFamily::Fet => Self::fet_default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_max > 0.0 && self.lambda_max < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda_max {} must lie in (0, 1)",
                self.lambda_max
            )));
        }
        if !(self.step > 0.0 && self.step < self.lambda_max) {
            return Err(Error::InvalidConfig(format!(
                "step {} must lie in (0, lambda_max)",
                self.step
            )));
        }
        Ok(())
    }

    /// `0, step, 2 step, ...` up to and including `lambda_max`.
    pub fn guiding_values(&self) -> Vec<f64> {
        let n = (self.lambda_max / self.step + 1e-9).floor() as usize;
        let mut taus: Vec<f64> = (0..=n).map(|j| j as f64 * self.step).collect();
        let last = taus.last_mut().unwrap();
        if (*last - self.lambda_max).abs() <= 1e-9 * self.lambda_max {
            *last = self.lambda_max;
        } else {
            taus.push(self.lambda_max);
        }
        taus
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pi0Estimate {
    /// Estimate after clamping to `[0, 1]`.
    pub value: f64,
    /// Minimum trial estimate before clamping.
    pub raw: f64,
    /// `(tau, beta(tau))` over the guiding grid.
    pub trial_values: Vec<(f64, f64)>,
    pub clamped: bool,
}

impl Pi0Estimate {
    fn from_trials(trial_values: Vec<(f64, f64)>) -> Self {
        let raw = trial_values
            .iter()
            .map(|&(_, b)| b)
            .fold(f64::INFINITY, f64::min);
        let value = raw.clamp(0.0, 1.0);
        Self {
            value,
            raw,
            clamped: value != raw,
            trial_values,
        }
    }
}

fn check_inputs(pvalues: &[f64], supports: &[&[f64]]) -> Result<()> {
    if pvalues.is_empty() {
        return Err(Error::EmptyStudy);
    }
    if pvalues.len() != supports.len() {
        return Err(Error::InvalidConfig(format!(
            "{} p-values but {} supports",
            pvalues.len(),
            supports.len()
        )));
    }
    Ok(())
}

/// Trial estimate `beta(tau)`.
pub fn trial_estimate(pvalues: &[f64], supports: &[&[f64]], tau: f64) -> Result<f64> {
    check_inputs(pvalues, supports)?;
    let mut sum = 0.0;
    for (&p, support) in pvalues.iter().zip(supports) {
        sum += match largest_at_most(support, tau) {
            None => 1.0,
            Some(lambda) if lambda >= 1.0 => {
                return Err(Error::InvalidConfig(format!(
                    "guiding value {tau} reaches the support point 1"
                )))
            }
            Some(lambda) if p > lambda => 1.0 / (1.0 - lambda),
            Some(_) => 0.0,
        };
    }
    Ok(sum / pvalues.len() as f64)
}

pub fn estimate_pi0(pvalues: &[f64], supports: &[&[f64]], cfg: &Pi0Config) -> Result<Pi0Estimate> {
    check_inputs(pvalues, supports)?;
    cfg.validate()?;
    let trials = cfg
        .guiding_values()
        .into_iter()
        .map(|tau| Ok((tau, trial_estimate(pvalues, supports, tau)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Pi0Estimate::from_trials(trials))
}

/// One estimate per group of `partition`.
pub fn groupwise_pi0(
    pvalues: &[f64],
    supports: &[&[f64]],
    partition: &Partition,
    cfg: &Pi0Config,
) -> Result<Vec<Pi0Estimate>> {
    check_inputs(pvalues, supports)?;
    if !partition.is_cover_of(pvalues.len()) {
        return Err(Error::InvalidConfig(
            "partition does not cover the study".into(),
        ));
    }
    partition
        .groups
        .iter()
        .map(|members| {
            let p: Vec<f64> = members.iter().map(|&i| pvalues[i]).collect();
            let s: Vec<&[f64]> = members.iter().map(|&i| supports[i]).collect();
            estimate_pi0(&p, &s, cfg)
        })
        .collect()
}

/// Size-weighted average of the clamped group estimates.
pub fn overall_pi0(partition: &Partition, groupwise: &[Pi0Estimate]) -> Result<f64> {
    if partition.num_groups() != groupwise.len() {
        return Err(Error::InvalidConfig(format!(
            "{} groups but {} estimates",
            partition.num_groups(),
            groupwise.len()
        )));
    }
    let m = partition.num_hypotheses();
    if m == 0 {
        return Err(Error::EmptyStudy);
    }
    let weighted: f64 = partition
        .groups
        .iter()
        .zip(groupwise)
        .map(|(g, e)| g.len() as f64 * e.value)
        .sum();
    Ok((weighted / m as f64).clamp(0.0, 1.0))
}
