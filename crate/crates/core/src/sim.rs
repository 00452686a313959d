//! Monte Carlo harness comparing the weighted procedure with BH.
//!
//! Two data-generating families are supported: pairs of Poisson counts
//! analysed with the conditional binomial test, and pairs of binomial counts
//! analysed with Fisher's exact test. Each `(pi0, replication)` unit draws
//! its data from its own ChaCha stream keyed by the master seed, so results
//! do not depend on how units are scheduled across threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Pareto, Poisson, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_tests::{CountData, PoissonPair, Sidedness, TestFamily, TwoByTwo};
use crate::grouping::GroupingConfig;
use crate::procedure::{bh_reject, wfdr_reject, GroupingMethod, Procedure, Study, WfdrConfig};
use crate::proportion::Pi0Config;

/// Scale and shape of the Pareto law for baseline Poisson means.
pub const PARETO_SCALE: f64 = 7.0;
pub const PARETO_SHAPE: f64 = 7.0;
/// Range of the mean ratio under the alternative.
pub const RATIO_RANGE: (f64, f64) = (1.5, 5.0);
/// Range of the common success probability under the null.
pub const NULL_PROB_RANGE: (f64, f64) = (0.02, 0.15);
/// Success probabilities of the two arms under the alternative.
pub const ALT_PROBS: (f64, f64) = (0.15, 0.3);
/// Trials per arm.
pub const TRIALS: u64 = 50;

/// How hypotheses are grouped inside a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimGrouping {
    Quantile,
    Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub family: TestFamily,
    pub m: usize,
    pub pi0s: Vec<f64>,
    pub alphas: Vec<f64>,
    pub l_stars: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    pub sided: Sidedness,
    pub grouping: SimGrouping,
    pub pi0_config: Pi0Config,
}

impl ScenarioConfig {
    /// A configuration with the family's default guiding grid, two-sided
    /// tests and quantile grouping.
    pub fn new(family: TestFamily, m: usize) -> Self {
        Self {
            family,
            m,
            pi0s: vec![0.5],
            alphas: vec![0.05],
            l_stars: vec![3],
            replications: 1,
            master_seed: 0,
            sided: Sidedness::TwoSided,
            grouping: SimGrouping::Quantile,
            pi0_config: Pi0Config::for_family(family),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if self.replications == 0 {
            return bad("at least one replication is required".into());
        }
        if self.pi0s.is_empty() || self.alphas.is_empty() || self.l_stars.is_empty() {
            return bad("pi0, alpha and l* grids must be nonempty".into());
        }
        if let Some(p) = self.pi0s.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("pi0 {p} outside [0, 1]"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return bad(format!("alpha {a} outside [0, 1]"));
        }
        if let Some(l) = self.l_stars.iter().find(|&&l| l == 0 || l > self.m) {
            return bad(format!("l* = {l} must lie in 1..={}", self.m));
        }
        if self.pi0s.len() > u32::MAX as usize || self.replications > u32::MAX as usize {
            return bad("grid too large".into());
        }
        self.pi0_config.validate()
    }

    fn grouping_for(&self, l_star: usize) -> GroupingMethod {
        match self.grouping {
            SimGrouping::Quantile => GroupingMethod::Quantile { l_star },
            SimGrouping::Metric => GroupingMethod::StatisticMetric(GroupingConfig::new(
                l_star,
                default_min_group_size(self.m, l_star),
            )),
        }
    }
}

/// `min(10, m / l*)`, at least one.
pub fn default_min_group_size(m: usize, l_star: usize) -> usize {
    (m / l_star.max(1)).clamp(1, 10)
}

/// Generated counts together with the truth of each null hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub counts: Vec<CountData>,
    pub is_null: Vec<bool>,
}

impl Dataset {
    pub fn num_nulls(&self) -> usize {
        self.is_null.iter().filter(|&&n| n).count()
    }
}

/// Number of true nulls, `floor(m * pi0)`. The first that many hypotheses
/// are the nulls.
pub fn null_count(m: usize, pi0: f64) -> usize {
    ((m as f64 * pi0).floor() as usize).min(m)
}

/// Stream of replication `rep` at grid position `pi0_index`.
pub fn replication_rng(master_seed: u64, pi0_index: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((pi0_index as u64) << 32) | rep as u64);
    rng
}

/// Poisson pairs: baseline mean from a Pareto law, multiplied by a uniform
/// ratio for false nulls.
pub fn generate_poisson_scenario<R: Rng + ?Sized>(m: usize, pi0: f64, rng: &mut R) -> Dataset {
    let pareto = Pareto::new(PARETO_SCALE, PARETO_SHAPE).expect("valid Pareto parameters");
    let ratio = Uniform::new(RATIO_RANGE.0, RATIO_RANGE.1).expect("valid ratio range");
    let m0 = null_count(m, pi0);
    let mut counts = Vec::with_capacity(m);
    let mut is_null = Vec::with_capacity(m);
    for i in 0..m {
        let null = i < m0;
        let mu1: f64 = pareto.sample(rng);
        let mu2 = if null { mu1 } else { ratio.sample(rng) * mu1 };
        counts.push(CountData::Pair(PoissonPair::new(
            poisson_draw(mu1, rng),
            poisson_draw(mu2, rng),
        )));
        is_null.push(null);
    }
    Dataset { counts, is_null }
}

fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    let dist = Poisson::new(mean).expect("positive finite mean");
    let draw: f64 = dist.sample(rng);
    draw as u64
}

/// Binomial pairs with `TRIALS` trials per arm: nulls share a uniform
/// success probability, false nulls use fixed probabilities.
pub fn generate_binomial_scenario<R: Rng + ?Sized>(m: usize, pi0: f64, rng: &mut R) -> Dataset {
    let null_prob = Uniform::new(NULL_PROB_RANGE.0, NULL_PROB_RANGE.1).expect("valid range");
    let m0 = null_count(m, pi0);
    let mut counts = Vec::with_capacity(m);
    let mut is_null = Vec::with_capacity(m);
    for i in 0..m {
        let null = i < m0;
        let (q1, q2) = if null {
            let q = null_prob.sample(rng);
            (q, q)
        } else {
            ALT_PROBS
        };
        let c1 = Binomial::new(TRIALS, q1)
            .expect("valid probability")
            .sample(rng);
        let c2 = Binomial::new(TRIALS, q2)
            .expect("valid probability")
            .sample(rng);
        let table = TwoByTwo::new(c1, TRIALS, c2, TRIALS).expect("counts within trials");
        counts.push(CountData::Table(table));
        is_null.push(null);
    }
    Dataset { counts, is_null }
}

pub fn generate_scenario<R: Rng + ?Sized>(
    family: TestFamily,
    m: usize,
    pi0: f64,
    rng: &mut R,
) -> Dataset {
    match family {
        TestFamily::Binomial => generate_poisson_scenario(m, pi0, rng),
        TestFamily::Fet => generate_binomial_scenario(m, pi0, rng),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcedureStats {
    pub fdp: f64,
    pub tdp: f64,
    pub rejections: usize,
}

impl ProcedureStats {
    /// FDP `V / max(R, 1)` and TDP `S / m1` (zero when `m1 = 0`).
    pub fn from_rejections(rejected: &[usize], is_null: &[bool]) -> Self {
        let false_rejections = rejected.iter().filter(|&&i| is_null[i]).count();
        let true_rejections = rejected.len() - false_rejections;
        let m1 = is_null.iter().filter(|&&n| !n).count();
        Self {
            fdp: false_rejections as f64 / rejected.len().max(1) as f64,
            tdp: if m1 == 0 {
                0.0
            } else {
                true_rejections as f64 / m1 as f64
            },
            rejections: rejected.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationStats {
    pub wfdr: ProcedureStats,
    pub bh: ProcedureStats,
    /// Estimate on the whole study.
    pub pi0_global: f64,
    /// Size-weighted average of the group estimates.
    pub pi0_overall: f64,
    pub pi0_group_min: f64,
    pub pi0_group_max: f64,
}

impl ReplicationStats {
    pub fn procedure(&self, procedure: Procedure) -> &ProcedureStats {
        match procedure {
            Procedure::Wfdr => &self.wfdr,
            Procedure::Bh => &self.bh,
        }
    }
}

/// Runs both procedures on one tested dataset.
pub fn run_replication(
    study: &Study,
    is_null: &[bool],
    alpha: f64,
    grouping: GroupingMethod,
    pi0_config: Pi0Config,
) -> Result<ReplicationStats> {
    let cfg = WfdrConfig {
        grouping,
        pi0: pi0_config,
    };
    let weighted = wfdr_reject(study, alpha, &cfg)?;
    let bh = bh_reject(&study.pvalues, alpha);
    let group_values = weighted.group_estimates.iter().map(|e| e.value);
    Ok(ReplicationStats {
        wfdr: ProcedureStats::from_rejections(&weighted.report.rejected, is_null),
        bh: ProcedureStats::from_rejections(&bh.rejected, is_null),
        pi0_global: weighted.pi0_global.value,
        pi0_overall: weighted.report.pi0_overall.unwrap_or(1.0),
        pi0_group_min: group_values.clone().fold(f64::INFINITY, f64::min),
        pi0_group_max: group_values.fold(f64::NEG_INFINITY, f64::max),
    })
}

/// All replications of one `(pi0, alpha, l*)` cell, in replication order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub pi0: f64,
    pub alpha: f64,
    pub l_star: usize,
    pub replications: Vec<ReplicationStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub family: TestFamily,
    pub pi0: f64,
    pub alpha: f64,
    pub l_star: usize,
    pub procedure: Procedure,
    pub replications: usize,
    pub mean_fdr: f64,
    pub mean_power: f64,
    pub sd_fdp: f64,
    pub sd_tdp: f64,
    pub se_fdp: f64,
    pub se_tdp: f64,
    pub mean_rejections: f64,
    pub mean_pi0_global: Option<f64>,
    pub mean_pi0_overall: Option<f64>,
}

impl CellSummary {
    /// `(metric, value)` pairs for the long table.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![
            ("mean_fdr", self.mean_fdr),
            ("mean_power", self.mean_power),
            ("sd_fdp", self.sd_fdp),
            ("sd_tdp", self.sd_tdp),
            ("se_fdp", self.se_fdp),
            ("se_tdp", self.se_tdp),
            ("mean_rejections", self.mean_rejections),
        ];
        if let Some(v) = self.mean_pi0_global {
            out.push(("mean_pi0_global", v));
        }
        if let Some(v) = self.mean_pi0_overall {
            out.push(("mean_pi0_overall", v));
        }
        out
    }
}

/// Sample mean and standard deviation (zero for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

impl CellResult {
    pub fn summarise(&self, family: TestFamily, procedure: Procedure) -> CellSummary {
        let stats: Vec<&ProcedureStats> = self
            .replications
            .iter()
            .map(|r| r.procedure(procedure))
            .collect();
        let n = stats.len();
        let fdp: Vec<f64> = stats.iter().map(|s| s.fdp).collect();
        let tdp: Vec<f64> = stats.iter().map(|s| s.tdp).collect();
        let rejections: Vec<f64> = stats.iter().map(|s| s.rejections as f64).collect();
        let (mean_fdr, sd_fdp) = mean_sd(&fdp);
        let (mean_power, sd_tdp) = mean_sd(&tdp);
        let root_n = (n as f64).sqrt();
        let pi0_mean = |f: fn(&ReplicationStats) -> f64| {
            let v: Vec<f64> = self.replications.iter().map(f).collect();
            mean_sd(&v).0
        };
        let weighted = procedure == Procedure::Wfdr;
        CellSummary {
            family,
            pi0: self.pi0,
            alpha: self.alpha,
            l_star: self.l_star,
            procedure,
            replications: n,
            mean_fdr,
            mean_power,
            sd_fdp,
            sd_tdp,
            se_fdp: sd_fdp / root_n,
            se_tdp: sd_tdp / root_n,
            mean_rejections: mean_sd(&rejections).0,
            mean_pi0_global: weighted.then(|| pi0_mean(|r| r.pi0_global)),
            mean_pi0_overall: weighted.then(|| pi0_mean(|r| r.pi0_overall)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: ScenarioConfig,
    /// Cells ordered by `pi0`, then `alpha`, then `l*`, as in the config.
    pub cells: Vec<CellResult>,
}

impl StudyResult {
    pub fn cell(&self, pi0: f64, alpha: f64, l_star: usize) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.pi0 == pi0 && c.alpha == alpha && c.l_star == l_star)
    }

    pub fn summaries(&self) -> Vec<CellSummary> {
        self.cells
            .iter()
            .flat_map(|c| Procedure::ALL.map(|p| c.summarise(self.config.family, p)))
            .collect()
    }

    /// JSON document with the configuration and per-cell summaries.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            config: &'a ScenarioConfig,
            summaries: Vec<CellSummary>,
        }
        serde_json::to_string_pretty(&Doc {
            config: &self.config,
            summaries: self.summaries(),
        })
        .map_err(|e| Error::Serialize(e.to_string()))
    }

    /// Long table with columns `family,pi0,alpha,l_star,procedure,metric,value`.
    pub fn long_table_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let ser = |e: csv::Error| Error::Serialize(e.to_string());
        w.write_record([
            "family",
            "pi0",
            "alpha",
            "l_star",
            "procedure",
            "metric",
            "value",
        ])
        .map_err(ser)?;
        for s in self.summaries() {
            for (metric, value) in s.metrics() {
                w.write_record([
                    s.family.to_string(),
                    s.pi0.to_string(),
                    s.alpha.to_string(),
                    s.l_star.to_string(),
                    s.procedure.to_string(),
                    metric.to_string(),
                    value.to_string(),
                ])
                .map_err(ser)?;
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Serialize(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialize(e.to_string()))
    }
}

/// Replicates every cell of the grid. `threads` bounds the worker count;
/// `None` uses the global rayon pool.
pub fn run_study(cfg: &ScenarioConfig, threads: Option<usize>) -> Result<StudyResult> {
    cfg.validate()?;
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(|| run_study_in_pool(cfg)),
        None => run_study_in_pool(cfg),
    }
}

fn run_study_in_pool(cfg: &ScenarioConfig) -> Result<StudyResult> {
    let units: Vec<(usize, usize)> = (0..cfg.pi0s.len())
        .flat_map(|p| (0..cfg.replications).map(move |r| (p, r)))
        .collect();
    let per_unit: Vec<Vec<ReplicationStats>> = units
        .par_iter()
        .map(|&(p, r)| {
            let mut rng = replication_rng(cfg.master_seed, p, r);
            let data = generate_scenario(cfg.family, cfg.m, cfg.pi0s[p], &mut rng);
            let study = Study::from_counts(&data.counts, cfg.sided)?;
            let mut out = Vec::with_capacity(cfg.alphas.len() * cfg.l_stars.len());
            for &alpha in &cfg.alphas {
                for &l_star in &cfg.l_stars {
                    out.push(run_replication(
                        &study,
                        &data.is_null,
                        alpha,
                        cfg.grouping_for(l_star),
                        cfg.pi0_config,
                    )?);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (p, &pi0) in cfg.pi0s.iter().enumerate() {
        for (a, &alpha) in cfg.alphas.iter().enumerate() {
            for (l, &l_star) in cfg.l_stars.iter().enumerate() {
                let slot = a * cfg.l_stars.len() + l;
                let replications = (0..cfg.replications)
                    .map(|r| per_unit[p * cfg.replications + r][slot].clone())
                    .collect();
                cells.push(CellResult {
                    pi0,
                    alpha,
                    l_star,
                    replications,
                });
            }
        }
    }
    Ok(StudyResult {
        config: cfg.clone(),
        cells,
    })
}
