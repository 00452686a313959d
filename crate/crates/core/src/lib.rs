//! Weighted false discovery rate control for discrete p-values.
//!
//! Hypotheses tested with the conditional binomial test or Fisher's exact
//! test are grouped by the similarity of their p-value null distributions.
//! Each group receives its own estimate of the null proportion, p-values are
//! reweighted accordingly, and a step-up threshold is applied to the weighted
//! p-values. The Benjamini-Hochberg procedure is provided as a baseline, along
//! with a simulation harness and CSV/JSON plumbing for the `wfdr` binary.

pub mod distribution;
pub mod error;
pub mod grouping;
pub mod io;
pub mod metric;
pub mod procedure;
pub mod proportion;
pub mod sim;

pub use distribution::DiscreteCdf;
pub use error::{Error, Result};
pub use exact_tests::{CountData, MarginalVector, PoissonPair, Sidedness, TestFamily, TwoByTwo};
pub use grouping::{GroupingConfig, Partition};
pub use metric::{delta, CdfMetric, ConditioningStatistic, MetricValue};
pub use procedure::{
    bh_reject, compare_rejection_counts, wfdr_reject, GroupingMethod, Procedure, RejectionReport, Study,
    WfdrConfig,
};
pub use proportion::{estimate_pi0, Pi0Config, Pi0Estimate};
pub use sim::{run_study, ScenarioConfig, StudyResult};
