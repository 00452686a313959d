//! Reading count tables, filtering them, and writing analysis outputs.
//!
//! Binomial-test inputs have the header `id,c1,c2`. Fisher-test inputs have
//! `id,c1,n1,c2,n2`, where `c1` out of `n1` and `c2` out of `n2` are the two
//! rows of the table. Fisher-test inputs may instead be given as
//! `id,cases,events` together with study-wide totals, in which case each row
//! is completed against the rest of the study.

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_tests::{CountData, PoissonPair, Sidedness, TestFamily, TwoByTwo};
use crate::grouping::{GroupingConfig, Partition};
use crate::procedure::{
    bh_reject, compare_rejection_counts, wfdr_reject, GroupingMethod, Procedure, RejectionComparison,
    RejectionReport, Study, WfdrConfig, WfdrOutcome,
};
use crate::proportion::Pi0Config;
use crate::sim::{default_min_group_size, run_study, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyRow {
    pub id: String,
    pub counts: CountData,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyInput {
    pub family: TestFamily,
    pub rows: Vec<StudyRow>,
}

impl StudyInput {
    /// Checks that ids are unique and every row belongs to `family`.
    pub fn new(family: TestFamily, rows: Vec<StudyRow>) -> Result<Self> {
        let mut seen = HashSet::new();
        for row in &rows {
            if row.counts.family() != family {
                return Err(Error::Schema(format!(
                    "row '{}' is not a {family} row",
                    row.id
                )));
            }
            if !seen.insert(row.id.as_str()) {
                return Err(Error::Schema(format!("duplicate id '{}'", row.id)));
            }
        }
        Ok(Self { family, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn counts(&self) -> Vec<CountData> {
        self.rows.iter().map(|r| r.counts).collect()
    }
}

/// Study-wide totals used to complete `id,cases,events` rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyTotals {
    pub cases: u64,
    pub events: u64,
}

impl std::str::FromStr for StudyTotals {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let parse = |v: &str| {
            v.parse::<u64>()
                .map_err(|_| Error::InvalidConfig(format!("bad study total '{v}'")))
        };
        match parts.as_slice() {
            [cases, events] => Ok(Self {
                cases: parse(cases)?,
                events: parse(events)?,
            }),
            _ => Err(Error::InvalidConfig(format!(
                "study totals must be CASES,EVENTS, got '{s}'"
            ))),
        }
    }
}

/// Column layout of an input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputLayout {
    Family(TestFamily),
    CasesEvents(StudyTotals),
}

impl InputLayout {
    fn columns(&self) -> &'static [&'static str] {
        match self {
            InputLayout::Family(TestFamily::Binomial) => &["id", "c1", "c2"],
            InputLayout::Family(TestFamily::Fet) => &["id", "c1", "n1", "c2", "n2"],
            InputLayout::CasesEvents(_) => &["id", "cases", "events"],
        }
    }

    fn family(&self) -> TestFamily {
        match self {
            InputLayout::Family(f) => *f,
            InputLayout::CasesEvents(_) => TestFamily::Fet,
        }
    }
}

pub fn parse_counts_csv(path: &Path, family: TestFamily) -> Result<StudyInput> {
    parse_counts_file(path, InputLayout::Family(family))
}

pub fn parse_counts_file(path: &Path, layout: InputLayout) -> Result<StudyInput> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_counts_reader(file, layout)
}

pub fn parse_counts_reader<R: Read>(reader: R, layout: InputLayout) -> Result<StudyInput> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    if headers.iter().all(str::is_empty) {
        return Err(Error::Schema("missing header row".into()));
    }
    let positions = layout
        .columns()
        .iter()
        .map(|&name| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse { line, message };
        let field = |k: usize| record.get(positions[k]).unwrap_or("");
        let number = |k: usize| {
            let raw = field(k);
            raw.parse::<u64>().map_err(|_| {
                parse_err(format!(
                    "column '{}': '{raw}' is not a nonnegative integer",
                    layout.columns()[k]
                ))
            })
        };
        let id = field(0).to_string();
        if id.is_empty() {
            return Err(parse_err("empty id".into()));
        }
        let counts = match layout {
            InputLayout::Family(TestFamily::Binomial) => {
                CountData::Pair(PoissonPair::new(number(1)?, number(2)?))
            }
            InputLayout::Family(TestFamily::Fet) => {
                TwoByTwo::new(number(1)?, number(2)?, number(3)?, number(4)?)
                    .map(CountData::Table)
                    .map_err(|e| parse_err(e.to_string()))?
            }
            InputLayout::CasesEvents(totals) => {
                let (cases, events) = (number(1)?, number(2)?);
                let rest = |total: u64, part: u64, what: &str| {
                    total.checked_sub(part).ok_or_else(|| {
                        parse_err(format!("{what} {part} exceeds the study total {total}"))
                    })
                };
                let c2 = rest(totals.cases, cases, "cases")?;
                let n2 = rest(totals.events, events, "events")?;
                TwoByTwo::new(cases, events, c2, n2)
                    .map(CountData::Table)
                    .map_err(|e| parse_err(e.to_string()))?
            }
        };
        if !seen.insert(id.clone()) {
            return Err(parse_err(format!("duplicate id '{id}'")));
        }
        rows.push(StudyRow { id, counts });
    }
    StudyInput::new(layout.family(), rows)
}

/// Writes `input` in its family's explicit layout.
pub fn write_counts_csv<W: Write>(input: &StudyInput, writer: W) -> Result<()> {
    let ser = |e: csv::Error| Error::Serialize(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(InputLayout::Family(input.family).columns())
        .map_err(ser)?;
    for row in &input.rows {
        let record: Vec<String> = match row.counts {
            CountData::Pair(p) => vec![row.id.clone(), p.c1.to_string(), p.c2.to_string()],
            CountData::Table(t) => vec![
                row.id.clone(),
                t.c1.to_string(),
                t.n1.to_string(),
                t.c2.to_string(),
                t.n2.to_string(),
            ],
        };
        w.write_record(&record).map_err(ser)?;
    }
    w.flush().map_err(|e| Error::Serialize(e.to_string()))
}

/// Keeps rows whose total exceeds `min_total` and whose cells are all at
/// most `max_per_cell`. An absent bound does not filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterRule {
    pub min_total: Option<u64>,
    pub max_per_cell: Option<u64>,
}

impl FilterRule {
    pub fn keeps(&self, counts: &CountData) -> bool {
        let (c1, c2) = counts.cells();
        self.min_total.is_none_or(|min| counts.total() > min)
            && self.max_per_cell.is_none_or(|max| c1 <= max && c2 <= max)
    }
}

pub fn apply_filter(input: &StudyInput, rule: &FilterRule) -> StudyInput {
    StudyInput {
        family: input.family,
        rows: input
            .rows
            .iter()
            .filter(|r| rule.keeps(&r.counts))
            .cloned()
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupingKind {
    Metric,
    Quantile,
}

/// Distance used by metric grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    /// `delta` on the null distributions.
    Delta,
    /// Max-abs distance on conditioning statistics.
    Margins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcedureChoice {
    Wfdr,
    Bh,
    All,
}

impl ProcedureChoice {
    pub fn includes(&self, p: Procedure) -> bool {
        matches!(
            (self, p),
            (ProcedureChoice::All, _)
                | (ProcedureChoice::Wfdr, Procedure::Wfdr)
                | (ProcedureChoice::Bh, Procedure::Bh)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub sided: Sidedness,
    pub alpha: f64,
    pub groups: usize,
    pub grouping: GroupingKind,
    pub distance: DistanceKind,
    /// Minimal group size for metric grouping; defaults to `min(10, m / groups)`.
    pub min_group_size: Option<usize>,
    pub pi0: Pi0Config,
    pub seed: u64,
    pub procedure: ProcedureChoice,
    pub filter: FilterRule,
}

impl AnalyzeOptions {
    pub fn new(family: TestFamily, alpha: f64, groups: usize) -> Self {
        Self {
            sided: Sidedness::TwoSided,
            alpha,
            groups,
            grouping: GroupingKind::Quantile,
            distance: DistanceKind::Delta,
            min_group_size: None,
            pi0: Pi0Config::for_family(family),
            seed: 0,
            procedure: ProcedureChoice::All,
            filter: FilterRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if self.groups == 0 {
            return Err(Error::InvalidConfig("--groups must be at least 1".into()));
        }
        if self.min_group_size == Some(0) {
            return Err(Error::InvalidConfig(
                "minimal group size must be at least 1".into(),
            ));
        }
        self.pi0.validate()
    }

    fn grouping_method(&self, m: usize) -> Result<GroupingMethod> {
        if self.groups > m {
            return Err(Error::InvalidConfig(format!(
                "{} groups requested for {m} hypotheses",
                self.groups
            )));
        }
        Ok(match self.grouping {
            GroupingKind::Quantile => GroupingMethod::Quantile {
                l_star: self.groups,
            },
            GroupingKind::Metric => {
                let g_star = self
                    .min_group_size
                    .unwrap_or_else(|| default_min_group_size(m, self.groups));
                let cfg = GroupingConfig::new(self.groups, g_star);
                match self.distance {
                    DistanceKind::Delta => GroupingMethod::Metric(cfg),
                    DistanceKind::Margins => GroupingMethod::StatisticMetric(cfg),
                }
            }
        })
    }
}

/// One output row per analysed hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub id: String,
    pub pvalue: f64,
    pub group: Option<usize>,
    pub weight: Option<f64>,
    pub weighted_pvalue: Option<f64>,
    pub rejected_wfdr: Option<bool>,
    pub rejected_bh: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub size: usize,
    pub pi0: f64,
    pub weight: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisSummary {
    pub family: TestFamily,
    pub options: AnalyzeOptions,
    pub hypotheses_read: usize,
    pub hypotheses_analysed: usize,
    pub pi0_global: Option<f64>,
    pub pi0_overall: Option<f64>,
    pub groups: Vec<GroupSummary>,
    pub k_star: Option<usize>,
    pub k_tilde_star: Option<usize>,
    pub threshold_wfdr: Option<String>,
    pub threshold_bh: Option<f64>,
    pub rejections_wfdr: Option<usize>,
    pub rejections_bh: Option<usize>,
    pub comparison: Option<RejectionComparison>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub rows: Vec<ReportRow>,
    pub summary: AnalysisSummary,
}

fn format_extended(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        x.to_string()
    }
}

/// Filters the input, tests every hypothesis and runs the requested
/// procedures.
pub fn analyze(input: &StudyInput, opts: &AnalyzeOptions) -> Result<Analysis> {
    opts.validate()?;
    let kept = apply_filter(input, &opts.filter);
    if kept.is_empty() {
        return Err(Error::EmptyStudy);
    }
    let m = kept.len();
    let study = Study::from_counts(&kept.counts(), opts.sided)?;

    let weighted: Option<WfdrOutcome> = if opts.procedure.includes(Procedure::Wfdr) {
        let cfg = WfdrConfig {
            grouping: opts.grouping_method(m)?,
            pi0: opts.pi0,
        };
        Some(wfdr_reject(&study, opts.alpha, &cfg)?)
    } else {
        None
    };
    let bh: Option<RejectionReport> = opts
        .procedure
        .includes(Procedure::Bh)
        .then(|| bh_reject(&study.pvalues, opts.alpha));

    let assignment = weighted.as_ref().map(|w| w.partition.assignment());
    let wfdr_flags = weighted.as_ref().map(|w| w.report.rejection_flags(m));
    let bh_flags = bh.as_ref().map(|b| b.rejection_flags(m));
    let rows = kept
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let group = assignment.as_ref().map(|a| a[i]);
            ReportRow {
                id: row.id.clone(),
                pvalue: study.pvalues[i],
                group,
                weight: weighted
                    .as_ref()
                    .zip(group)
                    .map(|(w, g)| w.report.weights.as_ref().expect("weights present").get(g)),
                weighted_pvalue: weighted.as_ref().map(|w| w.weighted_pvalues[i]),
                rejected_wfdr: wfdr_flags.as_ref().map(|f| f[i]),
                rejected_bh: bh_flags.as_ref().map(|f| f[i]),
            }
        })
        .collect();

    let comparison = weighted.as_ref().and_then(|w| {
        compare_rejection_counts(
            &study.pvalues,
            &w.weighted_pvalues,
            w.report.pi0_overall.unwrap_or(1.0),
            opts.alpha,
        )
        .ok()
    });
    let groups = weighted.as_ref().map_or_else(Vec::new, |w| {
        let weights = w.report.weights.as_ref().expect("weights present");
        group_summaries(&w.partition, w, weights.0.as_slice())
    });
    let summary = AnalysisSummary {
        family: kept.family,
        options: opts.clone(),
        hypotheses_read: input.len(),
        hypotheses_analysed: m,
        pi0_global: weighted.as_ref().map(|w| w.pi0_global.value),
        pi0_overall: weighted.as_ref().and_then(|w| w.report.pi0_overall),
        groups,
        k_star: comparison
            .map(|c| c.k_star)
            .or_else(|| bh.as_ref().and_then(|b| b.k_star)),
        k_tilde_star: weighted.as_ref().and_then(|w| w.report.k_tilde_star),
        threshold_wfdr: weighted
            .as_ref()
            .map(|w| format_extended(w.report.threshold)),
        threshold_bh: bh.as_ref().map(|b| b.threshold),
        rejections_wfdr: weighted.as_ref().map(|w| w.report.num_rejected()),
        rejections_bh: bh.as_ref().map(RejectionReport::num_rejected),
        comparison,
    };
    Ok(Analysis { rows, summary })
}

fn group_summaries(
    partition: &Partition,
    outcome: &WfdrOutcome,
    weights: &[f64],
) -> Vec<GroupSummary> {
    partition
        .groups
        .iter()
        .zip(&outcome.group_estimates)
        .zip(weights)
        .map(|((g, e), &w)| GroupSummary {
            size: g.len(),
            pi0: e.value,
            weight: format_extended(w),
        })
        .collect()
}

fn optional<T: ToString>(v: Option<T>) -> Option<String> {
    v.map(|x| x.to_string())
}

/// Report rows as CSV; columns of procedures that were not run are omitted.
pub fn report_csv(analysis: &Analysis) -> Result<String> {
    let ser = |e: csv::Error| Error::Serialize(e.to_string());
    let first = analysis.rows.first();
    let has_wfdr = first.is_some_and(|r| r.rejected_wfdr.is_some());
    let has_bh = first.is_some_and(|r| r.rejected_bh.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id", "pvalue"];
    if has_wfdr {
        header.extend(["group", "weight", "weighted_pvalue", "rejected_wfdr"]);
    }
    if has_bh {
        header.push("rejected_bh");
    }
    w.write_record(&header).map_err(ser)?;
    for row in &analysis.rows {
        let mut record = vec![row.id.clone(), row.pvalue.to_string()];
        if has_wfdr {
            record.extend([
                optional(row.group).unwrap_or_default(),
                row.weight.map(format_extended).unwrap_or_default(),
                row.weighted_pvalue.map(format_extended).unwrap_or_default(),
                optional(row.rejected_wfdr).unwrap_or_default(),
            ]);
        }
        if has_bh {
            record.push(optional(row.rejected_bh).unwrap_or_default());
        }
        w.write_record(&record).map_err(ser)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Serialize(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialize(e.to_string()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `report.csv` and `summary.json` into `dir`.
pub fn write_analysis(analysis: &Analysis, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write_file(&dir.join("report.csv"), &report_csv(analysis)?)?;
    let json = serde_json::to_string_pretty(&analysis.summary)
        .map_err(|e| Error::Serialize(e.to_string()))?;
    write_file(&dir.join("summary.json"), &(json + "\n"))
}

/// Runs the simulation grid and writes `summary.json` and `summary.csv`
/// into `dir`.
pub fn simulate_to_dir(cfg: &ScenarioConfig, threads: Option<usize>, dir: &Path) -> Result<()> {
    let result = run_study(cfg, threads)?;
    ensure_dir(dir)?;
    write_file(&dir.join("summary.json"), &(result.summary_json()? + "\n"))?;
    write_file(&dir.join("summary.csv"), &result.long_table_csv()?)
}
