//! Command-line front end: `wfdr analyze` and `wfdr simulate`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use wfdr::exact_tests::{Sidedness, TestFamily};
use wfdr::io::{
    analyze, parse_counts_file, simulate_to_dir, write_analysis, AnalyzeOptions, DistanceKind,
    FilterRule, GroupingKind, InputLayout, ProcedureChoice, StudyTotals,
};
use wfdr::proportion::Pi0Config;
use wfdr::sim::{ScenarioConfig, SimGrouping};
use wfdr::Error;

#[derive(Parser)]
#[command(
    name = "wfdr",
    version,
    about = "Weighted FDR control for discrete p-values"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test every row of a count table and apply the FDR procedures.
    Analyze(AnalyzeArgs),
    /// Run the simulation grid and write summary tables.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Binomial,
    Fet,
}

impl From<FamilyArg> for TestFamily {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::Binomial => TestFamily::Binomial,
            FamilyArg::Fet => TestFamily::Fet,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SidedArg {
    One,
    Two,
}

impl From<SidedArg> for Sidedness {
    fn from(s: SidedArg) -> Self {
        match s {
            SidedArg::One => Sidedness::OneSided,
            SidedArg::Two => Sidedness::TwoSided,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupingArg {
    Metric,
    Quantile,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DistanceArg {
    Delta,
    Margins,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProcedureArg {
    Wfdr,
    Bh,
    All,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long = "test", value_enum)]
    family: FamilyArg,
    #[arg(long, value_enum, default_value = "two")]
    sided: SidedArg,
    #[arg(long)]
    alpha: f64,
    /// Number of groups.
    #[arg(long)]
    groups: usize,
    #[arg(long, value_enum, default_value = "quantile")]
    grouping: GroupingArg,
    /// Distance for metric grouping.
    #[arg(long, value_enum, default_value = "delta")]
    distance: DistanceArg,
    /// Minimal group size for metric grouping [default: min(10, m / groups)].
    #[arg(long)]
    min_group_size: Option<usize>,
    /// Largest guiding value [default: 0.2 binomial, 0.5 fet].
    #[arg(long)]
    lambda_max: Option<f64>,
    /// Guiding grid step [default: 0.0005 binomial, 0.008 fet].
    #[arg(long)]
    step: Option<f64>,
    /// Recorded in the summary; the analysis itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    input: PathBuf,
    /// Output directory for report.csv and summary.json.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    procedure: ProcedureArg,
    /// Read `id,cases,events` rows and complete them against these totals.
    #[arg(long, value_name = "CASES,EVENTS")]
    study_totals: Option<StudyTotals>,
    /// Keep rows whose total count is strictly greater than this.
    #[arg(long)]
    min_total: Option<u64>,
    /// Keep rows whose cell counts are all at most this.
    #[arg(long)]
    max_per_cell: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long)]
    m: usize,
    #[arg(long = "pi0", required = true)]
    pi0s: Vec<f64>,
    #[arg(long = "alpha", required = true)]
    alphas: Vec<f64>,
    #[arg(long = "l-star", required = true)]
    l_stars: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for summary.json and summary.csv.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "two")]
    sided: SidedArg,
    #[arg(long, value_enum, default_value = "quantile")]
    grouping: GroupingArg,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    step: Option<f64>,
    /// Worker threads [default: all cores].
    #[arg(long, env = "WFDR_THREADS")]
    threads: Option<usize>,
}

fn pi0_config(
    family: TestFamily,
    lambda_max: Option<f64>,
    step: Option<f64>,
) -> wfdr::Result<Pi0Config> {
    let d = Pi0Config::for_family(family);
    Pi0Config::new(lambda_max.unwrap_or(d.lambda_max), step.unwrap_or(d.step))
}

fn run_analyze(a: AnalyzeArgs) -> wfdr::Result<()> {
    let family = TestFamily::from(a.family);
    let layout = match a.study_totals {
        Some(_) if family != TestFamily::Fet => {
            return Err(Error::InvalidConfig(
                "--study-totals requires --test fet".into(),
            ))
        }
        Some(t) => InputLayout::CasesEvents(t),
        None => InputLayout::Family(family),
    };
    if a.distance == DistanceArg::Margins && matches!(a.grouping, GroupingArg::Quantile) {
        info!("--distance only affects metric grouping");
    }
    let opts = AnalyzeOptions {
        sided: a.sided.into(),
        alpha: a.alpha,
        groups: a.groups,
        grouping: match a.grouping {
            GroupingArg::Metric => GroupingKind::Metric,
            GroupingArg::Quantile => GroupingKind::Quantile,
        },
        distance: match a.distance {
            DistanceArg::Delta => DistanceKind::Delta,
            DistanceArg::Margins => DistanceKind::Margins,
        },
        min_group_size: a.min_group_size,
        pi0: pi0_config(family, a.lambda_max, a.step)?,
        seed: a.seed,
        procedure: match a.procedure {
            ProcedureArg::Wfdr => ProcedureChoice::Wfdr,
            ProcedureArg::Bh => ProcedureChoice::Bh,
            ProcedureArg::All => ProcedureChoice::All,
        },
        filter: FilterRule {
            min_total: a.min_total,
            max_per_cell: a.max_per_cell,
        },
    };
    opts.validate()?;
    let input = parse_counts_file(&a.input, layout)?;
    let analysis = analyze(&input, &opts)?;
    write_analysis(&analysis, &a.output)?;
    info!(
        "analysed {} of {} hypotheses; results in {}",
        analysis.summary.hypotheses_analysed,
        analysis.summary.hypotheses_read,
        a.output.display()
    );
    Ok(())
}

fn run_simulate(a: SimulateArgs) -> wfdr::Result<()> {
    let family = TestFamily::from(a.family);
    let cfg = ScenarioConfig {
        family,
        m: a.m,
        pi0s: a.pi0s,
        alphas: a.alphas,
        l_stars: a.l_stars,
        replications: a.reps,
        master_seed: a.seed,
        sided: a.sided.into(),
        grouping: match a.grouping {
            GroupingArg::Metric => SimGrouping::Metric,
            GroupingArg::Quantile => SimGrouping::Quantile,
        },
        pi0_config: pi0_config(family, a.lambda_max, a.step)?,
    };
    simulate_to_dir(&cfg, a.threads, &a.output)?;
    info!("simulation summary written to {}", a.output.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => run_analyze(a),
        Command::Simulate(a) => run_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wfdr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
