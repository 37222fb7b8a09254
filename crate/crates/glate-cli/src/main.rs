//! `glate`: grouped LATE estimation from many discrete instruments.
//!
//! Subcommands: `estimate` (run the two-step procedure on a CSV extract),
//! `simulate` (Monte Carlo over the reference designs), and `replicate`
//! (the preset designs at full replication counts).

mod config;
mod errors;
mod load;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use glate::clubs;
use glate::data::EstimationData;
use glate::late::{self, EstimateOptions, UnionSpec};
use glate::regress::SeKind;
use glate::sim::{self, McConfig, SampleSize};

use errors::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "glate", version, about = "Grouped LATE estimation from judge instruments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run club selection and all pair estimators on a CSV dataset.
    Estimate(EstimateArgs),
    /// Run the Monte Carlo harness on a preset scenario.
    Simulate(SimulateArgs),
    /// Run a preset scenario at the full replication count and emit its tables.
    Replicate(ReplicateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SeFlag {
    Homoskedastic,
    Robust,
}

impl From<SeFlag> for SeKind {
    fn from(f: SeFlag) -> Self {
        match f {
            SeFlag::Homoskedastic => SeKind::Homoskedastic,
            SeFlag::Robust => SeKind::HcRobust,
        }
    }
}

impl std::str::FromStr for SeFlag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "homoskedastic" => Ok(SeFlag::Homoskedastic),
            "robust" => Ok(SeFlag::Robust),
            other => Err(format!("unknown se kind {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SizeFlag {
    Small,
    Large,
}

impl From<SizeFlag> for SampleSize {
    fn from(f: SizeFlag) -> Self {
        match f {
            SizeFlag::Small => SampleSize::Small,
            SizeFlag::Large => SampleSize::Large,
        }
    }
}

impl std::str::FromStr for SizeFlag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "small" => Ok(SizeFlag::Small),
            "large" => Ok(SizeFlag::Large),
            other => Err(format!("unknown sample size {other:?}")),
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Optional key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Outcome column name.
    #[arg(long)]
    outcome: Option<String>,
    /// Treatment column name (values 0/1).
    #[arg(long)]
    treatment: Option<String>,
    /// Judge / instrument column name.
    #[arg(long)]
    judge: Option<String>,
    /// Optional case-id column.
    #[arg(long)]
    case_id: Option<String>,
    /// Comma-separated control columns; categoricals are one-hot expanded.
    #[arg(long)]
    controls: Option<String>,
    /// Significance level for both F-test selection stages.
    #[arg(long)]
    alpha: Option<f64>,
    /// Judges with fewer cases are screened out.
    #[arg(long = "min-cases")]
    min_cases: Option<usize>,
    /// First-stage F below this flags the pair as weak.
    #[arg(long = "fs-threshold")]
    fs_threshold: Option<f64>,
    /// Standard-error kind: homoskedastic | robust.
    #[arg(long)]
    se: Option<SeFlag>,
    /// Output directory for clubs.csv, pairs.csv, selection.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for interface uniformity; estimation is deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario preset: no-invalid | few-invalid | many-invalid.
    #[arg(long)]
    scenario: Option<String>,
    /// Per-judge case scale: small | large.
    #[arg(long)]
    size: Option<SizeFlag>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated alpha grid.
    #[arg(long)]
    alphas: Option<String>,
    /// Draws for the oracle LATE table.
    #[arg(long = "oracle-draws")]
    oracle_draws: Option<usize>,
    #[arg(long = "min-cases")]
    min_cases: Option<usize>,
    #[arg(long = "fs-threshold")]
    fs_threshold: Option<f64>,
    #[arg(long)]
    se: Option<SeFlag>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TableFlag {
    Classification,
    Late,
    Raw,
    All,
}

#[derive(Args)]
struct ReplicateArgs {
    /// Which table to emit.
    #[arg(long, value_enum, default_value_t = TableFlag::All)]
    table: TableFlag,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    size: Option<SizeFlag>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "oracle-draws")]
    oracle_draws: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    init_thread_pool();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => run_estimate(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Replicate(args) => run_replicate(args),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.code);
    }
}

/// GLATE_THREADS caps the rayon pool; unset means the rayon default.
fn init_thread_pool() {
    if let Ok(v) = std::env::var("GLATE_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> CliResult<config::ConfigFile> {
    match path {
        Some(p) => config::ConfigFile::load(p),
        None => Ok(config::ConfigFile::default()),
    }
}

fn parse_alphas(raw: &str) -> CliResult<Vec<f64>> {
    let grid: Result<Vec<f64>, _> = raw.split(',').map(|a| a.trim().parse()).collect();
    let grid = grid.map_err(|_| CliError::validation(format!("bad alpha list {raw:?}")))?;
    if grid.is_empty() || grid.iter().any(|&a| !(0.0..1.0).contains(&a) || a == 0.0) {
        return Err(CliError::validation("alphas must lie in (0,1)"));
    }
    Ok(grid)
}

fn run_estimate(mut args: EstimateArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    cfg.fill(&mut args.outcome, "outcome")?;
    cfg.fill(&mut args.treatment, "treatment")?;
    cfg.fill(&mut args.judge, "judge")?;
    cfg.fill(&mut args.case_id, "case_id")?;
    cfg.fill(&mut args.controls, "controls")?;
    cfg.fill(&mut args.alpha, "alpha")?;
    cfg.fill(&mut args.min_cases, "min_cases")?;
    cfg.fill(&mut args.fs_threshold, "fs_threshold")?;
    cfg.fill(&mut args.se, "se")?;
    cfg.fill(&mut args.out, "out")?;

    let spec = load::ColumnSpec {
        outcome: args.outcome.ok_or_else(|| CliError::validation("missing --outcome"))?,
        treatment: args.treatment.ok_or_else(|| CliError::validation("missing --treatment"))?,
        judge: args.judge.ok_or_else(|| CliError::validation("missing --judge"))?,
        case_id: args.case_id,
        controls: args
            .controls
            .map(|c| c.split(',').map(|s| s.trim().to_string()).collect())
            .unwrap_or_default(),
    };
    let alpha = args.alpha.unwrap_or(0.01);
    let min_cases = args.min_cases.unwrap_or(20);
    let opts = EstimateOptions {
        se_kind: args.se.unwrap_or(SeFlag::Robust).into(),
        fs_threshold: args.fs_threshold.unwrap_or(late::FS_THRESHOLD_DEFAULT),
    };
    let out_dir = args.out.unwrap_or_else(|| PathBuf::from("."));

    let (table, control_names) = load::load_cases(&args.data, &spec)?;
    eprintln!(
        "loaded {} cases, {} judges, {} control columns",
        table.len(),
        {
            let mut j: Vec<&String> = table.judge_ids.iter().collect();
            j.sort();
            j.dedup();
            j.len()
        },
        control_names.len()
    );
    let data = EstimationData::from_case_table(&table, &control_names)?;
    let profiles = clubs::estimate_propensities(&data)?;
    let assignment = clubs::select_clubs(&profiles, &data, alpha, min_cases)?;
    let cleaned = clubs::drop_degenerate_clubs(&assignment);
    output::write_clubs(&out_dir, &profiles, &cleaned)?;

    let pairs = match late::enumerate_pairs(&cleaned) {
        Ok(p) => p,
        Err(glate::Error::TooFewClubs) => {
            output::write_pairs_note(&out_dir, "fewer than two usable clubs; no pairs estimated")?;
            output::write_selection(&out_dir, &[])?;
            eprintln!("wrote clubs.csv, pairs.csv (note), selection.csv to {}", out_dir.display());
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };

    let mut selections = Vec::new();
    for (c, members) in cleaned.clubs.members.iter().enumerate() {
        selections.push(late::select_valid_or_whole(&data, c, members, alpha)?);
    }
    let mut estimates = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let pair_id = i + 1;
        estimates.push((pair_id, late::estimate_pair_single(&data, pair, opts)?));
        estimates.push((
            pair_id,
            late::estimate_pair_union(&data, &UnionSpec::new(pair.clone()), opts)?,
        ));
        estimates.push((pair_id, late::estimate_pair_median(&data, pair, opts)?));
        estimates.push((
            pair_id,
            late::estimate_pair_post_selection(
                &data,
                pair,
                &selections[pair.reference_club],
                &selections[pair.focal_club],
                true,
                opts,
            )?,
        ));
    }
    output::write_pairs(&out_dir, &estimates)?;
    output::write_selection(&out_dir, &selections)?;
    eprintln!("wrote clubs.csv, pairs.csv, selection.csv to {}", out_dir.display());
    Ok(())
}

fn build_scenario(
    scenario: Option<String>,
    size: Option<SizeFlag>,
    reps: Option<usize>,
    seed: Option<u64>,
    alphas: Option<String>,
) -> CliResult<sim::SimScenario> {
    let name = scenario.ok_or_else(|| CliError::validation("missing --scenario"))?;
    let size = size.ok_or_else(|| CliError::validation("missing --size"))?;
    let mut sc = sim::scenario_preset(&name, size.into())?;
    if let Some(r) = reps {
        sc.reps = r;
    }
    sc.seed = seed.unwrap_or(0);
    if let Some(raw) = alphas {
        sc.alpha_grid = parse_alphas(&raw)?;
    }
    Ok(sc)
}

fn run_simulate(mut args: SimulateArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    cfg.fill(&mut args.scenario, "scenario")?;
    cfg.fill(&mut args.size, "size")?;
    cfg.fill(&mut args.reps, "reps")?;
    cfg.fill(&mut args.seed, "seed")?;
    cfg.fill(&mut args.alphas, "alphas")?;
    cfg.fill(&mut args.oracle_draws, "oracle_draws")?;
    cfg.fill(&mut args.min_cases, "min_cases")?;
    cfg.fill(&mut args.fs_threshold, "fs_threshold")?;
    cfg.fill(&mut args.se, "se")?;
    cfg.fill(&mut args.out, "out")?;

    let sc = build_scenario(args.scenario, args.size, args.reps, args.seed, args.alphas)?;
    let mc = McConfig {
        oracle_draws: args.oracle_draws.unwrap_or(1_000_000),
        min_cases: args.min_cases.unwrap_or(1),
        estimate: EstimateOptions {
            se_kind: args.se.unwrap_or(SeFlag::Robust).into(),
            fs_threshold: args.fs_threshold.unwrap_or(late::FS_THRESHOLD_DEFAULT),
        },
    };
    let out_dir = args.out.unwrap_or_else(|| PathBuf::from("."));
    let report = sim::run_monte_carlo(&sc, &mc)?;
    output::write_classification(&out_dir, &report)?;
    output::write_late(&out_dir, &report)?;
    output::write_raw(&out_dir, &report)?;
    eprintln!(
        "wrote classification.csv, late.csv, raw_estimates.csv to {}",
        out_dir.display()
    );
    Ok(())
}

fn run_replicate(mut args: ReplicateArgs) -> CliResult<()> {
    let cfg = load_config(&args.config)?;
    cfg.fill(&mut args.scenario, "scenario")?;
    cfg.fill(&mut args.size, "size")?;
    cfg.fill(&mut args.reps, "reps")?;
    cfg.fill(&mut args.seed, "seed")?;
    cfg.fill(&mut args.oracle_draws, "oracle_draws")?;
    cfg.fill(&mut args.out, "out")?;

    let sc = build_scenario(args.scenario, args.size, args.reps, args.seed, None)?;
    let mc = McConfig {
        oracle_draws: args.oracle_draws.unwrap_or(10_000_000),
        ..McConfig::default()
    };
    let out_dir = args.out.unwrap_or_else(|| PathBuf::from("."));
    let report = sim::run_monte_carlo(&sc, &mc)?;
    let mut written = Vec::new();
    if matches!(args.table, TableFlag::Classification | TableFlag::All) {
        written.push(output::write_classification(&out_dir, &report)?);
    }
    if matches!(args.table, TableFlag::Late | TableFlag::All) {
        written.push(output::write_late(&out_dir, &report)?);
    }
    if matches!(args.table, TableFlag::Raw | TableFlag::All) {
        written.push(output::write_raw(&out_dir, &report)?);
    }
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}
