use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mpcp_alloc::experiment::{self, SweepResult, SweepSpec, CORE_MULTIPLE_NOTE};
use mpcp_alloc::partition::{min_cores, DEFAULT_BETA};
use mpcp_alloc::{Algorithm, Allocation, GenConfig, GenMode, TaskSet};
use serde::Serialize;

mod report;

/// Blocking analysis, response-time test and blocking-aware partitioning
/// for partitioned fixed-priority multicores under MPCP.
#[derive(Parser, Debug)]
#[command(name = "mpcp-alloc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate one task set and print it as JSON
    Gen(GenArgs),
    /// Report PBU, blocking, response times and verdict for a task set
    Analyze(AnalyzeArgs),
    /// Allocate a task set to cores
    Partition(PartitionArgs),
    /// Minimum-core study over load and critical-section ratio
    SweepCores(SweepArgs),
    /// Schedulable-ratio study along one axis
    SweepRatio(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Total utilization S of the set
    #[arg(long, default_value_t = 8.0)]
    load: f64,
    /// Critical-section length as a fraction of the WCET
    #[arg(long, default_value_t = 0.12)]
    cs_ratio: f64,
    /// Per-task utilization range, as LO:HI
    #[arg(long, value_parser = parse_range, conflicts_with = "util")]
    util_range: Option<(f64, f64)>,
    /// Fixed per-task utilization
    #[arg(long)]
    util: Option<f64>,
    #[arg(long, default_value_t = 5)]
    resources_per_group: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Constrained)]
    gen_mode: ModeArg,
    /// Write the set here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Constrained,
    Uunifast,
}

impl From<ModeArg> for GenMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Constrained => GenMode::Constrained,
            ModeArg::Uunifast => GenMode::Uunifast,
        }
    }
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Task-set JSON file
    file: PathBuf,
    /// Allocation JSON file: {"cores": m, "assignment": [core of task 0, ...]}
    #[arg(long, conflicts_with = "assign")]
    allocation: Option<PathBuf>,
    /// Inline allocation: core of each task in id order, e.g. 0,0,1
    #[arg(long, value_delimiter = ',')]
    assign: Option<Vec<usize>>,
    /// Core count; defaults to the allocation's highest core + 1, or the
    /// smallest count BR-WFD succeeds with
    #[arg(long)]
    cores: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args, Debug)]
struct PartitionArgs {
    /// Task-set JSON file
    file: PathBuf,
    #[arg(long, default_value = "brwfd", value_parser = parse_algorithm)]
    algorithm: Algorithm,
    /// Core count; when omitted, the smallest count that succeeds
    #[arg(long)]
    cores: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// System loads S
    #[arg(long, value_delimiter = ',', default_value = "8")]
    load: Vec<f64>,
    /// Critical-section ratios
    #[arg(long, value_delimiter = ',', default_value = "0.12")]
    cs_ratio: Vec<f64>,
    /// Per-task utilization ranges, as LO:HI (repeatable)
    #[arg(long, value_parser = parse_range, conflicts_with = "util")]
    util_range: Vec<(f64, f64)>,
    /// Fixed per-task utilizations
    #[arg(long, value_delimiter = ',')]
    util: Vec<f64>,
    /// Core multiples μ; the core count becomes ⌈μ·S⌉
    #[arg(long, value_delimiter = ',')]
    core_multiple: Vec<f64>,
    /// Fixed core count for ratio sweeps (default 2·⌈S⌉)
    #[arg(long)]
    cores: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "5")]
    resources_per_group: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    #[arg(long, value_delimiter = ',', default_value = "brwfd,wfd", value_parser = parse_algorithm)]
    algorithms: Vec<Algorithm>,
    #[arg(long, value_enum, default_value_t = ModeArg::Constrained)]
    gen_mode: ModeArg,
    /// Output directory for records.jsonl, summary and meta.json; the
    /// summary goes to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got `{s}`"))?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((num(lo)?, num(hi)?))
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse()
}

/// Errors in user input; reported with exit status 2.
#[derive(Debug)]
struct InputError(String);

impl<E: std::fmt::Display> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, InputError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Gen(args) => gen(args),
        Command::Analyze(args) => analyze(args),
        Command::Partition(args) => partition(args),
        Command::SweepCores(args) => sweep(args, Study::Cores),
        Command::SweepRatio(args) => sweep(args, Study::Ratio),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(InputError(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| InputError(format!("{}: {e}", path.display())))
        }
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn gen(args: GenArgs) -> CliResult {
    let util_range = match (args.util, args.util_range) {
        (Some(u), _) => (u, u),
        (None, Some(r)) => r,
        (None, None) => GenConfig::default().util_range,
    };
    let cfg = GenConfig {
        total_load: args.load,
        cs_ratio: args.cs_ratio,
        util_range,
        resources_per_group: args.resources_per_group,
        seed: args.seed,
        mode: args.gen_mode.into(),
        ..GenConfig::default()
    };
    let ts = mpcp_alloc::generate(&cfg)?;
    emit(args.out.as_deref(), &(ts.to_json_pretty() + "\n"))
}

fn read_task_set(path: &Path) -> CliResult<TaskSet> {
    let text =
        fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
    TaskSet::from_json(&text).map_err(|e| InputError(format!("{}: {e}", path.display())))
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct AllocationDoc {
    cores: Option<usize>,
    assignment: Vec<usize>,
}

fn user_allocation(
    ts: &TaskSet,
    assignment: &[usize],
    cores: Option<usize>,
) -> CliResult<Allocation> {
    if assignment.len() != ts.len() {
        return Err(InputError(format!(
            "allocation covers {} tasks, the set has {}",
            assignment.len(),
            ts.len()
        )));
    }
    let cores = cores.unwrap_or_else(|| assignment.iter().max().map_or(1, |&c| c + 1));
    Ok(Allocation::from_cores(ts, cores, assignment)?)
}

fn analyze(args: AnalyzeArgs) -> CliResult {
    let ts = read_task_set(&args.file)?;
    let (alloc, source) = if let Some(path) = &args.allocation {
        let text =
            fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
        let doc: AllocationDoc = serde_json::from_str(&text)
            .map_err(|e| InputError(format!("{}: {e}", path.display())))?;
        (
            user_allocation(&ts, &doc.assignment, args.cores.or(doc.cores))?,
            "user",
        )
    } else if let Some(assignment) = &args.assign {
        (user_allocation(&ts, assignment, args.cores)?, "user")
    } else {
        let outcome = match args.cores {
            Some(m) => Algorithm::Brwfd.allocate(&ts, m, args.beta),
            None => match min_cores(&ts, Algorithm::Brwfd, args.beta, None) {
                Ok(found) => found.outcome,
                Err(e) => Algorithm::Brwfd.allocate(&ts, e.cap, args.beta),
            },
        };
        (outcome.last_allocation().clone(), "brwfd")
    };
    let report = report::analyze(&ts, &alloc, args.beta, source);
    let text = match args.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Csv => report::csv(&report)?,
        Format::Table => report::table(&report),
    };
    emit(None, &text)
}

fn partition(args: PartitionArgs) -> CliResult {
    let ts = read_task_set(&args.file)?;
    let (outcome, attempts, cap) = match args.cores {
        Some(m) => (args.algorithm.allocate(&ts, m, args.beta), vec![m], None),
        None => match min_cores(&ts, args.algorithm, args.beta, None) {
            Ok(found) => (found.outcome, found.attempts, None),
            Err(e) => (
                args.algorithm.allocate(&ts, e.cap, args.beta),
                Vec::new(),
                Some(e.cap),
            ),
        },
    };
    let report = report::partition(&ts, args.algorithm, args.beta, &outcome, attempts, cap);
    emit(None, &(serde_json::to_string_pretty(&report)? + "\n"))
}

#[derive(Clone, Copy, PartialEq)]
enum Study {
    Cores,
    Ratio,
}

#[derive(Serialize)]
struct Meta<'a> {
    study: &'static str,
    version: &'static str,
    spec: &'a SweepSpec,
    points: usize,
    records: usize,
    notes: Vec<&'static str>,
}

fn sweep(args: SweepArgs, study: Study) -> CliResult {
    let util_ranges = if !args.util.is_empty() {
        args.util.iter().map(|&u| (u, u)).collect()
    } else if !args.util_range.is_empty() {
        args.util_range.clone()
    } else {
        vec![GenConfig::default().util_range]
    };
    if study == Study::Cores && (!args.core_multiple.is_empty() || args.cores.is_some()) {
        return Err(InputError(
            "--cores and --core-multiple apply to sweep-ratio only".into(),
        ));
    }
    let spec = SweepSpec {
        base: GenConfig {
            mode: args.gen_mode.into(),
            ..GenConfig::default()
        },
        loads: args.load,
        cs_ratios: args.cs_ratio,
        util_ranges,
        core_multiples: args.core_multiple,
        resources_per_group: args.resources_per_group,
        cores: args.cores,
        trials: args.trials,
        algorithms: args.algorithms,
        seed: args.seed,
        beta: args.beta,
    };
    let run = || match study {
        Study::Cores => experiment::sweep_cores(&spec),
        Study::Ratio => experiment::sweep_ratio(&spec),
    };
    let result: SweepResult = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(run)?,
        None => run()?,
    };

    let mut summary = Vec::new();
    match args.format {
        Format::Json => experiment::write_summary_json(&result.summary, &mut summary)?,
        _ => experiment::write_summary_csv(&result.summary, &mut summary)?,
    }
    let Some(dir) = args.out else {
        io::stdout().write_all(&summary)?;
        return Ok(());
    };
    fs::create_dir_all(&dir).map_err(|e| InputError(format!("{}: {e}", dir.display())))?;
    let mut records = Vec::new();
    experiment::write_records(&result.records, &mut records)?;
    let meta = Meta {
        study: match study {
            Study::Cores => "sweep-cores",
            Study::Ratio => "sweep-ratio",
        },
        version: env!("CARGO_PKG_VERSION"),
        spec: &spec,
        points: result.records.last().map_or(0, |r| r.point_index + 1),
        records: result.records.len(),
        notes: if spec.core_multiples.is_empty() {
            Vec::new()
        } else {
            vec![CORE_MULTIPLE_NOTE]
        },
    };
    let summary_name = match args.format {
        Format::Json => "summary.json",
        _ => "summary.csv",
    };
    let write = |name: &str, bytes: &[u8]| {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| InputError(format!("{}: {e}", path.display())))
    };
    write("records.jsonl", &records)?;
    write(summary_name, &summary)?;
    write(
        "meta.json",
        (serde_json::to_string_pretty(&meta)? + "\n").as_bytes(),
    )?;
    Ok(())
}
