//! `brainmap` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use brainmap::datasets::{
    generate_erf, generate_toy, load_binary, load_csv, save_binary, save_csv, Dataset, ErfConfig,
    GroundTruth, Layout, Preprocessing,
};
use brainmap::decoders::LambdaGrid;
use brainmap::metrics::Mode;
use brainmap::resampling::FitOptions;
use brainmap::selection::{select, SelectionConfig, SelectionResult};
use brainmap::UnitVector;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::svg::{emit_svg_curves, emit_svg_map, CurvePoint};

const SCHEMA: u32 = 1;

#[derive(Parser, Debug)]
#[command(
    name = "brainmap",
    version,
    about = "Interpretability-aware model selection for linear brain decoders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset plus its ground-truth sidecar.
    Gen {
        #[command(subcommand)]
        kind: GenKind,
    },
    /// Run the model selection over a lambda grid.
    Select(SelectArgs),
    /// Reproduce the toy-problem comparison table.
    Table1(Table1Args),
    /// Render SVG plots from a saved selection result.
    Report(ReportArgs),
}

#[derive(Subcommand, Debug)]
enum GenKind {
    /// Two-feature toy problem with a known true map [1, 0].
    Toy {
        /// Trials per class.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; `.csv` selects CSV, anything else the binary format.
        #[arg(long)]
        out: PathBuf,
    },
    /// Channel x time evoked-response trials.
    Erf {
        #[arg(long, default_value_t = 10)]
        channels: usize,
        #[arg(long, default_value_t = 50)]
        timepoints: usize,
        /// Trials per class.
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    data: PathBuf,
    /// Ground-truth sidecar; defaults to `<data>.truth.json`.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "exact")]
    mode: Mode,
    /// Comma-separated increasing lambdas.
    #[arg(long, conflicts_with = "lambda")]
    grid: Option<LambdaGrid>,
    /// A single lambda instead of a grid.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 50)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    omega1: f64,
    #[arg(long, default_value_t = 1.0)]
    omega2: f64,
    #[arg(long, default_value_t = 0.6)]
    kappa: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: bool,
    #[arg(long)]
    no_stratify: bool,
    /// none, center or standardize; defaults to the sidecar's choice, then
    /// standardize.
    #[arg(long)]
    preprocess: Option<Preprocessing>,
}

#[derive(Args, Debug)]
struct Table1Args {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Seed of the bootstrap plan.
    #[arg(long, default_value_t = 11)]
    plan_seed: u64,
    #[arg(long, default_value_t = 50)]
    m: usize,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// A `selection.json` written by `select`.
    #[arg(long)]
    result: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Ground truth stored next to a dataset file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    schema: u32,
    theta_star: Option<UnitVector>,
    cerf_reference: Option<UnitVector>,
    /// Preprocessing the generator recommends for this data.
    preprocessing: Preprocessing,
    layout: Option<Layout>,
}

#[derive(Debug, Serialize)]
struct SelectReport<'a> {
    schema: u32,
    dataset: &'a str,
    layout: Option<Layout>,
    config: &'a SelectionConfig,
    result: &'a SelectionResult,
}

#[derive(Debug, Deserialize)]
struct SavedReport {
    schema: u32,
    layout: Option<Layout>,
    result: SavedResult,
}

#[derive(Debug, Deserialize)]
struct SavedResult {
    best_by_zeta: f64,
    rows: Vec<SavedRow>,
}

#[derive(Debug, Deserialize)]
struct SavedRow {
    #[serde(flatten)]
    point: CurvePoint,
    main_map: Option<UnitVector>,
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<brainmap::Error> for Failure {
    fn from(e: brainmap::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| run(cli.command));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("INTERP_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        Failure::Usage(format!(
            "INTERP_THREADS must be a non-negative integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(anyhow!(e)))
}

/// Generator and config errors only ever reject arguments.
fn usage(e: brainmap::Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Gen { kind } => cmd_gen(kind),
        Command::Select(args) => cmd_select(args),
        Command::Table1(args) => cmd_table1(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn sidecar_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".truth.json");
    PathBuf::from(s)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen(kind: GenKind) -> Result<(), Failure> {
    let (data, truth, preprocessing, out) = match kind {
        GenKind::Toy { n, seed, out } => {
            let (d, t) = generate_toy(n, seed).map_err(usage)?;
            (d, t, Preprocessing::None, out)
        }
        GenKind::Erf {
            channels,
            timepoints,
            n,
            snr,
            seed,
            out,
        } => {
            let cfg = ErfConfig {
                seed,
                ..ErfConfig::new(channels, timepoints, n, snr)
            };
            let (d, t) = generate_erf(&cfg).map_err(usage)?;
            // no intercept is fitted and only one class carries signal
            (d, t, Preprocessing::Center, out)
        }
    };
    if is_csv(&out) {
        save_csv(&data, &out)?;
    } else {
        save_binary(&data, &out)?;
    }
    let sidecar = Sidecar {
        schema: SCHEMA,
        theta_star: truth.theta_star,
        cerf_reference: truth.cerf_reference,
        preprocessing,
        layout: data.layout(),
    };
    write_json(&sidecar_path(&out), &sidecar)?;
    Ok(())
}

fn load_dataset(path: &Path, layout: Option<Layout>) -> anyhow::Result<Dataset> {
    let d = if is_csv(path) {
        load_csv(path)
    } else {
        load_binary(path)
    }
    .with_context(|| format!("loading {}", path.display()))?;
    match (d.layout(), layout) {
        (None, Some(l)) => Ok(Dataset::new(
            d.x().clone(),
            d.y().to_vec(),
            Some(l),
            d.name(),
        )?),
        _ => Ok(d),
    }
}

fn read_sidecar(path: &Path) -> anyhow::Result<Sidecar> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let s: Sidecar =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if s.schema != SCHEMA {
        return Err(anyhow!(
            "{}: unsupported schema {}",
            path.display(),
            s.schema
        ));
    }
    Ok(s)
}

fn cmd_select(args: SelectArgs) -> Result<(), Failure> {
    let grid = match (args.grid, args.lambda) {
        (_, Some(l)) => LambdaGrid::new(vec![l]).map_err(usage)?,
        (Some(g), None) => g,
        (None, None) => LambdaGrid::standard(),
    };
    let truth_path = args.truth.unwrap_or_else(|| sidecar_path(&args.data));
    let sidecar = if truth_path.exists() {
        Some(read_sidecar(&truth_path)?)
    } else if args.mode == Mode::Heuristic {
        None
    } else {
        return Err(Failure::Runtime(anyhow!(
            "exact mode needs a ground-truth sidecar, {} not found",
            truth_path.display()
        )));
    };
    let preprocessing = args
        .preprocess
        .or(sidecar.as_ref().map(|s| s.preprocessing))
        .unwrap_or_default();
    let cfg = SelectionConfig {
        omega1: args.omega1,
        omega2: args.omega2,
        kappa: args.kappa,
        grid,
        m: args.m,
        seed: args.seed,
        mode: args.mode,
        stratify: !args.no_stratify,
        fit: FitOptions {
            preprocessing,
            ..Default::default()
        },
    };
    cfg.validate().map_err(usage)?;

    let data = load_dataset(&args.data, sidecar.as_ref().and_then(|s| s.layout))?;
    let truth = match sidecar {
        Some(s) => GroundTruth {
            theta_star: s.theta_star,
            cerf_reference: s.cerf_reference,
        },
        None => GroundTruth::default(),
    };
    let result = select(&data, &truth, &cfg)?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let csv_path = args.out.join("selection.csv");
    fs::write(&csv_path, selection_csv(&result))
        .with_context(|| format!("writing {}", csv_path.display()))?;
    let report = SelectReport {
        schema: SCHEMA,
        dataset: data.name(),
        layout: data.layout(),
        config: &cfg,
        result: &result,
    };
    write_json(&args.out.join("selection.json"), &report)?;
    if args.svg {
        let points: Vec<CurvePoint> = result.rows.iter().map(CurvePoint::from).collect();
        emit_svg_curves(&points, &args.out.join("curves.svg"))?;
        let best = result
            .row(result.best_by_zeta)
            .and_then(|r| r.main_map.as_ref());
        if let (Some(map), Some(layout)) = (best, data.layout()) {
            emit_svg_map(map, layout, &args.out.join("map.svg"))?;
        }
    }
    Ok(())
}

fn selection_csv(result: &SelectionResult) -> String {
    let (eta, beta) = match result.mode {
        Mode::Exact => ("eta", "beta"),
        Mode::Heuristic => ("eta_tilde", "beta_tilde"),
    };
    let mut out = format!("lambda,delta,{eta},zeta,psi,{beta},bias,variance_net,flags\n");
    for r in &result.rows {
        let flags: Vec<&str> = r.flags.iter().map(|f| f.as_str()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.lambda,
            r.delta,
            r.eta,
            r.zeta,
            r.psi,
            r.beta,
            r.bias,
            r.variance_net,
            flags.join(";")
        );
    }
    out
}

fn cmd_table1(args: Table1Args) -> Result<(), Failure> {
    let (data, truth) = generate_toy(args.n, args.seed)?;
    let cfg = SelectionConfig {
        grid: LambdaGrid::toy(),
        m: args.m,
        seed: args.plan_seed,
        fit: FitOptions {
            preprocessing: Preprocessing::None,
            ..Default::default()
        },
        ..Default::default()
    };
    let result = select(&data, &truth, &cfg)?;
    let best_delta = result.row(result.best_by_delta).map(|r| r.delta);
    let best_eta = result
        .rows
        .iter()
        .map(|r| r.eta)
        .fold(f64::NEG_INFINITY, f64::max);
    let best_zeta = result.row(result.best_by_zeta).map(|r| r.zeta);
    let mark = |v: f64, best: Option<f64>| if Some(v) == best { "*" } else { " " };

    println!(
        "toy data: n = {} per class, seed {}; {} bootstrap replicates, plan seed {}",
        args.n, args.seed, args.m, args.plan_seed
    );
    println!(
        "{:>8}  {:>8}   {:>8}   {:>8}   direction",
        "lambda", "delta", "eta", "zeta"
    );
    for r in &result.rows {
        let dir = match &r.main_map {
            Some(m) => format!("[{:.4}, {:.4}]", m.as_slice()[0], m.as_slice()[1]),
            None => "-".into(),
        };
        println!(
            "{:>8}  {:>8.4}{}  {:>8.4}{}  {:>8.4}{}  {dir}",
            r.lambda,
            r.delta,
            mark(r.delta, best_delta),
            r.eta,
            mark(r.eta, Some(best_eta)),
            r.zeta,
            mark(r.zeta, best_zeta),
        );
    }
    println!("* marks the column maximum");
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.result)
        .with_context(|| format!("reading {}", args.result.display()))?;
    let saved: SavedReport = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.result.display()))?;
    if saved.schema != SCHEMA {
        return Err(Failure::Runtime(anyhow!(
            "unsupported schema {}",
            saved.schema
        )));
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let points: Vec<CurvePoint> = saved.result.rows.iter().map(|r| r.point).collect();
    emit_svg_curves(&points, &args.out.join("curves.svg"))?;
    let best = saved
        .result
        .rows
        .iter()
        .find(|r| r.point.lambda == saved.result.best_by_zeta)
        .and_then(|r| r.main_map.as_ref());
    if let (Some(map), Some(layout)) = (best, saved.layout) {
        emit_svg_map(map, layout, &args.out.join("map.svg"))?;
    }
    Ok(())
}
