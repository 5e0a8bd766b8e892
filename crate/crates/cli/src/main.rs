//! `finwalk` — impute fish trajectories between acoustic detections.
//!
//! Subcommands:
//! - `impute`: run the full pipeline for one fish (parse, collapse,
//!   segment, bootstrap, filter, export trajectories + heatmap + manifest).
//! - `validate`: run the numerical self-checks and report pass/fail.
//! - `heatmap`: rebuild a heatmap from a previously exported trajectories
//!   file.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or input-validation
//! failure.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Serialize;

use finwalk_core::bootstrap::{run_bootstrap, BootstrapResult};
use finwalk_core::config::RunConfig;
use finwalk_core::geo::PlanarPoint;
use finwalk_core::heatmap::{
    build_heatmap_from_points, endpoint_flags, export_heatmap_csv, export_heatmap_pgm,
    export_trajectories, parse_trajectories, TrajRow,
};
use finwalk_core::ingest::{
    build_segments, collapse_daily, parse_detections, parse_receivers, ReceiverSet, SegmentSpec,
};
use finwalk_core::validate;

#[derive(Parser)]
#[command(name = "finwalk", version, about = "Trajectory imputation for acoustic telemetry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Verbose logging to standard error.
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Impute one fish's trajectory and export the retained ensemble.
    Impute(ImputeArgs),
    /// Run the numerical self-checks (sampling, quadrature, identities).
    Validate(ValidateArgs),
    /// Rebuild an occupancy heatmap from an exported trajectories CSV.
    Heatmap(HeatmapArgs),
}

#[derive(Args)]
struct ImputeArgs {
    /// Detections CSV (fish_id,timestamp,receiver_id).
    #[arg(long)]
    detections: PathBuf,
    /// Receivers CSV (receiver_id,lon,lat).
    #[arg(long)]
    receivers: PathBuf,
    /// Run configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Fish to impute.
    #[arg(long)]
    fish_id: String,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Run seed; overrides the config, defaults to OS entropy.
    #[arg(long)]
    seed: Option<u64>,
    /// Bootstrap iterations; overrides the config.
    #[arg(long)]
    iters: Option<usize>,
    /// Retained fraction in (0, 1]; overrides the config.
    #[arg(long)]
    keep: Option<f64>,
    /// Worker threads (default: machine parallelism). Does not affect
    /// results.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Reduced sample counts (finishes in a few seconds).
    #[arg(long)]
    quick: bool,
}

#[derive(Args)]
struct HeatmapArgs {
    /// Trajectories CSV produced by `impute`.
    #[arg(long)]
    trajectories: PathBuf,
    /// Cell side length in meters.
    #[arg(long)]
    cell_m: f64,
    /// Padding around the bounding box in meters.
    #[arg(long, default_value_t = 500.0)]
    padding_m: f64,
    /// Bin only the imputed interior days, not the detection-day endpoints.
    #[arg(long)]
    exclude_endpoints: bool,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

/// Failures carry the exit code: 2 for bad input, 1 for runtime trouble.
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

/// Input-side failures (unreadable/malformed/unresolvable inputs) are usage
/// errors.
fn usage<T>(r: finwalk_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

fn runtime<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Runtime(e.to_string()))
}

fn open_input(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Usage(format!("cannot open `{}`: {e}", path.display())))
}

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if cli.verbose {
        "info"
    } else {
        "warn"
    }))
    .init();

    let result = match cli.command {
        Command::Impute(args) => cmd_impute(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Heatmap(args) => cmd_heatmap(args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message());
        std::process::exit(e.code());
    }
}

#[derive(Serialize)]
struct Outputs {
    trajectories: String,
    heatmap_csv: String,
    heatmap_pgm: String,
}

/// Everything needed to reproduce the run bit for bit, plus bookkeeping.
#[derive(Serialize)]
struct RunManifest<'a> {
    engine_version: &'a str,
    fish_id: &'a str,
    detections: String,
    receivers: String,
    config: String,
    seed: u64,
    n_iter: usize,
    keep_frac: f64,
    threads: Option<usize>,
    n_total: usize,
    n_retained: usize,
    duration_secs: f64,
    outputs: Outputs,
    resolved_config: &'a RunConfig,
}

fn load_inputs(
    args: &ImputeArgs,
) -> Result<(RunConfig, ReceiverSet, Vec<SegmentSpec>), CliError> {
    let mut cfg = usage(RunConfig::from_path(&args.config))?;
    if let Some(iters) = args.iters {
        cfg.n_iter = iters;
    }
    if let Some(keep) = args.keep {
        cfg.keep_frac = keep;
    }
    usage(cfg.validate())?;

    let receivers = usage(parse_receivers(open_input(&args.receivers)?, cfg.receiver_radius_m))?;
    let detections = usage(parse_detections(open_input(&args.detections)?))?;

    let mine: Vec<_> =
        detections.into_iter().filter(|d| d.fish_id == args.fish_id).collect();
    if mine.is_empty() {
        return Err(CliError::Usage(format!("unknown fish id `{}`", args.fish_id)));
    }
    let daily = collapse_daily(&mine);
    let segments = usage(build_segments(&daily, &receivers))?;
    if segments.is_empty() {
        return Err(CliError::Usage(format!(
            "fish `{}` has a single detected day; there is no gap to impute",
            args.fish_id
        )));
    }
    Ok((cfg, receivers, segments))
}

fn write_heatmap_files(
    rows: &[TrajRow],
    include_endpoints: bool,
    cell_m: f64,
    padding_m: f64,
    out_dir: &Path,
) -> Result<(PathBuf, PathBuf), CliError> {
    let flags = endpoint_flags(rows);
    let points: Vec<PlanarPoint> = rows
        .iter()
        .zip(&flags)
        .filter(|(_, &endpoint)| include_endpoints || !endpoint)
        .map(|(r, _)| PlanarPoint::new(r.x_m, r.y_m))
        .collect();
    let grid = runtime(build_heatmap_from_points(&points, cell_m, padding_m))?;

    let csv_path = out_dir.join("heatmap.csv");
    let pgm_path = out_dir.join("heatmap.pgm");
    runtime(export_heatmap_csv(&grid, BufWriter::new(runtime(File::create(&csv_path))?)))?;
    runtime(export_heatmap_pgm(&grid, BufWriter::new(runtime(File::create(&pgm_path))?)))?;
    Ok((csv_path, pgm_path))
}

fn cmd_impute(args: ImputeArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let (cfg, receivers, segments) = load_inputs(&args)?;
    let seed = args.seed.or(cfg.seed).unwrap_or_else(|| rand::rng().random());
    let opts = cfg.sim_options(receivers.receivers());

    log::info!(
        "imputing fish {} over {} segments, {} iterations, seed {seed}",
        args.fish_id,
        segments.len(),
        cfg.n_iter
    );

    let bootstrap = || {
        run_bootstrap(
            &segments,
            &cfg.priors,
            &opts,
            cfg.receiver_radius_m,
            cfg.n_iter,
            cfg.keep_frac,
            seed,
        )
    };
    let result: BootstrapResult = match args.threads {
        Some(n) => runtime(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| e.to_string()),
        )?
        .install(|| runtime(bootstrap()))?,
        None => runtime(bootstrap())?,
    };

    runtime(std::fs::create_dir_all(&args.out))?;
    let traj_path = args.out.join("trajectories.csv");
    runtime(export_trajectories(
        &result.retained,
        receivers.projection(),
        BufWriter::new(runtime(File::create(&traj_path))?),
    ))?;

    // The heatmap is built from the serialized rows, so rebuilding it later
    // from the trajectories file reproduces it byte for byte.
    let rows = runtime(parse_trajectories(open_input(&traj_path).map_err(|e| {
        CliError::Runtime(format!("re-reading just-written trajectories: {}", e.message()))
    })?))?;
    let (csv_path, pgm_path) = write_heatmap_files(
        &rows,
        cfg.heatmap.include_endpoints,
        cfg.heatmap.cell_m,
        cfg.heatmap.padding_m,
        &args.out,
    )?;

    let manifest = RunManifest {
        engine_version: env!("CARGO_PKG_VERSION"),
        fish_id: &args.fish_id,
        detections: args.detections.display().to_string(),
        receivers: args.receivers.display().to_string(),
        config: args.config.display().to_string(),
        seed,
        n_iter: cfg.n_iter,
        keep_frac: cfg.keep_frac,
        threads: args.threads,
        n_total: result.n_total,
        n_retained: result.n_retained,
        duration_secs: started.elapsed().as_secs_f64(),
        outputs: Outputs {
            trajectories: traj_path.display().to_string(),
            heatmap_csv: csv_path.display().to_string(),
            heatmap_pgm: pgm_path.display().to_string(),
        },
        resolved_config: &cfg,
    };
    let manifest_path = args.out.join("manifest.json");
    let mut mf = BufWriter::new(runtime(File::create(&manifest_path))?);
    runtime(serde_json::to_writer_pretty(&mut mf, &manifest))?;
    runtime(mf.write_all(b"\n"))?;
    runtime(mf.flush())?;

    println!(
        "retained {} of {} draws (seed {seed}) -> {}",
        result.n_retained,
        result.n_total,
        args.out.display()
    );
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let reports = validate::run_all(args.quick);
    let mut all_pass = true;
    for r in &reports {
        println!("{} {} — {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
        all_pass &= r.pass;
    }
    if all_pass {
        Ok(())
    } else {
        Err(CliError::Runtime("one or more self-checks failed".into()))
    }
}

fn cmd_heatmap(args: HeatmapArgs) -> Result<(), CliError> {
    if args.cell_m.is_nan() || args.cell_m <= 0.0 {
        return Err(CliError::Usage(format!("--cell-m {} must be > 0", args.cell_m)));
    }
    if args.padding_m.is_nan() || args.padding_m < 0.0 {
        return Err(CliError::Usage(format!("--padding-m {} must be >= 0", args.padding_m)));
    }
    let rows = usage(parse_trajectories(open_input(&args.trajectories)?))?;
    if rows.is_empty() {
        return Err(CliError::Usage(format!(
            "`{}` contains no trajectory rows",
            args.trajectories.display()
        )));
    }
    runtime(std::fs::create_dir_all(&args.out))?;
    let (csv_path, _) = write_heatmap_files(
        &rows,
        !args.exclude_endpoints,
        args.cell_m,
        args.padding_m,
        &args.out,
    )?;
    println!("heatmap over {} rows -> {}", rows.len(), csv_path.display());
    Ok(())
}
