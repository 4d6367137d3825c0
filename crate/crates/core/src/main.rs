use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sps_sim::analytic::{self, HiddenTerminalParams, ModelParams};
use sps_sim::harness::{
    self, compare, emit_csv, emit_locations_file, load_config_file, run_sweep, HarnessError,
    SweepSpec, Tolerance, ToleranceProfile,
};
use sps_sim::simcore;

#[derive(Parser)]
#[command(name = "sps-sim", version, about = "Semi-persistent scheduling: analytic model and Monte Carlo simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the analytic model and print one CSV row.
    Analyze(AnalyzeArgs),
    /// Run one scenario (all of its replications).
    Simulate(SimulateArgs),
    /// Run every point of a sweep file.
    Sweep(SweepArgs),
    /// Run a sweep and report analytic-vs-simulation gaps; exits 1 on any failure.
    Compare(CompareArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Defaults to round(2 * density * range) + 1 in hidden-terminal mode.
    #[arg(long)]
    n_vehicles: Option<usize>,
    #[arg(long, default_value_t = 200)]
    n_blocks: usize,
    #[arg(long, default_value_t = 10)]
    sps_periods: u32,
    #[arg(long, default_value_t = 0.2)]
    resel_prob: f64,
    #[arg(long, default_value_t = 100.0)]
    period_ms: f64,
    /// Vehicles per km; enables the hidden-terminal model.
    #[arg(long)]
    density_per_km: Option<f64>,
    #[arg(long, default_value_t = 500.0)]
    range_m: f64,
}

#[derive(Args)]
struct RunOutput {
    /// Wide CSV destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Long-format per-location PER destination.
    #[arg(long)]
    locations: Option<PathBuf>,
    /// Worker threads; output does not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. --set protocol.resel_prob=0.5
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Write the transmission trace of replication 0 to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    output: RunOutput,
}

#[derive(Args)]
struct SweepArgs {
    spec: PathBuf,
    #[command(flatten)]
    output: RunOutput,
}

#[derive(Args)]
struct CompareArgs {
    spec: PathBuf,
    /// Relative tolerance for collision probability and PER.
    #[arg(long)]
    tolerance_rel: Option<f64>,
    /// Absolute tolerance for collision probability and PER.
    #[arg(long)]
    tolerance_abs: Option<f64>,
    #[arg(long)]
    delay_tolerance_rel: Option<f64>,
    /// Absolute delay tolerance in ms.
    #[arg(long)]
    delay_tolerance_abs: Option<f64>,
    /// Gap report CSV destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the wide results CSV here.
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Analyze(a) => analyze(&a),
        Command::Simulate(a) => simulate(&a),
        Command::Sweep(a) => sweep(&a),
        Command::Compare(a) => compare_cmd(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

type CliResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, HarnessError> {
    match path {
        Some(p) => File::create(p)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|source| HarnessError::Io {
                path: p.to_path_buf(),
                source,
            }),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn analyze(a: &AnalyzeArgs) -> CliResult {
    let ht = a
        .density_per_km
        .map(|d| HiddenTerminalParams::infinite_road(d, a.range_m))
        .transpose()?;
    let n_vehicles = match (a.n_vehicles, &ht) {
        (Some(n), _) => n,
        (None, Some(ht)) => analytic::road_equivalent_vehicles(ht),
        (None, None) => return Err("--n-vehicles is required without --density-per-km".into()),
    };
    let params = ModelParams::new(n_vehicles, a.n_blocks, a.sps_periods, a.resel_prob, a.period_ms)?;
    let fp = analytic::solve_fixed_point(&params)?;
    let (p_single, pc_ht, per) = match &ht {
        Some(ht) => {
            let (_, sol) = analytic::solve_hidden_terminal(&params, ht)?;
            (Some(sol.p_single), Some(sol.p_c_ht), sol.per)
        }
        None => (None, None, fp.p_c),
    };
    let delay = analytic::delay_partial(&params, per)?;

    let mut w = csv::Writer::from_writer(io::stdout().lock());
    w.write_record([
        "n_vehicles", "n_blocks", "sps_periods", "resel_prob", "period_ms", "density_per_km",
        "range_m", "pc", "n_idle", "pc_com", "p_single", "pc_ht", "per", "delay_ms",
    ])?;
    w.write_record([
        n_vehicles.to_string(),
        a.n_blocks.to_string(),
        a.sps_periods.to_string(),
        a.resel_prob.to_string(),
        a.period_ms.to_string(),
        opt(a.density_per_km),
        opt(ht.map(|h| h.range_m)),
        fp.p_c.to_string(),
        fp.n_idle.to_string(),
        delay.p_c_com.to_string(),
        opt(p_single),
        opt(pc_ht),
        per.to_string(),
        delay.e_d_total_ms.to_string(),
    ])?;
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn write_results(results: &[harness::AggregateResult], output: &RunOutput) -> Result<(), HarnessError> {
    emit_csv(results, open_out(output.out.as_deref())?)?;
    if let Some(path) = &output.locations {
        emit_locations_file(results, path)?;
    }
    Ok(())
}

fn simulate(a: &SimulateArgs) -> CliResult {
    let mut keys = match load_config_file(&a.config)? {
        harness::Document::Scenario(keys) => keys,
        harness::Document::Sweep(_) => {
            return Err(format!("{} is a sweep; use the sweep subcommand", a.config.display()).into())
        }
    };
    for o in &a.overrides {
        keys.set_override(o)?;
    }
    let config = keys.build()?;
    if let Some(path) = &a.trace {
        let mut out = open_out(Some(path))?;
        simcore::run_replication_traced(&config, 0, &mut out)?;
        out.flush()?;
    }
    let results = run_sweep(&SweepSpec::single(keys), a.output.jobs)?;
    write_results(&results, &a.output)?;
    Ok(ExitCode::SUCCESS)
}

fn load_sweep(path: &Path) -> Result<SweepSpec, HarnessError> {
    Ok(load_config_file(path)?.into_sweep())
}

fn sweep(a: &SweepArgs) -> CliResult {
    let spec = load_sweep(&a.spec)?;
    let results = run_sweep(&spec, a.output.jobs)?;
    write_results(&results, &a.output)?;
    Ok(ExitCode::SUCCESS)
}

fn compare_cmd(a: &CompareArgs) -> CliResult {
    let spec = load_sweep(&a.spec)?;
    let mut tol = ToleranceProfile::default();
    let prob = |t: Tolerance| Tolerance {
        abs: a.tolerance_abs.unwrap_or(t.abs),
        rel: a.tolerance_rel.unwrap_or(t.rel),
    };
    tol.collision = prob(tol.collision);
    tol.per = prob(tol.per);
    tol.delay_ms = Tolerance {
        abs: a.delay_tolerance_abs.unwrap_or(tol.delay_ms.abs),
        rel: a.delay_tolerance_rel.unwrap_or(tol.delay_ms.rel),
    };

    let results = run_sweep(&spec, a.jobs)?;
    if let Some(path) = &a.results {
        harness::emit_csv_file(&results, path)?;
    }
    let report = compare(&results, &tol);
    report.write_csv(open_out(a.out.as_deref())?)?;
    eprint!("{}", report.summary());
    Ok(if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
