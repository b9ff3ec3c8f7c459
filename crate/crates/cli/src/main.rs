//! `crdsa`: build PLR curves, compute contours, classify channels, compute
//! delay laws and run closed-loop simulations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use crdsa_core::closed_loop::run_simulation;
use crdsa_core::delay::{delay_pmf, mean_delay, operating_point_delay, DEFAULT_N_MAX};
use crdsa_core::equilibrium::{contour_on_curve_grid, find_equilibria, ChannelAnalysis, LoadLine};
use crdsa_core::io::{fmt_real, ScenarioFile};
use crdsa_core::plr::{build_curve_with, default_grid, uniform_grid, LoadModel, DEFAULT_FRAMES_PER_POINT};
use crdsa_core::{Error, PlrCurve, RetransmitPolicy, SystemConfig};

#[derive(Parser)]
#[command(name = "crdsa", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the PLR curve by Monte Carlo and write it as JSON (or CSV
    /// when the output ends in `.csv`).
    EstimatePlr(EstimateArgs),
    /// Write the equilibrium contour of a curve as CSV.
    Contour(ContourArgs),
    /// Find the equilibria of a scenario and print the verdict.
    Classify(ClassifyArgs),
    /// Write the delay pmf at the operating point as CSV and print its mean.
    Delay(DelayArgs),
    /// Run the closed-loop simulation, write the trace CSV and print the
    /// summary JSON.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Scenario file; CRDSA with N_f = 100, I_max = 20 when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    frames_per_point: Option<u32>,
    /// Packets per frame: `fixed` (rounded G·N_f) or `poisson`.
    #[arg(long)]
    load_model: Option<LoadModel>,
}

#[derive(Args)]
struct ContourArgs {
    #[arg(long)]
    curve: PathBuf,
    #[arg(long)]
    p_r: Option<f64>,
    /// Scenario file supplying `p_r` when the flag is absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    curve: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    p_r: Option<f64>,
    /// Analysis JSON; printed to standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DelayArgs {
    #[arg(long)]
    curve: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p_r: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    n_max: u32,
    /// Use this loss ratio instead of the operating point's.
    #[arg(long)]
    plr: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    num_frames: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    p_r: Option<f64>,
    /// Trace CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write the summary JSON here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

const DEFAULT_NUM_FRAMES: u32 = 5000;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 3,
        Error::NoOperatingPoint => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::EstimatePlr(a) => estimate_plr(a),
        Command::Contour(a) => contour(a),
        Command::Classify(a) => classify(a),
        Command::Delay(a) => delay(a),
        Command::Simulate(a) => simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn with_path(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path).map_err(with_path(path))?))
}

fn finish(mut w: BufWriter<File>) -> Result<(), Error> {
    w.flush()?;
    Ok(())
}

fn load_curve(path: &Path) -> Result<PlrCurve, Error> {
    PlrCurve::load_json(File::open(path).map_err(with_path(path))?)
}

fn resolve_seed(flag: Option<u64>, scenario: Option<&ScenarioFile>) -> u64 {
    flag.or(scenario.and_then(|s| s.seed)).unwrap_or_else(|| {
        let seed = rand::random();
        eprintln!("seed: {seed}");
        seed
    })
}

fn resolve_p_r(flag: Option<f64>, scenario: Option<&ScenarioFile>) -> Result<f64, Error> {
    let p_r = flag
        .or(scenario.and_then(|s| s.p_r))
        .ok_or_else(|| Error::Validation("retransmission probability needed: pass --p-r or set `p_r`".into()))?;
    Ok(RetransmitPolicy::new(p_r)?.retransmit_prob())
}

fn load_scenario(path: Option<&Path>) -> Result<Option<ScenarioFile>, Error> {
    path.map(|p| {
        File::open(p)
            .map_err(with_path(p))
            .and_then(ScenarioFile::from_reader)
    })
    .transpose()
}

fn analyse(curve: &PlrCurve, scenario: &ScenarioFile, p_r: f64) -> Result<ChannelAnalysis, Error> {
    let cfg = scenario.system_config()?;
    if !curve.matches(&cfg) {
        return Err(Error::Validation(
            "curve was built for a different frame size, SIC budget or degree distribution".into(),
        ));
    }
    let line = LoadLine::new(scenario.population()?, cfg.frame_size())?;
    find_equilibria(&line, p_r, curve)
}

fn estimate_plr(a: EstimateArgs) -> Result<(), Error> {
    let scenario = load_scenario(a.config.as_deref())?;
    let cfg = match &scenario {
        Some(s) => s.system_config()?,
        None => SystemConfig::crdsa(100, 20)?,
    };
    let grid = match (a.grid_max, a.grid_step) {
        (None, None) => match scenario.as_ref().and_then(|s| s.grid.as_ref()) {
            Some(g) => g.points()?,
            None => default_grid(),
        },
        (max, step) => uniform_grid(
            max.unwrap_or(crdsa_core::plr::DEFAULT_GRID_MAX),
            step.unwrap_or(crdsa_core::plr::DEFAULT_GRID_STEP),
        )?,
    };
    let frames = a
        .frames_per_point
        .or(scenario.as_ref().and_then(|s| s.frames_per_point))
        .unwrap_or(DEFAULT_FRAMES_PER_POINT);
    let load = a
        .load_model
        .or(scenario.as_ref().and_then(|s| s.load_model))
        .unwrap_or_default();
    let seed = resolve_seed(a.seed, scenario.as_ref());

    // open the output first so a bad path fails before the long build
    let mut w = create(&a.out)?;
    let curve = build_curve_with(&cfg, &grid, frames, seed, load)?;
    if a.out.extension().is_some_and(|e| e == "csv") {
        curve.write_csv(&mut w)?;
    } else {
        curve.save_json(&mut w)?;
    }
    finish(w)?;
    let (g, thr) = curve.peak_throughput();
    println!("peak throughput {} pkt/slot at G_IN = {}", fmt_real(thr), fmt_real(g));
    Ok(())
}

fn contour(a: ContourArgs) -> Result<(), Error> {
    let scenario = load_scenario(a.config.as_deref())?;
    let p_r = resolve_p_r(a.p_r, scenario.as_ref())?;
    let curve = load_curve(&a.curve)?;
    let c = contour_on_curve_grid(&curve, p_r)?;
    let mut w = create(&a.out)?;
    c.write_csv(&mut w)?;
    finish(w)?;
    let peak = c.peak();
    println!(
        "contour peak g_t = {} at n_b = {} ({} points)",
        fmt_real(peak.g_t),
        fmt_real(peak.n_b),
        c.points.len()
    );
    Ok(())
}

fn classify(a: ClassifyArgs) -> Result<(), Error> {
    let scenario = load_scenario(Some(&a.config))?.expect("path given");
    let p_r = resolve_p_r(a.p_r, Some(&scenario))?;
    let curve = load_curve(&a.curve)?;
    let analysis = analyse(&curve, &scenario, p_r)?;

    println!("{}", analysis.channel_class);
    for e in &analysis.equilibria {
        println!("  {:?}: g_t = {}, n_b = {}", e.kind, fmt_real(e.g_t), fmt_real(e.n_b));
    }
    for d in &analysis.diagnostics {
        eprintln!("note: {d}");
    }
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{}", analysis.to_json_string())?;
            finish(w)?;
        }
        None => println!("{}", analysis.to_json_string()),
    }
    Ok(())
}

fn delay(a: DelayArgs) -> Result<(), Error> {
    let scenario = load_scenario(a.config.as_deref())?;
    let p_r = resolve_p_r(a.p_r, scenario.as_ref())?;
    let dist = match a.plr {
        Some(plr) => {
            let d = delay_pmf(plr, p_r, a.n_max)?;
            println!("mean delay {} frames (PLR {})", fmt_real(mean_delay(plr, p_r)?), fmt_real(plr));
            d
        }
        None => {
            let (Some(curve), Some(scenario)) = (&a.curve, &scenario) else {
                return Err(Error::Validation("--curve and --config are needed unless --plr is given".into()));
            };
            let curve = load_curve(curve)?;
            let analysis = analyse(&curve, scenario, p_r)?;
            let op = operating_point_delay(&analysis, &curve, p_r, a.n_max)?;
            println!(
                "mean delay {} frames (PLR {} at G_IN = {})",
                fmt_real(op.mean),
                fmt_real(op.plr),
                fmt_real(op.g_in)
            );
            op.distribution
        }
    };
    let mut w = create(&a.out)?;
    dist.write_csv(&mut w)?;
    finish(w)
}

fn simulate(a: SimulateArgs) -> Result<(), Error> {
    let mut scenario = load_scenario(Some(&a.config))?.expect("path given");
    if let Some(p_r) = a.p_r {
        RetransmitPolicy::new(p_r)?;
        scenario.p_r = Some(p_r);
    }
    let frames = a.num_frames.or(scenario.num_frames).unwrap_or(DEFAULT_NUM_FRAMES);
    let seed = resolve_seed(a.seed, Some(&scenario));
    let sim = scenario.sim_scenario(frames, seed)?;
    let mut trace_out = create(&a.out)?;
    let trace = run_simulation(&sim)?;
    trace.write_csv(&mut trace_out)?;
    finish(trace_out)?;
    let json = trace.summary.to_json_string();
    if let Some(path) = &a.summary {
        let mut w = create(path)?;
        writeln!(w, "{json}")?;
        finish(w)?;
    }
    println!("{json}");
    Ok(())
}
