//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string, so the page
//! needs no bindings beyond `JSON.parse`. All analysis runs against the CRDSA
//! curve (N_f = 100, I_max = 20) embedded at build time.

use std::sync::OnceLock;

use crdsa_core::closed_loop::{detect_divergence, run_simulation, SimScenario};
use crdsa_core::delay::{operating_point_delay, DEFAULT_N_MAX};
use crdsa_core::equilibrium::{contour_on_curve_grid, find_equilibria, ChannelAnalysis, LoadLine};
use crdsa_core::{Error, PlrCurve, PopulationModel, RetransmitPolicy, SystemConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const CURVE_JSON: &str = include_str!("../assets/curve.json");
const MAX_FRAMES: u32 = 20_000;
const DELAY_ROWS: usize = 12;

pub fn curve() -> &'static PlrCurve {
    static CURVE: OnceLock<PlrCurve> = OnceLock::new();
    CURVE.get_or_init(|| PlrCurve::from_json_str(CURVE_JSON).expect("embedded curve is valid"))
}

fn frame_size() -> usize {
    curve().n_f
}

/// `lambda > 0` selects an infinite population; otherwise `m` users with
/// activation probability `p0`.
pub fn population(m: u32, p0: f64, lambda: f64) -> Result<PopulationModel, Error> {
    if lambda > 0.0 {
        PopulationModel::infinite(lambda)
    } else {
        PopulationModel::finite(m, p0)
    }
}

/// Contour points as `[[g_in, g_t, n_b], ...]`.
pub fn contour_json(p_r: f64) -> Result<Value, Error> {
    let c = contour_on_curve_grid(curve(), p_r)?;
    Ok(json!({
        "p_r": p_r,
        "points": c.points.iter().map(|p| [p.g_in, p.g_t, p.n_b]).collect::<Vec<_>>(),
    }))
}

fn load_line_points(line: &LoadLine, analysis: &ChannelAnalysis) -> Vec<[f64; 2]> {
    let end = match line.population.total_users() {
        Some(m) => m as f64,
        None => analysis
            .equilibria
            .iter()
            .filter(|e| !e.is_unbounded())
            .map(|e| e.n_b * 1.5)
            .fold(50.0, f64::max),
    };
    (0..=100)
        .map(|i| end * i as f64 / 100.0)
        .map(|n| [n, line.g_t(n).unwrap_or(0.0)])
        .collect()
}

/// Verdict, equilibria, the load line and the operating-point delay law.
pub fn analyze_json(m: u32, p0: f64, lambda: f64, p_r: f64) -> Result<Value, Error> {
    let line = LoadLine::new(population(m, p0, lambda)?, frame_size())?;
    let analysis = find_equilibria(&line, p_r, curve())?;
    let delay = match operating_point_delay(&analysis, curve(), p_r, DEFAULT_N_MAX) {
        Ok(d) => json!({
            "mean": d.mean,
            "plr": d.plr,
            "g_in": d.g_in,
            "pmf": d.distribution.pmf.iter().take(DELAY_ROWS).collect::<Vec<_>>(),
        }),
        Err(Error::NoOperatingPoint) => Value::Null,
        Err(e) => return Err(e),
    };
    Ok(json!({
        "verdict": analysis.channel_class.to_string(),
        "equilibria": analysis.equilibria,
        "load_line": load_line_points(&line, &analysis),
        "delay": delay,
        "diagnostics": analysis.diagnostics,
    }))
}

/// Per-frame backlog and throughput of one closed-loop run, plus the
/// divergence frame if the run leaves the operating point for good.
pub fn simulate_json(m: u32, p0: f64, lambda: f64, p_r: f64, frames: u32, seed: u64) -> Result<Value, Error> {
    if frames > MAX_FRAMES {
        return Err(Error::Validation(format!("at most {MAX_FRAMES} frames in the browser")));
    }
    let pop = population(m, p0, lambda)?;
    let scenario = SimScenario {
        config: SystemConfig::crdsa(frame_size(), curve().i_max)?,
        population: pop,
        policy: RetransmitPolicy::new(p_r)?,
        num_frames: frames,
        seed,
    };
    let trace = run_simulation(&scenario)?;
    let analysis = find_equilibria(&LoadLine::new(pop, frame_size())?, p_r, curve())?;
    Ok(json!({
        "backlog": trace.records.iter().map(|r| r.n_backlogged).collect::<Vec<_>>(),
        "throughput": trace.records.iter().map(|r| r.throughput).collect::<Vec<_>>(),
        "summary": trace.summary,
        "divergence": detect_divergence(&trace, &analysis),
        "unstable_n_b": analysis.unstable_point().map(|e| e.n_b),
    }))
}

fn js(result: Result<Value, Error>) -> Result<String, JsError> {
    result.map(|v| v.to_string()).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn contour(p_r: f64) -> Result<String, JsError> {
    js(contour_json(p_r))
}

#[wasm_bindgen]
pub fn analyze(m: u32, p0: f64, lambda: f64, p_r: f64) -> Result<String, JsError> {
    js(analyze_json(m, p0, lambda, p_r))
}

#[wasm_bindgen]
pub fn simulate(m: u32, p0: f64, lambda: f64, p_r: f64, frames: u32, seed: u32) -> Result<String, JsError> {
    js(simulate_json(m, p0, lambda, p_r, frames, seed as u64))
}
