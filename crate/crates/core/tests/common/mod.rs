#![allow(dead_code)]

pub mod peeling;

use std::sync::OnceLock;

use crdsa_core::equilibrium::{find_equilibria, ChannelAnalysis, LoadLine};
use crdsa_core::plr::{build_curve, default_grid, DEFAULT_FRAMES_PER_POINT};
use crdsa_core::closed_loop::SimScenario;
use crdsa_core::{PlrCurve, PopulationModel, RetransmitPolicy, SystemConfig};

pub const CURVE_SEED: u64 = 1;

pub fn crdsa() -> SystemConfig {
    SystemConfig::crdsa(100, 20).unwrap()
}

/// CRDSA, N_f = 100, I_max = 20 on the default grid.
pub fn curve() -> &'static PlrCurve {
    static CURVE: OnceLock<PlrCurve> = OnceLock::new();
    CURVE.get_or_init(|| build_curve(&crdsa(), &default_grid(), DEFAULT_FRAMES_PER_POINT, CURVE_SEED).unwrap())
}

pub fn line(population: PopulationModel) -> LoadLine {
    LoadLine::new(population, 100).unwrap()
}

pub fn light_load() -> (PopulationModel, f64) {
    (PopulationModel::finite(350, 0.143).unwrap(), 0.5)
}

pub fn bistable() -> (PopulationModel, f64) {
    (PopulationModel::finite(350, 0.143).unwrap(), 1.0)
}

pub fn open_population() -> (PopulationModel, f64) {
    (PopulationModel::infinite(0.4).unwrap(), 0.5)
}

pub fn overloaded() -> (PopulationModel, f64) {
    (PopulationModel::finite(350, 0.18).unwrap(), 1.0)
}

pub fn analyse((population, p_r): (PopulationModel, f64)) -> ChannelAnalysis {
    find_equilibria(&line(population), p_r, curve()).unwrap()
}

pub fn scenario((population, p_r): (PopulationModel, f64), num_frames: u32, seed: u64) -> SimScenario {
    SimScenario {
        config: crdsa(),
        population,
        policy: RetransmitPolicy::new(p_r).unwrap(),
        num_frames,
        seed,
    }
}
