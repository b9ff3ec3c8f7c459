//! Scenario files and shared output formatting.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::closed_loop::SimScenario;
use crate::error::{Error, Result};
use crate::model::{DegreeDistribution, PopulationModel, RetransmitPolicy, SystemConfig};
use crate::plr::{self, LoadModel};

/// Load grid of a scenario: explicit points or `{"max", "step"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Points(Vec<f64>),
    Range { max: f64, step: f64 },
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        match self {
            GridSpec::Points(p) => Ok(p.clone()),
            GridSpec::Range { max, step } => plr::uniform_grid(*max, *step),
        }
    }
}

/// JSON scenario document shared by all commands.
///
/// ```json
/// {"n_f": 100, "i_max": 20, "degrees": [{"l": 2, "p": 1.0}],
///  "population": {"finite": {"m": 350, "p0": 0.143}}, "p_r": 0.5, "seed": 7}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub n_f: usize,
    pub i_max: u32,
    pub degrees: DegreeDistribution,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_per_point: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_frames: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_model: Option<LoadModel>,
}

impl ScenarioFile {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let file: Self = serde_json::from_reader(reader)?;
        file.validate()?;
        Ok(file)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::from_reader(text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    /// Checks every present field against its domain invariants.
    pub fn validate(&self) -> Result<()> {
        self.system_config()?;
        if let Some(p) = &self.population {
            p.validate()?;
        }
        if let Some(p_r) = self.p_r {
            RetransmitPolicy::new(p_r)?;
        }
        if let Some(g) = &self.grid {
            let pts = g.points()?;
            if let Some(x) = pts.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::InvalidGrid(format!("load {x} is negative")));
            }
        }
        if self.frames_per_point == Some(0) {
            return Err(Error::param("frames_per_point", 0.0, "must be at least 1"));
        }
        if self.num_frames == Some(0) {
            return Err(Error::param("num_frames", 0.0, "must be at least 1"));
        }
        Ok(())
    }

    pub fn system_config(&self) -> Result<SystemConfig> {
        SystemConfig::new(self.n_f, self.i_max, self.degrees.clone())
    }

    pub fn population(&self) -> Result<PopulationModel> {
        self.population
            .ok_or_else(|| Error::Validation("scenario has no `population`".into()))
    }

    pub fn retransmit_policy(&self) -> Result<RetransmitPolicy> {
        let p_r = self
            .p_r
            .ok_or_else(|| Error::Validation("scenario has no `p_r`".into()))?;
        RetransmitPolicy::new(p_r)
    }

    pub fn sim_scenario(&self, num_frames: u32, seed: u64) -> Result<SimScenario> {
        Ok(SimScenario {
            config: self.system_config()?,
            population: self.population()?,
            policy: self.retransmit_policy()?,
            num_frames,
            seed,
        })
    }
}

/// Formats a real with at most 9 significant digits, '.' as decimal
/// separator and no exponent.
pub fn fmt_real(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let rounded: f64 = format!("{x:.8e}").parse().unwrap();
    format!("{rounded}")
}

pub(crate) fn csv_writer<W: std::io::Write>(writer: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer)
}

/// Reads a `g_in,g_t,n_b` contour CSV.
pub fn read_contour_csv<R: Read>(reader: R) -> Result<Vec<crate::equilibrium::ContourPoint>> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(["g_in", "g_t", "n_b"]) {
        return Err(Error::Parse("contour header must be g_in,g_t,n_b".into()));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Reads an `n,probability` delay CSV.
pub fn read_pmf_csv<R: Read>(reader: R) -> Result<Vec<(u32, f64)>> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(["n", "probability"]) {
        return Err(Error::Parse("pmf header must be n,probability".into()));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
