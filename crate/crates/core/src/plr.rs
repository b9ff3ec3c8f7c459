//! Monte Carlo packet loss ratio as a function of the expected channel load.
//!
//! There is no closed form for PLR(G) under SIC, so the analysis works from
//! a tabulated curve: for each load point we simulate independent frames,
//! count undecoded packets and store the ratio together with its binomial
//! standard error. Curves are persisted as JSON so the expensive estimation
//! runs once per `(N_f, d, I_max)`.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{build_frame, sic_decode};
use crate::model::{DegreeDistribution, SystemConfig};

pub const DEFAULT_GRID_MAX: f64 = 4.0;
pub const DEFAULT_GRID_STEP: f64 = 0.02;
pub const DEFAULT_FRAMES_PER_POINT: u32 = 2000;

/// How many packets a simulated frame carries at load `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadModel {
    /// Exactly `g * N_f` packets. A fractional count is rounded up or down
    /// at random so the mean stays `g * N_f`.
    #[default]
    Fixed,
    /// Poisson with mean `g * N_f`.
    Poisson,
}

impl std::str::FromStr for LoadModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "poisson" => Ok(Self::Poisson),
            other => Err(Error::Validation(format!(
                "unknown load model `{other}` (expected fixed or poisson)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlrEstimate {
    pub plr: f64,
    pub std_error: f64,
    pub packets: u64,
}

/// Simulates `num_frames` frames at expected load `g_in` with the default
/// [`LoadModel`] and returns the fraction of packets left undecoded.
pub fn estimate_plr<R: Rng + ?Sized>(
    g_in: f64,
    config: &SystemConfig,
    num_frames: u32,
    rng: &mut R,
) -> Result<PlrEstimate> {
    estimate_plr_with(g_in, config, num_frames, LoadModel::default(), rng)
}

pub fn estimate_plr_with<R: Rng + ?Sized>(
    g_in: f64,
    config: &SystemConfig,
    num_frames: u32,
    load: LoadModel,
    rng: &mut R,
) -> Result<PlrEstimate> {
    if !(g_in.is_finite() && g_in >= 0.0) {
        return Err(Error::param("g_in", g_in, "must be >= 0"));
    }
    if num_frames == 0 {
        return Err(Error::param("num_frames", 0.0, "must be at least 1"));
    }
    let mean = g_in * config.frame_size() as f64;
    if mean == 0.0 {
        return Ok(PlrEstimate {
            plr: 0.0,
            std_error: 0.0,
            packets: 0,
        });
    }
    let poisson = Poisson::new(mean).map_err(|_| Error::param("g_in", g_in, "load too large"))?;
    let whole = mean.floor();
    let frac = mean - whole;

    let mut total = 0u64;
    let mut lost = 0u64;
    for _ in 0..num_frames {
        let k = match load {
            LoadModel::Poisson => poisson.sample(rng) as usize,
            LoadModel::Fixed => {
                whole as usize + usize::from(frac > 0.0 && rng.random_bool(frac))
            }
        };
        if k == 0 {
            continue;
        }
        let frame = build_frame(k, config, rng);
        let result = sic_decode(&frame, config.max_sic_iterations());
        total += k as u64;
        lost += (k - result.num_decoded()) as u64;
    }
    if total == 0 {
        return Ok(PlrEstimate {
            plr: 0.0,
            std_error: 0.0,
            packets: 0,
        });
    }
    let plr = lost as f64 / total as f64;
    Ok(PlrEstimate {
        plr,
        std_error: (plr * (1.0 - plr) / total as f64).sqrt(),
        packets: total,
    })
}

/// One tabulated point of the curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlrSample {
    pub g_in: f64,
    pub plr: f64,
    pub frames: u32,
    pub se: f64,
}

/// Tabulated PLR(G_IN) for one `(N_f, d, I_max)` configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlrCurve {
    pub n_f: usize,
    pub i_max: u32,
    pub degrees: DegreeDistribution,
    pub seed: u64,
    #[serde(default)]
    pub load_model: LoadModel,
    samples: Vec<PlrSample>,
}

/// Evenly spaced load grid `0, step, 2*step, ... <= max`.
pub fn uniform_grid(max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidGrid(format!("step {step} must be positive")));
    }
    if !(max.is_finite() && max > 0.0) {
        return Err(Error::InvalidGrid(format!("maximum load {max} must be positive")));
    }
    let n = (max / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| i as f64 * step).collect())
}

pub fn default_grid() -> Vec<f64> {
    uniform_grid(DEFAULT_GRID_MAX, DEFAULT_GRID_STEP).unwrap()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 load points, got {}",
            grid.len()
        )));
    }
    if let Some(g) = grid.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(Error::InvalidGrid(format!("load {g} is negative")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("loads must be strictly increasing".into()));
    }
    Ok(())
}

/// Independent stream for grid point `index`.
pub(crate) fn point_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Estimates PLR at every grid point. Each point uses its own random stream
/// derived from `(seed, index)`, so results do not depend on evaluation order.
pub fn build_curve(
    config: &SystemConfig,
    grid: &[f64],
    frames_per_point: u32,
    seed: u64,
) -> Result<PlrCurve> {
    build_curve_with(config, grid, frames_per_point, seed, LoadModel::default())
}

pub fn build_curve_with(
    config: &SystemConfig,
    grid: &[f64],
    frames_per_point: u32,
    seed: u64,
    load: LoadModel,
) -> Result<PlrCurve> {
    check_grid(grid)?;
    if frames_per_point == 0 {
        return Err(Error::param("frames_per_point", 0.0, "must be at least 1"));
    }
    let samples = grid
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let mut rng = point_rng(seed, i);
            let est = estimate_plr_with(g, config, frames_per_point, load, &mut rng)?;
            Ok(PlrSample {
                g_in: g,
                plr: if g == 0.0 { 0.0 } else { est.plr },
                frames: frames_per_point,
                se: est.std_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlrCurve {
        n_f: config.frame_size(),
        i_max: config.max_sic_iterations(),
        degrees: config.degree_dist().clone(),
        seed,
        load_model: load,
        samples,
    })
}

impl PlrCurve {
    /// Assembles a curve from existing samples, enforcing the structural
    /// invariants.
    pub fn from_samples(
        n_f: usize,
        i_max: u32,
        degrees: DegreeDistribution,
        seed: u64,
        samples: Vec<PlrSample>,
    ) -> Result<Self> {
        let curve = Self {
            n_f,
            i_max,
            degrees,
            seed,
            load_model: LoadModel::default(),
            samples,
        };
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_f == 0 {
            return Err(Error::Validation("n_f must be at least 1".into()));
        }
        if self.i_max == 0 {
            return Err(Error::Validation("i_max must be at least 1".into()));
        }
        if self.degrees.max_degree() as usize > self.n_f {
            return Err(Error::DegreeExceedsFrame {
                degree: self.degrees.max_degree(),
                frame_size: self.n_f,
            });
        }
        if self.samples.len() < 2 {
            return Err(Error::Validation(format!(
                "samples: need at least 2, got {}",
                self.samples.len()
            )));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if !(s.g_in.is_finite() && s.g_in >= 0.0) {
                return Err(Error::Validation(format!(
                    "samples[{i}].g_in = {} is negative",
                    s.g_in
                )));
            }
            if !(0.0..=1.0).contains(&s.plr) {
                return Err(Error::Validation(format!(
                    "samples[{i}].plr = {} outside [0, 1]",
                    s.plr
                )));
            }
            if !(s.se.is_finite() && s.se >= 0.0) {
                return Err(Error::Validation(format!("samples[{i}].se = {} is negative", s.se)));
            }
            if s.frames == 0 {
                return Err(Error::Validation(format!("samples[{i}].frames must be positive")));
            }
            if s.g_in == 0.0 && s.plr != 0.0 {
                return Err(Error::Validation(format!(
                    "samples[{i}].plr must be 0 at zero load"
                )));
            }
            if i > 0 && s.g_in <= self.samples[i - 1].g_in {
                return Err(Error::Validation(format!(
                    "samples[{i}].g_in is not strictly increasing"
                )));
            }
        }
        Ok(())
    }

    pub fn samples(&self) -> &[PlrSample] {
        &self.samples
    }

    pub fn max_load(&self) -> f64 {
        self.samples.last().unwrap().g_in
    }

    pub fn matches(&self, config: &SystemConfig) -> bool {
        self.n_f == config.frame_size()
            && self.i_max == config.max_sic_iterations()
            && &self.degrees == config.degree_dist()
    }

    /// Piecewise-linear PLR. Between the origin and the first sample the
    /// curve runs from `(0, 0)`; beyond the last sample it stays flat.
    pub fn interpolate(&self, g_in: f64) -> f64 {
        let s = &self.samples;
        let last = s.last().unwrap();
        if g_in >= last.g_in {
            return last.plr;
        }
        let hi = s.partition_point(|p| p.g_in <= g_in);
        if hi == 0 {
            let first = s[0];
            return if g_in <= 0.0 {
                0.0
            } else {
                first.plr * g_in / first.g_in
            };
        }
        let a = s[hi - 1];
        if a.g_in == g_in {
            return a.plr;
        }
        let b = s[hi];
        let t = (g_in - a.g_in) / (b.g_in - a.g_in);
        a.plr + t * (b.plr - a.plr)
    }

    /// `g * (1 - PLR(g))`, the expected throughput at load `g`.
    pub fn throughput(&self, g_in: f64) -> f64 {
        g_in * (1.0 - self.interpolate(g_in))
    }

    /// Sample with the largest throughput.
    pub fn peak_throughput(&self) -> (f64, f64) {
        self.samples
            .iter()
            .map(|s| (s.g_in, s.g_in * (1.0 - s.plr)))
            .fold((0.0, f64::NEG_INFINITY), |best, p| if p.1 > best.1 { p } else { best })
    }

    /// Moving average over three neighbouring samples (two at the ends).
    /// A zero-load point keeps PLR 0.
    pub fn smoothed(&self) -> Self {
        let s = &self.samples;
        let n = s.len();
        let samples = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(1);
                let hi = (i + 1).min(n - 1);
                let mean = s[lo..=hi].iter().map(|p| p.plr).sum::<f64>() / (hi - lo + 1) as f64;
                PlrSample {
                    plr: if s[i].g_in == 0.0 { 0.0 } else { mean },
                    ..s[i]
                }
            })
            .collect();
        Self {
            samples,
            ..self.clone()
        }
    }

    pub fn save_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    pub fn load_json<R: Read>(reader: R) -> Result<Self> {
        let curve: Self = serde_json::from_reader(reader)?;
        curve.validate()?;
        Ok(curve)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("curve serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Self::load_json(text.as_bytes())
    }

    /// CSV export with header `g_in,plr,frames,se`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["g_in", "plr", "frames", "se"])?;
        for s in &self.samples {
            w.write_record([
                crate::io::fmt_real(s.g_in),
                crate::io::fmt_real(s.plr),
                s.frames.to_string(),
                crate::io::fmt_real(s.se),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn save_curve<W: Write>(curve: &PlrCurve, writer: W) -> Result<()> {
    curve.save_json(writer)
}

pub fn load_curve<R: Read>(reader: R) -> Result<PlrCurve> {
    PlrCurve::load_json(reader)
}
