//! Packet delay at a channel operating point.
//!
//! A packet succeeds in its first frame with probability `1 - PLR`. After a
//! failure its user sits in the backlog and, in every later frame, leaves
//! it with probability `p_r (1 - PLR)` (retransmits and succeeds). The delay
//! in frames is therefore
//!
//! ```text
//! P(D = 1) = 1 - PLR
//! P(D = n) = PLR * p_r (1 - PLR) * s^(n - 2),   s = 1 - p_r + PLR p_r,   n > 1
//! ```

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{ChannelAnalysis, ChannelClass};
use crate::error::{Error, Result};
use crate::model::check_retransmit_prob;
use crate::plr::PlrCurve;

pub const DEFAULT_N_MAX: u32 = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayDistribution {
    pub plr: f64,
    pub p_r: f64,
    /// `(n, P(D = n))` for `n = 1..=n_max`.
    pub pmf: Vec<(u32, f64)>,
    /// `P(D > n_max)`.
    pub tail: f64,
}

impl DelayDistribution {
    pub fn total_mass(&self) -> f64 {
        self.pmf.iter().map(|&(_, p)| p).sum::<f64>() + self.tail
    }

    pub fn probability(&self, n: u32) -> f64 {
        self.pmf
            .iter()
            .find(|&&(k, _)| k == n)
            .map(|&(_, p)| p)
            .unwrap_or(0.0)
    }

    /// CSV with header `n,probability`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = crate::io::csv_writer(writer);
        w.write_record(["n", "probability"])?;
        for &(n, p) in &self.pmf {
            w.write_record([n.to_string(), crate::io::fmt_real(p)])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_inputs(plr: f64, p_r: f64) -> Result<()> {
    if !(0.0..1.0).contains(&plr) {
        return Err(Error::param("plr", plr, "must lie in [0, 1)"));
    }
    check_retransmit_prob(p_r)
}

/// Ratio of consecutive delay probabilities beyond the first retransmission.
fn stay_prob(plr: f64, p_r: f64) -> f64 {
    1.0 - p_r + plr * p_r
}

/// Delay pmf truncated at `n_max`. With `plr = 0` the pmf is the single
/// point `n = 1`.
pub fn delay_pmf(plr: f64, p_r: f64, n_max: u32) -> Result<DelayDistribution> {
    check_inputs(plr, p_r)?;
    if n_max == 0 {
        return Err(Error::param("n_max", 0.0, "must be at least 1"));
    }
    let s = stay_prob(plr, p_r);
    let mut pmf = vec![(1, 1.0 - plr)];
    if plr > 0.0 {
        let first_retry = plr * p_r * (1.0 - plr);
        let mut p = first_retry;
        for n in 2..=n_max {
            pmf.push((n, p));
            p *= s;
        }
    }
    let tail = if plr > 0.0 { plr * s.powi(n_max as i32 - 1) } else { 0.0 };
    Ok(DelayDistribution { plr, p_r, pmf, tail })
}

/// Mean delay in frames, `1 + PLR / (p_r (1 - PLR))`.
pub fn mean_delay(plr: f64, p_r: f64) -> Result<f64> {
    check_inputs(plr, p_r)?;
    Ok(1.0 + plr / (p_r * (1.0 - plr)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPointDelay {
    pub g_in: f64,
    pub plr: f64,
    pub distribution: DelayDistribution,
    pub mean: f64,
}

/// Delay law at the analysis' operating point, with PLR read from `curve` at
/// the operating point's total load.
pub fn operating_point_delay(
    analysis: &ChannelAnalysis,
    curve: &PlrCurve,
    p_r: f64,
    n_max: u32,
) -> Result<OperatingPointDelay> {
    if analysis.channel_class == ChannelClass::Overloaded {
        return Err(Error::NoOperatingPoint);
    }
    let op = analysis.operating_point.ok_or(Error::NoOperatingPoint)?;
    let g_in = op.g_t + op.n_b * p_r / analysis.load_line.frame_size as f64;
    let plr = curve.interpolate(g_in);
    Ok(OperatingPointDelay {
        g_in,
        plr,
        distribution: delay_pmf(plr, p_r, n_max)?,
        mean: mean_delay(plr, p_r)?,
    })
}
