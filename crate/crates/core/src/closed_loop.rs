//! Closed-loop simulation of users, SIC decoding and retransmissions.
//!
//! Every frame: idle (thinking) users activate with probability `p0` (or a
//! Poisson batch of fresh users arrives for an infinite population),
//! backlogged users retransmit with probability `p_r`, all transmissions
//! share one frame and are decoded by SIC. Acknowledgements arrive at the
//! end of the frame; failed packets join or stay in the backlog and may be
//! retransmitted from the next frame on.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::equilibrium::ChannelAnalysis;
use crate::error::{Error, Result};
use crate::frame::{sic_decode, FrameGraph};
use crate::model::{PopulationModel, RetransmitPolicy, SystemConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub config: SystemConfig,
    pub population: PopulationModel,
    pub policy: RetransmitPolicy,
    pub num_frames: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: u32,
    /// Backlogged users at the end of the frame.
    pub n_backlogged: u64,
    pub offered: u64,
    pub decoded: u64,
    pub throughput: f64,
    /// Sum of the delays (in frames) of packets decoded in this frame.
    #[serde(skip)]
    pub delay_sum: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub frames: u32,
    pub avg_throughput: f64,
    pub avg_backlog: f64,
    /// Over packets that succeeded within the window; 0 if none did.
    pub avg_packet_delay_frames: f64,
    pub completed_packets: u64,
}

impl SimSummary {
    fn over(records: &[FrameRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let completed: u64 = records.iter().map(|r| r.decoded).sum();
        let delay: u64 = records.iter().map(|r| r.delay_sum).sum();
        Self {
            frames: records.len() as u32,
            avg_throughput: records.iter().map(|r| r.throughput).sum::<f64>() / n,
            avg_backlog: records.iter().map(|r| r.n_backlogged as f64).sum::<f64>() / n,
            avg_packet_delay_frames: if completed == 0 {
                0.0
            } else {
                delay as f64 / completed as f64
            },
            completed_packets: completed,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub frame_size: usize,
    pub records: Vec<FrameRecord>,
    pub summary: SimSummary,
    /// `delay_histogram[k]` counts packets delivered with delay `k + 1`.
    pub delay_histogram: Vec<u64>,
}

impl SimTrace {
    /// Empirical delay pmf as `(n, frequency)`.
    pub fn delay_frequencies(&self) -> Vec<(u32, f64)> {
        let total: u64 = self.delay_histogram.iter().sum();
        if total == 0 {
            return Vec::new();
        }
        self.delay_histogram
            .iter()
            .enumerate()
            .map(|(k, &c)| (k as u32 + 1, c as f64 / total as f64))
            .collect()
    }

    /// CSV with header `frame,n_backlogged,offered,decoded,throughput`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = crate::io::csv_writer(writer);
        w.write_record(["frame", "n_backlogged", "offered", "decoded", "throughput"])?;
        for r in &self.records {
            w.write_record([
                r.frame.to_string(),
                r.n_backlogged.to_string(),
                r.offered.to_string(),
                r.decoded.to_string(),
                crate::io::fmt_real(r.throughput),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the per-frame columns back. Delay sums are not part of the CSV
    /// and come back as zero.
    pub fn read_csv_records<R: Read>(reader: R) -> Result<Vec<FrameRecord>> {
        let mut r = csv::Reader::from_reader(reader);
        let expected = ["frame", "n_backlogged", "offered", "decoded", "throughput"];
        if r.headers()?.iter().ne(expected) {
            return Err(Error::Parse(format!(
                "trace header must be {}",
                expected.join(",")
            )));
        }
        r.deserialize()
            .map(|row| row.map_err(Error::from))
            .collect()
    }
}

fn record_success(histogram: &mut Vec<u64>, delay: u32) {
    let k = delay as usize - 1;
    if histogram.len() <= k {
        histogram.resize(k + 1, 0);
    }
    histogram[k] += 1;
}

/// Runs the closed loop from an empty backlog. Deterministic in the seed.
pub fn run_simulation(scenario: &SimScenario) -> Result<SimTrace> {
    if scenario.num_frames == 0 {
        return Err(Error::param("num_frames", 0.0, "must be at least 1"));
    }
    scenario.population.validate()?;
    let cfg = &scenario.config;
    let n_f = cfg.frame_size();
    let p_r = scenario.policy.retransmit_prob();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let mut records = Vec::with_capacity(scenario.num_frames as usize);
    let mut histogram = Vec::new();

    // (user or packet slot, first transmission frame) for this frame's senders
    let mut senders: Vec<(usize, u32)> = Vec::new();

    match scenario.population {
        PopulationModel::Finite {
            total_users,
            activation_prob,
        } => {
            // None: thinking; Some(frame): backlogged since its first try
            let mut users: Vec<Option<u32>> = vec![None; total_users as usize];
            let mut backlogged = 0u64;
            for j in 0..scenario.num_frames {
                senders.clear();
                for (u, state) in users.iter().enumerate() {
                    match *state {
                        None if rng.random_bool(activation_prob) => senders.push((u, j)),
                        Some(first) if rng.random_bool(p_r) => senders.push((u, first)),
                        _ => {}
                    }
                }
                let (decoded, delay_sum) =
                    transmit(cfg, &senders, j, &mut rng, &mut histogram, |u, ok, first| {
                        let was_backlogged = users[u].is_some();
                        users[u] = if ok { None } else { Some(first) };
                        match (was_backlogged, ok) {
                            (true, true) => backlogged -= 1,
                            (false, false) => backlogged += 1,
                            _ => {}
                        }
                    });
                records.push(FrameRecord {
                    frame: j,
                    n_backlogged: backlogged,
                    offered: senders.len() as u64,
                    decoded,
                    throughput: decoded as f64 / n_f as f64,
                    delay_sum,
                });
            }
        }
        PopulationModel::Infinite { arrival_rate } => {
            let arrivals = if arrival_rate > 0.0 {
                Some(
                    Poisson::new(arrival_rate * n_f as f64)
                        .map_err(|_| Error::param("lambda", arrival_rate, "too large"))?,
                )
            } else {
                None
            };
            // first transmission frame of each backlogged packet
            let mut backlog: Vec<u32> = Vec::new();
            let mut next: Vec<u32> = Vec::new();
            for j in 0..scenario.num_frames {
                senders.clear();
                next.clear();
                for &first in &backlog {
                    if rng.random_bool(p_r) {
                        senders.push((0, first));
                    } else {
                        next.push(first);
                    }
                }
                let fresh = arrivals.as_ref().map_or(0, |d| d.sample(&mut rng) as usize);
                senders.extend(std::iter::repeat_n((0, j), fresh));
                let (decoded, delay_sum) =
                    transmit(cfg, &senders, j, &mut rng, &mut histogram, |_, ok, first| {
                        if !ok {
                            next.push(first);
                        }
                    });
                std::mem::swap(&mut backlog, &mut next);
                records.push(FrameRecord {
                    frame: j,
                    n_backlogged: backlog.len() as u64,
                    offered: senders.len() as u64,
                    decoded,
                    throughput: decoded as f64 / n_f as f64,
                    delay_sum,
                });
            }
        }
    }

    let summary = SimSummary::over(&records);
    Ok(SimTrace {
        frame_size: n_f,
        records,
        summary,
        delay_histogram: histogram,
    })
}

/// Places and decodes one frame, reporting each sender's outcome through
/// `outcome(sender, decoded, first_tx_frame)`.
fn transmit<R: Rng, F: FnMut(usize, bool, u32)>(
    cfg: &SystemConfig,
    senders: &[(usize, u32)],
    frame_index: u32,
    rng: &mut R,
    histogram: &mut Vec<u64>,
    mut outcome: F,
) -> (u64, u64) {
    let mut frame = FrameGraph::empty(cfg.frame_size());
    for i in 0..senders.len() {
        frame.push_random(i as u64, cfg, rng);
    }
    let result = sic_decode(&frame, cfg.max_sic_iterations());
    let mut delay_sum = 0;
    for (&(id, first), &ok) in senders.iter().zip(&result.decoded_mask) {
        if ok {
            let delay = frame_index - first + 1;
            delay_sum += delay as u64;
            record_success(histogram, delay);
        }
        outcome(id, ok, first);
    }
    (result.num_decoded() as u64, delay_sum)
}

/// Averages over frames `[from, to)`.
pub fn summarize_window(trace: &SimTrace, from: usize, to: usize) -> Result<SimSummary> {
    let len = trace.records.len();
    if from >= to || to > len {
        return Err(Error::InvalidWindow { from, to, len });
    }
    Ok(SimSummary::over(&trace.records[from..to]))
}

/// First frame after which the backlog stays above the analysis' unstable
/// equilibrium for the rest of the run.
pub fn detect_divergence(trace: &SimTrace, analysis: &ChannelAnalysis) -> Option<usize> {
    let threshold = analysis.unstable_point()?.n_b;
    let last_below = trace
        .records
        .iter()
        .rposition(|r| r.n_backlogged as f64 <= threshold);
    match last_below {
        None => Some(0),
        Some(i) if i + 1 < trace.records.len() => Some(i + 1),
        Some(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(population: PopulationModel, p_r: f64, frames: u32, seed: u64) -> SimScenario {
        SimScenario {
            config: SystemConfig::crdsa(100, 20).unwrap(),
            population,
            policy: RetransmitPolicy::new(p_r).unwrap(),
            num_frames: frames,
            seed,
        }
    }

    #[test]
    fn silent_population_gives_zero_trace() {
        let t = run_simulation(&scenario(PopulationModel::finite(350, 0.0).unwrap(), 0.5, 200, 1))
            .unwrap();
        assert!(t
            .records
            .iter()
            .all(|r| r.n_backlogged == 0 && r.offered == 0 && r.decoded == 0 && r.throughput == 0.0));
        assert_eq!(t.summary.avg_throughput, 0.0);
        let w = summarize_window(&t, 10, 50).unwrap();
        assert_eq!((w.avg_throughput, w.avg_backlog), (0.0, 0.0));
    }

    #[test]
    fn reproducible() {
        let s = scenario(PopulationModel::finite(350, 0.143).unwrap(), 0.5, 300, 42);
        assert_eq!(run_simulation(&s).unwrap(), run_simulation(&s).unwrap());
        let inf = scenario(PopulationModel::infinite(0.3).unwrap(), 0.5, 300, 42);
        assert_eq!(run_simulation(&inf).unwrap(), run_simulation(&inf).unwrap());
    }

    #[test]
    fn rejects_empty_run_and_bad_windows() {
        let s = scenario(PopulationModel::finite(10, 0.1).unwrap(), 0.5, 0, 0);
        assert!(run_simulation(&s).is_err());
        let t = run_simulation(&SimScenario { num_frames: 20, ..s }).unwrap();
        assert!(summarize_window(&t, 5, 5).is_err());
        assert!(summarize_window(&t, 6, 5).is_err());
        assert!(summarize_window(&t, 0, 21).is_err());
        assert_eq!(summarize_window(&t, 0, 20).unwrap(), t.summary);
    }

    #[test]
    fn per_frame_invariants() {
        let t = run_simulation(&scenario(PopulationModel::finite(350, 0.143).unwrap(), 1.0, 500, 5))
            .unwrap();
        for r in &t.records {
            assert!(r.decoded <= r.offered);
            assert!(r.decoded <= 100);
            assert!(r.n_backlogged <= 350);
            assert_eq!(r.throughput, r.decoded as f64 / 100.0);
        }
        let hist_total: u64 = t.delay_histogram.iter().sum();
        assert_eq!(hist_total, t.summary.completed_packets);
    }

    #[test]
    fn csv_round_trip() {
        let t = run_simulation(&scenario(PopulationModel::finite(50, 0.3).unwrap(), 0.5, 30, 3))
            .unwrap();
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        assert!(out.starts_with(b"frame,n_backlogged,offered,decoded,throughput\n"));
        let back = SimTrace::read_csv_records(out.as_slice()).unwrap();
        let stripped: Vec<_> = t
            .records
            .iter()
            .map(|r| FrameRecord { delay_sum: 0, ..*r })
            .collect();
        assert_eq!(back, stripped);
    }
}
