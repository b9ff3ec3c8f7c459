//! Configuration types shared by the frame simulator, the PLR estimator and
//! the stability analysis.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the probability sum of user-supplied distributions.
pub const USER_SUM_TOLERANCE: f64 = 1e-6;
/// Tolerance on the probability sum after construction.
pub const INTERNAL_SUM_TOLERANCE: f64 = 1e-9;

/// Probability mass over the number of instances a packet places in a frame.
///
/// Entries are kept sorted by degree. A regular distribution (CRDSA with
/// degree 2, CRDSA++ with degree 3, ...) has a single entry with
/// probability 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<DegreeEntry>", into = "Vec<DegreeEntry>")]
pub struct DegreeDistribution {
    entries: Vec<(u32, f64)>,
    // running sum used by sample(); last element is exactly 1
    cumulative: Vec<f64>,
}

/// Wire form of one distribution entry: `{"l": int, "p": float}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegreeEntry {
    pub l: u32,
    pub p: f64,
}

impl DegreeDistribution {
    pub fn regular(degree: u32) -> Result<Self> {
        if degree == 0 {
            return Err(Error::ZeroDegree(0));
        }
        Ok(Self {
            entries: vec![(degree, 1.0)],
            cumulative: vec![1.0],
        })
    }

    /// Builds a validated distribution from `(degree, probability)` pairs.
    ///
    /// Sums within [`USER_SUM_TOLERANCE`] of one are renormalized; anything
    /// else is rejected.
    pub fn irregular(entries: &[(u32, f64)]) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let mut sorted = entries.to_vec();
        for &(l, p) in &sorted {
            if l == 0 {
                return Err(Error::ZeroDegree(l));
            }
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::NegativeProbability(p));
            }
        }
        sorted.sort_by_key(|&(l, _)| l);
        if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateDegree(w[0].0));
        }
        let sum: f64 = sorted.iter().map(|&(_, p)| p).sum();
        if (sum - 1.0).abs() > USER_SUM_TOLERANCE {
            return Err(Error::ProbabilitySum(sum));
        }
        for e in &mut sorted {
            e.1 /= sum;
        }
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = sorted
            .iter()
            .map(|&(_, p)| {
                acc += p;
                acc
            })
            .collect();
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(Self {
            entries: sorted,
            cumulative,
        })
    }

    /// CRDSA: every packet sent twice.
    pub fn crdsa() -> Self {
        Self::regular(2).unwrap()
    }

    /// Regular CRDSA++ with three instances.
    pub fn crdsa3() -> Self {
        Self::regular(3).unwrap()
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn max_degree(&self) -> u32 {
        self.entries.last().map(|&(l, _)| l).unwrap_or(0)
    }

    pub fn is_regular(&self) -> bool {
        self.entries.len() == 1
    }

    pub fn mean_degree(&self) -> f64 {
        self.entries.iter().map(|&(l, p)| l as f64 * p).sum()
    }

    pub fn probability_of(&self, degree: u32) -> f64 {
        self.entries
            .iter()
            .find(|&&(l, _)| l == degree)
            .map(|&(_, p)| p)
            .unwrap_or(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.entries.len() == 1 {
            return self.entries[0].0;
        }
        let u: f64 = rng.random();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.entries[idx.min(self.entries.len() - 1)].0
    }

    /// `{"degrees": [...]}` document form.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "degrees": self }).to_string()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc {
            degrees: DegreeDistribution,
        }
        let doc: Doc = serde_json::from_str(text)?;
        Ok(doc.degrees)
    }
}

impl TryFrom<Vec<DegreeEntry>> for DegreeDistribution {
    type Error = Error;

    fn try_from(v: Vec<DegreeEntry>) -> Result<Self> {
        let pairs: Vec<(u32, f64)> = v.into_iter().map(|e| (e.l, e.p)).collect();
        Self::irregular(&pairs)
    }
}

impl From<DegreeDistribution> for Vec<DegreeEntry> {
    fn from(d: DegreeDistribution) -> Self {
        d.entries
            .into_iter()
            .map(|(l, p)| DegreeEntry { l, p })
            .collect()
    }
}

pub fn make_regular(degree: u32) -> Result<DegreeDistribution> {
    DegreeDistribution::regular(degree)
}

pub fn make_irregular(entries: &[(u32, f64)]) -> Result<DegreeDistribution> {
    DegreeDistribution::irregular(entries)
}

pub fn sample_degree<R: Rng + ?Sized>(dist: &DegreeDistribution, rng: &mut R) -> u32 {
    dist.sample(rng)
}

/// Frame size, SIC iteration budget and burst degree distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    frame_size: usize,
    max_sic_iterations: u32,
    degree_dist: DegreeDistribution,
}

impl SystemConfig {
    pub fn new(
        frame_size: usize,
        max_sic_iterations: u32,
        degree_dist: DegreeDistribution,
    ) -> Result<Self> {
        if frame_size == 0 {
            return Err(Error::param("frame_size", 0.0, "must be at least 1"));
        }
        if max_sic_iterations == 0 {
            return Err(Error::param(
                "max_sic_iterations",
                0.0,
                "must be at least 1",
            ));
        }
        let degree = degree_dist.max_degree();
        if degree as usize > frame_size {
            return Err(Error::DegreeExceedsFrame { degree, frame_size });
        }
        Ok(Self {
            frame_size,
            max_sic_iterations,
            degree_dist,
        })
    }

    /// CRDSA with the given frame size and iteration budget.
    pub fn crdsa(frame_size: usize, max_sic_iterations: u32) -> Result<Self> {
        Self::new(frame_size, max_sic_iterations, DegreeDistribution::crdsa())
    }

    pub fn frame_size(&self) -> usize {
        self.frame_size
    }

    pub fn max_sic_iterations(&self) -> u32 {
        self.max_sic_iterations
    }

    pub fn degree_dist(&self) -> &DegreeDistribution {
        &self.degree_dist
    }
}

/// Source of fresh traffic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PopulationModel {
    /// `M` users, each idle user activates with probability `p0` per frame.
    Finite {
        #[serde(rename = "m")]
        total_users: u32,
        #[serde(rename = "p0")]
        activation_prob: f64,
    },
    /// Poisson arrivals with mean `lambda` packets per slot.
    Infinite {
        #[serde(rename = "lambda")]
        arrival_rate: f64,
    },
}

impl PopulationModel {
    pub fn finite(total_users: u32, activation_prob: f64) -> Result<Self> {
        let p = Self::Finite {
            total_users,
            activation_prob,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn infinite(arrival_rate: f64) -> Result<Self> {
        let p = Self::Infinite { arrival_rate };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Finite {
                total_users,
                activation_prob,
            } => {
                if total_users == 0 {
                    return Err(Error::param("m", 0.0, "must be at least 1"));
                }
                if !(0.0..=1.0).contains(&activation_prob) {
                    return Err(Error::param("p0", activation_prob, "must lie in [0, 1]"));
                }
            }
            Self::Infinite { arrival_rate } => {
                if !(arrival_rate.is_finite() && arrival_rate >= 0.0) {
                    return Err(Error::param("lambda", arrival_rate, "must be >= 0"));
                }
            }
        }
        Ok(())
    }

    pub fn total_users(&self) -> Option<u32> {
        match *self {
            Self::Finite { total_users, .. } => Some(total_users),
            Self::Infinite { .. } => None,
        }
    }
}

/// Geometric retransmission: a backlogged user retransmits in each frame
/// with probability `p_r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RetransmitPolicy(f64);

impl RetransmitPolicy {
    pub fn new(retransmit_prob: f64) -> Result<Self> {
        if retransmit_prob > 0.0 && retransmit_prob <= 1.0 {
            Ok(Self(retransmit_prob))
        } else {
            Err(Error::param("p_r", retransmit_prob, "must lie in (0, 1]"))
        }
    }

    pub fn retransmit_prob(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for RetransmitPolicy {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

impl From<RetransmitPolicy> for f64 {
    fn from(p: RetransmitPolicy) -> f64 {
        p.0
    }
}

pub fn check_retransmit_prob(p_r: f64) -> Result<()> {
    RetransmitPolicy::new(p_r).map(|_| ())
}
