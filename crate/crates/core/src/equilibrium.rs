//! Equilibrium contours, channel load lines and stability classification.
//!
//! The contour is parametrised by the total load `G_IN`:
//!
//! ```text
//! G_T = G_IN (1 - PLR(G_IN))
//! N_B = G_IN PLR(G_IN) N_f / p_r
//! ```
//!
//! Equilibria are located on the one-frame backlog drift along the load
//! line rather than by intersecting polylines, since the contour need not be
//! single valued in `N_B`.

use std::fmt;
use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_retransmit_prob, PopulationModel};
use crate::plr::PlrCurve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourPoint {
    pub g_in: f64,
    pub g_t: f64,
    pub n_b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumContour {
    pub points: Vec<ContourPoint>,
    pub p_r: f64,
    pub n_f: usize,
    pub i_max: u32,
    pub curve_seed: u64,
}

impl EquilibriumContour {
    /// Point of maximum `G_T`.
    pub fn peak(&self) -> ContourPoint {
        *self
            .points
            .iter()
            .max_by(|a, b| a.g_t.total_cmp(&b.g_t))
            .expect("contour is nonempty")
    }

    /// CSV with header `g_in,g_t,n_b`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = crate::io::csv_writer(writer);
        w.write_record(["g_in", "g_t", "n_b"])?;
        for p in &self.points {
            w.write_record([
                crate::io::fmt_real(p.g_in),
                crate::io::fmt_real(p.g_t),
                crate::io::fmt_real(p.n_b),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Equilibrium contour sampled at each load in `g_in_grid`.
pub fn compute_contour(curve: &PlrCurve, p_r: f64, g_in_grid: &[f64]) -> Result<EquilibriumContour> {
    check_retransmit_prob(p_r)?;
    if g_in_grid.first() != Some(&0.0) {
        return Err(Error::InvalidGrid("contour grid must start at 0".into()));
    }
    if g_in_grid.windows(2).any(|w| w[1] <= w[0]) || g_in_grid.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidGrid("loads must be strictly increasing".into()));
    }
    let n_f = curve.n_f as f64;
    let points = g_in_grid
        .iter()
        .map(|&g| {
            let plr = curve.interpolate(g);
            ContourPoint {
                g_in: g,
                g_t: g * (1.0 - plr),
                n_b: g * plr * n_f / p_r,
            }
        })
        .collect();
    Ok(EquilibriumContour {
        points,
        p_r,
        n_f: curve.n_f,
        i_max: curve.i_max,
        curve_seed: curve.seed,
    })
}

/// Contour on the curve's own load grid, prefixed with zero load.
pub fn contour_on_curve_grid(curve: &PlrCurve, p_r: f64) -> Result<EquilibriumContour> {
    let mut grid: Vec<f64> = curve.samples().iter().map(|s| s.g_in).collect();
    if grid[0] != 0.0 {
        grid.insert(0, 0.0);
    }
    compute_contour(curve, p_r, &grid)
}

/// Fresh load `G_T` as a function of the backlog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadLine {
    pub population: PopulationModel,
    pub frame_size: usize,
}

impl LoadLine {
    pub fn new(population: PopulationModel, frame_size: usize) -> Result<Self> {
        population.validate()?;
        if frame_size == 0 {
            return Err(Error::param("frame_size", 0.0, "must be at least 1"));
        }
        Ok(Self {
            population,
            frame_size,
        })
    }

    /// Slope `m` of the line in the `(N_B, G_T)` plane (zero for Poisson
    /// arrivals).
    pub fn slope(&self) -> f64 {
        match self.population {
            PopulationModel::Finite {
                activation_prob, ..
            } => -activation_prob / self.frame_size as f64,
            PopulationModel::Infinite { .. } => 0.0,
        }
    }

    pub fn g_t(&self, n_b: f64) -> Result<f64> {
        if !(n_b.is_finite() && n_b >= 0.0) {
            return Err(Error::param("n_b", n_b, "must be >= 0"));
        }
        match self.population {
            PopulationModel::Finite {
                total_users,
                activation_prob,
            } => {
                let m = total_users as f64;
                if n_b > m {
                    return Err(Error::param("n_b", n_b, "exceeds the number of users"));
                }
                Ok(((m - n_b) * activation_prob / self.frame_size as f64).max(0.0))
            }
            PopulationModel::Infinite { arrival_rate } => Ok(arrival_rate),
        }
    }
}

pub fn load_line_g_t(line: &LoadLine, n_b: f64) -> Result<f64> {
    line.g_t(n_b)
}

/// Expected one-frame change of the backlog at backlog `n_b`:
/// newly lost packets minus retransmissions leaving the backlog.
pub fn drift(n_b: f64, line: &LoadLine, p_r: f64, curve: &PlrCurve) -> Result<f64> {
    check_retransmit_prob(p_r)?;
    let n_f = line.frame_size as f64;
    let g_in = line.g_t(n_b)? + n_b * p_r / n_f;
    Ok(g_in * n_f * curve.interpolate(g_in) - n_b * p_r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    GloballyStable,
    LocallyStable,
    Unstable,
    Saturation,
}

impl EquilibriumKind {
    pub fn is_stable(self) -> bool {
        !matches!(self, Self::Unstable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    /// Infinite for the saturation point of an infinite population;
    /// serialized as `null`.
    #[serde(with = "unbounded")]
    pub n_b: f64,
    pub g_t: f64,
    pub kind: EquilibriumKind,
}

impl EquilibriumPoint {
    pub fn is_unbounded(&self) -> bool {
        self.n_b.is_infinite()
    }
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelClass {
    Stable,
    Unstable,
    Overloaded,
}

impl fmt::Display for ChannelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stable => "Stable channel",
            Self::Unstable => "Unstable channel",
            Self::Overloaded => "Overloaded channel",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelAnalysis {
    pub equilibria: Vec<EquilibriumPoint>,
    pub channel_class: ChannelClass,
    pub operating_point: Option<EquilibriumPoint>,
    pub p_r: f64,
    pub load_line: LoadLine,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl ChannelAnalysis {
    /// First unstable equilibrium, if any.
    pub fn unstable_point(&self) -> Option<EquilibriumPoint> {
        self.equilibria
            .iter()
            .copied()
            .find(|e| e.kind == EquilibriumKind::Unstable)
    }

    pub fn saturation_point(&self) -> Option<EquilibriumPoint> {
        self.equilibria
            .iter()
            .copied()
            .find(|e| e.kind == EquilibriumKind::Saturation)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("analysis serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// CSV with header `n_b,g_t,kind`. An unbounded backlog is written as `inf`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = crate::io::csv_writer(writer);
        w.write_record(["n_b", "g_t", "kind"])?;
        for e in &self.equilibria {
            w.write_record([
                crate::io::fmt_real(e.n_b),
                crate::io::fmt_real(e.g_t),
                format!("{:?}", e.kind),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Knobs for [`find_equilibria_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumOptions {
    /// Drift evaluations across the scanned backlog range.
    pub scan_points: usize,
    /// Bisection stops once the bracket is narrower than this many users.
    pub tolerance: f64,
    /// A stable root below this fraction of the peak contour `G_T` is the
    /// saturation point.
    pub saturation_fraction: f64,
    /// Infinite population: scan up to `horizon_factor * N_f / p_r`.
    pub horizon_factor: f64,
    /// Opposite roots closer than this many scan cells are treated as noise.
    pub merge_cells: f64,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            scan_points: 400,
            tolerance: 1e-3,
            saturation_fraction: 0.05,
            horizon_factor: 20.0,
            merge_cells: 2.0,
        }
    }
}

pub fn find_equilibria(line: &LoadLine, p_r: f64, curve: &PlrCurve) -> Result<ChannelAnalysis> {
    find_equilibria_with(line, p_r, curve, &EquilibriumOptions::default())
}

struct Root {
    n_b: f64,
    stable: bool,
}

pub fn find_equilibria_with(
    line: &LoadLine,
    p_r: f64,
    curve: &PlrCurve,
    opts: &EquilibriumOptions,
) -> Result<ChannelAnalysis> {
    check_retransmit_prob(p_r)?;
    line.population.validate()?;
    if opts.scan_points < 2 {
        return Err(Error::param("scan_points", opts.scan_points as f64, "must be >= 2"));
    }
    let n_f = line.frame_size as f64;
    let upper = match line.population {
        PopulationModel::Finite { total_users, .. } => total_users as f64,
        PopulationModel::Infinite { .. } => opts.horizon_factor * n_f / p_r,
    };
    let f = |n: f64| drift(n, line, p_r, curve);

    let cells = opts.scan_points - 1;
    let step = upper / cells as f64;
    let xs: Vec<f64> = (0..opts.scan_points)
        .map(|i| if i == cells { upper } else { i as f64 * step })
        .collect();
    let ds = xs.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;

    // Zero drift carries the previous sign; the origin counts as growing.
    let mut signs = Vec::with_capacity(ds.len());
    let mut last = true;
    for &d in &ds {
        if d != 0.0 {
            last = d > 0.0;
        }
        signs.push(last);
    }

    let mut roots = Vec::new();
    for i in 0..cells {
        if signs[i] == signs[i + 1] {
            continue;
        }
        let stable = signs[i];
        let n_b = if ds[i] == 0.0 {
            xs[i]
        } else {
            bisect(&f, xs[i], xs[i + 1], opts.tolerance, 1e-6 * n_f)?
        };
        roots.push(Root { n_b, stable });
    }

    let mut diagnostics = Vec::new();
    let merge_dist = opts.merge_cells * step;
    let mut i = 0;
    while i + 1 < roots.len() {
        if roots[i + 1].n_b - roots[i].n_b < merge_dist && roots[i].stable != roots[i + 1].stable {
            let msg = format!(
                "discarded root pair at n_b = {:.3} and {:.3}: closer than {} scan cells",
                roots[i].n_b, roots[i + 1].n_b, opts.merge_cells
            );
            warn!("{msg}");
            diagnostics.push(msg);
            roots.drain(i..i + 2);
        } else {
            i += 1;
        }
    }

    let peak = contour_on_curve_grid(curve, p_r)?.peak().g_t;
    let threshold = opts.saturation_fraction * peak;
    let mut equilibria = roots
        .iter()
        .map(|r| {
            Ok(EquilibriumPoint {
                n_b: r.n_b,
                g_t: line.g_t(r.n_b)?,
                kind: if r.stable {
                    EquilibriumKind::LocallyStable
                } else {
                    EquilibriumKind::Unstable
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let diverges = matches!(line.population, PopulationModel::Infinite { .. }) && *signs.last().unwrap();
    if diverges {
        equilibria.push(EquilibriumPoint {
            n_b: f64::INFINITY,
            g_t: line.g_t(0.0)?,
            kind: EquilibriumKind::Saturation,
        });
    } else if let Some(last) = equilibria.last_mut() {
        if last.kind.is_stable() && last.n_b > 0.0 && last.g_t < threshold {
            last.kind = EquilibriumKind::Saturation;
        }
    }

    let channel_class = match equilibria.as_slice() {
        [only] if only.kind == EquilibriumKind::Saturation => ChannelClass::Overloaded,
        [only] if only.kind.is_stable() => ChannelClass::Stable,
        _ => ChannelClass::Unstable,
    };
    if channel_class == ChannelClass::Stable {
        equilibria[0].kind = EquilibriumKind::GloballyStable;
    }
    let operating_point = equilibria
        .iter()
        .copied()
        .find(|e| matches!(e.kind, EquilibriumKind::GloballyStable | EquilibriumKind::LocallyStable));

    Ok(ChannelAnalysis {
        equilibria,
        channel_class,
        operating_point,
        p_r,
        load_line: *line,
        diagnostics,
    })
}

/// Bisection on a bracket with opposite drift signs. Runs until the bracket
/// is narrower than `x_tol` and the drift is below `f_tol`, or until the
/// bracket cannot shrink further.
fn bisect<F>(f: &F, mut lo: f64, mut hi: f64, x_tol: f64, f_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let lo_positive = f(lo)? > 0.0;
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let d = f(mid)?;
        if hi - lo < x_tol && d.abs() < f_tol {
            break;
        }
        if d == 0.0 {
            break;
        }
        if (d > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Population size that puts the channel load line through the contour's
/// throughput peak for a given activation probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationDesign {
    pub total_users: u32,
    /// `(M / N_f) p0 >= G_T^max`, i.e. the load line has negative slope
    /// and reaches the peak.
    pub feasible: bool,
    pub slope: f64,
}

pub fn design_population(target: ContourPoint, p0: f64, frame_size: usize) -> Result<PopulationDesign> {
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::param("p0", p0, "must lie in (0, 1]"));
    }
    let n_f = frame_size as f64;
    let m = (target.g_t * n_f / p0 + target.n_b).round();
    Ok(PopulationDesign {
        total_users: m as u32,
        feasible: m / n_f * p0 >= target.g_t,
        slope: -p0 / n_f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DegreeDistribution;
    use crate::plr::PlrSample;

    /// A hand-made curve shaped like CRDSA at N_f = 100.
    fn synthetic() -> PlrCurve {
        let pts = [
            (0.0, 0.0),
            (0.2, 0.01),
            (0.4, 0.03),
            (0.5, 0.07),
            (0.6, 0.15),
            (0.8, 0.40),
            (1.0, 0.63),
            (1.5, 0.885),
            (2.0, 0.96),
            (3.0, 0.995),
            (4.0, 0.9993),
        ];
        let samples = pts
            .iter()
            .map(|&(g_in, plr)| PlrSample { g_in, plr, frames: 1, se: 0.0 })
            .collect();
        PlrCurve::from_samples(100, 20, DegreeDistribution::crdsa(), 0, samples).unwrap()
    }

    fn finite(m: u32, p0: f64) -> LoadLine {
        LoadLine::new(PopulationModel::finite(m, p0).unwrap(), 100).unwrap()
    }

    #[test]
    fn load_line_values() {
        let l = finite(350, 0.143);
        assert!((l.g_t(0.0).unwrap() - 0.5005).abs() < 1e-12);
        assert_eq!(l.g_t(350.0).unwrap(), 0.0);
        assert!(l.g_t(351.0).is_err());
        assert!(l.slope() < 0.0);
        let inf = LoadLine::new(PopulationModel::infinite(0.4).unwrap(), 100).unwrap();
        assert_eq!(inf.g_t(0.0).unwrap(), 0.4);
        assert_eq!(inf.g_t(1e6).unwrap(), 0.4);
    }

    #[test]
    fn contour_origin_and_scaling() {
        let c = synthetic();
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
        let one = compute_contour(&c, 1.0, &grid).unwrap();
        let half = compute_contour(&c, 0.5, &grid).unwrap();
        assert_eq!(one.points[0], ContourPoint { g_in: 0.0, g_t: 0.0, n_b: 0.0 });
        for (a, b) in one.points.iter().zip(&half.points) {
            assert_eq!(a.g_t, b.g_t);
            assert_eq!(b.n_b, 2.0 * a.n_b);
            assert!(a.g_t <= a.g_in);
        }
        assert!(compute_contour(&c, 0.0, &grid).is_err());
        assert!(compute_contour(&c, 1.5, &grid).is_err());
        assert!(compute_contour(&c, 1.0, &[0.5, 1.0]).is_err());
    }

    #[test]
    fn empty_system_has_no_drift() {
        let c = synthetic();
        assert_eq!(drift(0.0, &finite(100, 0.0), 0.5, &c).unwrap(), 0.0);
        let l = LoadLine::new(PopulationModel::infinite(0.0).unwrap(), 100).unwrap();
        assert_eq!(drift(0.0, &l, 0.5, &c).unwrap(), 0.0);
    }

    #[test]
    fn drift_at_full_backlog_is_not_positive() {
        let c = synthetic();
        for (m, p0, pr) in [(350, 0.143, 1.0), (350, 0.18, 0.5), (50, 0.9, 0.2)] {
            assert!(drift(m as f64, &finite(m, p0), pr, &c).unwrap() <= 0.0);
        }
    }

    #[test]
    fn idle_population_is_stable_at_origin() {
        let a = find_equilibria(&finite(100, 0.0), 0.5, &synthetic()).unwrap();
        assert_eq!(a.channel_class, ChannelClass::Stable);
        assert_eq!(a.equilibria[0].n_b, 0.0);
        assert_eq!(a.equilibria[0].kind, EquilibriumKind::GloballyStable);
    }

    #[test]
    fn alternating_classification() {
        let a = find_equilibria(&finite(350, 0.143), 1.0, &synthetic()).unwrap();
        assert_eq!(a.channel_class, ChannelClass::Unstable);
        let kinds: Vec<_> = a.equilibria.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            [EquilibriumKind::LocallyStable, EquilibriumKind::Unstable, EquilibriumKind::Saturation]
        );
        for e in &a.equilibria {
            assert!(drift(e.n_b, &a.load_line, 1.0, &synthetic()).unwrap().abs() < 1e-4);
        }
        assert_eq!(a.operating_point, Some(a.equilibria[0]));
    }

    #[test]
    fn overloaded_has_no_operating_point() {
        let a = find_equilibria(&finite(350, 0.18), 1.0, &synthetic()).unwrap();
        assert_eq!(a.channel_class, ChannelClass::Overloaded);
        assert_eq!(a.equilibria.len(), 1);
        assert!(a.operating_point.is_none());
    }

    #[test]
    fn infinite_population_saturates_at_infinity() {
        let l = LoadLine::new(PopulationModel::infinite(0.4).unwrap(), 100).unwrap();
        let a = find_equilibria(&l, 0.5, &synthetic()).unwrap();
        assert_eq!(a.channel_class, ChannelClass::Unstable);
        let last = a.equilibria.last().unwrap();
        assert!(last.is_unbounded());
        assert_eq!(last.kind, EquilibriumKind::Saturation);
        let json = a.to_json_string();
        assert!(json.contains("null"));
        assert_eq!(ChannelAnalysis::from_json_str(&json).unwrap(), a);
    }

    #[test]
    fn design_hits_the_target_point() {
        let t = ContourPoint { g_in: 0.0, g_t: 0.5, n_b: 10.0 };
        let d = design_population(t, 0.143, 100).unwrap();
        assert_eq!(d.total_users, 360);
        assert!(d.feasible);
        let t0 = ContourPoint { g_in: 0.0, g_t: 0.5, n_b: 0.0 };
        assert_eq!(design_population(t0, 1.0, 100).unwrap().total_users, 50);
        assert!(design_population(t0, 0.0, 100).is_err());
    }

    #[test]
    fn verdict_vocabulary() {
        assert_eq!(ChannelClass::Stable.to_string(), "Stable channel");
        assert_eq!(ChannelClass::Unstable.to_string(), "Unstable channel");
        assert_eq!(ChannelClass::Overloaded.to_string(), "Overloaded channel");
    }
}
