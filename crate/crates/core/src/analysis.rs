//! Figures of merit on sampled observable curves: fringe widths, fringe
//! counts, loss-robustness differences and shot-noise working points.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::Serialize;

use crate::detection::{click_statistics, expectation, sensitivity_from, DetectionScheme};
use crate::error::{Error, Result};
use crate::interferometer::InterferometerConfig;
use crate::states::{mean_photon_number, solve_amplitude, Shape, StateSpec};

pub const DEFAULT_PHI_POINTS: usize = 2048;

/// Smallest peak prominence, relative to the curve's full range, that
/// counts as a fringe.
pub const FRINGE_CONTRAST: f64 = 0.05;

/// `points` uniform phases covering one period, `[0, 2 pi)`.
pub fn phi_grid(points: usize) -> Vec<f64> {
    (0..points).map(|i| TAU * i as f64 / points as f64).collect()
}

/// True when `grid` is a uniform sampling of exactly one `2 pi` period.
fn covers_period(grid: &[f64]) -> bool {
    let n = grid.len();
    if n < 3 || grid[0].abs() > 1e-12 {
        return false;
    }
    let h = TAU / n as f64;
    grid.iter().enumerate().all(|(i, x)| (x - i as f64 * h).abs() <= 1e-9)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMeta {
    pub quantity: String,
    pub state: String,
    pub scheme: String,
    pub nbar: f64,
    pub r2: Option<f64>,
}

/// A sampled curve. `f64::INFINITY` marks a diverged sample; indices in
/// `gaps` hold `NaN` where evaluation failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub abscissa: Vec<f64>,
    pub ordinate: Vec<f64>,
    pub gaps: Vec<usize>,
    pub periodic: bool,
    pub meta: SweepMeta,
}

impl SweepResult {
    pub fn new(abscissa: Vec<f64>, ordinate: Vec<f64>, gaps: Vec<usize>, meta: SweepMeta) -> Result<Self> {
        if abscissa.len() != ordinate.len() {
            return Err(Error::InvalidConfig("abscissa and ordinate lengths differ".into()));
        }
        if abscissa.len() < 2 {
            return Err(Error::InvalidConfig("a sweep needs at least two points".into()));
        }
        if abscissa.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("abscissa must be strictly increasing".into()));
        }
        for (i, y) in ordinate.iter().enumerate() {
            if y.is_nan() && !gaps.contains(&i) {
                return Err(Error::Numeric(format!("untagged NaN at sample {i}")));
            }
            if *y == f64::NEG_INFINITY {
                return Err(Error::Numeric(format!("negative infinity at sample {i}")));
            }
        }
        let periodic = covers_period(&abscissa);
        Ok(Self { abscissa, ordinate, gaps, periodic, meta })
    }

    pub fn len(&self) -> usize {
        self.ordinate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordinate.is_empty()
    }

    fn y(&self, i: isize) -> Option<f64> {
        let n = self.len() as isize;
        if self.periodic {
            Some(self.ordinate[i.rem_euclid(n) as usize])
        } else if (0..n).contains(&i) {
            Some(self.ordinate[i as usize])
        } else {
            None
        }
    }

    /// Abscissa with the period added for wrapped indices.
    fn x(&self, i: isize) -> f64 {
        let n = self.len() as isize;
        if self.periodic {
            self.abscissa[i.rem_euclid(n) as usize] + TAU * i.div_euclid(n) as f64
        } else {
            self.abscissa[i as usize]
        }
    }

    fn finite_range(&self) -> Option<(f64, f64)> {
        let finite = self.ordinate.iter().copied().filter(|y| y.is_finite());
        finite.fold(None, |acc, y| match acc {
            None => Some((y, y)),
            Some((lo, hi)) => Some((lo.min(y), hi.max(y))),
        })
    }
}

fn evaluate_grid<F>(grid: &[f64], f: F) -> (Vec<f64>, Vec<usize>)
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let values: Vec<Result<f64>> = grid.par_iter().map(|x| f(*x)).collect();
    let mut gaps = Vec::new();
    let ordinate = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| match v {
            Ok(v) => v,
            Err(e) => {
                log::warn!("sample {i} failed: {e}");
                gaps.push(i);
                f64::NAN
            }
        })
        .collect();
    (ordinate, gaps)
}

fn state_label(spec: &StateSpec) -> String {
    let c = spec.coefficients();
    Shape::presets()
        .into_iter()
        .find(|s| s.coefficients() == c)
        .unwrap_or(Shape::Custom(c))
        .name()
}

/// Observable expectation over a phase grid at fixed loss `r2`.
pub fn observable_curve(spec: &StateSpec, scheme: &DetectionScheme, r2: f64, phi_grid: &[f64]) -> Result<SweepResult> {
    let base = InterferometerConfig::from_loss(0.0, r2)?;
    let (ordinate, gaps) = evaluate_grid(phi_grid, |phi| expectation(spec, &base.with_phi(phi), scheme));
    let meta = SweepMeta {
        quantity: "expectation".into(),
        state: state_label(spec),
        scheme: scheme.to_string(),
        nbar: mean_photon_number(spec),
        r2: Some(r2),
    };
    SweepResult::new(phi_grid.to_vec(), ordinate, gaps, meta)
}

/// Phase uncertainty over the shot-noise limit, `INFINITY` where it diverges.
pub fn sensitivity_curve(spec: &StateSpec, scheme: &DetectionScheme, r2: f64, phi_grid: &[f64]) -> Result<SweepResult> {
    let nbar = mean_photon_number(spec);
    if !(nbar > 0.0) {
        return Err(Error::InvalidConfig("shot-noise ratio needs a positive mean photon number".into()));
    }
    let base = InterferometerConfig::from_loss(0.0, r2)?;
    let (ordinate, gaps) = evaluate_grid(phi_grid, |phi| {
        Ok(sensitivity_from(&click_statistics(spec, &base.with_phi(phi), scheme)?) * nbar.sqrt())
    });
    let meta = SweepMeta {
        quantity: "snl_ratio".into(),
        state: state_label(spec),
        scheme: scheme.to_string(),
        nbar,
        r2: Some(r2),
    };
    SweepResult::new(phi_grid.to_vec(), ordinate, gaps, meta)
}

/// Vertex of the parabola through samples `i-1, i, i+1`, if it lies
/// within one step of `i`.
fn quadratic_vertex(result: &SweepResult, i: isize) -> (f64, f64) {
    let y1 = result.ordinate[i as usize];
    let (Some(y0), Some(y2)) = (result.y(i - 1), result.y(i + 1)) else {
        return (result.x(i), y1);
    };
    let (x0, x1, x2) = (result.x(i - 1), result.x(i), result.x(i + 1));
    let curvature = y0 - 2.0 * y1 + y2;
    if !curvature.is_finite() || curvature == 0.0 || ((x2 - x1) - (x1 - x0)).abs() > 1e-9 * (x2 - x0) {
        return (x1, y1);
    }
    let h = x1 - x0;
    let offset = 0.5 * h * (y0 - y2) / curvature;
    let shift = (y0 - y2).powi(2) / (8.0 * curvature);
    // a vertex deeper than the nearer neighbour means the samples are not parabolic
    if offset.abs() > h || shift.abs() > (y0 - y1).abs().min((y2 - y1).abs()) {
        return (x1, y1);
    }
    (x1 + offset, y1 - shift)
}

/// Global minimum over the finite samples, refined by a local parabola.
pub fn refined_minimum(result: &SweepResult) -> Result<(f64, f64)> {
    let i = result
        .ordinate
        .iter()
        .enumerate()
        .filter(|(_, y)| y.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Numeric("curve has no finite samples".into()))?;
    let (x, y) = quadratic_vertex(result, i as isize);
    Ok((x, y.min(result.ordinate[i])))
}

/// Global maximum over the finite samples, refined by a local parabola.
pub fn refined_maximum(result: &SweepResult) -> Result<(f64, f64)> {
    let i = result
        .ordinate
        .iter()
        .enumerate()
        .filter(|(_, y)| y.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Numeric("curve has no finite samples".into()))?;
    let (x, y) = quadratic_vertex(result, i as isize);
    Ok((x, y.max(result.ordinate[i])))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak {
    pub index: usize,
    pub position: f64,
    pub height: f64,
    /// Height above the higher of the two key valleys.
    pub prominence: f64,
}

/// Local maxima (plateaus count once) with their topographic prominence.
pub fn local_maxima(result: &SweepResult) -> Vec<Peak> {
    let n = result.len() as isize;
    let finite = |v: Option<f64>| v.filter(|y| y.is_finite());
    let mut peaks = Vec::new();
    for i in 0..n {
        let Some(yi) = finite(result.y(i)) else { continue };
        let Some(left) = finite(result.y(i - 1)) else { continue };
        if left >= yi {
            continue;
        }
        let mut j = i + 1;
        while j < i + n && finite(result.y(j)) == Some(yi) {
            j += 1;
        }
        let Some(right) = finite(result.y(j)) else { continue };
        if right >= yi || j == i + n {
            continue;
        }
        let prominence = yi - side_base(result, i, -1, yi).max(side_base(result, j - 1, 1, yi));
        let centre = (i + j - 1) / 2;
        peaks.push(Peak {
            index: centre.rem_euclid(n) as usize,
            position: result.x(centre),
            height: yi,
            prominence,
        });
    }
    peaks
}

/// Lowest value met when walking from `start` in direction `dir` until a
/// sample higher than `height`, the domain edge or a full period.
fn side_base(result: &SweepResult, start: isize, dir: isize, height: f64) -> f64 {
    let n = result.len() as isize;
    let mut lowest = height;
    let mut k = start + dir;
    for _ in 0..n {
        match result.y(k).filter(|y| y.is_finite()) {
            Some(y) if y > height => break,
            Some(y) => lowest = lowest.min(y),
            None => break,
        }
        k += dir;
    }
    lowest
}

/// Number of fringe maxima: peaks whose prominence reaches
/// `relative_prominence` of the curve's range. Periodic curves are counted
/// around the full circle.
pub fn fold_count_with(result: &SweepResult, relative_prominence: f64) -> usize {
    let Some((lo, hi)) = result.finite_range() else { return 0 };
    let range = hi - lo;
    if range <= 1e-12 * hi.abs().max(1.0) {
        return 0;
    }
    local_maxima(result)
        .iter()
        .filter(|p| p.prominence >= relative_prominence * range)
        .count()
}

pub fn fold_count(result: &SweepResult) -> usize {
    fold_count_with(result, FRINGE_CONTRAST)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeakSelector {
    GlobalMax,
    /// The local maximum closest to this abscissa.
    Nearest(f64),
}

/// Full width at half maximum of the selected peak, measured from the
/// higher of its two adjacent valley floors.
pub fn fwhm(result: &SweepResult, selector: PeakSelector) -> Result<f64> {
    let peak = match selector {
        PeakSelector::GlobalMax => {
            let i = result
                .ordinate
                .iter()
                .enumerate()
                .filter(|(_, y)| y.is_finite())
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .ok_or_else(|| Error::UndefinedFwhm("curve has no finite samples".into()))?;
            i as isize
        }
        PeakSelector::Nearest(x0) => {
            let distance = |x: f64| {
                let d = (x - x0).abs();
                if result.periodic {
                    let d = d.rem_euclid(TAU);
                    d.min(TAU - d)
                } else {
                    d
                }
            };
            local_maxima(result)
                .into_iter()
                .min_by(|a, b| distance(a.position).total_cmp(&distance(b.position)))
                .map(|p| p.index as isize)
                .ok_or_else(|| Error::UndefinedFwhm("curve has no local maximum".into()))?
        }
    };
    let top = result.ordinate[peak as usize];
    let n = result.len() as isize;

    let valley = |dir: isize| -> Result<(isize, f64)> {
        let mut k = peak;
        for _ in 0..n {
            match result.y(k + dir).filter(|y| y.is_finite()) {
                Some(y) if y <= result.y(k).unwrap() => k += dir,
                Some(_) => return Ok((k, result.y(k).unwrap())),
                None if k == peak => {
                    return Err(Error::UndefinedFwhm("peak sits on the domain edge".into()));
                }
                None => return Ok((k, result.y(k).unwrap())),
            }
        }
        Ok((k, result.y(k).unwrap()))
    };
    let (_, left_floor) = valley(-1)?;
    let (_, right_floor) = valley(1)?;
    let base = left_floor.max(right_floor);
    if !(top > base) {
        return Err(Error::UndefinedFwhm("peak does not rise above its valleys".into()));
    }
    let half = base + 0.5 * (top - base);

    let crossing = |dir: isize| -> Result<f64> {
        let mut k = peak;
        for _ in 0..n {
            let next = result
                .y(k + dir)
                .filter(|y| y.is_finite())
                .ok_or_else(|| Error::UndefinedFwhm("no half-maximum crossing inside the domain".into()))?;
            if next < half {
                let here = result.y(k).unwrap();
                let frac = (here - half) / (here - next);
                return Ok(result.x(k) + frac * (result.x(k + dir) - result.x(k)));
            }
            k += dir;
        }
        Err(Error::UndefinedFwhm("no half-maximum crossing within one period".into()))
    };
    Ok(crossing(1)? - crossing(-1)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossPoint {
    pub r2: f64,
    /// Observable at `phi = pi`.
    pub at_pi: f64,
    /// Minimum over phase (low-photon variant) or the coherent-state value
    /// at `phi = pi` (high-photon variant).
    pub reference: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSweep {
    pub points: Vec<LossPoint>,
    pub meta: SweepMeta,
}

impl LossSweep {
    pub fn as_sweep(&self) -> Result<SweepResult> {
        SweepResult::new(
            self.points.iter().map(|p| p.r2).collect(),
            self.points.iter().map(|p| p.difference).collect(),
            Vec::new(),
            self.meta.clone(),
        )
    }
}

fn state_at(shape: Shape, nbar: f64) -> Result<StateSpec> {
    StateSpec::from_shape(shape, solve_amplitude(shape.coefficients(), nbar)?)
}

fn check_r2_grid(r2_grid: &[f64]) -> Result<()> {
    if r2_grid.is_empty() {
        return Err(Error::InvalidConfig("loss grid is empty".into()));
    }
    if let Some(bad) = r2_grid.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::InvalidConfig(format!("loss fraction {bad} outside [0, 1]")));
    }
    Ok(())
}

/// Peak-to-valley difference `obs(pi) - min_phi obs` per loss value.
pub fn loss_robustness_low(
    shape: Shape,
    scheme: &DetectionScheme,
    nbar: f64,
    r2_grid: &[f64],
    phi_points: usize,
) -> Result<LossSweep> {
    check_r2_grid(r2_grid)?;
    let spec = state_at(shape, nbar)?;
    let grid = phi_grid(phi_points);
    let points = r2_grid
        .iter()
        .map(|&r2| {
            let curve = observable_curve(&spec, scheme, r2, &grid)?;
            let (_, minimum) = refined_minimum(&curve)?;
            let at_pi = expectation(&spec, &InterferometerConfig::from_loss(PI, r2)?, scheme)?;
            Ok(LossPoint { r2, at_pi, reference: minimum, difference: at_pi - minimum })
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = SweepMeta {
        quantity: "peak_minus_minimum".into(),
        state: shape.name(),
        scheme: scheme.to_string(),
        nbar,
        r2: None,
    };
    Ok(LossSweep { points, meta })
}

/// Peak height at `phi = pi` above the coherent state of equal mean photon
/// number, `obs_state(pi) - obs_cs(pi)`, per loss value. Negative where the
/// state's peak drops below the coherent-state level.
pub fn loss_robustness_high(
    shape: Shape,
    scheme: &DetectionScheme,
    nbar: f64,
    r2_grid: &[f64],
) -> Result<LossSweep> {
    check_r2_grid(r2_grid)?;
    let spec = state_at(shape, nbar)?;
    let reference = state_at(Shape::Coherent, nbar)?;
    let points = r2_grid
        .par_iter()
        .map(|&r2| {
            let cfg = InterferometerConfig::from_loss(PI, r2)?;
            let at_pi = expectation(&spec, &cfg, scheme)?;
            let cs = expectation(&reference, &cfg, scheme)?;
            Ok(LossPoint { r2, at_pi, reference: cs, difference: at_pi - cs })
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = SweepMeta {
        quantity: "peak_above_coherent".into(),
        state: shape.name(),
        scheme: scheme.to_string(),
        nbar,
        r2: None,
    };
    Ok(LossSweep { points, meta })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiInterval {
    pub start: f64,
    pub end: f64,
}

impl PhiInterval {
    pub fn width(&self) -> f64 {
        self.end - self.start
    }
}

/// Maximal phase intervals where a shot-noise-ratio curve stays at or below
/// `threshold`; diverged samples split intervals. Interval ends are
/// linearly interpolated to the threshold crossing.
pub fn working_intervals(curve: &SweepResult, threshold: f64) -> Result<Vec<PhiInterval>> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::InvalidConfig(format!("threshold must be positive and finite, got {threshold}")));
    }
    let n = curve.len();
    let inside = |i: usize| curve.ordinate[i].is_finite() && curve.ordinate[i] <= threshold;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        if inside(i) {
            let start = i;
            while i + 1 < n && inside(i + 1) {
                i += 1;
            }
            runs.push((start, i));
        }
        i += 1;
    }
    let wraps = curve.periodic && runs.len() > 1 && runs[0].0 == 0 && runs.last().unwrap().1 == n - 1;

    let edge = |inner: isize, outer: isize| -> f64 {
        let yi = curve.ordinate[inner.rem_euclid(n as isize) as usize];
        match curve.y(outer).filter(|y| y.is_finite()) {
            Some(yo) if yo > threshold => {
                let frac = (threshold - yi) / (yo - yi);
                curve.x(inner) + frac * (curve.x(outer) - curve.x(inner))
            }
            _ => curve.x(inner),
        }
    };

    let mut intervals: Vec<PhiInterval> = runs
        .iter()
        .map(|&(s, e)| PhiInterval { start: edge(s as isize, s as isize - 1), end: edge(e as isize, e as isize + 1) })
        .collect();
    if wraps {
        let first = intervals.remove(0);
        let last = intervals.last_mut().unwrap();
        last.end = first.end + TAU;
    }
    Ok(intervals)
}

pub fn working_points(
    spec: &StateSpec,
    scheme: &DetectionScheme,
    r2: f64,
    threshold: f64,
    phi_grid: &[f64],
) -> Result<Vec<PhiInterval>> {
    working_intervals(&sensitivity_curve(spec, scheme, r2, phi_grid)?, threshold)
}

/// Minimum over phase of the lossless observable for the compass state and
/// the even cat, under one reading of the multiple-of-four detector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterpretationOutcome {
    pub scheme: String,
    pub compass_minimum: f64,
    pub cat_minimum: f64,
    pub matches: bool,
}

/// Candidate readings: one fixed `n = 1`, the sum over `n >= 1`, and the
/// sum over `n >= 0`.
pub fn candidate_interpretations() -> [DetectionScheme; 3] {
    [
        DetectionScheme::Z4nSingle { n: 1 },
        DetectionScheme::Z4nAggregate { include_zero: false, cutoff: None },
        DetectionScheme::Z4nAggregate { include_zero: true, cutoff: None },
    ]
}

/// Evaluates every candidate reading against target minima for the compass
/// state and the even cat at `nbar`, lossless.
pub fn arbitrate(
    nbar: f64,
    compass_target: f64,
    cat_target: f64,
    tolerance: f64,
    phi_points: usize,
) -> Result<Vec<InterpretationOutcome>> {
    let grid = phi_grid(phi_points);
    let compass = state_at(Shape::Compass, nbar)?;
    let cat = state_at(Shape::EvenCat, nbar)?;
    candidate_interpretations()
        .iter()
        .map(|scheme| {
            let compass_minimum = refined_minimum(&observable_curve(&compass, scheme, 0.0, &grid)?)?.1;
            let cat_minimum = refined_minimum(&observable_curve(&cat, scheme, 0.0, &grid)?)?.1;
            let matches = (compass_minimum - compass_target).abs() <= tolerance
                && (cat_minimum - cat_target).abs() <= tolerance;
            Ok(InterpretationOutcome { scheme: scheme.to_string(), compass_minimum, cat_minimum, matches })
        })
        .collect()
}

/// First matching reading, if any.
pub fn selected_interpretation(outcomes: &[InterpretationOutcome]) -> Option<DetectionScheme> {
    outcomes.iter().find(|o| o.matches).and_then(|o| o.scheme.parse().ok())
}
