//! Photon statistics at output port `a` and the detection observables built
//! on them.
//!
//! Every probability is evaluated from the branch overlaps of the output
//! state: the port-`a` Fock amplitudes of each pair of branches times the
//! coherent overlap of the same pair in the traced-out modes `b`, `E_a` and
//! `E_b`. Phase derivatives follow from the chain rule through the port-`a`
//! mean `p(phi)` and the traced mean `q(phi)`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::interferometer::{branch_amplitudes, pq, pq_derivative, InterferometerConfig, Mode};
use crate::states::{branch_phase, mean_photon_number, normalization, StateSpec};

/// Imaginary residue tolerated on a probability before it is treated as a bug.
pub const IMAGINARY_RESIDUE_LIMIT: f64 = 1e-12;
/// Largest omitted probability mass accepted by the aggregate observable.
pub const AGGREGATE_TAIL_LIMIT: f64 = 1e-6;
/// Derivatives smaller than this make the sensitivity diverge.
pub const DIVERGENCE_THRESHOLD: f64 = 1e-300;

const LN_UNDERFLOW: f64 = -745.0;

/// Photon-number cutoff that keeps the Poisson tail of a mode with the
/// given mean photon number well below `1e-12`.
pub fn default_cutoff(mean: f64) -> usize {
    let m = mean.max(0.0);
    4 * ((m + 6.0 * m.sqrt() + 20.0) / 4.0).ceil() as usize
}

/// Which port-`a` outcomes count as a click.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionScheme {
    /// Zero photons.
    Z,
    /// Exactly `4n` photons.
    Z4nSingle { n: u32 },
    /// Any multiple of four up to the cutoff; the zero outcome is optional.
    /// `cutoff: None` picks [`default_cutoff`] from the state.
    Z4nAggregate { include_zero: bool, cutoff: Option<usize> },
}

impl DetectionScheme {
    /// Photon numbers whose projectors make up the observable.
    fn levels(&self, spec: &StateSpec) -> Result<Vec<usize>> {
        Ok(match *self {
            DetectionScheme::Z => vec![0],
            DetectionScheme::Z4nSingle { n } => vec![4 * n as usize],
            DetectionScheme::Z4nAggregate { include_zero, cutoff } => {
                let cutoff = aggregate_cutoff(spec, cutoff)?;
                let start = if include_zero { 0 } else { 4 };
                (start..=cutoff).step_by(4).collect()
            }
        })
    }
}

impl fmt::Display for DetectionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectionScheme::Z => write!(f, "z"),
            DetectionScheme::Z4nSingle { n } => write!(f, "z4n:{n}"),
            DetectionScheme::Z4nAggregate { include_zero, cutoff } => {
                write!(f, "z4n-agg")?;
                if *include_zero {
                    write!(f, ":include-zero")?;
                }
                if let Some(c) = cutoff {
                    write!(f, ":cutoff={c}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for DetectionScheme {
    type Err = Error;

    /// `z`, `z4n:<n>`, `z4n-agg`, `z4n-agg:include-zero`, optionally followed
    /// by `:cutoff=<k>` for the aggregate.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let bad = || Error::InvalidConfig(format!("unknown detection scheme '{s}'"));
        if s == "z" {
            return Ok(DetectionScheme::Z);
        }
        if let Some(rest) = s.strip_prefix("z4n-agg") {
            let mut include_zero = false;
            let mut cutoff = None;
            for part in rest.split(':').filter(|p| !p.is_empty()) {
                if part == "include-zero" {
                    include_zero = true;
                } else if let Some(v) = part.strip_prefix("cutoff=") {
                    cutoff = Some(v.parse::<usize>().map_err(|_| bad())?);
                } else {
                    return Err(bad());
                }
            }
            return Ok(DetectionScheme::Z4nAggregate { include_zero, cutoff });
        }
        if let Some(n) = s.strip_prefix("z4n:") {
            let n = n.parse::<u32>().map_err(|_| bad())?;
            return Ok(DetectionScheme::Z4nSingle { n });
        }
        Err(bad())
    }
}

fn aggregate_cutoff(spec: &StateSpec, cutoff: Option<usize>) -> Result<usize> {
    match cutoff {
        Some(c) if c < 8 => Err(Error::InvalidConfig(format!("aggregate cutoff must be at least 8, got {c}"))),
        Some(c) => Ok(c),
        None => Ok(default_cutoff(mean_photon_number(spec).max(spec.alpha_sq()))),
    }
}

/// Port-`a` photon-number probabilities up to `cutoff`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonDistribution {
    pub probs: Vec<f64>,
    pub cutoff: usize,
    /// Upper bound on the probability of more than `cutoff` photons.
    pub tail_bound: f64,
}

impl PhotonDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Checks the entry range and the bracketing of the total by the tail bound.
    pub fn check(&self) -> Result<()> {
        if let Some((l, p)) = self.probs.iter().enumerate().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Numeric(format!("P({l}) = {p} outside [0, 1]")));
        }
        let total = self.total();
        if total > 1.0 + 1e-9 || total + self.tail_bound < 1.0 - 1e-9 {
            return Err(Error::Numeric(format!(
                "distribution total {total} with tail bound {:e} does not bracket 1",
                self.tail_bound
            )));
        }
        Ok(())
    }
}

/// A probability together with whether its magnitude fell below `f64` range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probability {
    pub value: f64,
    pub underflow: bool,
}

/// A branch pair `(j, k)` with the pieces of its contribution that do not
/// depend on the photon number.
#[derive(Debug, Clone, Copy)]
struct PairTerm {
    weight: f64,
    omega: Complex64,
    /// `-(|a_j|^2 + |a_k|^2)/2 + ln G_jk`, the photon-number independent exponent.
    base_exponent: Complex64,
    /// `ln(a_j a_k^*)`, or `None` when the port-`a` amplitudes vanish.
    log_cross: Option<Complex64>,
}

/// Output statistics of one state at one interferometer setting.
#[derive(Debug, Clone)]
pub struct OutputModel {
    norm_sq: f64,
    p: f64,
    dp: f64,
    dq: f64,
    envelope: f64,
    pairs: Vec<PairTerm>,
}

impl OutputModel {
    pub fn new(spec: &StateSpec, config: &InterferometerConfig) -> Self {
        let n = normalization(spec).n_mag;
        let set = branch_amplitudes(spec, config);
        let (p, _) = pq(config, spec.alpha());
        let (dp, dq) = pq_derivative(config, spec.alpha());
        let coeff_abs: f64 = spec.coefficients().iter().map(|c| c.abs()).sum();

        let mut pairs = Vec::with_capacity(16);
        for (j, bj) in set.branches.iter().enumerate() {
            for (k, bk) in set.branches.iter().enumerate() {
                let weight = bj.coefficient * bk.coefficient;
                if weight == 0.0 {
                    continue;
                }
                let aj = bj.mode(Mode::A);
                let ak = bk.mode(Mode::A);
                let mut exponent = Complex64::new(-(aj.norm_sqr() + ak.norm_sqr()) / 2.0, 0.0);
                for m in [Mode::B, Mode::LossA, Mode::LossB] {
                    let (x, y) = (bj.mode(m), bk.mode(m));
                    exponent += y.conj() * x - (x.norm_sqr() + y.norm_sqr()) / 2.0;
                }
                let cross = aj * ak.conj();
                pairs.push(PairTerm {
                    weight,
                    omega: branch_phase(j, k),
                    base_exponent: exponent,
                    log_cross: (cross != Complex64::new(0.0, 0.0)).then(|| cross.ln()),
                });
            }
        }

        Self {
            norm_sq: n * n,
            p,
            dp,
            dq,
            envelope: n * n * coeff_abs * coeff_abs,
            pairs,
        }
    }

    /// Mean photon number per branch at port `a`.
    pub fn port_a_mean(&self) -> f64 {
        self.p
    }

    /// Contribution `C_j C_k A_j(l) A_k(l)^* G_jk` of one pair; the flag
    /// reports an exponent below the `f64` range.
    fn pair_term(&self, pair: &PairTerm, l: usize) -> (Complex64, bool) {
        let exponent = match (l, pair.log_cross) {
            (0, _) => pair.base_exponent,
            (_, None) => return (Complex64::new(0.0, 0.0), false),
            (l, Some(lc)) => pair.base_exponent + lc * l as f64 - ln_factorial(l as u64),
        };
        if exponent.re + pair.weight.abs().ln() < LN_UNDERFLOW {
            return (Complex64::new(0.0, 0.0), true);
        }
        (exponent.exp() * pair.weight, false)
    }

    fn real_part(&self, sum: Complex64, what: &str) -> Result<f64> {
        let scaled = sum * self.norm_sq;
        if scaled.im.abs() > IMAGINARY_RESIDUE_LIMIT {
            return Err(Error::Numeric(format!(
                "{what} has imaginary residue {:e}",
                scaled.im
            )));
        }
        Ok(scaled.re)
    }

    pub fn probability(&self, l: usize) -> Result<Probability> {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut underflow = false;
        for pair in &self.pairs {
            let (term, u) = self.pair_term(pair, l);
            sum += term;
            underflow |= u;
        }
        let value = self.real_part(sum, &format!("P({l})"))?;
        if !(-1e-10..=1.0 + 1e-10).contains(&value) {
            return Err(Error::Numeric(format!("P({l}) = {value} outside [0, 1]")));
        }
        Ok(Probability { value: value.clamp(0.0, 1.0), underflow: underflow && value == 0.0 })
    }

    /// `dP(l)/dphi` from the chain rule through `p` and `q`.
    pub fn probability_derivative(&self, l: usize) -> Result<f64> {
        let mut sum = Complex64::new(0.0, 0.0);
        for pair in &self.pairs {
            let (here, _) = self.pair_term(pair, l);
            let below = if l == 0 { Complex64::new(0.0, 0.0) } else { self.pair_term(pair, l - 1).0 };
            sum += (pair.omega * below - here) * self.dp + here * (pair.omega - 1.0) * self.dq;
        }
        self.real_part(sum, &format!("dP({l})/dphi"))
    }

    /// Upper bound on the port-`a` probability of more than `cutoff` photons.
    pub fn tail_bound(&self, cutoff: usize) -> f64 {
        (self.envelope * poisson_upper_tail(self.p, cutoff)).min(1.0)
    }

    pub fn distribution(&self, cutoff: usize) -> Result<PhotonDistribution> {
        let probs = (0..=cutoff)
            .map(|l| self.probability(l).map(|p| p.value))
            .collect::<Result<Vec<_>>>()?;
        Ok(PhotonDistribution { probs, cutoff, tail_bound: self.tail_bound(cutoff) })
    }
}

/// `P(N > cutoff)` for `N ~ Poisson(mean)`.
pub fn poisson_upper_tail(mean: f64, cutoff: usize) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    let ln_pmf = |l: usize| l as f64 * mean.ln() - mean - ln_factorial(l as u64);
    if (cutoff as f64) < mean {
        let below: f64 = (0..=cutoff).map(|l| ln_pmf(l).exp()).sum();
        return (1.0 - below).max(0.0);
    }
    let mut total = 0.0;
    let mut l = cutoff + 1;
    loop {
        let term = ln_pmf(l).exp();
        total += term;
        if term <= total * 1e-17 || term < 1e-300 {
            break;
        }
        l += 1;
    }
    total
}

pub fn photon_probability(spec: &StateSpec, config: &InterferometerConfig, l: usize) -> Result<Probability> {
    OutputModel::new(spec, config).probability(l)
}

pub fn photon_distribution(
    spec: &StateSpec,
    config: &InterferometerConfig,
    cutoff: usize,
) -> Result<PhotonDistribution> {
    if cutoff < 1 {
        return Err(Error::InvalidConfig("distribution cutoff must be at least 1".into()));
    }
    OutputModel::new(spec, config).distribution(cutoff)
}

/// Zero-photon probability at port `a`.
pub fn expect_z(spec: &StateSpec, config: &InterferometerConfig) -> Result<f64> {
    expect_z4n(spec, config, 0)
}

/// Probability of exactly `4n` photons at port `a`.
pub fn expect_z4n(spec: &StateSpec, config: &InterferometerConfig, n: u32) -> Result<f64> {
    photon_probability(spec, config, 4 * n as usize).map(|p| p.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateExpectation {
    pub value: f64,
    pub tail_bound: f64,
}

pub fn expect_z4n_aggregate(
    spec: &StateSpec,
    config: &InterferometerConfig,
    include_zero: bool,
    cutoff: usize,
) -> Result<AggregateExpectation> {
    let scheme = DetectionScheme::Z4nAggregate { include_zero, cutoff: Some(cutoff) };
    let model = OutputModel::new(spec, config);
    let value = sum_levels(&model, &scheme.levels(spec)?, |m, l| m.probability(l).map(|p| p.value))?;
    let tail_bound = model.tail_bound(cutoff);
    if tail_bound > AGGREGATE_TAIL_LIMIT {
        return Err(Error::InsufficientCutoff { bound: tail_bound, limit: AGGREGATE_TAIL_LIMIT });
    }
    Ok(AggregateExpectation { value, tail_bound })
}

fn sum_levels(
    model: &OutputModel,
    levels: &[usize],
    f: impl Fn(&OutputModel, usize) -> Result<f64>,
) -> Result<f64> {
    levels.iter().try_fold(0.0, |acc, &l| Ok(acc + f(model, l)?))
}

/// Click probability, its complement and its phase derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickStatistics {
    pub value: f64,
    /// `1 - value`, summed over the non-click outcomes when the click
    /// probability is close to one.
    pub complement: f64,
    pub derivative: f64,
}

fn check_aggregate_tail(model: &OutputModel, scheme: &DetectionScheme, levels: &[usize]) -> Result<()> {
    if let DetectionScheme::Z4nAggregate { .. } = scheme {
        let bound = model.tail_bound(*levels.last().unwrap_or(&0));
        if bound > AGGREGATE_TAIL_LIMIT {
            return Err(Error::InsufficientCutoff { bound, limit: AGGREGATE_TAIL_LIMIT });
        }
    }
    Ok(())
}

pub fn click_statistics(
    spec: &StateSpec,
    config: &InterferometerConfig,
    scheme: &DetectionScheme,
) -> Result<ClickStatistics> {
    let model = OutputModel::new(spec, config);
    let levels = scheme.levels(spec)?;
    check_aggregate_tail(&model, scheme, &levels)?;
    let value = sum_levels(&model, &levels, |m, l| m.probability(l).map(|p| p.value))?;
    let derivative = sum_levels(&model, &levels, |m, l| m.probability_derivative(l))?;
    let mut stats = ClickStatistics { value: value.clamp(0.0, 1.0), complement: (1.0 - value).clamp(0.0, 1.0), derivative };
    if value <= 0.5 {
        return Ok(stats);
    }
    // 1 - value cancels catastrophically here; sum the other outcomes instead
    let cutoff = default_cutoff(mean_photon_number(spec).max(spec.alpha_sq())).max(*levels.last().unwrap_or(&0));
    let others: Vec<usize> = (0..=cutoff).filter(|l| !levels.contains(l)).collect();
    let complement = sum_levels(&model, &others, |m, l| m.probability(l).map(|p| p.value))?;
    if model.tail_bound(cutoff) <= 1e-6 * complement.max(f64::MIN_POSITIVE) || complement > 1e-3 {
        stats.complement = complement.clamp(0.0, 1.0);
        stats.derivative = -sum_levels(&model, &others, |m, l| m.probability_derivative(l))?;
    }
    Ok(stats)
}

/// Value and phase derivative of the observable of `scheme`.
pub fn observable_with_derivative(
    spec: &StateSpec,
    config: &InterferometerConfig,
    scheme: &DetectionScheme,
) -> Result<(f64, f64)> {
    click_statistics(spec, config, scheme).map(|s| (s.value, s.derivative))
}

/// Expectation of the click projector of `scheme`.
pub fn expectation(spec: &StateSpec, config: &InterferometerConfig, scheme: &DetectionScheme) -> Result<f64> {
    let model = OutputModel::new(spec, config);
    let levels = scheme.levels(spec)?;
    check_aggregate_tail(&model, scheme, &levels)?;
    Ok(sum_levels(&model, &levels, |m, l| m.probability(l).map(|p| p.value))?.clamp(0.0, 1.0))
}

/// Exact `d<observable>/dphi`.
pub fn z4n_derivative(spec: &StateSpec, config: &InterferometerConfig, scheme: &DetectionScheme) -> Result<f64> {
    observable_with_derivative(spec, config, scheme).map(|(_, d)| d)
}

/// Error-propagation phase uncertainty `sqrt(P(1-P)) / |dP/dphi|`, using
/// that the click observable is a projector. Returns `f64::INFINITY` where
/// the derivative vanishes.
pub fn phase_sensitivity(spec: &StateSpec, config: &InterferometerConfig, scheme: &DetectionScheme) -> Result<f64> {
    Ok(sensitivity_from(&click_statistics(spec, config, scheme)?))
}

pub(crate) fn sensitivity_from(stats: &ClickStatistics) -> f64 {
    if stats.derivative.abs() < DIVERGENCE_THRESHOLD {
        return f64::INFINITY;
    }
    (stats.value * stats.complement).max(0.0).sqrt() / stats.derivative.abs()
}

/// Phase uncertainty in units of the shot-noise limit `1/sqrt(nbar)`.
pub fn snl_ratio(spec: &StateSpec, config: &InterferometerConfig, scheme: &DetectionScheme) -> Result<f64> {
    let nbar = mean_photon_number(spec);
    if !(nbar > 0.0) {
        return Err(Error::InvalidConfig("shot-noise ratio needs a positive mean photon number".into()));
    }
    Ok(phase_sensitivity(spec, config, scheme)? * nbar.sqrt())
}
