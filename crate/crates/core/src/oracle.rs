//! Brute-force reference: the four-mode interferometer propagated in a
//! truncated Fock basis, one two-mode unitary at a time, with the port-`a`
//! marginal taken from the final pure state.
//!
//! Nothing here uses coherent-state overlaps. Beam splitters follow the
//! convention `a^dag -> t a^dag + i r b^dag`, `b^dag -> i r a^dag + t b^dag`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::detection::{default_cutoff, PhotonDistribution};
use crate::error::{Error, Result};
use crate::interferometer::{InterferometerConfig, Mode};
use crate::states::{mean_photon_number, StateSpec};

/// Largest mean photon number the oracle accepts.
pub const ORACLE_NBAR_LIMIT: f64 = 8.0;
/// Largest truncation loss the oracle accepts.
pub const TRUNCATION_LIMIT: f64 = 1e-9;
/// Amplitudes below this magnitude are not stored.
pub const SPARSITY_THRESHOLD: f64 = 1e-16;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Single-mode state in the number basis, `amplitudes[l] = <l|psi>`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    amplitudes: Vec<Complex64>,
}

impl FockVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        Self { amplitudes }
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn cutoff(&self) -> usize {
        self.amplitudes.len().saturating_sub(1)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.amplitudes.iter().enumerate().map(|(l, a)| l as f64 * a.norm_sqr()).sum::<f64>() / self.norm_sqr()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm_sqr().sqrt();
        for a in &mut self.amplitudes {
            *a /= n;
        }
        self
    }

    fn add_scaled(&mut self, other: &FockVector, scale: f64) {
        for (a, b) in self.amplitudes.iter_mut().zip(&other.amplitudes) {
            *a += b * scale;
        }
    }
}

/// `|alpha>` truncated at `cutoff` photons.
pub fn coherent_fock(alpha: Complex64, cutoff: usize) -> FockVector {
    let mut amplitudes = Vec::with_capacity(cutoff + 1);
    let mut a = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    amplitudes.push(a);
    for l in 1..=cutoff {
        a = a * alpha / (l as f64).sqrt();
        amplitudes.push(a);
    }
    FockVector { amplitudes }
}

/// Sparse pure state over the modes `(a, b, E_a, E_b)`.
#[derive(Debug, Clone)]
pub struct MultiModeState {
    cutoffs: [usize; 4],
    /// Sorted by occupation tuple.
    entries: Vec<([u16; 4], Complex64)>,
    truncation: f64,
}

impl MultiModeState {
    /// Product of `state` in mode `a` with vacuum elsewhere.
    pub fn with_vacuum(state: &FockVector, cutoffs: [usize; 4]) -> Self {
        let mut truncation = 0.0;
        let mut entries = Vec::new();
        for (l, amp) in state.amplitudes.iter().enumerate() {
            if l > cutoffs[0] || amp.norm() < SPARSITY_THRESHOLD {
                truncation += amp.norm_sqr();
                continue;
            }
            entries.push(([l as u16, 0, 0, 0], *amp));
        }
        Self { cutoffs, entries, truncation }
    }

    pub fn cutoffs(&self) -> [usize; 4] {
        self.cutoffs
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Probability mass discarded so far by cutoffs and the sparsity threshold.
    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|(_, a)| a.norm_sqr()).sum()
    }

    pub fn amplitude(&self, occupation: [u16; 4]) -> Complex64 {
        self.entries
            .binary_search_by(|(k, _)| k.cmp(&occupation))
            .map(|i| self.entries[i].1)
            .unwrap_or(ZERO)
    }

    pub fn iter(&self) -> impl Iterator<Item = &([u16; 4], Complex64)> {
        self.entries.iter()
    }

    pub fn mean_photon_number(&self, mode: Mode) -> f64 {
        self.entries.iter().map(|(k, a)| k[mode.index()] as f64 * a.norm_sqr()).sum()
    }

    /// Number distribution of one mode, tracing out the others.
    pub fn marginal(&self, mode: Mode) -> Vec<f64> {
        let mut probs = vec![0.0; self.cutoffs[mode.index()] + 1];
        for (k, a) in &self.entries {
            probs[k[mode.index()] as usize] += a.norm_sqr();
        }
        probs
    }

    /// Multiplies every amplitude by `exp(i n phi)`, `n` the occupation of `mode`.
    pub fn phase_apply(&self, mode: Mode, phi: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(k, a)| (*k, a * Complex64::from_polar(1.0, k[mode.index()] as f64 * phi)))
            .collect();
        Self { cutoffs: self.cutoffs, entries, truncation: self.truncation }
    }

    /// Applies the two-mode beam splitter with reflection `r_bs` and
    /// transmission `t_bs` to `(first, second)`.
    pub fn beamsplitter_apply(&self, pair: (Mode, Mode), r_bs: f64, t_bs: f64) -> Result<Self> {
        let (m1, m2) = (pair.0.index(), pair.1.index());
        if m1 == m2 {
            return Err(Error::InvalidConfig("beam splitter needs two distinct modes".into()));
        }
        if ((r_bs * r_bs + t_bs * t_bs) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "beam splitter amplitudes must satisfy r^2 + t^2 = 1, got r={r_bs}, t={t_bs}"
            )));
        }
        let (c1, c2) = (self.cutoffs[m1], self.cutoffs[m2]);
        let spectators: Vec<usize> = (0..4).filter(|m| *m != m1 && *m != m2).collect();
        let (s1, s2) = (spectators[0], spectators[1]);

        let max_total = self.entries.iter().map(|(k, _)| (k[m1] + k[m2]) as usize).max().unwrap_or(0);
        let blocks = BlockUnitary::new(r_bs, t_bs, max_total);

        let mut grouped: Vec<((u16, u16), u16, u16, Complex64)> =
            self.entries.iter().map(|(k, a)| ((k[s1], k[s2]), k[m1], k[m2], *a)).collect();
        grouped.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

        let width = c2 + 1;
        let mut buffer = vec![ZERO; (c1 + 1) * width];
        let mut entries = Vec::with_capacity(grouped.len() * 2);
        let mut truncation = self.truncation;

        let mut start = 0;
        while start < grouped.len() {
            let key = grouped[start].0;
            let mut end = start;
            let mut group_max = 0usize;
            while end < grouped.len() && grouped[end].0 == key {
                let (_, n1, n2, a) = grouped[end];
                buffer[n1 as usize * width + n2 as usize] = a;
                group_max = group_max.max((n1 + n2) as usize);
                end += 1;
            }

            let mut input = Vec::with_capacity(group_max + 1);
            for total in 0..=group_max {
                input.clear();
                let mut any = false;
                for n1 in 0..=total {
                    let n2 = total - n1;
                    let a = if n1 <= c1 && n2 <= c2 { buffer[n1 * width + n2] } else { ZERO };
                    any |= a != ZERO;
                    input.push(a);
                }
                if !any {
                    continue;
                }
                for (p, amp) in blocks.apply(total, &input).into_iter().enumerate() {
                    let q = total - p;
                    if p > c1 || q > c2 || amp.norm() < SPARSITY_THRESHOLD {
                        truncation += amp.norm_sqr();
                        continue;
                    }
                    let mut k = [0u16; 4];
                    k[m1] = p as u16;
                    k[m2] = q as u16;
                    k[s1] = key.0;
                    k[s2] = key.1;
                    entries.push((k, amp));
                }
            }
            for &(_, n1, n2, _) in &grouped[start..end] {
                buffer[n1 as usize * width + n2 as usize] = ZERO;
            }
            start = end;
        }
        entries.sort_by(|x, y| x.0.cmp(&y.0));
        Ok(Self { cutoffs: self.cutoffs, entries, truncation })
    }
}

/// Beam-splitter unitary restricted to each fixed-total-photon block.
/// `columns[total][n]` is the image of `|n, total - n>` indexed by the
/// first-mode occupation.
struct BlockUnitary {
    columns: Vec<Vec<Vec<Complex64>>>,
}

impl BlockUnitary {
    fn new(r: f64, t: f64, max_total: usize) -> Self {
        let tr = Complex64::new(t, 0.0);
        let ir = Complex64::new(0.0, r);
        let mut columns: Vec<Vec<Vec<Complex64>>> = vec![vec![vec![Complex64::new(1.0, 0.0)]]];
        for total in 1..=max_total {
            let prev = &columns[total - 1];
            let mut block = Vec::with_capacity(total + 1);
            for n in 0..=total {
                // U|n,m> = (x a^dag + y b^dag) U|n',m'> / sqrt(k)
                let (source, x, y, k) = if n > 0 {
                    (&prev[n - 1], tr, ir, n)
                } else {
                    (&prev[0], ir, tr, total)
                };
                let mut col = vec![ZERO; total + 1];
                for (p, amp) in source.iter().enumerate() {
                    if *amp == ZERO {
                        continue;
                    }
                    let q = total - 1 - p;
                    col[p + 1] += amp * x * ((p + 1) as f64).sqrt();
                    col[p] += amp * y * ((q + 1) as f64).sqrt();
                }
                let scale = 1.0 / (k as f64).sqrt();
                for c in &mut col {
                    *c *= scale;
                }
                block.push(col);
            }
            columns.push(block);
        }
        Self { columns }
    }

    fn apply(&self, total: usize, input: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; total + 1];
        for (n, a) in input.iter().enumerate() {
            if *a == ZERO {
                continue;
            }
            for (o, u) in out.iter_mut().zip(&self.columns[total][n]) {
                *o += u * a;
            }
        }
        out
    }
}

/// Unnormalized `sum_j C_j |i^j alpha>` truncated at `cutoff`, and the
/// norm deficit of a single truncated branch.
pub fn superposition_fock(spec: &StateSpec, cutoff: usize) -> (FockVector, f64) {
    let mut out = FockVector::new(vec![ZERO; cutoff + 1]);
    for (j, c) in spec.coefficients().iter().enumerate() {
        if *c != 0.0 {
            out.add_scaled(&coherent_fock(spec.branch_input(j), cutoff), *c);
        }
    }
    let branch_deficit = (1.0 - coherent_fock(spec.alpha(), cutoff).norm_sqr()).max(0.0);
    (out, branch_deficit)
}

/// Runs `|Psi,0,0,0>` through splitter, phase, arm losses and recombiner.
pub fn propagate(spec: &StateSpec, config: &InterferometerConfig) -> Result<MultiModeState> {
    let a2 = spec.alpha_sq();
    let input_cutoff = default_cutoff(a2);
    let loss_cutoff = default_cutoff(a2 * config.r() * config.r() / 2.0).min(input_cutoff);
    let cutoffs = [input_cutoff, input_cutoff, loss_cutoff, loss_cutoff];

    let (input, branch_deficit) = superposition_fock(spec, input_cutoff);
    let mut state = MultiModeState::with_vacuum(&input.normalized(), cutoffs);
    state.truncation += branch_deficit;

    state = state.beamsplitter_apply((Mode::A, Mode::B), FRAC_1_SQRT_2, FRAC_1_SQRT_2)?;
    state = state.phase_apply(Mode::A, config.phi());
    state = state.beamsplitter_apply((Mode::A, Mode::LossA), config.r(), config.t())?;
    state = state.beamsplitter_apply((Mode::B, Mode::LossB), config.r(), config.t())?;
    state.beamsplitter_apply((Mode::A, Mode::B), FRAC_1_SQRT_2, FRAC_1_SQRT_2)
}

/// Port-`a` photon distribution from brute-force propagation.
pub fn oracle_distribution(
    spec: &StateSpec,
    config: &InterferometerConfig,
    cutoff: usize,
) -> Result<PhotonDistribution> {
    let nbar = mean_photon_number(spec);
    if nbar > ORACLE_NBAR_LIMIT {
        return Err(Error::OracleOutOfRange { nbar, limit: ORACLE_NBAR_LIMIT });
    }
    let state = propagate(spec, config)?;
    if state.truncation() > TRUNCATION_LIMIT {
        return Err(Error::InsufficientCutoff { bound: state.truncation(), limit: TRUNCATION_LIMIT });
    }
    let marginal = state.marginal(Mode::A);
    let mut probs = vec![0.0; cutoff + 1];
    let mut beyond = 0.0;
    for (l, p) in marginal.into_iter().enumerate() {
        match probs.get_mut(l) {
            Some(slot) => *slot = p,
            None => beyond += p,
        }
    }
    Ok(PhotonDistribution { probs, cutoff, tail_bound: state.truncation() + beyond })
}
