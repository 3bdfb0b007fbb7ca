//! Lossy Mach-Zehnder network: 50:50 splitter, phase shift in arm `a`, one
//! fictitious loss splitter per arm, 50:50 recombiner.
//!
//! Every input branch `mu_j |mu_j>` leaves as a product of four coherent
//! states over the output modes `(a, b, E_a, E_b)`:
//!
//! ```text
//! a:   mu_j * i t e^{i phi/2} sin(phi/2)
//! b:   mu_j * i t e^{i phi/2} cos(phi/2)
//! E_a: mu_j * (i r / sqrt 2) e^{i phi}
//! E_b: mu_j * i (i r / sqrt 2)
//! ```

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::states::StateSpec;

/// Output modes, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    A = 0,
    B = 1,
    LossA = 2,
    LossB = 3,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::A, Mode::B, Mode::LossA, Mode::LossB];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Phase and arm loss. Both arms share the same loss splitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferometerConfig {
    phi: f64,
    r: f64,
    t: f64,
}

impl InterferometerConfig {
    /// `r` is the loss-splitter reflection amplitude; `t = sqrt(1 - r^2)`.
    pub fn new(phi: f64, r: f64) -> Result<Self> {
        if !phi.is_finite() {
            return Err(Error::InvalidConfig(format!("phase must be finite, got {phi}")));
        }
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::InvalidConfig(format!("reflection amplitude must lie in [0, 1], got {r}")));
        }
        Ok(Self { phi, r, t: (1.0 - r * r).sqrt() })
    }

    /// Same as [`new`](Self::new) but from the loss fraction `|r|^2`.
    pub fn from_loss(phi: f64, r2: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r2) {
            return Err(Error::InvalidConfig(format!("loss fraction |r|^2 must lie in [0, 1], got {r2}")));
        }
        let mut cfg = Self::new(phi, r2.sqrt())?;
        cfg.t = (1.0 - r2).sqrt();
        Ok(cfg)
    }

    pub fn lossless(phi: f64) -> Result<Self> {
        Self::new(phi, 0.0)
    }

    pub fn with_phi(&self, phi: f64) -> Self {
        Self { phi, ..*self }
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Phase reduced to `[0, 2 pi)`, for reporting only.
    pub fn canonical_phi(&self) -> f64 {
        let p = self.phi.rem_euclid(TAU);
        if p >= TAU {
            0.0
        } else {
            p
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn loss_fraction(&self) -> f64 {
        self.r * self.r
    }
}

/// One output branch: its coefficient, input amplitude and the four output
/// mode amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub coefficient: f64,
    pub input: Complex64,
    pub modes: [Complex64; 4],
}

impl Branch {
    pub fn mode(&self, m: Mode) -> Complex64 {
        self.modes[m.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchSet {
    pub branches: [Branch; 4],
    /// Transfer factor from the input to output port `a`.
    pub transfer_a: Complex64,
    /// Transfer factor from the input to output port `b`.
    pub transfer_b: Complex64,
    /// `i r / sqrt 2`, the amplitude factor into each loss mode.
    pub loss_factor: Complex64,
}

pub fn branch_amplitudes(spec: &StateSpec, config: &InterferometerConfig) -> BranchSet {
    let i = Complex64::new(0.0, 1.0);
    let half = Complex64::from_polar(1.0, config.phi / 2.0);
    let (s, c) = (config.phi / 2.0).sin_cos();
    let transfer_a = i * config.t * half * s;
    let transfer_b = i * config.t * half * c;
    let loss_factor = i * (config.r / std::f64::consts::SQRT_2);
    let into_loss_a = loss_factor * Complex64::from_polar(1.0, config.phi);
    let into_loss_b = i * loss_factor;

    let coeffs = spec.coefficients();
    let branches = std::array::from_fn(|j| {
        let mu = spec.branch_input(j);
        Branch {
            coefficient: coeffs[j],
            input: mu,
            modes: [mu * transfer_a, mu * transfer_b, mu * into_loss_a, mu * into_loss_b],
        }
    });
    BranchSet { branches, transfer_a, transfer_b, loss_factor }
}

/// Mean photon number reaching port `a` (`p`) and the rest (`q`) for a
/// single coherent branch of amplitude `alpha`.
pub fn pq(config: &InterferometerConfig, alpha: Complex64) -> (f64, f64) {
    let a2 = alpha.norm_sqr();
    let t2 = config.t * config.t;
    let (s, c) = (config.phi / 2.0).sin_cos();
    let p = a2 * t2 * s * s;
    let q = a2 * (t2 * c * c + config.r * config.r);
    (p, q)
}

/// `(dp/dphi, dq/dphi)`; `q' = -p'` because `p + q = |alpha|^2`.
pub fn pq_derivative(config: &InterferometerConfig, alpha: Complex64) -> (f64, f64) {
    let dp = 0.5 * alpha.norm_sqr() * config.t * config.t * config.phi.sin();
    (dp, -dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn spec(a: f64) -> StateSpec {
        StateSpec::compass(Complex64::new(a, 0.0))
    }

    #[test]
    fn balanced_zero_phase_sends_everything_to_b() {
        let set = branch_amplitudes(&spec(1.5), &InterferometerConfig::lossless(0.0).unwrap());
        assert_eq!(set.transfer_a.norm(), 0.0);
        assert!((set.transfer_b.norm() - 1.0).abs() < 1e-15);
        for b in set.branches {
            assert_eq!(b.mode(Mode::A).norm(), 0.0);
        }
    }

    #[test]
    fn half_wave_phase_sends_everything_to_a() {
        let set = branch_amplitudes(&spec(1.5), &InterferometerConfig::lossless(PI).unwrap());
        assert!((set.transfer_a.norm() - 1.0).abs() < 1e-15);
        assert!(set.transfer_b.norm() < 1e-15);
    }

    #[test]
    fn full_loss_splits_evenly_into_loss_modes() {
        let s = spec(2.0);
        let set = branch_amplitudes(&s, &InterferometerConfig::new(0.7, 1.0).unwrap());
        assert_eq!(set.transfer_a.norm(), 0.0);
        assert_eq!(set.transfer_b.norm(), 0.0);
        for b in set.branches {
            assert!((b.mode(Mode::LossA).norm_sqr() - 2.0).abs() < 1e-14);
            assert!((b.mode(Mode::LossB).norm_sqr() - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn pq_simple_points() {
        let a = Complex64::new(3f64.sqrt(), 0.0);
        let (p, q) = pq(&InterferometerConfig::new(0.0, 0.4).unwrap(), a);
        assert_eq!(p, 0.0);
        assert!((q - 3.0).abs() < 1e-15);
        let (p, q) = pq(&InterferometerConfig::lossless(PI).unwrap(), a);
        assert!((p - 3.0).abs() < 1e-14 && q.abs() < 1e-14);
        let (p, q) = pq(&InterferometerConfig::from_loss(PI / 2.0, 0.5).unwrap(), a);
        assert!((p - 0.75).abs() < 1e-14 && (q - 2.25).abs() < 1e-14);
    }

    #[test]
    fn config_validation() {
        assert!(InterferometerConfig::new(0.0, 1.2).is_err());
        assert!(InterferometerConfig::new(f64::NAN, 0.2).is_err());
        assert!(InterferometerConfig::from_loss(0.0, -0.1).is_err());
        let c = InterferometerConfig::from_loss(7.0, 0.3).unwrap();
        assert!((c.r().powi(2) + c.t().powi(2) - 1.0).abs() < 1e-12);
        assert!((c.canonical_phi() - (7.0 - TAU)).abs() < 1e-15);
        assert_eq!(c.phi(), 7.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let a = Complex64::new(1.3, 0.4);
        let cfg = InterferometerConfig::from_loss(1.1, 0.2).unwrap();
        let h = 1e-6;
        let (p1, q1) = pq(&cfg.with_phi(1.1 + h), a);
        let (p0, q0) = pq(&cfg.with_phi(1.1 - h), a);
        let (dp, dq) = pq_derivative(&cfg, a);
        assert!(((p1 - p0) / (2.0 * h) - dp).abs() < 1e-8);
        assert!(((q1 - q0) / (2.0 * h) - dq).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn energy_and_branch_bookkeeping(
            mag in 0.0f64..8.0, arg in 0.0f64..TAU, phi in -TAU..2.0 * TAU, r2 in 0.0f64..=1.0,
        ) {
            let alpha = Complex64::from_polar(mag, arg);
            let s = StateSpec::compass(alpha);
            let cfg = InterferometerConfig::from_loss(phi, r2).unwrap();
            let (p, q) = pq(&cfg, alpha);
            let a2 = alpha.norm_sqr();
            prop_assert!((p + q - a2).abs() <= 1e-12 * a2.max(1.0));

            let set = branch_amplitudes(&s, &cfg);
            for b in set.branches {
                let energy: f64 = b.modes.iter().map(|m| m.norm_sqr()).sum();
                prop_assert!((energy - b.input.norm_sqr()).abs() <= 1e-12 * a2.max(1.0));
                prop_assert!((b.mode(Mode::A).norm_sqr() - p).abs() <= 1e-12 * a2.max(1.0));
                let rest = b.mode(Mode::B).norm_sqr() + 2.0 * (set.loss_factor * b.input).norm_sqr();
                prop_assert!((rest - q).abs() <= 1e-12 * a2.max(1.0));
            }
        }

        #[test]
        fn symmetric_and_periodic(mag in 0.0f64..8.0, phi in 0.0f64..=TAU, r2 in 0.0f64..=1.0) {
            let alpha = Complex64::new(mag, 0.0);
            let cfg = InterferometerConfig::from_loss(phi, r2).unwrap();
            let (p, q) = pq(&cfg, alpha);
            let (pm, qm) = pq(&cfg.with_phi(TAU - phi), alpha);
            let tol = 1e-12 * (mag * mag).max(1.0);
            prop_assert!((p - pm).abs() <= tol && (q - qm).abs() <= tol);

            let s = StateSpec::compass(alpha);
            let a = branch_amplitudes(&s, &cfg);
            let b = branch_amplitudes(&s, &cfg.with_phi(phi + TAU));
            for (x, y) in a.branches.iter().zip(b.branches.iter()) {
                for m in Mode::ALL {
                    prop_assert!((x.mode(m).norm() - y.mode(m).norm()).abs() <= 1e-12 * mag.max(1.0));
                }
            }
        }
    }
}
