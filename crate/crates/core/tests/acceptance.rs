//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use qlidar::analysis::{
    arbitrate, fold_count, fwhm, loss_robustness_high, observable_curve, phi_grid, refined_minimum,
    selected_interpretation, sensitivity_curve, working_intervals, PeakSelector,
};
use qlidar::detection::{
    default_cutoff, expectation, photon_distribution, photon_probability, z4n_derivative, DetectionScheme,
};
use qlidar::errata::{errata_report, render};
use qlidar::interferometer::{pq, InterferometerConfig};
use qlidar::oracle::oracle_distribution;
use qlidar::states::{mean_photon_number, solve_amplitude, Shape, StateSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{Discrete, Poisson};

const LOSSES: [f64; 5] = [0.0, 0.1, 0.3, 0.5, 0.9];
const GRID_POINTS: usize = 2048;

type Outcome = Result<String, String>;

fn state(shape: Shape, nbar: f64) -> StateSpec {
    StateSpec::from_shape(shape, solve_amplitude(shape.coefficients(), nbar).unwrap()).unwrap()
}

fn check_grid() -> Vec<(Shape, StateSpec, f64, f64)> {
    let phis: Vec<f64> = (0..13).map(|k| TAU * k as f64 / 12.0).collect();
    let mut points = Vec::new();
    for shape in Shape::presets() {
        let spec = state(shape, 3.0);
        for r2 in LOSSES {
            for &phi in &phis {
                points.push((shape, spec, phi, r2));
            }
        }
    }
    points
}

fn selected_scheme() -> Result<DetectionScheme, String> {
    let outcomes = arbitrate(3.0, 0.37, 0.25, 0.03, GRID_POINTS).map_err(|e| e.to_string())?;
    selected_interpretation(&outcomes).ok_or_else(|| {
        let all: Vec<String> = outcomes
            .iter()
            .map(|o| format!("{}: sfcs {:.4}, ecss {:.4}", o.scheme, o.compass_minimum, o.cat_minimum))
            .collect();
        format!("no interpretation matches ({})", all.join("; "))
    })
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let worst = check_grid()
        .par_iter()
        .map(|(_, spec, phi, r2)| {
            let cfg = InterferometerConfig::from_loss(*phi, *r2).map_err(|e| e.to_string())?;
            let oracle = oracle_distribution(spec, &cfg, 40).map_err(|e| e.to_string())?;
            (0..=40).try_fold(0.0f64, |acc, l| {
                let a = photon_probability(spec, &cfg, l).map_err(|e| e.to_string())?.value;
                Ok(acc.max((a - oracle.probs[l]).abs()))
            })
        })
        .collect::<Result<Vec<f64>, String>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let elapsed = start.elapsed().as_secs_f64();
    let msg = format!("max |analytic - brute force| = {worst:.2e} over 195 points, l <= 40, {elapsed:.1}s");
    if worst <= 1e-8 && elapsed <= 120.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn normalization() -> Outcome {
    let mut worst = 0.0f64;
    for (_, spec, phi, r2) in check_grid() {
        let cfg = InterferometerConfig::from_loss(phi, r2).unwrap();
        let cutoff = default_cutoff(mean_photon_number(&spec).max(spec.alpha_sq()));
        let dist = photon_distribution(&spec, &cfg, cutoff).map_err(|e| e.to_string())?;
        if dist.tail_bound > 1e-9 {
            return Err(format!("tail bound {:e} at phi={phi}, r2={r2}", dist.tail_bound));
        }
        let total = dist.total();
        let excess = if total > 1.0 { total - 1.0 } else { (1.0 - total - dist.tail_bound).max(0.0) };
        worst = worst.max(excess);
    }
    let msg = format!("worst deviation of sum P(l) from 1 beyond the tail bound: {worst:.2e}");
    if worst <= 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn reductions() -> Outcome {
    let zero = DetectionScheme::Z4nSingle { n: 0 };
    let mut poisson_worst = 0.0f64;
    for (shape, spec, phi, r2) in check_grid() {
        let cfg = InterferometerConfig::from_loss(phi, r2).unwrap();
        let z = expectation(&spec, &cfg, &DetectionScheme::Z).unwrap();
        let z0 = expectation(&spec, &cfg, &zero).unwrap();
        if z.to_bits() != z0.to_bits() {
            return Err(format!("n=0 differs from Z at phi={phi}, r2={r2}: {z0} vs {z}"));
        }
        if shape == Shape::Coherent {
            let (p, _) = pq(&cfg, spec.alpha());
            for l in 0..=40u64 {
                let expected = if p == 0.0 {
                    if l == 0 { 1.0 } else { 0.0 }
                } else {
                    Poisson::new(p).unwrap().pmf(l)
                };
                let got = photon_probability(&spec, &cfg, l as usize).unwrap().value;
                poisson_worst = poisson_worst.max((got - expected).abs());
            }
        }
    }
    let msg = format!("n=0 bitwise equal to Z; coherent P(l) vs Poisson(p) max deviation {poisson_worst:.2e}");
    if poisson_worst <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fold_doubling(z4n: &DetectionScheme) -> Outcome {
    let grid = phi_grid(GRID_POINTS);
    let mut lines = Vec::new();
    let mut ok = true;
    for nbar in [3.0, 100.0] {
        for shape in Shape::presets() {
            let spec = state(shape, nbar);
            let fz = fold_count(&observable_curve(&spec, &DetectionScheme::Z, 0.0, &grid).map_err(|e| e.to_string())?);
            let f4 = fold_count(&observable_curve(&spec, z4n, 0.0, &grid).map_err(|e| e.to_string())?);
            let expected = if shape == Shape::Coherent { fz } else { 2 * fz };
            ok &= f4 == expected && fz > 0;
            lines.push(format!("{}@{nbar}: Z {fz}, Z4n {f4}", shape.name()));
        }
    }
    let msg = lines.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fwhm_narrows(z4n: &DetectionScheme) -> Outcome {
    let grid = phi_grid(GRID_POINTS);
    let mut lines = Vec::new();
    let mut ok = true;
    for shape in Shape::presets() {
        for scheme in [DetectionScheme::Z, *z4n] {
            let width = |nbar: f64| -> Result<f64, String> {
                let curve = observable_curve(&state(shape, nbar), &scheme, 0.0, &grid).map_err(|e| e.to_string())?;
                fwhm(&curve, PeakSelector::GlobalMax).map_err(|e| e.to_string())
            };
            let (low, high) = (width(3.0)?, width(100.0)?);
            ok &= high < low;
            lines.push(format!("{} {scheme}: {low:.4} -> {high:.4}", shape.name()));
        }
    }
    let msg = lines.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn minima_anchors() -> Outcome {
    let outcomes = arbitrate(3.0, 0.37, 0.25, 0.03, GRID_POINTS).map_err(|e| e.to_string())?;
    let all: Vec<String> = outcomes
        .iter()
        .map(|o| format!("{}: sfcs {:.4}, ecss {:.4}", o.scheme, o.compass_minimum, o.cat_minimum))
        .collect();
    match selected_interpretation(&outcomes) {
        Some(s) => Ok(format!("selected {s} ({})", all.join("; "))),
        None => Err(format!("no interpretation in tolerance ({})", all.join("; "))),
    }
}

fn loss_sign_change(z4n: &DetectionScheme) -> Outcome {
    let r2: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
    let sfcs = loss_robustness_high(Shape::Compass, z4n, 100.0, &r2).map_err(|e| e.to_string())?;
    let cs = loss_robustness_high(Shape::Coherent, z4n, 100.0, &r2).map_err(|e| e.to_string())?;
    let crossing = sfcs
        .points
        .windows(2)
        .find(|w| w[0].difference > 0.0 && w[1].difference < 0.0)
        .map(|w| w[1].r2);
    let cs_zero = cs.points.iter().all(|p| p.difference == 0.0);
    let msg = format!(
        "sfcs difference at r2=0: {:.4}, first negative at r2={crossing:?}; cs column identically 0: {cs_zero}",
        sfcs.points[0].difference
    );
    if crossing.is_some() && cs_zero {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn snl_and_working_points(z4n: &DetectionScheme) -> Outcome {
    let grid = phi_grid(GRID_POINTS);
    let mut lines = Vec::new();
    let mut ok = true;
    let mut counts = Vec::new();
    for nbar in [3.0, 100.0] {
        for shape in Shape::presets() {
            let spec = state(shape, nbar);
            for scheme in [DetectionScheme::Z, *z4n] {
                let curve = sensitivity_curve(&spec, &scheme, 0.0, &grid).map_err(|e| e.to_string())?;
                let (_, min) = refined_minimum(&curve).map_err(|e| e.to_string())?;
                ok &= (0.99..=1.05).contains(&min);
                lines.push(format!("{}@{nbar} {scheme} min {min:.5}", shape.name()));
                if nbar == 3.0 && scheme == *z4n {
                    let n = working_intervals(&curve, 1.05).map_err(|e| e.to_string())?.len();
                    counts.push((shape, n));
                }
            }
        }
    }
    let count = |s: Shape| counts.iter().find(|(x, _)| *x == s).map(|(_, n)| *n).unwrap_or(0);
    let (sfcs, ecss, cs) = (count(Shape::Compass), count(Shape::EvenCat), count(Shape::Coherent));
    ok &= sfcs > ecss && sfcs > cs;
    lines.push(format!("working intervals at 1.05: sfcs {sfcs}, ecss {ecss}, cs {cs}"));
    let msg = lines.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn derivative_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20240917);
    let h = 1e-5;
    let mut checked = 0;
    let mut worst = 0.0f64;
    let mut attempts = 0;
    while checked < 100 {
        attempts += 1;
        if attempts > 10_000 {
            return Err(format!("only {checked} points with |derivative| > 1e-6"));
        }
        let shape = Shape::presets()[rng.gen_range(0..3)];
        let nbar = [3.0, 10.0][rng.gen_range(0..2)];
        let phi = rng.gen_range(0.0..TAU);
        let r2: f64 = rng.gen_range(0.0..1.0);
        let n: u32 = rng.gen_range(0..4);
        let spec = state(shape, nbar);
        let scheme = DetectionScheme::Z4nSingle { n };
        let cfg = InterferometerConfig::from_loss(phi, r2).unwrap();
        let d = z4n_derivative(&spec, &cfg, &scheme).map_err(|e| e.to_string())?;
        if d.abs() <= 1e-6 {
            continue;
        }
        let f = |x: f64| expectation(&spec, &cfg.with_phi(x), &scheme).unwrap();
        let fd = (f(phi + h) - f(phi - h)) / (2.0 * h);
        worst = worst.max(((fd - d) / d).abs());
        checked += 1;
    }
    let msg = format!("{checked} random points, worst relative error {worst:.2e}");
    if worst <= 1e-6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn errata() -> Outcome {
    let rows = errata_report(3.0).map_err(|e| e.to_string())?;
    let table = render(&rows);
    for line in table.lines() {
        println!("    {line}");
    }
    let mut summary = Vec::new();
    for quantity in ["normalization", "photon-probability", "phase-derivative"] {
        let worst = rows
            .iter()
            .filter(|r| r.quantity == quantity)
            .map(|r| r.relative_deviation())
            .fold(0.0, f64::max);
        summary.push(format!("{quantity} worst relative deviation {worst:.3e}"));
    }
    if rows.iter().all(|r| r.relative_deviation().is_finite()) {
        Ok(summary.join("; "))
    } else {
        Err("non-finite deviation in the report".into())
    }
}

fn main() -> ExitCode {
    let z4n = selected_scheme();
    let with_z4n = |f: fn(&DetectionScheme) -> Outcome| -> Outcome {
        match &z4n {
            Ok(s) => f(s),
            Err(e) => Err(e.clone()),
        }
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("normalization", Box::new(normalization)),
        ("reduction identities", Box::new(reductions)),
        ("fringe doubling", Box::new(|| with_z4n(fold_doubling))),
        ("fwhm narrows with photon number", Box::new(|| with_z4n(fwhm_narrows))),
        ("minimum anchors", Box::new(minima_anchors)),
        ("loss sign change", Box::new(|| with_z4n(loss_sign_change))),
        ("shot-noise saturation and working points", Box::new(|| with_z4n(snl_and_working_points))),
        ("derivative check", Box::new(derivative_check)),
        ("closed-form errata report", Box::new(errata)),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
