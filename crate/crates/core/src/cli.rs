//! Command-line front end. Every command writes its data to `--out` (or
//! standard output) and returns a process exit code: 0 on success, 2 for
//! configuration errors, 3 for numeric failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Discrete, Poisson};

use crate::analysis::{
    arbitrate, fold_count, fwhm, loss_robustness_high, loss_robustness_low, observable_curve, phi_grid,
    refined_minimum, selected_interpretation, sensitivity_curve, working_intervals, LossSweep, PeakSelector,
    PhiInterval, SweepResult, DEFAULT_PHI_POINTS,
};
use crate::detection::{photon_probability, DetectionScheme};
use crate::errata;
use crate::error::{Error, Result};
use crate::interferometer::{pq, InterferometerConfig};
use crate::oracle::{oracle_distribution, ORACLE_NBAR_LIMIT};
use crate::states::{mean_photon_number, solve_amplitude, Shape, StateSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Largest analytic-vs-oracle deviation `oracle-check` accepts.
pub const ORACLE_TOLERANCE: f64 = 1e-8;

const CONFIG_KEYS: &[&str] = &[
    "state",
    "nbar",
    "alpha",
    "scheme",
    "r2",
    "phi-points",
    "out",
    "format",
    "svg",
    "summary",
    "peak",
    "threshold",
    "variant",
    "nbar-threshold",
    "max-photons",
];

#[derive(Parser, Debug)]
#[command(name = "qlidar", version, about = "Mach-Zehnder quantum LiDAR simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Observable against phase.
    Curve {
        #[command(flatten)]
        common: CommonArgs,
        /// JSON file with fringe count and FWHM per curve.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Peak used for the FWHM: `global` or `pi`.
        #[arg(long)]
        peak: Option<String>,
    },
    /// Peak-contrast difference against loss.
    LossSweep {
        #[command(flatten)]
        common: CommonArgs,
        /// `low`, `high` or `auto`.
        #[arg(long)]
        variant: Option<String>,
        /// Mean photon number from which `auto` picks the high variant.
        #[arg(long)]
        nbar_threshold: Option<f64>,
    },
    /// Phase uncertainty relative to the shot-noise limit against phase.
    Sensitivity {
        #[command(flatten)]
        common: CommonArgs,
        /// Working-point threshold on the shot-noise ratio.
        #[arg(long)]
        threshold: Option<f64>,
        /// JSON file for the working-point summary.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Analytic model against brute-force Fock propagation.
    OracleCheck {
        #[command(flatten)]
        common: CommonArgs,
        /// Largest photon number compared.
        #[arg(long)]
        max_photons: Option<usize>,
    },
    /// Minima of the candidate multiple-of-four detectors.
    Arbitrate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 0.37)]
        compass_target: f64,
        #[arg(long, default_value_t = 0.25)]
        cat_target: f64,
        #[arg(long, default_value_t = 0.01)]
        tolerance: f64,
    },
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Flat `key = value` file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// cs | ecss | sfcs | custom:c1,c2,c3,c4
    #[arg(long)]
    state: Option<String>,
    /// Target mean photon number.
    #[arg(long, allow_negative_numbers = true)]
    nbar: Option<f64>,
    /// Real coherent amplitude.
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// z | z4n:<n> | z4n-agg[:include-zero][:cutoff=<k>]
    #[arg(long)]
    scheme: Option<String>,
    /// Loss fraction |r|^2, or grid:lo:hi:step.
    #[arg(long, allow_negative_numbers = true)]
    r2: Option<String>,
    #[arg(long)]
    phi_points: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    svg: Option<PathBuf>,
    /// Accepted for scripts; the pipeline has no randomness.
    #[arg(long)]
    seedless: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::InvalidConfig(format!("unknown format '{s}' (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Amplitude {
    Nbar(f64),
    Alpha(f64),
}

/// Loss as a single value or a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrid(pub Vec<f64>);

impl FromStr for LossGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidConfig(format!("bad loss '{s}': {msg}"));
        let parse = |v: &str| v.trim().parse::<f64>().map_err(|_| bad("not a number"));
        let values = if let Some(rest) = s.strip_prefix("grid:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(bad("expected grid:lo:hi:step"));
            }
            let (lo, hi, step) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
            if !(step > 0.0) || !(hi > lo) {
                return Err(bad("need lo < hi and a positive step"));
            }
            let intervals = ((hi - lo) / step).round();
            if ((hi - lo) / step - intervals).abs() > 1e-6 {
                return Err(bad("step does not divide the range"));
            }
            let k = intervals as usize;
            (0..=k)
                .map(|i| {
                    // snap to 12 decimals so grid:0:0.05:0.01 yields 0.03, not 0.030000000000000006
                    let v = lo + (hi - lo) * i as f64 / k as f64;
                    format!("{v:.12}").parse::<f64>().unwrap_or(v)
                })
                .collect()
        } else {
            vec![parse(s)?]
        };
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidConfig(format!("loss fraction {v} outside [0, 1]")));
        }
        Ok(LossGrid(values))
    }
}

/// Resolved settings after merging flags over the config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub state: Option<Shape>,
    pub amplitude: Option<Amplitude>,
    pub scheme: DetectionScheme,
    pub r2: Option<LossGrid>,
    pub phi_points: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub svg: Option<PathBuf>,
    extra: BTreeMap<String, String>,
}

impl RunConfig {
    fn resolve(args: CommonArgs, mut extra_flags: BTreeMap<String, String>) -> Result<Self> {
        let mut file = match &args.config {
            Some(path) => read_config_file(path)?,
            None => BTreeMap::new(),
        };
        if args.seedless {
            log::debug!("--seedless: the pipeline is deterministic");
        }
        let mut pick = |key: &str, flag: Option<String>| flag.or_else(|| file.remove(key));

        let state = pick("state", args.state).map(|s| s.parse::<Shape>()).transpose()?;
        let nbar = pick("nbar", args.nbar.map(|v| v.to_string())).map(|v| parse_num(&v, "nbar")).transpose()?;
        let alpha = pick("alpha", args.alpha.map(|v| v.to_string())).map(|v| parse_num(&v, "alpha")).transpose()?;
        let amplitude = match (nbar, alpha) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig("give exactly one of --nbar and --alpha".into()));
            }
            (Some(n), None) => Some(Amplitude::Nbar(n)),
            (None, Some(a)) => Some(Amplitude::Alpha(a)),
            (None, None) => None,
        };
        let scheme = pick("scheme", args.scheme).unwrap_or_else(|| "z".into()).parse()?;
        let r2 = pick("r2", args.r2).map(|v| v.parse()).transpose()?;
        let phi_points = pick("phi-points", args.phi_points.map(|v| v.to_string()))
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidConfig(format!("phi-points must be an integer, got '{v}'")))
            })
            .transpose()?;
        if let Some(n) = phi_points {
            if n < 2 {
                return Err(Error::InvalidConfig(format!("phi-points must be at least 2, got {n}")));
            }
        }
        let out = pick("out", args.out.map(|p| p.display().to_string())).map(PathBuf::from);
        let format = pick("format", args.format).unwrap_or_else(|| "csv".into()).parse()?;
        let svg = pick("svg", args.svg.map(|p| p.display().to_string())).map(PathBuf::from);

        for (key, value) in file {
            extra_flags.entry(key).or_insert(value);
        }
        Ok(Self { state, amplitude, scheme, r2, phi_points, out, format, svg, extra: extra_flags })
    }

    fn extra<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.extra
            .get(key)
            .map(|v| {
                v.trim()
                    .parse::<T>()
                    .map_err(|_| Error::InvalidConfig(format!("bad value '{v}' for {key}")))
            })
            .transpose()
    }

    fn shape(&self) -> Result<Shape> {
        self.state.ok_or_else(|| Error::InvalidConfig("--state is required".into()))
    }

    fn spec(&self) -> Result<StateSpec> {
        let shape = self.shape()?;
        match self.amplitude {
            Some(Amplitude::Nbar(n)) => StateSpec::from_shape(shape, solve_amplitude(shape.coefficients(), n)?),
            Some(Amplitude::Alpha(a)) => StateSpec::from_shape(shape, Complex64::new(a, 0.0)),
            None => Err(Error::InvalidConfig("one of --nbar or --alpha is required".into())),
        }
    }

    fn nbar(&self) -> Result<f64> {
        match self.amplitude {
            Some(Amplitude::Nbar(n)) => Ok(n),
            _ => Ok(mean_photon_number(&self.spec()?)),
        }
    }

    fn loss_values(&self, default: &[f64]) -> Vec<f64> {
        self.r2.as_ref().map(|g| g.0.clone()).unwrap_or_else(|| default.to_vec())
    }

    fn phi(&self) -> Vec<f64> {
        phi_grid(self.phi_points.unwrap_or(DEFAULT_PHI_POINTS))
    }
}

fn parse_num(v: &str, key: &str) -> Result<f64> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key} must be a number, got '{v}'")))?;
    if !x.is_finite() {
        return Err(Error::InvalidConfig(format!("{key} must be finite")));
    }
    Ok(x)
}

fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("config line {}: expected key = value", n + 1)))?;
        let key = key.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::InvalidConfig(format!("config line {}: unknown key '{key}'", n + 1)));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_float(x: f64) -> String {
    format!("{x:?}")
}

fn finite_or_null(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn emit(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content)
            .map_err(|e| Error::InvalidConfig(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Numeric(format!("serialization failed: {e}")))
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        e if e.is_config() => EXIT_CONFIG,
        Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    let flags = |pairs: &[(&str, Option<String>)]| -> BTreeMap<String, String> {
        pairs.iter().filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v))).collect()
    };
    match command {
        Command::Curve { common, summary, peak } => {
            let extra = flags(&[
                ("summary", summary.map(|p| p.display().to_string())),
                ("peak", peak),
            ]);
            cmd_curve(&RunConfig::resolve(common, extra)?)
        }
        Command::LossSweep { common, variant, nbar_threshold } => {
            let extra = flags(&[("variant", variant), ("nbar-threshold", nbar_threshold.map(|v| v.to_string()))]);
            cmd_loss_sweep(&RunConfig::resolve(common, extra)?)
        }
        Command::Sensitivity { common, threshold, summary } => {
            let extra = flags(&[
                ("threshold", threshold.map(|v| v.to_string())),
                ("summary", summary.map(|p| p.display().to_string())),
            ]);
            cmd_sensitivity(&RunConfig::resolve(common, extra)?)
        }
        Command::OracleCheck { common, max_photons } => {
            let extra = flags(&[("max-photons", max_photons.map(|v| v.to_string()))]);
            cmd_oracle_check(&RunConfig::resolve(common, extra)?)
        }
        Command::Arbitrate { common, compass_target, cat_target, tolerance } => {
            cmd_arbitrate(&RunConfig::resolve(common, BTreeMap::new())?, compass_target, cat_target, tolerance)
        }
    }
}

#[derive(Serialize)]
struct CurveRow<'a> {
    phi: f64,
    value: Option<f64>,
    scheme: &'a str,
    state: &'a str,
    nbar: f64,
    r2: f64,
}

#[derive(Serialize)]
struct CurveSummary {
    r2: f64,
    fold_count: usize,
    fwhm: Option<f64>,
    fwhm_error: Option<String>,
}

pub fn cmd_curve(cfg: &RunConfig) -> Result<i32> {
    let spec = cfg.spec()?;
    let shape = cfg.shape()?;
    let selector = match cfg.extra::<String>("peak")?.as_deref() {
        None | Some("global") => PeakSelector::GlobalMax,
        Some("pi") => PeakSelector::Nearest(std::f64::consts::PI),
        Some(other) => return Err(Error::InvalidConfig(format!("unknown peak '{other}' (expected global or pi)"))),
    };
    let grid = cfg.phi();
    let curves = cfg
        .loss_values(&[0.0])
        .into_iter()
        .map(|r2| observable_curve(&spec, &cfg.scheme, r2, &grid).map(|c| (r2, c)))
        .collect::<Result<Vec<_>>>()?;

    let nbar = mean_photon_number(&spec);
    let scheme = cfg.scheme.to_string();
    let state = shape.name();
    let rows: Vec<CurveRow> = curves
        .iter()
        .flat_map(|(r2, c)| {
            c.abscissa.iter().zip(&c.ordinate).map(|(phi, v)| CurveRow {
                phi: *phi,
                value: finite_or_null(*v),
                scheme: &scheme,
                state: &state,
                nbar,
                r2: *r2,
            })
        })
        .collect();
    let body = match cfg.format {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let mut s = String::from("phi,value,scheme,state,nbar,r2\n");
            for r in &rows {
                let v = r.value.map(fmt_float).unwrap_or_default();
                let _ = writeln!(s, "{},{},{},{},{},{}", fmt_float(r.phi), v, r.scheme, r.state, fmt_float(r.nbar), fmt_float(r.r2));
            }
            s
        }
    };
    emit(cfg.out.as_deref(), &body)?;

    if let Some(path) = cfg.extra::<PathBuf>("summary")? {
        let summaries: Vec<CurveSummary> = curves
            .iter()
            .map(|(r2, c)| {
                let (fwhm, fwhm_error) = match fwhm(c, selector) {
                    Ok(w) => (Some(w), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                CurveSummary { r2: *r2, fold_count: fold_count(c), fwhm, fwhm_error }
            })
            .collect();
        emit(Some(&path), &to_json(&summaries)?)?;
    }
    if let Some(path) = &cfg.svg {
        let series = curves.iter().map(|(r2, c)| (format!("r2={}", fmt_float(*r2)), c)).collect::<Vec<_>>();
        emit(Some(path), &svg_plot(&format!("{state} {scheme}"), "phi", &series))?;
    }
    report_gaps(curves.iter().map(|(_, c)| c))
}

fn report_gaps<'a>(curves: impl Iterator<Item = &'a SweepResult>) -> Result<i32> {
    let gaps: usize = curves.map(|c| c.gaps.len()).sum();
    if gaps > 0 {
        eprintln!("error: {gaps} sample(s) failed to evaluate; their cells are empty");
        return Ok(EXIT_NUMERIC);
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Variant {
    Low,
    High,
}

#[derive(Serialize)]
struct LossRow<'a> {
    r2: f64,
    at_pi: f64,
    reference: f64,
    difference: f64,
    state: &'a str,
    scheme: &'a str,
    nbar: f64,
    variant: Variant,
}

pub fn cmd_loss_sweep(cfg: &RunConfig) -> Result<i32> {
    let shape = cfg.shape()?;
    let nbar = cfg.nbar()?;
    let threshold = cfg.extra::<f64>("nbar-threshold")?.unwrap_or(10.0);
    let variant = match cfg.extra::<String>("variant")?.as_deref() {
        None | Some("auto") => {
            if nbar >= threshold {
                Variant::High
            } else {
                Variant::Low
            }
        }
        Some("low") => Variant::Low,
        Some("high") => Variant::High,
        Some(other) => {
            return Err(Error::InvalidConfig(format!("unknown variant '{other}' (expected low, high or auto)")))
        }
    };
    let default_grid: LossGrid = "grid:0:1:0.02".parse()?;
    let r2 = cfg.loss_values(&default_grid.0);
    let sweep: LossSweep = match variant {
        Variant::Low => loss_robustness_low(
            shape,
            &cfg.scheme,
            nbar,
            &r2,
            cfg.phi_points.unwrap_or(DEFAULT_PHI_POINTS),
        )?,
        Variant::High => loss_robustness_high(shape, &cfg.scheme, nbar, &r2)?,
    };
    let scheme = cfg.scheme.to_string();
    let state = shape.name();
    let rows: Vec<LossRow> = sweep
        .points
        .iter()
        .map(|p| LossRow {
            r2: p.r2,
            at_pi: p.at_pi,
            reference: p.reference,
            difference: p.difference,
            state: &state,
            scheme: &scheme,
            nbar,
            variant,
        })
        .collect();
    let body = match cfg.format {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let reference = match variant {
                Variant::Low => "minimum",
                Variant::High => "coherent",
            };
            let mut s = format!("r2,at_pi,{reference},difference,state,scheme,nbar\n");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    fmt_float(r.r2),
                    fmt_float(r.at_pi),
                    fmt_float(r.reference),
                    fmt_float(r.difference),
                    r.state,
                    r.scheme,
                    fmt_float(r.nbar)
                );
            }
            s
        }
    };
    emit(cfg.out.as_deref(), &body)?;
    if let Some(path) = &cfg.svg {
        let curve = sweep.as_sweep()?;
        emit(Some(path), &svg_plot(&format!("{state} {scheme}"), "r2", &[(state.clone(), &curve)]))?;
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SensitivityRow<'a> {
    phi: f64,
    ratio: Option<f64>,
    scheme: &'a str,
    state: &'a str,
    nbar: f64,
    r2: f64,
}

#[derive(Serialize)]
struct WorkingSummary {
    r2: f64,
    threshold: f64,
    minimum: Option<f64>,
    count: usize,
    intervals: Vec<PhiInterval>,
}

pub fn cmd_sensitivity(cfg: &RunConfig) -> Result<i32> {
    let spec = cfg.spec()?;
    let shape = cfg.shape()?;
    let grid = cfg.phi();
    let curves = cfg
        .loss_values(&[0.0])
        .into_iter()
        .map(|r2| sensitivity_curve(&spec, &cfg.scheme, r2, &grid).map(|c| (r2, c)))
        .collect::<Result<Vec<_>>>()?;

    let nbar = mean_photon_number(&spec);
    let scheme = cfg.scheme.to_string();
    let state = shape.name();
    let rows: Vec<SensitivityRow> = curves
        .iter()
        .flat_map(|(r2, c)| {
            c.abscissa.iter().zip(&c.ordinate).map(|(phi, v)| SensitivityRow {
                phi: *phi,
                ratio: finite_or_null(*v),
                scheme: &scheme,
                state: &state,
                nbar,
                r2: *r2,
            })
        })
        .collect();
    let body = match cfg.format {
        Format::Json => to_json(&rows)?,
        Format::Csv => {
            let mut s = String::from("phi,ratio,scheme,state,nbar,r2\n");
            for r in &rows {
                let v = r.ratio.map(fmt_float).unwrap_or_default();
                let _ = writeln!(s, "{},{},{},{},{},{}", fmt_float(r.phi), v, r.scheme, r.state, fmt_float(r.nbar), fmt_float(r.r2));
            }
            s
        }
    };
    emit(cfg.out.as_deref(), &body)?;

    if let Some(threshold) = cfg.extra::<f64>("threshold")? {
        let summaries = curves
            .iter()
            .map(|(r2, c)| {
                let intervals = working_intervals(c, threshold)?;
                let minimum = refined_minimum(c).ok().map(|(_, y)| y);
                Ok(WorkingSummary { r2: *r2, threshold, minimum, count: intervals.len(), intervals })
            })
            .collect::<Result<Vec<_>>>()?;
        let json = to_json(&summaries)?;
        match cfg.extra::<PathBuf>("summary")? {
            Some(path) => emit(Some(&path), &json)?,
            None => eprint!("{json}"),
        }
    }
    if let Some(path) = &cfg.svg {
        let series = curves.iter().map(|(r2, c)| (format!("r2={}", fmt_float(*r2)), c)).collect::<Vec<_>>();
        emit(Some(path), &svg_plot(&format!("{state} {scheme} snl ratio"), "phi", &series))?;
    }
    report_gaps(curves.iter().map(|(_, c)| c))
}

struct OracleEntry {
    state: String,
    phi: f64,
    r2: f64,
    deviation: f64,
    poisson_deviation: Option<f64>,
}

pub fn cmd_oracle_check(cfg: &RunConfig) -> Result<i32> {
    let nbar = match cfg.amplitude {
        Some(Amplitude::Alpha(_)) => cfg.nbar()?,
        Some(Amplitude::Nbar(n)) => n,
        None => 3.0,
    };
    if nbar > ORACLE_NBAR_LIMIT {
        return Err(Error::OracleOutOfRange { nbar, limit: ORACLE_NBAR_LIMIT });
    }
    let max_photons = cfg.extra::<usize>("max-photons")?.unwrap_or(40);
    let shapes: Vec<Shape> = match cfg.state {
        Some(s) => vec![s],
        None => Shape::presets().to_vec(),
    };
    let specs = shapes
        .iter()
        .map(|&shape| {
            let spec = match cfg.amplitude {
                Some(Amplitude::Alpha(a)) => StateSpec::from_shape(shape, Complex64::new(a, 0.0))?,
                _ => StateSpec::from_shape(shape, solve_amplitude(shape.coefficients(), nbar)?)?,
            };
            Ok((shape, spec))
        })
        .collect::<Result<Vec<_>>>()?;
    let phi_count = cfg.phi_points.unwrap_or(13);
    let phis: Vec<f64> = (0..phi_count)
        .map(|k| std::f64::consts::TAU * k as f64 / (phi_count - 1) as f64)
        .collect();
    let losses = cfg.loss_values(&[0.0, 0.1, 0.3, 0.5, 0.9]);

    let mut points = Vec::new();
    for (shape, spec) in &specs {
        for &r2 in &losses {
            for &phi in &phis {
                points.push((*shape, *spec, phi, r2));
            }
        }
    }
    let entries = points
        .par_iter()
        .map(|(shape, spec, phi, r2)| {
            let config = InterferometerConfig::from_loss(*phi, *r2)?;
            let oracle = oracle_distribution(spec, &config, max_photons)?;
            let mut deviation: f64 = 0.0;
            let mut poisson_deviation: Option<f64> = None;
            let (p, _) = pq(&config, spec.alpha());
            for l in 0..=max_photons {
                let analytic = photon_probability(spec, &config, l)?.value;
                deviation = deviation.max((analytic - oracle.probs[l]).abs());
                if *shape == Shape::Coherent {
                    let d = (analytic - poisson_pmf(p, l)).abs();
                    poisson_deviation = Some(poisson_deviation.unwrap_or(0.0).max(d));
                }
            }
            Ok(OracleEntry { state: shape.name(), phi: *phi, r2: *r2, deviation, poisson_deviation })
        })
        .collect::<Result<Vec<_>>>()?;

    let max_dev = entries.iter().map(|e| e.deviation).fold(0.0, f64::max);
    let passed = max_dev <= ORACLE_TOLERANCE;
    let mut report = String::new();
    let _ = writeln!(report, "oracle check: nbar = {}, photons 0..={max_photons}, tolerance {ORACLE_TOLERANCE:e}", fmt_float(nbar));
    let _ = writeln!(report, "{} grid points, max deviation {max_dev:.3e}: {}", entries.len(), if passed { "PASS" } else { "FAIL" });
    let _ = writeln!(report);
    let _ = writeln!(report, "{:<8} {:>10} {:>6} {:>12}", "state", "phi", "r2", "max_dev");
    for e in &entries {
        let _ = writeln!(report, "{:<8} {:>10.6} {:>6.2} {:>12.3e}", e.state, e.phi, e.r2, e.deviation);
    }
    let poisson: Vec<&OracleEntry> = entries.iter().filter(|e| e.poisson_deviation.is_some()).collect();
    if !poisson.is_empty() {
        let worst = poisson.iter().filter_map(|e| e.poisson_deviation).fold(0.0, f64::max);
        let ok = worst <= ORACLE_TOLERANCE;
        let _ = writeln!(report);
        let _ = writeln!(
            report,
            "coherent state against Poisson(p): {} points, max deviation {worst:.3e}: {}",
            poisson.len(),
            if ok { "PASS" } else { "FAIL" }
        );
    }
    let _ = writeln!(report);
    let _ = writeln!(report, "closed-form expressions against the overlap model:");
    report.push_str(&errata::render(&errata::errata_report(nbar)?));
    emit(cfg.out.as_deref(), &report)?;
    if passed {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: oracle deviation {max_dev:e} exceeds {ORACLE_TOLERANCE:e}");
        Ok(EXIT_NUMERIC)
    }
}

fn poisson_pmf(mean: f64, l: usize) -> f64 {
    if mean <= 0.0 {
        return if l == 0 { 1.0 } else { 0.0 };
    }
    Poisson::new(mean).map(|d| d.pmf(l as u64)).unwrap_or(f64::NAN)
}

pub fn cmd_arbitrate(cfg: &RunConfig, compass_target: f64, cat_target: f64, tolerance: f64) -> Result<i32> {
    let nbar = match cfg.amplitude {
        Some(Amplitude::Nbar(n)) => n,
        Some(Amplitude::Alpha(_)) => {
            return Err(Error::InvalidConfig("arbitrate takes --nbar, not --alpha".into()));
        }
        None => 3.0,
    };
    let outcomes = arbitrate(nbar, compass_target, cat_target, tolerance, cfg.phi_points.unwrap_or(DEFAULT_PHI_POINTS))?;
    let body = match cfg.format {
        Format::Json => to_json(&outcomes)?,
        Format::Csv => {
            let mut s = String::from("scheme,sfcs_minimum,ecss_minimum,matches\n");
            for o in &outcomes {
                let _ = writeln!(s, "{},{},{},{}", o.scheme, fmt_float(o.compass_minimum), fmt_float(o.cat_minimum), o.matches);
            }
            s
        }
    };
    emit(cfg.out.as_deref(), &body)?;
    match selected_interpretation(&outcomes) {
        Some(s) => log::info!("selected scheme: {s}"),
        None => eprintln!("no candidate matches the targets within {tolerance}"),
    }
    Ok(EXIT_OK)
}

/// Line plot of one or more sampled curves. Non-finite samples break lines.
pub fn svg_plot(title: &str, x_label: &str, series: &[(String, &SweepResult)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

    let points = series.iter().flat_map(|(_, c)| c.abscissa.iter().zip(&c.ordinate));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in points.filter(|(_, y)| y.is_finite()) {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !(x1 > x0) {
        x0 = 0.0;
        x1 = 1.0;
    }
    if !(y1 > y0) {
        let mid = if y0.is_finite() { y0 } else { 0.0 };
        y0 = mid - 0.5;
        y1 = mid + 0.5;
    }
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#, W - 2.0 * M, H - 2.0 * M);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0, M - 15.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{x_label}</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10">{:.4}</text>"#, M, H - M + 14.0, x0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{:.4}</text>"#, W - M, H - M + 14.0, x1);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{:.4}</text>"#, M - 4.0, H - M, y0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end" font-size="10">{:.4}</text>"#, M - 4.0, M + 10.0, y1);
    for (k, (label, curve)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut segment: Vec<String> = Vec::new();
        let flush = |segment: &mut Vec<String>, s: &mut String| {
            if segment.len() > 1 {
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" points="{}"/>"#, segment.join(" "));
            }
            segment.clear();
        };
        for (x, y) in curve.abscissa.iter().zip(&curve.ordinate) {
            if y.is_finite() {
                segment.push(format!("{:.2},{:.2}", sx(*x), sy(*y)));
            } else {
                flush(&mut segment, &mut s);
            }
        }
        flush(&mut segment, &mut s);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{label}</text>"#,
            W - M - 90.0,
            M + 16.0 + 14.0 * k as f64
        );
    }
    s.push_str("</svg>\n");
    s
}
