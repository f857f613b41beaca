//! Command-line front end: `simulate`, `spectrum`, `analyze`, `action` and
//! `circular`.
//!
//! Every flag may also be given in a `key = value` file passed with
//! `--config`; flags on the command line take precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_rational::Ratio;
use serde::Serialize;

use crate::analytics::{self, RadialProblem, TurningPoints};
use crate::dynamics::{
    build_initial_state, integrate, measure_precessions, ExtremumKind, Horizon, IntegratorConfig, Orientation,
    Precessions, StepDiagnostics,
};
use crate::error::{Error, Result};
use crate::io::{self, Format};
use crate::model::{HalfInt, ModelParams, PhaseState, QuantumNumbers, Toggles, ALPHA_CODATA_2018};
use crate::quantization::{self, MagneticRange, QuantumRange};

#[derive(Parser, Debug)]
#[command(name = "spincoulomb", version, about = "Orbits and quasi-classical levels of a spinning particle in a Coulomb field")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integrate one quasi-classical state and write its trajectory.
    Simulate(SharedArgs),
    /// Tabulate quasi-classical and exact levels.
    Spectrum(SharedArgs),
    /// Turning points, period, apse angle and precession ratio of a state.
    Analyze(SharedArgs),
    /// Radial action at a given energy.
    Action(SharedArgs),
    /// Radius and segment width of a circular (n_r = 0) state.
    Circular(SharedArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Spectrum(_) => "spectrum",
            Command::Analyze(_) => "analyze",
            Command::Action(_) => "action",
            Command::Circular(_) => "circular",
        }
    }

    fn args(&self) -> &SharedArgs {
        match self {
            Command::Simulate(a)
            | Command::Spectrum(a)
            | Command::Analyze(a)
            | Command::Action(a)
            | Command::Circular(a) => a,
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct SharedArgs {
    /// `key = value` file with defaults for any of the flags below
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fine-structure constant [default: CODATA 2018]
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    /// Gyromagnetic factor [default: 2]
    #[arg(long, allow_hyphen_values = true)]
    pub g: Option<String>,
    /// Spin quantum number, decimal or fraction [default: 1/2]
    #[arg(long)]
    pub s: Option<String>,
    /// Radial quantum number [default: 0]
    #[arg(long)]
    pub nr: Option<String>,
    /// Orbital quantum number [default: 1]
    #[arg(long)]
    pub l: Option<String>,
    /// Total angular momentum [default: l + s]
    #[arg(long, allow_hyphen_values = true)]
    pub j: Option<String>,
    /// Magnetic quantum number [default: j]
    #[arg(long, allow_hyphen_values = true)]
    pub m: Option<String>,
    /// Number of radial periods to integrate [default: 10]
    #[arg(long)]
    pub periods: Option<String>,
    /// End time instead of a period count
    #[arg(long = "t-end", allow_hyphen_values = true)]
    pub t_end: Option<String>,
    /// Relative tolerance [default: 1e-10]
    #[arg(long)]
    pub rtol: Option<String>,
    /// Absolute tolerance [default: 1e-14]
    #[arg(long)]
    pub atol: Option<String>,
    /// Seed for the free orientation phases (all zero when absent)
    #[arg(long)]
    pub seed: Option<String>,
    /// Output file (reports go to stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv or json
    #[arg(long)]
    pub format: Option<String>,
    /// p⁴ term: on or off
    #[arg(long = "toggle-p4")]
    pub toggle_p4: Option<String>,
    /// Spin–orbit term: on or off
    #[arg(long = "toggle-so")]
    pub toggle_so: Option<String>,
    /// Electron levels with g = 2 + α/π (spectrum)
    #[arg(long)]
    pub electron: bool,
    /// Largest principal quantum number (spectrum) [default: 3]
    #[arg(long = "n-max")]
    pub n_max: Option<String>,
    /// Enumerate every m instead of m = j (spectrum)
    #[arg(long = "all-m")]
    pub all_m: bool,
    /// Energy for the radial action [default: closed-form level]
    #[arg(long, allow_hyphen_values = true)]
    pub energy: Option<String>,
}

/// Quantum-number part of a resolved configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuantumConfig {
    pub n_r: u32,
    pub l: u32,
    pub j: HalfInt,
    pub m: HalfInt,
    pub s: HalfInt,
}

/// Fully resolved configuration; embedded in every output file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub quantum_numbers: QuantumConfig,
    pub params: ModelParams,
    pub integrator: IntegratorConfig,
    pub horizon: Horizon,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub seed: Option<u64>,
    pub electron: bool,
    pub n_max: u32,
    pub all_m: bool,
    pub energy: Option<f64>,
}

impl RunConfig {
    pub fn qn(&self) -> QuantumNumbers {
        let q = &self.quantum_numbers;
        QuantumNumbers::new(q.n_r, q.l, q.j, q.m, q.s)
    }

    pub fn orientation(&self) -> Orientation {
        self.seed.map(Orientation::from_seed).unwrap_or_default()
    }

    fn json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration serializes")
    }
}

struct Resolver {
    file: BTreeMap<String, String>,
}

impl Resolver {
    fn raw(&self, key: &str, flag: &Option<String>) -> Option<String> {
        flag.clone().or_else(|| self.file.get(key).cloned())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, flag: &Option<String>) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key, flag)
            .map(|v| {
                v.trim()
                    .parse::<T>()
                    .map_err(|e| Error::Config(format!("--{key} = '{v}': {e}")))
            })
            .transpose()
    }

    fn switch(&self, key: &str, flag: &Option<String>) -> Result<Option<bool>> {
        self.raw(key, flag)
            .map(|v| match v.trim().to_ascii_lowercase().as_str() {
                "on" | "true" | "yes" | "1" => Ok(true),
                "off" | "false" | "no" | "0" => Ok(false),
                other => Err(Error::Config(format!("--{key} = '{other}': expected on or off"))),
            })
            .transpose()
    }

    fn flag(&self, key: &str, set: bool) -> Result<bool> {
        if set {
            return Ok(true);
        }
        Ok(self.switch(key, &None)?.unwrap_or(false))
    }
}

const KNOWN_KEYS: [&str; 21] = [
    "alpha", "g", "s", "nr", "l", "j", "m", "periods", "t-end", "rtol", "atol", "seed", "out", "format", "toggle-p4",
    "toggle-so", "electron", "n-max", "all-m", "energy", "config",
];

/// Merges flags over the optional configuration file and fills defaults.
pub fn resolve(command: &Command) -> Result<RunConfig> {
    let args = command.args();
    let file = match &args.config {
        Some(path) => io::read_config_file(path)?,
        None => BTreeMap::new(),
    };
    if let Some(key) = file.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown configuration key '{key}'")));
    }
    let r = Resolver { file };

    let alpha = r.parse::<f64>("alpha", &args.alpha)?.unwrap_or(ALPHA_CODATA_2018);
    let g = r.parse::<f64>("g", &args.g)?.unwrap_or(2.0);
    let s = r.parse::<HalfInt>("s", &args.s)?.unwrap_or(HalfInt::HALF);
    let toggles = Toggles {
        p4: r.switch("toggle-p4", &args.toggle_p4)?.unwrap_or(true),
        spin_orbit: r.switch("toggle-so", &args.toggle_so)?.unwrap_or(true),
    };
    let params = ModelParams::with_toggles(alpha, g, s.value(), toggles)?;

    let n_r = r.parse::<u32>("nr", &args.nr)?.unwrap_or(0);
    let l = r.parse::<u32>("l", &args.l)?.unwrap_or(1);
    let j = r
        .parse::<HalfInt>("j", &args.j)?
        .unwrap_or(HalfInt::from_twice(2 * l as i64 + s.twice()));
    let m = r.parse::<HalfInt>("m", &args.m)?.unwrap_or(j);

    let mut integrator = IntegratorConfig::default();
    if let Some(v) = r.parse::<f64>("rtol", &args.rtol)? {
        integrator.rtol = v;
    }
    if let Some(v) = r.parse::<f64>("atol", &args.atol)? {
        integrator.atol = v;
    }
    integrator.validate()?;

    let periods = r.parse::<u32>("periods", &args.periods)?;
    let t_end = r.parse::<f64>("t-end", &args.t_end)?;
    let horizon = match (periods, t_end) {
        (Some(_), Some(_)) => return Err(Error::Config("give either --periods or --t-end, not both".into())),
        (_, Some(t)) => {
            if t == 0.0 || !t.is_finite() {
                return Err(Error::InvalidParameter(format!("horizon must be non-zero, got --t-end {t}")));
            }
            Horizon::Until(t)
        }
        (Some(0), None) => return Err(Error::InvalidParameter("horizon must be non-zero, got --periods 0".into())),
        (Some(n), None) => Horizon::RadialPeriods(n),
        (None, None) => Horizon::RadialPeriods(10),
    };

    let default_format = match command {
        Command::Simulate(_) => Format::Csv,
        _ => Format::Json,
    };
    let format = r.parse::<Format>("format", &args.format)?.unwrap_or(default_format);
    let out = args.out.clone().or_else(|| r.file.get("out").map(PathBuf::from));
    let n_max = r.parse::<u32>("n-max", &args.n_max)?.unwrap_or(3);
    if n_max == 0 {
        return Err(Error::Config("--n-max must be at least 1".into()));
    }

    Ok(RunConfig {
        command: command.name().to_string(),
        quantum_numbers: QuantumConfig { n_r, l, j, m, s },
        params,
        integrator,
        horizon,
        out,
        format,
        seed: r.parse::<u64>("seed", &args.seed)?,
        electron: r.flag("electron", args.electron)?,
        n_max,
        all_m: r.flag("all-m", args.all_m)?,
        energy: r.parse::<f64>("energy", &args.energy)?,
    })
}

/// g as a small-denominator fraction when it is one exactly.
pub fn rational_g(g: f64) -> Option<Ratio<i64>> {
    (1..=1000i64).find_map(|d| {
        let n = (g * d as f64).round();
        (n.abs() < 1e12 && n / d as f64 == g).then(|| Ratio::new(n as i64, d))
    })
}

#[derive(Serialize)]
struct PredictedPrecession {
    dphi_a: f64,
    dphi_j: f64,
    ratio: Option<f64>,
    ratio_exact: Option<String>,
}

fn predicted_precession(qn: &QuantumNumbers, params: &ModelParams, energy: f64) -> PredictedPrecession {
    let ell = qn.ell as f64;
    let j = qn.j.value();
    let prob = RadialProblem::new(energy, ell * ell, qn.spin_orbit(), *params);
    let (ratio, ratio_exact) = exact_ratio(qn, params);
    PredictedPrecession {
        dphi_a: analytics::apse_angle(&prob) - 2.0 * std::f64::consts::PI,
        dphi_j: analytics::plane_precession_angle(j, ell, params),
        ratio,
        ratio_exact,
    }
}

fn exact_ratio(qn: &QuantumNumbers, params: &ModelParams) -> (Option<f64>, Option<String>) {
    if !(params.toggles.spin_orbit && params.toggles.p4) {
        return (None, None);
    }
    let ratio = analytics::precession_ratio(qn.j.value(), qn.ell as f64, qn.spin_orbit(), params.g_factor).ok();
    let exact = rational_g(params.g_factor).and_then(|g| {
        analytics::precession_ratio_exact(
            qn.j.to_ratio(),
            Ratio::from_integer(qn.ell as i64),
            qn.spin_orbit_exact(),
            g,
        )
        .ok()
        .map(|r| r.to_string())
    });
    (ratio, exact)
}

#[derive(Serialize)]
struct EventRecord {
    t: f64,
    r: f64,
    kind: ExtremumKind,
}

#[derive(Serialize)]
struct SimulationMetadata {
    config: serde_json::Value,
    quantum_numbers: QuantumNumbers,
    initial_state: PhaseState,
    energy_bs: f64,
    diagnostics: StepDiagnostics,
    samples: usize,
    events: Vec<EventRecord>,
    precessions: Option<Precessions>,
    precession_note: Option<String>,
    predicted: PredictedPrecession,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn emit(config: &RunConfig, text: &str, stdout: &mut Vec<String>) -> Result<()> {
    match &config.out {
        Some(path) => {
            io::write_file(path, text)?;
            stdout.push(format!("wrote {}", path.display()));
        }
        None => stdout.push(text.trim_end().to_string()),
    }
    Ok(())
}

fn simulate(config: &RunConfig, stdout: &mut Vec<String>) -> Result<()> {
    let qn = config.qn();
    let params = &config.params;
    let state = build_initial_state(&qn, params, &config.orientation())?;
    let energy_bs = quantization::solve_energy_bs(&qn, params)?;
    let trajectory = integrate(&state, params, &config.integrator, config.horizon)?;
    let cfg = config.json();
    let out = config.out.clone().unwrap_or_else(|| {
        PathBuf::from(match config.format {
            Format::Csv => "trajectory.csv",
            Format::Json => "trajectory.json",
        })
    });
    let body = match config.format {
        Format::Csv => io::trajectory_csv(&trajectory, &cfg)?,
        Format::Json => io::to_json(&io::polyline(&trajectory, &cfg))?,
    };
    io::write_file(&out, &body)?;
    let (precessions, precession_note) = match measure_precessions(&trajectory) {
        Ok(p) => (Some(p), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let meta = SimulationMetadata {
        config: cfg,
        quantum_numbers: qn,
        initial_state: state,
        energy_bs,
        diagnostics: trajectory.diagnostics,
        samples: trajectory.samples.len(),
        events: trajectory
            .events
            .iter()
            .map(|e| EventRecord { t: e.t, r: e.r, kind: e.kind })
            .collect(),
        precessions,
        precession_note,
        predicted: predicted_precession(&qn, params, energy_bs),
    };
    let meta_path = sidecar(&out);
    io::write_file(&meta_path, &io::to_json(&meta)?)?;
    stdout.push(format!("wrote {}", out.display()));
    stdout.push(format!("wrote {}", meta_path.display()));
    Ok(())
}

#[derive(Serialize)]
struct SpectrumMeta {
    config: serde_json::Value,
    entries: usize,
}

fn spectrum(config: &RunConfig, stdout: &mut Vec<String>) -> Result<()> {
    let range = QuantumRange {
        n_max: config.n_max,
        s: config.quantum_numbers.s,
        magnetic: if config.all_m { MagneticRange::All } else { MagneticRange::Stretched },
    };
    let entries = quantization::spectrum_table(&range, &config.params, config.electron)?;
    let cfg = config.json();
    match config.format {
        Format::Json => {
            emit(config, &io::to_json(&entries)?, stdout)?;
            if let Some(path) = &config.out {
                let meta_path = sidecar(path);
                io::write_file(&meta_path, &io::to_json(&SpectrumMeta { config: cfg, entries: entries.len() })?)?;
                stdout.push(format!("wrote {}", meta_path.display()));
            }
        }
        Format::Csv => emit(config, &io::spectrum_csv(&entries, &cfg), stdout)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct ClosedAndQuadrature {
    closed_form: f64,
    quadrature: f64,
    relative_gap: f64,
    doubling_gap: f64,
}

fn compare(closed_form: f64, q: analytics::Quadrature) -> ClosedAndQuadrature {
    ClosedAndQuadrature {
        closed_form,
        quadrature: q.value,
        relative_gap: (q.value - closed_form).abs() / closed_form.abs(),
        doubling_gap: q.doubling_gap,
    }
}

#[derive(Serialize)]
struct AnalyzeReport {
    config: serde_json::Value,
    quantum_numbers: QuantumNumbers,
    energy_bs: f64,
    energy_closed_form: f64,
    turning_points: TurningPoints,
    period: ClosedAndQuadrature,
    period_dynamical: f64,
    apse_angle: ClosedAndQuadrature,
    dphi_a: f64,
    dphi_a_quadrature: f64,
    dphi_j: f64,
    ratio: Option<f64>,
    ratio_exact: Option<String>,
    radial_action: f64,
}

fn analyze(config: &RunConfig, stdout: &mut Vec<String>) -> Result<()> {
    let qn = crate::model::validate_quantum_numbers(config.qn())?;
    let params = &config.params;
    params.check_spin(&qn)?;
    let energy = quantization::solve_energy_bs(&qn, params)?;
    let ell = qn.ell as f64;
    let prob = RadialProblem::new(energy, ell * ell, qn.spin_orbit(), *params);
    let turning_points = analytics::turning_points(&prob)?;
    let (period, apse_angle) = if turning_points.circular {
        // no radial motion: the quadratures degenerate to their closed-form limits
        let t = analytics::orbital_period(&prob)?;
        let phi = analytics::apse_angle(&prob);
        let q = |v| analytics::Quadrature { value: v, doubling_gap: 0.0 };
        (compare(t, q(t)), compare(phi, q(phi)))
    } else {
        (
            compare(analytics::orbital_period(&prob)?, analytics::orbital_period_quadrature(&prob)?),
            compare(analytics::apse_angle(&prob), analytics::apse_angle_quadrature(&prob)?),
        )
    };
    let period_dynamical = if turning_points.circular {
        period.closed_form
    } else {
        analytics::orbital_period_dynamical(&prob)?.value
    };
    let (ratio, ratio_exact) = exact_ratio(&qn, params);
    let two_pi = 2.0 * std::f64::consts::PI;
    let report = AnalyzeReport {
        config: config.json(),
        quantum_numbers: qn,
        energy_bs: energy,
        energy_closed_form: quantization::energy_closed_form(&qn, params),
        dphi_a: apse_angle.closed_form - two_pi,
        dphi_a_quadrature: apse_angle.quadrature - two_pi,
        dphi_j: analytics::plane_precession_angle(qn.j.value(), ell, params),
        turning_points,
        period,
        period_dynamical,
        apse_angle,
        ratio,
        ratio_exact,
        radial_action: if turning_points.circular {
            0.0
        } else {
            analytics::radial_action(&prob)?.value
        },
    };
    emit(config, &io::to_json(&report)?, stdout)
}

#[derive(Serialize)]
struct ActionReport {
    config: serde_json::Value,
    energy: f64,
    l2: f64,
    sl: f64,
    radial_action: f64,
    /// `α/√(−2E) − L`, exact without the relativistic terms.
    kepler_action: f64,
}

fn action(config: &RunConfig, stdout: &mut Vec<String>) -> Result<()> {
    let qn = crate::model::validate_quantum_numbers(config.qn())?;
    let params = &config.params;
    params.check_spin(&qn)?;
    let energy = config
        .energy
        .unwrap_or_else(|| quantization::energy_closed_form(&qn, params));
    let ell = qn.ell as f64;
    let radial_action = quantization::radial_action(energy, ell * ell, qn.spin_orbit(), params)?;
    let report = ActionReport {
        config: config.json(),
        energy,
        l2: ell * ell,
        sl: qn.spin_orbit(),
        radial_action,
        kepler_action: params.alpha / (-2.0 * energy).sqrt() - ell,
    };
    emit(config, &io::to_json(&report)?, stdout)
}

#[derive(Serialize)]
struct CircularReport {
    config: serde_json::Value,
    quantum_numbers: QuantumNumbers,
    radius: f64,
    radius_numerical: f64,
    energy: f64,
    gamma: f64,
    segment_width: f64,
    segment_width_approximation: f64,
}

fn circular(config: &RunConfig, stdout: &mut Vec<String>) -> Result<()> {
    let qn = crate::model::validate_quantum_numbers(config.qn())?;
    let params = &config.params;
    params.check_spin(&qn)?;
    let radius = quantization::circular_radius(&qn, params)?;
    let ell = qn.ell as f64;
    let numeric = quantization::circular_energy(ell * ell, qn.spin_orbit(), params)?;
    let width = quantization::segment_width(&qn, params)?;
    let report = CircularReport {
        config: config.json(),
        quantum_numbers: qn,
        radius,
        radius_numerical: numeric.radius,
        energy: numeric.energy,
        gamma: width.gamma,
        segment_width: width.width,
        segment_width_approximation: width.approximation,
    };
    emit(config, &io::to_json(&report)?, stdout)
}

/// Runs a parsed command; returns the lines meant for stdout.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    let config = resolve(&cli.command)?;
    let mut stdout = Vec::new();
    match cli.command {
        Command::Simulate(_) => simulate(&config, &mut stdout)?,
        Command::Spectrum(_) => spectrum(&config, &mut stdout)?,
        Command::Analyze(_) => analyze(&config, &mut stdout)?,
        Command::Action(_) => action(&config, &mut stdout)?,
        Command::Circular(_) => circular(&config, &mut stdout)?,
    }
    Ok(stdout)
}

/// Process entry point; returns the exit code (0, 2 or 3).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(lines) => {
            use std::io::Write as _;
            let mut out = std::io::stdout().lock();
            for line in lines {
                // a closed pipe (e.g. `| head`) is not an error
                if writeln!(out, "{line}").is_err() {
                    break;
                }
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
