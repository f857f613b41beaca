//! Time integration of the equations of motion, apsidal events and the
//! rotating-frame measurement of apse and plane precession.

use std::f64::consts::PI;

use nalgebra::{Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{turning_points, RadialProblem};
use crate::error::{Error, Result};
use crate::model::{
    conserved_quantities, gamma_angle, validate_quantum_numbers, ConservedSet, ModelParams, PhaseState,
    QuantumNumbers, Vec3,
};
use crate::quantization::{circular_energy, solve_energy_bs};

/// Time derivatives of (x, p, s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Derivatives {
    pub dx: Vec3,
    pub dp: Vec3,
    pub ds: Vec3,
}

/// Common rate `((g−1)/2)(α²/r³)` of the spin–orbit precession.
fn precession_rate(r: f64, params: &ModelParams) -> f64 {
    params.so_prefactor() * params.alpha * params.alpha / (r * r * r)
}

fn checked_radius(x: &Vec3) -> Result<f64> {
    let r = x.norm();
    if r > 0.0 && r.is_finite() {
        Ok(r)
    } else {
        Err(Error::Singularity(r))
    }
}

pub fn eom_rhs(state: &PhaseState, params: &ModelParams) -> Result<Derivatives> {
    let (x, p, s) = (&state.x, &state.p, &state.s);
    let r = checked_radius(x)?;
    let a2 = params.alpha * params.alpha;
    let c = precession_rate(r, params);
    let l = x.cross(p);
    let sl = s.dot(&l);
    let kinetic = 1.0 - params.p4_factor() * a2 * p.norm_squared() / 2.0;
    let r3 = r * r * r;
    let radial = 1.0 / r3 - 3.0 * params.so_prefactor() * a2 * sl / (r3 * r * r);
    Ok(Derivatives {
        dx: kinetic * p + c * s.cross(x),
        dp: -radial * x + c * s.cross(p),
        ds: c * l.cross(s),
    })
}

/// Angular velocities `Ω_j = c J` of the orbital plane and `Ω_s = c s` of
/// the frame in which the orbit is planar.
pub fn omega_vectors(state: &PhaseState, params: &ModelParams) -> Result<(Vec3, Vec3)> {
    let r = checked_radius(&state.x)?;
    let c = precession_rate(r, params);
    Ok((c * state.total_angular_momentum(), c * state.s))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Adaptive Dormand–Prince 5(4).
    DormandPrince,
    /// Dormand–Prince fifth-order solution on a fixed step.
    FixedStep { step: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinMode {
    /// The spin is advanced by the Runge–Kutta stages like any other variable.
    Generic,
    /// After each step the spin is rotated from its old value onto the
    /// direction produced by the stages, so |s| never changes.
    ExactRotation,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub initial_step: Option<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub max_step: Option<f64>,
    pub spin_mode: SpinMode,
    /// Abort when r falls below this fraction of the initial radius.
    pub capture_ratio: f64,
    /// Enforce the drift budget of ten times `rtol` (adaptive method only).
    pub enforce_drift: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::DormandPrince,
            initial_step: None,
            rtol: 1e-10,
            atol: 1e-14,
            max_steps: 20_000_000,
            max_step: None,
            spin_mode: SpinMode::ExactRotation,
            capture_ratio: 1e-4,
            enforce_drift: true,
        }
    }
}

impl IntegratorConfig {
    pub fn with_rtol(rtol: f64) -> Self {
        IntegratorConfig {
            rtol,
            atol: rtol * 1e-4,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerances must be positive (rtol={}, atol={})",
                self.rtol, self.atol
            )));
        }
        if let Method::FixedStep { step } = self.method {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::InvalidParameter(format!("fixed step must be positive, got {step}")));
            }
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0) {
                return Err(Error::InvalidParameter(format!("initial step must be positive, got {h}")));
            }
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::InvalidParameter(format!("max step must be positive, got {h}")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max steps must be positive".into()));
        }
        Ok(())
    }
}

/// Where an integration stops.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    /// Absolute end time; may lie before the start time.
    Until(f64),
    /// Stop on the n-th pericentre after the first one. Orbits without
    /// radial motion stop after n Kepler periods of their energy.
    RadialPeriods(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtremumKind {
    Pericentre,
    Apocentre,
}

/// A root of r'(t) located inside an accepted step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialEvent {
    pub t: f64,
    pub r: f64,
    pub kind: ExtremumKind,
    pub state: PhaseState,
    /// Accumulated `∫ ((g−1)/2) α²/r³ dt` at the event.
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub state: PhaseState,
    pub conserved: ConservedSet,
    pub tau: f64,
}

/// Largest relative change of each invariant with respect to the first
/// sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Drift {
    pub energy: f64,
    pub j_norm: f64,
    pub l2: f64,
    pub sl: f64,
    pub s2: f64,
}

impl Drift {
    pub fn max(&self) -> f64 {
        self.energy.max(self.j_norm).max(self.l2).max(self.sl).max(self.s2)
    }

    fn worst(&self) -> (&'static str, f64) {
        [
            ("energy", self.energy),
            ("|J|", self.j_norm),
            ("L^2", self.l2),
            ("(s,L)", self.sl),
            ("|s|^2", self.s2),
        ]
        .into_iter()
        .fold(("energy", f64::MIN), |a, b| if b.1 > a.1 { b } else { a })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub accepted: usize,
    pub rejected: usize,
    pub drift: Drift,
    /// Local tolerance actually used, as a fraction of the requested one.
    pub tolerance_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub samples: Vec<Sample>,
    pub events: Vec<RadialEvent>,
    pub diagnostics: StepDiagnostics,
}

impl Trajectory {
    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn pericentres(&self) -> impl Iterator<Item = &RadialEvent> {
        self.events.iter().filter(|e| e.kind == ExtremumKind::Pericentre)
    }
}

type Y = [f64; 10];

fn pack(state: &PhaseState, tau: f64) -> Y {
    let (x, p, s) = (&state.x, &state.p, &state.s);
    [x[0], x[1], x[2], p[0], p[1], p[2], s[0], s[1], s[2], tau]
}

fn unpack(y: &Y, t: f64) -> (PhaseState, f64) {
    (
        PhaseState {
            x: Vec3::new(y[0], y[1], y[2]),
            p: Vec3::new(y[3], y[4], y[5]),
            s: Vec3::new(y[6], y[7], y[8]),
            t,
        },
        y[9],
    )
}

fn rhs(y: &Y, params: &ModelParams) -> Result<Y> {
    let (state, _) = unpack(y, 0.0);
    let d = eom_rhs(&state, params)?;
    let r = state.x.norm();
    Ok([
        d.dx[0],
        d.dx[1],
        d.dx[2],
        d.dp[0],
        d.dp[1],
        d.dp[2],
        d.ds[0],
        d.ds[1],
        d.ds[2],
        precession_rate(r, params),
    ])
}

// Dormand–Prince 5(4) tableau; the system is autonomous, so the nodes are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Step {
    y: Y,
    err: Y,
    /// Derivative at the new point (first stage of the next step).
    f_end: Y,
}

fn rotate_spin(old: &Y, new: &mut Y) {
    let norm_old = (old[6] * old[6] + old[7] * old[7] + old[8] * old[8]).sqrt();
    let norm_new = (new[6] * new[6] + new[7] * new[7] + new[8] * new[8]).sqrt();
    if norm_new > 0.0 {
        let k = norm_old / norm_new;
        for v in &mut new[6..9] {
            *v *= k;
        }
    }
}

fn dp5_step(y: &Y, f0: &Y, h: f64, params: &ModelParams, mode: SpinMode) -> Result<Step> {
    let mut k = [[0.0; 10]; 7];
    k[0] = *f0;
    for stage in 1..7 {
        let mut ys = *y;
        for (i, v) in ys.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (prev, a) in A[stage].iter().enumerate().take(stage) {
                acc += a * k[prev][i];
            }
            *v += h * acc;
        }
        k[stage] = rhs(&ys, params)?;
    }
    let mut y5 = *y;
    let mut err = [0.0; 10];
    for i in 0..10 {
        let mut s5 = 0.0;
        let mut s4 = 0.0;
        for stage in 0..7 {
            s5 += B5[stage] * k[stage][i];
            s4 += B4[stage] * k[stage][i];
        }
        y5[i] += h * s5;
        err[i] = h * (s5 - s4);
    }
    let f_end = if mode == SpinMode::ExactRotation {
        rotate_spin(y, &mut y5);
        rhs(&y5, params)?
    } else {
        // FSAL: the last stage is evaluated at the fifth-order solution.
        k[6]
    };
    Ok(Step { y: y5, err, f_end })
}

fn error_norm(err: &Y, y0: &Y, y1: &Y, rtol: f64, atol: f64) -> f64 {
    let sum: f64 = (0..10)
        .map(|i| {
            let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
            (err[i] / sc).powi(2)
        })
        .sum();
    (sum / 10.0).sqrt()
}

fn rms_scaled(v: &Y, y: &Y, rtol: f64, atol: f64) -> f64 {
    let sum: f64 = (0..10).map(|i| (v[i] / (atol + rtol * y[i].abs())).powi(2)).sum();
    (sum / 10.0).sqrt()
}

fn initial_step(y: &Y, f0: &Y, params: &ModelParams, rtol: f64, atol: f64) -> Result<f64> {
    let d0 = rms_scaled(y, y, rtol, atol);
    let d1 = rms_scaled(f0, y, rtol, atol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let mut y1 = *y;
    for i in 0..10 {
        y1[i] += h0 * f0[i];
    }
    let f1 = rhs(&y1, params)?;
    let mut df = [0.0; 10];
    for i in 0..10 {
        df[i] = f1[i] - f0[i];
    }
    let d2 = rms_scaled(&df, y, rtol, atol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    Ok((100.0 * h0).min(h1))
}

fn radial_rate(y: &Y) -> f64 {
    // sign(dr/dt) = sign(x·p) as long as 1 − α²p²/2 > 0
    y[0] * y[3] + y[1] * y[4] + y[2] * y[5]
}

fn relative_change(value: f64, reference: f64, scale: f64) -> f64 {
    let denom = reference.abs().max(scale);
    if denom > 0.0 {
        (value - reference).abs() / denom
    } else {
        (value - reference).abs()
    }
}

struct DriftTracker {
    e0: f64,
    j0: f64,
    l20: f64,
    sl0: f64,
    s20: f64,
    sl_scale: f64,
    drift: Drift,
}

impl DriftTracker {
    fn new(first: &Sample) -> Self {
        let c = &first.conserved;
        let s2 = first.state.s.norm_squared();
        DriftTracker {
            e0: c.energy,
            j0: c.j.norm(),
            l20: c.l2,
            sl0: c.sl,
            s20: s2,
            sl_scale: (c.l2 * s2).sqrt(),
            drift: Drift::default(),
        }
    }

    fn update(&mut self, sample: &Sample) {
        let c = &sample.conserved;
        let d = &mut self.drift;
        d.energy = d.energy.max(relative_change(c.energy, self.e0, 0.0));
        d.j_norm = d.j_norm.max(relative_change(c.j.norm(), self.j0, 0.0));
        d.l2 = d.l2.max(relative_change(c.l2, self.l20, 0.0));
        d.sl = d.sl.max(relative_change(c.sl, self.sl0, self.sl_scale));
        d.s2 = d.s2.max(relative_change(sample.state.s.norm_squared(), self.s20, 0.0));
    }
}

fn make_sample(y: &Y, t: f64, params: &ModelParams) -> Result<Sample> {
    let (state, tau) = unpack(y, t);
    Ok(Sample {
        conserved: conserved_quantities(&state, params)?,
        state,
        tau,
    })
}

/// Kepler period of the state's energy, used to bound runs by time.
fn kepler_period_estimate(state: &PhaseState, params: &ModelParams) -> Result<f64> {
    let e = crate::model::hamiltonian(state, params)?;
    let a2 = params.alpha * params.alpha;
    if !(e < 0.0) {
        return Err(Error::NoBoundOrbit(format!("state energy {e:e} is not negative")));
    }
    Ok(2.0 * PI * (a2 / (-2.0 * e)).powf(1.5))
}

/// Radial amplitude below which an orbit counts as circular.
const CIRCULAR_AMPLITUDE: f64 = 1e-8;

struct Attempt {
    samples: Vec<Sample>,
    events: Vec<RadialEvent>,
    accepted: usize,
    rejected: usize,
    drift: Drift,
}

enum StopReason {
    Done,
    DriftBudget,
}

/// Location of an r-extremum inside the step `(y0, f0)` → `y1` of size `h`.
fn locate_event(
    y0: &Y,
    f0: &Y,
    t0: f64,
    h: f64,
    params: &ModelParams,
    mode: SpinMode,
) -> Result<(f64, Y)> {
    let g = |theta: f64| -> Result<f64> {
        if theta == 0.0 {
            return Ok(radial_rate(y0));
        }
        Ok(radial_rate(&dp5_step(y0, f0, theta * h, params, mode)?.y))
    };
    let theta = crate::numerics::find_root_bracketed(g, 0.0, 1.0, 4.0 * f64::EPSILON * (1.0 + t0.abs() / h.abs()), 0.0)?;
    let y = if theta == 0.0 {
        *y0
    } else {
        dp5_step(y0, f0, theta * h, params, mode)?.y
    };
    Ok((t0 + theta * h, y))
}

fn event_kind(g_before: f64, g_after: f64, direction: f64) -> ExtremumKind {
    if (g_after - g_before) * direction > 0.0 {
        ExtremumKind::Pericentre
    } else {
        ExtremumKind::Apocentre
    }
}

/// Appends `ev` unless it is the same kind as the last event or lies
/// within the circular amplitude of it.
fn push_event(events: &mut Vec<RadialEvent>, ev: RadialEvent) -> bool {
    if let Some(last) = events.last() {
        if last.kind == ev.kind || (ev.r - last.r).abs() <= CIRCULAR_AMPLITUDE * last.r {
            return false;
        }
    }
    events.push(ev);
    true
}

#[allow(clippy::too_many_arguments)]
fn run(
    state0: &PhaseState,
    tau0: f64,
    params: &ModelParams,
    config: &IntegratorConfig,
    horizon: Horizon,
    scale: f64,
    budget: Option<f64>,
) -> Result<(Attempt, StopReason)> {
    let rtol = config.rtol * scale;
    let atol = config.atol * scale;
    let t_start = state0.t;
    let r0 = checked_radius(&state0.x)?;
    let mut y = pack(state0, tau0);
    let mut t = t_start;
    let mut f = rhs(&y, params)?;

    let (direction, t_end, periods) = match horizon {
        Horizon::Until(te) => {
            if !te.is_finite() || te == t_start {
                return Err(Error::InvalidParameter(format!("horizon {te} must differ from the start time")));
            }
            ((te - t_start).signum(), te, None)
        }
        Horizon::RadialPeriods(n) => {
            if n == 0 {
                return Err(Error::InvalidParameter("radial period count must be positive".into()));
            }
            let tk = kepler_period_estimate(state0, params)?;
            (1.0, t_start + n as f64 * tk, Some(n))
        }
    };

    let first = make_sample(&y, t, params)?;
    let mut tracker = DriftTracker::new(&first);
    let mut samples = vec![first];
    let mut events: Vec<RadialEvent> = Vec::new();
    let mut pericentres_after_first = 0u32;
    let mut seen_pericentre = false;

    // an extremum exactly at the start
    let g_start = radial_rate(&y);
    let speed = (y[3] * y[3] + y[4] * y[4] + y[5] * y[5]).sqrt();
    if g_start.abs() <= 1e-12 * r0 * speed {
        let dg = {
            let (st, _) = unpack(&y, t);
            let d = eom_rhs(&st, params)?;
            d.dx.dot(&st.p) + st.x.dot(&d.dp)
        };
        let kind = if dg * direction > 0.0 {
            ExtremumKind::Pericentre
        } else {
            ExtremumKind::Apocentre
        };
        let (st, tau) = unpack(&y, t);
        events.push(RadialEvent { t, r: r0, kind, state: st, tau });
        seen_pericentre = kind == ExtremumKind::Pericentre;
    }

    let mut h = match config.method {
        Method::FixedStep { step } => step,
        Method::DormandPrince => config.initial_step.unwrap_or(initial_step(&y, &f, params, rtol, atol)?),
    };
    if let Some(hm) = config.max_step {
        h = h.min(hm);
    }
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    // with a period horizon t_end is only a fallback for orbits without events
    let mut passed_estimate = false;

    loop {
        if accepted + rejected >= config.max_steps {
            return Err(Error::MaxSteps(config.max_steps));
        }
        let t_scale = 1e-14 * t.abs().max(1.0);
        let remaining = (t_end - t) * direction;
        let mut step = h;
        if remaining > t_scale && remaining < step {
            step = remaining;
        }
        if step <= t_scale {
            return Err(Error::StepUnderflow { t, h: step });
        }
        let signed = step * direction;
        let trial = dp5_step(&y, &f, signed, params, config.spin_mode);
        let trial = match trial {
            Ok(s) => s,
            Err(Error::Singularity(_)) if matches!(config.method, Method::DormandPrince) => {
                rejected += 1;
                h *= 0.25;
                continue;
            }
            Err(e) => return Err(e),
        };
        let (accept, factor) = match config.method {
            Method::FixedStep { .. } => (true, 1.0),
            Method::DormandPrince => {
                let en = error_norm(&trial.err, &y, &trial.y, rtol, atol);
                let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
                (en <= 1.0, factor)
            }
        };
        if !accept {
            rejected += 1;
            h = step * factor.min(1.0);
            continue;
        }
        accepted += 1;
        let g0 = radial_rate(&y);
        let g1 = radial_rate(&trial.y);
        let mut stop_at: Option<(f64, Y)> = None;
        if g0 != 0.0 && g1 != 0.0 && g0.signum() != g1.signum() {
            let (te, ye) = locate_event(&y, &f, t, signed, params, config.spin_mode)?;
            let (st, tau) = unpack(&ye, te);
            let kind = event_kind(g0, g1, direction);
            let pushed = push_event(&mut events, RadialEvent { t: te, r: st.x.norm(), kind, state: st, tau });
            if pushed && kind == ExtremumKind::Pericentre {
                if seen_pericentre {
                    pericentres_after_first += 1;
                } else {
                    seen_pericentre = true;
                }
                if let Some(n) = periods {
                    if pericentres_after_first >= n {
                        stop_at = Some((te, ye));
                    }
                }
            }
        }
        let (t_new, y_new, f_new) = match stop_at {
            Some((te, ye)) => (te, ye, rhs(&ye, params)?),
            None => (t + signed, trial.y, trial.f_end),
        };
        let r_new = (y_new[0] * y_new[0] + y_new[1] * y_new[1] + y_new[2] * y_new[2]).sqrt();
        if r_new < config.capture_ratio * r0 {
            return Err(Error::Capture { t: t_new, r: r_new });
        }
        let sample = make_sample(&y_new, t_new, params)?;
        tracker.update(&sample);
        samples.push(sample);
        y = y_new;
        t = t_new;
        f = f_new;
        if let Some(b) = budget {
            if tracker.drift.max() > b {
                return Ok((
                    Attempt { samples, events, accepted, rejected, drift: tracker.drift },
                    StopReason::DriftBudget,
                ));
            }
        }
        if stop_at.is_some() {
            break;
        }
        if (t_end - t) * direction <= 1e-14 * t.abs().max(1.0) {
            passed_estimate = true;
        }
        if passed_estimate {
            match periods {
                None => break,
                // no radial motion: the time estimate is the horizon
                Some(_) if !has_radial_motion(&events) => break,
                Some(n) => {
                    // eccentric orbits keep going to the n-th pericentre, with a hard cap
                    if (t - t_start) * direction > (n as f64 + 2.0) * 1.5 * (t_end - t_start).abs() / n as f64 {
                        return Err(Error::InsufficientEvents {
                            need: n as usize,
                            found: pericentres_after_first as usize,
                        });
                    }
                }
            }
        }
        h = match config.method {
            Method::FixedStep { step } => step,
            Method::DormandPrince => step * factor,
        };
        if let Some(hm) = config.max_step {
            h = h.min(hm);
        }
    }

    let r_lo = samples.iter().map(|s| s.state.x.norm()).fold(f64::INFINITY, f64::min);
    let r_hi = samples.iter().map(|s| s.state.x.norm()).fold(0.0, f64::max);
    if r_hi - r_lo <= CIRCULAR_AMPLITUDE * r_hi {
        events.clear();
    }
    Ok((
        Attempt { samples, events, accepted, rejected, drift: tracker.drift },
        StopReason::Done,
    ))
}

fn has_radial_motion(events: &[RadialEvent]) -> bool {
    events.iter().any(|e| e.kind == ExtremumKind::Apocentre) && events.len() >= 2
}

/// Integrates from `state0` to `horizon`. With the adaptive method the
/// drift of E, |J|, L², (s,L) and |s|² is held below ten times `rtol`; the
/// local tolerance is tightened up to a thousandfold before giving up.
pub fn integrate(
    state0: &PhaseState,
    params: &ModelParams,
    config: &IntegratorConfig,
    horizon: Horizon,
) -> Result<Trajectory> {
    integrate_from(state0, 0.0, params, config, horizon)
}

/// As [`integrate`], continuing the precession phase `tau0`.
pub fn integrate_from(
    state0: &PhaseState,
    tau0: f64,
    params: &ModelParams,
    config: &IntegratorConfig,
    horizon: Horizon,
) -> Result<Trajectory> {
    params.validate()?;
    config.validate()?;
    let adaptive = matches!(config.method, Method::DormandPrince);
    let budget = (adaptive && config.enforce_drift).then_some(10.0 * config.rtol);
    let scales: &[f64] = if budget.is_some() { &[1.0, 0.1, 0.01, 0.001] } else { &[1.0] };
    let mut last_drift = Drift::default();
    for &scale in scales {
        let (attempt, reason) = run(state0, tau0, params, config, horizon, scale, budget)?;
        match reason {
            StopReason::Done => {
                return Ok(Trajectory {
                    params: *params,
                    samples: attempt.samples,
                    events: attempt.events,
                    diagnostics: StepDiagnostics {
                        accepted: attempt.accepted,
                        rejected: attempt.rejected,
                        drift: attempt.drift,
                        tolerance_scale: scale,
                    },
                });
            }
            StopReason::DriftBudget => last_drift = attempt.drift,
        }
    }
    let (quantity, drift) = last_drift.worst();
    Err(Error::DriftExceeded {
        quantity,
        drift,
        budget: budget.unwrap_or(0.0),
    })
}

/// Radial extremum found from the stored samples alone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialExtremum {
    pub t: f64,
    pub r: f64,
    pub kind: ExtremumKind,
}

fn radial_velocity(sample: &Sample, params: &ModelParams) -> Result<f64> {
    let d = eom_rhs(&sample.state, params)?;
    Ok(sample.state.x.dot(&d.dx) / sample.state.x.norm())
}

/// Root of the parabola through three points inside `[lo, hi]`.
fn parabola_root(t: [f64; 3], v: [f64; 3], lo: f64, hi: f64) -> Option<f64> {
    // Newton form: v0 + d1 (x − t0) + d2 (x − t0)(x − t1)
    let d01 = (v[1] - v[0]) / (t[1] - t[0]);
    let d12 = (v[2] - v[1]) / (t[2] - t[1]);
    let d2 = (d12 - d01) / (t[2] - t[0]);
    // in powers of u = x − t1: a u² + b u + c
    let a = d2;
    let b = d01 + d2 * (t[1] - t[0]);
    let c = v[1];
    let (a_lo, a_hi) = (lo.min(hi), lo.max(hi));
    let inside = |u: f64| {
        let x = t[1] + u;
        (x >= a_lo && x <= a_hi).then_some(x)
    };
    if a.abs() < 1e-300 || (a * c / (b * b)).abs() < 1e-12 {
        return if b != 0.0 { inside(-c / b) } else { None };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let roots = [q / a, c / q];
    roots.into_iter().find_map(inside)
}

/// Extrema of r(t) from sign changes of dr/dt between samples, refined by
/// a parabola through three neighbouring values of dr/dt. Orbits whose
/// radial range is below 1e-8·r have no extrema.
pub fn detect_radial_extrema(trajectory: &Trajectory) -> Result<Vec<RadialExtremum>> {
    let samples = &trajectory.samples;
    if samples.len() < 3 {
        return Err(Error::InsufficientEvents { need: 3, found: samples.len() });
    }
    let radii: Vec<f64> = samples.iter().map(|s| s.state.x.norm()).collect();
    let r_lo = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let r_hi = radii.iter().cloned().fold(0.0, f64::max);
    if r_hi - r_lo <= CIRCULAR_AMPLITUDE * r_hi {
        return Ok(Vec::new());
    }
    let rdot: Vec<f64> = samples
        .iter()
        .map(|s| radial_velocity(s, &trajectory.params))
        .collect::<Result<_>>()?;
    let times: Vec<f64> = samples.iter().map(|s| s.state.t).collect();
    let direction = (times[times.len() - 1] - times[0]).signum();
    let mut out: Vec<RadialExtremum> = Vec::new();
    for k in 0..samples.len() - 1 {
        let (v0, v1) = (rdot[k], rdot[k + 1]);
        if !(v0 != 0.0 && v1 != 0.0 && v0.signum() != v1.signum()) {
            continue;
        }
        let i = if k == 0 { 0 } else if k + 2 < samples.len() && v0.abs() > v1.abs() { k } else { k - 1 };
        let i = i.min(samples.len() - 3);
        let tt = [times[i], times[i + 1], times[i + 2]];
        let vv = [rdot[i], rdot[i + 1], rdot[i + 2]];
        let te = parabola_root(tt, vv, times[k], times[k + 1])
            .unwrap_or_else(|| times[k] - v0 * (times[k + 1] - times[k]) / (v1 - v0));
        // cubic Hermite for r on [t_k, t_k+1]
        let hstep = times[k + 1] - times[k];
        let u = (te - times[k]) / hstep;
        let (h00, h10, h01, h11) = (
            2.0 * u.powi(3) - 3.0 * u * u + 1.0,
            u.powi(3) - 2.0 * u * u + u,
            -2.0 * u.powi(3) + 3.0 * u * u,
            u.powi(3) - u * u,
        );
        let r = h00 * radii[k] + h10 * hstep * v0 + h01 * radii[k + 1] + h11 * hstep * v1;
        let kind = if (v1 - v0) * direction > 0.0 {
            ExtremumKind::Pericentre
        } else {
            ExtremumKind::Apocentre
        };
        if let Some(last) = out.last() {
            if last.kind == kind || (r - last.r).abs() <= CIRCULAR_AMPLITUDE * last.r {
                continue;
            }
        }
        out.push(RadialExtremum { t: te, r, kind });
    }
    Ok(out)
}

/// Apse and plane precession measured on a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Precessions {
    /// Mean advance of the pericentre per radial period in the frame where
    /// the orbit is planar.
    pub dphi_a: f64,
    /// Mean rotation of L about J per radial period.
    pub dphi_j: f64,
    /// `dphi_a / dphi_j`; absent when the plane does not precess.
    pub ratio: Option<f64>,
    pub mean_period: f64,
    pub periods: usize,
    /// Apse advance accumulated over all measured periods.
    pub total_apse: f64,
    /// Plane rotation accumulated over all measured periods.
    pub total_plane: f64,
}

/// Orthonormal pair spanning the plane perpendicular to `axis`.
pub fn perpendicular_basis(axis: &Vec3) -> (Vec3, Vec3) {
    let n = axis.normalize();
    let trial = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = (trial - n * n.dot(&trial)).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    } else if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Measures apse and plane precession between successive pericentres.
///
/// The plane angle ψ is the azimuth of L about J. The pericentre direction
/// is mapped into the frame that rotates with angular velocity `c·s`, in
/// which L is fixed and the orbit is planar: rotate by −ψ about J, then by
/// `|L|·τ` about the initial L, and read the angle in the plane normal to it.
pub fn measure_precessions(trajectory: &Trajectory) -> Result<Precessions> {
    let params = &trajectory.params;
    if !params.toggles.spin_orbit {
        return Err(Error::InvalidParameter("precession measurement needs the spin-orbit term".into()));
    }
    let peri: Vec<&RadialEvent> = trajectory.pericentres().collect();
    if peri.len() < 3 {
        return Err(Error::InsufficientEvents { need: 3, found: peri.len() });
    }
    let first = trajectory.first();
    let j_vec = first.conserved.j;
    let j_hat = Unit::new_normalize(j_vec);
    let (je1, je2) = perpendicular_basis(&j_vec);
    let l0 = first.state.angular_momentum();
    let l_norm = l0.norm();
    let l0_hat = Unit::new_normalize(l0);
    let (le1, le2) = perpendicular_basis(&l0);

    let azimuth = |l: &Vec3| -> Option<f64> {
        let perp = l - j_hat.into_inner() * l.dot(&j_hat);
        if perp.norm() <= 1e-9 * l.norm() {
            None
        } else {
            Some(perp.dot(&je2).atan2(perp.dot(&je1)))
        }
    };
    let psi_start = azimuth(&l0);
    let mut psi_prev: Option<f64> = None;
    let mut psi_unwrapped = Vec::with_capacity(peri.len());
    let mut apse = Vec::with_capacity(peri.len());
    for ev in &peri {
        let l = ev.state.angular_momentum();
        let psi = match (azimuth(&l), psi_start) {
            (Some(a), Some(a0)) => {
                let raw = wrap_angle(a - a0);
                match psi_prev {
                    Some(prev) => prev + wrap_angle(raw - prev),
                    None => raw,
                }
            }
            // L along J: the plane angle is the accumulated phase
            _ => j_vec.norm() * (ev.tau - first.tau),
        };
        psi_prev = Some(psi);
        psi_unwrapped.push(psi);
        let chi = l_norm * (ev.tau - first.tau);
        let to_plane_frame = Rotation3::from_axis_angle(&l0_hat, chi) * Rotation3::from_axis_angle(&j_hat, -psi);
        let xs = to_plane_frame * ev.state.x;
        apse.push(xs.dot(&le2).atan2(xs.dot(&le1)));
    }
    let periods = peri.len() - 1;
    let total_apse: f64 = apse.windows(2).map(|w| wrap_angle(w[1] - w[0])).sum();
    let total_plane = psi_unwrapped[periods] - psi_unwrapped[0];
    let dphi_a = total_apse / periods as f64;
    let dphi_j = total_plane / periods as f64;
    let ratio = (dphi_j.abs() > 1e-14).then(|| dphi_a / dphi_j);
    Ok(Precessions {
        dphi_a,
        dphi_j,
        ratio,
        mean_period: (peri[periods].t - peri[0].t) / periods as f64,
        periods,
        total_apse,
        total_plane,
    })
}

/// Free phases of an initial state: azimuth of J about the lab z-axis,
/// azimuth of L about J and the particle's angle in the orbital plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub j_azimuth: f64,
    pub l_azimuth: f64,
    pub in_plane: f64,
}

impl Orientation {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Orientation {
            j_azimuth: rng.random_range(0.0..2.0 * PI),
            l_azimuth: rng.random_range(0.0..2.0 * PI),
            in_plane: rng.random_range(0.0..2.0 * PI),
        }
    }
}

/// Phase-space point with the quantized norms of `qn`: |L| = ℓ,
/// |s|² = s(s+1), |J| = j with J_z = m, placed at the pericentre of the
/// radial motion at the Bohr–Sommerfeld energy with tangential momentum.
/// Circular states (n_r = 0) start on the circular radius.
pub fn build_initial_state(qn: &QuantumNumbers, params: &ModelParams, orientation: &Orientation) -> Result<PhaseState> {
    let qn = validate_quantum_numbers(*qn)?;
    params.check_spin(&qn)?;
    let ell = qn.ell as f64;
    let j = qn.j.value();
    let s2 = params.spin_norm_squared();
    let sl = qn.spin_orbit();
    let gamma = gamma_angle(j * j, ell * ell, s2)?;

    let theta = (qn.m.value() / j).clamp(-1.0, 1.0).acos();
    let phi = orientation.j_azimuth;
    let j_hat = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
    let e1 = Vec3::new(theta.cos() * phi.cos(), theta.cos() * phi.sin(), -theta.sin());
    let e2 = Vec3::new(-phi.sin(), phi.cos(), 0.0);
    let psi = orientation.l_azimuth;
    let l_hat = gamma.cos() * j_hat + gamma.sin() * (psi.cos() * e1 + psi.sin() * e2);
    let l_vec = ell * l_hat;
    let s_vec = j * j_hat - l_vec;

    let r0 = if qn.n_r == 0 {
        circular_energy(ell * ell, sl, params)?.radius
    } else {
        let e = solve_energy_bs(&qn, params)?;
        turning_points(&RadialProblem::new(e, ell * ell, sl, *params))?.r_min
    };
    let (u1, u2) = perpendicular_basis(&l_hat);
    let x_hat = orientation.in_plane.cos() * u1 + orientation.in_plane.sin() * u2;
    let x = r0 * x_hat;
    let p = (ell / r0) * l_hat.cross(&x_hat);
    Ok(PhaseState::new(x, p, s_vec))
}
