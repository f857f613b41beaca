//! Radial reduction in the frame co-rotating with the spin precession:
//! turning points, radial period, apse angle and the orbital-plane
//! precession per radial oscillation, in closed form and by quadrature.
//!
//! The quadratures integrate the radial bracket
//!
//! ```text
//! R(r) = 2(E + α²/r) + (E + α²/r)² − α²L²/r² − (g−1)α⁴(s·L)/r³ = P(r)/r³
//! ```
//!
//! between its two outer roots. With the cubic factored as
//! `P = a (r − r₁)(r − r_min)(r − r_max)` and `r = r̄ − Δ cos θ` the
//! inverse-square-root endpoint singularities cancel against `dr`, so a
//! fixed Gauss–Legendre rule in θ converges spectrally.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::{bisect, cubic_roots, CubicRoots, GaussLegendre};

/// Fixed node count of the θ-quadrature.
pub const QUADRATURE_NODES: usize = 64;

/// Largest imaginary part, relative to the real part, for which a complex
/// root pair is still read as a (circular) double root.
const DOUBLE_ROOT_TOLERANCE: f64 = 1e-6;

const ROOT_REL_TOL: f64 = 1e-13;

fn rule(n: usize) -> &'static GaussLegendre {
    static R64: OnceLock<GaussLegendre> = OnceLock::new();
    static R128: OnceLock<GaussLegendre> = OnceLock::new();
    match n {
        64 => R64.get_or_init(|| GaussLegendre::new(64)),
        128 => R128.get_or_init(|| GaussLegendre::new(128)),
        _ => panic!("unsupported rule size {n}"),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialProblem {
    pub energy: f64,
    pub l2: f64,
    pub sl: f64,
    pub params: ModelParams,
}

impl RadialProblem {
    pub fn new(energy: f64, l2: f64, sl: f64, params: ModelParams) -> Self {
        RadialProblem {
            energy,
            l2,
            sl,
            params,
        }
    }

    pub fn l(&self) -> f64 {
        self.l2.sqrt()
    }

    /// Coefficients `[a, b, c, d]` of `P(r) = r³ R(r)`.
    pub fn cubic(&self) -> [f64; 4] {
        let e = self.energy;
        let a2 = self.params.alpha * self.params.alpha;
        let p4 = self.params.p4_factor();
        [
            2.0 * e + p4 * e * e,
            2.0 * a2 + p4 * 2.0 * e * a2,
            p4 * a2 * a2 - a2 * self.l2,
            -self.params.g_minus_one() * a2 * a2 * self.sl,
        ]
    }

    fn cubic_at(&self, r: f64) -> f64 {
        let [a, b, c, d] = self.cubic();
        ((a * r + b) * r + c) * r + d
    }

    fn check_bound(&self) -> Result<()> {
        if !(self.energy < 0.0) {
            return Err(Error::NoBoundOrbit(format!("energy {} is not negative", self.energy)));
        }
        if !(self.l2 > 0.0) {
            return Err(Error::NoBoundOrbit(format!("L^2 = {} must be positive", self.l2)));
        }
        if !(self.cubic()[0] < 0.0) {
            return Err(Error::NoBoundOrbit("leading radial coefficient is not negative".into()));
        }
        Ok(())
    }

    /// Kepler turning radii (spin–orbit and p⁴ terms dropped), or the Kepler
    /// circular radius twice when the energy lies below the Kepler minimum.
    pub fn kepler_seeds(&self) -> (f64, f64) {
        let a2 = self.params.alpha * self.params.alpha;
        let e = self.energy;
        let disc = a2 * a2 + 2.0 * e * self.l2 * a2;
        if disc > 0.0 {
            ((a2 - disc.sqrt()) / (-2.0 * e), (a2 + disc.sqrt()) / (-2.0 * e))
        } else {
            let rc = a2 / (-2.0 * e);
            (rc, rc)
        }
    }
}

/// `(d'r/dt)²` of the radial reduction, i.e. `R(r)/α²`.
pub fn radial_speed_squared(r: f64, prob: &RadialProblem) -> f64 {
    let a2 = prob.params.alpha * prob.params.alpha;
    let w = prob.energy + a2 / r;
    let bracket = w + 0.5 * prob.params.p4_factor() * w * w - a2 * prob.l2 / (2.0 * r * r)
        - prob.params.so_prefactor() * a2 * a2 / (r * r * r) * prob.sl;
    2.0 / a2 * bracket
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurningPoints {
    pub r_min: f64,
    pub r_max: f64,
    /// Third root of the cubic. Spin–orbit scale; never a turning point.
    pub inner: f64,
    pub circular: bool,
}

impl TurningPoints {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.r_min + self.r_max)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.r_max - self.r_min)
    }
}

fn refine_root(prob: &RadialProblem, root: f64) -> f64 {
    let mut eps = 1e-12;
    while eps < 1e-3 {
        let lo = root * (1.0 - eps);
        let hi = root * (1.0 + eps);
        if prob.cubic_at(lo).signum() != prob.cubic_at(hi).signum() {
            return bisect(|r| prob.cubic_at(r), lo, hi, ROOT_REL_TOL).unwrap_or(root);
        }
        eps *= 10.0;
    }
    root
}

/// Positive root of P'(r) nearest `guess`: the location of a double root.
fn double_root_near(prob: &RadialProblem, guess: f64) -> f64 {
    let [a, b, c, _] = prob.cubic();
    let (qa, qb, qc) = (3.0 * a, 2.0 * b, c);
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return guess;
    }
    let sq = disc.sqrt();
    // numerically stable pair of quadratic roots
    let q = -0.5 * (qb + qb.signum() * sq);
    let mut best = guess;
    let mut best_dist = f64::INFINITY;
    for cand in [q / qa, qc / q] {
        if cand.is_finite() && cand > 0.0 && (cand - guess).abs() < best_dist {
            best = cand;
            best_dist = (cand - guess).abs();
        }
    }
    best
}

/// Bisection fallback between the Kepler seeds and the Kepler midpoint.
fn turning_points_from_seeds(prob: &RadialProblem) -> Result<TurningPoints> {
    let (lo_seed, hi_seed) = prob.kepler_seeds();
    let mid = 0.5 * (lo_seed + hi_seed);
    let f = |r: f64| prob.cubic_at(r);
    if f(mid) <= 0.0 {
        return Err(Error::NoBoundOrbit(
            "radial bracket is not positive between the Kepler seeds".into(),
        ));
    }
    let r_min = bisect(f, 0.5 * lo_seed, mid, ROOT_REL_TOL);
    let r_max = bisect(f, mid, 2.0 * hi_seed, ROOT_REL_TOL);
    match (r_min, r_max) {
        (Some(r_min), Some(r_max)) if r_min > 0.0 => Ok(TurningPoints {
            r_min,
            r_max,
            inner: 0.0,
            circular: false,
        }),
        _ => Err(Error::NoBoundOrbit("bisection from Kepler seeds failed".into())),
    }
}

pub fn turning_points(prob: &RadialProblem) -> Result<TurningPoints> {
    prob.check_bound()?;
    let [a, b, c, d] = prob.cubic();
    match cubic_roots(a, b, c, d) {
        CubicRoots::Three([r1, r2, r3]) => {
            if r2 <= 0.0 {
                return turning_points_from_seeds(prob);
            }
            let r_min = refine_root(prob, r2);
            let r_max = refine_root(prob, r3);
            let circular = r_max - r_min <= 1e-7 * r_max;
            if circular {
                let rc = double_root_near(prob, 0.5 * (r_min + r_max));
                return Ok(TurningPoints {
                    r_min: rc,
                    r_max: rc,
                    inner: r1,
                    circular,
                });
            }
            Ok(TurningPoints {
                r_min,
                r_max,
                inner: r1,
                circular,
            })
        }
        CubicRoots::One { real, re, im } => {
            if re > 0.0 && im <= DOUBLE_ROOT_TOLERANCE * re {
                let rc = double_root_near(prob, re);
                Ok(TurningPoints {
                    r_min: rc,
                    r_max: rc,
                    inner: real,
                    circular: true,
                })
            } else {
                Err(Error::NoBoundOrbit(format!(
                    "fewer than two positive turning points at E = {:e}",
                    prob.energy
                )))
            }
        }
    }
}

/// A fixed-rule quadrature value together with the gap to the rule of
/// twice the size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub value: f64,
    pub doubling_gap: f64,
}

/// Integrates `f(r, Δ sin θ) dθ` over [0, π] with `r = r̄ − Δ cos θ`.
fn theta_quadrature(tp: &TurningPoints, f: impl Fn(f64, f64) -> f64) -> Quadrature {
    let (mid, half) = (tp.midpoint(), tp.half_width());
    let eval = |n| {
        rule(n).integrate(0.0, PI, |theta| {
            let r = mid - half * theta.cos();
            f(r, half * theta.sin())
        })
    };
    let value = eval(QUADRATURE_NODES);
    let doubled = eval(2 * QUADRATURE_NODES);
    Quadrature {
        value,
        doubling_gap: (doubled - value).abs(),
    }
}

/// `√(r³ / (−a (r − r₁)))`: the smooth factor left of `α/√R` after the
/// turning-point factors cancel against `dr`.
fn inverse_sqrt_factor(prob: &RadialProblem, tp: &TurningPoints, r: f64) -> f64 {
    let a = prob.cubic()[0];
    (r * r * r / (-a * (r - tp.inner))).sqrt()
}

/// Closed-form radial period. The relativistic factor `1 + E/4` follows the
/// p⁴ toggle.
pub fn orbital_period(prob: &RadialProblem) -> Result<f64> {
    if !(prob.energy < 0.0) {
        return Err(Error::NoBoundOrbit(format!("energy {} is not negative", prob.energy)));
    }
    let alpha = prob.params.alpha;
    let e = prob.energy;
    Ok(PI * alpha.powi(3) / (-2.0 * e * e * e).sqrt() * (1.0 + prob.params.p4_factor() * e / 4.0))
}

/// `2 ∫ α dr / √R` between the turning points.
pub fn orbital_period_quadrature(prob: &RadialProblem) -> Result<Quadrature> {
    let tp = turning_points(prob)?;
    let alpha = prob.params.alpha;
    Ok(scaled(
        theta_quadrature(&tp, |r, _| alpha * inverse_sqrt_factor(prob, &tp, r)),
        2.0,
    ))
}

/// Radial period of the full equations of motion, `2π ∂I_r/∂(E/α²)`. It
/// carries the extra factor `1 + E + α²/r = ∂(α²p_r²/2)/∂E` that converts
/// `dr/p_r` into `dr/ṙ`.
pub fn orbital_period_dynamical(prob: &RadialProblem) -> Result<Quadrature> {
    let tp = turning_points(prob)?;
    let alpha = prob.params.alpha;
    let p4 = prob.params.p4_factor();
    let e = prob.energy;
    Ok(scaled(
        theta_quadrature(&tp, |r, _| {
            alpha * (1.0 + p4 * (e + alpha * alpha / r)) * inverse_sqrt_factor(prob, &tp, r)
        }),
        2.0,
    ))
}

/// Closed-form apse angle per radial oscillation. The `πα²/L²` term follows
/// the p⁴ toggle, the `(s·L)` term the spin–orbit toggle.
pub fn apse_angle(prob: &RadialProblem) -> f64 {
    let a2 = prob.params.alpha * prob.params.alpha;
    let l2 = prob.l2;
    2.0 * PI
        + PI * a2 / l2 * (prob.params.p4_factor() - 3.0 * prob.params.g_minus_one() * prob.sl / l2)
}

/// `2 ∫ α L r⁻² dr / √R` between the turning points.
pub fn apse_angle_quadrature(prob: &RadialProblem) -> Result<Quadrature> {
    let tp = turning_points(prob)?;
    let alpha = prob.params.alpha;
    let l = prob.l();
    Ok(scaled(
        theta_quadrature(&tp, |r, _| alpha * l / (r * r) * inverse_sqrt_factor(prob, &tp, r)),
        2.0,
    ))
}

/// `(1/2π) ∮ p_r dr` with `p_r = √R / α`.
pub fn radial_action(prob: &RadialProblem) -> Result<Quadrature> {
    let tp = turning_points(prob)?;
    let alpha = prob.params.alpha;
    let a = prob.cubic()[0];
    Ok(scaled(
        theta_quadrature(&tp, |r, w| {
            // √R dr = √(−a (r − r₁)/r³) · (Δ sin θ)² dθ
            (-a * (r - tp.inner) / (r * r * r)).sqrt() * w * w / alpha
        }),
        1.0 / PI,
    ))
}

fn scaled(q: Quadrature, factor: f64) -> Quadrature {
    Quadrature {
        value: q.value * factor,
        doubling_gap: q.doubling_gap * factor,
    }
}

/// Rotation of the orbital plane about J per radial oscillation,
/// `π (g−1) α² J / L³`.
pub fn plane_precession_angle(j: f64, l: f64, params: &ModelParams) -> f64 {
    PI * params.g_minus_one() * params.alpha * params.alpha * j / (l * l * l)
}

/// Ratio of apse-line to orbital-plane precession,
/// `(L/J)(1/(g−1) − 3(s·L)/L²)`.
pub fn precession_ratio(j: f64, l: f64, sl: f64, g: f64) -> Result<f64> {
    if g == 1.0 {
        return Err(Error::UndefinedRatio);
    }
    if !(j > 0.0 && l > 0.0) {
        return Err(Error::InvalidParameter(format!("ratio needs J, L > 0, got J={j}, L={l}")));
    }
    Ok(l / j * (1.0 / (g - 1.0) - 3.0 * sl / (l * l)))
}

/// Exact-rational form of [`precession_ratio`].
pub fn precession_ratio_exact(
    j: Ratio<i64>,
    l: Ratio<i64>,
    sl: Ratio<i64>,
    g: Ratio<i64>,
) -> Result<Ratio<i64>> {
    let one = Ratio::from_integer(1);
    if g == one {
        return Err(Error::UndefinedRatio);
    }
    if j <= Ratio::from_integer(0) || l <= Ratio::from_integer(0) {
        return Err(Error::InvalidParameter(format!("ratio needs J, L > 0, got J={j}, L={l}")));
    }
    Ok(l / j * (one / (g - one) - Ratio::from_integer(3) * sl / (l * l)))
}

/// Turning points, period, apse angle and plane precession of one bound
/// problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialGeometry {
    pub r_min: f64,
    pub r_max: f64,
    pub period: f64,
    pub phi: f64,
    pub dphi_a: f64,
    pub dphi_j: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    ClosedForm,
    Quadrature,
}

/// `j_norm` is |J|, needed for the plane precession.
pub fn radial_geometry(prob: &RadialProblem, j_norm: f64, how: Evaluation) -> Result<RadialGeometry> {
    let tp = turning_points(prob)?;
    let (period, phi) = match how {
        Evaluation::ClosedForm => (orbital_period(prob)?, apse_angle(prob)),
        Evaluation::Quadrature => (
            orbital_period_quadrature(prob)?.value,
            apse_angle_quadrature(prob)?.value,
        ),
    };
    Ok(RadialGeometry {
        r_min: tp.r_min,
        r_max: tp.r_max,
        period,
        phi,
        dphi_a: phi - 2.0 * PI,
        dphi_j: plane_precession_angle(j_norm, prob.l(), &prob.params),
    })
}
