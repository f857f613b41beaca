//! Bohr–Sommerfeld levels: the radial-action rule solved numerically, the
//! closed-form quasi-classical spectrum, the exact arbitrary-spin Coulomb
//! levels it is compared against, electron levels with the anomalous
//! moment, and the geometry of circular orbits.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, RadialProblem};
use crate::error::{Error, Result};
use crate::model::{gamma_angle, validate_quantum_numbers, HalfInt, ModelParams, QuantumNumbers};
use crate::numerics::find_root_bracketed;

/// `(1/2π) ∮ p_r dr` at energy `energy`.
pub fn radial_action(energy: f64, l2: f64, sl: f64, params: &ModelParams) -> Result<f64> {
    Ok(analytics::radial_action(&RadialProblem::new(energy, l2, sl, *params))?.value)
}

/// Circular orbit of the radial reduction: the minimum over r of the
/// energy at which `r` is a turning point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircularOrbit {
    pub radius: f64,
    pub energy: f64,
}

/// `w = E + α²/r` solving `R(r) = 0`, written without cancellation.
fn turning_energy_shift(v: f64, p4: f64) -> f64 {
    if p4 > 0.0 {
        v / (1.0 + (1.0 + v).sqrt())
    } else {
        v / 2.0
    }
}

pub fn circular_energy(l2: f64, sl: f64, params: &ModelParams) -> Result<CircularOrbit> {
    if !(l2 > 0.0) {
        return Err(Error::InvalidParameter(format!("L^2 = {l2} must be positive")));
    }
    let a2 = params.alpha * params.alpha;
    let k = params.g_minus_one() * a2 * a2 * sl;
    let p4 = params.p4_factor();
    let v = |r: f64| a2 * l2 / (r * r) + k / (r * r * r);
    let energy_at = |r: f64| turning_energy_shift(v(r), p4) - a2 / r;
    let slope = |r: f64| {
        let dv = -2.0 * a2 * l2 / (r * r * r) - 3.0 * k / (r * r * r * r);
        let dw = if p4 > 0.0 {
            dv / (2.0 * (1.0 + v(r)).sqrt())
        } else {
            dv / 2.0
        };
        Ok(dw + a2 / (r * r))
    };
    let radius = find_root_bracketed(slope, 0.5 * l2, 2.0 * l2, 0.0, 1e-15)
        .map_err(|e| Error::NoBoundOrbit(format!("no circular orbit near r = L^2: {e}")))?;
    Ok(CircularOrbit {
        radius,
        energy: energy_at(radius),
    })
}

/// Energy at which the radial action equals `n_r`, found by bracketed
/// regula falsi between the circular minimum and half the Bohr energy.
pub fn solve_energy_bs(qn: &QuantumNumbers, params: &ModelParams) -> Result<f64> {
    let qn = validate_quantum_numbers(*qn)?;
    params.check_spin(&qn)?;
    let l2 = (qn.ell as f64).powi(2);
    let sl = qn.spin_orbit();
    let circ = circular_energy(l2, sl, params)?;
    if qn.n_r == 0 {
        return Ok(circ.energy);
    }
    let n = qn.n() as f64;
    let bohr = -params.alpha * params.alpha / (2.0 * n * n);
    let target = qn.n_r as f64;
    let f = |e: f64| -> Result<f64> {
        if e <= circ.energy {
            return Ok(-target);
        }
        match radial_action(e, l2, sl, params) {
            Ok(action) => Ok(action - target),
            Err(Error::NoBoundOrbit(_)) => Ok(-target),
            Err(other) => Err(other),
        }
    };
    let mut lo = (1.5 * bohr).max(circ.energy);
    let mut hi = 0.5 * bohr;
    let mut widen = 0;
    while f(hi)? <= 0.0 {
        hi *= 0.5;
        widen += 1;
        if widen > 40 {
            return Err(Error::Bracketing(format!("no upper bracket for {qn}")));
        }
    }
    while f(lo)? > 0.0 {
        lo = 0.5 * (lo + circ.energy);
        widen += 1;
        if widen > 80 {
            return Err(Error::Bracketing(format!("no lower bracket for {qn}")));
        }
    }
    find_root_bracketed(f, lo, hi, 1e-15 * bohr.abs() * 1e-5, 1e-13)
}

/// α⁴ bracket of the quasi-classical spectrum,
/// `n/ℓ − 3/4 − (g−1) n (j² − ℓ² − s(s+1)) / (2ℓ³)`, honouring the toggles.
pub fn bs_bracket(qn: &QuantumNumbers, params: &ModelParams) -> f64 {
    let n = qn.n() as f64;
    let ell = qn.ell as f64;
    let x = 2.0 * qn.spin_orbit();
    params.p4_factor() * (n / ell - 0.75) - params.g_minus_one() * n * x / (2.0 * ell.powi(3))
}

pub fn energy_closed_form(qn: &QuantumNumbers, params: &ModelParams) -> f64 {
    let n = qn.n() as f64;
    let a2 = params.alpha * params.alpha;
    -a2 / (2.0 * n * n) - a2 * a2 / (2.0 * n.powi(4)) * bs_bracket(qn, params)
}

/// Spinless relativistic levels, `−α²/2n² − α⁴/(2n⁴)(n/ℓ − 3/4)`.
pub fn energy_sommerfeld(qn: &QuantumNumbers, alpha: f64) -> f64 {
    let n = qn.n() as f64;
    let a2 = alpha * alpha;
    -a2 / (2.0 * n * n) - a2 * a2 / (2.0 * n.powi(4)) * (n / qn.ell as f64 - 0.75)
}

/// `a^{sj}_μ = μ(2j−μ+1)(2s−μ+1)(2j+2s−μ+2) / ((2j+2s−2μ+1)(2j+2s−2μ+3))`.
pub fn fn_coefficient(s: f64, j: f64, mu: f64) -> Result<f64> {
    let den = (2.0 * j + 2.0 * s - 2.0 * mu + 1.0) * (2.0 * j + 2.0 * s - 2.0 * mu + 3.0);
    if den == 0.0 {
        return Err(Error::ZeroDenominator("fn_coefficient"));
    }
    Ok(mu * (2.0 * j - mu + 1.0) * (2.0 * s - mu + 1.0) * (2.0 * j + 2.0 * s - mu + 2.0) / den)
}

/// α⁴ bracket of the exact arbitrary-spin Coulomb levels.
pub fn fn_bracket(qn: &QuantumNumbers) -> Result<f64> {
    let s = qn.s.value();
    if !(s > 0.0) {
        return Err(Error::InvalidParameter("exact arbitrary-spin levels need s > 0".into()));
    }
    let n = qn.n() as f64;
    let ell = qn.ell as f64;
    let j = qn.j.value();
    let mu1 = j - ell + s;
    let a1 = fn_coefficient(s, j, mu1)?;
    let a2 = fn_coefficient(s, j, mu1 + 1.0)?;
    Ok(2.0 * n / (2.0 * ell + 1.0) - 0.75
        - n / (4.0 * s * s * (2.0 * ell + 1.0)) * (a1 / (ell + 1.0) - a2 / ell))
}

pub fn energy_fn(qn: &QuantumNumbers, params: &ModelParams) -> Result<f64> {
    let n = qn.n() as f64;
    let a2 = params.alpha * params.alpha;
    Ok(-a2 / (2.0 * n * n) - a2 * a2 / (2.0 * n.powi(4)) * fn_bracket(qn)?)
}

/// Standard spin-1/2 fine-structure bracket `n/(j+1/2) − 3/4`.
pub fn dirac_bracket(qn: &QuantumNumbers) -> f64 {
    qn.n() as f64 / (qn.j.value() + 0.5) - 0.75
}

pub fn energy_dirac(qn: &QuantumNumbers, alpha: f64) -> f64 {
    let n = qn.n() as f64;
    let a2 = alpha * alpha;
    -a2 / (2.0 * n * n) - a2 * a2 / (2.0 * n.powi(4)) * dirac_bracket(qn)
}

/// Electron levels with the anomalous moment folded into the spin–orbit
/// coupling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectronLevels {
    pub energy: f64,
    /// Anomalous-moment term of `energy`, α⁵ order for g − 2 = α/π.
    pub lamb_shift: f64,
    /// Large-quantum-number form.
    pub energy_asymptotic: f64,
    pub lamb_shift_asymptotic: f64,
    pub g_factor: f64,
}

/// `g` defaults to `2 + α/π`.
pub fn energy_electron(qn: &QuantumNumbers, alpha: f64, g: Option<f64>) -> Result<ElectronLevels> {
    if qn.s != HalfInt::HALF {
        return Err(Error::InvalidParameter(format!(
            "electron levels need s = 1/2, got s = {}",
            qn.s
        )));
    }
    let qn = validate_quantum_numbers(*qn)?;
    let g = g.unwrap_or(2.0 + alpha / PI);
    let n = qn.n() as f64;
    let ell = qn.ell as f64;
    let j = qn.j.value();
    let x = j * j - ell * ell - 0.75;
    let a2 = alpha * alpha;
    let a4 = a2 * a2;
    let bohr = -a2 / (2.0 * n * n);
    let lamb_shift = (g - 2.0) * a4 * x / (4.0 * n.powi(3) * ell.powi(3));
    let energy = bohr - a4 / (2.0 * n.powi(4)) * (n / ell - 0.75 - n * x / (2.0 * ell.powi(3))) + lamb_shift;
    let lamb_shift_asymptotic = (g - 2.0) * a4 * (j - ell) / (2.0 * n.powi(3) * ell * ell);
    let energy_asymptotic = bohr - a4 / (2.0 * n.powi(4)) * (n / j - 0.75) + lamb_shift_asymptotic;
    Ok(ElectronLevels {
        energy,
        lamb_shift,
        energy_asymptotic,
        lamb_shift_asymptotic,
        g_factor: g,
    })
}

fn require_circular(qn: &QuantumNumbers) -> Result<()> {
    if qn.n_r != 0 {
        return Err(Error::InvalidParameter(format!(
            "circular-orbit geometry needs n_r = 0, got {}",
            qn.n_r
        )));
    }
    Ok(())
}

/// Radius of the circular (n_r = 0) orbit to O(α²):
/// `ℓ² − α²/2 + (3α²(g−1)/4)(j² − ℓ² − s(s+1))/ℓ²`.
///
/// A repulsive spin–orbit core ((s·L) > 0) moves the orbit outwards.
pub fn circular_radius(qn: &QuantumNumbers, params: &ModelParams) -> Result<f64> {
    require_circular(qn)?;
    let ell2 = (qn.ell as f64).powi(2);
    let a2 = params.alpha * params.alpha;
    let x = 2.0 * qn.spin_orbit();
    Ok(ell2 - params.p4_factor() * a2 / 2.0 + 0.75 * a2 * params.g_minus_one() * x / ell2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentWidth {
    /// `2 r γ` with γ from the quantized norms.
    pub width: f64,
    /// `2ℓ √(s(s+1) − (j−ℓ)²)`.
    pub approximation: f64,
    pub gamma: f64,
}

pub fn segment_width(qn: &QuantumNumbers, params: &ModelParams) -> Result<SegmentWidth> {
    require_circular(qn)?;
    let r = circular_radius(qn, params)?;
    let ell = qn.ell as f64;
    let j = qn.j.value();
    let s = qn.s.value();
    let gamma = gamma_angle(j * j, ell * ell, s * (s + 1.0))?;
    let approximation = 2.0 * ell * (s * (s + 1.0) - (j - ell).powi(2)).max(0.0).sqrt();
    Ok(SegmentWidth {
        width: 2.0 * r * gamma,
        approximation,
        gamma,
    })
}

/// Which magnetic quantum numbers a spectrum table enumerates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MagneticRange {
    /// Only m = j (levels do not depend on m).
    #[default]
    Stretched,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantumRange {
    pub n_max: u32,
    pub s: HalfInt,
    pub magnetic: MagneticRange,
}

impl QuantumRange {
    /// Valid quantum numbers ordered by (n, ℓ, j, m).
    pub fn enumerate(&self) -> Vec<QuantumNumbers> {
        let mut out = Vec::new();
        let s2 = self.s.twice();
        for n in 1..=self.n_max {
            for ell in 1..=n {
                let l2 = 2 * ell as i64;
                let j_lo = (l2 - s2.min(l2)).max(0);
                for j2 in j_lo..=l2 + s2 {
                    let ms: Vec<i64> = match self.magnetic {
                        MagneticRange::Stretched => vec![j2],
                        MagneticRange::All => (-j2..=j2).step_by(2).collect(),
                    };
                    for m2 in ms {
                        let qn = QuantumNumbers::new(
                            n - ell,
                            ell,
                            HalfInt::from_twice(j2),
                            HalfInt::from_twice(m2),
                            self.s,
                        );
                        if validate_quantum_numbers(qn).is_ok() {
                            out.push(qn);
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDiffs {
    pub solved_minus_closed: Option<f64>,
    pub fn_minus_closed: Option<f64>,
    pub fn_minus_dirac: Option<f64>,
    pub electron_minus_closed: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub qn: QuantumNumbers,
    pub n: u32,
    pub e_bs_closed: f64,
    pub e_bs_solved: Option<f64>,
    pub e_sommerfeld: f64,
    pub e_fn: Option<f64>,
    pub e_dirac: Option<f64>,
    pub e_electron: Option<f64>,
    pub lamb_shift: Option<f64>,
    pub r_circ: Option<f64>,
    pub h_segment: Option<f64>,
    pub diffs: SpectrumDiffs,
    pub errors: Vec<String>,
}

fn keep<T>(errors: &mut Vec<String>, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(e.to_string());
            None
        }
    }
}

fn entry(qn: QuantumNumbers, params: &ModelParams, electron: bool) -> SpectrumEntry {
    let mut errors = Vec::new();
    let e_bs_closed = energy_closed_form(&qn, params);
    let e_bs_solved = keep(&mut errors, solve_energy_bs(&qn, params));
    let e_fn = if qn.s.twice() > 0 {
        keep(&mut errors, energy_fn(&qn, params))
    } else {
        None
    };
    let spin_half = qn.s == HalfInt::HALF;
    let e_dirac = spin_half.then(|| energy_dirac(&qn, params.alpha));
    let electron_levels = if electron && spin_half {
        keep(&mut errors, energy_electron(&qn, params.alpha, None))
    } else {
        None
    };
    let (r_circ, h_segment) = if qn.n_r == 0 {
        (
            keep(&mut errors, circular_radius(&qn, params)),
            keep(&mut errors, segment_width(&qn, params).map(|w| w.width)),
        )
    } else {
        (None, None)
    };
    let diffs = SpectrumDiffs {
        solved_minus_closed: e_bs_solved.map(|e| e - e_bs_closed),
        fn_minus_closed: e_fn.map(|e| e - e_bs_closed),
        fn_minus_dirac: e_fn.zip(e_dirac).map(|(a, b)| a - b),
        electron_minus_closed: electron_levels.map(|l| l.energy - e_bs_closed),
    };
    SpectrumEntry {
        qn,
        n: qn.n(),
        e_bs_closed,
        e_bs_solved,
        e_sommerfeld: energy_sommerfeld(&qn, params.alpha),
        e_fn,
        e_dirac,
        e_electron: electron_levels.map(|l| l.energy),
        lamb_shift: electron_levels.map(|l| l.lamb_shift),
        r_circ,
        h_segment,
        diffs,
        errors,
    }
}

/// One entry per valid quantum-number set of `range`, in (n, ℓ, j, m)
/// order. Failures are recorded per entry.
pub fn spectrum_table(range: &QuantumRange, params: &ModelParams, electron: bool) -> Result<Vec<SpectrumEntry>> {
    if (params.spin - range.s.value()).abs() > 1e-12 {
        return Err(Error::SpinMismatch {
            qn: range.s.value(),
            params: params.spin,
        });
    }
    if range.n_max == 0 {
        return Err(Error::Config("n-max must be at least 1".into()));
    }
    let qns = range.enumerate();
    Ok(qns.into_par_iter().map(|qn| entry(qn, params, electron)).collect())
}
