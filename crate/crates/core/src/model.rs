//! Domain types of the spinning-particle Coulomb problem and the scalar
//! quantities evaluated on them.
//!
//! Units: distances in Bohr radii, momenta in units of the first Bohr-orbit
//! momentum, spin in units of ħ and energies in units of the rest energy.
//! In these units the Hamiltonian reads
//!
//! ```text
//! H = α²p²/2 − α⁴p⁴/8 − α²/r + ((g−1)/2)(α⁴/r³)(s·L),   L = x × p.
//! ```

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// CODATA 2018 value of the fine-structure constant.
pub const ALPHA_CODATA_2018: f64 = 0.0072973525693;

/// Absolute slack allowed on an arccos argument before a triangle is
/// declared infeasible.
pub const ARCCOS_TOLERANCE: f64 = 1e-12;

/// A (half-)integer stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct HalfInt(i64);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);
    pub const HALF: HalfInt = HalfInt(1);

    pub const fn from_twice(twice: i64) -> Self {
        HalfInt(twice)
    }

    pub const fn from_int(n: i64) -> Self {
        HalfInt(2 * n)
    }

    pub const fn twice(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    pub fn to_ratio(self) -> Ratio<i64> {
        Ratio::new(self.0, 2)
    }

    /// Converts a float that is an exact multiple of one half.
    pub fn from_f64(v: f64) -> Option<Self> {
        let twice = 2.0 * v;
        if !twice.is_finite() || (twice - twice.round()).abs() > 1e-9 || twice.abs() > 1e15 {
            return None;
        }
        Some(HalfInt(twice.round() as i64))
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl FromStr for HalfInt {
    type Err = Error;

    /// Accepts decimals (`"2.5"`) and fractions (`"5/2"`).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("'{s}' is not an integer or half-integer"));
        let s = s.trim();
        if let Some((num, den)) = s.split_once('/') {
            let num: i64 = num.trim().parse().map_err(|_| bad())?;
            let den: i64 = den.trim().parse().map_err(|_| bad())?;
            return match den {
                1 => Ok(HalfInt(2 * num)),
                2 => Ok(HalfInt(num)),
                _ => Err(bad()),
            };
        }
        let v: f64 = s.parse().map_err(|_| bad())?;
        HalfInt::from_f64(v).ok_or_else(bad)
    }
}

impl Serialize for HalfInt {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for HalfInt {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(deserializer)?;
        HalfInt::from_f64(v)
            .ok_or_else(|| serde::de::Error::custom(format!("{v} is not a half-integer")))
    }
}

/// Switches for the two relativistic terms of the Hamiltonian. Turning both
/// off leaves the Kepler problem, which the oracle tests rely on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Toggles {
    pub p4: bool,
    pub spin_orbit: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles {
            p4: true,
            spin_orbit: true,
        }
    }
}

impl Toggles {
    pub const KEPLER: Toggles = Toggles {
        p4: false,
        spin_orbit: false,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub g_factor: f64,
    pub spin: f64,
    pub toggles: Toggles,
}

impl ModelParams {
    pub fn new(alpha: f64, g_factor: f64, spin: f64) -> Result<Self> {
        Self::with_toggles(alpha, g_factor, spin, Toggles::default())
    }

    pub fn with_toggles(alpha: f64, g_factor: f64, spin: f64, toggles: Toggles) -> Result<Self> {
        let params = ModelParams {
            alpha,
            g_factor,
            spin,
            toggles,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.spin >= 0.0 && self.spin.is_finite()) {
            return Err(Error::InvalidParameter(format!("spin must be >= 0, got {}", self.spin)));
        }
        if !self.g_factor.is_finite() {
            return Err(Error::InvalidParameter("g-factor must be finite".into()));
        }
        Ok(())
    }

    /// Effective (g−1)/2 prefactor of the spin–orbit term, zero when toggled off.
    pub fn so_prefactor(&self) -> f64 {
        if self.toggles.spin_orbit {
            (self.g_factor - 1.0) / 2.0
        } else {
            0.0
        }
    }

    /// Effective g−1, zero when the spin–orbit term is toggled off.
    pub fn g_minus_one(&self) -> f64 {
        2.0 * self.so_prefactor()
    }

    pub fn p4_factor(&self) -> f64 {
        if self.toggles.p4 {
            1.0
        } else {
            0.0
        }
    }

    pub fn spin_norm_squared(&self) -> f64 {
        self.spin * (self.spin + 1.0)
    }

    /// Requires the spin carried by `qn` to match this parameter set.
    pub fn check_spin(&self, qn: &QuantumNumbers) -> Result<()> {
        if (self.spin - qn.s.value()).abs() > 1e-12 {
            return Err(Error::SpinMismatch {
                qn: qn.s.value(),
                params: self.spin,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: Vec3,
    pub p: Vec3,
    pub s: Vec3,
    pub t: f64,
}

impl PhaseState {
    pub fn new(x: Vec3, p: Vec3, s: Vec3) -> Self {
        PhaseState { x, p, s, t: 0.0 }
    }

    pub fn r(&self) -> f64 {
        self.x.norm()
    }

    pub fn angular_momentum(&self) -> Vec3 {
        self.x.cross(&self.p)
    }

    pub fn total_angular_momentum(&self) -> Vec3 {
        self.angular_momentum() + self.s
    }
}

/// Quantum numbers of a quasi-classical state. `s` duplicates the spin of
/// the model parameters so the quantization formulas can run without a
/// phase state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantumNumbers {
    pub n_r: u32,
    pub ell: u32,
    pub j: HalfInt,
    pub m: HalfInt,
    pub s: HalfInt,
}

impl QuantumNumbers {
    pub fn new(n_r: u32, ell: u32, j: HalfInt, m: HalfInt, s: HalfInt) -> Self {
        QuantumNumbers { n_r, ell, j, m, s }
    }

    /// Principal quantum number n = n_r + ℓ.
    pub fn n(&self) -> u32 {
        self.n_r + self.ell
    }

    /// Exact (s·L) = (j² − ℓ² − s(s+1))/2.
    pub fn spin_orbit_exact(&self) -> Ratio<i64> {
        let j = self.j.to_ratio();
        let s = self.s.to_ratio();
        let ell = Ratio::from_integer(self.ell as i64);
        (j * j - ell * ell - s * (s + 1)) / 2
    }

    pub fn spin_orbit(&self) -> f64 {
        spin_orbit_product(self.j.value(), self.ell as f64, self.s.value())
    }
}

impl fmt::Display for QuantumNumbers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(n_r={}, l={}, j={}, m={}, s={})",
            self.n_r, self.ell, self.j, self.m, self.s
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservedSet {
    pub energy: f64,
    pub j: Vec3,
    pub l2: f64,
    pub sl: f64,
    pub gamma: f64,
}

fn reject(rule: &'static str, detail: String) -> Result<QuantumNumbers> {
    Err(Error::InvalidQuantumNumbers { rule, detail })
}

/// Checks the quasi-classical selection rules and returns `qn` unchanged
/// when all of them hold. The first violated rule is reported by name.
pub fn validate_quantum_numbers(qn: QuantumNumbers) -> Result<QuantumNumbers> {
    let (j2, m2, s2) = (qn.j.twice(), qn.m.twice(), qn.s.twice());
    let l2 = 2 * qn.ell as i64;
    if s2 < 0 {
        return reject("spin_non_negative", format!("s = {}", qn.s));
    }
    if qn.ell < 1 {
        return reject("ell_positive", "l must be at least 1".into());
    }
    if (j2 - l2 - s2) % 2 != 0 {
        return reject(
            "j_spin_parity",
            format!("j - l = {} does not differ from s = {} by an integer", HalfInt(j2 - l2), qn.s),
        );
    }
    if j2 > l2 + s2 {
        return reject(
            "j_upper_bound",
            format!("j = {} exceeds l + s = {}", qn.j, HalfInt(l2 + s2)),
        );
    }
    let lower = l2 - s2.min(l2);
    if j2 < lower {
        return reject(
            "j_lower_bound",
            format!("j = {} is below l - min(s, l) = {}", qn.j, HalfInt(lower)),
        );
    }
    if (m2 - j2) % 2 != 0 {
        return reject("m_parity", format!("m = {} and j = {} differ by a half-integer", qn.m, qn.j));
    }
    if m2.abs() > j2 {
        return reject("m_range", format!("|m| = {} exceeds j = {}", HalfInt(m2.abs()), qn.j));
    }
    // |(s,L)| <= l·sqrt(s(s+1)), compared exactly on squares.
    let sl = qn.spin_orbit_exact();
    let s = qn.s.to_ratio();
    let ell = Ratio::from_integer(qn.ell as i64);
    if sl * sl > ell * ell * s * (s + 1) {
        return reject(
            "triangle",
            format!(
                "|(s,L)| = {} exceeds l*sqrt(s(s+1)) = {:.6}",
                sl,
                qn.ell as f64 * (qn.s.value() * (qn.s.value() + 1.0)).sqrt()
            ),
        );
    }
    Ok(qn)
}

/// Quantized (s·L) = (j² − ℓ² − s(s+1))/2.
pub fn spin_orbit_product(j: f64, ell: f64, s: f64) -> f64 {
    (j * j - ell * ell - s * (s + 1.0)) / 2.0
}

/// Angle between J and L of the triangle J = L + s with the given squared
/// norms.
pub fn gamma_angle(j2: f64, l2: f64, s2: f64) -> Result<f64> {
    if !(j2 > 0.0 && l2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma needs J^2 > 0 and L^2 > 0, got J^2={j2}, L^2={l2}"
        )));
    }
    let arg = (j2 + l2 - s2) / (2.0 * (j2 * l2).sqrt());
    if !arg.is_finite() || arg.abs() > 1.0 + ARCCOS_TOLERANCE {
        return Err(Error::InfeasibleTriangle(arg));
    }
    Ok(arg.clamp(-1.0, 1.0).acos())
}

fn radius_checked(x: &Vec3) -> Result<f64> {
    let r = x.norm();
    if r > 0.0 && r.is_finite() {
        Ok(r)
    } else {
        Err(Error::Singularity(r))
    }
}

pub fn hamiltonian(state: &PhaseState, params: &ModelParams) -> Result<f64> {
    let r = radius_checked(&state.x)?;
    let a2 = params.alpha * params.alpha;
    let p2 = state.p.norm_squared();
    let sl = state.s.dot(&state.angular_momentum());
    Ok(0.5 * a2 * p2 - params.p4_factor() * a2 * a2 * p2 * p2 / 8.0 - a2 / r
        + params.so_prefactor() * a2 * a2 / (r * r * r) * sl)
}

pub fn conserved_quantities(state: &PhaseState, params: &ModelParams) -> Result<ConservedSet> {
    let energy = hamiltonian(state, params)?;
    let l = state.angular_momentum();
    let j = l + state.s;
    let l2 = l.norm_squared();
    let j2 = j.norm_squared();
    let gamma = if j2 > 0.0 && l2 > 0.0 {
        gamma_angle(j2, l2, state.s.norm_squared())?
    } else {
        0.0
    };
    Ok(ConservedSet {
        energy,
        j,
        l2,
        sl: state.s.dot(&l),
        gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn h(twice: i64) -> HalfInt {
        HalfInt::from_twice(twice)
    }

    fn qn(n_r: u32, ell: u32, j2: i64, m2: i64, s2: i64) -> QuantumNumbers {
        QuantumNumbers::new(n_r, ell, h(j2), h(m2), h(s2))
    }

    fn rule_of(err: Error) -> &'static str {
        match err {
            Error::InvalidQuantumNumbers { rule, .. } => rule,
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn half_int_parse_and_display() {
        assert_eq!("5/2".parse::<HalfInt>().unwrap(), h(5));
        assert_eq!("2.5".parse::<HalfInt>().unwrap(), h(5));
        assert_eq!("-1/2".parse::<HalfInt>().unwrap(), h(-1));
        assert_eq!("3".parse::<HalfInt>().unwrap(), h(6));
        assert!("1/3".parse::<HalfInt>().is_err());
        assert!("0.3".parse::<HalfInt>().is_err());
        assert_eq!(h(5).to_string(), "5/2");
        assert_eq!(h(-4).to_string(), "-2");
    }

    #[test]
    fn validation_examples() {
        assert!(validate_quantum_numbers(qn(0, 1, 1, 1, 1)).is_ok());
        assert!(validate_quantum_numbers(qn(1, 2, 5, 1, 1)).is_ok());
        let err = validate_quantum_numbers(qn(0, 1, 5, 1, 1)).unwrap_err();
        assert_eq!(rule_of(err), "j_upper_bound");
    }

    #[test]
    fn validation_error_paths() {
        assert_eq!(rule_of(validate_quantum_numbers(qn(0, 0, 0, 0, 0)).unwrap_err()), "ell_positive");
        assert_eq!(rule_of(validate_quantum_numbers(qn(0, 1, 2, 0, 1)).unwrap_err()), "j_spin_parity");
        assert_eq!(rule_of(validate_quantum_numbers(qn(0, 3, 2, 0, 2)).unwrap_err()), "j_lower_bound");
        assert_eq!(rule_of(validate_quantum_numbers(qn(0, 1, 1, 0, 1)).unwrap_err()), "m_parity");
        assert_eq!(rule_of(validate_quantum_numbers(qn(0, 1, 1, 3, 1)).unwrap_err()), "m_range");
        // s = 1, l = 1, j = 0: |J| = 0 cannot close a triangle with |L| = 1, |s| = sqrt(2).
        assert_eq!(rule_of(validate_quantum_numbers(qn(0, 1, 0, 0, 2)).unwrap_err()), "triangle");
    }

    #[test]
    fn spin_orbit_examples() {
        assert_relative_eq!(spin_orbit_product(1.5, 1.0, 0.5), 0.25);
        assert_eq!(spin_orbit_product(3.0, 3.0, 0.0), 0.0);
        assert_relative_eq!(spin_orbit_product(2.5, 2.0, 0.5), 0.75);
        assert_eq!(qn(0, 2, 5, 1, 1).spin_orbit_exact(), Ratio::new(3, 4));
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_angle(4.0, 4.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(gamma_angle(2.25, 1.0, 0.75).unwrap(), (5.0f64 / 6.0).acos());
        assert_relative_eq!(gamma_angle(2.25, 1.0, 0.75).unwrap(), 0.58569, epsilon = 1e-5);
        assert_relative_eq!(gamma_angle(0.25, 1.0, 0.75).unwrap(), std::f64::consts::FRAC_PI_3, epsilon = 1e-15);
        // collinear, anti-parallel s: s^2 = (|J| - |L|)^2 with |J| > |L|
        assert_eq!(gamma_angle(9.0, 4.0, 1.0).unwrap(), 0.0);
        assert!(matches!(gamma_angle(0.25, 4.0, 0.0), Err(Error::InfeasibleTriangle(_))));
        assert!(gamma_angle(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn hamiltonian_examples() {
        let params = ModelParams::new(0.1, 2.0, 0.0).unwrap();
        let st = PhaseState::new(Vec3::x(), Vec3::y(), Vec3::zeros());
        assert_relative_eq!(hamiltonian(&st, &params).unwrap(), -0.0050125, epsilon = 1e-15);

        let far = PhaseState::new(Vec3::new(1e12, 0.0, 0.0), Vec3::zeros(), Vec3::zeros());
        assert!(hamiltonian(&far, &params).unwrap().abs() < 1e-13);

        let spin = 3f64.sqrt() / 2.0;
        let params = ModelParams::new(0.1, 2.0, 0.5).unwrap();
        let st = PhaseState::new(Vec3::x(), Vec3::y(), Vec3::new(0.0, 0.0, spin));
        let expected = -0.0050125 + 0.5 * 1e-4 * spin;
        assert_relative_eq!(hamiltonian(&st, &params).unwrap(), expected, epsilon = 1e-15);
        assert_relative_eq!(expected, -0.0049692, epsilon = 1e-7);

        let origin = PhaseState::new(Vec3::zeros(), Vec3::y(), Vec3::zeros());
        assert!(matches!(hamiltonian(&origin, &params), Err(Error::Singularity(_))));
    }

    #[test]
    fn kepler_toggles_give_kepler_hamiltonian() {
        let params = ModelParams::with_toggles(0.3, 2.0, 0.5, Toggles::KEPLER).unwrap();
        let st = PhaseState::new(Vec3::new(0.7, -1.2, 0.4), Vec3::new(0.3, 0.5, -0.8), Vec3::new(0.1, 0.2, 0.3));
        let a2 = 0.09;
        let kepler = a2 * st.p.norm_squared() / 2.0 - a2 / st.r();
        assert_relative_eq!(hamiltonian(&st, &params).unwrap(), kepler, epsilon = 1e-16);
    }

    #[test]
    fn conserved_examples() {
        let params = ModelParams::new(0.1, 2.0, 0.5).unwrap();
        let spin = 3f64.sqrt() / 2.0;
        let st = PhaseState::new(Vec3::x(), Vec3::y(), Vec3::new(0.0, 0.0, spin));
        let c = conserved_quantities(&st, &params).unwrap();
        assert_eq!(c.j, Vec3::new(0.0, 0.0, 1.0 + spin));
        assert_eq!(c.l2, 1.0);
        assert_relative_eq!(c.sl, spin);
        assert_eq!(c.j, st.angular_momentum() + st.s);

        let spinless = PhaseState::new(Vec3::new(2.0, 0.3, 0.0), Vec3::new(0.1, 0.6, 0.2), Vec3::zeros());
        let c = conserved_quantities(&spinless, &params).unwrap();
        assert_eq!(c.sl, 0.0);
        assert!(c.gamma.abs() < 1e-7);
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.0, 2.0, 0.5).is_err());
        assert!(ModelParams::new(0.1, 2.0, -0.5).is_err());
        let p = ModelParams::new(0.1, 2.0, 0.5).unwrap();
        assert!(matches!(p.check_spin(&qn(0, 1, 3, 1, 2)), Err(Error::SpinMismatch { .. })));
    }
}
