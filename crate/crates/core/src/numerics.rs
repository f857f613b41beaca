//! Small numerical kernels: Gauss–Legendre rules, real cubic roots, a
//! bracketed scalar root finder and a bracketed minimizer.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss–Legendre rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on P_n from the Chebyshev-like initial
    /// guesses, weights from P_n'.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Integrates `f` over [a, b].
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum();
        sum * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Roots of a x³ + b x² + c x + d with a ≠ 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CubicRoots {
    /// Three real roots in ascending order.
    Three([f64; 3]),
    /// One real root and a complex-conjugate pair `re ± i·im`.
    One { real: f64, re: f64, im: f64 },
}

/// Cardano/trigonometric solution followed by Newton polishing of every
/// real root.
pub fn cubic_roots(a: f64, b: f64, c: f64, d: f64) -> CubicRoots {
    assert!(a != 0.0, "leading coefficient must be non-zero");
    let (bn, cn, dn) = (b / a, c / a, d / a);
    // depressed cubic y³ + p y + q with x = y − bn/3
    let shift = bn / 3.0;
    let p = cn - bn * bn / 3.0;
    let q = 2.0 * bn * bn * bn / 27.0 - bn * cn / 3.0 + dn;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let polish = |mut x: f64| {
        for _ in 0..8 {
            let f = ((a * x + b) * x + c) * x + d;
            let df = (3.0 * a * x + 2.0 * b) * x + c;
            if df == 0.0 {
                break;
            }
            let dx = f / df;
            let next = x - dx;
            if !next.is_finite() {
                break;
            }
            x = next;
            if dx.abs() <= 1e-16 * x.abs() {
                break;
            }
        }
        x
    };
    if disc <= 0.0 && p < 0.0 {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        let mut roots = [0.0; 3];
        for (k, root) in roots.iter_mut().enumerate() {
            *root = polish(m * (theta - 2.0 * PI * k as f64 / 3.0).cos() - shift);
        }
        roots.sort_by(|x, y| x.partial_cmp(y).unwrap());
        CubicRoots::Three(roots)
    } else {
        let sq = disc.max(0.0).sqrt();
        let u = (-q / 2.0 + sq).cbrt();
        let v = (-q / 2.0 - sq).cbrt();
        let real = polish(u + v - shift);
        let re = -(u + v) / 2.0 - shift;
        let im = (u - v).abs() * 3f64.sqrt() / 2.0;
        CubicRoots::One { real, re, im }
    }
}

/// Root of `f` on a sign-changing bracket by the Illinois variant of
/// regula falsi, with bisection safeguarding. Stops when the bracket is
/// narrower than `abs_tol + rel_tol·|x|`.
pub fn find_root_bracketed(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    let mut flo = f(lo)?;
    let mut fhi = f(hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Bracketing(format!(
            "no sign change on [{lo:e}, {hi:e}] (f = {flo:e}, {fhi:e})"
        )));
    }
    let mut side = 0i32;
    for iter in 0..200 {
        let width = (hi - lo).abs();
        let x_mid = 0.5 * (lo + hi);
        if width <= abs_tol + rel_tol * x_mid.abs() {
            return Ok(x_mid);
        }
        let mut x = if iter % 4 == 3 {
            x_mid
        } else {
            (lo * fhi - hi * flo) / (fhi - flo)
        };
        if !x.is_finite() || x <= lo.min(hi) || x >= lo.max(hi) {
            x = x_mid;
        }
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Plain bisection on a sign-changing bracket to `rel_tol`.
pub fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, rel_tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= rel_tol * mid.abs() {
            return Some(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Golden-section minimization of a unimodal function on [lo, hi].
pub fn minimize_golden(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..300 {
        if (hi - lo).abs() <= rel_tol * (lo.abs() + hi.abs()) {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(64);
        let total: f64 = rule.weights.iter().sum();
        assert_relative_eq!(total, 2.0, epsilon = 1e-14);
        // degree 127 is the exactness limit; x^126 over [-1,1]
        assert_relative_eq!(rule.integrate(-1.0, 1.0, |x| x.powi(126)), 2.0 / 127.0, max_relative = 1e-12);
        let rule5 = GaussLegendre::new(5);
        assert_relative_eq!(rule5.integrate(0.0, 2.0, |x| x.powi(9)), 102.4, max_relative = 1e-13);
        assert_relative_eq!(rule.integrate(0.0, PI, f64::sin), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn cubic_three_real_roots() {
        // (x-1)(x-2)(x-3)
        match cubic_roots(1.0, -6.0, 11.0, -6.0) {
            CubicRoots::Three(r) => {
                assert_relative_eq!(r[0], 1.0, epsilon = 1e-14);
                assert_relative_eq!(r[1], 2.0, epsilon = 1e-14);
                assert_relative_eq!(r[2], 3.0, epsilon = 1e-14);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cubic_complex_pair() {
        // (x-2)(x^2+1)
        match cubic_roots(1.0, -2.0, 1.0, -2.0) {
            CubicRoots::One { real, re, im } => {
                assert_relative_eq!(real, 2.0, epsilon = 1e-14);
                assert!(re.abs() < 1e-12);
                assert_relative_eq!(im, 1.0, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn illinois_finds_root() {
        let root = find_root_bracketed(|x| Ok(x * x - 2.0), 0.0, 2.0, 0.0, 1e-15).unwrap();
        assert_relative_eq!(root, 2f64.sqrt(), epsilon = 1e-14);
        assert!(matches!(
            find_root_bracketed(|x| Ok(x * x + 1.0), 0.0, 2.0, 0.0, 1e-15),
            Err(Error::Bracketing(_))
        ));
    }

    #[test]
    fn golden_minimum() {
        let x = minimize_golden(|x| (x - 1.3).powi(2) + 4.0, 0.0, 3.0, 1e-12);
        // golden section resolves the minimiser to about sqrt(machine epsilon)
        assert_relative_eq!(x, 1.3, epsilon = 1e-7);
    }
}
