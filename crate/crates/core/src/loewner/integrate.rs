//! ODE integration of the radial, covering, and whole-plane Loewner equations.
//!
//! All four equations are integrated in the covering coordinate `w` with `∂_t w = cot((w - ξ(t))/2)`;
//! the radial map is `ψ = e^{iw}` and the whole-plane map is `φ = e^{iw}` (same vector field).

use num_complex::Complex64 as C64;

use super::path::DrivingPath;
use crate::error::{Error, Result};

/// Conservative stand-in for the absolute constant `C_H` in guard inequalities.
pub const C_H: f64 = 3.0;

/// Result of evolving one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Evolved {
    Value(C64),
    /// Absorbed by the hull at this time.
    Swallowed(f64),
}

impl Evolved {
    pub fn value(&self) -> Option<C64> {
        match self {
            Evolved::Value(v) => Some(*v),
            Evolved::Swallowed(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IntegratorOptions {
    pub dt_max: f64,
    /// Fixed RK4 steps of size `dt_max` when `false`.
    pub adaptive: bool,
    /// Local error tolerance per step.
    pub tol: f64,
    pub dt_min: f64,
    /// `|e^{iw} - e^{iξ}|` below this means swallowed.
    pub swallowed_tolerance: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions { dt_max: 0.05, adaptive: true, tol: 1e-12, dt_min: 1e-14, swallowed_tolerance: 1e-6 }
    }
}

#[inline]
fn cot_half(z: C64) -> C64 {
    let h = z * 0.5;
    h.cos() / h.sin()
}

#[inline]
fn rhs(w: C64, xi: f64) -> C64 {
    cot_half(w - xi)
}

fn rk4(w: C64, t: f64, h: f64, xi: &DrivingPath) -> C64 {
    let x0 = xi.eval(t);
    let xm = xi.eval(t + 0.5 * h);
    let x1 = xi.eval(t + h);
    let k1 = rhs(w, x0);
    let k2 = rhs(w + k1 * (0.5 * h), xm);
    let k3 = rhs(w + k2 * (0.5 * h), xm);
    let k4 = rhs(w + k3 * h, x1);
    w + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0)
}

#[inline]
fn near_singular(w: C64, xi: f64, tol: f64) -> bool {
    // |e^{iw} - e^{iξ}| with w reduced modulo 2π
    ((C64::new(0.0, 1.0) * w).exp() - C64::from_polar(1.0, xi)).norm() < tol
}

/// Integrates the covering flow from `t0` to `t1`, respecting the driving samples as step
/// boundaries.
pub fn cover_flow(xi: &DrivingPath, w0: C64, t0: f64, t1: f64, opts: &IntegratorOptions) -> Result<Evolved> {
    let mut w = w0;
    let mut t = t0;
    let mut knots: Vec<f64> = xi.times.iter().copied().filter(|&s| s > t0 && s < t1).collect();
    knots.push(t1);
    let mut h = opts.dt_max.min(t1 - t0);
    for &knot in &knots {
        while t < knot {
            if near_singular(w, xi.eval(t), opts.swallowed_tolerance) {
                return Ok(Evolved::Swallowed(t));
            }
            if !opts.adaptive {
                let step = opts.dt_max.min(knot - t);
                w = rk4(w, t, step, xi);
                t = if knot - t <= opts.dt_max { knot } else { t + step };
                continue;
            }
            let step = h.min(knot - t).min(opts.dt_max);
            let full = rk4(w, t, step, xi);
            let half = rk4(w, t, 0.5 * step, xi);
            let two = rk4(half, t + 0.5 * step, 0.5 * step, xi);
            let err = (two - full).norm() / 15.0;
            let scale = opts.tol * (1.0 + w.im.abs());
            if err <= scale || step <= opts.dt_min {
                if step <= opts.dt_min && err > scale {
                    if near_singular(two, xi.eval(t + step), opts.swallowed_tolerance.sqrt()) {
                        return Ok(Evolved::Swallowed(t));
                    }
                    return Err(Error::StepTooLarge { t });
                }
                w = two + (two - full) / 15.0;
                t = if knot - t <= step { knot } else { t + step };
                let grow = if err > 0.0 { 0.9 * (scale / err).powf(0.2) } else { 4.0 };
                h = step * grow.clamp(0.2, 4.0);
            } else {
                h = step * (0.9 * (scale / err).powf(0.2)).clamp(0.1, 0.9);
            }
            if !w.re.is_finite() || !w.im.is_finite() {
                return Ok(Evolved::Swallowed(t));
            }
        }
    }
    if near_singular(w, xi.eval(t1), opts.swallowed_tolerance) {
        return Ok(Evolved::Swallowed(t1));
    }
    Ok(Evolved::Value(w))
}

fn to_cover(z: C64) -> C64 {
    // w with e^{iw} = z
    C64::new(0.0, -1.0) * z.ln()
}

fn from_cover(w: C64) -> C64 {
    (C64::new(0.0, 1.0) * w).exp()
}

/// Radial Loewner flow `ψ_t` on the closed unit disk from `ψ_{t0}(z) = z`.
pub fn evolve_radial(xi: &DrivingPath, points: &[C64], opts: &IntegratorOptions) -> Result<Vec<Evolved>> {
    points
        .iter()
        .map(|&z| {
            if z.norm() == 0.0 {
                return Ok(Evolved::Value(z));
            }
            Ok(match cover_flow(xi, to_cover(z), xi.t0(), xi.t_end(), opts)? {
                Evolved::Value(w) => Evolved::Value(from_cover(w)),
                s => s,
            })
        })
        .collect()
}

/// Covering radial flow `ψ̃_t` on the closed upper half-plane from `ψ̃_{t0}(z) = z`.
pub fn evolve_covering_radial(xi: &DrivingPath, points: &[C64], opts: &IntegratorOptions) -> Result<Vec<Evolved>> {
    points.iter().map(|&z| cover_flow(xi, z, xi.t0(), xi.t_end(), opts)).collect()
}

/// Whole-plane flow `φ_t` initialized by `φ_{t0}(z) = e^{-t0} z`.
pub fn evolve_whole_plane(xi: &DrivingPath, points: &[C64], opts: &IntegratorOptions) -> Result<Vec<Evolved>> {
    let t0 = xi.t0();
    let min_abs = points.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if !((1.0 + C_H) * t0.exp() < min_abs / 2.0) {
        return Err(Error::TruncationTooLate { t_start: t0 });
    }
    points
        .iter()
        .map(|&z| {
            let w0 = to_cover(z * (-t0).exp());
            Ok(match cover_flow(xi, w0, t0, xi.t_end(), opts)? {
                Evolved::Value(w) => Evolved::Value(from_cover(w)),
                s => s,
            })
        })
        .collect()
}

/// Covering whole-plane flow `ψ̃_t` on the upper half-plane initialized by `ψ̃_{t0}(z) = z - i t0`.
pub fn evolve_covering_whole_plane(xi: &DrivingPath, points: &[C64], opts: &IntegratorOptions) -> Result<Vec<Evolved>> {
    let t0 = xi.t0();
    for &z in points {
        let g = 4.0 * (1.0 + C_H) * t0.exp() * (-z.im).exp();
        if !(g <= 0.5) {
            return Err(Error::TruncationTooLate { t_start: t0 });
        }
    }
    points
        .iter()
        .map(|&z| cover_flow(xi, z - C64::new(0.0, t0), t0, xi.t_end(), opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loewner::maps::BaseHull;
    use crate::loewner::state::WholePlaneState;

    fn opts() -> IntegratorOptions {
        IntegratorOptions::default()
    }

    #[test]
    fn radial_real_axis_symmetry() {
        let xi = DrivingPath::constant(0.0, 0.5, 0.0);
        let r = evolve_radial(&xi, &[C64::new(-0.5, 0.0)], &opts()).unwrap();
        let v = r[0].value().unwrap();
        assert!(v.im.abs() < 1e-12 && v.re < 0.0);
    }

    #[test]
    fn radial_dcap_equals_time() {
        let xi = DrivingPath::from_fn(0.0, 0.7, 0.01, |t| (3.0 * t).sin());
        let eps = 1e-7;
        let r = evolve_radial(&xi, &[C64::new(eps, 0.0)], &opts()).unwrap();
        let d = (r[0].value().unwrap() / eps).norm().ln();
        assert!((d - 0.7).abs() < 1e-6, "{d}");
    }

    #[test]
    fn radial_self_convergence() {
        let xi = DrivingPath::constant(0.0, 0.1, 0.0);
        let z = [C64::new(-0.5, 0.0)];
        let mut o = opts();
        o.adaptive = false;
        o.dt_max = 1e-3;
        let a = evolve_radial(&xi, &z, &o).unwrap()[0].value().unwrap();
        o.dt_max = 1e-4;
        let b = evolve_radial(&xi, &z, &o).unwrap()[0].value().unwrap();
        assert!((a - b).norm() < 1e-8);
    }

    #[test]
    fn fixed_step_order() {
        let xi = DrivingPath::from_fn(0.0, 0.5, 0.5, |t| t);
        let z = [C64::new(0.3, 0.4)];
        let run = |dt: f64| {
            let mut o = opts();
            o.adaptive = false;
            o.dt_max = dt;
            evolve_radial(&xi, &z, &o).unwrap()[0].value().unwrap()
        };
        let exact = run(1e-4);
        let e1 = (run(0.05) - exact).norm();
        let e2 = (run(0.025) - exact).norm();
        assert!(e1 / e2 > 4.0, "{}", e1 / e2);
    }

    #[test]
    fn covering_consistency_and_periodicity() {
        let xi = DrivingPath::from_fn(0.0, 0.4, 0.01, |t| 0.5 * (5.0 * t).cos());
        let z = C64::new(1.1, 0.8);
        let a = evolve_covering_radial(&xi, &[z, z + std::f64::consts::TAU], &opts()).unwrap();
        let (w0, w1) = (a[0].value().unwrap(), a[1].value().unwrap());
        assert!((w1 - w0 - std::f64::consts::TAU).norm() < 1e-9);
        let r = evolve_radial(&xi, &[from_cover(z)], &opts()).unwrap()[0].value().unwrap();
        assert!((from_cover(w0) - r).norm() < 1e-8);
        assert!(w0.im < z.im);
    }

    #[test]
    fn radial_height_bound() {
        // cosh((Im ψ̃)/2) >= cosh(H/2) e^{-t/2}
        let xi = DrivingPath::from_fn(0.0, 1.0, 0.01, |t| (2.0 * t).sin());
        for &h in &[1.5f64, 2.5, 4.0] {
            let z = C64::new(0.3, h);
            if (h / 2.0).cosh() <= (0.5f64).exp() {
                continue;
            }
            let w = evolve_covering_radial(&xi, &[z], &opts()).unwrap()[0].value().unwrap();
            assert!((w.im / 2.0).cosh() >= (h / 2.0).cosh() / (0.5f64).exp() - 1e-12);
        }
    }

    #[test]
    fn whole_plane_matches_slit_composition() {
        let t0 = -10.0;
        let t1 = -1.0;
        let dt = 1e-3;
        let xi = DrivingPath::from_fn(t0, t1, dt, |t| 0.8 * (2.0 * t).sin());
        let pts = [C64::new(0.3, 0.2), C64::new(-1.0, 0.5), C64::new(2.0, -3.0)];
        let ode = evolve_whole_plane(&xi, &pts, &opts()).unwrap();
        let mut st = WholePlaneState::new(BaseHull::Segment { t0, theta: xi.values[0] });
        for k in 0..xi.len() - 1 {
            st.push(0.5 * (xi.values[k] + xi.values[k + 1]), xi.times[k + 1] - xi.times[k]);
        }
        for (z, e) in pts.iter().zip(&ode) {
            let a = e.value().unwrap();
            let b = st.phi(*z);
            // the two start from different hulls of capacity t0
            assert!((a - b).norm() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_driving_grows_a_segment_in_direction_c() {
        let c = 0.9;
        let t0 = -9.0;
        let t1 = -1.0;
        let xi = DrivingPath::constant(t0, t1, c);
        // along the ray in direction c, points inside the segment get swallowed, points beyond
        // survive
        let len = 4.0 * t1.exp();
        let inside = C64::from_polar(0.6 * len, c);
        let beyond = C64::from_polar(1.3 * len, c);
        let opposite = C64::from_polar(0.3 * len, c + std::f64::consts::PI);
        let r = evolve_whole_plane(&xi, &[inside, beyond, opposite], &opts()).unwrap();
        assert!(matches!(r[0], Evolved::Swallowed(_)));
        assert!(r[1].value().is_some() && r[2].value().is_some());
        // and agrees with the exact segment map
        let seg = BaseHull::Segment { t0: t1, theta: c };
        let b = r[1].value().unwrap();
        assert!((b - seg.phi(beyond)).norm() < 1e-3);
    }

    #[test]
    fn whole_plane_initialization_bound() {
        let t0 = -12.0;
        let xi = DrivingPath::from_fn(t0, -2.0, 0.01, |t| (t * 1.7).cos());
        let z = C64::new(1.5, -0.7);
        let v = evolve_whole_plane(&xi, &[z], &opts()).unwrap()[0].value().unwrap();
        let t = -2.0f64;
        assert!((t.exp() * v - z).norm() < C_H * t.exp());
        assert!(evolve_whole_plane(&xi, &[C64::new(1e-5, 0.0)], &opts()).is_err());
    }

    #[test]
    fn covering_whole_plane_bounds() {
        let t0 = -10.0;
        let xi = DrivingPath::from_fn(t0, -3.0, 0.01, |t| (t * 0.9).sin());
        let z = C64::new(0.4, 1.0);
        let run = |t1: f64| {
            let p = xi.window(t0, t1);
            evolve_covering_whole_plane(&p, &[z], &opts()).unwrap()[0].value().unwrap()
        };
        let s2 = |w: C64, t: f64| t.exp() * (w.im / 2.0).sinh().powi(2);
        let mut prev = f64::INFINITY;
        for &t in &[-8.0, -6.0, -4.0, -3.0] {
            let w = run(t);
            let m = s2(w, t);
            assert!(m <= z.im.exp() / 4.0 + 1e-9);
            assert!(m <= prev + 1e-9);
            prev = m;
            let g = (1.0 + C_H) * t.exp() * (-z.im).exp();
            if g <= 0.5 {
                assert!((w - (z - C64::new(0.0, t))).norm() <= 4.0 * g);
            }
        }
    }
}
