//! Capacity of interior hulls by a boundary charge method, and hull comparisons.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::state::WholePlaneState;
use crate::error::{Error, Result};

/// Shape of a hull given by points.
#[derive(Clone, Debug)]
pub enum HullShape {
    /// A curve through the points (the hull of a simple curve is the curve itself).
    Polyline(Vec<C64>),
    /// The closed region bounded by the polygon through the points.
    Polygon(Vec<C64>),
}

/// `∫_{u0}^{u1} ln sqrt(u² + q²) du`.
fn log_panel_integral(u0: f64, u1: f64, q: f64) -> f64 {
    let g = |u: f64| {
        let r2 = u * u + q * q;
        let base = if r2 > 0.0 { 0.5 * u * r2.ln() } else { 0.0 } - u;
        if q != 0.0 {
            base + q * (u / q).atan()
        } else {
            base
        }
    };
    g(u1) - g(u0)
}

/// Splits `[0, 1]` into `n` pieces clustered at both ends.
fn clustered_breaks(n: usize) -> Vec<f64> {
    (0..=n).map(|k| 0.5 * (1.0 - (std::f64::consts::PI * k as f64 / n as f64).cos())).collect()
}

fn panels_for(shape: &HullShape, n_panels: usize) -> Vec<(C64, C64)> {
    let (pts, closed) = match shape {
        HullShape::Polyline(p) => (p.clone(), false),
        HullShape::Polygon(p) => (p.clone(), true),
    };
    let mut pts = pts;
    if closed {
        pts.push(pts[0]);
    }
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    let at = |s: f64| -> C64 {
        let k = cum.partition_point(|&c| c <= s).clamp(1, cum.len() - 1) - 1;
        let l = cum[k + 1] - cum[k];
        if l == 0.0 {
            pts[k]
        } else {
            pts[k] + (pts[k + 1] - pts[k]) * ((s - cum[k]) / l)
        }
    };
    // every polyline vertex is a breakpoint, remaining panels follow arclength with end clustering
    let mut breaks: Vec<f64> = if closed {
        (0..=n_panels).map(|k| total * k as f64 / n_panels as f64).collect()
    } else {
        clustered_breaks(n_panels).into_iter().map(|s| s * total).collect()
    };
    if pts.len() <= n_panels / 2 {
        breaks.extend(cum.iter().copied());
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * total.max(1e-300));
    }
    breaks.windows(2).filter(|w| w[1] > w[0]).map(|w| (at(w[0]), at(w[1]))).collect()
}

/// Logarithmic capacity by the equilibrium charge method: piecewise-constant charges on panels
/// with collocation at panel midpoints, `Σ q_j ∫ ln|c_i - ζ| = V`, `Σ q_j = 1`, `rad = e^V`.
pub fn log_capacity(shape: &HullShape, n_panels: usize) -> Result<f64> {
    let panels = panels_for(shape, n_panels);
    let n = panels.len();
    if n == 0 {
        return Err(Error::DegenerateHull);
    }
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut rhs = DVector::<f64>::zeros(n + 1);
    for (i, &(ai, bi)) in panels.iter().enumerate() {
        let c = (ai + bi) * 0.5;
        for (j, &(aj, bj)) in panels.iter().enumerate() {
            let d = bj - aj;
            let h = d.norm();
            let e = d / h;
            let w = (c - aj) * e.conj();
            a[(i, j)] = log_panel_integral(w.re - h, w.re, w.im) / h;
        }
        a[(i, n)] = -1.0;
    }
    for j in 0..n {
        a[(n, j)] = 1.0;
    }
    rhs[n] = 1.0;
    let sol = a.lu().solve(&rhs).ok_or(Error::DegenerateHull)?;
    Ok(sol[n])
}

/// `(rad, ccap)` of a hull; `ccap = ln(rad)`.
pub fn hull_radius_capacity(shape: &HullShape) -> Result<(f64, f64)> {
    let pts = match shape {
        HullShape::Polyline(p) | HullShape::Polygon(p) => p,
    };
    let spread = pts.iter().map(|z| (z - pts[0]).norm()).fold(0.0, f64::max);
    if pts.len() < 2 || spread == 0.0 {
        return Err(Error::DegenerateHull);
    }
    let ccap = log_capacity(shape, 480)?;
    Ok((ccap.exp(), ccap))
}

/// `dcap(H2/H1) = ccap(H2) - ccap(H1)` for nested whole-plane states.
pub fn dcap_quotient(h1: &WholePlaneState, h2: &WholePlaneState) -> Result<f64> {
    let d = h2.t - h1.t;
    if d < -1e-9 {
        return Err(Error::NotNested(d));
    }
    Ok(d.max(0.0))
}

/// Truncated hull distance `|rad1 - rad2| + Σ_{m ≤ m_max} 2^{-m} sup |φ1⁻¹(z) - φ2⁻¹(z)|` with
/// the normalized inverse maps and the sup over `|z| ≥ max(rad) + 1/m` estimated on the circle
/// `|z| = max(rad) + 1/m` (the difference is analytic at infinity, so the sup is attained there).
pub fn hull_distance_upper(h1: &WholePlaneState, h2: &WholePlaneState, m_max: usize, samples: usize) -> f64 {
    let (r1, r2) = (h1.rad(), h2.rad());
    let r = r1.max(r2);
    let mut total = (r1 - r2).abs();
    for m in 1..=m_max {
        let rho = r + 1.0 / m as f64;
        let mut sup: f64 = 0.0;
        for k in 0..samples {
            let z = C64::from_polar(rho, std::f64::consts::TAU * k as f64 / samples as f64);
            sup = sup.max((h1.phi_normalized_inv(z) - h2.phi_normalized_inv(z)).norm());
        }
        total += sup * 0.5f64.powi(m as i32);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::circle_polygon;
    use crate::loewner::maps::BaseHull;

    #[test]
    fn disk_radius() {
        let (r, _) = hull_radius_capacity(&HullShape::Polygon(circle_polygon(C64::new(0.3, -0.2), 0.7, 400))).unwrap();
        assert!((r - 0.7).abs() / 0.7 < 1e-3, "{r}");
    }

    #[test]
    fn segment_quarter_length() {
        let seg: Vec<C64> = vec![C64::new(0.0, 0.0), C64::new(0.6, 0.8)];
        let (r, _) = hull_radius_capacity(&HullShape::Polyline(seg)).unwrap();
        assert!((r - 0.25).abs() / 0.25 < 1e-3, "{r}");
    }

    #[test]
    fn radius_at_least_quarter_diameter() {
        let arc: Vec<C64> = (0..100).map(|k| C64::from_polar(1.0, 3.0 * k as f64 / 99.0)).collect();
        let (r, _) = hull_radius_capacity(&HullShape::Polyline(arc.clone())).unwrap();
        let diam = arc.iter().flat_map(|a| arc.iter().map(move |b| (a - b).norm())).fold(0.0, f64::max);
        assert!(r >= diam / 4.0);
        assert!(r <= 1.0);
    }

    #[test]
    fn degenerate() {
        assert!(hull_radius_capacity(&HullShape::Polyline(vec![C64::new(1.0, 1.0); 3])).is_err());
    }

    #[test]
    fn hull_distance_basics() {
        let a = WholePlaneState::new(BaseHull::Segment { t0: -2.0, theta: 0.5 });
        assert!(hull_distance_upper(&a, &a.clone(), 8, 64) < 1e-12);
        let b = WholePlaneState::disk(-2.0);
        assert!(hull_distance_upper(&a, &b, 8, 64) > 0.0);
        let mut prev = f64::INFINITY;
        for &eps in &[0.4, 0.2, 0.1, 0.05] {
            let c = WholePlaneState::new(BaseHull::Segment { t0: -2.0, theta: 0.5 + eps });
            let d = hull_distance_upper(&a, &c, 8, 64);
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn quotient() {
        let mut a = WholePlaneState::disk(-3.0);
        let b = a.clone();
        a.push(0.1, 0.5);
        assert!((dcap_quotient(&b, &a).unwrap() - 0.5).abs() < 1e-15);
        assert!(dcap_quotient(&a, &b).is_err());
        assert_eq!(dcap_quotient(&a, &a).unwrap(), 0.0);
    }
}
