//! Conversions between driving functions and curves under capacity parameterization.

use num_complex::Complex64 as C64;

use super::maps::{slit_dcap, BaseHull, Slit};
use super::path::{lift_nearest, Anchor, CurveTrace, DrivingPath};
use super::state::WholePlaneState;
use crate::error::{Error, Result};

/// Default largest capacity carried by one elementary slit.
pub const DCAP_MAX: f64 = 1e-3;

/// Builds the slit-composition state of a driving path: the hull up to `t0` is the segment grown
/// by constant driving `ξ(t0)`, and each sample interval is split into slits of capacity at most
/// `dcap_max` with the driving value at the slit midpoint.
///
/// Returns the state and, per sample time, the number of slits composed so far.
pub fn state_from_driving(xi: &DrivingPath, dcap_max: f64) -> (WholePlaneState, Vec<usize>) {
    let mut st = WholePlaneState::new(BaseHull::Segment { t0: xi.t0(), theta: xi.values[0] });
    let mut counts = vec![0];
    for k in 0..xi.len() - 1 {
        let (a, b) = (xi.times[k], xi.times[k + 1]);
        let m = ((b - a) / dcap_max).ceil().max(1.0) as usize;
        let h = (b - a) / m as f64;
        for j in 0..m {
            let s = a + (j as f64 + 0.5) * h;
            st.push(xi.eval(s), h);
        }
        counts.push(st.slits.len());
    }
    (st, counts)
}

/// Tip positions `β(t_i)` at the driving sample times.
pub fn driving_to_curve(xi: &DrivingPath) -> Result<CurveTrace> {
    driving_to_curve_with(xi, DCAP_MAX)
}

pub fn driving_to_curve_with(xi: &DrivingPath, dcap_max: f64) -> Result<CurveTrace> {
    let (st, counts) = state_from_driving(xi, dcap_max);
    let mut points = Vec::with_capacity(xi.len());
    for (k, &n) in counts.iter().enumerate() {
        let pre = st.prefix(n);
        let tip = pre.tip();
        if !(tip.re.is_finite() && tip.im.is_finite()) {
            return Err(Error::TipDiverged(xi.times[k]));
        }
        points.push(tip);
    }
    Ok(CurveTrace { times: xi.times.clone(), points })
}

/// Output of conformal welding of a polyline from 0.
#[derive(Clone, Debug)]
pub struct Welding {
    pub state: WholePlaneState,
    /// Capacity `ccap` of the polyline up to each vertex after the start point.
    pub v: Vec<f64>,
    /// Driving angle after each elementary slit, as a continuous lift (the first sample is the
    /// base segment at its capacity).
    pub xi: DrivingPath,
    /// Number of slits composed once each vertex is welded.
    pub slits_at_vertex: Vec<usize>,
}

impl Welding {
    /// Driving samples at vertex capacities.
    pub fn xi_at_vertices(&self) -> Vec<f64> {
        self.slits_at_vertex.iter().map(|&n| self.xi.values[n]).collect()
    }
}

/// Welds the polyline `0 = p_0, p_1, …` one vertex at a time. The first edge is the exact segment
/// hull; each later edge is cut into radial slits in the current image plane, and `on_slit` sees
/// every elementary slit right after it is composed.
pub fn weld_polyline(
    poly: &[C64],
    dcap_max: f64,
    mut on_slit: impl FnMut(&Slit, &WholePlaneState),
) -> Result<Welding> {
    if poly.len() < 2 || poly[0] != C64::new(0.0, 0.0) {
        return Err(Error::DegenerateHull);
    }
    let first = poly[1];
    if first.norm() == 0.0 {
        return Err(Error::NonIncreasingCapacity(1));
    }
    let base = BaseHull::Segment { t0: (first.norm() / 4.0).ln(), theta: first.arg() };
    let mut st = WholePlaneState::new(base);
    let mut images: Vec<C64> = poly.iter().map(|&z| base.phi(z)).collect();
    let mut theta = first.arg();
    let mut times = vec![st.t];
    let mut values = vec![theta];
    let mut v = vec![st.t];
    let mut slits_at_vertex = vec![0usize];
    for k in 2..poly.len() {
        let mut w = images[k];
        if w.norm() <= 1.0 + 1e-13 || !(w.re.is_finite() && w.im.is_finite()) {
            return Err(Error::SelfIntersection(k));
        }
        let m = (slit_dcap(w.norm()) / dcap_max).ceil().max(1.0) as usize;
        let mut pushed = 0;
        for r in (1..=m).rev() {
            let tip = C64::from_polar(1.0, theta);
            let mut u = tip + (w - tip) / (r as f64).sqrt();
            if (u - tip).re * tip.re + (u - tip).im * tip.im <= 0.0 || u.norm() <= 1.0 + 1e-15 {
                u = C64::from_polar(1.0 + (w.norm() - 1.0) / (r as f64).sqrt(), w.arg());
            }
            let d = slit_dcap(u.norm());
            if !(d > 1e-14) || st.t + d == st.t {
                continue;
            }
            theta = lift_nearest(theta, u.arg());
            let s = Slit::new(theta, d);
            w = s.apply(w);
            for z in &mut images[k + 1..] {
                *z = s.apply(*z);
            }
            st.slits.push(s);
            st.t += d;
            times.push(st.t);
            values.push(theta);
            pushed += 1;
            on_slit(&s, &st);
        }
        if pushed == 0 {
            return Err(Error::NonIncreasingCapacity(k));
        }
        v.push(st.t);
        slits_at_vertex.push(st.slits.len());
    }
    let xi = DrivingPath { times, values, kappa: 0.0, anchor: Anchor::Circle };
    Ok(Welding { state: st, v, xi, slits_at_vertex })
}

/// Capacity reparameterization and driving function of a simple curve from 0.
///
/// Returns `v(t_i) = ccap(β[t0, t_i])` at the trace samples together with the driving function on
/// the fine slit grid.
pub fn curve_to_driving(trace: &CurveTrace) -> Result<(Vec<f64>, DrivingPath)> {
    curve_to_driving_with(trace, DCAP_MAX)
}

pub fn curve_to_driving_with(trace: &CurveTrace, dcap_max: f64) -> Result<(Vec<f64>, DrivingPath)> {
    let mut poly = vec![C64::new(0.0, 0.0)];
    for (k, &p) in trace.points.iter().enumerate() {
        if p == *poly.last().unwrap() {
            return Err(Error::NonIncreasingCapacity(k));
        }
        poly.push(p);
    }
    let wd = weld_polyline(&poly, dcap_max, |_, _| {})?;
    if wd.v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::NonIncreasingCapacity(0));
    }
    Ok((wd.v, wd.xi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_driving_gives_collinear_trace() {
        let xi = DrivingPath::constant(-4.0, -1.0, 0.4).window(-4.0, -1.0);
        let xi = DrivingPath::from_fn(-4.0, -1.0, 0.01, |t| xi.eval(t));
        let tr = driving_to_curve(&xi).unwrap();
        let dir = C64::from_polar(1.0, 0.4);
        for (t, p) in tr.times.iter().zip(&tr.points) {
            let q = p / dir;
            assert!(q.im.abs() < 1e-3 * p.norm().max(1e-3));
            assert!((q.re - 4.0 * t.exp()).abs() < 1e-6, "{} {}", q.re, 4.0 * t.exp());
        }
        assert!(tr.points[0].norm() <= 4.0 * (-4.0f64).exp() + 1e-12);
    }

    #[test]
    fn straight_segment_has_constant_driving() {
        let pts: Vec<C64> = (1..=40).map(|k| C64::from_polar(0.01 * k as f64, 1.1)).collect();
        let tr = CurveTrace { times: (0..40).map(|k| k as f64).collect(), points: pts };
        let (v, xi) = curve_to_driving(&tr).unwrap();
        assert!(v.windows(2).all(|w| w[1] > w[0]));
        let sup = xi.values.iter().map(|x| (x - 1.1).abs()).fold(0.0, f64::max);
        assert!(sup < 0.02, "{sup}");
        assert!((v.last().unwrap() - (0.1f64).ln()).abs() < 1e-6);
    }

    #[test]
    fn roundtrip_smooth_driver() {
        let xi = DrivingPath::from_fn(-4.0, 0.0, 1e-2, |t| 2.0 * (1.5 * t).sin());
        let tr = driving_to_curve(&xi).unwrap();
        let (v, out) = curve_to_driving(&tr).unwrap();
        for (a, b) in v.iter().zip(&tr.times) {
            assert!((a - b).abs() < 5e-3, "{a} {b}");
        }
        let err = xi.window(-3.9, 0.0).sup_circle_distance(&out);
        assert!(err < 0.05, "{err}");
    }

    #[test]
    fn welding_rejects_backtracking() {
        let poly = [C64::new(0.0, 0.0), C64::new(0.1, 0.0), C64::new(0.05, 0.0)];
        assert!(weld_polyline(&poly, 1e-3, |_, _| {}).is_err());
    }
}
