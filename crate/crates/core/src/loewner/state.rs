use num_complex::Complex64 as C64;

use super::maps::{BaseHull, Slit};

/// Whole-plane Loewner map `φ_t` as a base hull followed by a composition of radial slit maps.
///
/// `φ_t` maps the complement of `K_t` onto `{|w| > 1}` with `φ_t(z) = e^{-t} z + O(1)` at
/// infinity; `t = ccap(K_t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WholePlaneState {
    pub base: BaseHull,
    pub slits: Vec<Slit>,
    pub t: f64,
    /// Points with `|φ_t(z)| - 1` below this are reported as swallowed.
    pub swallowed_tolerance: f64,
}

impl WholePlaneState {
    pub fn new(base: BaseHull) -> Self {
        WholePlaneState { base, slits: Vec::new(), t: base.t0(), swallowed_tolerance: 1e-6 }
    }

    /// State of the disk hull `|z| <= e^{t}`.
    pub fn disk(t: f64) -> Self {
        Self::new(BaseHull::Disk { t0: t })
    }

    pub fn t_start(&self) -> f64 {
        self.base.t0()
    }

    pub fn push(&mut self, theta: f64, dcap: f64) {
        debug_assert!(dcap > 0.0);
        self.slits.push(Slit::new(theta, dcap));
        self.t += dcap;
    }

    /// Driving angle of the most recent growth, if any.
    pub fn theta(&self) -> Option<f64> {
        self.slits.last().map(|s| s.theta).or(self.base.theta())
    }

    #[inline]
    pub fn phi(&self, z: C64) -> C64 {
        let mut w = self.base.phi(z);
        for s in &self.slits {
            w = s.apply(w);
        }
        w
    }

    #[inline]
    pub fn phi_inv(&self, w: C64) -> C64 {
        let mut z = w;
        for s in self.slits.iter().rev() {
            z = s.inverse(z);
        }
        self.base.phi_inv(z)
    }

    /// `φ_t(z)`, or `None` if `z` lies in (or within tolerance of) the hull.
    pub fn phi_checked(&self, z: C64) -> Option<C64> {
        let w = self.phi(z);
        (w.norm() - 1.0 > self.swallowed_tolerance).then_some(w)
    }

    /// Current tip `β(t)`: the preimage of the last growth point.
    pub fn tip(&self) -> C64 {
        match self.theta() {
            Some(th) => self.phi_inv(C64::from_polar(1.0, th)),
            None => C64::new(0.0, 0.0),
        }
    }

    /// Exterior map normalized by `φ'(∞) = 1`; its image is `{|w| > rad}`.
    pub fn phi_normalized(&self, z: C64) -> C64 {
        self.phi(z) * self.t.exp()
    }

    pub fn phi_normalized_inv(&self, w: C64) -> C64 {
        self.phi_inv(w * (-self.t).exp())
    }

    pub fn rad(&self) -> f64 {
        self.t.exp()
    }

    /// Restriction to the first `n` slits (the hull at an earlier time).
    pub fn prefix(&self, n: usize) -> WholePlaneState {
        let slits = self.slits[..n].to_vec();
        let t = self.base.t0() + slits.iter().map(|s| s.dcap).sum::<f64>();
        WholePlaneState { base: self.base, slits, t, swallowed_tolerance: self.swallowed_tolerance }
    }

    /// Number of slits whose cumulative end time is `<= t`.
    pub fn slits_up_to(&self, t: f64) -> usize {
        let mut acc = self.base.t0();
        for (k, s) in self.slits.iter().enumerate() {
            if acc + s.dcap > t + 1e-12 {
                return k;
            }
            acc += s.dcap;
        }
        self.slits.len()
    }

    /// Estimates `ccap` from the map alone: the leading Laurent coefficient of `φ_t` is
    /// `e^{-t}`, computed by the trapezoid rule on the circle `|z| = radius`.
    pub fn ccap_from_map(&self, radius: f64, samples: usize) -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..samples {
            let z = C64::from_polar(radius, std::f64::consts::TAU * k as f64 / samples as f64);
            acc += self.phi(z) / z;
        }
        -(acc / samples as f64).norm().ln()
    }
}

/// Incrementally tracks the images `φ_t(z)` of a fixed point set as slits are appended.
#[derive(Clone, Debug)]
pub struct PointTracker {
    pub points: Vec<C64>,
    pub images: Vec<C64>,
}

impl PointTracker {
    pub fn new(state: &WholePlaneState, points: Vec<C64>) -> Self {
        let images = points.iter().map(|&z| state.phi(z)).collect();
        PointTracker { points, images }
    }

    #[inline]
    pub fn apply(&mut self, s: &Slit) {
        for w in &mut self.images {
            *w = s.apply(*w);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_state_is_scaling() {
        let s = WholePlaneState::disk(-2.0);
        let z = C64::new(0.5, 0.3);
        assert!((s.phi(z) - z * 2.0f64.exp()).norm() < 1e-14);
        assert!((s.ccap_from_map(1.0, 64) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn composed_capacity_from_map() {
        let mut s = WholePlaneState::new(BaseHull::Segment { t0: -3.0, theta: 0.3 });
        for k in 0..200 {
            s.push(0.3 + 0.01 * k as f64, 0.005);
        }
        assert!((s.t + 2.0).abs() < 1e-12);
        let c = s.ccap_from_map(5.0, 256);
        assert!((c - s.t).abs() < 1e-10, "{c}");
        // the tip maps to the last growth point
        let tip = s.tip();
        let w = s.phi(tip + (tip - s.prefix(199).tip()) * 1e-9);
        assert!((w - C64::from_polar(1.0, s.theta().unwrap())).norm() < 1e-3);
    }
}
