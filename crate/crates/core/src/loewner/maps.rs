//! Elementary conformal maps of the exterior of the unit disk.

use num_complex::Complex64 as C64;

/// `k(s) = s/(1+s)²` maps the unit disk onto `C \ [1/4, ∞)`.
#[inline]
pub fn koebe(s: C64) -> C64 {
    let d = 1.0 + s;
    s / (d * d)
}

/// Principal square root without the polar round trip.
#[inline]
pub fn csqrt(z: C64) -> C64 {
    let (a, b) = (z.re, z.im);
    let m = (a * a + b * b).sqrt();
    if m == 0.0 {
        return C64::new(0.0, b);
    }
    let t = (0.5 * (m + a.abs())).sqrt();
    if a >= 0.0 {
        C64::new(t, b / (2.0 * t))
    } else {
        C64::new(b.abs() / (2.0 * t), t.copysign(b))
    }
}

/// Inverse of [`koebe`] on `C \ [1/4, ∞)`.
#[inline]
pub fn koebe_inv(w: C64) -> C64 {
    let r = csqrt(1.0 - 4.0 * w);
    2.0 * w / ((1.0 - 2.0 * w) + r)
}

/// Capacity of the radial slit from the unit circle out to radius `r > 1`.
pub fn slit_dcap(r: f64) -> f64 {
    let x = 1.0 / r;
    let sx = x.sqrt();
    2.0 * ((1.0 - sx) * (1.0 - sx) / (2.0 * sx)).ln_1p()
}

/// Outer radius of the radial slit with capacity `dcap`.
pub fn slit_radius(dcap: f64) -> f64 {
    // tip x solves k(x) = e^{-Δ}/4
    let x = koebe_inv(C64::new((-dcap).exp() / 4.0, 0.0)).re;
    1.0 / x
}

/// Radial slit map: removes the segment `e^{iθ}[1, r]` from the exterior of the unit disk and
/// renormalizes so that `g(w) = e^{-Δ} w + O(1)` at infinity; the slit tip goes to `e^{iθ}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slit {
    pub theta: f64,
    pub dcap: f64,
    rot: C64,
    edelta: f64,
}

impl Slit {
    pub fn new(theta: f64, dcap: f64) -> Self {
        Slit { theta, dcap, rot: C64::from_polar(1.0, theta), edelta: dcap.exp() }
    }

    #[inline]
    pub fn apply(&self, w: C64) -> C64 {
        let s = self.rot / w;
        let k = koebe(s) * self.edelta;
        self.rot / koebe_inv(k)
    }

    #[inline]
    pub fn inverse(&self, w: C64) -> C64 {
        let s = self.rot / w;
        let k = koebe(s) / self.edelta;
        self.rot / koebe_inv(k)
    }

    /// Tip of the removed slit.
    pub fn tip(&self) -> C64 {
        self.rot * slit_radius(self.dcap)
    }
}

/// Hull at the truncation time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BaseHull {
    /// Closed disk `|z| <= e^{t0}`.
    Disk { t0: f64 },
    /// Segment `[0, 4e^{t0}e^{iθ}]`, the hull of constant driving `θ` up to time `t0`.
    Segment { t0: f64, theta: f64 },
}

impl BaseHull {
    pub fn t0(&self) -> f64 {
        match *self {
            BaseHull::Disk { t0 } | BaseHull::Segment { t0, .. } => t0,
        }
    }

    /// Exterior map onto `|w| > 1` with `w ~ e^{-t0} z` at infinity.
    #[inline]
    pub fn phi(&self, z: C64) -> C64 {
        match *self {
            BaseHull::Disk { t0 } => z * (-t0).exp(),
            BaseHull::Segment { t0, theta } => {
                let rot = C64::from_polar(1.0, theta);
                let e = t0.exp();
                let zeta = (z - rot * (2.0 * e)) / (rot * e);
                let r = (zeta * zeta - 4.0).sqrt();
                let u1 = (zeta + r) * 0.5;
                let u2 = (zeta - r) * 0.5;
                let u = if u1.norm_sqr() >= u2.norm_sqr() { u1 } else { u2 };
                rot * u
            }
        }
    }

    #[inline]
    pub fn phi_inv(&self, w: C64) -> C64 {
        match *self {
            BaseHull::Disk { t0 } => w * t0.exp(),
            BaseHull::Segment { t0, theta } => {
                let rot = C64::from_polar(1.0, theta);
                let e = t0.exp();
                let u = w / rot;
                rot * (2.0 * e) + rot * e * (u + 1.0 / u)
            }
        }
    }

    /// Growth point on the unit circle (tip image) for segments.
    pub fn theta(&self) -> Option<f64> {
        match *self {
            BaseHull::Disk { .. } => None,
            BaseHull::Segment { theta, .. } => Some(theta),
        }
    }
}
