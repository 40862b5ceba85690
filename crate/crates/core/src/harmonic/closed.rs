//! Closed-form fields used as oracles.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

/// Green's function of the disk `|z| < r` with pole `ze`.
pub fn disk_green(z: C64, ze: C64, r: f64) -> f64 {
    -((r * (z - ze)) / (r * r - ze.conj() * z)).norm().ln() / (2.0 * PI)
}

/// `∂_y J̃(x)` on the real line for the unit disk with the hull `|z| <= ρ` and pole `ze`
/// (`J̃(x + iy) = G(z)` with `z = ρ e^{y} e^{ix}`).
pub fn annulus_dy_green(x: f64, rho: f64, ze: C64, terms: usize) -> f64 {
    let (s, a) = (ze.norm(), ze.arg());
    let mut acc = s.ln() / (2.0 * PI * rho.ln());
    for n in 1..=terms {
        let nf = n as f64;
        let c = (s.powf(-nf) - s.powf(nf)) * rho.powf(nf) / (PI * (1.0 - rho.powf(2.0 * nf)));
        acc += c * (nf * (x - a)).cos();
    }
    acc
}

/// Green's function of the annulus `ρ < |z| < 1` with pole `ze`, valid for `|z| < |ze|`.
pub fn annulus_green_inner(z: C64, rho: f64, ze: C64, terms: usize) -> f64 {
    let (s, a) = (ze.norm(), ze.arg());
    let (u, us, l) = (z.norm().ln(), s.ln(), rho.ln());
    let th = z.arg();
    let mut acc = us / (2.0 * PI * l) * (u - l);
    for n in 1..=terms {
        let nf = n as f64;
        let an = (nf * us).sinh() / (nf * PI * (nf * l).sinh());
        acc += an * (nf * (u - l)).sinh() * (nf * (th - a)).cos();
    }
    acc
}

/// x-derivatives `(∂_x ∂_y, ∂_x² ∂_y) J̃(x)` for the same configuration.
pub fn annulus_dxy_green(x: f64, rho: f64, ze: C64, terms: usize) -> (f64, f64) {
    let (s, a) = (ze.norm(), ze.arg());
    let (mut d1, mut d2) = (0.0, 0.0);
    for n in 1..=terms {
        let nf = n as f64;
        let c = (s.powf(-nf) - s.powf(nf)) * rho.powf(nf) / (PI * (1.0 - rho.powf(2.0 * nf)));
        d1 -= c * nf * (nf * (x - a)).sin();
        d2 -= c * nf * nf * (nf * (x - a)).cos();
    }
    (d1, d2)
}

/// `∂_y Q̃(ξ)` for the unit disk with the hull `|z| <= ρ` (independent of `ξ`).
pub fn annulus_dy_q(rho: f64, terms: usize) -> f64 {
    let mut acc = -1.0 / rho.ln();
    for n in 1..=terms {
        let q = rho.powi(2 * n as i32);
        acc += 4.0 * n as f64 * q / (1.0 - q);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_green_vanishes_on_circle_and_is_symmetric() {
        let ze = C64::new(0.3, -0.4);
        for k in 0..12 {
            let z = C64::from_polar(2.0, k as f64);
            assert!(disk_green(z, ze, 2.0).abs() < 1e-14);
        }
        let (a, b) = (C64::new(0.1, 0.2), C64::new(-0.5, 0.3));
        assert!((disk_green(a, b, 1.0) - disk_green(b, a, 1.0)).abs() < 1e-14);
    }

    #[test]
    fn annulus_series_matches_grid_solution() {
        use crate::domain::{build_lattice, Boundary};
        use crate::harmonic::fields::green_function;
        let (rho, ze) = (0.2f64, C64::new(0.5, 0.0));
        let o = C64::new(0.0, 0.0);
        let bs = [Boundary::Circle { center: o, radius: 1.0 }, Boundary::Circle { center: o, radius: rho }];
        let g = build_lattice(&bs, 1.0 / 128.0, C64::new(0.5, 0.25)).unwrap();
        let f = green_function(&g, &[], ze).unwrap();
        for &z in &[C64::new(0.25, 0.125), C64::new(-0.3125, 0.0), C64::new(0.0, -0.25)] {
            let v = g.vertex_at(z).unwrap();
            let exact = annulus_green_inner(z, rho, ze, 200);
            assert!((f.value(v) - exact).abs() < 1e-3, "{} {exact}", f.value(v));
        }
        // the boundary derivative is the derivative of the value series at the inner circle
        let h = 1e-5;
        let x = 0.7;
        let gi = |y: f64| annulus_green_inner(C64::from_polar(rho * y.exp(), x), rho, ze, 200);
        let d = (4.0 * gi(h) - gi(2.0 * h)) / (2.0 * h);
        assert!((d - annulus_dy_green(x, rho, ze, 200)).abs() < 1e-5);
    }
}
