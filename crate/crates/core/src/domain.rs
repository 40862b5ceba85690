//! Planar domains and their `δZ²` lattice approximations.

use std::collections::VecDeque;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonic::TargetSpec;

/// Outer boundary of a domain.
#[derive(Clone, Debug, PartialEq)]
pub enum Outer {
    Sphere,
    /// Positively oriented simple polygon.
    Polygon(Vec<C64>),
}

/// A finitely connected domain containing the start point 0.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub outer: Outer,
    pub holes: Vec<Vec<C64>>,
    pub target: TargetSpec,
    pub label: String,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawOuter {
    Named(String),
    Poly(Vec<[f64; 2]>),
}

#[derive(Serialize, Deserialize)]
struct RawDomain {
    outer: RawOuter,
    #[serde(default)]
    holes: Vec<Vec<[f64; 2]>>,
    target: TargetSpec,
    #[serde(default)]
    label: String,
}

fn to_c(v: &[[f64; 2]]) -> Vec<C64> {
    v.iter().map(|p| C64::new(p[0], p[1])).collect()
}

fn from_c(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

impl Serialize for DomainSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let raw = RawDomain {
            outer: match &self.outer {
                Outer::Sphere => RawOuter::Named("sphere".into()),
                Outer::Polygon(p) => RawOuter::Poly(from_c(p)),
            },
            holes: self.holes.iter().map(|h| from_c(h)).collect(),
            target: self.target.clone(),
            label: self.label.clone(),
        };
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DomainSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawDomain::deserialize(d)?;
        let outer = match raw.outer {
            RawOuter::Named(n) if n == "sphere" => Outer::Sphere,
            RawOuter::Named(n) => {
                return Err(serde::de::Error::custom(format!("unknown outer boundary '{n}'")))
            }
            RawOuter::Poly(p) => Outer::Polygon(to_c(&p)),
        };
        Ok(DomainSpec {
            outer,
            holes: raw.holes.iter().map(|h| to_c(h)).collect(),
            target: raw.target,
            label: raw.label,
        })
    }
}

/// Vertices of the regular `n`-gon inscribed in the circle `|z - c| = r`, counterclockwise.
pub fn circle_polygon(center: C64, radius: f64, n: usize) -> Vec<C64> {
    (0..n)
        .map(|k| center + C64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect()
}

/// Signed area of a polygon (positive for counterclockwise orientation).
pub fn signed_area(p: &[C64]) -> f64 {
    let n = p.len();
    (0..n).map(|k| p[k].re * p[(k + 1) % n].im - p[(k + 1) % n].re * p[k].im).sum::<f64>() / 2.0
}

/// Winding-number point-in-polygon test. Points on the boundary give an unspecified answer.
pub fn point_in_polygon(p: &[C64], z: C64) -> bool {
    let n = p.len();
    let mut inside = false;
    for k in 0..n {
        let a = p[k];
        let b = p[(k + 1) % n];
        if (a.im > z.im) != (b.im > z.im) {
            let x = a.re + (z.im - a.im) * (b.re - a.re) / (b.im - a.im);
            if x > z.re {
                inside = !inside;
            }
        }
    }
    inside
}

pub fn dist_to_segment(z: C64, a: C64, b: C64) -> f64 {
    let d = b - a;
    let l2 = d.norm_sqr();
    if l2 == 0.0 {
        return (z - a).norm();
    }
    let t = (((z - a) * d.conj()).re / l2).clamp(0.0, 1.0);
    (z - (a + d * t)).norm()
}

pub fn dist_to_polygon(p: &[C64], z: C64) -> f64 {
    let n = p.len();
    (0..n).map(|k| dist_to_segment(z, p[k], p[(k + 1) % n])).fold(f64::INFINITY, f64::min)
}

impl DomainSpec {
    /// The unit disk, approximated by a regular polygon with `n` vertices.
    pub fn unit_disk(n: usize, target: TargetSpec) -> Self {
        DomainSpec {
            outer: Outer::Polygon(circle_polygon(C64::new(0.0, 0.0), 1.0, n)),
            holes: vec![],
            target,
            label: format!("unit disk ({n}-gon)"),
        }
    }

    pub fn sphere(target: TargetSpec) -> Self {
        DomainSpec { outer: Outer::Sphere, holes: vec![], target, label: "sphere".into() }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.outer, Outer::Sphere)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let d: DomainSpec = serde_json::from_str(s)?;
        d.validate()?;
        Ok(d)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Boundary components: the outer polygon first, then the holes.
    pub fn boundaries(&self) -> Vec<Boundary> {
        let mut out = Vec::new();
        if let Outer::Polygon(p) = &self.outer {
            out.push(Boundary::Polygon(p.clone()));
        }
        for h in &self.holes {
            out.push(Boundary::Polygon(h.clone()));
        }
        out
    }

    /// Whether `z` lies in the open domain (boundary points are excluded up to `1e-12`).
    pub fn contains(&self, z: C64) -> bool {
        if let Outer::Polygon(p) = &self.outer {
            if !point_in_polygon(p, z) || dist_to_polygon(p, z) < 1e-12 {
                return false;
            }
        }
        self.holes.iter().all(|h| !point_in_polygon(h, z) && dist_to_polygon(h, z) >= 1e-12)
    }

    pub fn dist_to_boundary(&self, z: C64) -> f64 {
        self.boundaries().iter().map(|b| b.dist(z)).fold(f64::INFINITY, f64::min)
    }

    /// `R = dist(0, ∂D ∪ {z_e})`.
    pub fn radius_r(&self) -> f64 {
        let mut r = self.dist_to_boundary(C64::new(0.0, 0.0));
        if let TargetSpec::Point { z } = &self.target {
            r = r.min(z.norm());
        }
        r
    }

    pub fn validate(&self) -> Result<()> {
        let zero = C64::new(0.0, 0.0);
        if let Outer::Polygon(p) = &self.outer {
            if p.len() < 3 {
                return Err(Error::InvalidDomain("outer polygon needs at least 3 vertices".into()));
            }
            if signed_area(p) <= 0.0 {
                return Err(Error::InvalidDomain("outer polygon must be positively oriented".into()));
            }
            for h in &self.holes {
                if h.iter().any(|&z| !point_in_polygon(p, z)) {
                    return Err(Error::InvalidDomain("hole not inside the outer boundary".into()));
                }
            }
        } else if !self.holes.is_empty() {
            return Err(Error::InvalidDomain("sphere domains take no holes".into()));
        }
        for (a, h) in self.holes.iter().enumerate() {
            if h.len() < 3 {
                return Err(Error::InvalidDomain("hole needs at least 3 vertices".into()));
            }
            for (b, g) in self.holes.iter().enumerate() {
                if a != b && g.iter().any(|&z| point_in_polygon(h, z)) {
                    return Err(Error::InvalidDomain("holes overlap".into()));
                }
            }
        }
        if !self.contains(zero) {
            return Err(Error::InvalidDomain("start point 0 is not inside the domain".into()));
        }
        match &self.target {
            TargetSpec::Point { z } => {
                if z.norm() == 0.0 {
                    return Err(Error::InvalidDomain("point target equals the start point".into()));
                }
                if !self.contains(*z) {
                    return Err(Error::InvalidDomain("point target outside the domain".into()));
                }
            }
            TargetSpec::Infinity => {
                if !self.is_sphere() {
                    return Err(Error::InvalidDomain("target at infinity needs the sphere".into()));
                }
            }
            TargetSpec::Arc { from, to } => {
                if self.is_sphere() {
                    return Err(Error::InvalidDomain("arc target on the sphere".into()));
                }
                let bs = self.boundaries();
                let (ca, _) = locate_on_boundary(&bs, *from);
                let (cb, _) = locate_on_boundary(&bs, *to);
                if bs[ca].dist(*from) > 1e-9 || bs[cb].dist(*to) > 1e-9 || ca != cb {
                    return Err(Error::InvalidDomain(
                        "arc endpoints must lie on one boundary component".into(),
                    ));
                }
            }
            TargetSpec::PrimeEnd { z, normal } => {
                if self.is_sphere() {
                    return Err(Error::InvalidDomain("prime-end target on the sphere".into()));
                }
                if self.dist_to_boundary(*z) > 1e-9 {
                    return Err(Error::InvalidDomain("prime end not on the boundary".into()));
                }
                if (normal.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidDomain("prime-end normal must be a unit vector".into()));
                }
                if !self.contains(*z + *normal * 1e-6) {
                    return Err(Error::InvalidDomain("prime-end normal must point inward".into()));
                }
            }
        }
        Ok(())
    }
}

/// A boundary component.
#[derive(Clone, Debug, PartialEq)]
pub enum Boundary {
    Polygon(Vec<C64>),
    Circle { center: C64, radius: f64 },
}

/// Intersection of a lattice line with a boundary component.
#[derive(Clone, Copy, Debug)]
struct Hit {
    /// Coordinate along the line.
    s: f64,
    /// `false` for a tangential touch (no change of side).
    crossing: bool,
    comp: u16,
    /// Arclength position along the component.
    param: f64,
}

impl Boundary {
    pub fn dist(&self, z: C64) -> f64 {
        match self {
            Boundary::Polygon(p) => dist_to_polygon(p, z),
            Boundary::Circle { center, radius } => ((z - center).norm() - radius).abs(),
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            Boundary::Polygon(p) => (0..p.len()).map(|k| (p[(k + 1) % p.len()] - p[k]).norm()).sum(),
            Boundary::Circle { radius, .. } => 2.0 * std::f64::consts::PI * radius,
        }
    }

    fn bbox(&self) -> (f64, f64, f64, f64) {
        match self {
            Boundary::Polygon(p) => p.iter().fold(
                (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
                |(a, b, c, d), z| (a.min(z.re), b.max(z.re), c.min(z.im), d.max(z.im)),
            ),
            Boundary::Circle { center, radius } => {
                (center.re - radius, center.re + radius, center.im - radius, center.im + radius)
            }
        }
    }

    /// Point at arclength position `param`.
    pub fn point_at(&self, param: f64) -> C64 {
        match self {
            Boundary::Polygon(p) => {
                let per = self.perimeter();
                let mut s = param.rem_euclid(per);
                let n = p.len();
                for k in 0..n {
                    let l = (p[(k + 1) % n] - p[k]).norm();
                    if s <= l || k == n - 1 {
                        return p[k] + (p[(k + 1) % n] - p[k]) * (s / l).min(1.0);
                    }
                    s -= l;
                }
                p[0]
            }
            Boundary::Circle { center, radius } => center + C64::from_polar(*radius, param / radius),
        }
    }

    /// Arclength position of the boundary point nearest to `z`.
    pub fn param_of(&self, z: C64) -> f64 {
        match self {
            Boundary::Polygon(p) => {
                let n = p.len();
                let mut best = (f64::INFINITY, 0.0);
                let mut acc = 0.0;
                for k in 0..n {
                    let a = p[k];
                    let d = p[(k + 1) % n] - a;
                    let l = d.norm();
                    let t = if l > 0.0 { (((z - a) * d.conj()).re / (l * l)).clamp(0.0, 1.0) } else { 0.0 };
                    let dist = (z - (a + d * t)).norm();
                    if dist < best.0 {
                        best = (dist, acc + t * l);
                    }
                    acc += l;
                }
                best.1
            }
            Boundary::Circle { center, radius } => (z - center).arg().rem_euclid(std::f64::consts::TAU) * radius,
        }
    }

    /// Intersections with the line `{Im z = c}` (`horizontal`) or `{Re z = c}`.
    /// The callback receives hits for every line index `k` whose level `k·δ` is met.
    fn push_hits(&self, comp: u16, horizontal: bool, delta: f64, lo: i64, lines: &mut [Vec<Hit>]) {
        let coord = |z: C64| if horizontal { (z.im, z.re) } else { (z.re, z.im) };
        let nl = lines.len() as i64;
        match self {
            Boundary::Polygon(p) => {
                let n = p.len();
                let mut acc = 0.0;
                for k in 0..n {
                    let a = p[k];
                    let b = p[(k + 1) % n];
                    let len = (b - a).norm();
                    let (ha, sa) = coord(a);
                    let (hb, sb) = coord(b);
                    // lattice levels strictly between / at the endpoints
                    let (hmin, hmax) = if ha < hb { (ha, hb) } else { (hb, ha) };
                    let k0 = (hmin / delta).ceil() as i64;
                    let k1 = (hmax / delta).floor() as i64;
                    for li in k0.max(lo)..=k1.min(lo + nl - 1) {
                        let c = li as f64 * delta;
                        let slot = &mut lines[(li - lo) as usize];
                        if (ha > c) != (hb > c) {
                            let t = (c - ha) / (hb - ha);
                            slot.push(Hit { s: sa + t * (sb - sa), crossing: true, comp, param: acc + t * len });
                        }
                        if ha == c {
                            slot.push(Hit { s: sa, crossing: false, comp, param: acc });
                        }
                    }
                    acc += len;
                }
            }
            Boundary::Circle { center, radius } => {
                let (hc, sc) = coord(*center);
                let k0 = ((hc - radius) / delta).ceil() as i64;
                let k1 = ((hc + radius) / delta).floor() as i64;
                for li in k0.max(lo)..=k1.min(lo + nl - 1) {
                    let c = li as f64 * delta;
                    let disc = radius * radius - (c - hc) * (c - hc);
                    let slot = &mut lines[(li - lo) as usize];
                    let mk = |s: f64| {
                        let z = if horizontal { C64::new(s, c) } else { C64::new(c, s) };
                        self.param_of(z)
                    };
                    if disc > 0.0 {
                        let r = disc.sqrt();
                        slot.push(Hit { s: sc - r, crossing: true, comp, param: mk(sc - r) });
                        slot.push(Hit { s: sc + r, crossing: true, comp, param: mk(sc + r) });
                    } else if disc == 0.0 {
                        slot.push(Hit { s: sc, crossing: false, comp, param: mk(sc) });
                    }
                }
            }
        }
    }
}

/// Component and arclength position of the boundary point closest to `z`.
pub fn locate_on_boundary(bs: &[Boundary], z: C64) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, b) in bs.iter().enumerate() {
        let d = b.dist(z);
        if d < best.1 {
            best = (k, d);
        }
    }
    (best.0, bs[best.0].param_of(z))
}

/// Lattice directions `+x, +y, -x, -y`.
pub const DIRS: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// Neighbour of an interior vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Nbr {
    Interior(u32),
    Boundary(u32),
}

/// Boundary vertex `⟨z1, z2⟩`: anchor `z1` is interior, `z` is the first boundary point on the
/// lattice edge leaving the anchor in direction `dir`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryVertex {
    pub anchor: u32,
    pub dir: u8,
    pub z: C64,
    /// Index into the boundary list the grid was built from.
    pub component: u16,
    /// Arclength position of `z` on its component.
    pub param: f64,
}

/// Target vertices of a grid.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetVertices {
    None,
    /// Interior vertex `w^δ_e`.
    Point(u32),
    /// Boundary vertices on the target arc.
    Arc(Vec<u32>),
    /// Designated boundary vertex of a prime end.
    PrimeEnd(u32),
}

/// The lattice approximation `D^δ`: component of the start vertex in `δZ² ∩ D`.
#[derive(Clone, Debug)]
pub struct GridGraph {
    pub delta: f64,
    /// Lattice coordinates `(i, j)` of interior vertices (position `δ(i + ij)`).
    pub interior: Vec<(i32, i32)>,
    pub nbrs: Vec<[Nbr; 4]>,
    pub boundary: Vec<BoundaryVertex>,
    pub target: TargetVertices,
    /// Index of the start vertex.
    pub origin: u32,
    i0: i32,
    j0: i32,
    nx: usize,
    ny: usize,
    lookup: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl GridGraph {
    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    pub fn pos(&self, v: u32) -> C64 {
        let (i, j) = self.interior[v as usize];
        C64::new(i as f64 * self.delta, j as f64 * self.delta)
    }

    /// Interior vertex at lattice coordinates `(i, j)`, if any.
    pub fn index_of(&self, i: i32, j: i32) -> Option<u32> {
        let (a, b) = (i - self.i0, j - self.j0);
        if a < 0 || b < 0 || a as usize >= self.nx || b as usize >= self.ny {
            return None;
        }
        let v = self.lookup[b as usize * self.nx + a as usize];
        (v != NONE).then_some(v)
    }

    /// Interior vertex at the lattice point nearest to `z`, if that point is interior.
    pub fn vertex_at(&self, z: C64) -> Option<u32> {
        self.index_of((z.re / self.delta).round() as i32, (z.im / self.delta).round() as i32)
    }

    /// Interior vertex minimizing `|v - z|`; ties go to smaller real, then smaller imaginary part.
    pub fn closest_interior_vertex(&self, z: C64) -> u32 {
        let mut best = 0u32;
        let mut bd = f64::INFINITY;
        for (k, &(i, j)) in self.interior.iter().enumerate() {
            let d = (C64::new(i as f64 * self.delta, j as f64 * self.delta) - z).norm_sqr();
            let better = if d < bd {
                true
            } else if d == bd {
                let (bi, bj) = self.interior[best as usize];
                (i, j) < (bi, bj)
            } else {
                false
            };
            if better {
                bd = d;
                best = k as u32;
            }
        }
        best
    }

    /// Boundary vertices of a given component.
    pub fn boundary_of_component(&self, comp: u16) -> Vec<u32> {
        (0..self.boundary.len() as u32).filter(|&b| self.boundary[b as usize].component == comp).collect()
    }

    /// Target vertex set as a list of "absorbing" states: `(interior, boundary)` indices.
    pub fn target_sets(&self) -> (Vec<u32>, Vec<u32>) {
        match &self.target {
            TargetVertices::None => (vec![], vec![]),
            TargetVertices::Point(v) => (vec![*v], vec![]),
            TargetVertices::Arc(bs) => (vec![], bs.clone()),
            TargetVertices::PrimeEnd(b) => (vec![], vec![*b]),
        }
    }
}

/// Builds the lattice graph of the component of `seed` in the domain bounded by `boundaries`
/// (the first polygon is the outer boundary when the domain is bounded).
pub fn build_lattice(boundaries: &[Boundary], delta: f64, seed: C64) -> Result<GridGraph> {
    assert!(delta > 0.0);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for b in boundaries {
        let (a, bb, c, d) = b.bbox();
        x0 = x0.min(a);
        x1 = x1.max(bb);
        y0 = y0.min(c);
        y1 = y1.max(d);
    }
    if !x0.is_finite() {
        return Err(Error::InvalidDomain("unbounded domains have no lattice approximation".into()));
    }
    let i0 = (x0 / delta).floor() as i32 - 1;
    let i1 = (x1 / delta).ceil() as i32 + 1;
    let j0 = (y0 / delta).floor() as i32 - 1;
    let j1 = (y1 / delta).ceil() as i32 + 1;
    let nx = (i1 - i0 + 1) as usize;
    let ny = (j1 - j0 + 1) as usize;

    let mut rows: Vec<Vec<Hit>> = vec![Vec::new(); ny];
    let mut cols: Vec<Vec<Hit>> = vec![Vec::new(); nx];
    for (c, b) in boundaries.iter().enumerate() {
        b.push_hits(c as u16, true, delta, j0 as i64, &mut rows);
        b.push_hits(c as u16, false, delta, i0 as i64, &mut cols);
    }
    let by_s = |a: &Hit, b: &Hit| a.s.total_cmp(&b.s);
    rows.iter_mut().for_each(|r| r.sort_by(by_s));
    cols.iter_mut().for_each(|c| c.sort_by(by_s));

    let scale = (x1 - x0).abs().max((y1 - y0).abs()).max(1.0);
    let eps = 1e-12 * scale;

    // classify lattice points: inside by crossing parity, and not on the boundary
    let mut inside = vec![false; nx * ny];
    for (jj, row) in rows.iter().enumerate() {
        let mut ptr = 0;
        let mut parity = false;
        for ii in 0..nx {
            let x = (i0 + ii as i32) as f64 * delta;
            while ptr < row.len() && row[ptr].s < x - eps {
                if row[ptr].crossing {
                    parity = !parity;
                }
                ptr += 1;
            }
            let on_row = row[ptr..].iter().take_while(|h| h.s <= x + eps).next().is_some();
            inside[jj * nx + ii] = parity && !on_row;
        }
    }
    for (ii, col) in cols.iter().enumerate() {
        let y_on = |y: f64| col.binary_search_by(|h| {
            if h.s < y - eps {
                std::cmp::Ordering::Less
            } else if h.s > y + eps {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        });
        for jj in 0..ny {
            if inside[jj * nx + ii] && y_on((j0 + jj as i32) as f64 * delta).is_ok() {
                inside[jj * nx + ii] = false;
            }
        }
    }

    let si = (seed.re / delta).round() as i32;
    let sj = (seed.im / delta).round() as i32;
    if si < i0 || si > i1 || sj < j0 || sj > j1 || !inside[(sj - j0) as usize * nx + (si - i0) as usize] {
        return Err(Error::MeshTooCoarse);
    }

    // first boundary hit strictly beyond `x` and no farther than one step, along a sorted line
    let first_after = |line: &[Hit], x: f64, sign: f64| -> Option<Hit> {
        if sign > 0.0 {
            line.iter().find(|h| h.s > x + eps && h.s <= x + delta + eps).copied()
        } else {
            line.iter().rev().find(|h| h.s < x - eps && h.s >= x - delta - eps).copied()
        }
    };

    // BFS over interior edges from the seed
    let mut comp = vec![false; nx * ny];
    let start = (sj - j0) as usize * nx + (si - i0) as usize;
    comp[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(cell) = queue.pop_front() {
        let ii = cell % nx;
        let jj = cell / nx;
        let x = (i0 + ii as i32) as f64 * delta;
        let y = (j0 + jj as i32) as f64 * delta;
        for (d, &(di, dj)) in DIRS.iter().enumerate() {
            let blocked = if d % 2 == 0 {
                first_after(&rows[jj], x, di as f64).is_some()
            } else {
                first_after(&cols[ii], y, dj as f64).is_some()
            };
            if blocked {
                continue;
            }
            let (ni, nj) = (ii as i32 + di, jj as i32 + dj);
            if ni < 0 || nj < 0 || ni as usize >= nx || nj as usize >= ny {
                continue;
            }
            let nc = nj as usize * nx + ni as usize;
            if inside[nc] && !comp[nc] {
                comp[nc] = true;
                queue.push_back(nc);
            }
        }
    }

    let mut lookup = vec![NONE; nx * ny];
    let mut interior = Vec::new();
    for cell in 0..nx * ny {
        if comp[cell] {
            lookup[cell] = interior.len() as u32;
            interior.push((i0 + (cell % nx) as i32, j0 + (cell / nx) as i32));
        }
    }
    let mut nbrs = Vec::with_capacity(interior.len());
    let mut boundary = Vec::new();
    for (v, &(i, j)) in interior.iter().enumerate() {
        let ii = (i - i0) as usize;
        let jj = (j - j0) as usize;
        let x = i as f64 * delta;
        let y = j as f64 * delta;
        let mut nb = [Nbr::Interior(0); 4];
        for (d, &(di, dj)) in DIRS.iter().enumerate() {
            let hit = if d % 2 == 0 {
                first_after(&rows[jj], x, di as f64).map(|h| (h, C64::new(h.s, y)))
            } else {
                first_after(&cols[ii], y, dj as f64).map(|h| (h, C64::new(x, h.s)))
            };
            nb[d] = match hit {
                Some((h, z)) => {
                    boundary.push(BoundaryVertex {
                        anchor: v as u32,
                        dir: d as u8,
                        z,
                        component: h.comp,
                        param: h.param,
                    });
                    Nbr::Boundary(boundary.len() as u32 - 1)
                }
                None => {
                    let nc = (jj as i32 + dj) as usize * nx + (ii as i32 + di) as usize;
                    debug_assert!(lookup[nc] != NONE);
                    Nbr::Interior(lookup[nc])
                }
            };
        }
        nbrs.push(nb);
    }
    let origin = lookup[start];
    Ok(GridGraph { delta, interior, nbrs, boundary, target: TargetVertices::None, origin, i0, j0, nx, ny, lookup })
}

/// Whether the arc endpoints of `domain` lie on `δZ²`.
pub fn arc_mesh_compatible(domain: &DomainSpec, delta: f64) -> bool {
    let on = |z: C64| {
        let a = z / delta;
        (a.re - a.re.round()).abs() < 1e-9 && (a.im - a.im.round()).abs() < 1e-9
    };
    match &domain.target {
        TargetSpec::Arc { from, to } => on(*from) && on(*to),
        TargetSpec::PrimeEnd { z, normal } => {
            on(*z) && ((normal.re.abs() - 1.0).abs() < 1e-12 || (normal.im.abs() - 1.0).abs() < 1e-12)
        }
        _ => true,
    }
}

/// Builds `D^δ` for a domain and marks its target vertices.
pub fn build_grid(domain: &DomainSpec, delta: f64) -> Result<GridGraph> {
    if domain.is_sphere() {
        return Err(Error::Unsupported("sphere domains have no grid approximation".into()));
    }
    let zero = C64::new(0.0, 0.0);
    if delta >= domain.dist_to_boundary(zero) {
        return Err(Error::MeshTooCoarse);
    }
    let bs = domain.boundaries();
    let mut g = build_lattice(&bs, delta, zero)?;
    if g.nbrs[g.origin as usize].iter().all(|n| matches!(n, Nbr::Boundary(_))) {
        return Err(Error::MeshTooCoarse);
    }
    g.target = match &domain.target {
        TargetSpec::Point { z } => {
            let v = g.closest_interior_vertex(*z);
            if (g.pos(v) - z).norm() > delta || v == g.origin {
                return Err(Error::TargetUnreachable(format!("no interior vertex within δ of {z}")));
            }
            TargetVertices::Point(v)
        }
        TargetSpec::Infinity => unreachable!("validated: infinity only on the sphere"),
        TargetSpec::Arc { from, to } => {
            if !arc_mesh_compatible(domain, delta) {
                return Err(Error::MeshIncompatible("arc endpoints are not lattice points".into()));
            }
            let (c, pa) = locate_on_boundary(&bs, *from);
            let (_, pb) = locate_on_boundary(&bs, *to);
            let per = bs[c].perimeter();
            let len = (pb - pa).rem_euclid(per);
            let on_arc: Vec<u32> = (0..g.boundary.len() as u32)
                .filter(|&b| {
                    let bv = &g.boundary[b as usize];
                    bv.component as usize == c && (bv.param - pa).rem_euclid(per) <= len + 1e-12
                })
                .collect();
            if on_arc.is_empty() {
                return Err(Error::TargetUnreachable("no boundary vertex on the target arc".into()));
            }
            TargetVertices::Arc(on_arc)
        }
        TargetSpec::PrimeEnd { z, normal } => {
            if !arc_mesh_compatible(domain, delta) {
                return Err(Error::MeshIncompatible("prime end must be a lattice point with axis normal".into()));
            }
            let anchor = g.vertex_at(*z + *normal * delta);
            let found = anchor.and_then(|a| {
                g.nbrs[a as usize].iter().find_map(|n| match n {
                    Nbr::Boundary(b) if (g.boundary[*b as usize].z - z).norm() < 1e-9 => Some(*b),
                    _ => None,
                })
            });
            match found {
                Some(b) => TargetVertices::PrimeEnd(b),
                None => return Err(Error::TargetUnreachable("prime end has no boundary vertex".into())),
            }
        }
    };
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk(n: usize) -> DomainSpec {
        DomainSpec::unit_disk(n, TargetSpec::Point { z: C64::new(0.5, 0.0) })
    }

    #[test]
    fn quarter_mesh_count_matches_enumeration() {
        // the true circle: use a circle boundary directly
        let g = build_lattice(&[Boundary::Circle { center: C64::new(0.0, 0.0), radius: 1.0 }], 0.25, C64::new(0.0, 0.0))
            .unwrap();
        let mut count = 0;
        for j in -4..=4i32 {
            for k in -4..=4i32 {
                if j * j + k * k < 16 {
                    count += 1;
                }
            }
        }
        assert_eq!(g.n_interior(), count);
    }

    #[test]
    fn boundary_pair_hits_unit_point() {
        let g = build_lattice(&[Boundary::Circle { center: C64::new(0.0, 0.0), radius: 1.0 }], 0.5, C64::new(0.0, 0.0))
            .unwrap();
        let v = g.index_of(1, 0).unwrap();
        match g.nbrs[v as usize][0] {
            Nbr::Boundary(b) => assert!((g.boundary[b as usize].z - C64::new(1.0, 0.0)).norm() < 1e-15),
            other => panic!("expected boundary neighbour, got {other:?}"),
        }
    }

    #[test]
    fn polygon_disk_grid_invariants() {
        let d = disk(512);
        let g = build_grid(&d, 1.0 / 16.0).unwrap();
        for &(i, j) in &g.interior {
            let z = C64::new(i as f64, j as f64) / 16.0;
            assert!(d.contains(z));
        }
        for b in &g.boundary {
            assert!(d.dist_to_boundary(b.z) < 1e-12);
            let a = g.pos(b.anchor);
            // open segment inside
            for k in 1..20 {
                let w = a + (b.z - a) * (k as f64 / 20.0);
                if k < 20 {
                    assert!(d.contains(w) || (w - b.z).norm() < 1e-9);
                }
            }
        }
        assert!(matches!(g.target, TargetVertices::Point(_)));
    }

    #[test]
    fn area_converges() {
        let d = disk(2048);
        for &n in &[16.0, 32.0, 64.0] {
            let g = build_grid(&d, 1.0 / n).unwrap();
            let a = g.n_interior() as f64 / (n * n);
            assert!((a - std::f64::consts::PI).abs() / std::f64::consts::PI < 0.05, "{a}");
        }
    }

    #[test]
    fn closest_vertex_ties() {
        let g = build_grid(&disk(256), 0.25).unwrap();
        let v = g.closest_interior_vertex(C64::new(0.125, 0.0));
        assert_eq!(g.interior[v as usize], (0, 0));
        let v = g.closest_interior_vertex(C64::new(0.25, 0.5));
        assert_eq!(g.interior[v as usize], (1, 2));
    }

    #[test]
    fn square_vertices_on_edges_excluded() {
        let sq = vec![C64::new(-1.0, -1.0), C64::new(1.0, -1.0), C64::new(1.0, 1.0), C64::new(-1.0, 1.0)];
        let g = build_lattice(&[Boundary::Polygon(sq)], 0.5, C64::new(0.0, 0.0)).unwrap();
        assert_eq!(g.n_interior(), 9);
        assert_eq!(g.n_boundary(), 12);
        for b in &g.boundary {
            let a = g.pos(b.anchor);
            assert!(((b.z - a).norm() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn hole_and_json_roundtrip() {
        let s = r#"{"outer": [[-2,-2],[2,-2],[2,2],[-2,2]],
                    "holes": [[[0.6,0.6],[1.2,0.6],[1.2,1.2],[0.6,1.2]]],
                    "target": {"kind":"point","z":[-1.0,0.5]}, "label":"square with hole"}"#;
        let d = DomainSpec::from_json_str(s).unwrap();
        let back = DomainSpec::from_json_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(d, back);
        let g = build_grid(&d, 0.125).unwrap();
        assert!(g.vertex_at(C64::new(0.875, 0.875)).is_none());
        assert!(g.boundary.iter().any(|b| b.component == 1));
    }

    #[test]
    fn sphere_json() {
        let d = DomainSpec::from_json_str(r#"{"outer":"sphere","target":{"kind":"infinity"}}"#).unwrap();
        assert!(d.is_sphere());
        assert!(build_grid(&d, 0.1).is_err());
    }

    #[test]
    fn prime_end_and_arc() {
        let sq = vec![C64::new(-1.0, -1.0), C64::new(1.0, -1.0), C64::new(1.0, 1.0), C64::new(-1.0, 1.0)];
        let d = DomainSpec {
            outer: Outer::Polygon(sq.clone()),
            holes: vec![],
            target: TargetSpec::PrimeEnd { z: C64::new(0.0, -1.0), normal: C64::new(0.0, 1.0) },
            label: String::new(),
        };
        d.validate().unwrap();
        let g = build_grid(&d, 0.25).unwrap();
        match g.target {
            TargetVertices::PrimeEnd(b) => assert!((g.boundary[b as usize].z - C64::new(0.0, -1.0)).norm() < 1e-12),
            _ => panic!(),
        }
        let d2 = DomainSpec { target: TargetSpec::Arc { from: C64::new(1.0, -1.0), to: C64::new(-1.0, 1.0) }, ..d };
        d2.validate().unwrap();
        let g2 = build_grid(&d2, 0.25).unwrap();
        let TargetVertices::Arc(a) = &g2.target else { panic!() };
        // right and top sides: 7 + 7 boundary vertices
        assert_eq!(a.len(), 14);
        assert!(build_grid(&d2, 0.3).is_err());
    }
}
