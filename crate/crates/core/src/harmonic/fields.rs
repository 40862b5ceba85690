//! Dirichlet problems on `D^δ` and the harmonic fields built from them.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64 as C64;

use super::sparse::{bicgstab, cg, Csr, CsrBuilder, SolveOptions};
use crate::domain::{GridGraph, Nbr, DIRS};
use crate::error::{Error, Result};

/// A vertex of `D^δ`.
pub type Vertex = Nbr;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Green,
    HarmonicMeasure,
    PoissonKernel,
    HittingProbability,
    DiscreteG,
    Dirichlet,
}

/// Analytic part split off a field before the grid solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Singular {
    None,
    /// `-(1/2π) ln|z - pole|`.
    Log { pole: C64 },
    /// `-Im(1/h(z))` with the affine chart `h(z) = i(z - w)/normal`.
    BoundaryPole { w: C64, normal: C64 },
}

impl Singular {
    pub fn eval(&self, z: C64) -> f64 {
        match *self {
            Singular::None => 0.0,
            Singular::Log { pole } => -(z - pole).norm().ln() / (2.0 * PI),
            Singular::BoundaryPole { w, normal } => {
                let h = C64::new(0.0, 1.0) * (z - w) / normal;
                if h.norm() == 0.0 {
                    0.0
                } else {
                    -h.inv().im
                }
            }
        }
    }
}

/// Discretization of the Laplacian.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stencil {
    /// Graph Laplacian of `D^δ`: the generator of simple random walk.
    Graph,
    /// Shortley–Weller: unequal arms at boundary vertices, second order in `δ`.
    ShortleyWeller,
}

const FREE_NONE: u32 = u32::MAX;

/// Linear system `A u = C g` for the free interior vertices, where `g` holds values on Dirichlet
/// nodes numbered interior-first (`v`) then boundary (`n_interior + b`).
#[derive(Clone, Debug)]
pub struct LaplaceSystem {
    pub stencil: Stencil,
    pub n_interior: usize,
    /// Row of each interior vertex, or `u32::MAX` for fixed vertices.
    pub row_of: Vec<u32>,
    pub free: Vec<u32>,
    pub a: Csr,
    pub c: Csr,
    a_t: Option<Csr>,
    c_t: Option<Csr>,
}

impl LaplaceSystem {
    /// `fixed[v]` marks interior vertices held at Dirichlet values.
    pub fn new(grid: &GridGraph, fixed: &[bool], stencil: Stencil) -> Self {
        let n = grid.n_interior();
        let mut row_of = vec![FREE_NONE; n];
        let mut free = Vec::new();
        for v in 0..n {
            if !fixed.get(v).copied().unwrap_or(false) {
                row_of[v] = free.len() as u32;
                free.push(v as u32);
            }
        }
        let mut ab = CsrBuilder::new(free.len());
        let mut cb = CsrBuilder::new(n + grid.n_boundary());
        let d = grid.delta;
        for &v in &free {
            let p = grid.pos(v);
            let arms: [f64; 4] = std::array::from_fn(|k| match grid.nbrs[v as usize][k] {
                Nbr::Interior(_) => d,
                Nbr::Boundary(b) => match stencil {
                    Stencil::Graph => d,
                    Stencil::ShortleyWeller => (grid.boundary[b as usize].z - p).norm().max(1e-6 * d),
                },
            });
            let mut coef = [0.0; 4];
            for (a, b) in [(0usize, 2usize), (1, 3)] {
                let (ha, hb) = (arms[a], arms[b]);
                coef[a] = 2.0 * d * d / (ha * (ha + hb));
                coef[b] = 2.0 * d * d / (hb * (ha + hb));
            }
            let diag: f64 = coef.iter().sum();
            let mut diag_done = false;
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(5);
            for k in 0..4 {
                match grid.nbrs[v as usize][k] {
                    Nbr::Interior(w) if row_of[w as usize] != FREE_NONE => {
                        row.push((row_of[w as usize] as usize, -coef[k]));
                    }
                    Nbr::Interior(w) => cb.push(w as usize, coef[k]),
                    Nbr::Boundary(b) => cb.push(n + b as usize, coef[k]),
                }
            }
            row.push((row_of[v as usize] as usize, diag));
            row.sort_by_key(|e| e.0);
            for (c, x) in row {
                if c == row_of[v as usize] as usize {
                    diag_done = true;
                }
                ab.push(c, x);
            }
            debug_assert!(diag_done);
            ab.end_row();
            cb.end_row();
        }
        LaplaceSystem { stencil, n_interior: n, row_of, free, a: ab.finish(), c: cb.finish(), a_t: None, c_t: None }
    }

    fn opts(&self) -> SolveOptions {
        SolveOptions { tol: 1e-13, max_iter: 50 * (self.free.len() + 10) }
    }

    fn raw_solve(&self, a: &Csr, rhs: &[f64], x: &mut [f64]) -> Result<f64> {
        let st = match self.stencil {
            Stencil::Graph => cg(a, rhs, x, self.opts())?,
            Stencil::ShortleyWeller => bicgstab(a, rhs, x, self.opts())?,
        };
        Ok(st.residual)
    }

    /// Solves for interior values given Dirichlet values `g` (length `n_interior + n_boundary`;
    /// entries at free vertices are ignored). Returns interior values (fixed vertices copied from
    /// `g`) and the max row residual.
    pub fn solve(&self, g: &[f64]) -> Result<(Vec<f64>, f64)> {
        let rhs = self.c.mul(g);
        let mut x = vec![0.0; self.free.len()];
        self.raw_solve(&self.a, &rhs, &mut x)?;
        let ax = self.a.mul(&x);
        let diag = self.a.diagonal();
        let residual =
            (0..x.len()).map(|i| ((ax[i] - rhs[i]) / diag[i]).abs()).fold(0.0, f64::max);
        let mut out = g[..self.n_interior].to_vec();
        for (r, &v) in self.free.iter().enumerate() {
            out[v as usize] = x[r];
        }
        Ok((out, residual))
    }

    /// Weights `w` with `u(v) = Σ w_k g_k` for the free vertex `v` (an adjoint solve).
    pub fn weights_at(&mut self, v: u32) -> Result<Vec<f64>> {
        let r = self.row_of[v as usize];
        assert!(r != FREE_NONE, "weights requested at a fixed vertex");
        if self.a_t.is_none() {
            self.a_t = Some(self.a.transpose());
        }
        let mut e = vec![0.0; self.free.len()];
        e[r as usize] = 1.0;
        let mut y = vec![0.0; self.free.len()];
        let at = self.a_t.as_ref().unwrap();
        self.raw_solve(at, &e, &mut y)?;
        if self.c_t.is_none() {
            self.c_t = Some(self.c.transpose());
        }
        Ok(self.c_t.as_ref().unwrap().mul(&y))
    }
}

/// A solved field on `D^δ`: `value = scale·(regular + singular)`.
#[derive(Clone, Debug)]
pub struct HarmonicField<'g> {
    pub grid: &'g GridGraph,
    pub kind: FieldKind,
    /// Smooth part at interior vertices.
    pub regular: Vec<f64>,
    /// Smooth part at boundary vertices (the Dirichlet data).
    pub boundary_regular: Vec<f64>,
    pub singular: Singular,
    pub scale: f64,
    /// Max row residual of the linear system, relative to the diagonal.
    pub residual: f64,
}

impl<'g> HarmonicField<'g> {
    pub fn value(&self, v: u32) -> f64 {
        self.scale * (self.regular[v as usize] + self.singular.eval(self.grid.pos(v)))
    }

    pub fn boundary_value(&self, b: u32) -> f64 {
        self.scale * (self.boundary_regular[b as usize] + self.singular.eval(self.grid.boundary[b as usize].z))
    }

    pub fn vertex_value(&self, v: Vertex) -> f64 {
        match v {
            Nbr::Interior(i) => self.value(i),
            Nbr::Boundary(b) => self.boundary_value(b),
        }
    }

    fn regular_corner(&self, i: i32, j: i32, from: Option<(u32, usize)>) -> Option<f64> {
        if let Some(v) = self.grid.index_of(i, j) {
            return Some(self.regular[v as usize]);
        }
        let (a, k) = from?;
        match self.grid.nbrs[a as usize][k] {
            Nbr::Boundary(b) => {
                let h = (self.grid.boundary[b as usize].z - self.grid.pos(a)).norm();
                let ua = self.regular[a as usize];
                Some(ua + (self.boundary_regular[b as usize] - ua) * self.grid.delta / h.max(1e-12))
            }
            Nbr::Interior(_) => None,
        }
    }

    /// Bilinear interpolation of the smooth part on the lattice cell of `z`, plus the exact
    /// singular part. Corners outside `D^δ` are extrapolated linearly along the edge through the
    /// boundary vertex.
    pub fn value_at(&self, z: C64) -> Result<f64> {
        let d = self.grid.delta;
        let (fx, fy) = (z.re / d, z.im / d);
        let (i0, j0) = (fx.floor() as i32, fy.floor() as i32);
        let (sx, sy) = (fx - i0 as f64, fy - j0 as f64);
        let corners = [(i0, j0), (i0 + 1, j0), (i0, j0 + 1), (i0 + 1, j0 + 1)];
        let mut vals = [None; 4];
        for (k, &(i, j)) in corners.iter().enumerate() {
            vals[k] = self.grid.index_of(i, j).map(|v| self.regular[v as usize]);
        }
        for (k, &(i, j)) in corners.iter().enumerate() {
            if vals[k].is_some() {
                continue;
            }
            let mut acc = Vec::new();
            for (k2, &(i2, j2)) in corners.iter().enumerate() {
                if k2 == k || ((i2 != i) && (j2 != j)) {
                    continue;
                }
                if let Some(a) = self.grid.index_of(i2, j2) {
                    let dir = DIRS.iter().position(|&(di, dj)| (i2 + di, j2 + dj) == (i, j)).unwrap();
                    if let Some(x) = self.regular_corner(i, j, Some((a, dir))) {
                        acc.push(x);
                    }
                }
            }
            if !acc.is_empty() {
                vals[k] = Some(acc.iter().sum::<f64>() / acc.len() as f64);
            }
        }
        let known: Vec<f64> = vals.iter().flatten().copied().collect();
        if known.is_empty() {
            return Err(Error::FieldInterpolationOutOfDomain(format!("no lattice data near {z}")));
        }
        let fill = known.iter().sum::<f64>() / known.len() as f64;
        let v: Vec<f64> = vals.iter().map(|x| x.unwrap_or(fill)).collect();
        let reg = v[0] * (1.0 - sx) * (1.0 - sy) + v[1] * sx * (1.0 - sy) + v[2] * (1.0 - sx) * sy + v[3] * sx * sy;
        Ok(self.scale * (reg + self.singular.eval(z)))
    }

    /// Writes `vertex_x, vertex_y, value` for interior then boundary vertices.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "vertex_x,vertex_y,value")?;
        for v in 0..self.grid.n_interior() as u32 {
            let p = self.grid.pos(v);
            writeln!(f, "{},{},{}", p.re, p.im, self.value(v))?;
        }
        for b in 0..self.grid.n_boundary() as u32 {
            let p = self.grid.boundary[b as usize].z;
            writeln!(f, "{},{},{}", p.re, p.im, self.boundary_value(b))?;
        }
        Ok(())
    }
}

fn mask(grid: &GridGraph, set: &[u32]) -> Vec<bool> {
    let mut m = vec![false; grid.n_interior()];
    for &v in set {
        m[v as usize] = true;
    }
    m
}

fn solve_field<'g>(
    grid: &'g GridGraph,
    fixed: &[u32],
    stencil: Stencil,
    kind: FieldKind,
    singular: Singular,
    data: impl Fn(C64) -> f64,
) -> Result<HarmonicField<'g>> {
    let n = grid.n_interior();
    let sys = LaplaceSystem::new(grid, &mask(grid, fixed), stencil);
    let mut g = vec![0.0; n + grid.n_boundary()];
    for &v in fixed {
        g[v as usize] = data(grid.pos(v)) - singular.eval(grid.pos(v));
    }
    for (b, bv) in grid.boundary.iter().enumerate() {
        g[n + b] = data(bv.z) - singular.eval(bv.z);
    }
    let (regular, residual) = sys.solve(&g)?;
    Ok(HarmonicField { grid, kind, regular, boundary_regular: g[n..].to_vec(), singular, scale: 1.0, residual })
}

/// Graph-harmonic field with the given boundary data and interior vertices held at fixed values.
pub fn solve_dirichlet<'g>(grid: &'g GridGraph, boundary_values: &[f64], fixed: &[(u32, f64)]) -> Result<HarmonicField<'g>> {
    let n = grid.n_interior();
    let set: Vec<u32> = fixed.iter().map(|f| f.0).collect();
    let sys = LaplaceSystem::new(grid, &mask(grid, &set), Stencil::Graph);
    let mut g = vec![0.0; n + grid.n_boundary()];
    for &(v, x) in fixed {
        g[v as usize] = x;
    }
    g[n..].copy_from_slice(boundary_values);
    let (regular, residual) = sys.solve(&g)?;
    Ok(HarmonicField {
        grid,
        kind: FieldKind::Dirichlet,
        regular,
        boundary_regular: boundary_values.to_vec(),
        singular: Singular::None,
        scale: 1.0,
        residual,
    })
}

/// Shortley–Weller solution of a Dirichlet problem with data `f` on `∂D` and on `fixed`.
pub fn solve_dirichlet_sw<'g>(grid: &'g GridGraph, fixed: &[u32], f: impl Fn(C64) -> f64) -> Result<HarmonicField<'g>> {
    solve_field(grid, fixed, Stencil::ShortleyWeller, FieldKind::Dirichlet, Singular::None, f)
}

/// Green's function of `D ∖ extra_hull` with pole `pole`; the logarithm is split off and only the
/// smooth correction is solved on the grid.
pub fn green_function<'g>(grid: &'g GridGraph, extra_hull: &[u32], pole: C64) -> Result<HarmonicField<'g>> {
    let d = grid.delta;
    let near_boundary = grid.boundary.iter().any(|b| (b.z - pole).norm() < 1e-9 * d);
    if near_boundary || extra_hull.iter().any(|&v| (grid.pos(v) - pole).norm() < 1e-9 * d) {
        return Err(Error::PoleOnBoundary);
    }
    solve_field(grid, extra_hull, Stencil::ShortleyWeller, FieldKind::Green, Singular::Log { pole }, |_| 0.0)
}

/// Harmonic measure of a set of boundary vertices in `D ∖ extra_hull`.
pub fn harmonic_measure<'g>(grid: &'g GridGraph, extra_hull: &[u32], arc: &[u32]) -> Result<HarmonicField<'g>> {
    if arc.is_empty() {
        return Err(Error::EmptyArc);
    }
    let n = grid.n_interior();
    let sys = LaplaceSystem::new(grid, &mask(grid, extra_hull), Stencil::ShortleyWeller);
    let mut g = vec![0.0; n + grid.n_boundary()];
    for &b in arc {
        g[n + b as usize] = 1.0;
    }
    let (regular, residual) = sys.solve(&g)?;
    Ok(HarmonicField {
        grid,
        kind: FieldKind::HarmonicMeasure,
        regular,
        boundary_regular: g[n..].to_vec(),
        singular: Singular::None,
        scale: 1.0,
        residual,
    })
}

/// Poisson kernel of `D ∖ extra_hull` with pole at the flat boundary point `w`, normalized by
/// `P(h⁻¹(z)) = -Im(1/z) + O(1)` for the affine chart `h(z) = i(z - w)/normal`.
pub fn poisson_kernel<'g>(grid: &'g GridGraph, extra_hull: &[u32], w: C64, normal: C64) -> Result<HarmonicField<'g>> {
    let normal = normal / normal.norm();
    solve_field(
        grid,
        extra_hull,
        Stencil::ShortleyWeller,
        FieldKind::PoissonKernel,
        Singular::BoundaryPole { w, normal },
        |_| 0.0,
    )
}

/// Node numbering of `D^δ` for graph algorithms: interior `v`, boundary `n_interior + b`.
pub fn node_of(grid: &GridGraph, v: Vertex) -> usize {
    match v {
        Nbr::Interior(i) => i as usize,
        Nbr::Boundary(b) => grid.n_interior() + b as usize,
    }
}

/// Adjacency lists of `D^δ` in node numbering.
pub fn adjacency(grid: &GridGraph) -> Vec<Vec<usize>> {
    let n = grid.n_interior();
    let mut adj: Vec<Vec<usize>> = grid.nbrs.iter().map(|nb| nb.iter().map(|&w| node_of(grid, w)).collect()).collect();
    for bv in &grid.boundary {
        adj.push(vec![bv.anchor as usize]);
    }
    debug_assert_eq!(adj.len(), n + grid.n_boundary());
    adj
}

/// Harmonic function for simple random walk on a graph: `fixed[k] = Some(x)` pins node `k`,
/// every other node is the average of its neighbours. Solved by conjugate gradients.
pub fn graph_harmonic(adj: &[Vec<usize>], fixed: &[Option<f64>]) -> Result<(Vec<f64>, f64)> {
    let n = adj.len();
    let mut row_of = vec![FREE_NONE; n];
    let mut free = Vec::new();
    for k in 0..n {
        if fixed[k].is_none() {
            row_of[k] = free.len() as u32;
            free.push(k);
        }
    }
    let mut ab = CsrBuilder::new(free.len());
    let mut rhs = vec![0.0; free.len()];
    for (r, &k) in free.iter().enumerate() {
        let mut row: Vec<(usize, f64)> = vec![(r, adj[k].len() as f64)];
        for &w in &adj[k] {
            match fixed[w] {
                Some(x) => rhs[r] += x,
                None => row.push((row_of[w] as usize, -1.0)),
            }
        }
        row.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for (c, x) in row {
            match merged.last_mut() {
                Some(l) if l.0 == c => l.1 += x,
                _ => merged.push((c, x)),
            }
        }
        for (c, x) in merged {
            ab.push(c, x);
        }
        ab.end_row();
    }
    let a = ab.finish();
    let mut x = vec![0.0; free.len()];
    cg(&a, &rhs, &mut x, SolveOptions { tol: 1e-13, max_iter: 50 * (free.len() + 10) })?;
    let ax = a.mul(&x);
    let diag = a.diagonal();
    let residual = (0..x.len()).map(|i| ((ax[i] - rhs[i]) / diag[i]).abs()).fold(0.0, f64::max);
    let mut out: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
    for (r, &k) in free.iter().enumerate() {
        out[k] = x[r];
    }
    Ok((out, residual))
}

/// Probability that simple random walk from each vertex hits `target` before `forbidden` or any
/// other boundary vertex.
pub fn hitting_probability<'g>(
    grid: &'g GridGraph,
    target: &[Vertex],
    forbidden: &[Vertex],
    from: u32,
) -> Result<HarmonicField<'g>> {
    let adj = adjacency(grid);
    let n = grid.n_interior();
    let mut fixed: Vec<Option<f64>> = vec![None; adj.len()];
    for f in fixed.iter_mut().skip(n) {
        *f = Some(0.0);
    }
    for &v in forbidden {
        fixed[node_of(grid, v)] = Some(0.0);
    }
    for &v in target {
        fixed[node_of(grid, v)] = Some(1.0);
    }
    let (h, residual) = graph_harmonic(&adj, &fixed)?;
    if !(h[from as usize] > 0.0) {
        return Err(Error::TargetDisconnected);
    }
    Ok(HarmonicField {
        grid,
        kind: FieldKind::HittingProbability,
        regular: h[..n].to_vec(),
        boundary_regular: h[n..].to_vec(),
        singular: Singular::None,
        scale: 1.0,
        residual,
    })
}

/// The function `g_k` for a loop-erased path prefix ending at `tip`: zero on the boundary and the
/// prefix except the tip, harmonic elsewhere off the prefix, normalized to 1 at a point target or
/// to unit flux into an arc target.
pub fn discrete_harmonic_g<'g>(
    grid: &'g GridGraph,
    prefix: &[u32],
    target: &[Vertex],
    tip: u32,
) -> Result<HarmonicField<'g>> {
    let adj = adjacency(grid);
    let n = grid.n_interior();
    let mut fixed: Vec<Option<f64>> = vec![None; adj.len()];
    for f in fixed.iter_mut().skip(n) {
        *f = Some(0.0);
    }
    for &v in prefix {
        fixed[v as usize] = Some(0.0);
    }
    fixed[tip as usize] = Some(1.0);
    if target.iter().any(|t| matches!(t, Nbr::Interior(v) if prefix.contains(v) && *v != tip)) {
        return Err(Error::TargetDisconnected);
    }
    let (h, residual) = graph_harmonic(&adj, &fixed)?;
    let norm = match target {
        [Nbr::Interior(v)] => h[*v as usize],
        _ => target
            .iter()
            .map(|t| match *t {
                Nbr::Boundary(b) => {
                    let a = grid.boundary[b as usize].anchor as usize;
                    h[a] - h[n + b as usize]
                }
                Nbr::Interior(v) => h[v as usize],
            })
            .sum(),
    };
    if !(norm > 0.0) {
        return Err(Error::TargetDisconnected);
    }
    Ok(HarmonicField {
        grid,
        kind: FieldKind::DiscreteG,
        regular: h[..n].to_vec(),
        boundary_regular: h[n..].to_vec(),
        singular: Singular::None,
        scale: 1.0 / norm,
        residual,
    })
}

/// Interior vertices within `δ` of a polyline.
pub fn rasterize_polyline(grid: &GridGraph, pts: &[C64]) -> Vec<u32> {
    let d = grid.delta;
    let mut out = Vec::new();
    let segs: Vec<(C64, C64)> = if pts.len() == 1 { vec![(pts[0], pts[0])] } else { pts.windows(2).map(|w| (w[0], w[1])).collect() };
    for (a, b) in segs {
        let (x0, x1) = (a.re.min(b.re) - d, a.re.max(b.re) + d);
        let (y0, y1) = (a.im.min(b.im) - d, a.im.max(b.im) + d);
        for i in (x0 / d).floor() as i32..=(x1 / d).ceil() as i32 {
            for j in (y0 / d).floor() as i32..=(y1 / d).ceil() as i32 {
                if let Some(v) = grid.index_of(i, j) {
                    if crate::domain::dist_to_segment(grid.pos(v), a, b) <= d {
                        out.push(v);
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}
