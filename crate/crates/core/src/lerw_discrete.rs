//! Discrete LERW on `D^δ`: the h-transformed walk, chronological loop erasure, Wilson's
//! algorithm, the discrete martingale `g_k`, and driving functions of lattice paths.

use std::collections::HashMap;
use std::io::Write;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{GridGraph, Nbr};
use crate::error::{Error, Result};
use crate::harmonic::fields::{adjacency, discrete_harmonic_g, hitting_probability, node_of, Vertex};
use crate::harmonic::DriftContext;
use crate::lerw_continuous::{Cadence, DriftEngine};
use crate::loewner::codec::{weld_polyline, Welding, DCAP_MAX};
use crate::loewner::{Anchor, BaseHull, DrivingPath, WholePlaneState};

/// A nearest-neighbour path on `D^δ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticePath {
    pub vertices: Vec<Vertex>,
    pub delta: f64,
    pub simple: bool,
}

pub fn vertex_pos(grid: &GridGraph, v: Vertex) -> C64 {
    match v {
        Nbr::Interior(i) => grid.pos(i),
        Nbr::Boundary(b) => grid.boundary[b as usize].z,
    }
}

/// Inverse of [`node_of`].
pub fn vertex_of_node(grid: &GridGraph, k: usize) -> Vertex {
    let n = grid.n_interior();
    if k < n {
        Nbr::Interior(k as u32)
    } else {
        Nbr::Boundary((k - n) as u32)
    }
}

impl LatticePath {
    /// Number of steps.
    pub fn len(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn points(&self, grid: &GridGraph) -> Vec<C64> {
        self.vertices.iter().map(|&v| vertex_pos(grid, v)).collect()
    }

    pub fn reversed(&self) -> LatticePath {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        LatticePath { vertices, delta: self.delta, simple: self.simple }
    }

    /// Whether consecutive vertices are neighbours in `grid`.
    pub fn is_nearest_neighbour(&self, grid: &GridGraph) -> bool {
        self.vertices.windows(2).all(|w| match (w[0], w[1]) {
            (Nbr::Interior(a), b) => grid.nbrs[a as usize].contains(&b),
            (Nbr::Boundary(b), Nbr::Interior(a)) => grid.boundary[b as usize].anchor == a,
            _ => false,
        })
    }

    pub fn write_csv<W: Write>(&self, grid: &GridGraph, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k", "x", "y"])?;
        for (k, z) in self.points(grid).iter().enumerate() {
            wr.write_record([k.to_string(), z.re.to_string(), z.im.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Simple random walk on `D^δ` conditioned to hit a target set before the rest of the boundary
/// (and before optional forbidden vertices), realized as the Doob h-transform.
#[derive(Clone, Debug)]
pub struct ConditionedWalk {
    pub targets: Vec<Vertex>,
    /// Hitting probability in node numbering.
    pub h: Vec<f64>,
    absorbing: Vec<bool>,
    /// Cumulative transition weights per interior vertex.
    cum: Vec<[f64; 4]>,
}

impl ConditionedWalk {
    pub fn new(grid: &GridGraph, targets: &[Vertex], forbidden: &[Vertex]) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::TargetDisconnected);
        }
        let from = match targets[0] {
            Nbr::Interior(v) => v,
            Nbr::Boundary(b) => grid.boundary[b as usize].anchor,
        };
        let field = hitting_probability(grid, targets, forbidden, from)?;
        let mut h = field.regular.clone();
        h.extend_from_slice(&field.boundary_regular);
        let mut absorbing = vec![false; h.len()];
        for &t in targets {
            absorbing[node_of(grid, t)] = true;
        }
        let cum = grid
            .nbrs
            .iter()
            .map(|nb| {
                let mut c = [0.0; 4];
                let mut s = 0.0;
                for k in 0..4 {
                    s += h[node_of(grid, nb[k])].max(0.0);
                    c[k] = s;
                }
                c
            })
            .collect();
        Ok(ConditionedWalk { targets: targets.to_vec(), h, absorbing, cum })
    }

    /// Walk towards the grid's own target.
    pub fn for_grid(grid: &GridGraph) -> Result<Self> {
        let (iv, bv) = grid.target_sets();
        let targets: Vec<Vertex> =
            iv.into_iter().map(Nbr::Interior).chain(bv.into_iter().map(Nbr::Boundary)).collect();
        Self::new(grid, &targets, &[])
    }

    pub fn h_at(&self, grid: &GridGraph, v: Vertex) -> f64 {
        self.h[node_of(grid, v)]
    }

    /// Transition probabilities out of an interior vertex, in the order of `grid.nbrs`.
    pub fn step_probabilities(&self, v: u32) -> [f64; 4] {
        let c = self.cum[v as usize];
        let tot = c[3];
        [c[0] / tot, (c[1] - c[0]) / tot, (c[2] - c[1]) / tot, (c[3] - c[2]) / tot]
    }

    pub fn sample_with<R: Rng>(&self, grid: &GridGraph, from: u32, rng: &mut R) -> Result<LatticePath> {
        if !(self.h[from as usize] > 0.0) {
            return Err(Error::TargetDisconnected);
        }
        let mut v = Nbr::Interior(from);
        let mut vertices = vec![v];
        while !self.absorbing[node_of(grid, v)] {
            let i = match v {
                Nbr::Interior(i) => i as usize,
                Nbr::Boundary(_) => unreachable!("non-target boundary vertices have h = 0"),
            };
            let c = &self.cum[i];
            let u = rng.gen::<f64>() * c[3];
            let k = if u < c[0] {
                0
            } else if u < c[1] {
                1
            } else if u < c[2] {
                2
            } else {
                3
            };
            v = grid.nbrs[i][k];
            vertices.push(v);
        }
        Ok(LatticePath { vertices, delta: grid.delta, simple: false })
    }
}

pub fn sample_conditioned_walk(grid: &GridGraph, walk: &ConditionedWalk, from: u32, seed: u64) -> Result<LatticePath> {
    walk.sample_with(grid, from, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Chronological loop erasure.
pub fn loop_erase(path: &LatticePath) -> LatticePath {
    let mut out: Vec<Vertex> = Vec::with_capacity(path.vertices.len());
    let mut at: HashMap<Vertex, usize> = HashMap::new();
    for &v in &path.vertices {
        if let Some(&i) = at.get(&v) {
            for w in out.drain(i + 1..) {
                at.remove(&w);
            }
        } else {
            at.insert(v, out.len());
            out.push(v);
        }
    }
    LatticePath { vertices: out, delta: path.delta, simple: true }
}

/// LERW from the grid origin to the walk's target.
pub fn sample_lerw(grid: &GridGraph, walk: &ConditionedWalk, seed: u64) -> Result<LatticePath> {
    Ok(loop_erase(&sample_conditioned_walk(grid, walk, grid.origin, seed)?))
}

pub fn sample_lerw_with<R: Rng>(grid: &GridGraph, walk: &ConditionedWalk, from: u32, rng: &mut R) -> Result<LatticePath> {
    Ok(loop_erase(&walk.sample_with(grid, from, rng)?))
}

/// `g_k(observer)` for `k = 0, 1, …` until the tip is adjacent to the target, the observer is
/// swallowed by the path, or `max_k` is reached.
pub fn discrete_martingale_series(
    grid: &GridGraph,
    lerw: &LatticePath,
    observer: u32,
    max_k: Option<usize>,
) -> Result<Vec<f64>> {
    let (iv, bv) = grid.target_sets();
    let targets: Vec<Vertex> = iv.into_iter().map(Nbr::Interior).chain(bv.into_iter().map(Nbr::Boundary)).collect();
    let interior: Vec<u32> = lerw
        .vertices
        .iter()
        .map_while(|v| match v {
            Nbr::Interior(i) => Some(*i),
            Nbr::Boundary(_) => None,
        })
        .collect();
    let mut out = Vec::new();
    for k in 0..interior.len() {
        if max_k.is_some_and(|m| k > m) {
            break;
        }
        let tip = interior[k];
        if targets.contains(&Nbr::Interior(tip)) || interior[..=k].contains(&observer) {
            break;
        }
        let g = match discrete_harmonic_g(grid, &interior[..=k], &targets, tip) {
            Ok(g) => g,
            Err(Error::TargetDisconnected) => break,
            Err(e) => return Err(e),
        };
        out.push(g.value(observer).max(0.0));
        if grid.nbrs[tip as usize].iter().any(|n| targets.contains(n)) {
            break;
        }
    }
    Ok(out)
}

/// Spanning forest in node numbering (interior `v`, boundary `n_interior + b`).
#[derive(Clone, Debug, PartialEq)]
pub struct SpanningForest {
    pub parent: Vec<Option<usize>>,
    pub is_root: Vec<bool>,
}

impl SpanningForest {
    /// Nodes from `k` up to its root.
    pub fn path_to_root(&self, k: usize) -> Vec<usize> {
        let mut out = vec![k];
        let mut u = k;
        while let Some(p) = self.parent[u] {
            out.push(p);
            u = p;
        }
        out
    }

    pub fn root_of(&self, k: usize) -> usize {
        *self.path_to_root(k).last().unwrap()
    }

    pub fn n_edges(&self) -> usize {
        self.parent.iter().filter(|p| p.is_some()).count()
    }
}

/// Wilson's algorithm on `D^δ` with a given root set (wired boundary: all boundary vertices).
pub fn wilson_ust(grid: &GridGraph, roots: &[Vertex], seed: u64) -> Result<SpanningForest> {
    if roots.is_empty() {
        return Err(Error::Unsupported("Wilson's algorithm needs a nonempty root set".into()));
    }
    let adj = adjacency(grid);
    let n = adj.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_tree = vec![false; n];
    let mut is_root = vec![false; n];
    for &r in roots {
        let k = node_of(grid, r);
        in_tree[k] = true;
        is_root[k] = true;
    }
    let mut next = vec![usize::MAX; n];
    let mut parent = vec![None; n];
    for i in 0..n {
        let mut u = i;
        while !in_tree[u] {
            let nb = &adj[u];
            next[u] = nb[rng.gen_range(0..nb.len())];
            u = next[u];
        }
        u = i;
        while !in_tree[u] {
            in_tree[u] = true;
            parent[u] = Some(next[u]);
            u = next[u];
        }
    }
    Ok(SpanningForest { parent, is_root })
}

/// Capacity parameterization of a lattice path from 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDrivingData {
    /// `v_δ(k)` for `k ≥ k₀`.
    pub capacities: Vec<f64>,
    /// `ξ_δ` at the same vertices.
    pub vertex_xi: Vec<f64>,
    /// `ξ_δ` on the elementary slit grid from `v_δ(k₀)` on.
    pub xi_delta: DrivingPath,
    pub b: f64,
    /// `k₀`, the first vertex index with capacity `≥ b`.
    pub first_vertex: usize,
}

impl DiscreteDrivingData {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k", "v", "xi"])?;
        for (i, (v, x)) in self.capacities.iter().zip(&self.vertex_xi).enumerate() {
            wr.write_record([(self.first_vertex + i).to_string(), v.to_string(), x.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// `ξ_δ(t)` by interpolation on the slit grid; `None` outside the extracted window. When the
    /// window starts at the first edge, earlier times see the constant driving of that segment.
    pub fn xi_at(&self, t: f64) -> Option<f64> {
        if t > self.xi_delta.t_end() || (t < self.xi_delta.t0() && self.first_vertex > 1) {
            return None;
        }
        Some(self.xi_delta.eval(t.max(self.xi_delta.t0())))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractOptions {
    pub dcap_max: f64,
    /// Keep vertices up to and including the first one at distance `≥ stop_radius` from 0.
    pub stop_radius: Option<f64>,
    /// Equal pieces each lattice edge is cut into before welding.
    pub subdivide: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { dcap_max: DCAP_MAX, stop_radius: None, subdivide: 1 }
    }
}

fn polyline_for(grid: &GridGraph, lerw: &LatticePath, opts: &ExtractOptions) -> Result<Vec<C64>> {
    let m = opts.subdivide.max(1);
    let mut poly: Vec<C64> = Vec::with_capacity(lerw.vertices.len() * m);
    for &v in &lerw.vertices {
        let z = vertex_pos(grid, v);
        if let Some(&a) = poly.last() {
            for i in 1..m {
                poly.push(a + (z - a) * (i as f64 / m as f64));
            }
        }
        poly.push(z);
        if opts.stop_radius.is_some_and(|r| z.norm() >= r) {
            break;
        }
    }
    if poly.len() < 2 || poly[0] != C64::new(0.0, 0.0) {
        return Err(Error::DegenerateHull);
    }
    Ok(poly)
}

/// Capacities and slit counts at the lattice vertices `1, 2, …` of a subdivided weld.
fn at_lattice_vertices(wd: &Welding, m: usize) -> (Vec<f64>, Vec<usize>) {
    let m = m.max(1);
    (1..=wd.v.len() / m).map(|j| (wd.v[j * m - 1], wd.slits_at_vertex[j * m - 1])).unzip()
}

fn driving_data(
    v: &[f64],
    xi: &DrivingPath,
    slits_at_vertex: &[usize],
    b: f64,
) -> Result<DiscreteDrivingData> {
    // v[i] is the capacity of the path up to vertex i + 1
    let i0 = v.iter().position(|&c| c >= b).unwrap_or(v.len() - 1);
    let capacities = v[i0..].to_vec();
    let vertex_xi: Vec<f64> = slits_at_vertex[i0..].iter().map(|&n| xi.values[n]).collect();
    let start = slits_at_vertex[i0];
    let xi_delta = DrivingPath::new(xi.times[start..].to_vec(), xi.values[start..].to_vec(), 2.0, Anchor::Circle)?;
    Ok(DiscreteDrivingData { capacities, vertex_xi, xi_delta, b, first_vertex: i0 + 1 })
}

/// Welds the lattice path under capacity parameterization and keeps the part from capacity `b`.
pub fn extract_driving(grid: &GridGraph, lerw: &LatticePath, b: f64) -> Result<DiscreteDrivingData> {
    extract_driving_with(grid, lerw, b, &ExtractOptions::default())
}

pub fn extract_driving_with(grid: &GridGraph, lerw: &LatticePath, b: f64, opts: &ExtractOptions) -> Result<DiscreteDrivingData> {
    let poly = polyline_for(grid, lerw, opts)?;
    let wd = weld_polyline(&poly, opts.dcap_max, |_, _| {})?;
    let (v, slits) = at_lattice_vertices(&wd, opts.subdivide);
    driving_data(&v, &wd.xi, &slits, b)
}

/// Driving data together with `∫X^{ξ_δ}dt` along the discrete hull, as a running integral at
/// the vertices `k ≥ k₀` (zero at `k₀`).
#[derive(Clone, Debug)]
pub struct DrivenExtraction {
    pub data: DiscreteDrivingData,
    pub drift_integral: Vec<f64>,
    /// `X^{ξ_δ}` when the hull is the path up to each vertex (NaN at the last vertex).
    pub x_at_vertex: Vec<f64>,
}

/// Like [`extract_driving_with`], with the drift evaluated on every elementary slit after `b`
/// (left endpoint rule, solves on the given cadence).
pub fn extract_driving_with_drift(
    ctx: &DriftContext,
    grid: &GridGraph,
    lerw: &LatticePath,
    b: f64,
    opts: &ExtractOptions,
    cadence: Cadence,
) -> Result<DrivenExtraction> {
    let poly = polyline_for(grid, lerw, opts)?;
    let first = poly[1];
    let base = BaseHull::Segment { t0: (first.norm() / 4.0).ln(), theta: first.arg() };
    let mut engine = DriftEngine::new(ctx, WholePlaneState::new(base), cadence);
    let mut cum = vec![0.0];
    let mut xs = Vec::new();
    let mut err = None;
    let wd = weld_polyline(&poly, opts.dcap_max, |s, _| {
        let mut acc = *cum.last().unwrap();
        let mut x = f64::NAN;
        if err.is_none() && engine.t() >= b {
            match engine.drift(s.theta) {
                Ok(v) => x = v,
                Err(e) => err = Some(e),
            }
            acc += x * s.dcap;
        }
        engine.push(s.theta, s.dcap);
        cum.push(acc);
        xs.push(x);
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let (v, slits) = at_lattice_vertices(&wd, opts.subdivide);
    let data = driving_data(&v, &wd.xi, &slits, b)?;
    let i0 = data.first_vertex - 1;
    let c0 = cum[slits[i0]];
    let drift_integral = slits[i0..].iter().map(|&n| cum[n] - c0).collect();
    let x_at_vertex = slits[i0..].iter().map(|&n| xs.get(n).copied().unwrap_or(f64::NAN)).collect();
    Ok(DrivenExtraction { data, drift_integral, x_at_vertex })
}

/// Stopping indices `n_0 = 0 < n_1 < …` into vertex-level `(v, ξ)`: `n_{j+1}` is the first index
/// whose capacity has grown by `d²` or whose driving value has moved by `d` since `n_j`. The last
/// index closes a final, stopped increment.
pub fn stopping_indices(v: &[f64], xi: &[f64], d: f64) -> Vec<usize> {
    let mut out = vec![0];
    if v.is_empty() {
        return out;
    }
    let mut j = 0;
    for k in 1..v.len() {
        if v[k] - v[j] >= d * d || (xi[k] - xi[j]).abs() >= d {
            out.push(k);
            j = k;
        }
    }
    if *out.last().unwrap() != v.len() - 1 {
        out.push(v.len() - 1);
    }
    out
}

/// Exact laws on very small grids by enumeration and transfer matrices.
pub mod exact {
    use nalgebra::DMatrix;

    use super::*;

    const MAX_INTERIOR: usize = 25;

    fn absorbing_nodes(grid: &GridGraph, targets: &[Vertex]) -> Vec<bool> {
        let mut t = vec![false; grid.n_interior() + grid.n_boundary()];
        for &v in targets {
            t[node_of(grid, v)] = true;
        }
        t
    }

    /// Law of the number of steps of the conditioned walk from `from`: entries `0..=max_len` and
    /// the remaining tail mass. Computed by propagating simple random walk mass and normalizing
    /// by the total absorbed mass, without using the hitting probability field.
    pub fn conditioned_length_law(grid: &GridGraph, targets: &[Vertex], from: u32, max_len: usize) -> (Vec<f64>, f64) {
        let n = grid.n_interior();
        let absorbing = absorbing_nodes(grid, targets);
        let mut mass = vec![0.0; n];
        mass[from as usize] = 1.0;
        let mut absorbed = vec![0.0];
        let mut alive = 1.0f64;
        let mut len = 0;
        while alive > 1e-17 && len < 1_000_000 {
            let mut next = vec![0.0; n];
            let mut hit = 0.0;
            for v in 0..n {
                let m = mass[v];
                if m == 0.0 {
                    continue;
                }
                for &w in &grid.nbrs[v] {
                    let k = node_of(grid, w);
                    if absorbing[k] {
                        hit += 0.25 * m;
                    } else if let Nbr::Interior(i) = w {
                        next[i as usize] += 0.25 * m;
                    }
                }
            }
            mass = next;
            alive = mass.iter().sum();
            absorbed.push(hit);
            len += 1;
        }
        let total: f64 = absorbed.iter().sum();
        let law: Vec<f64> = (0..=max_len).map(|l| absorbed.get(l).copied().unwrap_or(0.0) / total).collect();
        let tail = (1.0 - law.iter().sum::<f64>()).max(0.0);
        (law, tail)
    }

    /// `G_A(x, x)` for simple random walk killed on leaving `A`.
    fn green_diagonal(grid: &GridGraph, in_a: &[bool], x: u32) -> f64 {
        let idx: Vec<usize> = (0..grid.n_interior()).filter(|&v| in_a[v]).collect();
        let mut pos = vec![usize::MAX; grid.n_interior()];
        for (r, &v) in idx.iter().enumerate() {
            pos[v] = r;
        }
        let m = idx.len();
        let mut a = DMatrix::<f64>::identity(m, m);
        for (r, &v) in idx.iter().enumerate() {
            for &w in &grid.nbrs[v] {
                if let Nbr::Interior(i) = w {
                    if in_a[i as usize] {
                        a[(r, pos[i as usize])] -= 0.25;
                    }
                }
            }
        }
        let inv = a.try_inverse().expect("I - P_A is nonsingular for a proper subset");
        let r = pos[x as usize];
        inv[(r, r)]
    }

    /// Law of the LERW from `from` to `targets` over all simple paths, by the product
    /// `∏_j G_{A_j}(γ_j, γ_j)/4` with `A_j` the interior minus targets and `γ_0 … γ_{j-1}`.
    ///
    /// Returns the paths with normalized probabilities, and the unnormalized total (the hitting
    /// probability of the targets from `from`).
    pub fn lerw_law(grid: &GridGraph, targets: &[Vertex], from: u32) -> Result<(Vec<(Vec<Vertex>, f64)>, f64)> {
        let n = grid.n_interior();
        if n > MAX_INTERIOR {
            return Err(Error::Unsupported(format!("exact LERW law needs at most {MAX_INTERIOR} interior vertices")));
        }
        let absorbing = absorbing_nodes(grid, targets);
        let mut paths = Vec::new();
        let mut stack = vec![Nbr::Interior(from)];
        let mut used = vec![false; n];
        used[from as usize] = true;
        fn dfs(
            grid: &GridGraph,
            absorbing: &[bool],
            stack: &mut Vec<Vertex>,
            used: &mut Vec<bool>,
            out: &mut Vec<Vec<Vertex>>,
        ) {
            let Nbr::Interior(v) = *stack.last().unwrap() else { return };
            for &w in &grid.nbrs[v as usize] {
                if absorbing[node_of(grid, w)] {
                    stack.push(w);
                    out.push(stack.clone());
                    stack.pop();
                } else if let Nbr::Interior(i) = w {
                    if !used[i as usize] {
                        used[i as usize] = true;
                        stack.push(w);
                        dfs(grid, absorbing, stack, used, out);
                        stack.pop();
                        used[i as usize] = false;
                    }
                }
            }
        }
        if !absorbing[node_of(grid, Nbr::Interior(from))] {
            dfs(grid, &absorbing, &mut stack, &mut used, &mut paths);
        }
        let mut out = Vec::with_capacity(paths.len());
        let mut total = 0.0;
        for p in paths {
            let mut in_a: Vec<bool> = (0..n).map(|v| !absorbing[v]).collect();
            let mut prob = 1.0;
            for &g in &p[..p.len() - 1] {
                let Nbr::Interior(x) = g else { unreachable!() };
                prob *= 0.25 * green_diagonal(grid, &in_a, x);
                in_a[x as usize] = false;
            }
            total += prob;
            out.push((p, prob));
        }
        for e in &mut out {
            e.1 /= total;
        }
        Ok((out, total))
    }

    /// Spanning trees of `grid` with all boundary vertices wired into one root, as parent
    /// choices of the interior vertices (node numbering).
    pub fn wired_spanning_trees(grid: &GridGraph) -> Result<Vec<Vec<usize>>> {
        let n = grid.n_interior();
        if n > 8 {
            return Err(Error::Unsupported("spanning tree enumeration needs at most 8 interior vertices".into()));
        }
        let mut out = Vec::new();
        let total = 4usize.pow(n as u32);
        for code in 0..total {
            let choice: Vec<usize> = (0..n).map(|v| node_of(grid, grid.nbrs[v][(code >> (2 * v)) & 3])).collect();
            // acyclic iff every vertex reaches the boundary
            let ok = (0..n).all(|v| {
                let mut u = v;
                for _ in 0..=n {
                    if u >= n {
                        return true;
                    }
                    u = choice[u];
                }
                false
            });
            if ok {
                out.push(choice);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::exact::*;
    use super::*;
    use crate::domain::{build_grid, DomainSpec, Outer};
    use crate::harmonic::TargetSpec;

    pub(crate) fn square_grid(half: f64, delta: f64, target: TargetSpec) -> GridGraph {
        let h = half;
        let d = DomainSpec {
            outer: Outer::Polygon(vec![C64::new(-h, -h), C64::new(h, -h), C64::new(h, h), C64::new(-h, h)]),
            holes: vec![],
            target,
            label: "square".into(),
        };
        build_grid(&d, delta).unwrap()
    }

    fn path_of(ids: &[u32]) -> LatticePath {
        LatticePath { vertices: ids.iter().map(|&i| Nbr::Interior(i)).collect(), delta: 1.0, simple: false }
    }

    #[test]
    fn loop_erasure_unit_cases() {
        let ids = |p: &LatticePath| p.vertices.iter().map(|v| if let Nbr::Interior(i) = v { *i } else { 99 }).collect::<Vec<_>>();
        assert_eq!(ids(&loop_erase(&path_of(&[1, 2, 3]))), vec![1, 2, 3]);
        assert_eq!(ids(&loop_erase(&path_of(&[1, 2, 1, 3]))), vec![1, 3]);
        assert_eq!(ids(&loop_erase(&path_of(&[1, 2, 3, 2, 4]))), vec![1, 2, 4]);
        assert_eq!(ids(&loop_erase(&path_of(&[1, 2, 3, 4, 2, 5, 1, 6]))), vec![1, 6]);
    }

    #[test]
    fn conditioned_walk_stays_admissible() {
        let g = square_grid(0.75, 0.25, TargetSpec::Point { z: C64::new(0.5, 0.25) });
        let w = ConditionedWalk::for_grid(&g).unwrap();
        for seed in 0..200 {
            let p = sample_conditioned_walk(&g, &w, g.origin, seed).unwrap();
            assert!(p.is_nearest_neighbour(&g));
            assert_eq!(*p.vertices.last().unwrap(), w.targets[0]);
            assert!(p.vertices[..p.len()].iter().all(|v| matches!(v, Nbr::Interior(_))));
            let l = loop_erase(&p);
            assert!(l.is_nearest_neighbour(&g));
            let mut seen = std::collections::HashSet::new();
            assert!(l.vertices.iter().all(|v| seen.insert(*v)));
        }
    }

    #[test]
    fn step_products_are_h_ratios() {
        let g = square_grid(0.75, 0.25, TargetSpec::Point { z: C64::new(0.5, 0.25) });
        let w = ConditionedWalk::for_grid(&g).unwrap();
        let p = sample_conditioned_walk(&g, &w, g.origin, 3).unwrap();
        let mut prod = 1.0;
        for s in p.vertices.windows(2) {
            let Nbr::Interior(a) = s[0] else { unreachable!() };
            let k = g.nbrs[a as usize].iter().position(|&n| n == s[1]).unwrap();
            prod *= w.step_probabilities(a)[k];
        }
        let expect = 0.25f64.powi(p.len() as i32) * 1.0 / w.h[g.origin as usize];
        assert!((prod / expect - 1.0).abs() < 1e-9, "{prod} {expect}");
    }

    #[test]
    fn gamblers_ruin_on_a_corridor() {
        // a 1 × 5 corridor: interior vertices at x = -2..2, target the right end; each vertex
        // also has two boundary neighbours, so h solves 4h(x) = h(x-1) + h(x+1)
        let rect = vec![C64::new(-2.5, -0.5), C64::new(2.5, -0.5), C64::new(2.5, 0.5), C64::new(-2.5, 0.5)];
        let g = crate::domain::build_lattice(&[crate::domain::Boundary::Polygon(rect)], 1.0, C64::new(0.0, 0.0)).unwrap();
        assert_eq!(g.n_interior(), 5);
        let end = g.vertex_at(C64::new(2.0, 0.0)).unwrap();
        let w = ConditionedWalk::new(&g, &[Nbr::Interior(end)], &[]).unwrap();
        let v = g.vertex_at(C64::new(0.0, 0.0)).unwrap();
        let (l, r) = (g.vertex_at(C64::new(-1.0, 0.0)).unwrap(), g.vertex_at(C64::new(1.0, 0.0)).unwrap());
        let p = w.step_probabilities(v);
        let (hl, hr) = (w.h[l as usize], w.h[r as usize]);
        for (k, n) in g.nbrs[v as usize].iter().enumerate() {
            let expect = match *n {
                Nbr::Interior(i) if i == l => hl / (hl + hr),
                Nbr::Interior(i) if i == r => hr / (hl + hr),
                _ => 0.0,
            };
            assert!((p[k] - expect).abs() < 1e-12);
        }
        // closed form for 4h(x) = h(x-1) + h(x+1) with h(-3) = 0, h(2) = 1
        let mu = 2.0 + 3f64.sqrt();
        let hx = |x: f64| (mu.powf(x + 3.0) - mu.powf(-(x + 3.0))) / (mu.powi(5) - mu.powi(-5));
        assert!((w.h[v as usize] - hx(0.0)).abs() < 1e-10);
        assert!((hl / (hl + hr) - hx(-1.0) / (hx(-1.0) + hx(1.0))).abs() < 1e-10);
    }

    #[test]
    fn enumerated_lerw_law_sums_to_hitting_probability() {
        let g = square_grid(0.75, 0.5, TargetSpec::Point { z: C64::new(0.5, 0.5) });
        assert_eq!(g.n_interior(), 9);
        let w = ConditionedWalk::for_grid(&g).unwrap();
        let (law, total) = lerw_law(&g, &w.targets, g.origin).unwrap();
        assert!((total - w.h[g.origin as usize]).abs() < 1e-12, "{total}");
        assert!(law.iter().all(|(p, _)| p.len() >= 3));
        let (len_law, tail) = conditioned_length_law(&g, &w.targets, g.origin, 400);
        assert!((len_law.iter().sum::<f64>() + tail - 1.0).abs() < 1e-12);
        assert!(tail < 1e-12);
        assert_eq!(len_law[1], 0.0);
        assert!(len_law[2] > 0.0 && len_law[3] == 0.0);
    }

    #[test]
    fn reversed_lerw_law_is_exact_on_three_by_three() {
        let g = square_grid(0.75, 0.5, TargetSpec::Point { z: C64::new(0.5, 0.5) });
        let we = match g.target {
            crate::domain::TargetVertices::Point(v) => v,
            _ => unreachable!(),
        };
        let (fwd, _) = lerw_law(&g, &[Nbr::Interior(we)], g.origin).unwrap();
        let (bwd, _) = lerw_law(&g, &[Nbr::Interior(g.origin)], we).unwrap();
        assert_eq!(fwd.len(), bwd.len());
        let back: HashMap<Vec<Vertex>, f64> = bwd.into_iter().collect();
        for (p, q) in fwd {
            let mut r = p.clone();
            r.reverse();
            assert!((back[&r] - q).abs() < 1e-13, "{q} {}", back[&r]);
        }
    }

    #[test]
    fn wilson_gives_spanning_forests() {
        let g = square_grid(1.1, 0.25, TargetSpec::Point { z: C64::new(0.5, 0.25) });
        let roots: Vec<Vertex> = (0..g.n_boundary() as u32).map(Nbr::Boundary).collect();
        let f = wilson_ust(&g, &roots, 5).unwrap();
        let n = g.n_interior() + g.n_boundary();
        assert_eq!(f.n_edges(), g.n_interior());
        for k in 0..n {
            assert!(f.is_root[f.root_of(k)]);
        }
        // the tree path of the origin is a LERW to the boundary: simple and nearest neighbour
        let p = LatticePath {
            vertices: f.path_to_root(g.origin as usize).into_iter().map(|k| vertex_of_node(&g, k)).collect(),
            delta: g.delta,
            simple: true,
        };
        assert!(p.is_nearest_neighbour(&g));
        assert_eq!(loop_erase(&p), p);
    }

    pub(crate) fn two_by_two() -> GridGraph {
        let sq = vec![C64::new(-0.25, -0.25), C64::new(0.75, -0.25), C64::new(0.75, 0.75), C64::new(-0.25, 0.75)];
        crate::domain::build_lattice(&[crate::domain::Boundary::Polygon(sq)], 0.5, C64::new(0.0, 0.0)).unwrap()
    }

    #[test]
    fn two_by_two_wired_trees_and_wilson() {
        let g = two_by_two();
        assert_eq!(g.n_interior(), 4);
        let trees = wired_spanning_trees(&g).unwrap();
        // matrix-tree theorem on the wired graph
        let n = g.n_interior();
        let mut lap = nalgebra::DMatrix::<f64>::zeros(n, n);
        for v in 0..n {
            lap[(v, v)] = 4.0;
            for w in &g.nbrs[v] {
                if let Nbr::Interior(i) = w {
                    lap[(v, *i as usize)] -= 1.0;
                }
            }
        }
        assert_eq!(trees.len(), lap.determinant().round() as usize);
        let index: HashMap<Vec<usize>, usize> = trees.iter().cloned().enumerate().map(|(k, t)| (t, k)).collect();
        let roots: Vec<Vertex> = (0..g.n_boundary() as u32).map(Nbr::Boundary).collect();
        let m = 20 * trees.len();
        let mut counts = vec![0usize; trees.len()];
        for seed in 0..m as u64 {
            let f = wilson_ust(&g, &roots, seed).unwrap();
            let key: Vec<usize> = (0..n).map(|v| f.parent[v].unwrap()).collect();
            counts[index[&key]] += 1;
        }
        let e = m as f64 / trees.len() as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        let df = (trees.len() - 1) as f64;
        // loose normal approximation of the upper tail
        assert!(chi2 < df + 5.0 * (2.0 * df).sqrt(), "{chi2} {df}");
    }

    #[test]
    fn straight_ray_has_constant_driving() {
        let d = DomainSpec::unit_disk(256, TargetSpec::Point { z: C64::new(0.5, 0.0) });
        let g = build_grid(&d, 1.0 / 32.0).unwrap();
        let verts: Vec<Vertex> = (0..=16).map(|k| Nbr::Interior(g.index_of(k, 0).unwrap())).collect();
        let p = LatticePath { vertices: verts, delta: g.delta, simple: true };
        let dd = extract_driving(&g, &p, -4.0).unwrap();
        assert!(dd.capacities.windows(2).all(|w| w[1] > w[0]));
        let sup = dd.xi_delta.values.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(sup < 0.05, "{sup}");
        // rad >= diam/4
        assert!(*dd.capacities.last().unwrap() >= (0.5f64 / 4.0).ln() - 1e-9);
    }

    #[test]
    fn stopping_indices_respect_thresholds() {
        let v: Vec<f64> = (0..100).map(|k| -3.0 + 0.003 * k as f64).collect();
        let xi: Vec<f64> = (0..100).map(|k| (k as f64 * 0.3).sin() * 0.4).collect();
        let n = stopping_indices(&v, &xi, 0.2);
        assert_eq!(n[0], 0);
        assert_eq!(*n.last().unwrap(), 99);
        for w in n.windows(2).take(n.len() - 2) {
            let (a, b) = (w[0], w[1]);
            assert!(v[b] - v[a] >= 0.04 || (xi[b] - xi[a]).abs() >= 0.2);
            for k in a + 1..b {
                assert!(v[k] - v[a] < 0.04 && (xi[k] - xi[a]).abs() < 0.2);
            }
        }
    }
}
