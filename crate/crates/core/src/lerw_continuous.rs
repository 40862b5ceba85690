//! Continuous LERW from an interior point: the whole-plane driver, the driving integral
//! equation, and the partition function `M(t)`.

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::point_in_polygon;
use crate::error::{Error, Result};
use crate::harmonic::{DerivativeBundle, DriftContext, DriftSolution, DriftTracker};
use crate::loewner::{Anchor, BaseHull, DrivingPath, Slit, WholePlaneState};

/// `B(t) = x₀ + √κ B_{sign t}(|t|)` sampled on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverSample {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kappa: f64,
    pub seed: u64,
    pub x0: f64,
}

impl DriverSample {
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// A deterministic driver on the same kind of grid.
    pub fn from_fn(t_start: f64, t_end: f64, dt: f64, f: impl Fn(f64) -> f64) -> Self {
        let n = ((t_end - t_start) / dt).round() as usize;
        let times: Vec<f64> = (0..=n).map(|k| t_start + k as f64 * dt).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        DriverSample { times, values, kappa: 0.0, seed: 0, x0: f(0.0) }
    }
}

/// Samples the two-sided whole-plane driver. The two Brownian halves are independent and both
/// start at `x₀ ~ U[0, 2π)` at time 0.
pub fn sample_driver(kappa: f64, t_start: f64, t_end: f64, dt: f64, seed: u64) -> Result<DriverSample> {
    if !(t_start < t_end) || !(dt > 0.0) || !(kappa >= 0.0) {
        return Err(Error::Parse(format!("bad driver grid [{t_start}, {t_end}] dt={dt} κ={kappa}")));
    }
    let n = ((t_end - t_start) / dt).round().max(1.0) as usize;
    let times: Vec<f64> = (0..=n).map(|k| t_start + k as f64 * dt).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = rng.gen_range(0.0..TAU);
    let sk = kappa.sqrt();
    let mut values = vec![0.0; n + 1];
    let mut z = || -> f64 { rng.sample(StandardNormal) };
    // last index with t <= 0
    let split = times.iter().rposition(|&t| t <= 0.0);
    if let Some(i0) = split {
        values[i0] = x0 + sk * times[i0].abs().sqrt() * z();
        for k in (0..i0).rev() {
            values[k] = values[k + 1] + sk * (times[k + 1] - times[k]).sqrt() * z();
        }
    }
    let i1 = split.map_or(0, |i| i + 1);
    if i1 <= n {
        values[i1] = x0 + sk * times[i1].sqrt() * z();
        for k in i1 + 1..=n {
            values[k] = values[k - 1] + sk * (times[k] - times[k - 1]).sqrt() * z();
        }
    }
    Ok(DriverSample { times, values, kappa, seed, x0 })
}

/// `E₀ = e^{t - ln R}`, `E₁ = (ln R - t)E₀`, `E₂ = E₀ + E₁`.
pub fn e_j(j: usize, t: f64, ln_r: f64) -> f64 {
    let e0 = (t - ln_r).exp();
    match j {
        0 => e0,
        1 => (ln_r - t) * e0,
        _ => e0 + (ln_r - t) * e0,
    }
}

/// Stopping curve around 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Guard {
    Circle { radius: f64 },
    Polygon { vertices: Vec<C64> },
    /// Only the drift solver's own guard radius (bounded domains) or nothing (sphere).
    None,
}

impl Guard {
    fn resolve(&self, ctx: &DriftContext) -> Result<Guard> {
        let lim = ctx.config.guard_radius;
        match self {
            Guard::None if ctx.is_sphere() => Ok(Guard::None),
            Guard::None => Ok(Guard::Circle { radius: lim }),
            Guard::Circle { radius } => {
                if !(*radius > 0.0) || (!ctx.is_sphere() && *radius > lim * (1.0 + 1e-12)) {
                    return Err(Error::GuardNotSurrounding);
                }
                Ok(self.clone())
            }
            Guard::Polygon { vertices } => {
                let far = vertices.iter().map(|v| v.norm()).fold(0.0, f64::max);
                if vertices.len() < 3
                    || !point_in_polygon(vertices, C64::new(0.0, 0.0))
                    || (!ctx.is_sphere() && far > lim)
                {
                    return Err(Error::GuardNotSurrounding);
                }
                Ok(self.clone())
            }
        }
    }

    /// `dist(0, ρ)`.
    fn inner_distance(&self) -> f64 {
        match self {
            Guard::Circle { radius } => *radius,
            Guard::Polygon { vertices } => {
                crate::domain::dist_to_polygon(vertices, C64::new(0.0, 0.0))
            }
            Guard::None => f64::INFINITY,
        }
    }

    fn hit(&self, z: C64) -> bool {
        match self {
            Guard::Circle { radius } => z.norm() >= *radius,
            Guard::Polygon { vertices } => !point_in_polygon(vertices, z),
            Guard::None => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ReachedStopTime,
    HullHitGuardCurve,
    TargetApproached,
}

/// When the strip-series coefficients are re-solved.
///
/// After each solve the linear extrapolation of the previous two solves is compared with the
/// fresh `(∂_y, ∂_x∂_y)J̃` at `ξ`; the step grows when the prediction error is below `tol/4`
/// (relative to `∂_yJ̃`) and halves when it exceeds `tol`, within `[min_step, max_step]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cadence {
    pub min_step: f64,
    pub max_step: f64,
    pub tol: f64,
}

impl Default for Cadence {
    fn default() -> Self {
        Cadence { min_step: 0.01, max_step: 0.2, tol: 1e-3 }
    }
}

impl Cadence {
    pub fn fixed(step: f64) -> Self {
        Cadence { min_step: step, max_step: step, tol: f64::INFINITY }
    }
}

/// A whole-plane Loewner state together with the tracked images and drift solves.
#[derive(Clone, Debug)]
pub struct DriftEngine<'c> {
    pub ctx: &'c DriftContext,
    pub state: WholePlaneState,
    tracker: DriftTracker,
    pub solutions: Vec<DriftSolution>,
    cadence: Cadence,
    step: f64,
    next_solve: f64,
}

impl<'c> DriftEngine<'c> {
    pub fn new(ctx: &'c DriftContext, state: WholePlaneState, cadence: Cadence) -> Self {
        let tracker = ctx.tracker(&state);
        let t = state.t;
        DriftEngine { ctx, state, tracker, solutions: vec![], cadence, step: cadence.min_step, next_solve: t }
    }

    pub fn t(&self) -> f64 {
        self.tracker.t
    }

    pub fn tracker(&self) -> &DriftTracker {
        &self.tracker
    }

    pub fn push(&mut self, theta: f64, dcap: f64) {
        let s = Slit::new(theta, dcap);
        self.tracker.apply(&s);
        self.state.slits.push(s);
        self.state.t += dcap;
    }

    /// Removes the most recent slit.
    pub fn pop(&mut self) -> Option<Slit> {
        let s = self.state.slits.pop()?;
        for w in &mut self.tracker.images {
            *w = s.inverse(*w);
        }
        self.tracker.t -= s.dcap;
        self.state.t -= s.dcap;
        Some(s)
    }

    /// Solves at the current time, updating the cadence controller.
    pub fn solve_now(&mut self, xi: f64) -> Result<&DriftSolution> {
        let fresh = self.ctx.solve(&self.tracker, xi)?;
        if let Some(pred) = self.predicted(fresh.t) {
            let (a, b, _) = fresh.j_derivs(xi);
            let (pa, pb, _) = pred.j_derivs(xi);
            let err = (a - pa).abs().max((b - pb).abs()) / a.abs();
            if err > self.cadence.tol {
                self.step = (self.step * 0.5).max(self.cadence.min_step);
            } else if err < 0.25 * self.cadence.tol {
                self.step = (self.step * 1.5).min(self.cadence.max_step);
            }
        }
        // a re-solve at the same time replaces the earlier one
        if self.solutions.last().is_some_and(|s| (s.t - fresh.t).abs() < 1e-12) {
            self.solutions.pop();
        }
        self.next_solve = fresh.t + self.step;
        self.solutions.push(fresh);
        Ok(self.solutions.last().unwrap())
    }

    /// Linear extrapolation of the last two solves (or the last one).
    pub fn predicted(&self, t: f64) -> Option<DriftSolution> {
        match self.solutions.len() {
            0 => None,
            1 => {
                let mut s = self.solutions[0].clone();
                s.t = t;
                Some(s)
            }
            n => Some(DriftSolution::lerp(&self.solutions[n - 2], &self.solutions[n - 1], t)),
        }
    }

    /// `X^ξ(t)` at the current time, re-solving when due.
    pub fn drift(&mut self, xi: f64) -> Result<f64> {
        if self.ctx.is_sphere() && self.ctx.target_point().is_none() {
            return Ok(0.0);
        }
        if self.solutions.is_empty() || self.t() >= self.next_solve - 1e-9 {
            self.solve_now(xi)?;
        }
        let sol = self.predicted(self.t()).unwrap();
        let (a, b, _) = sol.j_derivs(xi);
        if !(a > 0.0) {
            return Err(Error::NonPositiveDy(a));
        }
        Ok(b / a)
    }

    /// Tip after the first `k` slits.
    pub fn tip_of_prefix(&self, k: usize) -> C64 {
        let th = if k == 0 { self.state.base.theta() } else { Some(self.state.slits[k - 1].theta) };
        match th {
            Some(th) => {
                let mut z = C64::from_polar(1.0, th);
                for s in self.state.slits[..k].iter().rev() {
                    z = s.inverse(z);
                }
                self.state.base.phi_inv(z)
            }
            None => C64::new(0.0, 0.0),
        }
    }
}

/// Solution of `solutions` interpolated at `t` (clamped to the solved range).
pub fn interpolate(solutions: &[DriftSolution], t: f64) -> Option<DriftSolution> {
    let n = solutions.len();
    if n == 0 {
        return None;
    }
    if n == 1 || t <= solutions[0].t {
        let mut s = solutions[0].clone();
        s.t = t;
        return Some(s);
    }
    let k = solutions.partition_point(|s| s.t <= t);
    if k >= n {
        let mut s = solutions[n - 1].clone();
        s.t = t;
        return Some(s);
    }
    Some(DriftSolution::lerp(&solutions[k - 1], &solutions[k], t))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LerwConfig {
    pub kappa: f64,
    pub lambda: f64,
    pub dt: f64,
    /// Overrides the fitted truncation time.
    pub t_start: Option<f64>,
    pub t_end: f64,
    pub guard: Guard,
    pub cadence: Cadence,
    /// Times at which the drift is re-solved and the Poisson observable is recorded.
    pub checkpoints: Vec<f64>,
    /// Budget for the neglected tail `λ∫_{-∞}^{t_start} X`.
    pub truncation_budget: f64,
}

impl Default for LerwConfig {
    fn default() -> Self {
        LerwConfig {
            kappa: 2.0,
            lambda: 2.0,
            dt: 1e-3,
            t_start: None,
            t_end: 0.0,
            guard: Guard::None,
            cadence: Cadence::default(),
            checkpoints: vec![],
            truncation_budget: 1e-4,
        }
    }
}

/// Drift state recorded at a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub xi: f64,
    pub x: f64,
    /// `P_t(z)/P_t(z_e)` at the context observers (empty without a point target).
    pub poisson: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LerwRun {
    pub kappa: f64,
    pub lambda: f64,
    /// Solution with the representative `ξ(t_start) ∈ [0, 2π)`.
    pub xi: DrivingPath,
    pub x_samples: Vec<f64>,
    pub state: WholePlaneState,
    pub stop_reason: StopReason,
    pub t_start: f64,
    /// Bound `|λ|·C·E₂(t_start)` on the neglected tail (0 on the sphere with target ∞).
    pub truncation_bound: f64,
    pub solutions: Vec<DriftSolution>,
    pub observations: Vec<Observation>,
    pub diagnostic: Option<String>,
    sphere: bool,
    g0: f64,
}

/// Empirical drift constant `C` of `|X^ξ_t| <= C·E₁(t)` and the resulting truncation time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationFit {
    pub c: f64,
    pub ln_r: f64,
    pub t_start: f64,
}

/// Fits `C` from `|X|` at `t ∈ {ln R - 10, …, ln R - 6}` on segment hulls in 8 directions and
/// picks the largest `t_start <= ln(R/4) - 8` with `|λ|·C·E₂(t_start) <= budget`.
pub fn fit_truncation(ctx: &DriftContext, lambda: f64, budget: f64) -> Result<TruncationFit> {
    let ln_r = ctx.r.ln();
    let t_max = (ctx.r / 4.0).ln() - 8.0;
    if ctx.is_sphere() && ctx.target_point().is_none() {
        return Ok(TruncationFit { c: 0.0, ln_r, t_start: -10.0 });
    }
    let mut c: f64 = 0.0;
    for k in 6..=10 {
        let t = ln_r - k as f64;
        for j in 0..8 {
            let th = TAU * j as f64 / 8.0 + 0.3;
            let st = WholePlaneState::new(BaseHull::Segment { t0: t, theta: th });
            let x = ctx.compute_x(&st, th)?;
            c = c.max(x.abs() / e_j(1, t, ln_r));
        }
    }
    let ok = |t: f64| lambda.abs() * c * e_j(2, t, ln_r) <= budget;
    let t_start = if ok(t_max) {
        t_max
    } else {
        let (mut lo, mut hi) = (t_max - 60.0, t_max);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid
            } else {
                hi = mid
            }
        }
        lo
    };
    Ok(TruncationFit { c, ln_r, t_start })
}

/// Euler scheme `ξ(t+dt) = ξ(t) + ΔB + λX^ξ(t)dt` started from the segment hull of `ξ(t_start)`.
///
/// The driver's grid fixes `t_start`, `dt` and the end time; `cfg.t_end` only truncates.
pub fn solve_driving_sde(ctx: &DriftContext, cfg: &LerwConfig, driver: &DriverSample, fit: Option<&TruncationFit>) -> Result<LerwRun> {
    let guard = cfg.guard.resolve(ctx)?;
    let times = &driver.times;
    let t_start = times[0];
    let dt = driver.dt();
    let n_end = times.iter().rposition(|&t| t <= cfg.t_end + 1e-9).unwrap_or(0);
    let mut engine = DriftEngine::new(
        ctx,
        WholePlaneState::new(BaseHull::Segment { t0: t_start, theta: driver.values[0] }),
        cfg.cadence,
    );
    let earliest = (guard.inner_distance() / 4.0).ln();
    let mut xs = vec![driver.values[0]];
    let mut drift_sum = 0.0;
    let mut x_samples = Vec::with_capacity(n_end + 1);
    let mut observations = Vec::new();
    let mut stop = StopReason::ReachedStopTime;
    let mut diagnostic = None;
    let mut checkpoints: Vec<f64> = cfg.checkpoints.clone();
    checkpoints.sort_by(f64::total_cmp);
    let mut next_cp = 0;
    let observe = |engine: &mut DriftEngine, t: f64, xi: f64| -> Result<Observation> {
        let x = engine.solve_now(xi)?.x(xi);
        let poisson = if engine.ctx.target_point().is_some() && !engine.ctx.observers.is_empty() {
            engine.ctx.poisson_observable(engine.tracker(), xi)?
        } else {
            vec![]
        };
        Ok(Observation { t, xi, x, poisson })
    };
    let mut i = 0;
    while i < n_end {
        let t = times[i];
        let xi = xs[i];
        let step: Result<f64> = (|| {
            while next_cp < checkpoints.len() && checkpoints[next_cp] < t - 0.5 * dt {
                next_cp += 1;
            }
            if next_cp < checkpoints.len() && (checkpoints[next_cp] - t).abs() <= 0.5 * dt {
                observations.push(observe(&mut engine, t, xi)?);
                next_cp += 1;
            }
            engine.drift(xi)
        })();
        let x = match step {
            Ok(x) => x,
            Err(Error::StripTooThin { t, height }) => {
                stop = StopReason::TargetApproached;
                diagnostic = Some(format!("strip height {height:.3e} at t = {t:.4}"));
                break;
            }
            Err(e) => return Err(e),
        };
        x_samples.push(x);
        drift_sum += x * dt;
        let next = driver.values[i + 1] + cfg.lambda * drift_sum;
        engine.push(0.5 * (xi + next), dt);
        xs.push(next);
        i += 1;
        if times[i] > earliest && (i % 4 == 0 || i == n_end) && guard.hit(engine.tip_of_prefix(engine.state.slits.len())) {
            // first step whose tip lies on or outside the guard
            let mut first = engine.state.slits.len();
            while first > 1 && guard.hit(engine.tip_of_prefix(first - 1)) {
                first -= 1;
            }
            while engine.state.slits.len() > first {
                engine.pop();
                xs.pop();
                x_samples.pop();
            }
            i = first;
            stop = StopReason::HullHitGuardCurve;
            break;
        }
    }
    // final solve at the stopping time
    let t_final = times[i];
    if stop != StopReason::TargetApproached {
        if next_cp < checkpoints.len() && (checkpoints[next_cp] - t_final).abs() <= 0.5 * dt {
            observations.push(observe(&mut engine, t_final, xs[i])?);
        } else if let Err(e) = engine.solve_now(xs[i]) {
            match e {
                Error::StripTooThin { t, height } => {
                    stop = StopReason::TargetApproached;
                    diagnostic = Some(format!("strip height {height:.3e} at t = {t:.4}"));
                }
                e => return Err(e),
            }
        }
    }
    if let Ok(x) = engine.solutions.last().map(|s| s.x(xs[i])).ok_or(()) {
        if x_samples.len() == i {
            x_samples.push(x);
        }
    }
    let shift = (xs[0] / TAU).floor() * TAU;
    for v in &mut xs {
        *v -= shift;
    }
    let times_out = times[..xs.len()].to_vec();
    let xi = DrivingPath::new(times_out, xs, cfg.kappa, Anchor::Circle)?;
    let truncation_bound = match fit {
        Some(f) => cfg.lambda.abs() * f.c * e_j(2, t_start, f.ln_r),
        None => f64::NAN,
    };
    Ok(LerwRun {
        kappa: cfg.kappa,
        lambda: cfg.lambda,
        xi,
        x_samples,
        state: engine.state.clone(),
        stop_reason: stop,
        t_start,
        truncation_bound,
        solutions: std::mem::take(&mut engine.solutions),
        observations,
        diagnostic,
        sphere: ctx.is_sphere(),
        g0: ctx.g0,
    })
}

/// `X^ξ` along a given path, with solves every `step` in capacity interpolated in between.
pub fn drift_along(ctx: &DriftContext, path: &DrivingPath, step: f64) -> Result<Vec<f64>> {
    let times = &path.times;
    let xs = &path.values;
    let mut engine = DriftEngine::new(
        ctx,
        WholePlaneState::new(BaseHull::Segment { t0: times[0], theta: xs[0] }),
        Cadence::fixed(step),
    );
    if ctx.is_sphere() && ctx.target_point().is_none() {
        return Ok(vec![0.0; times.len()]);
    }
    let mut next = times[0];
    for i in 0..times.len() {
        if times[i] >= next - 1e-9 || i + 1 == times.len() {
            engine.solve_now(xs[i])?;
            next = times[i] + step;
        }
        if i + 1 < times.len() {
            engine.push(0.5 * (xs[i] + xs[i + 1]), times[i + 1] - times[i]);
        }
    }
    let sols = &engine.solutions;
    Ok(times.iter().zip(xs).map(|(&t, &x)| interpolate(sols, t).unwrap().x(x)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Capacity between drift solves.
    pub step: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions { tol: 1e-6, max_iter: 40, step: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PicardResult {
    pub xi: DrivingPath,
    /// `sup|ξ_{n+1} - ξ_n|` per iteration.
    pub changes: Vec<f64>,
    /// Successive change ratios.
    pub ratios: Vec<f64>,
    /// `sup|ξ - f - λ∫X^ξ|` of the returned path.
    pub residual: f64,
}

fn cumulative_trapezoid(times: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; times.len()];
    for i in 1..times.len() {
        out[i] = out[i - 1] + 0.5 * (f[i] + f[i - 1]) * (times[i] - times[i - 1]);
    }
    out
}

/// Fixed-point iteration `ξ_{n+1} = f + λ∫X^{ξ_n}` on `[f.t0(), t_end]`.
pub fn solve_driving_picard(ctx: &DriftContext, lambda: f64, f: &DrivingPath, t_end: f64, opts: &PicardOptions) -> Result<PicardResult> {
    let n = f.times.iter().rposition(|&t| t <= t_end + 1e-12).unwrap_or(0) + 1;
    let times = f.times[..n].to_vec();
    let fv = f.values[..n].to_vec();
    let mut cur = DrivingPath { times: times.clone(), values: fv.clone(), kappa: f.kappa, anchor: f.anchor };
    let mut changes = Vec::new();
    let mut ratios = Vec::new();
    let mut bad = 0;
    let update = |path: &DrivingPath| -> Result<Vec<f64>> {
        let x = drift_along(ctx, path, opts.step)?;
        let integral = cumulative_trapezoid(&times, &x);
        Ok(fv.iter().zip(&integral).map(|(f, i)| f + lambda * i).collect())
    };
    for _ in 0..opts.max_iter {
        let next = update(&cur)?;
        let change = next.iter().zip(&cur.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        cur.values = next;
        if let Some(&prev) = changes.last() {
            let r: f64 = change / prev;
            ratios.push(r);
            bad = if r > 0.9 { bad + 1 } else { 0 };
            if bad >= 3 {
                return Err(Error::NoContraction);
            }
        }
        changes.push(change);
        if change <= opts.tol {
            break;
        }
    }
    let check = update(&cur)?;
    let residual = check.iter().zip(&cur.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(PicardResult { xi: cur, changes, ratios, residual })
}

/// `M(t)` along a run, with the bundle used at each time.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionTrajectory {
    pub times: Vec<f64>,
    pub m_values: Vec<f64>,
    /// `ln M` with the prefactor normalized by `G(D, z_e; 0)` and zero tails.
    pub ln_m_uncentred: Vec<f64>,
    pub alpha: f64,
    pub bundle_samples: Vec<DerivativeBundle>,
}

/// `M(t)` for `α = λ/κ` of the LERW being compared with the run's law.
///
/// The integrals run from `t_start` and the prefactor is divided by its value at `t_start`, so
/// `M(t_start) = 1`; the tails and `G(D, z_e; 0)` then cancel against the normalization.
pub fn partition_function(run: &LerwRun, alpha: f64) -> Result<PartitionTrajectory> {
    let kappa = run.kappa;
    let times = &run.xi.times;
    let xs = &run.xi.values;
    let n = times.len();
    let mut bundles = Vec::with_capacity(n);
    for i in 0..n {
        let sol = interpolate(&run.solutions, times[i])
            .ok_or_else(|| Error::InsufficientSamples("run has no drift solves".into()))?;
        let b = sol.bundle(xs[i]);
        if !(b.d_y > 0.0) {
            return Err(Error::NonPositiveDy(b.d_y));
        }
        bundles.push(DerivativeBundle { t: times[i], ..b });
    }
    let pref = |b: &DerivativeBundle| {
        if run.sphere {
            (TAU * b.d_y).ln()
        } else {
            ((b.t * b.t + 1.0).sqrt() * b.d_y).ln()
        }
    };
    let f = |b: &DerivativeBundle| {
        let x = b.d_xy / b.d_y;
        let s = if run.sphere { 0.0 } else { b.t / (b.t * b.t + 1.0) };
        0.5 * kappa * alpha * (alpha - 1.0) * x * x
            + 0.5 * kappa * alpha * b.d_xxy / b.d_y
            + alpha * (b.d_t_dy / b.d_y + s)
    };
    let integrand: Vec<f64> = bundles.iter().map(f).collect();
    let integral = cumulative_trapezoid(times, &integrand);
    let p0 = pref(&bundles[0]);
    let g_shift = if run.sphere { 0.0 } else { run.g0.ln() };
    let mut m_values = Vec::with_capacity(n);
    let mut ln_u = Vec::with_capacity(n);
    for i in 0..n {
        let p = pref(&bundles[i]);
        m_values.push((alpha * (p - p0) - integral[i]).exp());
        ln_u.push(alpha * (p - g_shift) - integral[i]);
    }
    Ok(PartitionTrajectory { times: times.clone(), m_values, ln_m_uncentred: ln_u, alpha, bundle_samples: bundles })
}

/// `P_t(z)/P_t(z_e)` for `z` among the context observers, replaying the run up to `t`.
pub fn poisson_observable(ctx: &DriftContext, run: &LerwRun, z: C64, t: f64) -> Result<f64> {
    let k = ctx
        .observers
        .iter()
        .position(|&o| (o - z).norm() < 1e-12)
        .ok_or_else(|| Error::Unsupported(format!("{z} is not an observer of the drift context")))?;
    let n = run.state.slits_up_to(t);
    let st = run.state.prefix(n);
    if st.phi_checked(z).is_none() {
        return Err(Error::PointInHull);
    }
    let xi = run.xi.eval(st.t);
    Ok(ctx.poisson_observable(&ctx.tracker(&st), xi)?[k])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainSpec;
    use crate::harmonic::{DriftConfig, TargetSpec};

    fn sphere_ctx() -> DriftContext {
        let cfg = DriftConfig::for_domain(&DomainSpec::unit_disk(64, TargetSpec::Point { z: C64::new(0.5, 0.0) }), 0.1);
        DriftContext::new(&DomainSpec::sphere(TargetSpec::Infinity), cfg, &[]).unwrap()
    }

    #[test]
    fn driver_is_deterministic_and_anchored() {
        let a = sample_driver(2.0, -3.0, 1.0, 1e-3, 7).unwrap();
        let b = sample_driver(2.0, -3.0, 1.0, 1e-3, 7).unwrap();
        assert_eq!(a, b);
        let i0 = a.times.iter().position(|t| t.abs() < 1e-12).unwrap();
        assert_eq!(a.values[i0], a.x0);
        assert!((0.0..TAU).contains(&a.x0));
        let c = sample_driver(2.0, -3.0, 1.0, 1e-3, 8).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn driver_increment_variance() {
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for seed in 0..n {
            let d = sample_driver(3.0, -1.0, -0.5, 0.25, seed).unwrap();
            let x = d.values[2] - d.values[0];
            s += x;
            s2 += x * x;
        }
        let var = s2 / n as f64 - (s / n as f64).powi(2);
        // Var of the sample variance for a normal is 2σ⁴/n
        let se = (2.0 * 1.5f64.powi(2) / n as f64).sqrt();
        assert!((var - 1.5).abs() < 3.0 * se, "{var}");
    }

    #[test]
    fn sphere_infinity_is_the_driver() {
        let ctx = sphere_ctx();
        let d = sample_driver(4.0, -6.0, 1.0, 1e-3, 3).unwrap();
        let cfg = LerwConfig { t_end: 1.0, ..Default::default() };
        let run = solve_driving_sde(&ctx, &cfg, &d, None).unwrap();
        let shift = (d.values[0] / TAU).floor() * TAU;
        assert_eq!(run.xi.len(), d.times.len());
        for (a, b) in run.xi.values.iter().zip(&d.values) {
            assert!((a - (b - shift)).abs() <= 1e-12);
        }
        let m = partition_function(&run, 1.0).unwrap();
        assert!(m.m_values.iter().all(|&v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn e_functions_integrate() {
        let ln_r = 0.3;
        let t = -4.0;
        let h = 1e-3;
        let mut acc = 0.0;
        for k in 0..40_000 {
            let s = t - 40.0 + k as f64 * h;
            acc += 0.5 * (e_j(1, s, ln_r) + e_j(1, s + h, ln_r)) * h;
        }
        assert!((acc - e_j(2, t, ln_r)).abs() < 1e-6);
    }

    #[test]
    fn lambda_zero_reproduces_the_driver() {
        let ctx = crate::testutil::disk_context();
        let d = sample_driver(2.0, -10.0, -3.0, 1e-3, 11).unwrap();
        let cfg = LerwConfig { lambda: 0.0, t_end: -3.0, ..Default::default() };
        let run = solve_driving_sde(ctx, &cfg, &d, None).unwrap();
        let shift = (d.values[0] / TAU).floor() * TAU;
        for (a, b) in run.xi.values.iter().zip(&d.values) {
            assert!((a - (b - shift)).abs() <= 1e-12);
        }
        assert_eq!(run.stop_reason, StopReason::ReachedStopTime);
        let m = partition_function(&run, 1.0).unwrap();
        assert_eq!(m.m_values[0], 1.0);
        assert!(m.m_values.iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn sde_and_picard_agree_on_a_deterministic_driver() {
        let ctx = crate::testutil::disk_context();
        let (t0, t1, dt) = (-9.0, -4.5, 1e-3);
        let f = |t: f64| 1.0 + 0.5 * (3.0 * t).sin();
        let drv = DriverSample::from_fn(t0, t1, dt, f);
        let cfg = LerwConfig { t_end: t1, cadence: Cadence::fixed(0.01), ..Default::default() };
        let sde = solve_driving_sde(ctx, &cfg, &drv, None).unwrap();
        let path = DrivingPath::from_fn(t0, t1, dt, f);
        let pic = solve_driving_picard(ctx, 2.0, &path, t1, &PicardOptions::default()).unwrap();
        assert!(pic.ratios.iter().all(|&r| r <= 0.6), "{:?}", pic.ratios);
        assert!(pic.residual <= 2e-6, "{}", pic.residual);
        let shift = (drv.values[0] / TAU).floor() * TAU;
        let lip = sde.x_samples.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-3);
        let diff = sde.xi.values.iter().zip(&pic.xi.values).map(|(a, b)| (a + shift - b).abs()).fold(0.0, f64::max);
        let drift_total = (pic.xi.values.last().unwrap() - path.values.last().unwrap()).abs();
        eprintln!("diff {diff} drift {drift_total} changes {:?}", pic.changes);
        assert!(drift_total > 1e-4);
        assert!(diff < 0.05 * drift_total + 2.0 * dt * lip);
    }
}
