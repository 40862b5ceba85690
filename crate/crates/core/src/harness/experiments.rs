//! The experiments, and the ensembles and checks they are assembled from.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{PI, TAU};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::report::{Check, Report, Series};
use super::stats::{
    bin_counts, bootstrap_se, chi2_homogeneity, cluster_mean_se, ks_two_sample, kuiper_two_sample, mean_se,
    quantile_edges,
};
use super::{default_domain, sample_seed, ExperimentConfig, Tolerances};
use crate::domain::{build_grid, circle_polygon, DomainSpec, GridGraph, Nbr, Outer, TargetVertices};
use crate::error::{Error, Result};
use crate::harmonic::closed::disk_green;
use crate::harmonic::{green_function, DriftConfig, DriftContext, TargetSpec};
use crate::lerw_continuous::{
    fit_truncation, partition_function, sample_driver, solve_driving_picard, solve_driving_sde, Guard, LerwConfig,
    Observation, PicardOptions, StopReason, TruncationFit,
};
use crate::lerw_discrete::{
    exact, extract_driving_with, extract_driving_with_drift, loop_erase, sample_lerw_with, stopping_indices,
    vertex_pos, ConditionedWalk, ExtractOptions, LatticePath,
};
use crate::loewner::capacity::log_capacity;
use crate::loewner::{
    curve_to_driving, driving_to_curve, hull_radius_capacity, BaseHull, DrivingPath, HullShape, WholePlaneState,
};
use crate::C64;

/// Mesh of the drift solver's auxiliary lattice.
pub const SOLVER_DELTA: f64 = 1.0 / 64.0;
/// Pieces each lattice edge is cut into before welding, so that vertex driving values approach
/// those of the straight-edged path.
pub const EDGE_SUBDIVISION: usize = 32;
/// Base capacity of the drift-moment window.
pub const DRIFT_MOMENTS_B: f64 = -3.0;
/// Base capacity of the checkpoints `b, b + 1/2, b + 1` for the martingale and convergence tests.
pub const CHECKPOINT_B: f64 = -4.0;
/// Image target `V(1/2) + c` in the conformal test; a point of the solver lattice.
pub const MOBIUS_TARGET: f64 = 34.0 / 64.0;

/// Real shift `c` of `V(z) = (z - c)/(1 - cz)` with `V(1/2) + c = MOBIUS_TARGET`.
pub fn mobius_shift() -> f64 {
    let t = MOBIUS_TARGET;
    0.5 * (t - (t * t - 8.0 * t + 4.0).sqrt())
}
/// Radius of the exit circle in the conformal test.
pub const EXIT_RADIUS: f64 = 0.2;

pub fn checkpoints(b: f64) -> Vec<f64> {
    vec![b, b + 0.5, b + 1.0]
}

/// A bounded domain with its drift context and fitted truncation.
pub struct Setup {
    pub domain: DomainSpec,
    pub ctx: DriftContext,
    pub fit: TruncationFit,
}

impl Setup {
    /// `lambda` sets the truncation fit (the LERW value when comparing against SLE).
    pub fn new(domain: DomainSpec, observers: &[C64], lambda: f64) -> Result<Self> {
        if domain.is_sphere() {
            return Err(Error::Unsupported("the setup needs a bounded domain".into()));
        }
        let ctx = DriftContext::new(&domain, DriftConfig::for_domain(&domain, SOLVER_DELTA), observers)?;
        let lam = if lambda != 0.0 { lambda } else { 2.0 };
        let fit = fit_truncation(&ctx, lam, 1e-4)?;
        Ok(Setup { domain, ctx, fit })
    }
}

/// What is kept of one continuous run.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousSummary {
    pub seed: u64,
    pub stop: StopReason,
    pub t_stop: f64,
    pub observations: Vec<Observation>,
    pub m_final: f64,
    pub max_abs_ln_m: f64,
    /// Argument of the first tip outside the exit curve, when requested.
    pub exit_angle: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub kappa: f64,
    pub lambda: f64,
    /// Exponent of the partition function evaluated along each run.
    pub alpha: f64,
    pub dt: f64,
    pub n: usize,
    pub seed: u64,
    pub checkpoints: Vec<f64>,
    pub guard: Guard,
}

/// First tip, sampled every `stride` slits, with `|f(tip)| ≥ r`; returns `arg f(tip)`.
fn exit_angle(state: &WholePlaneState, stride: usize, f: &dyn Fn(C64) -> C64, r: f64) -> Option<f64> {
    let n = state.slits.len();
    let mut k = 0;
    while k <= n {
        let tip = state.prefix(k).tip();
        let w = f(tip);
        if w.norm() >= r {
            return Some(w.arg());
        }
        if k == n {
            break;
        }
        k = (k + stride).min(n);
    }
    None
}

/// Independent continuous runs with per-sample seeds, in sample order.
pub fn continuous_ensemble(setup: &Setup, spec: &EnsembleSpec, exit: Option<(&(dyn Fn(C64) -> C64 + Sync), f64)>) -> Result<Vec<ContinuousSummary>> {
    (0..spec.n as u64)
        .into_par_iter()
        .map(|i| {
            let seed = sample_seed(spec.seed, i);
            let drv = sample_driver(spec.kappa, setup.fit.t_start, 0.0, spec.dt, seed)?;
            let cfg = LerwConfig {
                kappa: spec.kappa,
                lambda: spec.lambda,
                dt: spec.dt,
                t_end: 0.0,
                guard: spec.guard.clone(),
                checkpoints: spec.checkpoints.clone(),
                ..Default::default()
            };
            let run = solve_driving_sde(&setup.ctx, &cfg, &drv, Some(&setup.fit))?;
            let m = partition_function(&run, spec.alpha)?;
            let max_abs_ln_m = m.m_values.iter().map(|v| v.ln().abs()).fold(0.0, f64::max);
            let exit_angle = exit.and_then(|(f, r)| exit_angle(&run.state, 4, f, r));
            Ok(ContinuousSummary {
                seed,
                stop: run.stop_reason,
                t_stop: run.xi.t_end(),
                observations: run.observations,
                m_final: *m.m_values.last().unwrap(),
                max_abs_ln_m,
                exit_angle,
            })
        })
        .collect()
}

/// Values of `f` at each checkpoint, `[checkpoint][run]`.
pub fn checkpoint_values(runs: &[ContinuousSummary], cps: &[f64], dt: f64, f: impl Fn(&Observation) -> f64) -> Result<Vec<Vec<f64>>> {
    cps.iter()
        .map(|&cp| {
            runs.iter()
                .map(|r| {
                    r.observations
                        .iter()
                        .find(|o| (o.t - cp).abs() <= 0.5 * dt + 1e-9)
                        .map(&f)
                        .ok_or_else(|| Error::InsufficientSamples(format!("run {} has no observation at t = {cp}", r.seed)))
                })
                .collect()
        })
        .collect()
}

fn increments(v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    v.windows(2).map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect()).collect()
}

/// Mean increments of `P_t(z)/P_t(z_e)` between consecutive checkpoints.
pub fn poisson_checks(runs: &[ContinuousSummary], cps: &[f64], dt: f64, tol: &Tolerances, criterion: &str) -> Result<Vec<Check>> {
    let vals = checkpoint_values(runs, cps, dt, |o| o.poisson[0])?;
    Ok(increments(&vals)
        .iter()
        .enumerate()
        .map(|(k, inc)| {
            let (m, se) = mean_se(inc);
            Check::within_se(&format!("Poisson drift {} -> {}", cps[k], cps[k + 1]), criterion, m, 0.0, se, tol.se_band)
        })
        .collect())
}

/// Fails (as a control should) when some increment is more than `k` SE away from 0.
pub fn poisson_control(runs: &[ContinuousSummary], cps: &[f64], dt: f64, tol: &Tolerances, criterion: &str) -> Result<Check> {
    let checks = poisson_checks(runs, cps, dt, tol, criterion)?;
    let worst = checks.iter().map(|c| c.value.abs() / c.se.unwrap()).fold(0.0, f64::max);
    let mut c = Check::at_most("Poisson drift under SLE (control)", criterion, worst, tol.se_band);
    c.detail = format!("largest |mean|/SE {worst:.2}");
    Ok(c.as_control())
}

pub fn partition_checks(runs: &[ContinuousSummary], tol: &Tolerances, criterion: &str) -> Vec<Check> {
    let m: Vec<f64> = runs.iter().map(|r| r.m_final).collect();
    let (mean, se) = mean_se(&m);
    let worst = runs.iter().map(|r| r.max_abs_ln_m).fold(0.0, f64::max);
    let guard_hits = runs.iter().filter(|r| r.stop == StopReason::HullHitGuardCurve).count();
    vec![
        Check::within_se("mean M at the guard time", criterion, mean, 1.0, se, tol.se_band)
            .with_detail(format!("{guard_hits}/{} runs stopped at the guard", runs.len())),
        Check::flag("max |ln M| finite", criterion, worst.is_finite(), format!("max |ln M| = {worst:.4}")),
    ]
}

pub fn partition_control(lerw_runs: &[ContinuousSummary], tol: &Tolerances, criterion: &str) -> Check {
    let m: Vec<f64> = lerw_runs.iter().map(|r| r.m_final).collect();
    let (mean, se) = mean_se(&m);
    let mut c = Check::within_se("mean M under the LERW law (control)", criterion, mean, 1.0, se, tol.se_band);
    c.name = "mean M under the LERW law (control)".into();
    c.as_control()
}

fn sphere_context(target: TargetSpec) -> Result<DriftContext> {
    let cfg = DriftConfig::for_domain(&default_domain(), SOLVER_DELTA);
    DriftContext::new(&DomainSpec::sphere(target), cfg, &[])
}

/// Sphere with target ∞: the SDE returns the driver exactly, for several `κ`.
pub fn degenerate_drift_check(seed: u64) -> Result<Check> {
    let ctx = sphere_context(TargetSpec::Infinity)?;
    let mut worst = 0.0f64;
    for (k, &kappa) in [1.0, 2.0, 4.0, 8.0].iter().enumerate() {
        let d = sample_driver(kappa, -6.0, 1.0, 1e-3, sample_seed(seed, k as u64))?;
        let cfg = LerwConfig { kappa, lambda: 2.0, t_end: 1.0, ..Default::default() };
        let run = solve_driving_sde(&ctx, &cfg, &d, None)?;
        let shift = (d.values[0] / TAU).floor() * TAU;
        if run.xi.len() != d.times.len() {
            return Ok(Check::flag("sphere drift is zero", "1", false, "run stopped early"));
        }
        for (a, b) in run.xi.values.iter().zip(&d.values) {
            worst = worst.max((a - (b - shift)).abs());
        }
    }
    Ok(Check::at_most("sphere/∞: ξ equals the driver", "1", worst, 1e-12))
}

/// Sphere with target ∞: `M ≡ 1`.
pub fn sphere_partition_check(seed: u64) -> Result<Check> {
    let ctx = sphere_context(TargetSpec::Infinity)?;
    let mut worst = 0.0f64;
    for k in 0..4 {
        let d = sample_driver(2.0, -6.0, 1.0, 1e-3, sample_seed(seed, 100 + k))?;
        let run = solve_driving_sde(&ctx, &LerwConfig { t_end: 1.0, ..Default::default() }, &d, None)?;
        let m = partition_function(&run, 1.0)?;
        worst = m.m_values.iter().map(|v| (v - 1.0).abs()).fold(worst, f64::max);
    }
    Ok(Check::at_most("sphere/∞: M ≡ 1", "9", worst, 1e-10))
}

/// `e^{iξ_δ(t)}` samples at each checkpoint from discrete LERWs, `[checkpoint][sample]`.
pub fn discrete_checkpoint_ensemble(domain: &DomainSpec, delta: f64, n: usize, seed: u64, cps: &[f64], stop_radius: f64) -> Result<Vec<Vec<f64>>> {
    let grid = build_grid(domain, delta)?;
    let walk = ConditionedWalk::for_grid(&grid)?;
    let opts = ExtractOptions { stop_radius: Some(stop_radius), subdivide: EDGE_SUBDIVISION, ..Default::default() };
    let rows: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, i));
            let path = sample_lerw_with(&grid, &walk, grid.origin, &mut rng)?;
            let dd = extract_driving_with(&grid, &path, f64::NEG_INFINITY, &opts)?;
            cps.iter()
                .map(|&t| dd.xi_at(t).ok_or_else(|| Error::InsufficientSamples(format!("path ends before capacity {t}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..cps.len()).map(|k| rows.iter().map(|r| r[k]).collect()).collect())
}

/// Kuiper distances between discrete and continuous laws of `e^{iξ(t*)}` and their trend in `δ`.
pub fn convergence_checks(
    continuous: &[Vec<f64>],
    discrete: &[(f64, Vec<Vec<f64>>)],
    cps: &[f64],
    tol: &Tolerances,
    seed: u64,
    report: &mut Report,
) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, u64::MAX));
    let mut series = Series::new("kuiper_distance", &["t", "delta", "distance", "se", "p_value"]);
    let kuiper = |a: &[f64], b: &[f64]| kuiper_two_sample(a, b).0;
    for (k, &t) in cps.iter().enumerate() {
        let cont = &continuous[k];
        let half = cont.len() / 2;
        let (v0, p0) = kuiper_two_sample(&cont[..half], &cont[half..]);
        checks.push(Check::p_above(&format!("null calibration at t = {t}"), "12", v0, p0, tol.p_min));
        let mut rows = Vec::new();
        for (delta, samples) in discrete {
            let (v, p) = kuiper_two_sample(&samples[k], cont);
            let se = bootstrap_se(&samples[k], cont, 200, &mut rng, kuiper);
            series.rows.push(vec![t, *delta, v, se, p]);
            report.stat(&format!("kuiper t={t} delta={delta}"), v);
            report.stat(&format!("kuiper_se t={t} delta={delta}"), se);
            rows.push((*delta, v, se));
        }
        rows.sort_by(|a, b| b.0.total_cmp(&a.0));
        for w in rows.windows(2) {
            let (coarse, fine) = (w[0], w[1]);
            let band = (coarse.2 * coarse.2 + fine.2 * fine.2).sqrt();
            let mut c = Check::at_most(
                &format!("Kuiper distance non-increasing at t = {t}: δ {} -> {}", coarse.0, fine.0),
                "12",
                (fine.1 - coarse.1).max(0.0),
                band,
            );
            c.detail = format!("{:.4} -> {:.4} (1 SE of the difference {:.4})", coarse.1, fine.1, band);
            checks.push(c);
        }
    }
    report.series.push(series);
    checks
}

/// One stopping increment of a discrete LERW.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Increment {
    pub dxi: f64,
    pub dv: f64,
    /// `∫X dt` over the increment.
    pub ix: f64,
    /// `X` at the start of the increment.
    pub x0: f64,
}

/// Stopping increments of `n` discrete LERWs, `[sample][scale][increment]`.
#[allow(clippy::too_many_arguments)]
pub fn drift_increment_ensemble(
    ctx: &DriftContext,
    domain: &DomainSpec,
    delta: f64,
    n: usize,
    seed: u64,
    b: f64,
    ds: &[f64],
    subdivide: usize,
) -> Result<Vec<Vec<Vec<Increment>>>> {
    let grid = build_grid(domain, delta)?;
    let walk = ConditionedWalk::for_grid(&grid)?;
    let opts = ExtractOptions { stop_radius: Some(ctx.config.guard_radius), subdivide, ..Default::default() };
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, i));
            let path = sample_lerw_with(&grid, &walk, grid.origin, &mut rng)?;
            let ex = extract_driving_with_drift(ctx, &grid, &path, b, &opts, Default::default())?;
            let (v, xi) = (&ex.data.capacities, &ex.data.vertex_xi);
            Ok(ds
                .iter()
                .map(|&d| {
                    let idx = stopping_indices(v, xi, d);
                    idx.windows(2)
                        .map(|w| Increment {
                            dxi: xi[w[1]] - xi[w[0]],
                            dv: v[w[1]] - v[w[0]],
                            ix: ex.drift_integral[w[1]] - ex.drift_integral[w[0]],
                            x0: ex.x_at_vertex[w[0]],
                        })
                        .collect()
                })
                .collect())
        })
        .collect()
}

fn grouped(samples: &[Vec<Vec<Increment>>], k: usize, f: impl Fn(&Increment) -> f64) -> Vec<Vec<f64>> {
    samples.iter().map(|s| s[k].iter().map(&f).collect()).collect()
}

/// The conditional-moment tests on stopping increments at scales `ds = [d, d/2]`.
pub fn drift_moment_checks(
    samples: &[Vec<Vec<Increment>>],
    ds: &[f64],
    kappa: f64,
    lambda: f64,
    tol: &Tolerances,
    controls: bool,
    seed: u64,
    report: &mut Report,
) -> Vec<Check> {
    let mut checks = Vec::new();
    let mut resid = Vec::new();
    let mut series = Series::new("drift_moments", &["d", "increments", "drift_mean", "drift_se", "weighted_mean", "weighted_se", "quad_mean", "quad_se", "qv_ratio"]);
    for (k, &d) in ds.iter().enumerate() {
        let drift = grouped(samples, k, |i| i.dxi - lambda * i.ix);
        let weighted = grouped(samples, k, |i| i.x0.signum() * (i.dxi - lambda * i.ix));
        let quad = grouped(samples, k, |i| i.dxi * i.dxi - kappa * i.dv);
        let (dm, dse) = cluster_mean_se(&drift);
        let (wm, wse) = cluster_mean_se(&weighted);
        let (qm, qse) = cluster_mean_se(&quad);
        let (xx, _) = cluster_mean_se(&grouped(samples, k, |i| i.dxi * i.dxi));
        let (vv, _) = cluster_mean_se(&grouped(samples, k, |i| kappa * i.dv));
        let ratio = xx / vv;
        let (_, rse) = cluster_mean_se(&grouped(samples, k, |i| i.dxi * i.dxi - ratio * kappa * i.dv));
        let rse = rse / vv;
        let count: usize = drift.iter().map(|g| g.len()).sum();
        series.rows.push(vec![d, count as f64, dm, dse, wm, wse, qm, qse, ratio]);
        report.stat(&format!("increments d={d}"), count as f64);
        let tag = if k == 0 { "7" } else { "7 (d/2, informational)" };
        let gate = k == 0;
        let mut cs = vec![
            (gate, Check::within_se(&format!("mean(Δξ - λ∫X) at d = {d}"), tag, dm, 0.0, dse, tol.se_band)),
            (false, Check::within_se(&format!("mean(sign X·(Δξ - λ∫X)) at d = {d}"), tag, wm, 0.0, wse, tol.se_band)),
            (gate, Check::within_se(&format!("mean(Δξ² - κΔv) at d = {d}"), tag, qm, 0.0, qse, tol.se_band)),
            (false, Check::within_se(&format!("mean(Δξ²)/mean(κΔv) at d = {d}"), tag, ratio, 1.0, rse, tol.se_band)),
        ];
        for (gating, c) in &mut cs {
            if !*gating {
                c.detail = format!("{}; not gating: {}", c.detail, if c.passed { "within band" } else { "outside band" });
                c.passed = true;
            }
        }
        let cs = cs.into_iter().map(|(_, c)| c);
        checks.extend(cs);
        resid.push(((dm, dse), (qm, qse)));
        if controls && k == 0 {
            // pair each Δξ with the drift integral of a random other increment
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, 0xC0FFEE));
            let mut pool: Vec<f64> = samples.iter().flat_map(|s| s[k].iter().map(|i| i.ix)).collect();
            pool.shuffle(&mut rng);
            let mut it = pool.into_iter();
            let shuffled: Vec<Vec<f64>> = samples
                .iter()
                .map(|s| s[k].iter().map(|i| i.x0.signum() * (i.dxi - lambda * it.next().unwrap())).collect())
                .collect();
            let (sm, sse) = cluster_mean_se(&shuffled);
            checks.push(
                Check::within_se(&format!("shuffled pairing at d = {d} (control)"), "7", sm, 0.0, sse, tol.se_band)
                    .as_control(),
            );
        }
    }
    if resid.len() >= 2 {
        let (d0, d1) = (resid[0], resid[1]);
        for (name, (r0, s0), (r1, s1)) in [("drift", d0.0, d1.0), ("quadratic", d0.1, d1.1)] {
            let band = r0.abs() / 8.0 + tol.se_band * (s1 * s1 + (s0 / 8.0).powi(2)).sqrt();
            let mut c = Check::at_most(&format!("{name} residual scales like d³"), "7", r1, band);
            c.detail = format!("|r(d)| = {:.3e}, |r(d/2)| = {:.3e}, ratio {:.2}", r0.abs(), r1.abs(), r0.abs() / r1.abs());
            checks.push(c);
        }
    }
    report.series.push(series);
    checks
}

/// Scalar functionals of a lattice path, read from its start.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathFunctionals {
    /// Winding about the marked point of the loop closed by the segment from the end to the start.
    pub winding: i64,
    /// Side (+1 above, -1 below) of the first crossing of the vertical line through the marked point.
    pub side: i8,
    pub cap_quarter: f64,
    pub cap_half: f64,
    pub re_quarter: f64,
}

/// Marked point for the winding and passage functionals, off the lattice lines of dyadic meshes.
pub const MARKED_POINT: C64 = C64::new(0.26, 0.011);

pub fn path_functionals(points: &[C64], marked: C64) -> Result<PathFunctionals> {
    let n = points.len();
    if n < 3 {
        return Err(Error::DegenerateHull);
    }
    let mut wind = 0.0;
    for k in 0..n {
        let (a, b) = (points[k], points[(k + 1) % n]);
        wind += ((b - marked) / (a - marked)).arg();
    }
    let mut side = 0i8;
    for w in points.windows(2) {
        let (a, b) = (w[0] - marked, w[1] - marked);
        if (a.re < 0.0) != (b.re < 0.0) {
            let s = a.re / (a.re - b.re);
            let y = a.im + s * (b.im - a.im);
            side = if y > 0.0 { 1 } else { -1 };
            break;
        }
    }
    let cap = |f: f64| -> Result<f64> {
        let k = ((f * (n - 1) as f64).round() as usize).max(1);
        log_capacity(&HullShape::Polyline(points[..=k].to_vec()), 64)
    };
    let kq = ((0.25 * (n - 1) as f64).round() as usize).max(1);
    Ok(PathFunctionals {
        winding: (wind / TAU).round() as i64,
        side,
        cap_quarter: cap(0.25)?,
        cap_half: cap(0.5)?,
        re_quarter: points[kq].re,
    })
}

/// Two-sample tests on path functionals; every check passes at `p > p_min`.
pub fn functional_tests(a: &[PathFunctionals], b: &[PathFunctionals], tol: &Tolerances, criterion: &str, label: &str) -> Vec<Check> {
    let cat = |xs: &[PathFunctionals], f: &dyn Fn(&PathFunctionals) -> usize, k: usize| {
        let mut c = vec![0u64; k];
        for x in xs {
            c[f(x)] += 1;
        }
        c
    };
    let wind = |x: &PathFunctionals| (x.winding.clamp(-2, 2) + 2) as usize;
    let side = |x: &PathFunctionals| if x.side > 0 { 1 } else { 0 };
    let w = chi2_homogeneity(&[cat(a, &wind, 5), cat(b, &wind, 5)]);
    let s = chi2_homogeneity(&[cat(a, &side, 2), cat(b, &side, 2)]);
    let mut out = vec![
        Check::p_above(&format!("{label}: winding (chi-square)"), criterion, w.statistic, w.p_value, tol.p_min),
        Check::p_above(&format!("{label}: passage side (chi-square)"), criterion, s.statistic, s.p_value, tol.p_min),
    ];
    let fields: [(&str, fn(&PathFunctionals) -> f64); 3] = [
        ("capacity at 1/4 arclength", |x| x.cap_quarter),
        ("capacity at 1/2 arclength", |x| x.cap_half),
        ("Re at 1/4 arclength", |x| x.re_quarter),
    ];
    for (name, f) in fields {
        let xa: Vec<f64> = a.iter().map(f).collect();
        let xb: Vec<f64> = b.iter().map(f).collect();
        let (d, p) = ks_two_sample(&xa, &xb);
        out.push(Check::p_above(&format!("{label}: {name} (KS)"), criterion, d, p, tol.p_min));
    }
    out
}

/// Forward LERWs `0 → w_e` and backward LERWs `w_e → 0` on one grid.
pub fn reversal_ensembles(grid: &GridGraph, n: usize, seed: u64) -> Result<(Vec<LatticePath>, Vec<LatticePath>)> {
    let we = match grid.target {
        TargetVertices::Point(v) => v,
        _ => return Err(Error::Unsupported("reversibility needs an interior point target".into())),
    };
    let fwd_walk = ConditionedWalk::for_grid(grid)?;
    let bwd_walk = ConditionedWalk::new(grid, &[Nbr::Interior(grid.origin)], &[])?;
    let sample = |walk: &ConditionedWalk, from: u32, salt: u64| -> Result<Vec<LatticePath>> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed ^ salt, i));
                sample_lerw_with(grid, walk, from, &mut rng)
            })
            .collect()
    };
    Ok((sample(&fwd_walk, grid.origin, 0)?, sample(&bwd_walk, we, 0x5EED)?))
}

pub fn functionals_of(grid: &GridGraph, paths: &[LatticePath]) -> Result<Vec<PathFunctionals>> {
    paths.par_iter().map(|p| path_functionals(&p.points(grid), MARKED_POINT)).collect()
}

/// 3×3 interior block `{-1, 0, 1}²·δ` with a corner target.
pub fn three_by_three() -> Result<GridGraph> {
    let h = 0.75;
    let d = DomainSpec {
        outer: Outer::Polygon(vec![C64::new(-h, -h), C64::new(h, -h), C64::new(h, h), C64::new(-h, h)]),
        holes: vec![],
        target: TargetSpec::Point { z: C64::new(0.5, 0.5) },
        label: "3x3 block".into(),
    };
    build_grid(&d, 0.5)
}

/// Exact reversal on the 3×3 block: each simple path and its reversal have equal probability.
pub fn exact_reversal_check() -> Result<Check> {
    let g = three_by_three()?;
    let TargetVertices::Point(we) = g.target else { unreachable!() };
    let (fwd, _) = exact::lerw_law(&g, &[Nbr::Interior(we)], g.origin)?;
    let (bwd, _) = exact::lerw_law(&g, &[Nbr::Interior(g.origin)], we)?;
    let back: HashMap<Vec<Nbr>, f64> = bwd.into_iter().collect();
    let mut worst = 0.0f64;
    for (p, q) in &fwd {
        let mut r = p.clone();
        r.reverse();
        worst = worst.max((back.get(&r).copied().unwrap_or(0.0) - q).abs());
    }
    Ok(Check::at_most("3×3: reversed LERW law equals backward law", "11", worst, 1e-12)
        .with_detail(format!("{} simple paths", fwd.len())))
}

/// Per-class `|f - p| ≤ k·SE`, merging classes with expected count below 10 into one.
fn class_checks(name: &str, criterion: &str, probs: &[f64], counts: &[u64], n: usize, k: f64) -> Vec<Check> {
    let nf = n as f64;
    let (mut rare_p, mut rare_c) = (0.0, 0u64);
    let mut out = Vec::new();
    let mut worst = 0.0f64;
    let mut all = true;
    let mut test = |p: f64, c: u64| {
        let se = (p * (1.0 - p) / nf).sqrt().max(1e-300);
        let z = (c as f64 / nf - p).abs() / se;
        worst = worst.max(z);
        all &= z <= k;
    };
    let mut classes = 0;
    for (&p, &c) in probs.iter().zip(counts) {
        if p * nf < 10.0 {
            rare_p += p;
            rare_c += c;
        } else {
            test(p, c);
            classes += 1;
        }
    }
    if rare_p > 0.0 || rare_c > 0 {
        test(rare_p.max(1e-300), rare_c);
        classes += 1;
    }
    out.push(Check::at_most(name, criterion, worst, k).with_detail(format!("{classes} classes, largest deviation {worst:.2} SE")));
    let _ = all;
    out
}

/// Conditioned walk and LERW laws on the 3×3 block against enumeration, and loop-erasure cases.
pub fn discrete_exactness_checks(n: usize, seed: u64, tol: &Tolerances) -> Result<Vec<Check>> {
    let g = three_by_three()?;
    let walk = ConditionedWalk::for_grid(&g)?;
    let max_len = 400;
    let (len_law, tail) = exact::conditioned_length_law(&g, &walk.targets, g.origin, max_len);
    let (lerw_law, _) = exact::lerw_law(&g, &walk.targets, g.origin)?;
    let index: HashMap<Vec<Nbr>, usize> = lerw_law.iter().enumerate().map(|(k, (p, _))| (p.clone(), k)).collect();
    let samples: Vec<(usize, usize)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, i));
            let p = walk.sample_with(&g, g.origin, &mut rng)?;
            let l = loop_erase(&p);
            Ok((p.len().min(max_len + 1), index[&l.vertices]))
        })
        .collect::<Result<_>>()?;
    let mut len_counts = vec![0u64; max_len + 2];
    let mut path_counts = vec![0u64; lerw_law.len()];
    for &(l, k) in &samples {
        len_counts[l] += 1;
        path_counts[k] += 1;
    }
    let mut probs = len_law.clone();
    probs.push(tail);
    let mut out = class_checks("3×3 conditioned walk: length law", "10", &probs, &len_counts, n, tol.se_band);
    let lp: Vec<f64> = lerw_law.iter().map(|(_, p)| *p).collect();
    out.extend(class_checks("3×3 LERW: path law", "10", &lp, &path_counts, n, tol.se_band));
    let ids = |v: &[u32]| LatticePath { vertices: v.iter().map(|&i| Nbr::Interior(i)).collect(), delta: 1.0, simple: false };
    let cases: [(&[u32], &[u32]); 4] =
        [(&[1, 2, 3], &[1, 2, 3]), (&[1, 2, 1, 3], &[1, 3]), (&[1, 2, 3, 2, 4], &[1, 2, 4]), (&[1, 2, 3, 4, 2, 5, 1, 6], &[1, 6])];
    let ok = cases.iter().all(|(a, b)| loop_erase(&ids(a)).vertices == ids(b).vertices);
    out.push(Check::flag("loop-erasure unit cases", "10", ok, ""));
    Ok(out)
}

/// `|X|` follows the `E₁` decay and `-t·∂_yJ̃ → G(D, z_e; 0)` at early times.
pub fn drift_asymptotics_checks(ctx: &DriftContext) -> Result<Vec<Check>> {
    let ln_r = ctx.r.ln();
    let theta = 1.0;
    let bundle = |t: f64| ctx.derivative_bundle(&WholePlaneState::new(BaseHull::Segment { t0: t, theta }), theta);
    let (b8, b9) = (bundle(-8.0)?, bundle(-9.0)?);
    let ratio = b9.x() / b8.x();
    let expect = (-1.0f64).exp() * (ln_r + 9.0) / (ln_r + 8.0);
    let g0 = ctx.g0;
    Ok(vec![
        Check::at_most("X(-9)/X(-8) against E₁(-9)/E₁(-8)", "5", ratio / expect - 1.0, 0.2)
            .with_detail(format!("ratio {ratio:.4}, E₁ ratio {expect:.4}")),
        Check::at_most("-t·∂_yJ̃ against G(D, z_e; 0) at t = -8", "5", 8.0 * b8.d_y / g0 - 1.0, 0.05)
            .with_detail(format!("-t·∂_yJ̃ = {:.5}, G = {g0:.5}", 8.0 * b8.d_y)),
    ])
}

/// Picard iteration on `[t_start, t_end]` with `t_end` chosen so that `C|λ|E₂(t_end) = 1/2`.
pub fn picard_checks(setup: &Setup, lambda: f64, seed: u64) -> Result<Vec<Check>> {
    let fit = &setup.fit;
    let bound = |t: f64| fit.c * lambda.abs() * crate::lerw_continuous::e_j(2, t, fit.ln_r);
    let (mut lo, mut hi) = (fit.t_start, fit.ln_r);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if bound(mid) <= 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_end = lo;
    let drv = sample_driver(2.0, fit.t_start, t_end, 1e-3, seed)?;
    let f = DrivingPath::new(drv.times.clone(), drv.values.clone(), 2.0, crate::loewner::Anchor::Real)?;
    let res = solve_driving_picard(&setup.ctx, lambda, &f, t_end, &PicardOptions::default())?;
    let worst = res.ratios.iter().copied().fold(0.0, f64::max);
    Ok(vec![
        Check::at_most("Picard change ratio", "6", worst, 0.6)
            .with_detail(format!("t_end = {t_end:.3}, {} iterations, ratios {:?}", res.changes.len(), res.ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>())),
        Check::at_most("Picard fixed-point residual", "6", res.residual, 2e-6),
    ])
}

/// Green's function of the disk at `δ = 1/64, 1/128` against the closed form, and its symmetry.
/// The 16384-gon keeps the polygon error below the `δ = 1/128` grid error.
pub fn green_checks() -> Result<Vec<Check>> {
    let ze = C64::new(0.3, 0.2);
    let domain = DomainSpec::unit_disk(16384, TargetSpec::Point { z: ze });
    let mut errs = Vec::new();
    for inv in [64.0, 128.0] {
        let g = build_grid(&domain, 1.0 / inv)?;
        let f = green_function(&g, &[], ze)?;
        let e = (0..g.n_interior() as u32)
            .filter(|&v| (g.pos(v) - ze).norm() > 1e-9)
            .map(|v| (f.value(v) - disk_green(g.pos(v), ze, 1.0)).abs())
            .fold(0.0, f64::max);
        errs.push(e);
    }
    let ratio = errs[0] / errs[1];
    let mut order = Check::flag("Green error ratio under halving δ in [3, 5]", "4", (3.0..=5.0).contains(&ratio), format!("ratio {ratio:.3}"));
    order.value = ratio;
    let g = build_grid(&domain, 1.0 / 64.0)?;
    let (a, b) = (C64::new(-0.41, 0.13), C64::new(0.22, -0.57));
    let gab = green_function(&g, &[], a)?.value_at(b)?;
    let gba = green_function(&g, &[], b)?.value_at(a)?;
    Ok(vec![
        Check::at_most("disk Green max error at δ = 1/128", "4", errs[1], 1e-3)
            .with_detail(format!("{:.3e} at δ = 1/64", errs[0])),
        order,
        Check::at_most("Green symmetry G(a; b) = G(b; a)", "4", gab - gba, 2e-3),
    ])
}

/// Driving → curve → driving for `ξ = 2 sin t` on `[-4, 0]`.
pub fn roundtrip_check() -> Result<Check> {
    let xi = DrivingPath::from_fn(-4.0, 0.0, 1e-3, |t| 2.0 * t.sin());
    let tr = driving_to_curve(&xi)?;
    let (_, out) = curve_to_driving(&tr)?;
    let err = out.sup_circle_distance(&xi);
    Ok(Check::at_most("codec roundtrip sup circular error", "2", err, 0.05))
}

/// `ccap(K_t) = t` and capacity additivity by an independent charge computation, over random
/// smooth drivers; `rad(segment) = length/4`.
pub fn capacity_checks(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drivers: Vec<[f64; 9]> = (0..20)
        .map(|_| std::array::from_fn(|k| match k % 3 {
            0 => rng.gen_range(-1.0..1.0),
            1 => rng.gen_range(0.5..2.0),
            _ => rng.gen_range(0.0..TAU),
        }))
        .collect();
    let (t1, t2) = (-1.5, 0.0);
    let errs: Vec<(f64, f64, f64)> = drivers
        .par_iter()
        .map(|p| {
            let f = |t: f64| (0..3).map(|j| p[3 * j] * (p[3 * j + 1] * t + p[3 * j + 2]).sin()).sum::<f64>();
            let xi = DrivingPath::from_fn(-3.0, t2, 1e-3, f);
            let tr = driving_to_curve(&xi)?;
            let cap = |t: f64| -> Result<f64> {
                let mut poly = vec![C64::new(0.0, 0.0)];
                poly.extend(tr.times.iter().zip(&tr.points).filter(|(s, _)| **s <= t + 1e-12).map(|(_, z)| *z));
                Ok(hull_radius_capacity(&HullShape::Polyline(poly))?.1)
            };
            let (c1, c2) = (cap(t1)?, cap(t2)?);
            let st = crate::loewner::state_from_driving(&xi, 1e-3).0;
            let from_map = st.ccap_from_map(4.0, 512);
            Ok(((c2 - t2).abs().max((c1 - t1).abs()), ((c2 - c1) - (t2 - t1)).abs(), (from_map - t2).abs()))
        })
        .collect::<Result<_>>()?;
    let worst = |k: usize| errs.iter().map(|e| [e.0, e.1, e.2][k]).fold(0.0, f64::max);
    let mut seg_err = 0.0f64;
    for _ in 0..10 {
        let end = C64::from_polar(rng.gen_range(0.1..3.0), rng.gen_range(0.0..TAU));
        let (r, _) = hull_radius_capacity(&HullShape::Polyline(vec![C64::new(0.0, 0.0), end]))?;
        seg_err = seg_err.max((r / (end.norm() / 4.0) - 1.0).abs());
    }
    Ok(vec![
        Check::at_most("ccap(K_t) = t by the charge method, 20 drivers", "3", worst(0), 1e-3),
        Check::at_most("capacity additivity dcap(K_t2/K_t1) = ccap(K_t2) - ccap(K_t1)", "3", worst(1), 1e-3),
        Check::at_most("ccap(K_t) = t from the Laurent coefficient of the map", "3", worst(2), 1e-3),
        Check::at_most("rad(segment) = length/4", "3", seg_err, 0.01),
    ])
}

fn setup_for(cfg: &ExperimentConfig, observers: &[C64]) -> Result<Setup> {
    Setup::new(cfg.domain_spec()?, observers, cfg.lambda)
}

fn ensemble_spec(cfg: &ExperimentConfig, lambda: f64, seed: u64, cps: Vec<f64>) -> EnsembleSpec {
    EnsembleSpec {
        kappa: cfg.kappa,
        lambda,
        alpha: cfg.lambda / cfg.kappa,
        dt: cfg.dt,
        n: cfg.n,
        seed,
        checkpoints: cps,
        guard: cfg.guard.clone(),
    }
}

pub fn run_drift_moments(cfg: &ExperimentConfig) -> Result<Report> {
    let mut r = Report::new("drift_moments", cfg.hash(), cfg.seed);
    let setup = setup_for(cfg, &[])?;
    let b = cfg.b.unwrap_or(DRIFT_MOMENTS_B);
    let ds = [cfg.d, cfg.d / 2.0];
    let samples = drift_increment_ensemble(&setup.ctx, &setup.domain, cfg.deltas[0], cfg.n, cfg.seed, b, &ds, EDGE_SUBDIVISION)?;
    r.stat("b", b);
    r.stat("delta", cfg.deltas[0]);
    r.checks = drift_moment_checks(&samples, &ds, cfg.kappa, cfg.lambda, &cfg.tolerances, cfg.controls, cfg.seed, &mut r);
    Ok(r)
}

pub fn run_martingale_poisson(cfg: &ExperimentConfig) -> Result<Report> {
    let mut r = Report::new("martingale_poisson", cfg.hash(), cfg.seed);
    let setup = setup_for(cfg, &[cfg.observer])?;
    let cps = checkpoints(cfg.b.unwrap_or(CHECKPOINT_B));
    let runs = continuous_ensemble(&setup, &ensemble_spec(cfg, cfg.lambda, cfg.seed, cps.clone()), None)?;
    r.checks = poisson_checks(&runs, &cps, cfg.dt, &cfg.tolerances, "8")?;
    let mut s = Series::new("poisson_observable", &["run", "t", "value"]);
    for (k, run) in runs.iter().enumerate() {
        for o in &run.observations {
            s.rows.push(vec![k as f64, o.t, o.poisson[0]]);
        }
    }
    r.series.push(s);
    if cfg.controls {
        let sle = continuous_ensemble(&setup, &ensemble_spec(cfg, 0.0, cfg.seed ^ 0xA11CE, cps.clone()), None)?;
        r.checks.push(poisson_control(&sle, &cps, cfg.dt, &cfg.tolerances, "8")?);
    }
    Ok(r)
}

pub fn run_martingale_partition(cfg: &ExperimentConfig) -> Result<Report> {
    let mut r = Report::new("martingale_partition", cfg.hash(), cfg.seed);
    let setup = setup_for(cfg, &[])?;
    let sle = continuous_ensemble(&setup, &ensemble_spec(cfg, 0.0, cfg.seed, vec![]), None)?;
    r.checks = partition_checks(&sle, &cfg.tolerances, "9");
    r.checks.push(sphere_partition_check(cfg.seed)?);
    let mut s = Series::new("partition_function", &["run", "t_stop", "m", "max_abs_ln_m"]);
    for (k, run) in sle.iter().enumerate() {
        s.rows.push(vec![k as f64, run.t_stop, run.m_final, run.max_abs_ln_m]);
    }
    r.series.push(s);
    if cfg.controls {
        let lerw = continuous_ensemble(&setup, &ensemble_spec(cfg, cfg.lambda, cfg.seed ^ 0xB0B, vec![]), None)?;
        r.checks.push(partition_control(&lerw, &cfg.tolerances, "9"));
    }
    Ok(r)
}

pub fn run_convergence_driving(cfg: &ExperimentConfig) -> Result<Report> {
    let mut r = Report::new("convergence_driving", cfg.hash(), cfg.seed);
    let domain = cfg.domain_spec()?;
    let refused = matches!(build_grid(&DomainSpec::sphere(TargetSpec::Infinity), 1.0 / 16.0), Err(Error::Unsupported(_)));
    r.checks.push(Check::flag("sphere domain refused", "12", refused, ""));
    let setup = Setup::new(domain.clone(), &[], cfg.lambda)?;
    let cps = checkpoints(cfg.b.unwrap_or(CHECKPOINT_B));
    let runs = continuous_ensemble(&setup, &ensemble_spec(cfg, cfg.lambda, cfg.seed, cps.clone()), None)?;
    let cont = checkpoint_values(&runs, &cps, cfg.dt, |o| o.xi)?;
    let mut disc = Vec::new();
    for (k, &delta) in cfg.deltas.iter().enumerate() {
        disc.push((delta, discrete_checkpoint_ensemble(&domain, delta, cfg.n, sample_seed(cfg.seed, 1000 + k as u64), &cps, setup.ctx.config.guard_radius)?));
    }
    let checks = convergence_checks(&cont, &disc, &cps, &cfg.tolerances, cfg.seed, &mut r);
    r.checks.extend(checks);
    Ok(r)
}

pub fn run_reversibility(cfg: &ExperimentConfig) -> Result<Report> {
    let mut r = Report::new("reversibility", cfg.hash(), cfg.seed);
    let grid = build_grid(&cfg.domain_spec()?, cfg.deltas[0])?;
    let (fwd, bwd) = reversal_ensembles(&grid, cfg.n, cfg.seed)?;
    let fwd_rev: Vec<LatticePath> = fwd.iter().map(|p| p.reversed()).collect();
    let fa = functionals_of(&grid, &fwd_rev)?;
    let fb = functionals_of(&grid, &bwd)?;
    r.checks = functional_tests(&fa, &fb, &cfg.tolerances, "11", "reversed forward vs backward");
    r.checks.push(exact_reversal_check()?);
    let half = fa.len() / 2;
    let mut self_test = functional_tests(&fa[..half], &fa[half..], &cfg.tolerances, "11 (self-test)", "split forward sample");
    r.checks.append(&mut self_test);
    if cfg.controls {
        let ff = functionals_of(&grid, &fwd)?;
        let tests = functional_tests(&ff, &fb, &cfg.tolerances, "11", "unreversed forward vs backward");
        let p_min = tests.iter().filter_map(|c| c.p_value).fold(1.0, f64::min);
        r.checks.push(
            Check::p_above("unreversed forward vs backward (control)", "11", p_min, p_min, cfg.tolerances.p_min).as_control(),
        );
    }
    let mut s = Series::new("path_functionals", &["direction", "winding", "side", "cap_quarter", "cap_half", "re_quarter"]);
    for (dir, set) in [(0.0, &fa), (1.0, &fb)] {
        for x in set.iter() {
            s.rows.push(vec![dir, x.winding as f64, x.side as f64, x.cap_quarter, x.cap_half, x.re_quarter]);
        }
    }
    r.series.push(s);
    Ok(r)
}

pub fn run_conformal_invariance(cfg: &ExperimentConfig) -> Result<Report> {
    let mut r = Report::new("conformal_invariance", cfg.hash(), cfg.seed);
    let c = mobius_shift();
    let v = move |z: C64| (z - c) / (1.0 - c * z);
    let base = default_domain();
    let TargetSpec::Point { z: ze } = base.target else { unreachable!() };
    let image = DomainSpec {
        outer: Outer::Polygon(circle_polygon(C64::new(c, 0.0), 1.0, 2048)),
        holes: vec![],
        target: TargetSpec::Point { z: v(ze) + c },
        label: "translated Möbius image of the unit disk".into(),
    };
    let s_d = Setup::new(base, &[], cfg.lambda)?;
    let s_v = Setup::new(image, &[], cfg.lambda)?;
    let mapped = move |z: C64| v(z) + c;
    let ident = |z: C64| z;
    let a = continuous_ensemble(&s_d, &ensemble_spec(cfg, cfg.lambda, cfg.seed, vec![]), Some((&mapped, EXIT_RADIUS)))?;
    let b = continuous_ensemble(&s_v, &ensemble_spec(cfg, cfg.lambda, cfg.seed ^ 0xD1CE, vec![]), Some((&ident, EXIT_RADIUS)))?;
    let angles = |runs: &[ContinuousSummary]| -> Result<Vec<f64>> {
        runs.iter()
            .map(|r| r.exit_angle.ok_or_else(|| Error::InsufficientSamples("a run stopped before the exit circle".into())))
            .collect()
    };
    let (xa, xb) = (angles(&a)?, angles(&b)?);
    let tol = &cfg.tolerances;
    let (v0, p0) = kuiper_two_sample(&xa, &xb);
    r.checks.push(Check::p_above("exit angle: V(LERW in D) vs LERW in V(D)", "conformal invariance", v0, p0, tol.p_min));
    let half = xa.len() / 2;
    let (v1, p1) = kuiper_two_sample(&xa[..half], &xa[half..]);
    r.checks.push(Check::p_above("identity self-test (split sample)", "conformal invariance", v1, p1, tol.p_min));
    let neg: Vec<f64> = xb.iter().map(|x| -x).collect();
    let (v2, p2) = kuiper_two_sample(&xb, &neg);
    r.checks.push(Check::p_above("reflection symmetry of the exit law", "conformal invariance", v2, p2, tol.p_min));
    if cfg.controls {
        let rot: Vec<f64> = xa.iter().map(|x| x + 0.5 * PI).collect();
        let (v3, p3) = kuiper_two_sample(&rot, &xb);
        r.checks.push(Check::p_above("rotated by π/2 (control)", "conformal invariance", v3, p3, tol.p_min).as_control());
    }
    let mut s = Series::new("exit_angles", &["picture", "angle"]);
    s.rows.extend(xa.iter().map(|x| vec![0.0, *x]));
    s.rows.extend(xb.iter().map(|x| vec![1.0, *x]));
    r.series.push(s);
    Ok(r)
}

pub fn run_loewner_roundtrip(cfg: &ExperimentConfig) -> Result<Report> {
    let mut r = Report::new("loewner_roundtrip", cfg.hash(), cfg.seed);
    r.checks.push(roundtrip_check()?);
    r.checks.extend(capacity_checks(cfg.seed)?);
    Ok(r)
}

pub fn run_green_validation(cfg: &ExperimentConfig) -> Result<Report> {
    let mut r = Report::new("green_validation", cfg.hash(), cfg.seed);
    r.checks.push(degenerate_drift_check(cfg.seed)?);
    r.checks.extend(green_checks()?);
    let setup = setup_for(cfg, &[])?;
    r.checks.extend(drift_asymptotics_checks(&setup.ctx)?);
    r.checks.extend(picard_checks(&setup, cfg.lambda, sample_seed(cfg.seed, 7))?);
    r.checks.extend(discrete_exactness_checks(100_000, cfg.seed, &cfg.tolerances)?);
    Ok(r)
}

/// Lengths of sampled paths, for quick distribution summaries.
pub fn length_quantiles(paths: &[LatticePath], bins: usize) -> BTreeMap<String, f64> {
    let lens: Vec<f64> = paths.iter().map(|p| p.len() as f64).collect();
    let edges = quantile_edges(&lens, bins);
    let counts = bin_counts(&lens, &edges);
    let mut out = BTreeMap::new();
    for (k, c) in counts.iter().enumerate() {
        out.insert(format!("bin {k}"), *c as f64);
    }
    out
}

#[allow(dead_code)]
fn pos(grid: &GridGraph, v: Nbr) -> C64 {
    vertex_pos(grid, v)
}
