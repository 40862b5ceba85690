//! Acceptance run: one PASS/FAIL line per criterion, check details below it.
//!
//! `LERW_ACCEPTANCE_ONLY=7,12` restricts the run to some criteria. The process exits non-zero
//! on a failed criterion only when `LERW_ACCEPTANCE_STRICT=1`; otherwise failures are reported
//! and the run succeeds.

use std::collections::BTreeSet;
use std::time::Instant;

use lerw_core::harness::experiments::*;
use lerw_core::harness::{default_domain, sample_seed, Check, Report, Tolerances};
use lerw_core::lerw_continuous::Guard;
use lerw_core::{build_grid, DomainSpec, Result, TargetSpec, C64};

const SEED: u64 = 20240611;
const N: usize = 2000;
const DT: f64 = 1e-3;

struct Outcome {
    criterion: u32,
    title: &'static str,
    checks: Vec<Check>,
    seconds: f64,
}

fn print(o: &Outcome) -> bool {
    let ok = !o.checks.is_empty() && o.checks.iter().all(|c| c.passed);
    println!("criterion {:>2} {}: {} ({:.1} s)", o.criterion, if ok { "PASS" } else { "FAIL" }, o.title, o.seconds);
    for c in &o.checks {
        let tag = match (c.passed, c.negative_control) {
            (true, false) => "ok",
            (false, false) => "FAILED",
            (true, true) => "ok, control rejected",
            (false, true) => "FAILED, control accepted",
        };
        let mut extra = String::new();
        if let Some(se) = c.se {
            extra.push_str(&format!(" se={se:.3e}"));
        }
        if let Some(p) = c.p_value {
            extra.push_str(&format!(" p={p:.3e}"));
        }
        println!("    [{tag}] {}: value={:.4e} bound={:.4e}{extra} {}", c.name, c.value, c.bound, c.detail);
    }
    ok
}

fn selected() -> Option<BTreeSet<u32>> {
    std::env::var("LERW_ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
}

fn run() -> Result<bool> {
    let only = selected();
    let want = |c: u32| only.as_ref().map_or(true, |s| s.contains(&c));
    let tol = Tolerances::default();
    let mut all_ok = true;
    let mut emit = |o: Outcome| all_ok &= print(&o);
    let timed = |criterion: u32, title: &'static str, f: &mut dyn FnMut() -> Result<Vec<Check>>| -> Result<Outcome> {
        let t = Instant::now();
        let checks = f()?;
        Ok(Outcome { criterion, title, checks, seconds: t.elapsed().as_secs_f64() })
    };

    if want(1) {
        emit(timed(1, "degenerate drift on the sphere with target ∞", &mut || Ok(vec![degenerate_drift_check(SEED)?]))?);
    }
    if want(2) {
        emit(timed(2, "Loewner codec roundtrip", &mut || Ok(vec![roundtrip_check()?]))?);
    }
    if want(3) {
        emit(timed(3, "capacity calculus", &mut || capacity_checks(SEED))?);
    }
    if want(4) {
        emit(timed(4, "harmonic solver against the disk Green's function", &mut || green_checks())?);
    }

    let needs_disk = [5, 6, 7, 8, 9, 12].iter().any(|&c| want(c));
    let setup = if needs_disk {
        let t = Instant::now();
        let s = Setup::new(default_domain(), &[C64::new(-0.5, 0.0)], 2.0)?;
        println!("(disk drift context and truncation fit: C = {:.3}, t_start = {:.3}, {:.1} s)", s.fit.c, s.fit.t_start, t.elapsed().as_secs_f64());
        Some(s)
    } else {
        None
    };

    if want(5) {
        let s = setup.as_ref().unwrap();
        emit(timed(5, "early-time drift asymptotics", &mut || drift_asymptotics_checks(&s.ctx))?);
    }
    if want(6) {
        let s = setup.as_ref().unwrap();
        emit(timed(6, "Picard contraction", &mut || picard_checks(s, 2.0, sample_seed(SEED, 6)))?);
    }
    if want(7) {
        let s = setup.as_ref().unwrap();
        emit(timed(7, "discrete drift moments at δ = 1/64, d = 0.2", &mut || {
            let ds = [0.2, 0.1];
            let samples = drift_increment_ensemble(&s.ctx, &s.domain, 1.0 / 64.0, N, sample_seed(SEED, 7), DRIFT_MOMENTS_B, &ds, EDGE_SUBDIVISION)?;
            let mut r = Report::new("drift_moments", String::new(), SEED);
            Ok(drift_moment_checks(&samples, &ds, 2.0, 2.0, &tol, true, SEED, &mut r))
        })?);
    }

    let cps = checkpoints(CHECKPOINT_B);
    let spec = |lambda: f64, salt: u64| EnsembleSpec {
        kappa: 2.0,
        lambda,
        alpha: 1.0,
        dt: DT,
        n: N,
        seed: sample_seed(SEED, salt),
        checkpoints: cps.clone(),
        guard: Guard::None,
    };
    let (mut lerw_runs, mut sle_runs) = (None, None);
    if want(8) || want(9) || want(12) {
        let s = setup.as_ref().unwrap();
        let t = Instant::now();
        lerw_runs = Some(continuous_ensemble(s, &spec(2.0, 80), None)?);
        println!("(continuous LERW ensemble, N = {N}: {:.1} s)", t.elapsed().as_secs_f64());
    }
    if want(8) || want(9) {
        let s = setup.as_ref().unwrap();
        let t = Instant::now();
        sle_runs = Some(continuous_ensemble(s, &spec(0.0, 90), None)?);
        println!("(whole-plane SLE₂ ensemble, N = {N}: {:.1} s)", t.elapsed().as_secs_f64());
    }
    if want(8) {
        let (l, s) = (lerw_runs.as_ref().unwrap(), sle_runs.as_ref().unwrap());
        emit(timed(8, "Poisson-kernel local martingale", &mut || {
            let mut c = poisson_checks(l, &cps, DT, &tol, "8")?;
            c.push(poisson_control(s, &cps, DT, &tol, "8")?);
            Ok(c)
        })?);
    }
    if want(9) {
        let (l, s) = (lerw_runs.as_ref().unwrap(), sle_runs.as_ref().unwrap());
        emit(timed(9, "partition-function martingale", &mut || {
            let mut c = partition_checks(s, &tol, "9");
            c.push(sphere_partition_check(SEED)?);
            c.push(partition_control(l, &tol, "9"));
            Ok(c)
        })?);
    }
    if want(10) {
        emit(timed(10, "discrete exactness on the 3×3 block", &mut || discrete_exactness_checks(100_000, sample_seed(SEED, 10), &tol))?);
    }
    if want(11) {
        emit(timed(11, "reversibility at δ = 1/32", &mut || {
            let grid = build_grid(&default_domain(), 1.0 / 32.0)?;
            let (fwd, bwd) = reversal_ensembles(&grid, 5000, sample_seed(SEED, 11))?;
            let rev: Vec<_> = fwd.iter().map(|p| p.reversed()).collect();
            let (fa, fb, ff) = (functionals_of(&grid, &rev)?, functionals_of(&grid, &bwd)?, functionals_of(&grid, &fwd)?);
            let mut c = functional_tests(&fa, &fb, &tol, "11", "reversed forward vs backward");
            c.push(exact_reversal_check()?);
            let p_min = functional_tests(&ff, &fb, &tol, "11", "unreversed").iter().filter_map(|c| c.p_value).fold(1.0, f64::min);
            c.push(Check::p_above("unreversed forward vs backward (control)", "11", p_min, p_min, tol.p_min).as_control());
            Ok(c)
        })?);
    }
    if want(12) {
        let s = setup.as_ref().unwrap();
        let l = lerw_runs.as_ref().unwrap();
        emit(timed(12, "driving-law convergence across δ ∈ {1/16, 1/32, 1/64}", &mut || {
            let refused = build_grid(&DomainSpec::sphere(TargetSpec::Infinity), 1.0 / 16.0).is_err();
            let mut c = vec![Check::flag("sphere domain refused", "12", refused, "")];
            let cont = checkpoint_values(l, &cps, DT, |o| o.xi)?;
            let mut disc = Vec::new();
            for (k, inv) in [16.0, 32.0, 64.0].into_iter().enumerate() {
                let seed = sample_seed(SEED, 120 + k as u64);
                disc.push((1.0 / inv, discrete_checkpoint_ensemble(&s.domain, 1.0 / inv, N, seed, &cps, s.ctx.config.guard_radius)?));
            }
            let mut r = Report::new("convergence_driving", String::new(), SEED);
            c.extend(convergence_checks(&cont, &disc, &cps, &tol, SEED, &mut r));
            for (k, v) in &r.statistics {
                println!("    {k} = {v:.4}");
            }
            Ok(c)
        })?);
    }
    Ok(all_ok)
}

fn main() {
    let t = Instant::now();
    let ok = match run() {
        Ok(ok) => ok,
        Err(e) => {
            println!("acceptance run aborted: {e}");
            std::process::exit(2);
        }
    };
    println!("acceptance: {} in {:.1} s", if ok { "all criteria passed" } else { "some criteria FAILED" }, t.elapsed().as_secs_f64());
    if !ok && std::env::var("LERW_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
