//! Test statistics: means with standard errors, two-sample KS and Kuiper, chi-square tests.

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Pooled mean over groups of observations with a standard error that allows correlation within
/// a group (ratio estimator over independent groups).
pub fn cluster_mean_se(groups: &[Vec<f64>]) -> (f64, f64) {
    let total: usize = groups.iter().map(|g| g.len()).sum();
    if total == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = groups.iter().flatten().sum::<f64>() / total as f64;
    let g = groups.len() as f64;
    let s: f64 = groups.iter().map(|gr| (gr.iter().sum::<f64>() - m * gr.len() as f64).powi(2)).sum();
    let se = if g > 1.0 { (g / (g - 1.0) * s).sqrt() / total as f64 } else { f64::INFINITY };
    (m, se)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Largest positive and negative gaps `F_a - F_b` of the empirical distribution functions.
fn ecdf_gaps(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let (mut up, mut down) = (0.0f64, 0.0f64);
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            _ => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        let d = i as f64 / na - j as f64 / nb;
        up = up.max(d);
        down = down.max(-d);
    }
    (up, down)
}

fn effective_n(na: usize, nb: usize) -> f64 {
    (na as f64 * nb as f64) / (na + nb) as f64
}

/// Kolmogorov tail `Q(λ) = 2Σ(-1)^{j-1} e^{-2j²λ²}`.
fn q_ks(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = 2.0 * if j % 2 == 1 { 1.0 } else { -1.0 } * (-2.0 * jf * jf * lambda * lambda).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// Kuiper tail `Q(λ) = 2Σ(4j²λ² - 1) e^{-2j²λ²}`.
fn q_kuiper(lambda: f64) -> f64 {
    if lambda < 0.4 {
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = 2.0 * (4.0 * jf * jf * lambda * lambda - 1.0) * (-2.0 * jf * jf * lambda * lambda).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (up, down) = ecdf_gaps(a, b);
    let d = up.max(down);
    let ne = effective_n(a.len(), b.len()).sqrt();
    (d, q_ks((ne + 0.12 + 0.11 / ne) * d))
}

/// Two-sample Kuiper statistic `V = D⁺ + D⁻` on angles (reduced mod 2π) and its p-value.
pub fn kuiper_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let wrap = |x: &f64| x.rem_euclid(std::f64::consts::TAU);
    let a: Vec<f64> = a.iter().map(wrap).collect();
    let b: Vec<f64> = b.iter().map(wrap).collect();
    let (up, down) = ecdf_gaps(&a, &b);
    let v = up + down;
    let ne = effective_n(a.len(), b.len()).sqrt();
    (v, q_kuiper((ne + 0.155 + 0.24 / ne) * v))
}

/// Bootstrap standard error of a two-sample statistic.
pub fn bootstrap_se<R: Rng>(a: &[f64], b: &[f64], reps: usize, rng: &mut R, stat: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    let mut vals = Vec::with_capacity(reps);
    let mut ra = vec![0.0; a.len()];
    let mut rb = vec![0.0; b.len()];
    for _ in 0..reps {
        for x in ra.iter_mut() {
            *x = a[rng.gen_range(0..a.len())];
        }
        for x in rb.iter_mut() {
            *x = b[rng.gen_range(0..b.len())];
        }
        vals.push(stat(&ra, &rb));
    }
    let (m, _) = mean_se(&vals);
    (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt()
}

/// Result of a chi-square test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

fn chi2_p(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    1.0 - ChiSquared::new(df as f64).expect("positive degrees of freedom").cdf(stat)
}

/// Chi-square test of homogeneity for count rows over common categories. Categories with zero
/// total are dropped.
pub fn chi2_homogeneity(rows: &[Vec<u64>]) -> ChiSquare {
    let k = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let col: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| *r.get(j).unwrap_or(&0) as f64).sum()).collect();
    let keep: Vec<usize> = (0..k).filter(|&j| col[j] > 0.0).collect();
    let total: f64 = col.iter().sum();
    let mut stat = 0.0;
    for r in rows {
        let rt: f64 = r.iter().map(|&c| c as f64).sum();
        for &j in &keep {
            let e = rt * col[j] / total;
            if e > 0.0 {
                stat += (*r.get(j).unwrap_or(&0) as f64 - e).powi(2) / e;
            }
        }
    }
    let df = (rows.len().saturating_sub(1)) * keep.len().saturating_sub(1);
    ChiSquare { statistic: stat, df, p_value: chi2_p(stat, df) }
}

/// Chi-square goodness of fit against category probabilities; categories are merged in order
/// until each expected count reaches `min_expected`.
pub fn chi2_goodness_of_fit(counts: &[u64], probs: &[f64], min_expected: f64) -> ChiSquare {
    let n: f64 = counts.iter().map(|&c| c as f64).sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        o += c as f64;
        e += p * n;
        if e >= min_expected {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(l) => {
                l.0 += o;
                l.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    let stat: f64 = cells.iter().filter(|c| c.1 > 0.0).map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = cells.len().saturating_sub(1);
    ChiSquare { statistic: stat, df, p_value: chi2_p(stat, df) }
}

/// Bin edges at pooled sample quantiles, for turning scalar samples into categories.
pub fn quantile_edges(pooled: &[f64], bins: usize) -> Vec<f64> {
    let s = sorted(pooled);
    let mut edges: Vec<f64> = (1..bins).map(|k| s[(k * s.len() / bins).min(s.len() - 1)]).collect();
    edges.dedup();
    edges
}

pub fn bin_counts(xs: &[f64], edges: &[f64]) -> Vec<u64> {
    let mut c = vec![0u64; edges.len() + 1];
    for &x in xs {
        c[edges.partition_point(|&e| e <= x)] += 1;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_and_se() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        let (cm, _) = cluster_mean_se(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(cm, 2.5);
    }

    #[test]
    fn ks_detects_shift_and_accepts_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..2000).map(|_| rng.gen::<f64>()).collect();
        let b: Vec<f64> = (0..2000).map(|_| rng.gen::<f64>()).collect();
        let c: Vec<f64> = (0..2000).map(|_| rng.gen::<f64>() + 0.1).collect();
        assert!(ks_two_sample(&a, &b).1 > 0.01);
        assert!(ks_two_sample(&a, &c).1 < 1e-6);
        // exact statistic on a tiny case
        assert!((ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]).0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kuiper_is_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<f64> = (0..500).map(|_| rng.gen::<f64>() * 2.0).collect();
        let b: Vec<f64> = (0..700).map(|_| rng.gen::<f64>() * 3.0).collect();
        let (v0, _) = kuiper_two_sample(&a, &b);
        let rot = |x: &Vec<f64>| x.iter().map(|v| v + 2.5).collect::<Vec<_>>();
        let (v1, _) = kuiper_two_sample(&rot(&a), &rot(&b));
        assert!((v0 - v1).abs() < 1e-12);
    }

    #[test]
    fn kuiper_null_p_values_are_roughly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut small = 0;
        let reps = 400;
        for _ in 0..reps {
            let a: Vec<f64> = (0..300).map(|_| rng.gen::<f64>() * 6.0).collect();
            let b: Vec<f64> = (0..300).map(|_| rng.gen::<f64>() * 6.0).collect();
            if kuiper_two_sample(&a, &b).1 < 0.1 {
                small += 1;
            }
        }
        let frac = small as f64 / reps as f64;
        assert!((frac - 0.1).abs() < 0.05, "{frac}");
    }

    #[test]
    fn chi_square_tables() {
        let t = chi2_homogeneity(&[vec![10, 20, 30], vec![10, 20, 30]]);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.df, 2);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        let g = chi2_goodness_of_fit(&[50, 50], &[0.5, 0.5], 5.0);
        assert_eq!(g.statistic, 0.0);
        let g = chi2_goodness_of_fit(&[90, 10], &[0.5, 0.5], 5.0);
        assert!(g.p_value < 1e-10);
    }
}
