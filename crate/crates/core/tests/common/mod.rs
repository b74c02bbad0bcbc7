#![allow(dead_code)]

use dagsbm_core::graph::Dag;
use dagsbm_core::likelihood::{log_eppf, PriorConfig, PyParams, Regime};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

/// Every set partition of `0..n` as a restricted growth string.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(z: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if z.len() == n {
            out.push(z.clone());
            return;
        }
        let limit = if z.is_empty() { 0 } else { max + 1 };
        for l in 0..=limit {
            z.push(l);
            rec(z, max.max(l), n, out);
            z.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(Vec::new());
    } else {
        rec(&mut Vec::with_capacity(n), 0, n, &mut out);
    }
    out
}

/// Group sizes of a label vector with labels `0..K`.
pub fn sizes_of(z: &[usize]) -> Vec<usize> {
    let k = z.iter().max().map_or(0, |m| m + 1);
    let mut s = vec![0; k];
    for &l in z {
        s[l] += 1;
    }
    s
}

/// Block-size multiset, sorted descending.
pub fn shape_of(z: &[usize]) -> Vec<usize> {
    let mut s = sizes_of(z);
    s.sort_unstable_by(|a, b| b.cmp(a));
    s
}

/// Random DAG on `n` nodes whose edges all point from lower to higher
/// index, with Poisson counts when `counts` is set.
pub fn random_dag(n: usize, density: f64, counts: bool, rng: &mut impl Rng) -> Dag {
    let mut edges = Vec::new();
    for p in 0..n {
        for q in p + 1..n {
            if rng.random::<f64>() < density {
                let c = if counts { 1 + Poisson::new(0.8).unwrap().sample(rng) as u32 } else { 1 };
                edges.push((p, q, c));
            }
        }
    }
    Dag::with_counts(n, edges).unwrap()
}

/// Mean and batch-means standard error of a correlated series.
pub fn batch_mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let size = n / batches;
    let mean = xs.iter().sum::<f64>() / n as f64;
    let means: Vec<f64> = (0..batches)
        .map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

/// Mean and standard error of independent draws.
pub fn iid_mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// All permutations of `0..n`.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Midpoint rule for `f` over `(lo, hi)` with `m` cells.
pub fn midpoint(f: impl Fn(f64) -> f64, lo: f64, hi: f64, m: usize) -> f64 {
    let h = (hi - lo) / m as f64;
    (0..m).map(|i| f(lo + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Partition probability with the Pitman-Yor parameters integrated over
/// their prior, by quadrature.
pub fn integrated_eppf(sizes: &[usize], regime: Regime, priors: &PriorConfig) -> f64 {
    match regime {
        Regime::Infinite => {
            let tpa = priors.theta_plus_alpha;
            midpoint(
                |alpha| {
                    midpoint(
                        |u| {
                            let s = u.exp();
                            let py = PyParams::Infinite { alpha, theta: s - alpha };
                            (log_eppf(sizes, &py).unwrap() + tpa.ln_pdf(s) + u).exp()
                        },
                        -30.0,
                        5.0,
                        3000,
                    )
                },
                0.0,
                1.0,
                3000,
            )
        }
        Regime::Finite => {
            let g = priors.gamma;
            (1..400u32)
                .map(|k| {
                    let w = priors.k.ln_pmf(k).exp();
                    if w < 1e-300 || (k as usize) < sizes.len() {
                        return 0.0;
                    }
                    w * midpoint(
                        |u| {
                            let gamma = u.exp();
                            let py = PyParams::Finite { gamma, k };
                            (log_eppf(sizes, &py).unwrap() + g.ln_pdf(gamma) + u).exp()
                        },
                        -30.0,
                        5.0,
                        20_000,
                    )
                })
                .sum()
        }
    }
}
