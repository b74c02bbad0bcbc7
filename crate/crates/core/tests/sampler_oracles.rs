mod common;

use std::collections::HashMap;

use common::*;
use dagsbm_core::graph::{topological_order, Dag};
use dagsbm_core::likelihood::{
    log_eppf, log_lik_collapsed, GammaHyper, GammaPrior, PriorConfig, PyParams, Regime, TruncatedNegBin,
};
use dagsbm_core::posterior::{compact_labels, ordering_density};
use dagsbm_core::sampler::{
    gamma_hyper_log_ratio, leap_shift_propose, py_log_ratio, run_chain, split_merge_move, ChainState, Mode, RateHyper,
    TuningConfig,
};
use dagsbm_core::selection::PseudoPriors;
use dagsbm_core::state::{AllocationState, DegreeCorrections, OrderingState, SbmState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn state(dag: &Dag, z: &[usize], hyper: GammaHyper, py: PyParams) -> ChainState {
    let n = dag.n();
    let sbm = SbmState::new(dag, topological_order(dag), AllocationState::from_labels(z), DegreeCorrections::ones(n))
        .unwrap();
    let mut st = ChainState { sbm, a: hyper.a, b: hyper.b, regime: py.regime(), alpha: 0.5, theta: 1.0, gamma: 1.0, k: 2 };
    st.set_py(py);
    st
}

#[test]
fn split_merge_alone_targets_posterior_at_n8() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 8;
    let mut edges = Vec::new();
    for p in 0..n {
        for q in p + 1..n {
            let same = (p < 4) == (q < 4);
            if rng.random::<f64>() < if same { 0.6 } else { 0.1 } {
                edges.push((p, q));
            }
        }
    }
    let dag = Dag::new(n, edges).unwrap();
    let hyper = GammaHyper { a: 1.0, b: 1.0 };
    let py = PyParams::Infinite { alpha: 0.3, theta: 1.0 };
    let ordering = topological_order(&dag);
    let xi = DegreeCorrections::ones(n);

    let parts = set_partitions(n);
    assert_eq!(parts.len(), 4140);
    let logs: Vec<f64> = parts
        .iter()
        .map(|z| {
            let a = AllocationState::from_labels(z);
            log_lik_collapsed(&dag, &ordering, &a, &xi, hyper) + log_eppf(a.sizes(), &py).unwrap()
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    let mut by_k = vec![0.0; n + 1];
    let mut by_part: HashMap<Vec<usize>, f64> = HashMap::new();
    for (z, l) in parts.iter().zip(&logs) {
        let p = (l - max).exp() / total;
        by_k[z.iter().max().unwrap() + 1] += p;
        by_part.insert(z.clone(), p);
    }
    let mut top: Vec<(&Vec<usize>, f64)> = by_part.iter().map(|(z, p)| (z, *p)).collect();
    top.sort_by(|a, b| b.1.total_cmp(&a.1));
    top.truncate(5);

    let mut st = state(&dag, &[0; 8], hyper, py);
    let tuning = TuningConfig::default();
    let steps = 300_000;
    let mut ks = Vec::with_capacity(steps);
    let mut zs = Vec::with_capacity(steps);
    for _ in 0..steps {
        split_merge_move(&dag, &mut st, &tuning, &mut rng);
        ks.push(st.num_groups());
        zs.push(compact_labels(st.sbm.alloc().labels()));
    }
    for k in 1..=n {
        let series: Vec<f64> = ks.iter().map(|&x| if x == k { 1.0 } else { 0.0 }).collect();
        let (mean, se) = batch_mean_se(&series, 50);
        assert!((mean - by_k[k]).abs() <= 3.0 * se + 1e-4, "K = {k}: {mean} vs {}", by_k[k]);
    }
    for (z, p) in top {
        let series: Vec<f64> = zs.iter().map(|x| if x == z { 1.0 } else { 0.0 }).collect();
        let (mean, se) = batch_mean_se(&series, 50);
        assert!((mean - p).abs() <= 3.0 * se + 1e-4, "{z:?}: {mean} vs {p}");
    }
}

#[test]
fn proposal_kernel_frequencies_match_enumeration() {
    let s = OrderingState::from_sigma(vec![3, 0, 4, 1, 2]).unwrap();
    let leap = 2;
    let mut exact: HashMap<Vec<usize>, f64> = HashMap::new();
    for p in 0..5 {
        for m in [-2i64, -1, 1, 2] {
            *exact.entry(leap_shift_propose(&s, p, m, leap).unwrap().sigma().to_vec()).or_default() += 1.0 / 20.0;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws = 200_000;
    let mut seen: HashMap<Vec<usize>, f64> = HashMap::new();
    for _ in 0..draws {
        let p = rng.random_range(0..5);
        let mut m = rng.random_range(1..=2i64);
        if rng.random::<bool>() {
            m = -m;
        }
        *seen.entry(leap_shift_propose(&s, p, m, leap).unwrap().sigma().to_vec()).or_default() += 1.0;
    }
    assert_eq!(seen.len(), exact.len());
    for (sigma, q) in exact {
        let f = seen[&sigma] / draws as f64;
        let se = (q * (1.0 - q) / draws as f64).sqrt();
        assert!((f - q).abs() < 3.0 * se, "{sigma:?}: {f} vs {q}");
    }
}

#[test]
fn two_node_empty_graph_sweep_returns_to_start() {
    // L < n forces L = 1, so each per-node step is an always-accepted swap
    // and the two steps of a sweep cancel.
    let dag = Dag::new(2, []).unwrap();
    let tuning = TuningConfig { iterations: 2_000, prior_only: true, seed: 2, record_xi: false, ..TuningConfig::default() };
    let trace = run_chain(&dag, &PriorConfig::default(), &tuning, Mode::Infinite, None).unwrap();
    let sigmas: Vec<Vec<usize>> = trace.iter().map(|r| r.sigma.clone()).collect();
    let d = ordering_density(&sigmas).unwrap();
    assert_eq!(d.density, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
}

#[test]
fn two_node_empty_graph_random_scan_density_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut s = OrderingState::from_sigma(vec![0, 1]).unwrap();
    let draws = 20_000;
    let mut sigmas = Vec::with_capacity(draws);
    for _ in 0..draws {
        let p = rng.random_range(0..2);
        let m = if rng.random::<bool>() { 1 } else { -1 };
        s = leap_shift_propose(&s, p, m, 1).unwrap();
        if rng.random::<bool>() {
            // lazy step keeps the chain aperiodic
            s = leap_shift_propose(&s, p, -m, 1).unwrap();
        }
        sigmas.push(s.sigma().to_vec());
    }
    let d = ordering_density(&sigmas).unwrap();
    let series: Vec<f64> = sigmas.iter().map(|x| if x[0] == 0 { 1.0 } else { 0.0 }).collect();
    let (_, se) = batch_mean_se(&series, 50);
    for row in &d.density {
        for &v in row {
            assert!((v - 0.5).abs() < 3.0 * se, "{:?}", d.density);
        }
    }
}

#[test]
fn regime_selection_joint_law_at_n3() {
    let n = 3;
    let priors = PriorConfig {
        theta_plus_alpha: GammaPrior::new(2.0, 1.0),
        gamma: GammaPrior::new(2.0, 2.0),
        k: TruncatedNegBin { a_k: 2.0, b_k: 0.5 },
        prob_finite: 0.3,
        ..PriorConfig::default()
    };
    let pseudo = PseudoPriors::from_priors(&priors);
    let dag = Dag::new(n, []).unwrap();
    let tuning = TuningConfig {
        iterations: 150_000,
        burn_in: 1000,
        prior_only: true,
        s_alpha: 0.25,
        s_theta: 1.0,
        s_gamma: 0.7,
        seed: 33,
        record_xi: false,
        ..TuningConfig::default()
    };
    let trace = run_chain(&dag, &priors, &tuning, Mode::Select, Some(&pseudo)).unwrap();
    for regime in [Regime::Infinite, Regime::Finite] {
        let weight = if regime == Regime::Finite { priors.prob_finite } else { 1.0 - priors.prob_finite };
        for z in set_partitions(n) {
            let target = weight * integrated_eppf(&sizes_of(&z), regime, &priors);
            let series: Vec<f64> = trace
                .iter()
                .map(|r| if r.regime == regime && compact_labels(&r.z) == z { 1.0 } else { 0.0 })
                .collect();
            let (mean, se) = batch_mean_se(&series, 50);
            assert!((mean - target).abs() < 3.0 * se, "{regime:?} {z:?}: {mean} vs {target} (se {se})");
        }
    }
    let finite = trace.iter().filter(|r| r.regime == Regime::Finite).count() as f64 / trace.len() as f64;
    assert!((finite - 0.3).abs() < 0.05);
}

#[test]
fn hyper_ratio_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let dag = random_dag(5, 0.6, true, &mut rng);
    let priors = PriorConfig { a: GammaPrior::new(2.0, 1.5), b: GammaPrior::new(3.0, 0.5), ..PriorConfig::default() };
    let hyper = GammaHyper { a: 1.4, b: 0.8 };
    let st = state(&dag, &[0, 1, 0, 1, 2], hyper, PyParams::Infinite { alpha: 0.2, theta: 1.0 });
    let eval = |h: GammaHyper| {
        log_lik_collapsed(&dag, st.sbm.ordering(), st.sbm.alloc(), st.sbm.xi(), h)
            + priors.a.ln_pdf(h.a)
            + priors.b.ln_pdf(h.b)
    };
    let r_a = gamma_hyper_log_ratio(&st, RateHyper::A, 2.1, &priors, false);
    assert!((r_a - (eval(GammaHyper { a: 2.1, ..hyper }) - eval(hyper))).abs() < 1e-10);
    let r_b = gamma_hyper_log_ratio(&st, RateHyper::B, 0.3, &priors, false);
    assert!((r_b - (eval(GammaHyper { b: 0.3, ..hyper }) - eval(hyper))).abs() < 1e-10);
}

#[test]
fn gamma_ratio_includes_log_normal_jacobian() {
    let priors = PriorConfig::default();
    let sizes = [3usize, 1, 2];
    let cur = PyParams::Finite { gamma: 0.8, k: 4 };
    let prop = PyParams::Finite { gamma: 1.7, k: 4 };
    let direct = |py: &PyParams, g: f64| log_eppf(&sizes, py).unwrap() + priors.ln_py_prior(py) + g.ln();
    let expected = direct(&prop, 1.7) - direct(&cur, 0.8);
    assert!((py_log_ratio(&sizes, &cur, &prop, &priors) - expected).abs() < 1e-12);
    let too_small = PyParams::Finite { gamma: 0.8, k: 2 };
    assert_eq!(py_log_ratio(&sizes, &cur, &too_small, &priors), f64::NEG_INFINITY);
    let same = PyParams::Infinite { alpha: 0.3, theta: 2.0 };
    assert_eq!(py_log_ratio(&sizes, &same, &same, &priors), 0.0);
}

#[test]
fn recorded_states_stay_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let dag = random_dag(12, 0.3, false, &mut rng);
    let tuning = TuningConfig { iterations: 400, seed: 4, ..TuningConfig::default() };
    for mode in [Mode::Infinite, Mode::Finite] {
        for r in run_chain(&dag, &PriorConfig::default(), &tuning, mode, None).unwrap() {
            let o = OrderingState::from_sigma(r.sigma.clone()).unwrap();
            assert!(dagsbm_core::graph::check_topological(&dag, &o).unwrap());
            if let Some(k) = r.k {
                assert!(r.num_groups <= k as usize);
            }
            let alloc = AllocationState::from_labels(&r.z);
            let xi = DegreeCorrections::new(r.xi.clone().unwrap()).unwrap();
            let ll = log_lik_collapsed(&dag, &o, &alloc, &xi, GammaHyper { a: r.a, b: r.b });
            assert!((ll - r.log_lik).abs() < 1e-6 * (1.0 + ll.abs()));
        }
    }
}

fn relabel(z: &[usize], perm: &[usize]) -> Vec<usize> {
    z.iter().map(|&l| perm[l]).collect()
}

proptest! {
    #[test]
    fn collapsed_likelihood_ignores_label_names(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..7);
        let dag = random_dag(n, 0.5, true, &mut rng);
        let z: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let xi = DegreeCorrections::new((0..n).map(|_| rng.random_range(0.3..2.0)).collect()).unwrap();
        let hyper = GammaHyper { a: 1.3, b: 0.6 };
        let o = topological_order(&dag);
        let base = log_lik_collapsed(&dag, &o, &AllocationState::from_labels(&z), &xi, hyper);
        let other = log_lik_collapsed(&dag, &o, &AllocationState::from_labels(&relabel(&z, &[2, 0, 1])), &xi, hyper);
        prop_assert!((base - other).abs() < 1e-10);
    }
}
