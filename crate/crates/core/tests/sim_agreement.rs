//! Cross-checks between the two simulation engines, the analytic sequences,
//! and a naive reference implementation of the removal rule.

use ctrace_core::rng::Stream;
use ctrace_core::sim_cluster::{self, RunOptions};
use ctrace_core::sim_direct;
use ctrace_core::stats;
use ctrace_core::{analytics, montecarlo, CtpParams, OffspringDistribution};
use std::collections::{BTreeMap, BTreeSet};

fn poisson(b: u32, p: f64, alpha: f64) -> CtpParams {
    CtpParams::new(b, p, alpha, OffspringDistribution::poisson(2.5).unwrap()).unwrap()
}

// ---------------------------------------------------------------------------
// Naive reference: realize the whole family tree up front, compute traceable
// components by union-find, and replay the alive set generation by
// generation with removals found by brute-force component lookup. Shares the
// per-position randomness with the production simulator, so alive sets must
// match exactly.
// ---------------------------------------------------------------------------

struct RefTree {
    hash: Vec<u64>,
    gen: Vec<u32>,
    children: Vec<Vec<usize>>,
    component: Vec<usize>,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn build_ref_tree(params: &CtpParams, trial_seed: u64, horizon: u32) -> RefTree {
    let root = sim_direct::root_hash(trial_seed);
    let mut hash = vec![root];
    let mut gen = vec![0u32];
    let mut children: Vec<Vec<usize>> = vec![Vec::new()];
    let mut traceable_edge = vec![false];
    let mut frontier = vec![0usize];
    for g in 1..=horizon {
        let mut next = Vec::new();
        for &idx in &frontier {
            let total = sim_direct::offspring_count(params, hash[idx]);
            for i in 0..total {
                let h = sim_direct::child_hash(hash[idx], i);
                let child_idx = hash.len();
                hash.push(h);
                gen.push(g);
                children.push(Vec::new());
                traceable_edge.push(sim_direct::traceable_mark(params.alpha, h));
                children[idx].push(child_idx);
                next.push(child_idx);
            }
        }
        frontier = next;
    }
    // static percolation components over traceable edges
    let mut parent: Vec<usize> = (0..hash.len()).collect();
    for (idx, kids) in children.iter().enumerate() {
        for &c in kids {
            if traceable_edge[c] {
                let (a, b) = (find(&mut parent, idx), find(&mut parent, c));
                parent[a] = b;
            }
        }
    }
    let component: Vec<usize> = (0..hash.len())
        .map(|i| find(&mut parent.clone(), i))
        .collect();
    RefTree {
        hash,
        gen,
        children,
        component,
    }
}

/// Replay the traced process on the prebuilt tree, removing detected
/// components by exhaustive search.
fn ref_alive_sets(params: &CtpParams, tree: &RefTree, horizon: u32) -> Vec<BTreeSet<u64>> {
    let mut alive: BTreeSet<usize> = BTreeSet::new();
    if !(params.b == 0 && sim_direct::detection_mark(params.p, tree.hash[0])) {
        alive.insert(0);
    }
    let mut snapshots = vec![alive.iter().map(|&i| tree.hash[i]).collect::<BTreeSet<u64>>()];
    for n in 1..=horizon {
        // spawn: children of alive members of generation n-1
        let parents: Vec<usize> = alive
            .iter()
            .copied()
            .filter(|&i| tree.gen[i] == n - 1)
            .collect();
        for p in parents {
            for &c in &tree.children[p] {
                alive.insert(c);
            }
        }
        // detect: alive members of generation n - b
        if let Some(test_gen) = n.checked_sub(params.b) {
            let detected: Vec<usize> = alive
                .iter()
                .copied()
                .filter(|&i| tree.gen[i] == test_gen)
                .filter(|&i| sim_direct::detection_mark(params.p, tree.hash[i]))
                .collect();
            let doomed: BTreeSet<usize> =
                detected.iter().map(|&i| tree.component[i]).collect();
            alive.retain(|&i| !doomed.contains(&tree.component[i]));
        }
        snapshots.push(alive.iter().map(|&i| tree.hash[i]).collect());
    }
    snapshots
}

#[test]
fn removal_matches_naive_component_search() {
    // small trees, every (b, p, alpha) corner that exercises the removal rule
    let dist = OffspringDistribution::finite_pmf(vec![0.3, 0.4, 0.3]).unwrap();
    let mut compared = 0u64;
    for &b in &[0u32, 1, 2] {
        for &p in &[0.3, 0.7, 1.0] {
            for &alpha in &[0.2, 0.6, 1.0] {
                let params = CtpParams::new(b, p, alpha, dist.clone()).unwrap();
                for trial in 0..40u64 {
                    let seed = trial * 7919 + u64::from(b) * 131 + (p * 10.0) as u64;
                    let tree = build_ref_tree(&params, seed, 5);
                    if tree.hash.len() > 600 {
                        continue;
                    }
                    let expected = ref_alive_sets(&params, &tree, 5);
                    let mut st = sim_direct::init(&params, seed, 1_000_000);
                    let got0: BTreeSet<u64> = st.alive_ids().into_iter().collect();
                    assert_eq!(got0, expected[0], "init b={b} p={p} alpha={alpha}");
                    for (n, want) in expected.iter().enumerate().skip(1) {
                        sim_direct::step(&mut st, &params).unwrap();
                        let got: BTreeSet<u64> = st.alive_ids().into_iter().collect();
                        assert_eq!(
                            &got, want,
                            "b={b} p={p} alpha={alpha} trial={trial} n={n}"
                        );
                        compared += 1;
                    }
                }
            }
        }
    }
    assert!(compared > 500, "too few comparisons ran: {compared}");
}

// ---------------------------------------------------------------------------
// Engine agreement
// ---------------------------------------------------------------------------

#[test]
fn recorded_and_aggregated_cluster_engines_share_one_law() {
    // chi-square on Z^CT_3, 10^4 trials per engine, at a supercritical
    // within-cluster rate so the truncation paths all fire
    let params = poisson(1, 0.4, 0.6);
    let trials = 10_000u64;
    let mut rng = Stream::new(0xAB);
    let mut recorded = BTreeMap::new();
    for _ in 0..trials {
        let (t, _) = sim_cluster::run_recorded(&params, 3, &mut rng, 1_000_000).unwrap();
        *recorded.entry(t.zct(3)).or_insert(0u64) += 1;
    }
    let mut aggregated = BTreeMap::new();
    for seed in 0..trials {
        let t = sim_cluster::run(&params, 3, seed, RunOptions::default()).unwrap();
        *aggregated.entry(t.zct(3)).or_insert(0u64) += 1;
    }
    let (stat, dof, p_value) = stats::chi_square_two_sample(&recorded, &aggregated, 5.0);
    assert!(
        p_value > 0.001,
        "chi2 {stat:.2} dof {dof} p {p_value:.5}"
    );
}

#[test]
fn simulated_seed_mean_pins_the_analytic_value() {
    // zero-delay point away from the boundary cases
    let params = poisson(0, 0.4, 0.6);
    let y = analytics::seed_mean(&params, 1e-10).unwrap();
    let mut rng = Stream::new(0xD0C);
    let n = 1_000_000u64;
    let (mut sum, mut sumsq) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let (total, _) = sim_cluster::sample_seed_offspring(&params, &mut rng, 100_000).unwrap();
        sum += total as f64;
        sumsq += (total * total) as f64;
    }
    let mean = sum / n as f64;
    let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - y).abs() <= 3.0 * se, "sim {mean} vs analytic {y} (se {se})");
}

#[test]
fn engines_agree_at_generation_three_with_long_delay() {
    // completes the delay range beyond the configurations the acceptance
    // battery sweeps
    let trials = 10_000u64;
    for &p in &[0.4, 1.0] {
        for &alpha in &[0.3, 0.7] {
            let params = poisson(2, p, alpha);
            let mut direct = BTreeMap::new();
            for i in 0..trials {
                let t = sim_direct::run(&params, 3, i.wrapping_mul(0xA5A5), 1_000_000).unwrap();
                *direct.entry(t.zct(3)).or_insert(0u64) += 1;
            }
            let mut cluster = BTreeMap::new();
            for i in 0..trials {
                let t = sim_cluster::run(&params, 3, i, RunOptions::default()).unwrap();
                *cluster.entry(t.zct(3)).or_insert(0u64) += 1;
            }
            let (stat, dof, p_value) = stats::chi_square_two_sample(&direct, &cluster, 5.0);
            assert!(
                p_value > 0.001,
                "p={p} alpha={alpha}: chi2 {stat:.2} dof {dof} p {p_value:.5}"
            );
        }
    }
}

#[test]
fn no_tracing_law_equals_plain_process_at_generation_three() {
    // alpha = 0, b >= 1: the traced law is the untreated one
    let params = poisson(1, 0.4, 0.0);
    let trials = 10_000u64;
    let mut direct = BTreeMap::new();
    for i in 0..trials {
        let t = sim_direct::run(&params, 3, i.wrapping_mul(0x9E37), 1_000_000).unwrap();
        *direct.entry(t.zct(3)).or_insert(0u64) += 1;
    }
    let mut cluster = BTreeMap::new();
    for i in 0..trials {
        let t = sim_cluster::run(&params, 3, i, RunOptions::default()).unwrap();
        *cluster.entry(t.zct(3)).or_insert(0u64) += 1;
    }
    let (stat, dof, p_value) = stats::chi_square_two_sample(&direct, &cluster, 5.0);
    assert!(p_value > 0.001, "chi2 {stat:.2} dof {dof} p {p_value:.5}");
}

#[test]
fn per_generation_seed_means_match_analytics() {
    // empirical E[seed emissions at age n] vs the v sequence, n <= 8
    let params = poisson(1, 0.4, 0.5);
    let ests = montecarlo::estimate_vn(&params, 8, 1_000_000, 0xFEED).unwrap();
    let seqs = analytics::compute_sequences(&params, 16).unwrap();
    for (i, est) in ests.iter().enumerate() {
        let v = seqs.v[i + 1];
        assert!(
            (est.value - v).abs() <= 3.0 * est.stderr + 1e-12,
            "v_{} = {v:.6} vs {:.6} (se {:.6})",
            i + 1,
            est.value,
            est.stderr
        );
    }
}

#[test]
fn seed_counts_grow_at_the_malthusian_rate() {
    // slope of ln R_n(0) over [10, 30] on surviving aggregated runs
    let params = poisson(1, 0.4, 0.2);
    let theta = analytics::malthusian_theta(&params, 1e-10).unwrap();
    let opts = RunOptions { cap: 100_000_000_000_000 };
    let mut slopes = Vec::new();
    let mut seed = 0u64;
    while slopes.len() < 250 && seed < 2_000 {
        let t = sim_cluster::run(&params, 30, seed, opts).unwrap();
        seed += 1;
        if t.rows[30].r0 == 0 || t.rows.iter().skip(10).any(|r| r.r0 == 0) {
            continue;
        }
        let xs: Vec<f64> = (10..=30).map(f64::from).collect();
        let ys: Vec<f64> = (10..=30).map(|n| (t.rows[n as usize].r0 as f64).ln()).collect();
        slopes.push(stats::ls_slope(&xs, &ys));
    }
    assert!(slopes.len() >= 250, "only {} survivors", slopes.len());
    let (mean, _) = stats::mean_stderr(&slopes);
    assert!(
        (mean - theta).abs() <= 0.05,
        "seed-count slope {mean:.4} vs theta {theta:.4}"
    );
}

#[test]
fn sibling_cluster_outputs_are_uncorrelated() {
    // outputs of two clusters born in the same run and generation
    let params = poisson(0, 0.5, 0.5);
    let mut rng = Stream::new(0x51B);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut attempts = 0u64;
    while xs.len() < 5_000 {
        attempts += 1;
        assert!(attempts < 400_000, "sibling pairs too rare");
        let (_, records) = sim_cluster::run_recorded(&params, 6, &mut rng, 100_000).unwrap();
        // find two records born at the same generation
        let mut by_gen: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
        for r in &records {
            by_gen
                .entry(r.birth_generation)
                .or_default()
                .push(r.seed_total());
        }
        if let Some(pair) = by_gen.values().find(|v| v.len() >= 2) {
            xs.push(pair[0] as f64);
            ys.push(pair[1] as f64);
        }
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let corr = sxy / (sxx * syy).sqrt();
    // corr of independent samples has s.e. ~ 1/sqrt(n)
    assert!(corr.abs() < 3.0 / n.sqrt(), "correlation {corr:.4}");
}

// ---------------------------------------------------------------------------
// Martingale diagnostic: with u(k) = e^{-k theta}, the discounted count of
// scheduled future seeds is flat in n on average.
// ---------------------------------------------------------------------------

#[test]
fn discounted_scheduled_seed_count_is_flat() {
    let params = poisson(0, 0.4, 0.5);
    let theta = analytics::malthusian_theta(&params, 1e-10).unwrap();
    let horizon = 15u32;
    let trials = 10_000u64;
    let mut rng = Stream::new(0x3A7);
    let mut slopes = Vec::with_capacity(trials as usize);
    for _ in 0..trials {
        let (_, records) = sim_cluster::run_recorded(&params, horizon, &mut rng, 500_000).unwrap();
        // Y_n = e^{-theta n} sum_k R_n(k) e^{-theta k}, where R_n(k) counts
        // seeds scheduled to appear k generations past n, reconstructed from
        // the completed emission histories of clusters born before n.
        let mut ys = vec![0.0f64; horizon as usize + 1];
        ys[0] = 1.0; // the founder is the lone scheduled seed at n = 0
        for r in &records {
            let g = r.birth_generation;
            for (age, &emitted) in r.truncated_vu.iter().enumerate().skip(1) {
                if emitted == 0 {
                    continue;
                }
                let arrive = g + age as u32; // generation where these seeds land
                let weight = emitted as f64 * (-theta * f64::from(arrive)).exp();
                for n in (g + 1)..=arrive.min(horizon) {
                    ys[n as usize] += weight;
                }
            }
        }
        let xs: Vec<f64> = (0..=horizon).map(f64::from).collect();
        slopes.push(stats::ls_slope(&xs, &ys));
    }
    let (mean, se) = stats::mean_stderr(&slopes);
    assert!(
        mean.abs() <= 3.0 * se,
        "mean slope {mean:.5} with s.e. {se:.5} not flat"
    );
}
