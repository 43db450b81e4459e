//! Monte Carlo estimators and brute-force oracles.
//!
//! Trials are independent work units: trial `i` draws from the stream keyed
//! by `(master_seed, i)`, results are reduced in trial order, and the whole
//! batch parallelizes freely without changing a single bit of output.

use crate::analytics::{self, AnalyticsError};
use crate::params::CtpParams;
use crate::rng::Stream;
use crate::sim_cluster::{self, RunOptions};
use crate::sim_direct::SimError;
use crate::stats;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum McError {
    #[error("need at least {min} trials, got {got}")]
    TooFewTrials { min: u64, got: u64 },
    #[error("no runs survived to horizon {0}")]
    NoSurvivors(u32),
    #[error("enumeration cap exceeded after {0} weighted outcomes")]
    EnumerationCap(u64),
    #[error("oracle needs an explicit pmf with support size <= 3, b <= 1, depth cap <= 12, p > 0")]
    OracleDomain,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

/// A point estimate with its uncertainty.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub trials: u64,
    pub ci95: (f64, f64),
}

impl Estimate {
    fn from_mean(values: &[f64]) -> Estimate {
        let (mean, se) = stats::mean_stderr(values);
        Estimate {
            value: mean,
            stderr: se,
            trials: values.len() as u64,
            ci95: (mean - 1.96 * se, mean + 1.96 * se),
        }
    }

    /// Proportion estimate: normal interval in the bulk, Wilson near the
    /// boundaries where the normal approximation breaks down.
    fn from_proportion(successes: u64, trials: u64) -> Estimate {
        let phat = successes as f64 / trials as f64;
        let se = (phat * (1.0 - phat) / trials as f64).sqrt();
        let ci95 = if (0.05..=0.95).contains(&phat) {
            (phat - 1.96 * se, phat + 1.96 * se)
        } else {
            stats::wilson_interval(successes, trials)
        };
        Estimate {
            value: phat,
            stderr: se,
            trials,
            ci95,
        }
    }
}

/// Frequency of extinction by `horizon` over independent cluster-engine
/// runs: a lower bound on the true extinction probability, since later
/// extinctions are not seen. A run that overflows the population cap is
/// counted as surviving; reaching the cap and then dying within the
/// remaining horizon would need an astronomically unlikely collapse.
pub fn estimate_extinction_probability(
    params: &CtpParams,
    horizon: u32,
    trials: u64,
    master_seed: u64,
) -> Result<Estimate, McError> {
    if trials < 100 {
        return Err(McError::TooFewTrials { min: 100, got: trials });
    }
    let flags: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = Stream::from_parts(master_seed, i).next_u64();
            match sim_cluster::run(params, horizon, seed, RunOptions::default()) {
                Ok(t) => t.extinct(),
                Err(_) => false,
            }
        })
        .collect();
    let extinct = flags.iter().filter(|f| **f).count() as u64;
    Ok(Estimate::from_proportion(extinct, trials))
}

/// Mean regression slope of `ln Z^CT_n` over `[window_start, horizon]`,
/// across runs that survive to the horizon.
pub fn estimate_growth_rate(
    params: &CtpParams,
    horizon: u32,
    trials: u64,
    window_start: u32,
    master_seed: u64,
) -> Result<Estimate, McError> {
    assert!(window_start < horizon);
    let opts = RunOptions { cap: 100_000_000_000_000 };
    let slopes: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let seed = Stream::from_parts(master_seed, i).next_u64();
            let t = match sim_cluster::run(params, horizon, seed, opts) {
                Ok(t) => t,
                Err(_) => return None,
            };
            if t.zct(horizon as usize) == 0 {
                return None;
            }
            let xs: Vec<f64> = (window_start..=horizon).map(f64::from).collect();
            let ys: Vec<f64> = (window_start..=horizon)
                .map(|n| (t.zct(n as usize) as f64).ln())
                .collect();
            Some(stats::ls_slope(&xs, &ys))
        })
        .collect();
    let slopes: Vec<f64> = slopes.into_iter().flatten().collect();
    if slopes.is_empty() {
        return Err(McError::NoSurvivors(horizon));
    }
    Ok(Estimate::from_mean(&slopes))
}

/// Empirical mean of the per-generation seed emissions of one cluster, for
/// generations `1..=n_max`.
pub fn estimate_vn(
    params: &CtpParams,
    n_max: u32,
    trials: u64,
    master_seed: u64,
) -> Result<Vec<Estimate>, McError> {
    if params.p == 0.0 {
        return Err(McError::Sim(SimError::PZeroCluster));
    }
    let len = n_max as usize;
    let per_trial: Vec<Result<Vec<f64>, McError>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = Stream::from_parts(master_seed, i);
            let (_, per_gen) = sim_cluster::sample_seed_offspring(params, &mut rng, 100_000)?;
            let mut row = vec![0.0; len];
            for (age, &v) in per_gen.iter().enumerate().skip(1).take(len) {
                row[age - 1] = v as f64;
            }
            Ok(row)
        })
        .collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(trials as usize); len];
    for row in per_trial {
        let row = row?;
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
    Ok(columns.iter().map(|c| Estimate::from_mean(c)).collect())
}

/// Exhaustive truncated expectation of the total seed output of one cluster.
///
/// States are `(members, detection countdown)`; transitions enumerate every
/// (total children, traceable split) outcome of the current generation with
/// exact probability weights, so the returned value is the exact expectation
/// of the output emitted in the first `depth_cap` generations. The second
/// component bounds the omitted tail. Only explicit pmfs with support size
/// at most 3 and `b <= 1` are accepted; the enumeration work is capped at
/// `10^8` weighted outcomes.
pub fn oracle_seed_mean_small(
    dist: &crate::offspring::OffspringDistribution,
    b: u32,
    p: f64,
    alpha: f64,
    depth_cap: u32,
) -> Result<(f64, f64), McError> {
    let weights = match dist {
        crate::offspring::OffspringDistribution::FinitePmf { weights }
            if weights.len() <= 3 =>
        {
            weights.clone()
        }
        _ => return Err(McError::OracleDomain),
    };
    if b > 1 || depth_cap > 12 || depth_cap == 0 || p <= 0.0 || !(0.0..=1.0).contains(&alpha) {
        return Err(McError::OracleDomain);
    }

    let mut oracle = Oracle {
        base: weights,
        alpha,
        p,
        b,
        conv: vec![vec![1.0]], // conv[0] = point mass at 0
        memo: std::collections::HashMap::new(),
        work: 0,
    };
    // per-member means from the enumerated table, used for the states whose
    // members evolve independently (detection already scheduled)
    let (mean_u, _mean_t) = oracle.split_means();

    // the founding seed: detected at birth with probability p
    let detected_part = if b == 1 && depth_cap >= 1 { mean_u } else { 0.0 };
    let live_part = oracle.value_live(1, depth_cap)?;
    let value = p * detected_part + (1.0 - p) * live_part;

    let lam: f64 = oracle
        .base
        .iter()
        .enumerate()
        .map(|(k, w)| k as f64 * w)
        .sum();
    let lam_t = alpha * lam;
    let lam_u = (1.0 - alpha) * lam;
    let error_bound = if p >= 1.0 {
        0.0
    } else {
        lam_u * lam_t.powi(b as i32) * analytics::c1(p) * (1.0 - p).powi((depth_cap - b) as i32)
            / p
    };
    Ok((value, error_bound))
}

const ORACLE_WORK_CAP: u64 = 100_000_000;

struct Oracle {
    base: Vec<f64>,
    alpha: f64,
    p: f64,
    b: u32,
    conv: Vec<Vec<f64>>,
    memo: std::collections::HashMap<(u64, u32), f64>,
    work: u64,
}

impl Oracle {
    /// Mean untraceable and traceable children of one member, from the
    /// enumerated outcome table.
    fn split_means(&mut self) -> (f64, f64) {
        let (mut mu, mut mt) = (0.0, 0.0);
        for (t, &w) in self.base.clone().iter().enumerate() {
            for i in 0..=t {
                let pr = w * split_prob(t as u64, i as u64, self.alpha);
                mu += pr * (t - i) as f64;
                mt += pr * i as f64;
            }
        }
        (mu, mt)
    }

    fn conv_table(&mut self, m: u64) -> &[f64] {
        while self.conv.len() <= m as usize {
            let prev = self.conv.last().expect("nonempty");
            let mut next = vec![0.0; prev.len() + self.base.len() - 1];
            for (i, &a) in prev.iter().enumerate() {
                for (j, &b) in self.base.iter().enumerate() {
                    next[i + j] += a * b;
                }
            }
            self.conv.push(next);
        }
        &self.conv[m as usize]
    }

    /// Expected seed output over the next `depth` generations of a cluster
    /// with `m` live members and no detection so far.
    fn value_live(&mut self, m: u64, depth: u32) -> Result<f64, McError> {
        if m == 0 || depth == 0 {
            return Ok(0.0);
        }
        if let Some(&v) = self.memo.get(&(m, depth)) {
            return Ok(v);
        }
        let (mean_u, _) = self.split_means();
        if depth == 1 {
            // only the next generation's emissions count; each member
            // contributes independently
            let v = m as f64 * mean_u;
            self.memo.insert((m, depth), v);
            return Ok(v);
        }
        let table = self.conv_table(m).to_vec();
        let mut value = 0.0;
        for (t, &q_t) in table.iter().enumerate() {
            if q_t == 0.0 {
                continue;
            }
            for i in 0..=t as u64 {
                self.work += 1;
                if self.work > ORACLE_WORK_CAP {
                    return Err(McError::EnumerationCap(self.work));
                }
                let w = q_t * split_prob(t as u64, i, self.alpha);
                if w == 0.0 {
                    continue;
                }
                let seeds_now = (t as u64 - i) as f64;
                let mut future = 0.0;
                if i > 0 {
                    let p_detect = if self.p >= 1.0 {
                        1.0
                    } else {
                        1.0 - (1.0 - self.p).powi(i as i32)
                    };
                    // detected: members spawn b more times with no further
                    // interaction; only b <= 1 arises here
                    let detected_future = if self.b == 1 && depth >= 2 {
                        i as f64 * mean_u
                    } else {
                        0.0
                    };
                    let live_future = self.value_live(i, depth - 1)?;
                    future = p_detect * detected_future + (1.0 - p_detect) * live_future;
                }
                value += w * (seeds_now + future);
            }
        }
        self.memo.insert((m, depth), value);
        Ok(value)
    }
}

fn split_prob(t: u64, i: u64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        return if i == 0 { 1.0 } else { 0.0 };
    }
    if alpha >= 1.0 {
        return if i == t { 1.0 } else { 0.0 };
    }
    (stats::ln_choose(t, i) + i as f64 * alpha.ln() + (t - i) as f64 * (1.0 - alpha).ln()).exp()
}
