//! Cluster-level simulation.
//!
//! A traceable cluster started by one seed grows as a branching process of
//! traceable children; every member is tested and, with probability `p`,
//! marks the cluster for removal `b` generations after the first detected
//! member appeared. Members of the removal generation are discarded while
//! the untraceable children they were produced alongside still count as
//! emitted seeds. This asymmetry in the truncation is why the final
//! generation contributes to `vu` but not to `vt`.
//!
//! Two engines share these dynamics:
//!
//! * [`ClusterRecord`] evolves one cluster explicitly and remembers its full
//!   size and emission history; [`run_recorded`] drives a whole process from
//!   it, which is what the record-level diagnostics need.
//! * [`run`] keeps only a multiset of live-cluster states `(size, countdown)`
//!   and advances whole buckets at once, drawing the joint outcome of many
//!   i.i.d. clusters by a chain of binomial splits. This is distributionally
//!   identical to advancing every cluster separately and keeps horizon-level
//!   populations in the billions cheap.

use crate::params::CtpParams;
use crate::rng::Stream;
use crate::sim_direct::SimError;
use crate::trajectory::{Trajectory, TrajectoryRow};
use rand_distr::Distribution as _;
use std::collections::{BTreeMap, HashMap};

pub const DEFAULT_CAP: u64 = 10_000_000;
pub const DEFAULT_AGE_CAP: u32 = 100_000;

/// Countdown value meaning "no detection has occurred yet".
const NO_DETECTION: u16 = u16::MAX;

/// One traceable cluster, by cluster age: `vt[a]` members at age `a`
/// (`vt[0] = 1`), `vu[a]` seeds emitted into age `a`. The `truncated_*`
/// sequences apply the removal rule; raw sequences cover exactly the
/// simulated ages.
#[derive(Debug, Clone)]
pub struct ClusterRecord {
    pub birth_generation: u32,
    pub vt: Vec<u64>,
    pub vu: Vec<u64>,
    /// Age of the first detected member, when one exists.
    pub detection_age: Option<u32>,
    pub truncated_vt: Vec<u64>,
    pub truncated_vu: Vec<u64>,
    pub terminated: bool,
}

impl ClusterRecord {
    /// Begin a cluster: one seed, whose own detection mark is drawn now.
    pub fn start(birth_generation: u32, params: &CtpParams, rng: &mut Stream) -> Self {
        let detected = rng.bernoulli(params.p);
        let detection_age = if detected { Some(0) } else { None };
        // a seed detected at birth with b = 0 never joins the population
        let kept = if params.b == 0 && detected { 0 } else { 1 };
        ClusterRecord {
            birth_generation,
            vt: vec![1],
            vu: vec![0],
            detection_age,
            truncated_vt: vec![kept],
            truncated_vu: vec![0],
            terminated: kept == 0,
        }
    }

    /// Total seed output of the cluster.
    pub fn seed_total(&self) -> u64 {
        self.truncated_vu.iter().sum()
    }

    /// Advance one cluster age. Returns false once the cluster is over.
    pub fn advance(&mut self, params: &CtpParams, rng: &mut Stream) -> bool {
        if self.terminated {
            return false;
        }
        let age = self.vt.len() as u32 - 1;
        let members = *self.truncated_vt.last().expect("nonempty");
        debug_assert!(members > 0);

        let mut vt_next = 0u64;
        let mut vu_next = 0u64;
        for _ in 0..members {
            let (t, u) = params.dist.sample_offspring_split(params.alpha, rng);
            vt_next += t;
            vu_next += u;
        }
        let new_age = age + 1;

        if self.detection_age.is_none() && vt_next > 0 {
            // each newborn member carries an independent detection mark
            for _ in 0..vt_next {
                if rng.bernoulli(params.p) {
                    self.detection_age = Some(new_age);
                    break;
                }
            }
        }

        self.vt.push(vt_next);
        self.vu.push(vu_next);
        let kept = match self.detection_age {
            Some(s) => {
                debug_assert!(new_age <= s + params.b);
                if new_age == s + params.b {
                    0
                } else {
                    vt_next
                }
            }
            None => vt_next,
        };
        self.truncated_vt.push(kept);
        // seeds of the removal generation still count
        self.truncated_vu.push(vu_next);
        self.terminated = kept == 0;
        true
    }
}

/// Simulate one cluster to termination; returns its total seed output and
/// the per-age emission sequence. Requires `p > 0`, otherwise the cluster
/// may never terminate.
pub fn sample_seed_offspring(
    params: &CtpParams,
    rng: &mut Stream,
    age_cap: u32,
) -> Result<(u64, Vec<u64>), SimError> {
    if params.p == 0.0 {
        return Err(SimError::PZeroCluster);
    }
    let mut rec = ClusterRecord::start(0, params, rng);
    while !rec.terminated {
        rec.advance(params, rng);
        if rec.vt.len() as u32 > age_cap {
            return Err(SimError::AgeCapExceeded(age_cap));
        }
    }
    Ok((rec.seed_total(), rec.truncated_vu))
}

/// Record-keeping engine: every cluster born up to `horizon` is simulated to
/// termination, so the returned records carry complete future emissions.
/// Requires `p > 0`.
pub fn run_recorded(
    params: &CtpParams,
    horizon: u32,
    rng: &mut Stream,
    record_cap: usize,
) -> Result<(Trajectory, Vec<ClusterRecord>), SimError> {
    if params.p == 0.0 {
        return Err(SimError::PZeroCluster);
    }
    let mut pending: BTreeMap<u32, u64> = BTreeMap::new();
    pending.insert(0, 1);
    let mut records: Vec<ClusterRecord> = Vec::new();
    let h = horizon as usize;
    let mut zct = vec![0u64; h + 1];
    let mut r0 = vec![0u64; h + 1];

    while let Some((&g, _)) = pending.first_key_value() {
        let count = pending.remove(&g).expect("present");
        for _ in 0..count {
            let mut rec = ClusterRecord::start(g, params, rng);
            while !rec.terminated {
                rec.advance(params, rng);
                if rec.vt.len() as u32 > DEFAULT_AGE_CAP {
                    return Err(SimError::AgeCapExceeded(DEFAULT_AGE_CAP));
                }
            }
            for (age, &kept) in rec.truncated_vt.iter().enumerate() {
                let gen = g as usize + age;
                if gen <= h {
                    zct[gen] += kept;
                }
            }
            if rec.truncated_vt[0] == 1 {
                r0[g as usize] += 1;
            }
            for (age, &emitted) in rec.truncated_vu.iter().enumerate().skip(1) {
                let gen = g + age as u32;
                if gen <= horizon && emitted > 0 {
                    *pending.entry(gen).or_default() += emitted;
                }
            }
            records.push(rec);
            if records.len() > record_cap {
                let rows = assemble_rows(&zct[..=g as usize], &r0[..=g as usize]);
                return Err(SimError::ExplosionCap {
                    generation: g,
                    partial: Trajectory::derive_extinction(rows),
                });
            }
        }
    }
    let rows = assemble_rows(&zct, &r0);
    Ok((Trajectory::derive_extinction(rows), records))
}

fn assemble_rows(zct: &[u64], r0: &[u64]) -> Vec<TrajectoryRow> {
    zct.iter()
        .zip(r0)
        .enumerate()
        .map(|(n, (&zct, &r0))| TrajectoryRow {
            n: n as u32,
            z: None,
            zct,
            r0,
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Ceiling on the post-tracing current generation.
    pub cap: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { cap: DEFAULT_CAP }
    }
}

/// Aggregated engine: the population is a multiset of cluster states
/// `(members, countdown)`, advanced one global generation at a time.
pub fn run(
    params: &CtpParams,
    horizon: u32,
    seed: u64,
    opts: RunOptions,
) -> Result<Trajectory, SimError> {
    let mut engine = AggEngine {
        params,
        rng: Stream::from_parts(seed, 0xC1A5),
        conv_cache: HashMap::new(),
    };
    if params.p == 0.0 {
        // nothing is ever detected, so cluster membership has no effect:
        // the current generation is exactly the untreated process
        return run_undetected(&mut engine, horizon, opts);
    }
    let mut map: BTreeMap<(u64, u16), u64> = BTreeMap::new();
    let mut rows: Vec<TrajectoryRow> = Vec::with_capacity(horizon as usize + 1);

    // generation 0: the founder is a seed
    let alive0 = engine.insert_seeds(1, &mut map);
    rows.push(TrajectoryRow {
        n: 0,
        z: None,
        zct: population(&map),
        r0: alive0,
    });

    for n in 1..=horizon {
        if map.is_empty() {
            rows.push(TrajectoryRow { n, z: None, zct: 0, r0: 0 });
            continue;
        }
        let mut next: BTreeMap<(u64, u16), u64> = BTreeMap::new();
        let mut seeds_emitted = 0u64;
        for ((m, rem), count) in std::mem::take(&mut map) {
            engine.advance_bucket(m, rem, count, &mut next, &mut seeds_emitted)?;
        }
        let r0 = engine.insert_seeds(seeds_emitted, &mut next);
        let zct = population(&next);
        rows.push(TrajectoryRow { n, z: None, zct, r0 });
        if zct > opts.cap {
            return Err(SimError::ExplosionCap {
                generation: n,
                partial: Trajectory::derive_extinction(rows),
            });
        }
        map = next;
    }
    Ok(Trajectory::derive_extinction(rows))
}

fn population(map: &BTreeMap<(u64, u16), u64>) -> u64 {
    map.iter().map(|(&(m, _), &c)| m * c).sum()
}

fn run_undetected(
    engine: &mut AggEngine<'_>,
    horizon: u32,
    opts: RunOptions,
) -> Result<Trajectory, SimError> {
    let alpha = engine.params.alpha;
    let mut rows = vec![TrajectoryRow { n: 0, z: None, zct: 1, r0: 1 }];
    let mut z = 1u64;
    for n in 1..=horizon {
        if z == 0 {
            rows.push(TrajectoryRow { n, z: None, zct: 0, r0: 0 });
            continue;
        }
        let total = engine.total_children(z);
        let seeds = engine.binomial(total, 1.0 - alpha);
        rows.push(TrajectoryRow { n, z: None, zct: total, r0: seeds });
        if total > opts.cap {
            return Err(SimError::ExplosionCap {
                generation: n,
                partial: Trajectory::derive_extinction(rows),
            });
        }
        z = total;
    }
    Ok(Trajectory::derive_extinction(rows))
}

/// Buckets below this count are advanced cluster by cluster.
const BUCKET_MIN: u64 = 64;
/// Joint-outcome enumeration is used only while `m (mean + 1)` stays below
/// this, so the total-offspring pmf never underflows at its head.
const ENUM_BUDGET: f64 = 400.0;

struct AggEngine<'a> {
    params: &'a CtpParams,
    rng: Stream,
    conv_cache: HashMap<u64, Vec<f64>>,
}

impl AggEngine<'_> {
    /// Insert freshly emitted seeds, drawing their detection-at-birth marks.
    /// Returns how many are alive (all of them when `b >= 1`).
    fn insert_seeds(&mut self, count: u64, map: &mut BTreeMap<(u64, u16), u64>) -> u64 {
        if count == 0 {
            return 0;
        }
        let detected = self.binomial(count, self.params.p);
        let undetected = count - detected;
        if undetected > 0 {
            *map.entry((1, NO_DETECTION)).or_default() += undetected;
        }
        if self.params.b == 0 {
            // detected seeds are removed before entering the population
            undetected
        } else {
            if detected > 0 {
                *map.entry((1, self.params.b as u16)).or_default() += detected;
            }
            count
        }
    }

    fn binomial(&mut self, n: u64, p: f64) -> u64 {
        if p <= 0.0 || n == 0 {
            return 0;
        }
        if p >= 1.0 {
            return n;
        }
        if n <= 64 {
            let mut c = 0;
            for _ in 0..n {
                if self.rng.bernoulli(p) {
                    c += 1;
                }
            }
            c
        } else {
            rand_distr::Binomial::new(n, p)
                .expect("valid binomial")
                .sample(&mut self.rng)
        }
    }

    /// Exact total offspring of `m` parents in one draw.
    fn total_children(&mut self, m: u64) -> u64 {
        use crate::offspring::OffspringDistribution::*;
        match &self.params.dist {
            Poisson { lambda } => self.poisson(m as f64 * lambda),
            Binomial { n, q } => self.binomial(m * u64::from(*n), *q),
            Geometric { success } => {
                // negative binomial via a gamma-mixed Poisson
                let scale = (1.0 - success) / success;
                let gamma = rand_distr::Gamma::new(m as f64, scale)
                    .expect("valid gamma")
                    .sample(&mut self.rng);
                self.poisson(gamma)
            }
            FinitePmf { weights } => {
                // multinomial over the support
                let mut total = 0u64;
                let mut remaining = m;
                let mut mass = 1.0f64;
                for (k, &w) in weights.iter().enumerate() {
                    if remaining == 0 {
                        break;
                    }
                    if k + 1 == weights.len() {
                        total += k as u64 * remaining;
                        break;
                    }
                    let frac = (w / mass).clamp(0.0, 1.0);
                    let n_k = self.binomial(remaining, frac);
                    total += k as u64 * n_k;
                    remaining -= n_k;
                    mass = (mass - w).max(f64::MIN_POSITIVE);
                }
                total
            }
        }
    }

    fn poisson(&mut self, mean: f64) -> u64 {
        if mean <= 0.0 {
            return 0;
        }
        rand_distr::Poisson::new(mean)
            .expect("valid poisson mean")
            .sample(&mut self.rng) as u64
    }

    /// Resolve one advanced cluster group: `take` clusters that produced
    /// `i` traceable members and `j` seeds each.
    fn settle_group(
        &mut self,
        take: u64,
        i: u64,
        rem: u16,
        next: &mut BTreeMap<(u64, u16), u64>,
    ) {
        if take == 0 {
            return;
        }
        if rem == NO_DETECTION {
            if i == 0 {
                return; // no members left, nothing to detect
            }
            let p_any = if self.params.p >= 1.0 {
                1.0
            } else {
                1.0 - (1.0 - self.params.p).powf(i as f64)
            };
            let detected = self.binomial(take, p_any);
            let b = self.params.b as u16;
            if detected > 0 && b >= 1 {
                *next.entry((i, b)).or_default() += detected;
            }
            // b = 0: detected clusters lose their members right away
            if take - detected > 0 {
                *next.entry((i, NO_DETECTION)).or_default() += take - detected;
            }
        } else {
            let left = rem - 1;
            if left >= 1 && i > 0 {
                *next.entry((i, left)).or_default() += take;
            }
        }
    }

    fn advance_bucket(
        &mut self,
        m: u64,
        rem: u16,
        count: u64,
        next: &mut BTreeMap<(u64, u16), u64>,
        seeds: &mut u64,
    ) -> Result<(), SimError> {
        let enum_ok = (m as f64) * (self.params.dist.mean() + 1.0) <= ENUM_BUDGET;
        if count < BUCKET_MIN || !enum_ok {
            for _ in 0..count {
                let total = self.total_children(m);
                let i = self.binomial(total, self.params.alpha);
                *seeds += total - i;
                self.settle_group(1, i, rem, next);
            }
            return Ok(());
        }

        // joint multiset draw: enumerate per-cluster outcomes (i, j) in a
        // fixed order and peel off binomial counts
        let alpha = self.params.alpha;
        let mut c_rem = count;
        let mut p_rem = 1.0f64;
        let mut pmf = TotalPmf::new(self, m);
        let t_cap = 10_000u64 + 8 * ENUM_BUDGET as u64;
        let mut t = 0u64;
        while c_rem > 0 {
            let q_t = pmf.next_prob(self, m);
            for i in 0..=t {
                if c_rem == 0 {
                    break;
                }
                let split = split_pmf(t, i, alpha);
                let pr = (q_t * split).clamp(0.0, 1.0);
                let take = if pr >= p_rem {
                    c_rem
                } else {
                    self.binomial(c_rem, (pr / p_rem).clamp(0.0, 1.0))
                };
                if take > 0 {
                    *seeds += (t - i) * take;
                    self.settle_group(take, i, rem, next);
                    c_rem -= take;
                }
                p_rem = (p_rem - pr).max(1e-305);
            }
            t += 1;
            if t > t_cap {
                // residual float mass only; treat the stragglers as childless
                self.settle_group(c_rem, 0, rem, next);
                break;
            }
        }
        Ok(())
    }
}

/// Probability that one of `t` children is traceable `i` times, i.e. the
/// binomial split pmf, evaluated in log space to survive large `t`.
fn split_pmf(t: u64, i: u64, alpha: f64) -> f64 {
    if alpha <= 0.0 {
        return if i == 0 { 1.0 } else { 0.0 };
    }
    if alpha >= 1.0 {
        return if i == t { 1.0 } else { 0.0 };
    }
    let ln = crate::stats::ln_choose(t, i)
        + i as f64 * alpha.ln()
        + (t - i) as f64 * (1.0 - alpha).ln();
    ln.exp()
}

/// Iterator over the pmf of the total offspring of `m` parents, in closed
/// form for the parametric kinds and by convolution for explicit pmfs.
enum TotalPmf {
    Poisson { mean: f64, current: f64, t: u64 },
    Binomial { n: u64, q: f64, current: f64, t: u64 },
    NegBinomial { m: f64, q: f64, current: f64, t: u64 },
    Table { values: Vec<f64>, t: usize },
}

impl TotalPmf {
    fn new(engine: &mut AggEngine<'_>, m: u64) -> Self {
        use crate::offspring::OffspringDistribution::*;
        match &engine.params.dist {
            Poisson { lambda } => {
                let mean = m as f64 * lambda;
                TotalPmf::Poisson {
                    mean,
                    current: (-mean).exp(),
                    t: 0,
                }
            }
            Binomial { n, q } => {
                let total_n = m * u64::from(*n);
                if *q == 0.0 || *q == 1.0 {
                    let mut values = vec![0.0; total_n as usize + 1];
                    let idx = if *q == 0.0 { 0 } else { total_n as usize };
                    values[idx] = 1.0;
                    TotalPmf::Table { values, t: 0 }
                } else {
                    TotalPmf::Binomial {
                        n: total_n,
                        q: *q,
                        current: (1.0 - q).powf(total_n as f64),
                        t: 0,
                    }
                }
            }
            Geometric { success } => TotalPmf::NegBinomial {
                m: m as f64,
                q: *success,
                current: success.powf(m as f64),
                t: 0,
            },
            FinitePmf { weights } => {
                let values = engine
                    .conv_cache
                    .entry(m)
                    .or_insert_with(|| convolution_power(weights, m))
                    .clone();
                TotalPmf::Table { values, t: 0 }
            }
        }
    }

    /// pmf at the current index, then advance.
    fn next_prob(&mut self, _engine: &AggEngine<'_>, _m: u64) -> f64 {
        match self {
            TotalPmf::Poisson { mean, current, t } => {
                let out = *current;
                *t += 1;
                *current *= *mean / *t as f64;
                out
            }
            TotalPmf::Binomial { n, q, current, t } => {
                let out = *current;
                if *t >= *n {
                    *current = 0.0;
                } else {
                    *current *= ((*n - *t) as f64 / (*t + 1) as f64) * (*q / (1.0 - *q));
                }
                *t += 1;
                out
            }
            TotalPmf::NegBinomial { m, q, current, t } => {
                let out = *current;
                *current *= ((*t as f64 + *m) / (*t + 1) as f64) * (1.0 - *q);
                *t += 1;
                out
            }
            TotalPmf::Table { values, t } => {
                let out = values.get(*t).copied().unwrap_or(0.0);
                *t += 1;
                out
            }
        }
    }
}

/// `m`-fold convolution of a finite pmf.
fn convolution_power(base: &[f64], m: u64) -> Vec<f64> {
    let mut acc = vec![1.0f64];
    for _ in 0..m {
        let mut next = vec![0.0; acc.len() + base.len() - 1];
        for (i, &a) in acc.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in base.iter().enumerate() {
                next[i + j] += a * b;
            }
        }
        acc = next;
    }
    acc
}
