//! Literal simulation on the genealogical tree.
//!
//! Vertices are identified by a hash of their genealogical path, and every
//! random decision is a pure function of that hash and the trial seed: the
//! offspring count of a position, the traceability of the edge to each
//! child, and the detection mark consulted when the vertex reaches age `b`.
//! Runs with the same seed but different `(p, alpha)` therefore share all
//! underlying uniforms, giving the monotone coupling: raising `p` and
//! `alpha` can only shrink the alive set.
//!
//! Alongside the traced process, the untreated population `Z_n` is advanced
//! on the same offspring randomness. Lineages removed by tracing keep
//! reproducing for `Z` as anonymous "ghost" positions carrying only their
//! path hash.

use crate::params::CtpParams;
use crate::rng::{combine, mix64, unit_f64, Stream};
use crate::trajectory::{Trajectory, TrajectoryRow};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

/// Default ceiling on the realized current generation; supercritical runs
/// need one because `Z_n` grows geometrically.
pub const DEFAULT_CAP: u64 = 10_000_000;

const TAG_OFFSPRING: u64 = 1;
const TAG_DETECT: u64 = 2;
const TAG_TRACE: u64 = 3;
const CHILD_BASE: u64 = 4;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("explosion cap exceeded at generation {generation}")]
    ExplosionCap {
        generation: u32,
        partial: Trajectory,
    },
    #[error("cluster age cap {0} exceeded")]
    AgeCapExceeded(u32),
    #[error("seed-output sampling needs p > 0 (clusters may never terminate otherwise)")]
    PZeroCluster,
}

/// Path hash of the founder for a given trial.
pub fn root_hash(trial_seed: u64) -> u64 {
    mix64(trial_seed ^ 0x9D2C_5680_AC1F_3D5A)
}

/// Path hash of the `i`-th child (0-based) of the position with hash `h`.
pub fn child_hash(h: u64, i: u64) -> u64 {
    combine(h, CHILD_BASE + i)
}

/// Number of offspring of the position with path hash `h`, shared by the
/// traced process and the untreated one and independent of `(p, alpha)`.
#[inline]
pub fn offspring_count(params: &CtpParams, h: u64) -> u64 {
    params
        .dist
        .sample(&mut Stream::new(combine(h, TAG_OFFSPRING)))
}

/// Whether the edge from `h` to its parent is traceable.
#[inline]
pub fn traceable_mark(alpha: f64, h: u64) -> bool {
    unit_f64(combine(h, TAG_TRACE)) < alpha
}

/// Detection mark of the position with hash `h`.
#[inline]
pub fn detection_mark(p: f64, h: u64) -> bool {
    unit_f64(combine(h, TAG_DETECT)) < p
}

#[derive(Debug, Clone)]
pub struct Vertex {
    pub id: u64,
    pub parent: Option<u64>,
    pub generation: u32,
    /// Whether the edge to the parent is traceable; false for the root,
    /// which has no edge and counts as a cluster seed.
    pub traceable: bool,
    /// Detection mark, sampled lazily when the vertex reaches age `b`.
    pub detected: Option<bool>,
    pub cluster_id: u64,
    pub alive: bool,
}

/// Full state of one run. Cluster membership is static bond percolation:
/// a vertex joins its parent's cluster iff the connecting edge is
/// traceable, and otherwise founds a new cluster with itself as seed. A
/// detection removes every alive member of the detected vertex's cluster,
/// and nothing can be born into a cluster whose members were all removed,
/// so dropping removed ids from the membership lists is lossless.
pub struct GenealogyState {
    pub current_time: u32,
    b: u32,
    vertices: HashMap<u64, Vertex>,
    live_by_generation: BTreeMap<u32, Vec<u64>>,
    cluster_members: HashMap<u64, Vec<u64>>,
    /// Realized current-generation positions outside the traced process;
    /// they still reproduce for the untreated count.
    ghosts: Vec<u64>,
    rows: Vec<TrajectoryRow>,
    alive_total: u64,
    cap: u64,
}

impl GenealogyState {
    /// Generation whose detection marks the next step will read.
    pub fn pending_detection_generation(&self) -> Option<u32> {
        (self.current_time + 1).checked_sub(self.b)
    }

    /// Size of the current generation after tracing.
    pub fn zct(&self) -> u64 {
        self.live_by_generation
            .get(&self.current_time)
            .map_or(0, |v| v.len() as u64)
    }

    pub fn rows(&self) -> &[TrajectoryRow] {
        &self.rows
    }

    pub fn vertex(&self, id: u64) -> Option<&Vertex> {
        self.vertices.get(&id)
    }

    /// Sorted ids of all alive vertices, across generations.
    pub fn alive_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.vertices.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    /// Alive members keyed by cluster (for structural checks).
    pub fn clusters(&self) -> &HashMap<u64, Vec<u64>> {
        &self.cluster_members
    }

    fn record_row(&mut self, z: u64) {
        let n = self.current_time;
        let r0 = self.live_by_generation.get(&n).map_or(0, |ids| {
            ids.iter()
                .filter(|id| !self.vertices[id].traceable)
                .count() as u64
        });
        self.rows.push(TrajectoryRow {
            n,
            z: Some(z),
            zct: self.zct(),
            r0,
        });
    }
}

/// Start a run: the founder occupies generation 0 unless `b = 0` and its
/// detection mark is set, in which case it is removed on the spot.
pub fn init(params: &CtpParams, trial_seed: u64, cap: u64) -> GenealogyState {
    let root = root_hash(trial_seed);
    let mut state = GenealogyState {
        current_time: 0,
        b: params.b,
        vertices: HashMap::new(),
        live_by_generation: BTreeMap::new(),
        cluster_members: HashMap::new(),
        ghosts: Vec::new(),
        rows: Vec::new(),
        alive_total: 0,
        cap,
    };
    let detected_now = params.b == 0 && detection_mark(params.p, root);
    if detected_now {
        state.ghosts.push(root);
    } else {
        state.vertices.insert(
            root,
            Vertex {
                id: root,
                parent: None,
                generation: 0,
                traceable: false,
                detected: if params.b == 0 { Some(false) } else { None },
                cluster_id: root,
                alive: true,
            },
        );
        state.live_by_generation.insert(0, vec![root]);
        state.cluster_members.insert(root, vec![root]);
        state.alive_total = 1;
    }
    state.record_row(1);
    state
}

/// Advance one generation: spawn, then detect and remove whole clusters.
pub fn step(state: &mut GenealogyState, params: &CtpParams) -> Result<(), SimError> {
    let n = state.current_time + 1;

    // --- spawn from alive members of the previous generation
    let parents: Vec<u64> = state
        .live_by_generation
        .get(&(n - 1))
        .cloned()
        .unwrap_or_default();
    let mut ct_newborns: Vec<u64> = Vec::new();
    for parent_id in parents {
        let parent_cluster = state.vertices[&parent_id].cluster_id;
        let total = offspring_count(params, parent_id);
        for i in 0..total {
            let child = child_hash(parent_id, i);
            let traceable = traceable_mark(params.alpha, child);
            let cluster_id = if traceable { parent_cluster } else { child };
            state.vertices.insert(
                child,
                Vertex {
                    id: child,
                    parent: Some(parent_id),
                    generation: n,
                    traceable,
                    detected: None,
                    cluster_id,
                    alive: true,
                },
            );
            state
                .cluster_members
                .entry(cluster_id)
                .or_default()
                .push(child);
            ct_newborns.push(child);
        }
    }
    state.alive_total += ct_newborns.len() as u64;
    state.live_by_generation.insert(n, ct_newborns.clone());

    // --- ghost expansion keeps the untreated count honest
    let mut new_ghosts: Vec<u64> = Vec::new();
    for ghost in std::mem::take(&mut state.ghosts) {
        let total = offspring_count(params, ghost);
        for i in 0..total {
            new_ghosts.push(child_hash(ghost, i));
        }
    }
    let z_n = ct_newborns.len() as u64 + new_ghosts.len() as u64;

    // --- detection of the generation that just reached age b
    if let Some(test_gen) = n.checked_sub(params.b) {
        let testees: Vec<u64> = state
            .live_by_generation
            .get(&test_gen)
            .cloned()
            .unwrap_or_default();
        let mut detected_clusters: Vec<u64> = Vec::new();
        for id in testees {
            let mark = detection_mark(params.p, id);
            let cluster_id = {
                let v = state.vertices.get_mut(&id).expect("testee alive");
                v.detected = Some(mark);
                v.cluster_id
            };
            if mark {
                detected_clusters.push(cluster_id);
            }
        }
        detected_clusters.sort_unstable();
        detected_clusters.dedup();
        // remove the union of the detected clusters, simultaneously
        for cid in detected_clusters {
            let members = state.cluster_members.remove(&cid).unwrap_or_default();
            for id in members {
                if let Some(mut v) = state.vertices.remove(&id) {
                    v.alive = false;
                    state.alive_total -= 1;
                    if let Some(live) = state.live_by_generation.get_mut(&v.generation) {
                        live.retain(|x| *x != id);
                    }
                    // removed members of the current generation still
                    // reproduce in the untreated process
                    if v.generation == n {
                        new_ghosts.push(id);
                    }
                }
            }
        }
    }

    state.ghosts = new_ghosts;
    state.current_time = n;
    state.record_row(z_n);

    if z_n > state.cap || state.alive_total > state.cap {
        return Err(SimError::ExplosionCap {
            generation: n,
            partial: Trajectory::derive_extinction(state.rows.clone()),
        });
    }
    Ok(())
}

/// Run to `horizon`, reporting `(Z_n, Z^CT_n, R0_n)` per generation.
pub fn run(
    params: &CtpParams,
    horizon: u32,
    trial_seed: u64,
    cap: u64,
) -> Result<Trajectory, SimError> {
    let mut state = init(params, trial_seed, cap);
    for _ in 0..horizon {
        step(&mut state, params)?;
    }
    Ok(Trajectory::derive_extinction(state.rows))
}
