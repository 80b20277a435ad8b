//! Simple random walk on the lazy tree with online detection of the
//! regeneration structure.
//!
//! A step moves to a uniform neighbor (parent plus children), growing
//! the tree on demand. Candidate regenerations are born when the walk
//! first hits a level whose entry vertex has no level siblings; a
//! candidate dies if the walk later backtracks a full level length below
//! it. Candidates still alive at the horizon are the regeneration
//! times; the ones born inside a trailing buffer are marked censored
//! because their no-return condition had too little room to fail.

use crate::embedding::{Embedding, EmbeddingError};
use crate::tree::{LazyTree, TreeError, NO_VERTEX};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("need at least {needed} uncensored regenerations, found {found}")]
    InsufficientRegenerations { found: usize, needed: usize },
    #[error("replayed trajectory diverged from the record at step {0}")]
    ReplayDiverged(u64),
}

/// Failed verification of a recorded regeneration.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("regeneration {k}: walk revisited depth {depth} <= {floor} after tau")]
    NoReturnViolated { k: u32, depth: u64, floor: u64 },
    #[error("regeneration {k}: entry vertex has level siblings")]
    SiblingViolated { k: u32 },
    #[error("regeneration {k}: ancestor hit time {pi} not before tau {tau}")]
    AncestorOrder { k: u32, pi: u64, tau: u64 },
    #[error("regeneration {k}: backbone segment above the entry vertex is not a line")]
    SegmentNotLine { k: u32 },
    #[error("regeneration {k}: recorded depth {got} is not level {lambda} times {level_len}")]
    DepthMismatch { k: u32, got: u64, lambda: u64, level_len: u64 },
}

/// First hit of a level by the walk.
#[derive(Debug, Clone, Serialize)]
pub struct LevelHit {
    pub level: u64,
    pub step: u64,
    pub vertex: u32,
    pub sib_zero: bool,
}

/// A confirmed regeneration time.
#[derive(Debug, Clone, Serialize)]
pub struct RegenerationRecord {
    /// 1-based index in the confirmed sequence.
    pub k: u32,
    /// Step index of the regeneration.
    pub tau: u64,
    /// Level at which it occurred.
    pub lambda: u64,
    /// First hit time of the level ancestor of the entry vertex.
    pub pi: u64,
    pub depth_at_tau: u64,
    pub position: Vec<i64>,
    /// Entry vertex id.
    #[serde(skip)]
    pub vertex: u32,
    /// Born inside the trailing buffer: the no-return condition had
    /// little room to fail, so estimators skip it.
    pub censored: bool,
}

/// Per-interval trace statistics between consecutive regenerations.
#[derive(Debug, Clone, Serialize)]
pub struct BbtRecord {
    pub k: u32,
    pub start_step: u64,
    pub end_step: u64,
    /// Distinct backbone vertices visited in `(start, end]` plus the
    /// starting vertex.
    pub distinct_backbone: u64,
    /// Max displacement of visited backbone vertices from the position
    /// at the interval start.
    pub max_displacement: f64,
    /// Interval ends at a censored regeneration.
    pub censored: bool,
}

#[derive(Debug, Clone)]
struct Candidate {
    step: u64,
    level: u64,
    vertex: u32,
    pi: u64,
    depth: u64,
    position: Vec<i64>,
}

/// Online candidate bookkeeping, pure over a stream of step and
/// level-first-hit events, so it can be driven by synthetic paths.
#[derive(Debug)]
pub struct RegenDetector {
    level_len: u64,
    max_level_hit: u64,
    min_next_level: u64,
    stack: Vec<Candidate>,
    pub candidates_born: u64,
    pub candidates_killed: u64,
}

impl RegenDetector {
    pub fn new(level_len: u64) -> Self {
        Self {
            level_len,
            max_level_hit: 0,
            min_next_level: 1,
            stack: Vec::new(),
            candidates_born: 0,
            candidates_killed: 0,
        }
    }

    /// Depth update after a step; kills candidates whose no-return floor
    /// was reached and resets the next admissible candidate level.
    pub fn on_step(&mut self, depth: u64) {
        let mut popped = false;
        while let Some(top) = self.stack.last() {
            if depth <= (top.level - 1) * self.level_len {
                self.stack.pop();
                self.candidates_killed += 1;
                popped = true;
            } else {
                break;
            }
        }
        if popped {
            self.min_next_level = self.max_level_hit + 2;
        }
    }

    /// First hit of `level`; spawns a candidate when the level is
    /// admissible and its entry vertex has no level siblings.
    #[allow(clippy::too_many_arguments)]
    pub fn on_level_first_hit(
        &mut self,
        step: u64,
        level: u64,
        vertex: u32,
        sib_zero: bool,
        pi: u64,
        depth: u64,
        position: Vec<i64>,
    ) {
        debug_assert!(level > self.max_level_hit || (level == 0 && step == 0));
        self.max_level_hit = self.max_level_hit.max(level);
        if level >= self.min_next_level && sib_zero {
            self.stack.push(Candidate {
                step,
                level,
                vertex,
                pi,
                depth,
                position,
            });
            self.candidates_born += 1;
            self.min_next_level = level + 1;
        }
    }

    /// Surviving candidates as the confirmed regeneration sequence.
    pub fn finish(&self, horizon: u64, tail_buffer: u64) -> Vec<RegenerationRecord> {
        let cutoff = horizon.saturating_sub(tail_buffer);
        self.stack
            .iter()
            .enumerate()
            .map(|(i, c)| RegenerationRecord {
                k: i as u32 + 1,
                tau: c.step,
                lambda: c.level,
                pi: c.pi,
                depth_at_tau: c.depth,
                position: c.position.clone(),
                vertex: c.vertex,
                censored: c.step > cutoff,
            })
            .collect()
    }
}

/// Options for one walk run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub horizon: u64,
    pub tail_buffer: u64,
    /// Record the embedded position every `stride` steps.
    pub stride: u64,
    /// Extra exact steps at which depth and position are recorded.
    pub checkpoints: Vec<u64>,
}

impl RunOptions {
    pub fn new(horizon: u64, tail_buffer: u64) -> Self {
        Self {
            horizon,
            tail_buffer,
            stride: 64,
            checkpoints: Vec::new(),
        }
    }
}

/// Default horizon for a profile: long enough for tens of regenerations.
pub fn default_horizon(eps: f64) -> u64 {
    (50.0 / (eps * eps * eps)).ceil().max(1_000_000.0) as u64
}

/// Default trailing buffer: a tenth of the horizon or ten regeneration
/// time scales, whichever is larger.
pub fn default_tail_buffer(horizon: u64, eps: f64) -> u64 {
    let scale = (10.0 / (eps * eps * eps)).ceil() as u64;
    (horizon / 10).max(scale)
}

#[derive(Debug, Clone, Serialize)]
pub struct Checkpoint {
    pub step: u64,
    pub depth: u64,
    pub position: Vec<i64>,
}

/// Trajectory summary of one walk.
#[derive(Debug, Clone, Serialize)]
pub struct WalkRecord {
    pub horizon: u64,
    pub tail_buffer: u64,
    pub level_len: u64,
    pub dimension: usize,
    /// Depth change per step, one byte each.
    #[serde(skip)]
    pub depth_deltas: Vec<i8>,
    pub final_depth: u64,
    pub final_position: Vec<i64>,
    pub eta: Vec<LevelHit>,
    pub regenerations: Vec<RegenerationRecord>,
    pub stride: u64,
    /// Flat `d`-strided positions at steps `0, stride, 2 stride, ...`.
    #[serde(skip)]
    pub stride_positions: Vec<i64>,
    pub checkpoints: Vec<Checkpoint>,
    pub candidates_born: u64,
    pub candidates_killed: u64,
}

impl WalkRecord {
    pub fn uncensored(&self) -> impl Iterator<Item = &RegenerationRecord> {
        self.regenerations.iter().filter(|r| !r.censored)
    }

    /// Reconstruct the depth sequence (length `horizon + 1`).
    pub fn depths(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.depth_deltas.len() + 1);
        let mut d = 0i64;
        out.push(0);
        for &delta in &self.depth_deltas {
            d += delta as i64;
            out.push(d as u64);
        }
        out
    }
}

/// Run a fresh walk from the root for `opts.horizon` steps.
pub fn run_walk(
    tree: &mut LazyTree,
    embedding: &mut Embedding,
    rng: &mut ChaCha8Rng,
    opts: &RunOptions,
) -> Result<WalkRecord, WalkError> {
    let level_len = tree.level_len();
    let d = embedding.dimension();
    let mut detector = RegenDetector::new(level_len);
    let mut cur = tree.root();
    let mut depth = 0u64;
    let mut depth_mod = 0u64;
    let mut first_visit: Vec<u64> = vec![u64::MAX];
    first_visit[0] = 0;

    let mut deltas: Vec<i8> = Vec::with_capacity(opts.horizon as usize);
    let mut eta: Vec<LevelHit> = Vec::new();
    let mut stride_positions: Vec<i64> = Vec::new();
    let mut checkpoints: Vec<Checkpoint> = Vec::new();
    let mut checkpoint_iter = opts.checkpoints.iter().copied().peekable();

    tree.ensure_expanded(cur)?;
    stride_positions.extend_from_slice(embedding.position(cur));
    eta.push(LevelHit {
        level: 0,
        step: 0,
        vertex: cur,
        sib_zero: true,
    });
    while checkpoint_iter.peek() == Some(&0) {
        checkpoint_iter.next();
        checkpoints.push(Checkpoint {
            step: 0,
            depth: 0,
            position: embedding.position(cur).to_vec(),
        });
    }

    for n in 1..=opts.horizon {
        let vertex = tree.vertex(cur);
        let has_parent = vertex.parent != NO_VERTEX;
        let degree = tree.degree(cur);
        let i = rng.gen_range(0..degree);
        let moving_up = has_parent && i == 0;
        cur = tree.neighbor(cur, i);
        if moving_up {
            depth -= 1;
            deltas.push(-1);
            depth_mod = if depth_mod == 0 { level_len - 1 } else { depth_mod - 1 };
        } else {
            depth += 1;
            deltas.push(1);
            depth_mod += 1;
            if depth_mod == level_len {
                depth_mod = 0;
            }
        }
        tree.ensure_expanded(cur)?;
        embedding.embed_on_demand(tree, cur)?;
        if first_visit.len() < tree.len() {
            first_visit.resize(tree.len(), u64::MAX);
        }
        if first_visit[cur as usize] == u64::MAX {
            first_visit[cur as usize] = n;
        }

        detector.on_step(depth);
        if depth_mod == 0 && tree.is_backbone(cur) {
            let level = depth / level_len;
            if level > detector.max_level_hit {
                let sib_zero = tree.has_no_level_siblings(cur);
                let pi = first_visit[tree.level_ancestor(cur) as usize];
                eta.push(LevelHit {
                    level,
                    step: n,
                    vertex: cur,
                    sib_zero,
                });
                detector.on_level_first_hit(
                    n,
                    level,
                    cur,
                    sib_zero,
                    pi,
                    depth,
                    embedding.position(cur).to_vec(),
                );
            }
        }
        if n % opts.stride == 0 {
            stride_positions.extend_from_slice(embedding.position(cur));
        }
        while checkpoint_iter.peek() == Some(&n) {
            checkpoint_iter.next();
            checkpoints.push(Checkpoint {
                step: n,
                depth,
                position: embedding.position(cur).to_vec(),
            });
        }
    }

    Ok(WalkRecord {
        horizon: opts.horizon,
        tail_buffer: opts.tail_buffer,
        level_len,
        dimension: d,
        depth_deltas: deltas,
        final_depth: depth,
        final_position: embedding.position(cur).to_vec(),
        eta,
        regenerations: detector.finish(opts.horizon, opts.tail_buffer),
        stride: opts.stride,
        stride_positions,
        checkpoints,
        candidates_born: detector.candidates_born,
        candidates_killed: detector.candidates_killed,
    })
}

/// Check every recorded regeneration against the stored trajectory and
/// the grown tree: no-return holds to the horizon, the entry vertex has
/// no level siblings, the ancestor was hit strictly earlier, and the
/// backbone segment one level up is a bare line.
pub fn verify_regenerations(tree: &LazyTree, record: &WalkRecord) -> Result<(), VerifyError> {
    let depths = record.depths();
    let level_len = record.level_len;
    // Suffix minima of the depth sequence.
    let mut suffix_min = vec![u64::MAX; depths.len() + 1];
    for (i, &d) in depths.iter().enumerate().rev() {
        suffix_min[i] = d.min(suffix_min[i + 1]);
    }
    for regen in &record.regenerations {
        let k = regen.k;
        if regen.depth_at_tau != regen.lambda * level_len {
            return Err(VerifyError::DepthMismatch {
                k,
                got: regen.depth_at_tau,
                lambda: regen.lambda,
                level_len,
            });
        }
        if regen.pi >= regen.tau {
            return Err(VerifyError::AncestorOrder {
                k,
                pi: regen.pi,
                tau: regen.tau,
            });
        }
        let floor = (regen.lambda - 1) * level_len;
        let min_after = suffix_min[regen.tau as usize + 1];
        if min_after <= floor {
            return Err(VerifyError::NoReturnViolated {
                k,
                depth: min_after,
                floor,
            });
        }
        if !tree.has_no_level_siblings(regen.vertex) {
            return Err(VerifyError::SiblingViolated { k });
        }
        // The chain strictly between the level ancestor and the entry
        // vertex must be furcation-free backbone.
        let mut v = tree.vertex(regen.vertex).parent;
        for _ in 1..level_len {
            if !tree.is_backbone(v) || tree.vertex(v).backbone_children() != 1 {
                return Err(VerifyError::SegmentNotLine { k });
            }
            v = tree.vertex(v).parent;
        }
    }
    Ok(())
}

/// Replay the walk against the fully grown tree (same neighbor-choice
/// stream) and gather per-interval backbone-trace statistics. Also acts
/// as a determinism check: the replayed depth sequence must match the
/// record byte for byte.
pub fn bbt_statistics(
    tree: &LazyTree,
    embedding: &Embedding,
    rng: &mut ChaCha8Rng,
    record: &WalkRecord,
) -> Result<Vec<BbtRecord>, WalkError> {
    let mut boundaries: Vec<&RegenerationRecord> = record.regenerations.iter().collect();
    boundaries.sort_by_key(|r| r.tau);
    let mut out = Vec::with_capacity(boundaries.len());
    let mut epoch = vec![0u32; tree.len()];
    let mut cur = tree.root();
    let mut depth = 0u64;
    let mut interval = 0usize;
    let mut start_step = 0u64;
    let mut start_pos: Vec<i64> = embedding.position(cur).to_vec();
    let mut distinct = 1u64;
    let mut max_disp = 0.0f64;
    epoch[cur as usize] = 1;

    let mut flush =
        |interval: usize, start_step: u64, end: u64, distinct: u64, max_disp: f64, cens: bool| {
            out.push(BbtRecord {
                k: interval as u32 + 1,
                start_step,
                end_step: end,
                distinct_backbone: distinct,
                max_displacement: max_disp,
                censored: cens,
            });
        };

    for n in 1..=record.horizon {
        let vertex = tree.vertex(cur);
        let has_parent = vertex.parent != NO_VERTEX;
        let degree = tree.degree(cur);
        let i = rng.gen_range(0..degree);
        let moving_up = has_parent && i == 0;
        cur = tree.neighbor(cur, i);
        depth = if moving_up { depth - 1 } else { depth + 1 };
        let expect = record.depth_deltas[(n - 1) as usize];
        if (moving_up && expect != -1) || (!moving_up && expect != 1) {
            return Err(WalkError::ReplayDiverged(n));
        }
        if tree.is_backbone(cur) {
            if epoch[cur as usize] != interval as u32 + 1 {
                epoch[cur as usize] = interval as u32 + 1;
                distinct += 1;
            }
            let pos = embedding.position(cur);
            let mut sq = 0.0;
            for (a, b) in pos.iter().zip(&start_pos) {
                let diff = (a - b) as f64;
                sq += diff * diff;
            }
            max_disp = max_disp.max(sq.sqrt());
        }
        while interval < boundaries.len() && boundaries[interval].tau == n {
            flush(
                interval,
                start_step,
                n,
                distinct,
                max_disp,
                boundaries[interval].censored,
            );
            interval += 1;
            start_step = n;
            start_pos = embedding.position(cur).to_vec();
            distinct = 1;
            max_disp = 0.0;
            if epoch.len() < tree.len() {
                epoch.resize(tree.len(), 0);
            }
            epoch[cur as usize] = interval as u32 + 1;
        }
    }
    Ok(out)
}

/// Summary statistics of the regeneration sequence.
#[derive(Debug, Clone, Serialize)]
pub struct RegenStatistics {
    pub gap_count: usize,
    /// Raw time gaps between consecutive uncensored regenerations.
    pub mean_time_gap: f64,
    pub mean_dist_gap: f64,
    /// `(p - p_c)^3 * (tau_{k+1} - tau_k)` summary.
    pub scaled_time_mean: f64,
    pub scaled_time_var: f64,
    pub scaled_time_quartiles: [f64; 3],
    /// `(p - p_c) * (depth_{k+1} - depth_k)` summary.
    pub scaled_dist_mean: f64,
    pub scaled_dist_var: f64,
    pub scaled_dist_second_moment: f64,
    /// Lag-1..3 autocorrelations of the raw time gaps.
    pub time_autocorr: [f64; 3],
    /// Two-sample KS between first and second half of the time gaps.
    pub ks_halves_stat: f64,
    pub ks_halves_p: f64,
    /// Ratio of mean distance gap to mean time gap: a speed estimate.
    pub speed_from_gaps: f64,
}

/// Gap summaries over the uncensored regenerations of one or more runs.
/// The opening block before the first regeneration is excluded; its
/// marginal differs from the stationary gaps.
pub fn regeneration_statistics(
    records: &[&WalkRecord],
    eps: f64,
) -> Result<RegenStatistics, WalkError> {
    let mut time_gaps: Vec<f64> = Vec::new();
    let mut dist_gaps: Vec<f64> = Vec::new();
    for record in records {
        let regs: Vec<&RegenerationRecord> = record.uncensored().collect();
        for pair in regs.windows(2) {
            time_gaps.push((pair[1].tau - pair[0].tau) as f64);
            dist_gaps.push((pair[1].depth_at_tau - pair[0].depth_at_tau) as f64);
        }
    }
    if time_gaps.is_empty() {
        let found = records
            .iter()
            .map(|r| r.uncensored().count())
            .max()
            .unwrap_or(0);
        return Err(WalkError::InsufficientRegenerations { found, needed: 2 });
    }
    let eps3 = eps * eps * eps;
    let mut time_stats = crate::stats::RunningStats::new();
    let mut dist_stats = crate::stats::RunningStats::new();
    let mut scaled_dist_sq = crate::stats::RunningStats::new();
    for &g in &time_gaps {
        time_stats.push(g * eps3);
    }
    for &g in &dist_gaps {
        dist_stats.push(g * eps);
        scaled_dist_sq.push((g * eps) * (g * eps));
    }
    let mut sorted = time_stats_sorted(&time_gaps, eps3);
    sorted.sort_by(|a, b| a.total_cmp(b));
    let quartiles = [
        crate::stats::quantile(&sorted, 0.25),
        crate::stats::quantile(&sorted, 0.5),
        crate::stats::quantile(&sorted, 0.75),
    ];
    let half = time_gaps.len() / 2;
    let (ks_stat, ks_p) = if half >= 1 && time_gaps.len() - half >= 1 && time_gaps.len() >= 4 {
        let r = crate::stats::ks_two_sample(&time_gaps[..half], &time_gaps[half..]);
        (r.statistic, r.p_value)
    } else {
        (0.0, 1.0)
    };
    let mean_time = time_gaps.iter().sum::<f64>() / time_gaps.len() as f64;
    let mean_dist = dist_gaps.iter().sum::<f64>() / dist_gaps.len() as f64;
    Ok(RegenStatistics {
        gap_count: time_gaps.len(),
        mean_time_gap: mean_time,
        mean_dist_gap: mean_dist,
        scaled_time_mean: time_stats.mean(),
        scaled_time_var: time_stats.variance(),
        scaled_time_quartiles: quartiles,
        scaled_dist_mean: dist_stats.mean(),
        scaled_dist_var: dist_stats.variance(),
        scaled_dist_second_moment: scaled_dist_sq.mean(),
        time_autocorr: [
            crate::stats::autocorrelation(&time_gaps, 1),
            crate::stats::autocorrelation(&time_gaps, 2),
            crate::stats::autocorrelation(&time_gaps, 3),
        ],
        ks_halves_stat: ks_stat,
        ks_halves_p: ks_p,
        speed_from_gaps: mean_dist / mean_time,
    })
}

fn time_stats_sorted(gaps: &[f64], eps3: f64) -> Vec<f64> {
    gaps.iter().map(|g| g * eps3).collect()
}
