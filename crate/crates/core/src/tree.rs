//! Lazy survival-conditioned tree growth.
//!
//! The infinite percolated tree conditioned on survival decomposes into
//! a leafless backbone generated by `fhat` plus finite trap trees hung
//! off every backbone vertex. The arena materializes exactly the region
//! a walker explores: backbone child counts and trap bushes are sampled
//! on first demand and never resampled. An independent rejection
//! sampler of the plain percolated tree serves as a distributional
//! oracle for the decomposition.

use crate::analytics::{AnalyticProfile, OffspringLaw};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;
use thiserror::Error;

/// Default per-trap vertex budget.
pub const DEFAULT_TRAP_CAP: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("tree generation requires p > p_c (p = {p}, p_c = {p_c})")]
    Subcritical { p: f64, p_c: f64 },
    #[error("level length floor(L / (p - p_c)) = {0} must be at least 1")]
    DegenerateLevelLength(u64),
    #[error("vertex {0} is not materialized")]
    NotMaterialized(u32),
    #[error("vertex {0} is not on the backbone")]
    NotBackbone(u32),
    #[error("backbone children of vertex {0} already sampled")]
    AlreadyExpanded(u32),
    #[error("traps of vertex {0} already attached")]
    TrapsAlreadyAttached(u32),
    #[error("backbone children of vertex {0} not yet sampled")]
    NotYetExpanded(u32),
    #[error("trap exceeded cap of {cap} vertices (partial size {partial_size})")]
    TrapOverflow { cap: u64, partial_size: u64 },
    #[error("backbone level width exceeded cap of {0} vertices")]
    LevelWidthExceeded(u64),
}

const FLAG_BACKBONE: u8 = 1;
const FLAG_PRIMARY_SAMPLED: u8 = 2;
const FLAG_TRAPS_SAMPLED: u8 = 4;

pub const NO_VERTEX: u32 = u32::MAX;

/// Arena entry. Children live in two contiguous runs: the primary run
/// holds backbone children for backbone vertices (trap-tree children
/// for trap vertices), the extra run holds trap roots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vertex {
    pub parent: u32,
    pub depth: u32,
    flags: u8,
    primary_first: u32,
    primary_count: u16,
    extra_first: u32,
    extra_count: u16,
}

impl Vertex {
    pub fn is_backbone(&self) -> bool {
        self.flags & FLAG_BACKBONE != 0
    }

    pub fn primary_sampled(&self) -> bool {
        self.flags & FLAG_PRIMARY_SAMPLED != 0
    }

    pub fn traps_sampled(&self) -> bool {
        self.flags & FLAG_TRAPS_SAMPLED != 0
    }

    /// Backbone child count (only meaningful once sampled).
    pub fn backbone_children(&self) -> u16 {
        self.primary_count
    }

    pub fn primary_first(&self) -> u32 {
        self.primary_first
    }

    pub fn primary_count(&self) -> u16 {
        self.primary_count
    }

    pub fn extra_first(&self) -> u32 {
        self.extra_first
    }

    pub fn extra_count(&self) -> u16 {
        self.extra_count
    }
}

/// Aggregate description of the trap hung at one backbone vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrapSummary {
    pub trap_id: u32,
    pub root_backbone_vertex: u32,
    /// Vertex count including the backbone vertex itself.
    pub total_size: u64,
    /// Maximal generation below the attachment vertex.
    pub depth: u32,
    /// Number of attached trap trees.
    pub u_count: u16,
}

/// Cumulative distribution table for cheap inverse-CDF sampling.
#[derive(Debug, Clone)]
struct Cdf(Vec<f64>);

impl Cdf {
    fn from_law(law: &OffspringLaw) -> Self {
        let mut acc = 0.0;
        Cdf(law
            .probs()
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        match self.0.iter().position(|&c| u < c) {
            Some(k) => k,
            None => self.0.len() - 1,
        }
    }
}

/// Lazily grown survival-conditioned percolated tree.
pub struct LazyTree {
    profile: Arc<AnalyticProfile>,
    arena: Vec<Vertex>,
    traps: Vec<TrapSummary>,
    level_len: u64,
    l_scale: f64,
    trap_cap: u64,
    rng: ChaCha8Rng,
    fhat: Cdf,
    fstar: Cdf,
    trap_cdfs: Vec<Cdf>,
    trap_vertices: u64,
}

impl LazyTree {
    /// Create the tree with only the root materialized. Needs a strictly
    /// supercritical profile; `l_scale` is the level-scale parameter, so
    /// levels sit at depth multiples of `floor(l_scale / (p - p_c))`.
    pub fn new(
        profile: Arc<AnalyticProfile>,
        l_scale: f64,
        trap_cap: u64,
        rng: ChaCha8Rng,
    ) -> Result<Self, TreeError> {
        if !profile.is_supercritical() {
            return Err(TreeError::Subcritical {
                p: profile.p,
                p_c: profile.p_c,
            });
        }
        let level_len = (l_scale / profile.eps()).floor() as u64;
        if level_len < 1 {
            return Err(TreeError::DegenerateLevelLength(level_len));
        }
        let duals = profile.duals().expect("supercritical profile has duals");
        let fhat = Cdf::from_law(&duals.fhat);
        let fstar = Cdf::from_law(&duals.fstar);
        let trap_cdfs = (1..=profile.percolated.delta_max())
            .map(|delta| Cdf::from_law(profile.trap_law(delta).expect("delta in range")))
            .collect();
        let root = Vertex {
            parent: NO_VERTEX,
            depth: 0,
            flags: FLAG_BACKBONE,
            primary_first: 0,
            primary_count: 0,
            extra_first: 0,
            extra_count: 0,
        };
        Ok(Self {
            profile,
            arena: vec![root],
            traps: Vec::new(),
            level_len,
            l_scale,
            trap_cap,
            rng,
            fhat,
            fstar,
            trap_cdfs,
            trap_vertices: 0,
        })
    }

    pub fn profile(&self) -> &AnalyticProfile {
        &self.profile
    }

    pub fn level_len(&self) -> u64 {
        self.level_len
    }

    pub fn l_scale(&self) -> f64 {
        self.l_scale
    }

    pub fn len(&self) -> usize {
        self.arena.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn root(&self) -> u32 {
        0
    }

    pub fn vertex(&self, v: u32) -> &Vertex {
        &self.arena[v as usize]
    }

    pub fn is_backbone(&self, v: u32) -> bool {
        self.arena[v as usize].is_backbone()
    }

    pub fn depth(&self, v: u32) -> u32 {
        self.arena[v as usize].depth
    }

    pub fn traps(&self) -> &[TrapSummary] {
        &self.traps
    }

    /// Total vertices generated inside traps so far.
    pub fn trap_vertex_count(&self) -> u64 {
        self.trap_vertices
    }

    /// Sample the backbone child count of `v` from `fhat` and append the
    /// children. The count is always at least one.
    pub fn grow_backbone_child_count(&mut self, v: u32) -> Result<u16, TreeError> {
        let vertex = *self
            .arena
            .get(v as usize)
            .ok_or(TreeError::NotMaterialized(v))?;
        if !vertex.is_backbone() {
            return Err(TreeError::NotBackbone(v));
        }
        if vertex.primary_sampled() {
            return Err(TreeError::AlreadyExpanded(v));
        }
        let count = self.fhat.sample(&mut self.rng) as u16;
        debug_assert!(count >= 1, "backbone law has no mass at zero");
        let first = self.arena.len() as u32;
        for _ in 0..count {
            self.arena.push(Vertex {
                parent: v,
                depth: vertex.depth + 1,
                flags: FLAG_BACKBONE,
                primary_first: 0,
                primary_count: 0,
                extra_first: 0,
                extra_count: 0,
            });
        }
        let slot = &mut self.arena[v as usize];
        slot.primary_first = first;
        slot.primary_count = count;
        slot.flags |= FLAG_PRIMARY_SAMPLED;
        Ok(count)
    }

    /// Draw the trap count of `v` (given its backbone child count) and
    /// generate the attached trap trees in full.
    pub fn attach_traps(&mut self, v: u32) -> Result<TrapSummary, TreeError> {
        let vertex = *self
            .arena
            .get(v as usize)
            .ok_or(TreeError::NotMaterialized(v))?;
        if !vertex.is_backbone() {
            return Err(TreeError::NotBackbone(v));
        }
        if !vertex.primary_sampled() {
            return Err(TreeError::NotYetExpanded(v));
        }
        if vertex.traps_sampled() {
            return Err(TreeError::TrapsAlreadyAttached(v));
        }
        let delta = vertex.primary_count as usize;
        let u_count = self.trap_cdfs[delta - 1].sample(&mut self.rng) as u16;
        let first = self.arena.len() as u32;
        for _ in 0..u_count {
            self.arena.push(Vertex {
                parent: v,
                depth: vertex.depth + 1,
                flags: 0,
                primary_first: 0,
                primary_count: 0,
                extra_first: 0,
                extra_count: 0,
            });
        }
        {
            let slot = &mut self.arena[v as usize];
            slot.extra_first = first;
            slot.extra_count = u_count;
            slot.flags |= FLAG_TRAPS_SAMPLED;
        }
        // Generate the trap trees breadth-first; they are finite almost
        // surely, the cap only guards runaway memory.
        let mut total_size = 1 + u_count as u64;
        let mut max_depth = u32::from(u_count > 0);
        let mut queue: std::collections::VecDeque<u32> =
            (first..first + u_count as u32).collect();
        while let Some(x) = queue.pop_front() {
            let count = self.fstar.sample(&mut self.rng) as u16;
            let x_depth = self.arena[x as usize].depth;
            let child_first = self.arena.len() as u32;
            for _ in 0..count {
                self.arena.push(Vertex {
                    parent: x,
                    depth: x_depth + 1,
                    flags: 0,
                    primary_first: 0,
                    primary_count: 0,
                    extra_first: 0,
                    extra_count: 0,
                });
            }
            let slot = &mut self.arena[x as usize];
            slot.primary_first = child_first;
            slot.primary_count = count;
            slot.flags |= FLAG_PRIMARY_SAMPLED;
            total_size += count as u64;
            if count > 0 {
                max_depth = max_depth.max(x_depth + 1 - vertex.depth);
                queue.extend(child_first..child_first + count as u32);
            }
            if total_size > self.trap_cap {
                return Err(TreeError::TrapOverflow {
                    cap: self.trap_cap,
                    partial_size: total_size,
                });
            }
        }
        self.trap_vertices += total_size - 1;
        let summary = TrapSummary {
            trap_id: self.traps.len() as u32,
            root_backbone_vertex: v,
            total_size,
            depth: max_depth,
            u_count,
        };
        self.traps.push(summary);
        Ok(summary)
    }

    /// Make sure `v` has its full neighbor set: backbone children and
    /// trap roots sampled (trap vertices are always complete).
    pub fn ensure_expanded(&mut self, v: u32) -> Result<(), TreeError> {
        let vertex = self.arena[v as usize];
        if !vertex.is_backbone() {
            return Ok(());
        }
        if !vertex.primary_sampled() {
            self.grow_backbone_child_count(v)?;
        }
        if !self.arena[v as usize].traps_sampled() {
            self.attach_traps(v)?;
        }
        Ok(())
    }

    /// Neighbor count of a fully expanded vertex (parent plus children).
    pub fn degree(&self, v: u32) -> u32 {
        let vertex = &self.arena[v as usize];
        let parent = u32::from(vertex.parent != NO_VERTEX);
        parent + vertex.primary_count as u32 + vertex.extra_count as u32
    }

    /// The `i`-th neighbor: the parent first (when present), then
    /// primary children, then trap roots.
    pub fn neighbor(&self, v: u32, i: u32) -> u32 {
        let vertex = &self.arena[v as usize];
        let mut i = i;
        if vertex.parent != NO_VERTEX {
            if i == 0 {
                return vertex.parent;
            }
            i -= 1;
        }
        if i < vertex.primary_count as u32 {
            return vertex.primary_first + i;
        }
        vertex.extra_first + (i - vertex.primary_count as u32)
    }

    /// Level index of a backbone vertex at a level depth, otherwise None.
    pub fn level_of(&self, v: u32) -> Option<u64> {
        let vertex = &self.arena[v as usize];
        if vertex.is_backbone() && vertex.depth as u64 % self.level_len == 0 {
            Some(vertex.depth as u64 / self.level_len)
        } else {
            None
        }
    }

    /// All materialized members of level `m` (root for `m = 0`).
    pub fn members_of_level(&self, m: u64) -> Vec<u32> {
        (0..self.arena.len() as u32)
            .filter(|&v| self.level_of(v) == Some(m))
            .collect()
    }

    /// Ancestor of `v` exactly `level_len` generations up.
    pub fn level_ancestor(&self, v: u32) -> u32 {
        let mut cur = v;
        for _ in 0..self.level_len {
            cur = self.arena[cur as usize].parent;
            debug_assert_ne!(cur, NO_VERTEX);
        }
        cur
    }

    /// Whether a level vertex is the only member of the first level of
    /// its level-ancestor's subtree.
    ///
    /// The backbone has no leaves, so any furcation on the chain from
    /// the level ancestor down to `v` spawns a second line that reaches
    /// the level; conversely an all-single chain pins the subtree to
    /// that chain. The predicate therefore only inspects the `level_len`
    /// materialized ancestors of `v`.
    pub fn has_no_level_siblings(&self, v: u32) -> bool {
        let mut cur = v;
        for _ in 0..self.level_len {
            cur = self.arena[cur as usize].parent;
            debug_assert_ne!(cur, NO_VERTEX, "vertex above level 1 required");
            let anc = &self.arena[cur as usize];
            debug_assert!(anc.primary_sampled());
            if anc.primary_count != 1 {
                return false;
            }
        }
        true
    }

    /// Expand every backbone vertex above `depth`, so all vertices of
    /// generations `0..=depth` are materialized.
    pub fn materialize_to_depth(&mut self, depth: u32) -> Result<(), TreeError> {
        let mut cursor = 0usize;
        while cursor < self.arena.len() {
            let v = cursor as u32;
            if self.arena[cursor].is_backbone() && self.arena[cursor].depth < depth {
                self.ensure_expanded(v)?;
            }
            cursor += 1;
        }
        Ok(())
    }

    /// Number of materialized vertices at `depth`. Only meaningful after
    /// `materialize_to_depth(depth)`.
    pub fn generation_size(&self, depth: u32) -> u64 {
        self.arena.iter().filter(|v| v.depth == depth).count() as u64
    }

    /// Flat `(id, parent, depth, is_backbone)` rows for export.
    pub fn snapshot(&self, max_rows: usize) -> Vec<(u32, Option<u32>, u32, bool)> {
        self.arena
            .iter()
            .take(max_rows)
            .enumerate()
            .map(|(id, v)| {
                (
                    id as u32,
                    (v.parent != NO_VERTEX).then_some(v.parent),
                    v.depth,
                    v.is_backbone(),
                )
            })
            .collect()
    }
}

/// Sample a finite trap tree from the subcritical law, returned as a
/// parent table (entry 0 is the tree root with parent `None`).
pub fn sample_trap_tree<R: Rng>(
    fstar: &OffspringLaw,
    cap: u64,
    rng: &mut R,
) -> Result<Vec<Option<u32>>, TreeError> {
    let cdf = Cdf::from_law(fstar);
    let mut parents: Vec<Option<u32>> = vec![None];
    let mut cursor = 0usize;
    while cursor < parents.len() {
        let count = cdf.sample(rng);
        for _ in 0..count {
            parents.push(Some(cursor as u32));
        }
        if parents.len() as u64 > cap {
            return Err(TreeError::TrapOverflow {
                cap,
                partial_size: parents.len() as u64,
            });
        }
        cursor += 1;
    }
    Ok(parents)
}

/// Outcome of one attempt to sample a percolated tree surviving to the
/// requested depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectionOutcome {
    /// Generation sizes `Z_0..=Z_depth_cap` of a surviving tree.
    Accepted(Vec<u64>),
    Rejected,
}

/// Direct generation-by-generation sampler of the plain percolated
/// Galton-Watson tree, rejecting extinction before `depth_cap`. As the
/// cap grows the accepted law converges to the survival-conditioned
/// law; this is the oracle the decomposition is tested against.
pub fn rejection_sample_tree<R: Rng>(
    profile: &AnalyticProfile,
    depth_cap: u32,
    rng: &mut R,
) -> RejectionOutcome {
    let cdf = Cdf::from_law(&profile.percolated);
    let mut sizes = vec![1u64];
    let mut current = 1u64;
    for _ in 0..depth_cap {
        let mut next = 0u64;
        for _ in 0..current {
            next += cdf.sample(rng) as u64;
        }
        if next == 0 {
            return RejectionOutcome::Rejected;
        }
        sizes.push(next);
        current = next;
    }
    RejectionOutcome::Accepted(sizes)
}

/// Size of the first level of a freshly sampled backbone tree: grow only
/// backbone counts for `level_len` generations and count the members.
pub fn backbone_level_one_size<R: Rng>(
    profile: &AnalyticProfile,
    l_scale: f64,
    width_cap: u64,
    rng: &mut R,
) -> Result<u64, TreeError> {
    let level_len = (l_scale / profile.eps()).floor() as u64;
    if level_len < 1 {
        return Err(TreeError::DegenerateLevelLength(level_len));
    }
    let fhat = Cdf::from_law(&profile.duals().expect("supercritical").fhat);
    let mut width = 1u64;
    for _ in 0..level_len {
        let mut next = 0u64;
        for _ in 0..width {
            next += fhat.sample(rng) as u64;
        }
        if next > width_cap {
            return Err(TreeError::LevelWidthExceeded(width_cap));
        }
        width = next;
    }
    Ok(width)
}
