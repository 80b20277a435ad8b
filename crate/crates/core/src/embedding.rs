//! Lattice embedding of the tree: every edge carries an i.i.d. zero-mean
//! displacement step, and a vertex position is the step sum along its
//! root path. Positions are memoized per vertex, so each edge is sampled
//! exactly once ever.

use crate::tree::LazyTree;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("unknown step family {found:?}; known families: {known:?}")]
    UnknownFamily { found: String, known: &'static [&'static str] },
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("parent of vertex {0} is not embedded yet")]
    ParentNotEmbedded(u32),
    #[error("coordinate overflow while embedding")]
    CoordinateOverflow,
}

pub const KNOWN_FAMILIES: &[&str] = &["srw", "cube_uniform"];

/// Config-facing description of a step law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLawSpec {
    pub family: String,
    pub d: usize,
}

impl Default for StepLawSpec {
    fn default() -> Self {
        Self { family: "srw".into(), d: 1 }
    }
}

/// A zero-mean, bounded-support step distribution on the lattice.
///
/// Bounded support keeps every exponential moment finite, which is the
/// regime all the quantitative predictions assume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepLaw {
    /// Nearest-neighbor step: one of the `2d` unit vectors, uniformly.
    Srw { d: usize },
    /// Independent coordinates, each uniform on `{-1, 0, 1}`.
    CubeUniform { d: usize },
}

impl StepLaw {
    pub fn from_spec(spec: &StepLawSpec) -> Result<Self, EmbeddingError> {
        if spec.d == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        match spec.family.as_str() {
            "srw" => Ok(StepLaw::Srw { d: spec.d }),
            "cube_uniform" => Ok(StepLaw::CubeUniform { d: spec.d }),
            other => Err(EmbeddingError::UnknownFamily {
                found: other.to_string(),
                known: KNOWN_FAMILIES,
            }),
        }
    }

    pub fn dimension(&self) -> usize {
        match *self {
            StepLaw::Srw { d } | StepLaw::CubeUniform { d } => d,
        }
    }

    /// Diagonal of the step covariance matrix (off-diagonals are zero
    /// for both shipped families).
    pub fn covariance_diag(&self) -> Vec<f64> {
        match *self {
            StepLaw::Srw { d } => vec![1.0 / d as f64; d],
            StepLaw::CubeUniform { d } => vec![2.0 / 3.0; d],
        }
    }

    /// Draw one step into `out`.
    pub fn sample_step<R: Rng>(&self, rng: &mut R, out: &mut [i64]) {
        match *self {
            StepLaw::Srw { d } => {
                out.fill(0);
                let axis = rng.gen_range(0..d);
                out[axis] = if rng.gen::<bool>() { 1 } else { -1 };
            }
            StepLaw::CubeUniform { d } => {
                for slot in out.iter_mut().take(d) {
                    *slot = rng.gen_range(-1i64..=1);
                }
            }
        }
    }
}

/// Memoized per-vertex positions, kept in lockstep with a tree arena.
pub struct Embedding {
    law: StepLaw,
    rng: ChaCha8Rng,
    /// Flat `d`-strided coordinates indexed by vertex id.
    coords: Vec<i64>,
    embedded: Vec<bool>,
    scratch: Vec<i64>,
}

impl Embedding {
    pub fn new(law: StepLaw, rng: ChaCha8Rng) -> Self {
        let d = law.dimension();
        let mut e = Self {
            law,
            rng,
            coords: Vec::new(),
            embedded: Vec::new(),
            scratch: vec![0; d],
        };
        // The root sits at the origin.
        e.grow_to(1);
        e.embedded[0] = true;
        e
    }

    pub fn law(&self) -> &StepLaw {
        &self.law
    }

    pub fn dimension(&self) -> usize {
        self.law.dimension()
    }

    fn grow_to(&mut self, len: usize) {
        if self.embedded.len() < len {
            self.embedded.resize(len, false);
            self.coords.resize(len * self.dimension(), 0);
        }
    }

    pub fn is_embedded(&self, v: u32) -> bool {
        self.embedded.get(v as usize).copied().unwrap_or(false)
    }

    pub fn position(&self, v: u32) -> &[i64] {
        debug_assert!(self.is_embedded(v));
        let d = self.dimension();
        &self.coords[v as usize * d..(v as usize + 1) * d]
    }

    /// Position of `v`, sampling the edge step from its parent on first
    /// use. The parent must already be embedded, which holds whenever
    /// vertices are visited along tree paths from the root.
    pub fn embed_on_demand(&mut self, tree: &LazyTree, v: u32) -> Result<&[i64], EmbeddingError> {
        let d = self.dimension();
        self.grow_to(tree.len());
        if !self.embedded[v as usize] {
            let parent = tree.vertex(v).parent;
            if parent == crate::tree::NO_VERTEX || !self.embedded[parent as usize] {
                return Err(EmbeddingError::ParentNotEmbedded(v));
            }
            self.law.sample_step(&mut self.rng, &mut self.scratch);
            for i in 0..d {
                let base = self.coords[parent as usize * d + i];
                self.coords[v as usize * d + i] = base
                    .checked_add(self.scratch[i])
                    .ok_or(EmbeddingError::CoordinateOverflow)?;
            }
            self.embedded[v as usize] = true;
        }
        Ok(self.position(v))
    }

    /// Embed a whole materialized subtree below `root` (which must be
    /// embedded). Arena ids of descendants always exceed their parent's
    /// id, so one forward sweep suffices.
    pub fn embed_subtree(&mut self, tree: &LazyTree, root: u32) -> Result<(), EmbeddingError> {
        self.grow_to(tree.len());
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            if v != root {
                self.embed_on_demand(tree, v)?;
            }
            let vx = tree.vertex(v);
            if vx.primary_sampled() {
                stack.extend(vx.primary_first()..vx.primary_first() + vx.primary_count() as u32);
            }
            stack.extend(vx.extra_first()..vx.extra_first() + vx.extra_count() as u32);
        }
        Ok(())
    }
}

/// Euclidean norm of an integer vector.
pub fn norm(xs: &[i64]) -> f64 {
    xs.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{AnalyticProfile, OffspringLaw};
    use crate::rng::{stream_rng, Stream};
    use crate::stats::RunningStats;
    use crate::tree::{LazyTree, DEFAULT_TRAP_CAP};
    use std::sync::Arc;

    fn srw(d: usize) -> StepLaw {
        StepLaw::Srw { d }
    }

    #[test]
    fn family_parsing() {
        assert_eq!(
            StepLaw::from_spec(&StepLawSpec { family: "srw".into(), d: 2 }).unwrap(),
            StepLaw::Srw { d: 2 }
        );
        assert_eq!(
            StepLaw::from_spec(&StepLawSpec { family: "cube_uniform".into(), d: 3 }).unwrap(),
            StepLaw::CubeUniform { d: 3 }
        );
        let err = StepLaw::from_spec(&StepLawSpec { family: "gauss".into(), d: 1 });
        assert!(matches!(err, Err(EmbeddingError::UnknownFamily { .. })));
        assert!(StepLaw::from_spec(&StepLawSpec { family: "srw".into(), d: 0 }).is_err());
    }

    #[test]
    fn covariance_diagonals() {
        assert_eq!(srw(1).covariance_diag(), vec![1.0]);
        assert_eq!(srw(2).covariance_diag(), vec![0.5, 0.5]);
        let cube = StepLaw::CubeUniform { d: 2 }.covariance_diag();
        assert!((cube[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn step_moments_match_law() {
        for law in [srw(2), StepLaw::CubeUniform { d: 2 }] {
            let mut rng = stream_rng(1, 0, Stream::Embedding);
            let mut out = vec![0i64; 2];
            let n = 200_000;
            let mut mean = [RunningStats::new(), RunningStats::new()];
            let mut sq = [RunningStats::new(), RunningStats::new()];
            let mut cross = RunningStats::new();
            for _ in 0..n {
                law.sample_step(&mut rng, &mut out);
                for i in 0..2 {
                    mean[i].push(out[i] as f64);
                    sq[i].push((out[i] * out[i]) as f64);
                }
                cross.push((out[0] * out[1]) as f64);
            }
            let diag = law.covariance_diag();
            for i in 0..2 {
                assert!(mean[i].mean().abs() <= 3.0 * mean[i].se());
                assert!((sq[i].mean() - diag[i]).abs() <= 3.0 * sq[i].se());
            }
            // The nearest-neighbor family has identically zero cross
            // products, hence zero standard error.
            assert!(cross.mean().abs() <= 3.0 * cross.se() + 1e-12);
        }
    }

    fn chain_tree(p: f64, len: u32, seed: u64) -> (LazyTree, Vec<u32>) {
        let profile = Arc::new(AnalyticProfile::new(OffspringLaw::point_mass(2), p).unwrap());
        let mut tree = LazyTree::new(
            profile,
            2.0,
            DEFAULT_TRAP_CAP,
            stream_rng(seed, 0, Stream::TreeGrowth),
        )
        .unwrap();
        let mut path = vec![tree.root()];
        let mut v = tree.root();
        for _ in 0..len {
            tree.grow_backbone_child_count(v).unwrap();
            v = tree.vertex(v).primary_first();
            path.push(v);
        }
        (tree, path)
    }

    #[test]
    fn root_is_origin_and_memoized() {
        let (tree, path) = chain_tree(0.6, 5, 2);
        let mut emb = Embedding::new(srw(2), stream_rng(2, 0, Stream::Embedding));
        assert_eq!(emb.position(tree.root()), &[0, 0]);
        let mut first = Vec::new();
        for &v in &path {
            first = emb.embed_on_demand(&tree, v).unwrap().to_vec();
        }
        let again = emb.embed_on_demand(&tree, *path.last().unwrap()).unwrap();
        assert_eq!(first.as_slice(), again);
    }

    #[test]
    fn embedding_requires_parent_first() {
        let (tree, path) = chain_tree(0.6, 4, 3);
        let mut emb = Embedding::new(srw(1), stream_rng(3, 0, Stream::Embedding));
        assert!(matches!(
            emb.embed_on_demand(&tree, path[3]),
            Err(EmbeddingError::ParentNotEmbedded(_))
        ));
        for &v in &path {
            emb.embed_on_demand(&tree, v).unwrap();
        }
    }

    #[test]
    fn chain_marginal_is_random_walk() {
        // Embedding a length-k path: mean 0 and variance k per replica set.
        let k = 16u32;
        let mut endpoint = RunningStats::new();
        let mut endpoint_sq = RunningStats::new();
        for rep in 0..20_000u64 {
            let (tree, path) = chain_tree(0.6, k, 1000);
            let mut emb = Embedding::new(srw(1), stream_rng(17, rep, Stream::Embedding));
            let mut last = 0i64;
            for &v in &path {
                last = emb.embed_on_demand(&tree, v).unwrap()[0];
            }
            endpoint.push(last as f64);
            endpoint_sq.push((last * last) as f64);
        }
        assert!(endpoint.mean().abs() < 3.0 * endpoint.se());
        assert!((endpoint_sq.mean() - k as f64).abs() < 3.0 * endpoint_sq.se());
    }

    #[test]
    fn sibling_increments_are_independent() {
        // Two children of the root: empirical covariance of their steps
        // vanishes.
        let profile = Arc::new(AnalyticProfile::new(OffspringLaw::point_mass(2), 1.0).unwrap());
        let mut cross = RunningStats::new();
        for rep in 0..50_000u64 {
            let mut tree = LazyTree::new(
                profile.clone(),
                10.0,
                DEFAULT_TRAP_CAP,
                stream_rng(23, rep, Stream::TreeGrowth),
            )
            .unwrap();
            tree.grow_backbone_child_count(tree.root()).unwrap();
            let first = tree.vertex(tree.root()).primary_first();
            let mut emb = Embedding::new(srw(1), stream_rng(29, rep, Stream::Embedding));
            let a = emb.embed_on_demand(&tree, first).unwrap()[0];
            let b = emb.embed_on_demand(&tree, first + 1).unwrap()[0];
            cross.push((a * b) as f64);
        }
        assert!(cross.mean().abs() < 3.0 * cross.se(), "cov {}", cross.mean());
    }
}
