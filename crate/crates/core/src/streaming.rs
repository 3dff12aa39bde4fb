//! Merge-and-reduce composition of coresets over a stream of blocks.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, PointSet, Power, WeightedPointSet};
use crate::rng::derive_seed;
use crate::samplers::{build_coreset, SamplerSpec};

/// Parameters of a merge-and-reduce run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeTreePlan {
    pub k: usize,
    pub power: Power,
    /// Sampler used for leaves, merges and the final reduction; its seed is the root seed.
    pub sampler: SamplerSpec,
}

/// One coreset held by the tree and the blocks it summarizes.
#[derive(Clone, Debug)]
pub struct Retained {
    pub coreset: WeightedPointSet,
    pub blocks: Range<usize>,
    pub level: u32,
}

/// Binary-counter merge tree. Merges are performed lazily when the next block arrives, so
/// after `b` blocks at most `ceil(log2 b) + 1` coresets are retained.
#[derive(Clone, Debug)]
pub struct MergeTree {
    plan: MergeTreePlan,
    retained: Vec<Retained>,
    blocks_seen: usize,
    points_seen: f64,
    pub passthrough_blocks: Vec<usize>,
    pub merges: usize,
}

impl MergeTree {
    pub fn new(plan: MergeTreePlan) -> MergeTree {
        MergeTree {
            plan,
            retained: Vec::new(),
            blocks_seen: 0,
            points_seen: 0.0,
            passthrough_blocks: Vec::new(),
            merges: 0,
        }
    }

    fn node_seed(&self, level: u32, first_block: usize) -> u64 {
        if level == 0 && first_block == 0 {
            return self.plan.sampler.seed;
        }
        derive_seed(derive_seed(self.plan.sampler.seed, level as u64 + 1), first_block as u64)
    }

    fn reduce<D: Dataset + ?Sized>(&self, data: &D, seed: u64) -> Result<WeightedPointSet> {
        let spec = self.plan.sampler.with_seed(seed);
        Ok(build_coreset(data, self.plan.k, self.plan.power, &spec)?.coreset)
    }

    pub fn push(&mut self, block: &PointSet) -> Result<()> {
        if let Some(first) = self.retained.first() {
            if first.coreset.points().d() != block.d() {
                return Err(Error::DimensionMismatch { expected: first.coreset.points().d(), actual: block.d() });
            }
        }
        while self.retained.len() >= 2 {
            let last = &self.retained[self.retained.len() - 1];
            let prev = &self.retained[self.retained.len() - 2];
            if last.level != prev.level {
                break;
            }
            let b = self.retained.pop().unwrap();
            let a = self.retained.pop().unwrap();
            let merged = WeightedPointSet::concat(&[&a.coreset, &b.coreset])?;
            let level = a.level + 1;
            let seed = self.node_seed(level, a.blocks.start);
            let coreset = if merged.len() > self.plan.sampler.m { self.reduce(&merged, seed)? } else { merged };
            self.merges += 1;
            self.retained.push(Retained { coreset, blocks: a.blocks.start..b.blocks.end, level });
        }
        let index = self.blocks_seen;
        let coreset = if block.n() < self.plan.sampler.m {
            log::info!("block {index} has {} < m points; kept whole", block.n());
            self.passthrough_blocks.push(index);
            WeightedPointSet::unit(block.clone())
        } else {
            self.reduce(block, self.node_seed(0, index))?
        };
        self.retained.push(Retained { coreset, blocks: index..index + 1, level: 0 });
        self.blocks_seen += 1;
        self.points_seen += block.n() as f64;
        Ok(())
    }

    pub fn retained(&self) -> &[Retained] {
        &self.retained
    }

    pub fn blocks_seen(&self) -> usize {
        self.blocks_seen
    }

    pub fn points_seen(&self) -> f64 {
        self.points_seen
    }

    /// Concatenates everything retained and reduces it once more (a single retained
    /// coreset is returned as is).
    pub fn finalize(mut self) -> Result<WeightedPointSet> {
        match self.retained.len() {
            0 => Err(Error::invalid("the stream contained no blocks")),
            1 => Ok(self.retained.pop().unwrap().coreset),
            _ => {
                let parts: Vec<&WeightedPointSet> = self.retained.iter().map(|r| &r.coreset).collect();
                let all = WeightedPointSet::concat(&parts)?;
                self.reduce(&all, derive_seed(self.plan.sampler.seed, u64::MAX))
            }
        }
    }
}

/// Runs the merge tree over all blocks and returns the final coreset.
pub fn stream_coreset<'a, I>(blocks: I, plan: &MergeTreePlan) -> Result<WeightedPointSet>
where
    I: IntoIterator<Item = &'a PointSet>,
{
    let mut tree = MergeTree::new(*plan);
    for b in blocks {
        tree.push(b)?;
    }
    tree.finalize()
}

/// Splits a point set into consecutive blocks of `block_size` rows (the last may be
/// shorter).
pub fn split_blocks(data: &PointSet, block_size: usize) -> Result<Vec<PointSet>> {
    if block_size == 0 {
        return Err(Error::invalid("block size must be at least 1"));
    }
    let d = data.d();
    Ok(data.as_slice().chunks(block_size * d).map(|c| PointSet::from_raw(d, c.to_vec())).collect())
}

/// Default block size: the data split into 8 blocks.
pub fn default_block_size(n: usize) -> usize {
    n.div_ceil(8).max(1)
}

/// Union of several coresets followed by one reduction.
pub fn compose(parts: &[&WeightedPointSet], k: usize, power: Power, sampler: &SamplerSpec) -> Result<WeightedPointSet> {
    let all = WeightedPointSet::concat(parts)?;
    Ok(build_coreset(&all, k, power, sampler)?.coreset)
}
