use std::ops::Range;

use rayon::prelude::*;

use super::adaptive::{adaptive_context, AdaptiveCounts};
use super::{EntropyModel, NeuralModel, NodeFeature, SymbolDistribution};
use crate::coder::freq::{quantize_distribution, FrequencyTable};
use crate::error::{Error, Result};
use crate::octree::CellIndex;
use crate::voxel::{face_neighbors, local_crop, temporal_context, Crop, TemporalGrids, VoxelGrid};

/// Everything the decoder knows when it reaches depth `k` of a frame.
#[derive(Clone, Copy, Debug)]
pub struct LevelContext<'a> {
    pub max_depth: u8,
    /// Depth-`k` cells in canonical order.
    pub cells: &'a [CellIndex],
    /// Occupancy symbol of each cell's parent (0 at the root).
    pub parent_symbols: &'a [u8],
    /// Depth-`k` grid of the frame being coded.
    pub grid: &'a VoxelGrid,
    pub temporal: TemporalGrids<'a>,
}

impl LevelContext<'_> {
    /// Context crops of cell `i`: one crop, or four for a dynamic model.
    pub fn crops(&self, i: usize, crop: usize, child_crop: usize) -> Result<Vec<Crop>> {
        let c = self.cells[i];
        if child_crop == 0 {
            Ok(vec![local_crop(self.grid, c, crop)?])
        } else {
            let t = temporal_context(c, self.grid, self.temporal, crop, child_crop)?;
            Ok(vec![t.current, t.prev, t.next, t.prev_child])
        }
    }

    pub fn feature(&self, i: usize) -> NodeFeature {
        NodeFeature::new(self.cells[i], self.max_depth)
    }
}

/// Per-stream model state. Prepare a range of a level, then query and
/// observe its symbols in order.
#[derive(Debug)]
pub struct ModelSession<'m> {
    model: &'m EntropyModel,
    uniform: FrequencyTable,
    counts: AdaptiveCounts,
    start: usize,
    contexts: Vec<u32>,
    dists: Vec<SymbolDistribution>,
}

impl<'m> ModelSession<'m> {
    pub fn new(model: &'m EntropyModel) -> Self {
        ModelSession {
            model,
            uniform: FrequencyTable::uniform(),
            counts: AdaptiveCounts::default(),
            start: 0,
            contexts: Vec::new(),
            dists: Vec::new(),
        }
    }

    pub fn model(&self) -> &EntropyModel {
        self.model
    }

    /// Computes the contexts of `range` within the level. Neural predictions
    /// for the range run in parallel; each is independent of the others.
    pub fn prepare(&mut self, ctx: &LevelContext<'_>, range: Range<usize>) -> Result<()> {
        if range.end > ctx.cells.len() || ctx.parent_symbols.len() != ctx.cells.len() {
            return Err(Error::Shape("level context arrays disagree".into()));
        }
        self.start = range.start;
        self.contexts.clear();
        self.dists.clear();
        match self.model {
            EntropyModel::Uniform => {}
            EntropyModel::Adaptive { context_bits } => {
                for i in range {
                    let c = ctx.cells[i];
                    self.contexts.push(adaptive_context(
                        ctx.parent_symbols[i],
                        c.child_slot(),
                        face_neighbors(ctx.grid, c),
                        *context_bits,
                    ));
                }
            }
            EntropyModel::Neural(m) => {
                self.dists = range
                    .into_par_iter()
                    .map(|i| predict_cell(m, ctx, i))
                    .collect::<Result<Vec<_>>>()?;
            }
        }
        Ok(())
    }

    fn slot(&self, i: usize) -> usize {
        i.checked_sub(self.start)
            .expect("index before prepared range")
    }

    pub fn probability(&self, i: usize, s: u8) -> f64 {
        match self.model {
            EntropyModel::Uniform => 1.0 / 255.0,
            EntropyModel::Adaptive { .. } => {
                self.counts.probability(self.contexts[self.slot(i)], s)
            }
            EntropyModel::Neural(_) => self.dists[self.slot(i)].p(s),
        }
    }

    pub fn distribution(&self, i: usize) -> SymbolDistribution {
        match self.model {
            EntropyModel::Uniform => SymbolDistribution::uniform(),
            EntropyModel::Adaptive { .. } => SymbolDistribution(Box::new(
                self.counts.distribution(self.contexts[self.slot(i)]),
            )),
            EntropyModel::Neural(_) => self.dists[self.slot(i)].clone(),
        }
    }

    pub fn table(&self, i: usize) -> FrequencyTable {
        match self.model {
            EntropyModel::Uniform => self.uniform.clone(),
            EntropyModel::Adaptive { .. } => {
                quantize_distribution(&self.counts.distribution(self.contexts[self.slot(i)]))
            }
            EntropyModel::Neural(_) => quantize_distribution(self.dists[self.slot(i)].probs()),
        }
    }

    pub fn observe(&mut self, i: usize, s: u8) {
        if let EntropyModel::Adaptive { .. } = self.model {
            let ctx = self.contexts[self.slot(i)];
            self.counts.observe(ctx, s);
        }
    }

    /// Count tables of an adaptive session.
    pub fn counts(&self) -> &AdaptiveCounts {
        &self.counts
    }
}

fn predict_cell(m: &NeuralModel, ctx: &LevelContext<'_>, i: usize) -> Result<SymbolDistribution> {
    let crops: Vec<Vec<f64>> = ctx
        .crops(i, m.crop(), m.child_crop())?
        .iter()
        .map(Crop::to_f64)
        .collect();
    let refs: Vec<&[f64]> = crops.iter().map(Vec::as_slice).collect();
    m.predict(&refs, &ctx.feature(i))
}

/// Symbol of each cell's parent, looked up in the sorted parent level.
pub(crate) fn parent_symbols(
    cells: &[CellIndex],
    parents: &[CellIndex],
    symbols: &[u8],
) -> Vec<u8> {
    cells
        .iter()
        .map(|c| {
            let p = c.parent().expect("non-root cell");
            let j = parents.binary_search(&p).expect("parent present");
            symbols[j]
        })
        .collect()
}
