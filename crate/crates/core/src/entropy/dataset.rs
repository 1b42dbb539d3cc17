//! Node datasets drawn from octrees, and training of voxel-context models.

use rayon::prelude::*;

use super::adaptive::{adaptive_context, AdaptiveCounts};
use super::session::{parent_symbols, LevelContext};
use super::{EntropyModel, NeuralModel, NodeFeature};
use crate::error::{Error, Result};
use crate::nn::{fit, softmax_cross_entropy, Cache, TrainConfig, TrainReport};
use crate::octree::{CellIndex, Octree};
use crate::rng::Prng;
use crate::voxel::{face_neighbors, TemporalGrids, VoxelGrid};

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSample {
    pub cell: CellIndex,
    /// One crop, or current/previous/next/previous-finer for sequences.
    pub crops: Vec<Vec<u8>>,
    pub feature: NodeFeature,
    pub parent_symbol: u8,
    pub neighbours: u8,
    pub symbol: u8,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeDataset {
    pub crop: usize,
    /// 0 for single-frame samples.
    pub child_crop: usize,
    pub samples: Vec<NodeSample>,
}

impl NodeDataset {
    /// One sample per non-leaf node of every tree, in coding order.
    pub fn from_octrees(trees: &[Octree], crop: usize) -> Result<NodeDataset> {
        let mut data = NodeDataset {
            crop,
            child_crop: 0,
            samples: Vec::new(),
        };
        for t in trees {
            data.push_sequence(std::slice::from_ref(t))?;
        }
        Ok(data)
    }

    /// Samples with temporal crops from each sequence of co-normalized frames.
    pub fn from_sequences(
        seqs: &[Vec<Octree>],
        crop: usize,
        child_crop: usize,
    ) -> Result<NodeDataset> {
        if child_crop == 0 {
            return Err(Error::InvalidArgument(
                "child crop size must be positive".into(),
            ));
        }
        let mut data = NodeDataset {
            crop,
            child_crop,
            samples: Vec::new(),
        };
        for s in seqs {
            data.push_sequence(s)?;
        }
        Ok(data)
    }

    fn push_sequence(&mut self, frames: &[Octree]) -> Result<()> {
        let Some(first) = frames.first() else {
            return Ok(());
        };
        let depth = first.max_depth();
        if frames.iter().any(|f| f.max_depth() != depth) {
            return Err(Error::InvalidArgument(
                "frames have different depths".into(),
            ));
        }
        let grids: Vec<Vec<VoxelGrid>> = frames
            .iter()
            .map(|f| (0..=depth).map(|k| VoxelGrid::from_level(f, k)).collect())
            .collect::<Result<_>>()?;
        for k in 0..depth {
            for (t, tree) in frames.iter().enumerate() {
                let cells = tree.level(k);
                let parents = if k == 0 {
                    vec![0]
                } else {
                    parent_symbols(cells, tree.level(k - 1), tree.symbols(k - 1))
                };
                let temporal = if self.child_crop == 0 {
                    TemporalGrids::default()
                } else {
                    TemporalGrids {
                        prev: t.checked_sub(1).map(|p| &grids[p][k as usize]),
                        next: grids.get(t + 1).map(|g| &g[k as usize]),
                        prev_child: t.checked_sub(1).map(|p| &grids[p][k as usize + 1]),
                    }
                };
                let ctx = LevelContext {
                    max_depth: depth,
                    cells,
                    parent_symbols: &parents,
                    grid: &grids[t][k as usize],
                    temporal,
                };
                let symbols = tree.symbols(k);
                let samples = (0..cells.len())
                    .into_par_iter()
                    .map(|i| {
                        Ok(NodeSample {
                            cell: cells[i],
                            crops: ctx
                                .crops(i, self.crop, self.child_crop)?
                                .into_iter()
                                .map(|c| c.values)
                                .collect(),
                            feature: ctx.feature(i),
                            parent_symbol: parents[i],
                            neighbours: face_neighbors(ctx.grid, cells[i]),
                            symbol: symbols[i],
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                self.samples.extend(samples);
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Seeded random subset of at most `n` samples (original order kept).
    pub fn subsample(&self, n: usize, seed: u64) -> NodeDataset {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        Prng::new(seed).shuffle(&mut idx);
        idx.truncate(n);
        idx.sort_unstable();
        self.select(&idx)
    }

    /// Seeded split into `(train, held_out)`; `held_out` gets `fraction` of samples.
    pub fn split(&self, fraction: f64, seed: u64) -> (NodeDataset, NodeDataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        Prng::new(seed).shuffle(&mut idx);
        let n_test = ((self.len() as f64) * fraction).round() as usize;
        let (test, train) = idx.split_at(n_test.min(self.len()));
        let (mut train, mut test) = (train.to_vec(), test.to_vec());
        train.sort_unstable();
        test.sort_unstable();
        (self.select(&train), self.select(&test))
    }

    fn select(&self, idx: &[usize]) -> NodeDataset {
        NodeDataset {
            crop: self.crop,
            child_crop: self.child_crop,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    fn inputs(&self, m: &NeuralModel, i: usize) -> Vec<Vec<f64>> {
        let s = &self.samples[i];
        let n = if m.is_dynamic() { 4 } else { 1 };
        s.crops[..n]
            .iter()
            .map(|c| c.iter().map(|&v| v as f64).collect())
            .collect()
    }

    fn check_model(&self, m: &NeuralModel) -> Result<()> {
        let ok = m.crop() == self.crop && (!m.is_dynamic() || m.child_crop() == self.child_crop);
        if !ok {
            return Err(Error::Shape(format!(
                "model crops ({}, {}) do not match dataset crops ({}, {})",
                m.crop(),
                m.child_crop(),
                self.crop,
                self.child_crop
            )));
        }
        Ok(())
    }
}

/// Minimizes the mean cross-entropy (nats) of the true symbols.
pub fn train_entropy(
    model: &mut NeuralModel,
    data: &NodeDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    data.check_model(model)?;
    let template = model.clone();
    let sample_loss = |p: &crate::nn::ModelParams, i: usize, cache: Option<&mut Cache>| {
        let crops = data.inputs(&template, i);
        let refs: Vec<&[f64]> = crops.iter().map(Vec::as_slice).collect();
        let s = &data.samples[i];
        let out = p.forward(&refs, &s.feature.to_array(), cache)?;
        softmax_cross_entropy(&out, s.symbol as usize - 1)
    };
    fit(
        model.params_mut(),
        data.len(),
        cfg,
        |p, i, grads| {
            let mut cache = Cache::default();
            let (loss, mut g) = sample_loss(p, i, Some(&mut cache))?;
            g[data.samples[i].symbol as usize - 1] -= 1.0;
            p.backward(&cache, &g, grads, false)?;
            Ok(loss)
        },
        |p, i| Ok(sample_loss(p, i, None)?.0),
    )
}

/// Mean code length in bits per symbol of the dataset's true symbols. The
/// adaptive model is replayed over the samples in order.
pub fn dataset_cross_entropy(model: &EntropyModel, data: &NodeDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let bits: f64 = match model {
        EntropyModel::Uniform => data.len() as f64 * 255f64.log2(),
        EntropyModel::Adaptive { context_bits } => {
            let mut counts = AdaptiveCounts::default();
            let mut total = 0.0;
            for s in &data.samples {
                let ctx = adaptive_context(
                    s.parent_symbol,
                    s.cell.child_slot(),
                    s.neighbours,
                    *context_bits,
                );
                total -= counts.probability(ctx, s.symbol).log2();
                counts.observe(ctx, s.symbol);
            }
            total
        }
        EntropyModel::Neural(m) => {
            data.check_model(m)?;
            let per = (0..data.len())
                .into_par_iter()
                .map(|i| {
                    let crops = data.inputs(m, i);
                    let refs: Vec<&[f64]> = crops.iter().map(Vec::as_slice).collect();
                    let s = &data.samples[i];
                    Ok(-m.predict(&refs, &s.feature)?.p(s.symbol).log2())
                })
                .collect::<Result<Vec<f64>>>()?;
            per.iter().sum()
        }
    };
    Ok(bits / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::super::Architecture;
    use super::*;
    use crate::pointcloud::PointCloud;

    fn full_tree(depth: u8) -> Octree {
        let n = 1u32 << depth;
        let mut pts = Vec::new();
        for x in 0..n {
            for y in 0..n {
                for z in 0..n {
                    let c = |v: u32| (v as f64 + 0.5) / n as f64;
                    pts.push([c(x), c(y), c(z)]);
                }
            }
        }
        Octree::build(&PointCloud::new(pts), depth).unwrap()
    }

    #[test]
    fn dataset_covers_every_symbol_in_order() {
        let tree = full_tree(3);
        let d = NodeDataset::from_octrees(std::slice::from_ref(&tree), 5).unwrap();
        assert_eq!(d.len(), tree.symbol_count());
        let syms: Vec<u8> = d.samples.iter().map(|s| s.symbol).collect();
        assert_eq!(syms, tree.symbol_stream());
        assert_eq!(d.samples[0].parent_symbol, 0);
        assert_eq!(d.samples[1].parent_symbol, 255);
    }

    #[test]
    fn zero_head_epoch_zero_loss_is_ln_255() {
        let d = NodeDataset::from_octrees(&[full_tree(3)], 5).unwrap();
        let mut m = NeuralModel::new_static(&Architecture::compact(), 5, 0).unwrap();
        let r = train_entropy(
            &mut m,
            &d,
            &TrainConfig {
                epochs: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.loss_curve[0], 255f64.ln());
    }

    #[test]
    fn learns_degenerate_corpus() {
        let d = NodeDataset::from_octrees(&[full_tree(3)], 5).unwrap();
        let mut m = NeuralModel::new_static(&Architecture::compact(), 5, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            batch: 8,
            lr: 1e-2,
            seed: 1,
        };
        let r = train_entropy(&mut m, &d, &cfg).unwrap();
        assert!(r.final_loss < 0.05, "{}", r.final_loss);
        let f = d.samples[3].feature;
        let crop: Vec<f64> = d.samples[3].crops[0].iter().map(|&v| v as f64).collect();
        assert!(m.predict(&[&crop], &f).unwrap().p(255) > 0.99);
    }

    #[test]
    fn uniform_cross_entropy() {
        let d = NodeDataset::from_octrees(&[full_tree(2)], 3).unwrap();
        let bps = dataset_cross_entropy(&EntropyModel::Uniform, &d).unwrap();
        assert!((bps - 255f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn split_partitions() {
        let d = NodeDataset::from_octrees(&[full_tree(3)], 3).unwrap();
        let (a, b) = d.split(0.25, 3);
        assert_eq!(a.len() + b.len(), d.len());
        assert_eq!(b.len(), (d.len() as f64 * 0.25).round() as usize);
        assert_eq!(d.subsample(10, 1).len(), 10);
    }

    #[test]
    fn sequence_samples_have_four_crops() {
        let t = full_tree(2);
        let d = NodeDataset::from_sequences(&[vec![t.clone(), t.clone(), t]], 3, 4).unwrap();
        assert_eq!(d.len(), 3 * 9);
        assert!(d.samples.iter().all(|s| s.crops.len() == 4));
        // first frame has no previous frame
        assert!(d.samples[0].crops[1].iter().all(|&v| v == 0));
        // second frame at the root sees the first frame's children
        assert!(d.samples[1].crops[3].contains(&1));
    }
}
