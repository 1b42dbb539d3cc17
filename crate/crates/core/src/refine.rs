//! Decoder-side coordinate refinement: a per-depth conv network maps a leaf's
//! same-depth crop to an offset in `(-0.5, 0.5)^3` cell edges.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;

use crate::coder::codec_support::prepare_cloud;
use crate::entropy::Architecture;
use crate::error::{Error, Result};
use crate::nn::{
    fit, half_tanh, Cache, Head, ModelEntry, ModelFile, ModelParams, NetSpec, TrainConfig,
    TrainReport,
};
use crate::octree::{leaf_index, CellIndex, Octree};
use crate::pointcloud::{NormalizationParams, Point, PointCloud};
use crate::voxel::{local_crop, VoxelGrid};

/// Model-file kind tag of refinement models.
pub const REFINE_KIND: u8 = 4;

/// Offsets stay strictly inside the cell even when `tanh` saturates.
const LIMIT: f64 = 0.5 * (1.0 - 1e-12);

#[derive(Clone, Debug, PartialEq)]
pub struct RefineParams {
    crop: usize,
    models: BTreeMap<u8, ModelParams>,
}

fn refine_spec(arch: &Architecture, crop: usize) -> NetSpec {
    NetSpec {
        branches: vec![crate::nn::BranchSpec {
            extent: crop,
            channels: arch.channels.iter().copied().take((crop - 1) / 2).collect(),
        }],
        extra_inputs: 0,
        hidden: vec![arch.hidden],
        outputs: 3,
        head: Head::HalfTanh,
    }
}

impl RefineParams {
    pub fn new(crop: usize) -> Result<RefineParams> {
        if crop.is_multiple_of(2) || crop > 63 {
            return Err(Error::InvalidArgument(format!(
                "crop size {crop} must be odd and at most 63"
            )));
        }
        Ok(RefineParams {
            crop,
            models: BTreeMap::new(),
        })
    }

    pub fn crop(&self) -> usize {
        self.crop
    }

    pub fn depths(&self) -> impl Iterator<Item = u8> + '_ {
        self.models.keys().copied()
    }

    /// Adds a freshly initialized (identity) refiner for `depth`.
    pub fn init_depth(&mut self, depth: u8, arch: &Architecture, seed: u64) -> Result<()> {
        let mut p = ModelParams::init(refine_spec(arch, self.crop), seed)?;
        p.round_to_f32();
        self.models.insert(depth, p);
        Ok(())
    }

    pub fn insert(&mut self, depth: u8, params: ModelParams) -> Result<()> {
        let s = params.spec();
        let ok = s.head == Head::HalfTanh
            && s.outputs == 3
            && s.extra_inputs == 0
            && s.branches.len() == 1
            && s.branches[0].extent == self.crop;
        if !ok {
            return Err(Error::Shape(
                "not a refinement network for this crop size".into(),
            ));
        }
        self.models.insert(depth, params);
        Ok(())
    }

    pub fn get(&self, depth: u8) -> Result<&ModelParams> {
        self.models
            .get(&depth)
            .ok_or_else(|| Error::ModelMismatch(format!("no refinement model for depth {depth}")))
    }

    /// Offset in leaf-edge units for a crop centered on a depth-`depth` leaf.
    pub fn refine_offset(&self, depth: u8, crop: &[f64]) -> Result<[f64; 3]> {
        let out = self.get(depth)?.forward(&[crop], &[], None)?;
        Ok([0, 1, 2].map(|i| half_tanh(out[i]).0.clamp(-LIMIT, LIMIT)))
    }

    /// Refined normalized positions of the leaves of `tree`, in leaf order.
    pub fn refine_leaves(&self, tree: &Octree) -> Result<Vec<Point>> {
        let d = tree.max_depth();
        self.get(d)?;
        let grid = VoxelGrid::from_level(tree, d)?;
        refine_cells(self, &grid, tree.leaves())
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            kind: REFINE_KIND,
            meta: vec![self.crop as u8],
            entries: self
                .models
                .iter()
                .map(|(&d, p)| ModelEntry {
                    tag: d as u16,
                    params: p.clone(),
                })
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_file().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<RefineParams> {
        let file = ModelFile::from_bytes(bytes)?;
        if file.kind != REFINE_KIND {
            return Err(Error::Format(format!(
                "model file of kind {} is not a refiner",
                file.kind
            )));
        }
        let [crop] = file.meta[..] else {
            return Err(Error::Format(
                "refiner metadata must hold the crop size".into(),
            ));
        };
        let mut r = RefineParams::new(crop as usize).map_err(|e| Error::Format(e.to_string()))?;
        for e in file.entries {
            let depth = u8::try_from(e.tag).map_err(|_| Error::Format("bad depth tag".into()))?;
            r.insert(depth, e.params)
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<RefineParams> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn refine_cells(r: &RefineParams, grid: &VoxelGrid, cells: &[CellIndex]) -> Result<Vec<Point>> {
    let d = grid.depth();
    cells
        .par_iter()
        .map(|&c| {
            let crop = local_crop(grid, c, r.crop)?.to_f64();
            let off = r.refine_offset(d, &crop)?;
            let e = c.edge();
            let m = c.center();
            Ok([m[0] + off[0] * e, m[1] + off[1] * e, m[2] + off[2] * e])
        })
        .collect()
}

/// Refined, denormalized cloud from decoded leaf centers. `centers` must be
/// the (normalized) centers of the depth-`grid.depth()` cells in `grid`.
pub fn refine_apply(
    centers: &PointCloud,
    params: &RefineParams,
    grid: &VoxelGrid,
    norm: &NormalizationParams,
) -> Result<PointCloud> {
    let d = grid.depth();
    let cells: Vec<CellIndex> = centers
        .points
        .iter()
        .map(|p| {
            let c = leaf_index(p, d);
            if !grid.get(c.x as i64, c.y as i64, c.z as i64) || c.center() != *p {
                return Err(Error::Shape(format!(
                    "point {p:?} is not a center of the grid"
                )));
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let points = refine_cells(params, grid, &cells)?;
    Ok(norm.denormalize(&PointCloud::new(points)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineSample {
    pub crop: Vec<u8>,
    /// Centroid of the leaf's points relative to its center, in leaf edges.
    pub target: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct RefineDataset {
    pub depth: u8,
    pub crop: usize,
    pub samples: Vec<RefineSample>,
}

impl RefineDataset {
    /// One sample per occupied leaf at `depth` of every cloud, each cloud
    /// normalized exactly as the encoder normalizes it.
    pub fn from_clouds(clouds: &[PointCloud], depth: u8, crop: usize) -> Result<RefineDataset> {
        let mut samples = Vec::new();
        for cloud in clouds {
            let (wire, tree) = prepare_cloud(cloud, depth)?;
            let norm = wire.apply(cloud);
            let mut sums: HashMap<CellIndex, ([f64; 3], usize)> = HashMap::new();
            for p in &norm.points {
                let e = sums.entry(leaf_index(p, depth)).or_insert(([0.0; 3], 0));
                for i in 0..3 {
                    e.0[i] += p[i];
                }
                e.1 += 1;
            }
            let grid = VoxelGrid::from_level(&tree, depth)?;
            for &c in tree.leaves() {
                let (s, n) = sums[&c];
                let m = c.center();
                let target =
                    [0, 1, 2].map(|i| ((s[i] / n as f64 - m[i]) / c.edge()).clamp(-0.5, 0.5));
                samples.push(RefineSample {
                    crop: local_crop(&grid, c, crop)?.values,
                    target,
                });
            }
        }
        Ok(RefineDataset {
            depth,
            crop,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Minimizes the mean squared offset error (leaf-edge units) of the depth's
/// refiner, which must already exist in `params`.
pub fn train_refine(
    params: &mut RefineParams,
    data: &RefineDataset,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.crop != params.crop {
        return Err(Error::Shape(
            "dataset crop size differs from the refiner's".into(),
        ));
    }
    let model = params.models.get_mut(&data.depth).ok_or_else(|| {
        Error::ModelMismatch(format!("no refinement model for depth {}", data.depth))
    })?;
    let eval = |p: &ModelParams, i: usize, cache: Option<&mut Cache>| -> Result<(f64, Vec<f64>)> {
        let s = &data.samples[i];
        let crop: Vec<f64> = s.crop.iter().map(|&v| v as f64).collect();
        let out = p.forward(&[&crop], &[], cache)?;
        let mut loss = 0.0;
        let mut grad = vec![0.0; 3];
        for j in 0..3 {
            let (y, dy) = half_tanh(out[j]);
            let e = y - s.target[j];
            loss += e * e;
            grad[j] = 2.0 * e * dy;
        }
        Ok((loss, grad))
    };
    fit(
        model,
        data.len(),
        cfg,
        |p, i, g| {
            let mut cache = Cache::default();
            let (loss, grad) = eval(p, i, Some(&mut cache))?;
            p.backward(&cache, &grad, g, false)?;
            Ok(loss)
        },
        |p, i| Ok(eval(p, i, None)?.0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;

    fn planar_cloud(seed: u64, n: usize) -> PointCloud {
        let mut rng = Prng::new(seed);
        PointCloud::new(
            (0..n)
                .map(|_| [rng.uniform(), rng.uniform(), 0.3])
                .collect(),
        )
    }

    #[test]
    fn zero_head_is_identity() {
        let mut r = RefineParams::new(5).unwrap();
        r.init_depth(4, &Architecture::compact(), 1).unwrap();
        let tree = Octree::build(&planar_cloud(1, 300), 4).unwrap();
        let pts = r.refine_leaves(&tree).unwrap();
        let centers: Vec<Point> = tree.leaves().iter().map(|c| c.center()).collect();
        assert_eq!(pts, centers);
        assert_eq!(r.refine_offset(4, &vec![1.0; 125]).unwrap(), [0.0; 3]);
    }

    #[test]
    fn offsets_are_bounded_for_any_weights() {
        let mut r = RefineParams::new(3).unwrap();
        r.init_depth(2, &Architecture::compact(), 1).unwrap();
        let mut rng = Prng::new(3);
        let m = r.models.get_mut(&2).unwrap();
        for t in m.tensors_mut() {
            for v in t.data_mut() {
                *v = rng.range(-50.0, 50.0);
            }
        }
        for _ in 0..50 {
            let crop: Vec<f64> = (0..27).map(|_| rng.below(2) as f64).collect();
            let off = r.refine_offset(2, &crop).unwrap();
            assert!(off.iter().all(|v| v.abs() < 0.5));
        }
    }

    #[test]
    fn missing_depth_is_an_error() {
        let r = RefineParams::new(9).unwrap();
        assert!(r.refine_offset(3, &vec![0.0; 729]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let mut r = RefineParams::new(7).unwrap();
        r.init_depth(5, &Architecture::compact(), 1).unwrap();
        r.init_depth(6, &Architecture::compact(), 2).unwrap();
        let back = RefineParams::from_bytes(&r.to_bytes()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.depths().collect::<Vec<_>>(), vec![5, 6]);
    }

    #[test]
    fn epoch_zero_loss_is_mean_target_norm() {
        let clouds = vec![planar_cloud(2, 400)];
        let data = RefineDataset::from_clouds(&clouds, 4, 5).unwrap();
        let want: f64 = data
            .samples
            .iter()
            .map(|s| s.target.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / data.len() as f64;
        let mut r = RefineParams::new(5).unwrap();
        r.init_depth(4, &Architecture::compact(), 1).unwrap();
        let rep = train_refine(
            &mut r,
            &data,
            &TrainConfig {
                epochs: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((rep.loss_curve[0] - want).abs() < 1e-12);
    }

    #[test]
    fn constant_target_regression() {
        // every point sits at local coordinate (0.9, 0.9, 0.9) of its cell
        let depth = 3;
        let n = 1u32 << depth;
        let mut pts = vec![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]];
        let mut rng = Prng::new(5);
        for _ in 0..200 {
            let c = [
                rng.below(n as usize),
                rng.below(n as usize),
                rng.below(n as usize),
            ];
            pts.push(c.map(|v| (v as f64 + 0.9) / n as f64));
        }
        // the two anchors fix the normalization box to the unit cube
        let data = RefineDataset::from_clouds(&[PointCloud::new(pts)], depth, 3).unwrap();
        let mut r = RefineParams::new(3).unwrap();
        r.init_depth(depth, &Architecture::compact(), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 150,
            batch: 16,
            lr: 1e-2,
            seed: 2,
        };
        train_refine(&mut r, &data, &cfg).unwrap();
        let off = r.refine_offset(depth, &vec![0.0; 27]).unwrap();
        let typical: Vec<f64> = data.samples[5].crop.iter().map(|&v| v as f64).collect();
        let off2 = r.refine_offset(depth, &typical).unwrap();
        for v in off2 {
            assert!((v - 0.4).abs() < 0.05, "{off:?} {off2:?}");
        }
    }
}
