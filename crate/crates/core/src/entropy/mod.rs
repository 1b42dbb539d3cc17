//! Probability models over the 255 occupancy symbols: uniform and adaptive
//! baselines, and conv-tower models over voxel crops (static: one crop;
//! dynamic: current, previous, next and previous-finer crops).

mod adaptive;
mod dataset;
mod session;

pub use adaptive::{adaptive_context, AdaptiveCounts, MAX_CONTEXT_BITS};
pub use dataset::{dataset_cross_entropy, train_entropy, NodeDataset, NodeSample};
pub(crate) use session::parent_symbols;
pub use session::{LevelContext, ModelSession};

use std::path::Path;

use crate::coder::freq::ALPHABET;
use crate::error::{Error, Result};
use crate::nn::{softmax, BranchSpec, Head, ModelEntry, ModelFile, ModelParams, NetSpec};
use crate::octree::CellIndex;

/// Model-kind tag shared by model files and bitstream headers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Uniform = 0,
    Adaptive = 1,
    VoxelStatic = 2,
    VoxelDynamic = 3,
}

impl ModelKind {
    pub fn from_u8(v: u8) -> Result<ModelKind> {
        Ok(match v {
            0 => ModelKind::Uniform,
            1 => ModelKind::Adaptive,
            2 => ModelKind::VoxelStatic,
            3 => ModelKind::VoxelDynamic,
            _ => return Err(Error::Format(format!("unknown entropy model kind {v}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Uniform => "uniform",
            ModelKind::Adaptive => "adaptive",
            ModelKind::VoxelStatic => "voxel-static",
            ModelKind::VoxelDynamic => "voxel-dynamic",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<ModelKind> {
        Ok(match s {
            "uniform" => ModelKind::Uniform,
            "adaptive" => ModelKind::Adaptive,
            "voxel-static" | "static" => ModelKind::VoxelStatic,
            "voxel-dynamic" | "dynamic" => ModelKind::VoxelDynamic,
            _ => return Err(Error::InvalidArgument(format!("unknown model kind '{s}'"))),
        })
    }
}

/// Normalized cell center plus fractional depth `(k + 1) / d_max`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeFeature {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub depth_frac: f64,
}

impl NodeFeature {
    pub fn new(cell: CellIndex, max_depth: u8) -> NodeFeature {
        let [cx, cy, cz] = cell.center();
        NodeFeature {
            cx,
            cy,
            cz,
            depth_frac: (cell.depth as f64 + 1.0) / max_depth.max(1) as f64,
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.cx, self.cy, self.cz, self.depth_frac]
    }
}

/// Probabilities of symbols `1..=255`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolDistribution(Box<[f64; ALPHABET]>);

impl SymbolDistribution {
    pub fn uniform() -> SymbolDistribution {
        SymbolDistribution(Box::new([1.0 / ALPHABET as f64; ALPHABET]))
    }

    pub fn from_probs(p: Vec<f64>) -> Result<SymbolDistribution> {
        let arr: Box<[f64; ALPHABET]> = p
            .into_boxed_slice()
            .try_into()
            .map_err(|_| Error::Shape("distribution needs 255 entries".into()))?;
        let sum: f64 = arr.iter().sum();
        if arr.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(
                "not a probability distribution".into(),
            ));
        }
        Ok(SymbolDistribution(arr))
    }

    /// Probability of symbol `s` in `1..=255`.
    pub fn p(&self, s: u8) -> f64 {
        self.0[s as usize - 1]
    }

    pub fn probs(&self) -> &[f64; ALPHABET] {
        &self.0
    }
}

/// Conv-tower widths and the hidden width of the fully connected stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub channels: Vec<usize>,
    pub hidden: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            channels: vec![16, 32, 64],
            hidden: 256,
        }
    }
}

impl Architecture {
    pub fn wide() -> Self {
        Architecture {
            channels: vec![128, 128, 128],
            hidden: 256,
        }
    }

    /// Small widths for quick experiments and tests.
    pub fn compact() -> Self {
        Architecture {
            channels: vec![4, 8, 8],
            hidden: 32,
        }
    }

    /// Conv layers that fit in a crop of the given extent.
    fn branch(&self, extent: usize) -> BranchSpec {
        let fit = (extent - 1) / 2;
        BranchSpec {
            extent,
            channels: self.channels.iter().copied().take(fit).collect(),
        }
    }
}

/// Child-crop size paired with a same-depth crop of size `m`.
pub fn child_crop_size(m: usize) -> usize {
    m + 1
}

/// Voxel-context network. `child_crop == 0` marks the single-crop (static)
/// variant.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralModel {
    params: ModelParams,
    crop: usize,
    child_crop: usize,
}

impl NeuralModel {
    pub fn new_static(arch: &Architecture, crop: usize, seed: u64) -> Result<NeuralModel> {
        check_crop(crop)?;
        let spec = NetSpec {
            branches: vec![arch.branch(crop)],
            extra_inputs: 4,
            hidden: vec![arch.hidden],
            outputs: ALPHABET,
            head: Head::Softmax,
        };
        Self::from_params(ModelParams::init(spec, seed)?, crop, 0)
    }

    pub fn new_dynamic(arch: &Architecture, crop: usize, seed: u64) -> Result<NeuralModel> {
        check_crop(crop)?;
        let child = child_crop_size(crop);
        let spec = NetSpec {
            branches: vec![
                arch.branch(crop),
                arch.branch(crop),
                arch.branch(crop),
                arch.branch(child),
            ],
            extra_inputs: 4,
            hidden: vec![arch.hidden],
            outputs: ALPHABET,
            head: Head::Softmax,
        };
        Self::from_params(ModelParams::init(spec, seed)?, crop, child)
    }

    /// Dynamic model that reproduces `model` exactly: the current-frame branch
    /// and the fully connected stage are copied, temporal branches and their
    /// input columns are zero.
    pub fn embed_static(model: &NeuralModel, arch: &Architecture) -> Result<NeuralModel> {
        if model.is_dynamic() {
            return Err(Error::InvalidArgument("model is already dynamic".into()));
        }
        let mut dynamic = Self::new_dynamic(arch, model.crop, model.params.seed())?;
        if dynamic.params.spec().branches[0] != model.params.spec().branches[0]
            || dynamic.params.spec().hidden != model.params.spec().hidden
        {
            return Err(Error::Shape(
                "architecture does not match the static model".into(),
            ));
        }
        let n_static = model.params.spec().branches[0].feature_len();
        let temporal: usize = dynamic.params.spec().branches[1..]
            .iter()
            .map(BranchSpec::feature_len)
            .sum();
        for b in 1..4 {
            for conv in dynamic.params.conv_layers_mut(b) {
                conv.weight.data_mut().fill(0.0);
                conv.bias.data_mut().fill(0.0);
            }
        }
        dynamic
            .params
            .conv_layers_mut(0)
            .clone_from_slice(model.params.conv_layers(0));
        let src = model.params.dense_layers();
        let dst = dynamic.params.dense_layers_mut();
        for (d, s) in dst.iter_mut().zip(src).skip(1) {
            *d = s.clone();
        }
        let (s0, d0) = (&src[0], &mut dst[0]);
        let (n_in_s, n_in_d) = (s0.inputs(), d0.inputs());
        for o in 0..s0.outputs() {
            let srow = &s0.weight.data()[o * n_in_s..(o + 1) * n_in_s];
            let drow = &mut d0.weight.data_mut()[o * n_in_d..(o + 1) * n_in_d];
            drow[..n_static].copy_from_slice(&srow[..n_static]);
            drow[n_static..n_static + temporal].fill(0.0);
            drow[n_static + temporal..].copy_from_slice(&srow[n_static..]);
        }
        d0.bias.data_mut().copy_from_slice(s0.bias.data());
        Ok(dynamic)
    }

    /// Wraps trained parameters; `child_crop` is 0 for a static model.
    pub fn from_params(params: ModelParams, crop: usize, child_crop: usize) -> Result<NeuralModel> {
        let spec = params.spec();
        let want = if child_crop == 0 { 1 } else { 4 };
        let ok = spec.branches.len() == want
            && spec.extra_inputs == 4
            && spec.outputs == ALPHABET
            && spec.head == Head::Softmax
            && spec.branches[..want.min(3)]
                .iter()
                .all(|b| b.extent == crop)
            && (child_crop == 0 || spec.branches[3].extent == child_crop);
        if !ok {
            return Err(Error::Format(
                "network shape does not match model kind".into(),
            ));
        }
        Ok(NeuralModel {
            params,
            crop,
            child_crop,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn crop(&self) -> usize {
        self.crop
    }

    pub fn child_crop(&self) -> usize {
        self.child_crop
    }

    pub fn is_dynamic(&self) -> bool {
        self.child_crop != 0
    }

    pub fn kind(&self) -> ModelKind {
        if self.is_dynamic() {
            ModelKind::VoxelDynamic
        } else {
            ModelKind::VoxelStatic
        }
    }

    /// Raw logits for the given crops (one, or four for dynamic models).
    pub fn logits(&self, crops: &[&[f64]], feature: &NodeFeature) -> Result<Vec<f64>> {
        let want = if self.is_dynamic() { 4 } else { 1 };
        if crops.len() != want {
            return Err(Error::Shape(format!(
                "expected {want} crops, got {}",
                crops.len()
            )));
        }
        self.params.forward(crops, &feature.to_array(), None)
    }

    pub fn predict(&self, crops: &[&[f64]], feature: &NodeFeature) -> Result<SymbolDistribution> {
        Ok(SymbolDistribution(
            softmax(&self.logits(crops, feature)?)
                .into_boxed_slice()
                .try_into()
                .expect("255 outputs"),
        ))
    }
}

fn check_crop(m: usize) -> Result<()> {
    if m.is_multiple_of(2) || m == 0 || m > 63 {
        return Err(Error::InvalidArgument(format!(
            "crop size {m} must be odd and at most 63"
        )));
    }
    Ok(())
}

/// An occupancy-symbol probability model.
#[derive(Clone, Debug, PartialEq)]
pub enum EntropyModel {
    Uniform,
    /// Count-based model over `context_bits`-bit hashed contexts.
    Adaptive {
        context_bits: u8,
    },
    Neural(NeuralModel),
}

impl EntropyModel {
    pub fn adaptive(context_bits: u8) -> Result<EntropyModel> {
        if context_bits > MAX_CONTEXT_BITS {
            return Err(Error::out_of_range("context bits", context_bits));
        }
        Ok(EntropyModel::Adaptive { context_bits })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            EntropyModel::Uniform => ModelKind::Uniform,
            EntropyModel::Adaptive { .. } => ModelKind::Adaptive,
            EntropyModel::Neural(m) => m.kind(),
        }
    }

    pub fn to_file(&self) -> ModelFile {
        let (meta, entries) = match self {
            EntropyModel::Uniform => (vec![], vec![]),
            EntropyModel::Adaptive { context_bits } => (vec![*context_bits], vec![]),
            EntropyModel::Neural(m) => (
                vec![m.crop as u8, m.child_crop as u8],
                vec![ModelEntry {
                    tag: 0,
                    params: m.params.clone(),
                }],
            ),
        };
        ModelFile {
            kind: self.kind() as u8,
            meta,
            entries,
        }
    }

    pub fn from_file(file: ModelFile) -> Result<EntropyModel> {
        let kind = ModelKind::from_u8(file.kind)?;
        let bad = |m: &str| Error::Format(format!("{} model file: {m}", kind.name()));
        match kind {
            ModelKind::Uniform => {
                if !file.meta.is_empty() || !file.entries.is_empty() {
                    return Err(bad("unexpected payload"));
                }
                Ok(EntropyModel::Uniform)
            }
            ModelKind::Adaptive => match (&file.meta[..], file.entries.is_empty()) {
                (&[bits], true) if bits <= MAX_CONTEXT_BITS => {
                    Ok(EntropyModel::Adaptive { context_bits: bits })
                }
                _ => Err(bad("invalid metadata")),
            },
            ModelKind::VoxelStatic | ModelKind::VoxelDynamic => {
                let (crop, child) = match file.meta[..] {
                    [c, d] => (c as usize, d as usize),
                    _ => return Err(bad("invalid metadata")),
                };
                if (kind == ModelKind::VoxelStatic) != (child == 0) || file.entries.len() != 1 {
                    return Err(bad("inconsistent metadata"));
                }
                let params = file.entries.into_iter().next().unwrap().params;
                Ok(EntropyModel::Neural(NeuralModel::from_params(
                    params, crop, child,
                )?))
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_file().to_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<EntropyModel> {
        let file = ModelFile::from_bytes(bytes)?;
        if file.kind > ModelKind::VoxelDynamic as u8 {
            return Err(Error::Format(format!(
                "model file of kind {} is not an entropy model",
                file.kind
            )));
        }
        Self::from_file(file)
    }

    pub fn load(path: &Path) -> Result<EntropyModel> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Content hash of the serialized model; pins encoder/decoder compatibility.
    pub fn fingerprint(&self) -> u64 {
        self.to_file().content_hash()
    }
}
