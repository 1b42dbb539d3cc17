//! Multi-branch network: one valid-conv tower per voxel crop, features
//! concatenated with extra scalar inputs, then a fully connected stack.
//!
//! ```text
//! crop_b --Conv3d+ReLU x n_b--> flatten ─┐
//!                                        ├─ concat ── FC+ReLU ... FC ── head
//! extra inputs ──────────────────────────┘
//! ```

use super::layers::{relu_in_place, relu_mask, Conv3d, Dense};
use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::Prng;

/// Output nonlinearity applied by the consumer of the raw outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    Softmax,
    /// `0.5 * tanh(z)`, bounded to `(-0.5, 0.5)`.
    HalfTanh,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchSpec {
    /// Crop edge length.
    pub extent: usize,
    /// Output channels of each conv layer (input has one channel).
    pub channels: Vec<usize>,
}

impl BranchSpec {
    pub fn out_extent(&self) -> usize {
        self.extent - 2 * self.channels.len()
    }

    pub fn feature_len(&self) -> usize {
        let c = self.channels.last().copied().unwrap_or(1);
        c * self.out_extent().pow(3)
    }
}

/// Flat description of one layer, used for printing and parameter counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv3d {
        in_channels: usize,
        out_channels: usize,
    },
    FullyConnected {
        inputs: usize,
        outputs: usize,
    },
    Relu,
    Softmax,
    HalfTanh,
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv3d {
                in_channels,
                out_channels,
            } => out_channels * in_channels * 27 + out_channels,
            LayerSpec::FullyConnected { inputs, outputs } => outputs * inputs + outputs,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetSpec {
    pub branches: Vec<BranchSpec>,
    pub extra_inputs: usize,
    pub hidden: Vec<usize>,
    pub outputs: usize,
    pub head: Head,
}

impl NetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.outputs == 0 || self.hidden.contains(&0) {
            return Err(Error::Shape("zero-width layer".into()));
        }
        for b in &self.branches {
            if b.extent < 1 + 2 * b.channels.len() || b.channels.contains(&0) {
                return Err(Error::Shape(format!(
                    "branch with extent {} cannot hold {} valid convolutions",
                    b.extent,
                    b.channels.len()
                )));
            }
        }
        if self.feature_len() == 0 {
            return Err(Error::Shape("network has no inputs".into()));
        }
        Ok(())
    }

    pub fn feature_len(&self) -> usize {
        self.branches
            .iter()
            .map(BranchSpec::feature_len)
            .sum::<usize>()
            + self.extra_inputs
    }

    pub fn layers(&self) -> Vec<Vec<LayerSpec>> {
        let mut out: Vec<Vec<LayerSpec>> = self
            .branches
            .iter()
            .map(|b| {
                let mut prev = 1;
                b.channels
                    .iter()
                    .flat_map(|&c| {
                        let l = LayerSpec::Conv3d {
                            in_channels: prev,
                            out_channels: c,
                        };
                        prev = c;
                        [l, LayerSpec::Relu]
                    })
                    .collect()
            })
            .collect();
        let mut mlp = Vec::new();
        let mut prev = self.feature_len();
        for &h in &self.hidden {
            mlp.push(LayerSpec::FullyConnected {
                inputs: prev,
                outputs: h,
            });
            mlp.push(LayerSpec::Relu);
            prev = h;
        }
        mlp.push(LayerSpec::FullyConnected {
            inputs: prev,
            outputs: self.outputs,
        });
        mlp.push(match self.head {
            Head::Softmax => LayerSpec::Softmax,
            Head::HalfTanh => LayerSpec::HalfTanh,
        });
        out.push(mlp);
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers()
            .iter()
            .flatten()
            .map(LayerSpec::param_count)
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct ModelParams {
    spec: NetSpec,
    seed: u64,
    convs: Vec<Vec<Conv3d>>,
    dense: Vec<Dense>,
    revision: u64,
}

/// Equality ignores the internal revision counter.
impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.seed == other.seed
            && self.convs == other.convs
            && self.dense == other.dense
    }
}

/// Activations recorded by a forward pass, consumed by [`ModelParams::backward`].
#[derive(Clone, Debug, Default)]
pub struct Cache {
    revision: u64,
    /// Per branch: input crop, then the post-ReLU output of every conv.
    branch_acts: Vec<Vec<Vec<f64>>>,
    /// Input of every dense layer (post-ReLU except the first).
    dense_inputs: Vec<Vec<f64>>,
}

impl Cache {
    /// Which ReLU units were active, in a fixed order. Two passes with the same
    /// pattern lie on the same linear piece of the network.
    pub fn active_units(&self) -> Vec<bool> {
        let convs = self.branch_acts.iter().flat_map(|acts| acts.iter().skip(1));
        let dense = self.dense_inputs.iter().skip(1);
        convs.chain(dense).flatten().map(|&v| v > 0.0).collect()
    }
}

/// Gradients aligned with [`ModelParams::tensors`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub tensors: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zero(&mut self) {
        for t in &mut self.tensors {
            t.fill(0.0);
        }
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.tensors.iter_mut().flatten() {
            *v *= s;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().flatten().all(|&v| v == 0.0)
    }
}

/// Gradients with respect to the network inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct InputGrads {
    pub branches: Vec<Vec<f64>>,
    pub extra: Vec<f64>,
}

fn glorot(rng: &mut Prng, t: &mut Tensor, fan_in: usize, fan_out: usize) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in t.data_mut() {
        *v = rng.range(-limit, limit);
    }
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, all-zero output layer.
    pub fn init(spec: NetSpec, seed: u64) -> Result<ModelParams> {
        spec.validate()?;
        let mut rng = Prng::new(seed);
        let mut convs = Vec::new();
        for b in &spec.branches {
            let mut prev = 1;
            let mut layers = Vec::new();
            for &c in &b.channels {
                let mut conv = Conv3d::zeros(prev, c);
                glorot(&mut rng, &mut conv.weight, prev * 27, c * 27);
                layers.push(conv);
                prev = c;
            }
            convs.push(layers);
        }
        let mut dense = Vec::new();
        let mut prev = spec.feature_len();
        for &h in &spec.hidden {
            let mut d = Dense::zeros(prev, h);
            glorot(&mut rng, &mut d.weight, prev, h);
            dense.push(d);
            prev = h;
        }
        dense.push(Dense::zeros(prev, spec.outputs));
        Ok(ModelParams {
            spec,
            seed,
            convs,
            dense,
            revision: 0,
        })
    }

    /// Rebuilds params from tensors in [`ModelParams::tensors`] order.
    pub fn from_tensors(spec: NetSpec, seed: u64, tensors: Vec<Vec<f64>>) -> Result<ModelParams> {
        let mut params = ModelParams::init(spec, 0)?;
        params.seed = seed;
        let expected = params.tensors().len();
        if tensors.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} tensors, got {}",
                tensors.len()
            )));
        }
        for (dst, src) in params.tensors_mut().into_iter().zip(tensors) {
            if dst.len() != src.len() {
                return Err(Error::Shape(format!(
                    "tensor {:?} needs {} values, got {}",
                    dst.shape(),
                    dst.len(),
                    src.len()
                )));
            }
            dst.data_mut().copy_from_slice(&src);
        }
        Ok(params)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Conv weights/biases branch by branch, then dense weights/biases.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layers in &self.convs {
            for c in layers {
                out.push(&c.weight);
                out.push(&c.bias);
            }
        }
        for d in &self.dense {
            out.push(&d.weight);
            out.push(&d.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.revision += 1;
        let mut out = Vec::new();
        for layers in &mut self.convs {
            for c in layers {
                out.push(&mut c.weight);
                out.push(&mut c.bias);
            }
        }
        for d in &mut self.dense {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
        out
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            tensors: self.tensors().iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn conv_layers(&self, branch: usize) -> &[Conv3d] {
        &self.convs[branch]
    }

    pub fn conv_layers_mut(&mut self, branch: usize) -> &mut [Conv3d] {
        self.revision += 1;
        &mut self.convs[branch]
    }

    pub fn dense_layers(&self) -> &[Dense] {
        &self.dense
    }

    pub fn dense_layers_mut(&mut self) -> &mut [Dense] {
        self.revision += 1;
        &mut self.dense
    }

    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.round_to_f32();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    fn check_inputs(&self, branches: &[&[f64]], extra: &[f64]) -> Result<()> {
        if branches.len() != self.spec.branches.len() {
            return Err(Error::Shape(format!(
                "expected {} crops, got {}",
                self.spec.branches.len(),
                branches.len()
            )));
        }
        for (b, input) in self.spec.branches.iter().zip(branches) {
            if input.len() != b.extent.pow(3) {
                return Err(Error::Shape(format!(
                    "crop of {} values for a {}^3 branch",
                    input.len(),
                    b.extent
                )));
            }
        }
        if extra.len() != self.spec.extra_inputs {
            return Err(Error::Shape(format!(
                "expected {} extra inputs, got {}",
                self.spec.extra_inputs,
                extra.len()
            )));
        }
        Ok(())
    }

    /// Raw outputs (pre-head). Records activations when `cache` is given.
    pub fn forward(
        &self,
        branches: &[&[f64]],
        extra: &[f64],
        mut cache: Option<&mut Cache>,
    ) -> Result<Vec<f64>> {
        self.check_inputs(branches, extra)?;
        if let Some(c) = cache.as_deref_mut() {
            c.revision = self.revision;
            c.branch_acts.clear();
            c.dense_inputs.clear();
        }
        let mut features = Vec::with_capacity(self.spec.feature_len());
        for ((b, layers), input) in self.spec.branches.iter().zip(&self.convs).zip(branches) {
            let mut acts = vec![input.to_vec()];
            let mut extent = b.extent;
            for conv in layers {
                let mut out = conv.forward(acts.last().unwrap(), extent);
                relu_in_place(&mut out);
                acts.push(out);
                extent -= 2;
            }
            features.extend_from_slice(acts.last().unwrap());
            if let Some(c) = cache.as_deref_mut() {
                c.branch_acts.push(acts);
            }
        }
        features.extend_from_slice(extra);
        let mut x = features;
        let last = self.dense.len() - 1;
        for (j, d) in self.dense.iter().enumerate() {
            let mut y = d.forward(&x);
            if j < last {
                relu_in_place(&mut y);
            }
            if let Some(c) = cache.as_deref_mut() {
                c.dense_inputs.push(std::mem::take(&mut x));
            }
            x = y;
        }
        Ok(x)
    }

    /// Accumulates parameter gradients for `grad_out` (gradient of the loss
    /// with respect to the raw outputs) into `grads`.
    pub fn backward(
        &self,
        cache: &Cache,
        grad_out: &[f64],
        grads: &mut Grads,
        want_input: bool,
    ) -> Result<Option<InputGrads>> {
        if cache.revision != self.revision || cache.dense_inputs.len() != self.dense.len() {
            return Err(Error::InvalidArgument(
                "activation cache does not match these parameters".into(),
            ));
        }
        if grad_out.len() != self.spec.outputs {
            return Err(Error::Shape(format!(
                "output gradient of {} values for {} outputs",
                grad_out.len(),
                self.spec.outputs
            )));
        }
        let n_conv: usize = self.convs.iter().map(Vec::len).sum();
        let mut g = grad_out.to_vec();
        for j in (0..self.dense.len()).rev() {
            let slot = 2 * (n_conv + j);
            let (gw, rest) = grads.tensors[slot..].split_at_mut(1);
            let input = &cache.dense_inputs[j];
            g = self.dense[j].backward(input, &g, &mut gw[0], &mut rest[0]);
            if j > 0 {
                relu_mask(&mut g, input);
            }
        }
        let mut offset = 0;
        let mut slot = 0;
        let mut branch_grads = Vec::with_capacity(self.convs.len());
        for ((b, layers), acts) in self
            .spec
            .branches
            .iter()
            .zip(&self.convs)
            .zip(&cache.branch_acts)
        {
            let len = b.feature_len();
            let mut gb = g[offset..offset + len].to_vec();
            offset += len;
            let extents: Vec<usize> = (0..layers.len()).map(|l| b.extent - 2 * l).collect();
            for l in (0..layers.len()).rev() {
                relu_mask(&mut gb, &acts[l + 1]);
                let s = slot + 2 * l;
                let (gw, rest) = grads.tensors[s..].split_at_mut(1);
                let need_input = l > 0 || want_input;
                match layers[l].backward(
                    &acts[l],
                    extents[l],
                    &gb,
                    &mut gw[0],
                    &mut rest[0],
                    need_input,
                ) {
                    Some(gi) => gb = gi,
                    None => gb.clear(),
                }
            }
            slot += 2 * layers.len();
            branch_grads.push(gb);
        }
        Ok(want_input.then(|| InputGrads {
            branches: branch_grads,
            extra: g[offset..].to_vec(),
        }))
    }
}
