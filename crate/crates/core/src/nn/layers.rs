//! Valid 3x3x3 convolution and fully connected layers.
//!
//! Every sum is accumulated in a fixed order, so results are bit-reproducible.

use super::Tensor;

pub const KERNEL: usize = 3;
const K3: usize = KERNEL * KERNEL * KERNEL;

#[derive(Clone, Debug, PartialEq)]
pub struct Conv3d {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out, in, 3, 3, 3]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

impl Conv3d {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Conv3d {
        Conv3d {
            in_channels,
            out_channels,
            weight: Tensor::zeros(&[out_channels, in_channels, KERNEL, KERNEL, KERNEL]),
            bias: Tensor::zeros(&[out_channels]),
        }
    }

    /// Weights as `[in * 27][out padded to LANES]`.
    fn transposed(&self) -> (Vec<f64>, usize) {
        let n = self.in_channels * K3;
        let blocks = self.out_channels.div_ceil(LANES);
        let stride = blocks * LANES;
        let mut wt = vec![0.0; n * stride];
        for (co, row) in self.weight.data().chunks_exact(n).enumerate() {
            for (j, &w) in row.iter().enumerate() {
                wt[j * stride + co] = w;
            }
        }
        (wt, stride)
    }

    /// `input` is `[in, e, e, e]`; returns `[out, e-2, e-2, e-2]`.
    pub fn forward(&self, input: &[f64], extent: usize) -> Vec<f64> {
        let e = extent;
        let o = e - 2;
        let o3 = o * o * o;
        debug_assert_eq!(input.len(), self.in_channels * e * e * e);
        let off = field_offsets(self.in_channels, e);
        let (wt, stride) = self.transposed();
        let bias = self.bias.data();
        let mut out = vec![0.0; self.out_channels * o3];
        let mut field = vec![0.0; off.len()];
        let mut pos = 0;
        for z in 0..o {
            for y in 0..o {
                for x in 0..o {
                    let src = &input[(z * e + y) * e + x..];
                    for (d, &k) in field.iter_mut().zip(&off) {
                        *d = src[k];
                    }
                    for b0 in (0..self.out_channels).step_by(LANES) {
                        let mut acc = [0.0; LANES];
                        for (&v, w) in field.iter().zip(wt.chunks_exact(stride)) {
                            let w = &w[b0..b0 + LANES];
                            for l in 0..LANES {
                                acc[l] += v * w[l];
                            }
                        }
                        for l in 0..LANES.min(self.out_channels - b0) {
                            out[(b0 + l) * o3 + pos] = bias[b0 + l] + acc[l];
                        }
                    }
                    pos += 1;
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward(
        &self,
        input: &[f64],
        extent: usize,
        grad_out: &[f64],
        grad_weight: &mut [f64],
        grad_bias: &mut [f64],
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let e = extent;
        let o = e - 2;
        let o3 = o * o * o;
        let off = field_offsets(self.in_channels, e);
        let n = off.len();
        let stride = self.out_channels.div_ceil(LANES) * LANES;
        for (gb, bias) in grad_out.chunks_exact(o3).zip(grad_bias.iter_mut()) {
            *bias += gb.iter().sum::<f64>();
        }
        let mut gwt = vec![0.0; n * stride];
        let mut grad_in = want_input.then(|| vec![0.0; input.len()]);
        let w = self.weight.data();
        let mut field = vec![0.0; n];
        let mut g = vec![0.0; stride];
        let mut gfield = vec![0.0; n];
        let mut pos = 0;
        for z in 0..o {
            for y in 0..o {
                for x in 0..o {
                    let base = (z * e + y) * e + x;
                    for (co, gv) in g.iter_mut().enumerate().take(self.out_channels) {
                        *gv = grad_out[co * o3 + pos];
                    }
                    pos += 1;
                    if g.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    let src = &input[base..];
                    for (d, &k) in field.iter_mut().zip(&off) {
                        *d = src[k];
                    }
                    for (&v, gw) in field.iter().zip(gwt.chunks_exact_mut(stride)) {
                        for (a, &b) in gw.iter_mut().zip(&g) {
                            *a += v * b;
                        }
                    }
                    if let Some(gi) = grad_in.as_mut() {
                        gfield.fill(0.0);
                        for (co, wrow) in w.chunks_exact(n).enumerate() {
                            if g[co] != 0.0 {
                                axpy(&mut gfield, g[co], wrow);
                            }
                        }
                        let dst = &mut gi[base..];
                        for (s, &k) in gfield.iter().zip(&off) {
                            dst[k] += s;
                        }
                    }
                }
            }
        }
        for (co, gw) in grad_weight.chunks_exact_mut(n).enumerate() {
            for (j, v) in gw.iter_mut().enumerate() {
                *v += gwt[j * stride + co];
            }
        }
        grad_in
    }
}

/// Output channels computed together in the convolution kernels.
const LANES: usize = 8;

/// Four interleaved partial sums, combined in a fixed order.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let (ac, bc) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail = ac
        .remainder()
        .iter()
        .zip(bc.remainder())
        .fold(0.0, |t, (x, y)| t + x * y);
    for (x, y) in ac.zip(bc) {
        for i in 0..4 {
            acc[i] += x[i] * y[i];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (v, &u) in y.iter_mut().zip(x) {
        *v += a * u;
    }
}

/// Input offsets of the receptive field of output position 0, in weight
/// order (channel, kz, ky, kx).
fn field_offsets(channels: usize, e: usize) -> Vec<usize> {
    let mut off = Vec::with_capacity(channels * K3);
    for c in 0..channels {
        for kz in 0..KERNEL {
            for ky in 0..KERNEL {
                for kx in 0..KERNEL {
                    off.push(c * e * e * e + (kz * e + ky) * e + kx);
                }
            }
        }
    }
    off
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Dense {
        Dense {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let n = self.inputs();
        debug_assert_eq!(input.len(), n);
        self.weight
            .data()
            .chunks_exact(n)
            .zip(self.bias.data())
            .map(|(row, &b)| b + dot(row, input))
            .collect()
    }

    pub fn backward(
        &self,
        input: &[f64],
        grad_out: &[f64],
        grad_weight: &mut [f64],
        grad_bias: &mut [f64],
    ) -> Vec<f64> {
        let n = self.inputs();
        let mut grad_in = vec![0.0; n];
        for (o, &g) in grad_out.iter().enumerate() {
            grad_bias[o] += g;
            if g == 0.0 {
                continue;
            }
            let gw = &mut grad_weight[o * n..(o + 1) * n];
            for (w, x) in gw.iter_mut().zip(input) {
                *w += g * x;
            }
            let row = &self.weight.data()[o * n..(o + 1) * n];
            for (gi, w) in grad_in.iter_mut().zip(row) {
                *gi += g * w;
            }
        }
        grad_in
    }
}

pub fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes gradient entries whose activation was clipped by ReLU.
pub fn relu_mask(grad: &mut [f64], activation: &[f64]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_bias() {
        let mut conv = Conv3d::zeros(2, 3);
        conv.bias.data_mut().copy_from_slice(&[0.5, -1.0, 2.0]);
        let out = conv.forward(&vec![1.0; 2 * 125], 5);
        assert_eq!(out.len(), 3 * 27);
        assert!(out[..27].iter().all(|&v| v == 0.5));
        assert!(out[54..].iter().all(|&v| v == 2.0));
    }

    #[test]
    fn unit_kernel_sums_window() {
        let mut conv = Conv3d::zeros(1, 1);
        conv.weight.data_mut().fill(1.0);
        assert_eq!(conv.forward(&[1.0; 27], 3), vec![27.0]);
    }

    #[test]
    fn shifted_delta_kernel_picks_neighbour() {
        let mut conv = Conv3d::zeros(1, 1);
        // kernel offset (kz, ky, kx) = (2, 0, 1)
        conv.weight.data_mut()[2 * 9 + 1] = 1.0;
        let input: Vec<f64> = (0..64).map(|v| v as f64).collect();
        let out = conv.forward(&input, 4);
        // out[z][y][x] = in[z+2][y][x+1]
        assert_eq!(out[0], input[(2 * 4) * 4 + 1]);
        assert_eq!(out[7], input[((1 + 2) * 4 + 1) * 4 + 1 + 1]);
    }

    #[test]
    fn dense_weight_gradient_is_outer_product() {
        let layer = Dense::zeros(3, 2);
        let input = [1.0, -2.0, 0.5];
        let upstream = [0.25, -4.0];
        let mut gw = vec![0.0; 6];
        let mut gb = vec![0.0; 2];
        layer.backward(&input, &upstream, &mut gw, &mut gb);
        for a in 0..2 {
            for b in 0..3 {
                assert_eq!(gw[a * 3 + b], upstream[a] * input[b]);
            }
        }
        assert_eq!(gb, upstream.to_vec());
    }
}
