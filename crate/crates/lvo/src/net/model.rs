//! Dual-stream convolutional regressor and its hand-derived backward pass.
//!
//! Two stride-2 conv stacks (image-plane flow channels in one, the
//! depth-change channel in the other) are concatenated channelwise, squeezed
//! by a 1x1 convolution, flattened, and fed to two fully connected heads: a
//! 6-vector for the translation distribution parameters plus height, and a
//! 3-vector of Euler angles. All activations are ReLU except the final layer
//! of each head. Parameters and activations are `f64` end to end so the
//! analytic gradients can be validated against central finite differences at
//! tight tolerance.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Flow3D;

/// Network architecture parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LvoConfig {
    pub input_width: usize,
    pub input_height: usize,
    /// Output channels of each stride-2 conv layer, per stream.
    pub stream_channels: Vec<usize>,
    /// The 2n concatenated channels are squeezed down to n / squeeze_divisor.
    pub squeeze_divisor: usize,
    /// Width of the two hidden layers in each regressor head.
    pub fc_hidden: usize,
}

impl Default for LvoConfig {
    fn default() -> Self {
        LvoConfig {
            input_width: 320,
            input_height: 96,
            stream_channels: vec![64, 128, 256, 512],
            squeeze_divisor: 4,
            fc_hidden: 128,
        }
    }
}

impl LvoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stream_channels.is_empty() {
            return Err(Error::invalid("stream_channels must not be empty"));
        }
        if self.stream_channels.iter().any(|&c| c == 0) {
            return Err(Error::invalid("stream channel counts must be >= 1"));
        }
        let n = *self.stream_channels.last().unwrap();
        if self.squeeze_divisor == 0 || n % self.squeeze_divisor != 0 {
            return Err(Error::invalid(format!(
                "squeeze_divisor {} must divide the final channel count {n}",
                self.squeeze_divisor
            )));
        }
        if self.fc_hidden == 0 {
            return Err(Error::invalid("fc_hidden must be >= 1"));
        }
        let halvings = self.stream_channels.len() as u32;
        let div = 1usize << halvings;
        if self.input_width == 0
            || self.input_height == 0
            || self.input_width % div != 0
            || self.input_height % div != 0
        {
            return Err(Error::invalid(format!(
                "input {}x{} must be divisible by 2^{halvings} (one halving per conv layer)",
                self.input_width, self.input_height
            )));
        }
        Ok(())
    }

    /// Spatial size of the per-stream feature maps after all conv layers.
    pub fn feature_dims(&self) -> (usize, usize) {
        let div = 1usize << self.stream_channels.len();
        (self.input_width / div, self.input_height / div)
    }

    pub fn squeeze_channels(&self) -> usize {
        self.stream_channels.last().unwrap() / self.squeeze_divisor
    }

    /// Length of the flattened feature vector seen by the regressor heads.
    pub fn feature_len(&self) -> usize {
        let (w, h) = self.feature_dims();
        self.squeeze_channels() * w * h
    }
}

/// Channel-major activation block: index `(c * height + y) * width + x`.
#[derive(Debug, Clone)]
pub(crate) struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    fn zeros(c: usize, h: usize, w: usize) -> Tensor {
        Tensor {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// `[out_ch][in_ch][kernel][kernel]`, flattened.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    fn out_dims(&self, in_h: usize, in_w: usize) -> (usize, usize) {
        (
            (in_h + 2 * self.pad - self.kernel) / self.stride + 1,
            (in_w + 2 * self.pad - self.kernel) / self.stride + 1,
        )
    }

    fn forward(&self, input: &Tensor, relu: bool) -> Tensor {
        debug_assert_eq!(input.c, self.in_ch);
        let (oh, ow) = self.out_dims(input.h, input.w);
        let mut out = Tensor::zeros(self.out_ch, oh, ow);
        let k = self.kernel;
        for oc in 0..self.out_ch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = self.bias[oc];
                    for ic in 0..self.in_ch {
                        for ky in 0..k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= input.h as isize {
                                continue;
                            }
                            let in_row = (ic * input.h + iy as usize) * input.w;
                            let w_row = ((oc * self.in_ch + ic) * k + ky) * k;
                            for kx in 0..k {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= input.w as isize {
                                    continue;
                                }
                                acc += self.weight[w_row + kx] * input.data[in_row + ix as usize];
                            }
                        }
                    }
                    if relu && acc < 0.0 {
                        acc = 0.0;
                    }
                    out.data[(oc * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    /// Accumulates weight/bias gradients into `grad` and returns the input
    /// gradient. `output` is the post-activation tensor from the forward
    /// pass; when `relu` is set the upstream gradient is masked by it.
    fn backward(
        &self,
        input: &Tensor,
        output: &Tensor,
        d_out: &[f64],
        relu: bool,
        grad: &mut (Vec<f64>, Vec<f64>),
    ) -> Tensor {
        let (oh, ow) = (output.h, output.w);
        let mut d_in = Tensor::zeros(input.c, input.h, input.w);
        let k = self.kernel;
        for oc in 0..self.out_ch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let oi = (oc * oh + oy) * ow + ox;
                    let mut g = d_out[oi];
                    if relu && output.data[oi] <= 0.0 {
                        g = 0.0;
                    }
                    if g == 0.0 {
                        continue;
                    }
                    grad.1[oc] += g;
                    for ic in 0..self.in_ch {
                        for ky in 0..k {
                            let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                            if iy < 0 || iy >= input.h as isize {
                                continue;
                            }
                            let in_row = (ic * input.h + iy as usize) * input.w;
                            let w_row = ((oc * self.in_ch + ic) * k + ky) * k;
                            for kx in 0..k {
                                let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                if ix < 0 || ix >= input.w as isize {
                                    continue;
                                }
                                grad.0[w_row + kx] += g * input.data[in_row + ix as usize];
                                d_in.data[in_row + ix as usize] += g * self.weight[w_row + kx];
                            }
                        }
                    }
                }
            }
        }
        d_in
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FcLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `[out_dim][in_dim]`, flattened.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl FcLayer {
    fn forward(&self, x: &[f64], relu: bool) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut out = Vec::with_capacity(self.out_dim);
        for o in 0..self.out_dim {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias[o];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            if relu && acc < 0.0 {
                acc = 0.0;
            }
            out.push(acc);
        }
        out
    }

    fn backward(
        &self,
        x: &[f64],
        y: &[f64],
        d_y: &[f64],
        relu: bool,
        grad: &mut (Vec<f64>, Vec<f64>),
    ) -> Vec<f64> {
        let mut d_x = vec![0.0; self.in_dim];
        for o in 0..self.out_dim {
            let mut g = d_y[o];
            if relu && y[o] <= 0.0 {
                g = 0.0;
            }
            if g == 0.0 {
                continue;
            }
            grad.1[o] += g;
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let d_row = &mut grad.0[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                d_row[i] += g * x[i];
                d_x[i] += g * row[i];
            }
        }
        d_x
    }
}

/// The full regressor: two conv streams, squeeze, and two FC heads.
#[derive(Debug, Clone, PartialEq)]
pub struct LvoModel {
    config: LvoConfig,
    pub(crate) flow_stream: Vec<ConvLayer>,
    pub(crate) depth_stream: Vec<ConvLayer>,
    pub(crate) squeeze: ConvLayer,
    pub(crate) trans_head: Vec<FcLayer>,
    pub(crate) rot_head: Vec<FcLayer>,
}

fn conv_shape(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize) -> ConvLayer {
    ConvLayer {
        in_ch,
        out_ch,
        kernel,
        stride,
        pad,
        weight: vec![0.0; out_ch * in_ch * kernel * kernel],
        bias: vec![0.0; out_ch],
    }
}

fn fc_shape(in_dim: usize, out_dim: usize) -> FcLayer {
    FcLayer {
        in_dim,
        out_dim,
        weight: vec![0.0; out_dim * in_dim],
        bias: vec![0.0; out_dim],
    }
}

impl LvoModel {
    /// All-zero parameters (useful as a fixture; a zero network outputs its
    /// final-layer biases).
    pub fn zeros(config: &LvoConfig) -> Result<Self> {
        config.validate()?;
        let mut flow_stream = Vec::new();
        let mut depth_stream = Vec::new();
        for (i, &out_ch) in config.stream_channels.iter().enumerate() {
            let prev = if i == 0 { 0 } else { config.stream_channels[i - 1] };
            flow_stream.push(conv_shape(if i == 0 { 2 } else { prev }, out_ch, 3, 2, 1));
            depth_stream.push(conv_shape(if i == 0 { 1 } else { prev }, out_ch, 3, 2, 1));
        }
        let n = *config.stream_channels.last().unwrap();
        let squeeze = conv_shape(2 * n, config.squeeze_channels(), 1, 1, 0);
        let feat = config.feature_len();
        let h = config.fc_hidden;
        let trans_head = vec![fc_shape(feat, h), fc_shape(h, h), fc_shape(h, 6)];
        let rot_head = vec![fc_shape(feat, h), fc_shape(h, h), fc_shape(h, 3)];
        Ok(LvoModel {
            config: config.clone(),
            flow_stream,
            depth_stream,
            squeeze,
            trans_head,
            rot_head,
        })
    }

    /// Glorot-uniform weights (`±sqrt(6 / (fan_in + fan_out))`), zero biases,
    /// drawn from a seeded generator in declaration order.
    pub fn init(config: &LvoConfig, seed: u64) -> Result<Self> {
        let mut model = LvoModel::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for conv in model
            .flow_stream
            .iter_mut()
            .chain(model.depth_stream.iter_mut())
            .chain(std::iter::once(&mut model.squeeze))
        {
            let k2 = conv.kernel * conv.kernel;
            let limit = (6.0 / ((conv.in_ch + conv.out_ch) * k2) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            for w in conv.weight.iter_mut() {
                *w = dist.sample(&mut rng);
            }
        }
        for fc in model.trans_head.iter_mut().chain(model.rot_head.iter_mut()) {
            let limit = (6.0 / (fc.in_dim + fc.out_dim) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            for w in fc.weight.iter_mut() {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(model)
    }

    pub fn config(&self) -> &LvoConfig {
        &self.config
    }

    /// Parameter tensors in declaration order (the order used by the
    /// checkpoint format and the flattened parameter vector).
    pub(crate) fn tensor_refs(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for l in &self.flow_stream {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        for l in &self.depth_stream {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out.push(&self.squeeze.weight);
        out.push(&self.squeeze.bias);
        for l in &self.trans_head {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        for l in &self.rot_head {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    pub(crate) fn tensor_refs_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.flow_stream {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for l in &mut self.depth_stream {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.squeeze.weight);
        out.push(&mut self.squeeze.bias);
        for l in &mut self.trans_head {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for l in &mut self.rot_head {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    /// `(name, length)` of every parameter tensor in declaration order.
    pub fn tensor_shapes(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for (i, l) in self.flow_stream.iter().enumerate() {
            out.push((format!("flow_conv{i}.weight"), l.weight.len()));
            out.push((format!("flow_conv{i}.bias"), l.bias.len()));
        }
        for (i, l) in self.depth_stream.iter().enumerate() {
            out.push((format!("depth_conv{i}.weight"), l.weight.len()));
            out.push((format!("depth_conv{i}.bias"), l.bias.len()));
        }
        out.push(("squeeze.weight".into(), self.squeeze.weight.len()));
        out.push(("squeeze.bias".into(), self.squeeze.bias.len()));
        for (i, l) in self.trans_head.iter().enumerate() {
            out.push((format!("trans_fc{i}.weight"), l.weight.len()));
            out.push((format!("trans_fc{i}.bias"), l.bias.len()));
        }
        for (i, l) in self.rot_head.iter().enumerate() {
            out.push((format!("rot_fc{i}.weight"), l.weight.len()));
            out.push((format!("rot_fc{i}.bias"), l.bias.len()));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensor_refs().iter().map(|t| t.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for t in self.tensor_refs() {
            out.extend_from_slice(t);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(format!(
                "parameter vector has {} entries, model needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for t in self.tensor_refs_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Sum of squares over every trainable parameter (the regularizer input).
    pub fn params_sq_norm(&self) -> f64 {
        self.tensor_refs()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum()
    }

    fn split_input(&self, sample: &Flow3D) -> Result<(Tensor, Tensor)> {
        if sample.width != self.config.input_width || sample.height != self.config.input_height {
            return Err(Error::shape(format!(
                "raster {}x{} does not match network input {}x{}",
                sample.width, sample.height, self.config.input_width, self.config.input_height
            )));
        }
        let n = sample.width * sample.height;
        let mut a = Tensor::zeros(2, sample.height, sample.width);
        for i in 0..n {
            a.data[i] = sample.fx[i] as f64;
            a.data[n + i] = sample.fy[i] as f64;
        }
        let mut b = Tensor::zeros(1, sample.height, sample.width);
        for i in 0..n {
            b.data[i] = sample.fz[i] as f64;
        }
        Ok((a, b))
    }

    fn forward_sample(&self, sample: &Flow3D) -> Result<ForwardCache> {
        let (a, b) = self.split_input(sample)?;
        let mut flow_acts = vec![a];
        for conv in &self.flow_stream {
            let next = conv.forward(flow_acts.last().unwrap(), true);
            flow_acts.push(next);
        }
        let mut depth_acts = vec![b];
        for conv in &self.depth_stream {
            let next = conv.forward(depth_acts.last().unwrap(), true);
            depth_acts.push(next);
        }
        let fa = flow_acts.last().unwrap();
        let da = depth_acts.last().unwrap();
        let mut concat = Tensor::zeros(fa.c + da.c, fa.h, fa.w);
        concat.data[..fa.data.len()].copy_from_slice(&fa.data);
        concat.data[fa.data.len()..].copy_from_slice(&da.data);
        let squeeze_out = self.squeeze.forward(&concat, true);
        let features = squeeze_out.data.clone();

        let t_h1 = self.trans_head[0].forward(&features, true);
        let t_h2 = self.trans_head[1].forward(&t_h1, true);
        let raw6_v = self.trans_head[2].forward(&t_h2, false);
        let r_h1 = self.rot_head[0].forward(&features, true);
        let r_h2 = self.rot_head[1].forward(&r_h1, true);
        let raw3_v = self.rot_head[2].forward(&r_h2, false);

        Ok(ForwardCache {
            flow_acts,
            depth_acts,
            concat,
            squeeze_out,
            t_h1,
            t_h2,
            r_h1,
            r_h2,
            raw6: raw6_v.try_into().expect("translation head emits 6 values"),
            raw3: raw3_v.try_into().expect("rotation head emits 3 values"),
        })
    }

    /// Raw regressor outputs for a batch: per sample the 6-vector
    /// `[mu_x, mu_z, raw_sigma_x, raw_sigma_z, raw_rho, y]` and the Euler
    /// 3-vector `[e_z, e_y, e_x]`.
    pub fn forward(&self, batch: &[&Flow3D]) -> Result<Vec<([f64; 6], [f64; 3])>> {
        if batch.is_empty() {
            return Err(Error::invalid("forward needs a non-empty batch"));
        }
        batch
            .iter()
            .map(|s| self.forward_sample(s).map(|c| (c.raw6, c.raw3)))
            .collect()
    }

    /// Exact parameter gradients of the forward computation, summed over the
    /// batch. `upstream` holds the loss derivative with respect to each
    /// sample's raw outputs.
    pub fn backward(
        &self,
        batch: &[&Flow3D],
        upstream: &[([f64; 6], [f64; 3])],
    ) -> Result<Gradients> {
        if batch.is_empty() {
            return Err(Error::invalid("backward needs a non-empty batch"));
        }
        if batch.len() != upstream.len() {
            return Err(Error::shape(format!(
                "{} samples but {} upstream gradients",
                batch.len(),
                upstream.len()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        for (sample, (d6, d3)) in batch.iter().zip(upstream) {
            let cache = self.forward_sample(sample)?;
            self.backward_sample(&cache, d6, d3, &mut grads);
        }
        Ok(grads)
    }

    fn backward_sample(&self, cache: &ForwardCache, d6: &[f64; 6], d3: &[f64; 3], g: &mut Gradients) {
        // Heads (output layers are linear; hidden layers ReLU).
        let d_t_h2 =
            self.trans_head[2].backward(&cache.t_h2, &cache.raw6, d6, false, &mut g.trans_head[2]);
        let d_t_h1 =
            self.trans_head[1].backward(&cache.t_h1, &cache.t_h2, &d_t_h2, true, &mut g.trans_head[1]);
        let d_feat_t = self.trans_head[0].backward(
            &cache.squeeze_out.data,
            &cache.t_h1,
            &d_t_h1,
            true,
            &mut g.trans_head[0],
        );
        let d_r_h2 =
            self.rot_head[2].backward(&cache.r_h2, &cache.raw3, d3, false, &mut g.rot_head[2]);
        let d_r_h1 =
            self.rot_head[1].backward(&cache.r_h1, &cache.r_h2, &d_r_h2, true, &mut g.rot_head[1]);
        let d_feat_r = self.rot_head[0].backward(
            &cache.squeeze_out.data,
            &cache.r_h1,
            &d_r_h1,
            true,
            &mut g.rot_head[0],
        );
        // Both heads read the same features.
        let d_squeeze_out: Vec<f64> = d_feat_t
            .iter()
            .zip(d_feat_r.iter())
            .map(|(a, b)| a + b)
            .collect();

        let d_concat = self.squeeze.backward(
            &cache.concat,
            &cache.squeeze_out,
            &d_squeeze_out,
            true,
            &mut g.squeeze,
        );

        // Split the concat gradient back into the two streams.
        let fa = cache.flow_acts.last().unwrap();
        let (d_flow_top, d_depth_top) = d_concat.data.split_at(fa.data.len());

        let mut d_out = d_flow_top.to_vec();
        for i in (0..self.flow_stream.len()).rev() {
            let d_in = self.flow_stream[i].backward(
                &cache.flow_acts[i],
                &cache.flow_acts[i + 1],
                &d_out,
                true,
                &mut g.flow_stream[i],
            );
            d_out = d_in.data;
        }
        let mut d_out = d_depth_top.to_vec();
        for i in (0..self.depth_stream.len()).rev() {
            let d_in = self.depth_stream[i].backward(
                &cache.depth_acts[i],
                &cache.depth_acts[i + 1],
                &d_out,
                true,
                &mut g.depth_stream[i],
            );
            d_out = d_in.data;
        }
    }
}

struct ForwardCache {
    flow_acts: Vec<Tensor>,
    depth_acts: Vec<Tensor>,
    concat: Tensor,
    squeeze_out: Tensor,
    t_h1: Vec<f64>,
    t_h2: Vec<f64>,
    r_h1: Vec<f64>,
    r_h2: Vec<f64>,
    raw6: [f64; 6],
    raw3: [f64; 3],
}

/// Parameter gradients, mirroring the model's tensors.
#[derive(Debug, Clone)]
pub struct Gradients {
    flow_stream: Vec<(Vec<f64>, Vec<f64>)>,
    depth_stream: Vec<(Vec<f64>, Vec<f64>)>,
    squeeze: (Vec<f64>, Vec<f64>),
    trans_head: Vec<(Vec<f64>, Vec<f64>)>,
    rot_head: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    fn zeros_like(model: &LvoModel) -> Gradients {
        let conv_zero =
            |l: &ConvLayer| (vec![0.0; l.weight.len()], vec![0.0; l.bias.len()]);
        let fc_zero = |l: &FcLayer| (vec![0.0; l.weight.len()], vec![0.0; l.bias.len()]);
        Gradients {
            flow_stream: model.flow_stream.iter().map(conv_zero).collect(),
            depth_stream: model.depth_stream.iter().map(conv_zero).collect(),
            squeeze: conv_zero(&model.squeeze),
            trans_head: model.trans_head.iter().map(fc_zero).collect(),
            rot_head: model.rot_head.iter().map(fc_zero).collect(),
        }
    }

    /// Flatten in the model's declaration order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.flow_stream.iter().chain(self.depth_stream.iter()) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out.extend_from_slice(&self.squeeze.0);
        out.extend_from_slice(&self.squeeze.1);
        for (w, b) in self.trans_head.iter().chain(self.rot_head.iter()) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}
