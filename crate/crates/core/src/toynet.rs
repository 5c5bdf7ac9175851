//! A minimal fixed-topology fully convolutional network producing m-channel
//! attention logits, with plain-SGD training. Small enough to overfit a
//! handful of synthetic scenes in seconds, which is all it exists for: it
//! exercises label rendering, the loss, decoding, and per-layer masked
//! inference end to end.

use crate::error::{Error, Result};
use crate::labels::{loss, loss_grad, AttentionMaps, LogitMaps};
use crate::maskconv::{
    conv_backward, dense_conv, masked_conv, ConvMask, ConvSpec, Tensor, WeightMatrix,
};
use crate::math;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Relu,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LayerSpec {
    pub conv: ConvSpec,
    pub activation: Activation,
}

/// Ordered convolution layers; the last layer emits the m logit channels
/// with no activation.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Smallest topology that exercises stride chaining, masking, and the
    /// m-channel head: 3x3 convs 3->8 (stride 2), 8->16 (stride 2), 16->m.
    pub fn default_topology(head_channels: usize) -> Self {
        let conv = |c_in, c_out, stride| ConvSpec { c_in, c_out, kernel: 3, stride, padding: 1 };
        NetworkSpec {
            layers: vec![
                LayerSpec { conv: conv(3, 8, 2), activation: Activation::Relu },
                LayerSpec { conv: conv(8, 16, 2), activation: Activation::Relu },
                LayerSpec { conv: conv(16, head_channels, 1), activation: Activation::None },
            ],
        }
    }

    /// Product of layer strides: pixels per logit cell.
    pub fn total_stride(&self) -> u32 {
        self.layers.iter().map(|l| l.conv.stride as u32).product()
    }

    pub fn head_channels(&self) -> usize {
        self.layers.last().map(|l| l.conv.c_out).unwrap_or(0)
    }

    pub fn validate(&self, head_channels: usize) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.conv.validate()?;
            if i > 0 && layer.conv.c_in != self.layers[i - 1].conv.c_out {
                return Err(Error::invalid(format!(
                    "layer {i} input channels do not chain from the previous layer"
                )));
            }
        }
        let last = self.layers.last().unwrap();
        if last.conv.c_out != head_channels {
            return Err(Error::invalid(format!(
                "head must emit {head_channels} channels, spec emits {}",
                last.conv.c_out
            )));
        }
        if last.activation != Activation::None {
            return Err(Error::invalid("head layer must be linear (logits)"));
        }
        Ok(())
    }
}

/// Weights and bias for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: WeightMatrix,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub layers: Vec<LayerParams>,
}

impl Parameters {
    fn zeros_like(net: &NetworkSpec) -> Self {
        Parameters {
            layers: net
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: WeightMatrix::zeros(l.conv.c_out, l.conv.patch_len()),
                    bias: vec![0.0; l.conv.c_out],
                })
                .collect(),
        }
    }
}

/// Seeded fan-in initialization: weights uniform in [-s, s] with
/// `s = sqrt(1 / (c_in * K^2))`, biases zero.
pub fn init_params(net: &NetworkSpec, seed: u64) -> Parameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = move || (rng.next_u32() >> 8) as f32 / (1u32 << 24) as f32 * 2.0 - 1.0;
    let layers = net
        .layers
        .iter()
        .map(|l| {
            let cols = l.conv.patch_len();
            let s = math::sqrt(1.0 / cols as f64) as f32;
            let data = (0..l.conv.c_out * cols).map(|_| uniform() * s).collect();
            LayerParams {
                weights: WeightMatrix::new(l.conv.c_out, cols, data)
                    .expect("init weights are finite"),
                bias: vec![0.0; l.conv.c_out],
            }
        })
        .collect();
    Parameters { layers }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: u32,
    pub seed: u64,
    pub batch_size: u32,
    /// Optional step decay: multiply the rate by `factor` every
    /// `every_iterations` steps. Off by default.
    pub decay_factor: f64,
    pub decay_every: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            iterations: 1000,
            seed: 0,
            batch_size: 1,
            decay_factor: 1.0,
            decay_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        Ok(())
    }
}

fn check_params(net: &NetworkSpec, params: &Parameters) -> Result<()> {
    if params.layers.len() != net.layers.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} layers", net.layers.len()),
            got: format!("{}", params.layers.len()),
        });
    }
    for (layer, p) in net.layers.iter().zip(params.layers.iter()) {
        if p.weights.dims() != (layer.conv.c_out, layer.conv.patch_len())
            || p.bias.len() != layer.conv.c_out
        {
            return Err(Error::ShapeMismatch {
                expected: format!("weights {}x{}", layer.conv.c_out, layer.conv.patch_len()),
                got: format!("weights {}x{}", p.weights.dims().0, p.weights.dims().1),
            });
        }
    }
    Ok(())
}

fn apply_bias_and_activation(
    out: &mut Tensor,
    bias: &[f32],
    activation: Activation,
    mask: Option<&ConvMask>,
) {
    let (c, h, w) = out.dims();
    for oc in 0..c {
        for y in 0..h {
            for x in 0..w {
                if let Some(m) = mask {
                    // inactive cells stay exactly zero
                    if !m.is_active(y, x) {
                        continue;
                    }
                }
                let v = out.at(oc, y, x) + bias[oc];
                *out.at_mut(oc, y, x) = match activation {
                    Activation::Relu => v.max(0.0),
                    Activation::None => v,
                };
            }
        }
    }
}

/// Forward pass keeping every layer output, for backprop.
fn forward_states(
    net: &NetworkSpec,
    params: &Parameters,
    image: &Tensor,
    masks: Option<&[ConvMask]>,
) -> Result<Vec<Tensor>> {
    check_params(net, params)?;
    if let Some(ms) = masks {
        if ms.len() != net.layers.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} layer masks", net.layers.len()),
                got: format!("{}", ms.len()),
            });
        }
    }
    let mut states = Vec::with_capacity(net.layers.len() + 1);
    states.push(image.clone());
    for (i, (layer, p)) in net.layers.iter().zip(params.layers.iter()).enumerate() {
        let input = states.last().unwrap();
        let mask = masks.map(|ms| &ms[i]);
        let mut out = match mask {
            Some(m) => masked_conv(input, &p.weights, &layer.conv, m)?,
            None => dense_conv(input, &p.weights, &layer.conv)?,
        };
        apply_bias_and_activation(&mut out, &p.bias, layer.activation, mask);
        states.push(out);
    }
    Ok(states)
}

/// Run the network; with per-layer masks, convolution is only evaluated at
/// active cells and inactive cells are exactly zero.
pub fn forward(
    net: &NetworkSpec,
    params: &Parameters,
    image: &Tensor,
    masks: Option<&[ConvMask]>,
) -> Result<LogitMaps> {
    let states = forward_states(net, params, image, masks)?;
    let out = states.last().unwrap();
    let (c, h, w) = out.dims();
    LogitMaps::new(c, h, w, out.data().to_vec())
}

/// Loss and full parameter gradient for one (image, target) pair.
pub fn loss_and_param_grads(
    net: &NetworkSpec,
    params: &Parameters,
    image: &Tensor,
    gt: &AttentionMaps,
) -> Result<(f64, Parameters)> {
    let states = forward_states(net, params, image, None)?;
    let out = states.last().unwrap();
    let (c, h, w) = out.dims();
    let logits = LogitMaps::new(c, h, w, out.data().to_vec())?;
    let value = loss(&logits, gt)?;
    let g = loss_grad(&logits, gt)?;
    let mut grad_out = Tensor::new(c, h, w, g.data().to_vec())?;

    let mut grads = Parameters::zeros_like(net);
    for i in (0..net.layers.len()).rev() {
        let layer = &net.layers[i];
        let input = &states[i];
        let output = &states[i + 1];
        // activation backward: relu passes gradient only where out > 0
        if layer.activation == Activation::Relu {
            for (g, &o) in grad_out.data_mut().iter_mut().zip(output.data().iter()) {
                if o <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        // bias gradient: spatial sum per channel
        let (oc_count, oh, ow) = grad_out.dims();
        for oc in 0..oc_count {
            let mut acc = 0.0f32;
            for y in 0..oh {
                for x in 0..ow {
                    acc += grad_out.at(oc, y, x);
                }
            }
            grads.layers[i].bias[oc] = acc;
        }
        let (w_grad, x_grad) =
            conv_backward(input, &params.layers[i].weights, &layer.conv, &grad_out)?;
        grads.layers[i].weights = w_grad;
        grad_out = x_grad;
    }
    Ok((value, grads))
}

/// Training output: final parameters plus the per-iteration mean batch loss.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: Parameters,
    pub loss_trace: Vec<f64>,
}

/// Plain SGD on the sigmoid cross-entropy loss. Batches walk the dataset
/// cyclically in order, so training is deterministic for a fixed config.
pub fn train(
    net: &NetworkSpec,
    params: &Parameters,
    dataset: &[(Tensor, AttentionMaps)],
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    check_params(net, params)?;
    if dataset.is_empty() && cfg.iterations > 0 {
        return Err(Error::invalid("training needs at least one sample"));
    }
    let mut current = params.clone();
    let mut trace = Vec::with_capacity(cfg.iterations as usize);
    let batch = cfg.batch_size as usize;

    for it in 0..cfg.iterations {
        let mut batch_loss = 0.0f64;
        let mut batch_grads = Parameters::zeros_like(net);
        for j in 0..batch {
            let idx = (it as usize * batch + j) % dataset.len();
            let (image, gt) = &dataset[idx];
            let (value, grads) = loss_and_param_grads(net, &current, image, gt)?;
            batch_loss += value;
            for (acc, g) in batch_grads.layers.iter_mut().zip(grads.layers.iter()) {
                for (a, b) in acc.weights.data_mut().iter_mut().zip(g.weights.data().iter()) {
                    *a += b;
                }
                for (a, b) in acc.bias.iter_mut().zip(g.bias.iter()) {
                    *a += b;
                }
            }
        }
        batch_loss /= batch as f64;
        if !batch_loss.is_finite() {
            return Err(Error::TrainingDiverged { iteration: it, loss: batch_loss });
        }
        trace.push(batch_loss);

        let lr = if cfg.decay_every > 0 {
            let steps = (it / cfg.decay_every) as i32;
            let mut rate = cfg.learning_rate;
            for _ in 0..steps {
                rate *= cfg.decay_factor;
            }
            rate
        } else {
            cfg.learning_rate
        };
        let scale = (lr / batch as f64) as f32;
        for (p, g) in current.layers.iter_mut().zip(batch_grads.layers.iter()) {
            for (w, d) in p.weights.data_mut().iter_mut().zip(g.weights.data().iter()) {
                *w -= scale * d;
            }
            for (b, d) in p.bias.iter_mut().zip(g.bias.iter()) {
                *b -= scale * d;
            }
        }
    }
    Ok(TrainResult { params: current, loss_trace: trace })
}

/// Max-pool downsampling of a mask: an output cell is active when any
/// covered input cell is, so active regions never shrink away.
pub fn mask_downsample(mask: &ConvMask, factor: usize) -> Result<ConvMask> {
    if factor == 0 {
        return Err(Error::invalid("downsample factor must be at least 1"));
    }
    if factor == 1 {
        return Ok(mask.clone());
    }
    let (h, w) = mask.dims();
    let oh = h.div_ceil(factor);
    let ow = w.div_ceil(factor);
    let mut out = ConvMask::empty(oh, ow);
    for y in 0..h {
        for x in 0..w {
            if mask.is_active(y, x) {
                out.set(y / factor, x / factor, true);
            }
        }
    }
    Ok(out)
}

/// Per-layer masks from one spatial mask for any conv stack: each layer's
/// mask is the spatial grid downsampled by `cumulative_stride / mask_stride`,
/// which must divide evenly. Output dims must match the layer's own output
/// dims, which holds for same-padded convs.
pub fn masks_for_layers(
    layers: &[ConvSpec],
    spatial: &crate::decode::SpatialMask,
) -> Result<Vec<ConvMask>> {
    let base = spatial.to_conv_mask();
    let (input_h, input_w) = spatial.target_dims();
    let mut dims = (input_h as usize, input_w as usize);
    let mut cumulative = 1usize;
    let mut out = Vec::with_capacity(layers.len());
    for conv in layers {
        dims = conv.out_dims(dims.0, dims.1)?;
        cumulative *= conv.stride;
        let stride = spatial.stride() as usize;
        if cumulative % stride != 0 {
            return Err(Error::invalid(format!(
                "cumulative stride {cumulative} is not a multiple of the mask stride {stride}"
            )));
        }
        let mask = mask_downsample(&base, cumulative / stride)?;
        if mask.dims() != dims {
            return Err(Error::ShapeMismatch {
                expected: format!("layer mask {}x{}", dims.0, dims.1),
                got: format!("{}x{}", mask.dims().0, mask.dims().1),
            });
        }
        out.push(mask);
    }
    Ok(out)
}

/// [`masks_for_layers`] over a network spec.
pub fn masks_from_spatial(
    net: &NetworkSpec,
    spatial: &crate::decode::SpatialMask,
) -> Result<Vec<ConvMask>> {
    let layers: Vec<ConvSpec> = net.layers.iter().map(|l| l.conv).collect();
    masks_for_layers(&layers, spatial)
}
