//! Ground-truth attention maps and their sigmoid cross-entropy supervision.
//!
//! A face writes a 1 into the channel of its scale bin at its attention
//! center cell, and geometrically decaying values (1/2)^|i| into the four
//! neighboring bins on each side at the same cell. Contributions from
//! multiple faces add, and everything is clipped to 1. All written values
//! are dyadic, so rendering is exact in f32 and independent of box order.

use crate::error::{Error, Result};
use crate::geometry::{face_size, BBox};
use crate::math;
use crate::scalemap::{size_to_bin, ScaleBin, ScaleMapConfig};
use crate::SCALE_NEIGHBORHOOD;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Per-bin decay of the neighbor spread.
pub const SPREAD_DECAY: f32 = 0.5;

/// The m-channel scale/spatial response grid over an image, values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMaps {
    channels: usize,
    h_f: usize,
    w_f: usize,
    stride: u32,
    image_h: u32,
    image_w: u32,
    data: Vec<f32>,
}

fn ceil_div(a: u32, b: u32) -> usize {
    ((a + b - 1) / b) as usize
}

impl AttentionMaps {
    pub fn zeros(channels: usize, image_dims: (u32, u32), stride: u32) -> Result<Self> {
        if channels == 0 || stride == 0 || image_dims.0 == 0 || image_dims.1 == 0 {
            return Err(Error::invalid("attention map dims and stride must be positive"));
        }
        let h_f = ceil_div(image_dims.0, stride);
        let w_f = ceil_div(image_dims.1, stride);
        Ok(AttentionMaps {
            channels,
            h_f,
            w_f,
            stride,
            image_h: image_dims.0,
            image_w: image_dims.1,
            data: vec![0.0; channels * h_f * w_f],
        })
    }

    /// Wrap raw data; values must already be in [0, 1].
    pub fn from_data(
        channels: usize,
        image_dims: (u32, u32),
        stride: u32,
        data: Vec<f32>,
    ) -> Result<Self> {
        let mut maps = Self::zeros(channels, image_dims, stride)?;
        if data.len() != maps.data.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", maps.data.len()),
                got: format!("{}", data.len()),
            });
        }
        if data.iter().any(|v| !(*v >= 0.0 && *v <= 1.0)) {
            return Err(Error::invalid("attention values must lie in [0, 1]"));
        }
        maps.data = data;
        Ok(maps)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn feature_dims(&self) -> (usize, usize) {
        (self.h_f, self.w_f)
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    pub fn image_dims(&self) -> (u32, u32) {
        (self.image_h, self.image_w)
    }

    pub fn image_long_side(&self) -> f64 {
        u32::max(self.image_h, self.image_w) as f64
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, channel: usize, v: usize, u: usize) -> f32 {
        self.data[(channel * self.h_f + v) * self.w_f + u]
    }

    #[inline]
    fn at_mut(&mut self, channel: usize, v: usize, u: usize) -> &mut f32 {
        &mut self.data[(channel * self.h_f + v) * self.w_f + u]
    }

    /// One channel as a contiguous slice (row-major v, u).
    pub fn channel_plane(&self, channel: usize) -> &[f32] {
        let len = self.h_f * self.w_f;
        &self.data[channel * len..(channel + 1) * len]
    }
}

/// Feature-map cell and scale bin a face box maps to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionCenter {
    pub bin: ScaleBin,
    pub u: usize,
    pub v: usize,
}

/// Map a box to its attention center: box center divided by the stride,
/// floored onto the cell grid; the bin comes from the face size. The box is
/// clipped to the image first; a box fully outside is an error.
pub fn attention_center(
    bbox: &BBox,
    stride: u32,
    image_dims: (u32, u32),
    cfg: &ScaleMapConfig,
) -> Result<AttentionCenter> {
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    let image = BBox::new(0.0, 0.0, image_dims.1 as f64, image_dims.0 as f64)?;
    let clipped = bbox.intersect(&image).ok_or_else(|| {
        Error::OutOfBounds(format!(
            "box ({},{})-({},{}) lies outside the {}x{} image",
            bbox.x_tl, bbox.y_tl, bbox.x_dr, bbox.y_dr, image_dims.0, image_dims.1
        ))
    })?;

    let center = clipped.center();
    let h_f = ceil_div(image_dims.0, stride);
    let w_f = ceil_div(image_dims.1, stride);
    let u = (math::floor(center.x / stride as f64) as usize).min(w_f - 1);
    let v = (math::floor(center.y / stride as f64) as usize).min(h_f - 1);

    let l_max = u32::max(image_dims.0, image_dims.1) as f64;
    let (bin, _raw) = size_to_bin(face_size(&clipped), l_max, cfg)?;
    Ok(AttentionCenter { bin, u, v })
}

/// Render ground-truth attention maps for a set of boxes.
pub fn render_labels(
    boxes: &[BBox],
    image_dims: (u32, u32),
    stride: u32,
    cfg: &ScaleMapConfig,
) -> Result<AttentionMaps> {
    let mut maps = AttentionMaps::zeros(cfg.num_bins as usize, image_dims, stride)?;
    let reach = SCALE_NEIGHBORHOOD as i64;
    for bbox in boxes {
        let c = attention_center(bbox, stride, image_dims, cfg)?;
        let b0 = c.bin.channel() as i64;
        for i in -reach..=reach {
            let channel = b0 + i;
            if channel < 0 || channel >= maps.channels as i64 {
                continue;
            }
            let contribution = if i == 0 {
                1.0
            } else {
                // powi on the f32 decay: exact for powers of two
                let mut val = 1.0f32;
                for _ in 0..i.unsigned_abs() {
                    val *= SPREAD_DECAY;
                }
                val
            };
            *maps.at_mut(channel as usize, c.v, c.u) += contribution;
        }
    }
    for value in maps.data.iter_mut() {
        *value = value.min(1.0);
    }
    Ok(maps)
}

/// Pre-sigmoid network outputs with the same layout as [`AttentionMaps`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMaps {
    channels: usize,
    h_f: usize,
    w_f: usize,
    data: Vec<f32>,
}

impl LogitMaps {
    pub fn new(channels: usize, h_f: usize, w_f: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * h_f * w_f {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", channels * h_f * w_f),
                got: format!("{}", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("logits must be finite"));
        }
        Ok(LogitMaps { channels, h_f, w_f, data })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.h_f, self.w_f)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Elementwise sigmoid, producing maps decodable by the proposal stage.
    pub fn to_attention(&self, image_dims: (u32, u32), stride: u32) -> Result<AttentionMaps> {
        let data = self.data.iter().map(|&z| sigmoid(z as f64) as f32).collect();
        AttentionMaps::from_data(self.channels, image_dims, stride, data)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + math::exp(-z))
    } else {
        let e = math::exp(z);
        e / (1.0 + e)
    }
}

fn check_same_shape(logits: &LogitMaps, gt: &AttentionMaps) -> Result<()> {
    if logits.channels != gt.channels || logits.h_f != gt.h_f || logits.w_f != gt.w_f {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{}x{}", gt.channels, gt.h_f, gt.w_f),
            got: format!("{}x{}x{}", logits.channels, logits.h_f, logits.w_f),
        });
    }
    Ok(())
}

/// Mean sigmoid cross entropy between logits and target maps.
///
/// Per element, the numerically stable form
/// `max(z, 0) - z*p + ln(1 + exp(-|z|))` is accumulated in f64.
pub fn loss(logits: &LogitMaps, gt: &AttentionMaps) -> Result<f64> {
    check_same_shape(logits, gt)?;
    let mut total = 0.0f64;
    for (&z, &p) in logits.data.iter().zip(gt.data.iter()) {
        total += bce_term(z as f64, p as f64);
    }
    Ok(total / logits.data.len() as f64)
}

#[inline]
fn bce_term(z: f64, p: f64) -> f64 {
    f64::max(z, 0.0) - z * p + math::ln_1p(math::exp(-math::abs(z)))
}

/// Elementwise gradient of [`loss`] with respect to the logits:
/// `(sigmoid(z) - p) / N`.
pub fn loss_grad(logits: &LogitMaps, gt: &AttentionMaps) -> Result<LogitMaps> {
    check_same_shape(logits, gt)?;
    let n = logits.data.len() as f64;
    let data = logits
        .data
        .iter()
        .zip(gt.data.iter())
        .map(|(&z, &p)| ((sigmoid(z as f64) - p as f64) / n) as f32)
        .collect();
    LogitMaps::new(logits.channels, logits.h_f, logits.w_f, data)
}
