//! Decoding attention maps into scale proposals, face regions, spatial
//! masks, and an image-pyramid plan.
//!
//! The scale signal is the per-channel maximum of the maps. Proposals come
//! from smoothing it and running greedy 1-D non-maximum suppression. For a
//! proposal at bin `b` the location map takes, per cell, the maximum over
//! channels `b ± 4` (absorbing scale estimation error), is thresholded, and
//! its connected components become face regions. Regions are rasterized
//! into a binary mask over the resized image the pyramid level will run at.

use crate::error::{Error, Result};
use crate::labels::AttentionMaps;
use crate::math;
use crate::scalemap::{bin_to_size, zoom_target_length, ScaleBin, ScaleMapConfig};
use crate::SCALE_NEIGHBORHOOD;
use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

/// Per-bin maxima of the attention maps, the 1-D signal scale proposals are
/// picked from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleVector {
    values: Vec<f32>,
}

impl ScaleVector {
    pub fn new(values: Vec<f32>) -> Self {
        ScaleVector { values }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A surviving scale-bin peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleProposal {
    pub bin: ScaleBin,
    pub score: f32,
}

/// A face region decoded from the location map, in original-image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionProposal {
    /// Cell-center position mapped back to image pixels.
    pub center: (f64, f64),
    /// Square side length, the nominal size of the proposal's bin.
    pub side: f64,
    pub bin: ScaleBin,
    pub score: f32,
}

/// Binary attention mask over a resized image, at detector-stride cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpatialMask {
    h: usize,
    w: usize,
    stride: u32,
    target_dims: (u32, u32),
    grid: Vec<u8>,
}

impl SpatialMask {
    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn stride(&self) -> u32 {
        self.stride
    }

    /// Dims of the resized image this mask covers.
    pub fn target_dims(&self) -> (u32, u32) {
        self.target_dims
    }

    pub fn grid(&self) -> &[u8] {
        &self.grid
    }

    #[inline]
    pub fn is_active(&self, y: usize, x: usize) -> bool {
        self.grid[y * self.w + x] != 0
    }

    pub fn active_cells(&self) -> u64 {
        self.grid.iter().map(|&v| v as u64).sum()
    }

    pub fn density(&self) -> f64 {
        if self.grid.is_empty() {
            0.0
        } else {
            self.active_cells() as f64 / self.grid.len() as f64
        }
    }

    pub fn to_conv_mask(&self) -> crate::maskconv::ConvMask {
        crate::maskconv::ConvMask::new(self.h, self.w, self.grid.clone())
            .expect("spatial mask grid is already binary")
    }
}

/// One pyramid level: resize the image so its long side is
/// `target_long_side`, then run the detector only where the mask is active.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel {
    pub target_long_side: f64,
    pub mask: SpatialMask,
    pub proposal: ScaleProposal,
}

/// Planned resize levels, sorted by target long side descending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PyramidPlan {
    pub levels: Vec<PyramidLevel>,
}

/// S_v: per-channel maximum of the attention maps.
pub fn scale_vector(maps: &AttentionMaps) -> ScaleVector {
    let values = (0..maps.channels())
        .map(|c| maps.channel_plane(c).iter().copied().fold(0.0f32, f32::max))
        .collect();
    ScaleVector { values }
}

/// Centered moving average with edge truncation; window 1 is the identity.
pub fn smooth(s: &ScaleVector, window: usize) -> Result<ScaleVector> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::invalid("smoothing window must be odd and positive"));
    }
    let n = s.values.len();
    let half = window / 2;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = usize::min(i + half, n.saturating_sub(1));
        let mut sum = 0.0f32;
        for v in &s.values[lo..=hi] {
            sum += v;
        }
        out.push(sum / (hi - lo + 1) as f32);
    }
    Ok(ScaleVector { values: out })
}

/// Greedy 1-D non-maximum suppression: repeatedly take the highest remaining
/// value at or above the threshold (ties to the smaller bin) and knock out
/// everything within `radius` bins of it.
pub fn nms_1d(
    s: &ScaleVector,
    radius: usize,
    threshold: f32,
    cfg: &ScaleMapConfig,
) -> Vec<ScaleProposal> {
    let n = s.values.len();
    let mut alive = vec![true; n];
    let mut out = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if !alive[i] || s.values[i] < threshold {
                continue;
            }
            match best {
                Some(j) if s.values[i] <= s.values[j] => {}
                _ => best = Some(i),
            }
        }
        let Some(peak) = best else { break };
        if let Ok(bin) = ScaleBin::new(peak as u32 + 1, cfg) {
            out.push(ScaleProposal { bin, score: s.values[peak] });
        }
        let lo = peak.saturating_sub(radius);
        let hi = usize::min(peak + radius, n - 1);
        for cell in alive[lo..=hi].iter_mut() {
            *cell = false;
        }
    }
    out
}

/// The location map for bin `b`: per cell, the maximum of the channels
/// within the scale neighborhood (clipped to the valid channel range).
fn location_map(maps: &AttentionMaps, bin: ScaleBin) -> Vec<f32> {
    let (h_f, w_f) = maps.feature_dims();
    let m = maps.channels() as i64;
    let b0 = bin.channel() as i64;
    let reach = SCALE_NEIGHBORHOOD as i64;
    let mut c = vec![0.0f32; h_f * w_f];
    for i in -reach..=reach {
        let ch = b0 + i;
        if ch < 0 || ch >= m {
            continue;
        }
        for (dst, &src) in c.iter_mut().zip(maps.channel_plane(ch as usize).iter()) {
            *dst = dst.max(src);
        }
    }
    c
}

/// Decode face regions for one scale bin: threshold the location map
/// (strictly above), group active cells by 8-connectivity, and emit one
/// region per component at its peak cell. Ties on the peak value resolve in
/// row-major order.
pub fn decode_locations(
    maps: &AttentionMaps,
    bin: ScaleBin,
    threshold: f32,
    cfg: &ScaleMapConfig,
) -> Result<Vec<RegionProposal>> {
    if bin.get() > cfg.num_bins {
        return Err(Error::invalid("scale bin out of range"));
    }
    let (h_f, w_f) = maps.feature_dims();
    let c = location_map(maps, bin);
    let stride = maps.stride() as f64;
    let (image_h, image_w) = maps.image_dims();
    let l_max = maps.image_long_side();
    let side = bin_to_size(bin, l_max, cfg)?;

    let mut visited = vec![false; h_f * w_f];
    let mut regions = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h_f * w_f {
        if visited[start] || !(c[start] > threshold) {
            continue;
        }
        // BFS over the component, tracking the peak cell.
        visited[start] = true;
        queue.push_back(start);
        let mut peak = start;
        while let Some(idx) = queue.pop_front() {
            if c[idx] > c[peak] {
                peak = idx;
            }
            let (v, u) = (idx / w_f, idx % w_f);
            for dv in -1i64..=1 {
                for du in -1i64..=1 {
                    if dv == 0 && du == 0 {
                        continue;
                    }
                    let nv = v as i64 + dv;
                    let nu = u as i64 + du;
                    if nv < 0 || nu < 0 || nv >= h_f as i64 || nu >= w_f as i64 {
                        continue;
                    }
                    let nidx = nv as usize * w_f + nu as usize;
                    if !visited[nidx] && c[nidx] > threshold {
                        visited[nidx] = true;
                        queue.push_back(nidx);
                    }
                }
            }
        }
        let (pv, pu) = (peak / w_f, peak % w_f);
        let center_x = ((pu as f64 + 0.5) * stride).min(image_w as f64);
        let center_y = ((pv as f64 + 0.5) * stride).min(image_h as f64);
        regions.push(RegionProposal { center: (center_x, center_y), side, bin, score: c[peak] });
    }
    Ok(regions)
}

/// Resized dims for a long-side rescale, rounded to the nearest pixel.
pub fn scaled_dims(dims: (u32, u32), factor: f64) -> (u32, u32) {
    let h = math::round(dims.0 as f64 * factor).max(1.0) as u32;
    let w = math::round(dims.1 as f64 * factor).max(1.0) as u32;
    (h, w)
}

/// Rasterize regions into a binary mask over the resized image.
///
/// Each region is rescaled by `target_long_side / proposal_l_max`, its side
/// grown by twice the detector stride `dilation` for context, and a mask
/// cell (at stride `mask_stride`) is set when its center lies inside any
/// grown box. Cell centers exactly on a box edge count as inside.
pub fn build_mask(
    regions: &[RegionProposal],
    proposal_l_max: f64,
    orig_dims: (u32, u32),
    target_long_side: f64,
    mask_stride: u32,
    dilation: u32,
) -> Result<SpatialMask> {
    if !(proposal_l_max > 0.0) || !(target_long_side > 0.0) {
        return Err(Error::invalid("image long sides must be positive"));
    }
    if mask_stride == 0 {
        return Err(Error::invalid("mask stride must be positive"));
    }
    let factor = target_long_side / proposal_l_max;
    let target_dims = scaled_dims(orig_dims, factor);
    let h = (target_dims.0 as usize).div_ceil(mask_stride as usize);
    let w = (target_dims.1 as usize).div_ceil(mask_stride as usize);
    let mut grid = vec![0u8; h * w];

    let nd = mask_stride as f64;
    for region in regions {
        let cx = region.center.0 * factor;
        let cy = region.center.1 * factor;
        let side = region.side * factor + 2.0 * dilation as f64;
        let (x0, x1) = (cx - side / 2.0, cx + side / 2.0);
        let (y0, y1) = (cy - side / 2.0, cy + side / 2.0);
        // Conservative index window, then the exact center-inside test.
        let jx0 = (math::floor(x0 / nd) - 1.0).max(0.0) as usize;
        let jx1 = (math::ceil(x1 / nd) + 1.0).min((w - 1) as f64) as usize;
        let jy0 = (math::floor(y0 / nd) - 1.0).max(0.0) as usize;
        let jy1 = (math::ceil(y1 / nd) + 1.0).min((h - 1) as f64) as usize;
        for jy in jy0..=jy1 {
            let cy_cell = (jy as f64 + 0.5) * nd;
            if cy_cell < y0 || cy_cell > y1 {
                continue;
            }
            for jx in jx0..=jx1 {
                let cx_cell = (jx as f64 + 0.5) * nd;
                if cx_cell >= x0 && cx_cell <= x1 {
                    grid[jy * w + jx] = 1;
                }
            }
        }
    }
    Ok(SpatialMask { h, w, stride: mask_stride, target_dims, grid })
}

/// Compose a pyramid plan: one level per scale proposal, resized so the
/// proposal's bin lands at the anchor center, with a spatial mask from its
/// decoded regions. Levels sort by target long side descending; levels whose
/// rounded long sides agree within one pixel merge into one (union of their
/// regions).
pub fn plan_pyramid(
    proposals: &[ScaleProposal],
    maps: &AttentionMaps,
    cfg: &ScaleMapConfig,
    mask_stride: u32,
    threshold: f32,
) -> Result<PyramidPlan> {
    let l_max = maps.image_long_side();
    let dilation = maps.stride();

    let mut staged: Vec<(f64, ScaleProposal, Vec<RegionProposal>)> = Vec::new();
    for proposal in proposals {
        let size = bin_to_size(proposal.bin, l_max, cfg)?;
        let target = zoom_target_length(size, l_max, cfg)?;
        let regions = decode_locations(maps, proposal.bin, threshold, cfg)?;
        staged.push((target, *proposal, regions));
    }
    staged.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(core::cmp::Ordering::Equal));

    let mut levels: Vec<PyramidLevel> = Vec::new();
    let mut pending: Option<(f64, ScaleProposal, Vec<RegionProposal>)> = None;
    for (target, proposal, regions) in staged {
        match pending.take() {
            None => pending = Some((target, proposal, regions)),
            Some((t0, p0, mut r0)) => {
                if math::abs(math::round(t0) - math::round(target)) <= 1.0 {
                    // Same resize level: keep the larger target and the
                    // higher-scoring proposal, pool the regions.
                    r0.extend(regions);
                    let keep = if proposal.score > p0.score { proposal } else { p0 };
                    pending = Some((t0, keep, r0));
                } else {
                    levels.push(finish_level(t0, p0, r0, maps, l_max, mask_stride, dilation)?);
                    pending = Some((target, proposal, regions));
                }
            }
        }
    }
    if let Some((t, p, r)) = pending {
        levels.push(finish_level(t, p, r, maps, l_max, mask_stride, dilation)?);
    }
    Ok(PyramidPlan { levels })
}

fn finish_level(
    target: f64,
    proposal: ScaleProposal,
    regions: Vec<RegionProposal>,
    maps: &AttentionMaps,
    l_max: f64,
    mask_stride: u32,
    dilation: u32,
) -> Result<PyramidLevel> {
    let mask = build_mask(&regions, l_max, maps.image_dims(), target, mask_stride, dilation)?;
    Ok(PyramidLevel { target_long_side: target, mask, proposal })
}
