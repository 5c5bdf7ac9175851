//! Dense and mask-guided 2-D convolution via patch-matrix assembly.
//!
//! Both paths share one elementwise kernel: a patch row is materialized in
//! (channel, ky, kx) order with explicit zeros for padding taps, then dotted
//! against a weight row with a single f32 accumulator in that same order.
//! The dense path assembles every output position; the masked path gathers
//! only the rows whose mask cell is 1, multiplies, and scatters the results
//! back. Because the per-element float operations are identical, masked
//! outputs equal dense outputs bit for bit at active positions.

use crate::error::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Dense C x H x W feature data, channel-major row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(c: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != c * h * w {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}x{} = {} values", c, h, w, c * h * w),
                got: format!("{}", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tensor values must be finite"));
        }
        Ok(Tensor { c, h, w, data })
    }

    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Tensor { c, h, w, data: vec![0.0; c * h * w] }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f32 {
        &mut self.data[(c * self.h + y) * self.w + x]
    }
}

/// Convolution layer parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ConvSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::invalid("kernel size must be odd"));
        }
        if self.stride == 0 {
            return Err(Error::invalid("stride must be at least 1"));
        }
        if self.c_in == 0 || self.c_out == 0 {
            return Err(Error::invalid("channel counts must be positive"));
        }
        Ok(())
    }

    /// Number of taps per output element.
    pub fn patch_len(&self) -> usize {
        self.c_in * self.kernel * self.kernel
    }

    /// Output spatial dims for an input of the given size.
    pub fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        let k = self.kernel;
        if h + 2 * self.padding < k || w + 2 * self.padding < k {
            return Err(Error::invalid("input smaller than kernel"));
        }
        Ok((
            (h + 2 * self.padding - k) / self.stride + 1,
            (w + 2 * self.padding - k) / self.stride + 1,
        ))
    }

    /// True when padding preserves `ceil(n / stride)` output dims.
    pub fn is_same_padded(&self) -> bool {
        self.padding == (self.kernel - 1) / 2
    }
}

/// Filter matrix, one row per output channel, columns in (c, ky, kx) order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    c_out: usize,
    cols: usize,
    data: Vec<f32>,
}

impl WeightMatrix {
    pub fn new(c_out: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != c_out * cols {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} = {} values", c_out, cols, c_out * cols),
                got: format!("{}", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("weights must be finite"));
        }
        Ok(WeightMatrix { c_out, cols, data })
    }

    pub fn zeros(c_out: usize, cols: usize) -> Self {
        WeightMatrix { c_out, cols, data: vec![0.0; c_out * cols] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.c_out, self.cols)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, oc: usize) -> &[f32] {
        &self.data[oc * self.cols..(oc + 1) * self.cols]
    }

    fn matches(&self, spec: &ConvSpec) -> Result<()> {
        if self.c_out != spec.c_out || self.cols != spec.patch_len() {
            return Err(Error::ShapeMismatch {
                expected: format!("weights {}x{}", spec.c_out, spec.patch_len()),
                got: format!("{}x{}", self.c_out, self.cols),
            });
        }
        Ok(())
    }
}

/// Binary mask over convolution output positions: 1 where the sliding-window
/// center is evaluated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvMask {
    h: usize,
    w: usize,
    grid: Vec<u8>,
}

impl ConvMask {
    pub fn new(h: usize, w: usize, grid: Vec<u8>) -> Result<Self> {
        if grid.len() != h * w {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} cells", h, w),
                got: format!("{}", grid.len()),
            });
        }
        if grid.iter().any(|&v| v > 1) {
            return Err(Error::invalid("mask entries must be 0 or 1"));
        }
        Ok(ConvMask { h, w, grid })
    }

    pub fn full(h: usize, w: usize) -> Self {
        ConvMask { h, w, grid: vec![1; h * w] }
    }

    pub fn empty(h: usize, w: usize) -> Self {
        ConvMask { h, w, grid: vec![0; h * w] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn grid(&self) -> &[u8] {
        &self.grid
    }

    #[inline]
    pub fn is_active(&self, y: usize, x: usize) -> bool {
        self.grid[y * self.w + x] != 0
    }

    pub fn set(&mut self, y: usize, x: usize, active: bool) {
        self.grid[y * self.w + x] = active as u8;
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
}

/// Patch rows for a set of output positions; `rows x cols`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl PatchMatrix {
    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Exact multiply-accumulate counts for one convolution. One MAC is one FLOP
/// unit; `masked * total_cells == active_cells * dense` holds as an integer
/// identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlopCount {
    pub dense: u64,
    pub masked: u64,
    pub active_cells: u64,
    pub total_cells: u64,
}

impl FlopCount {
    pub fn density(&self) -> f64 {
        if self.total_cells == 0 {
            0.0
        } else {
            self.active_cells as f64 / self.total_cells as f64
        }
    }
}

fn check_input(input: &Tensor, spec: &ConvSpec) -> Result<(usize, usize)> {
    if input.c != spec.c_in {
        return Err(Error::ShapeMismatch {
            expected: format!("{} input channels", spec.c_in),
            got: format!("{}", input.c),
        });
    }
    spec.out_dims(input.h, input.w)
}

/// Write the patch for output position (oy, ox) into `row`, taps ordered
/// (c, ky, kx), out-of-bounds taps zero.
#[inline]
fn fill_patch_row(input: &Tensor, spec: &ConvSpec, oy: usize, ox: usize, row: &mut [f32]) {
    let k = spec.kernel;
    let pad = spec.padding as isize;
    let base_y = (oy * spec.stride) as isize - pad;
    let base_x = (ox * spec.stride) as isize - pad;
    let mut idx = 0;
    for c in 0..spec.c_in {
        for ky in 0..k {
            let iy = base_y + ky as isize;
            for kx in 0..k {
                let ix = base_x + kx as isize;
                row[idx] = if iy >= 0 && ix >= 0 && (iy as usize) < input.h && (ix as usize) < input.w
                {
                    input.at(c, iy as usize, ix as usize)
                } else {
                    0.0
                };
                idx += 1;
            }
        }
    }
}

/// Single-accumulator dot product in ascending tap order. Shared by the
/// dense and masked paths; the fixed order is what makes their outputs
/// bitwise comparable.
#[inline]
fn dot_in_order(row: &[f32], weights: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for (a, b) in row.iter().zip(weights.iter()) {
        acc += a * b;
    }
    acc
}

/// Unroll the input into one patch row per output position, row `r`
/// corresponding to output position (r / w_out, r % w_out).
pub fn im2col(input: &Tensor, spec: &ConvSpec) -> Result<PatchMatrix> {
    let (h_out, w_out) = check_input(input, spec)?;
    let cols = spec.patch_len();
    let mut data = vec![0.0f32; h_out * w_out * cols];
    for oy in 0..h_out {
        for ox in 0..w_out {
            let r = oy * w_out + ox;
            fill_patch_row(input, spec, oy, ox, &mut data[r * cols..(r + 1) * cols]);
        }
    }
    Ok(PatchMatrix { rows: h_out * w_out, cols, data })
}

/// Full convolution: assemble the patch matrix and multiply by the filter
/// matrix.
pub fn dense_conv(input: &Tensor, weights: &WeightMatrix, spec: &ConvSpec) -> Result<Tensor> {
    let (h_out, w_out) = check_input(input, spec)?;
    weights.matches(spec)?;
    let patches = im2col(input, spec)?;
    let mut out = Tensor::zeros(spec.c_out, h_out, w_out);
    for r in 0..patches.rows {
        let row = patches.row(r);
        let (oy, ox) = (r / w_out, r % w_out);
        for oc in 0..spec.c_out {
            *out.at_mut(oc, oy, ox) = dot_in_order(row, weights.row(oc));
        }
    }
    Ok(out)
}

/// Mask-guided convolution: gather the patch rows of active output
/// positions, multiply, and scatter the products back. Inactive positions
/// are exactly zero; active positions match [`dense_conv`] bit for bit.
pub fn masked_conv(
    input: &Tensor,
    weights: &WeightMatrix,
    spec: &ConvSpec,
    mask: &ConvMask,
) -> Result<Tensor> {
    let (h_out, w_out) = check_input(input, spec)?;
    weights.matches(spec)?;
    if mask.dims() != (h_out, w_out) {
        return Err(Error::ShapeMismatch {
            expected: format!("mask {}x{}", h_out, w_out),
            got: format!("{}x{}", mask.h, mask.w),
        });
    }

    // Gather: one patch row per active cell, in row-major cell order.
    let cols = spec.patch_len();
    let mut active = Vec::new();
    for oy in 0..h_out {
        for ox in 0..w_out {
            if mask.is_active(oy, ox) {
                active.push((oy, ox));
            }
        }
    }
    let mut gathered = vec![0.0f32; active.len() * cols];
    for (r, &(oy, ox)) in active.iter().enumerate() {
        fill_patch_row(input, spec, oy, ox, &mut gathered[r * cols..(r + 1) * cols]);
    }

    // Multiply and scatter.
    let mut out = Tensor::zeros(spec.c_out, h_out, w_out);
    for (r, &(oy, ox)) in active.iter().enumerate() {
        let row = &gathered[r * cols..(r + 1) * cols];
        for oc in 0..spec.c_out {
            *out.at_mut(oc, oy, ox) = dot_in_order(row, weights.row(oc));
        }
    }
    Ok(out)
}

/// Exact FLOP accounting: dense is `cells * c_in * K^2 * c_out` MACs, masked
/// replaces `cells` by the number of active mask cells.
pub fn flops(spec: &ConvSpec, out_dims: (usize, usize), mask: Option<&ConvMask>) -> FlopCount {
    let total_cells = (out_dims.0 * out_dims.1) as u64;
    let per_cell = (spec.c_in * spec.kernel * spec.kernel * spec.c_out) as u64;
    let active_cells = match mask {
        Some(m) => m.active_cells(),
        None => total_cells,
    };
    FlopCount {
        dense: total_cells * per_cell,
        masked: active_cells * per_cell,
        active_cells,
        total_cells,
    }
}

/// Gradients of the dense convolution with respect to weights and input.
pub fn conv_backward(
    input: &Tensor,
    weights: &WeightMatrix,
    spec: &ConvSpec,
    output_grad: &Tensor,
) -> Result<(WeightMatrix, Tensor)> {
    let (h_out, w_out) = check_input(input, spec)?;
    weights.matches(spec)?;
    if output_grad.dims() != (spec.c_out, h_out, w_out) {
        return Err(Error::ShapeMismatch {
            expected: format!("output grad {}x{}x{}", spec.c_out, h_out, w_out),
            got: format!(
                "{}x{}x{}",
                output_grad.c, output_grad.h, output_grad.w
            ),
        });
    }

    let cols = spec.patch_len();
    let k = spec.kernel;
    let mut w_grad = WeightMatrix::zeros(spec.c_out, cols);
    let mut x_grad = Tensor::zeros(input.c, input.h, input.w);
    let mut row = vec![0.0f32; cols];

    for oy in 0..h_out {
        for ox in 0..w_out {
            fill_patch_row(input, spec, oy, ox, &mut row);
            // dW[oc][col] += g * patch[col]
            for oc in 0..spec.c_out {
                let g = output_grad.at(oc, oy, ox);
                if g == 0.0 {
                    continue;
                }
                let wrow = &mut w_grad.data[oc * cols..(oc + 1) * cols];
                for (dst, src) in wrow.iter_mut().zip(row.iter()) {
                    *dst += g * src;
                }
            }
            // dX: scatter sum_oc g * W[oc][col] back through the taps.
            let base_y = (oy * spec.stride) as isize - spec.padding as isize;
            let base_x = (ox * spec.stride) as isize - spec.padding as isize;
            let mut col = 0;
            for c in 0..spec.c_in {
                for ky in 0..k {
                    let iy = base_y + ky as isize;
                    for kx in 0..k {
                        let ix = base_x + kx as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < input.h && (ix as usize) < input.w
                        {
                            let mut acc = 0.0f32;
                            for oc in 0..spec.c_out {
                                acc += output_grad.at(oc, oy, ox) * weights.row(oc)[col];
                            }
                            *x_grad.at_mut(c, iy as usize, ix as usize) += acc;
                        }
                        col += 1;
                    }
                }
            }
        }
    }
    Ok((w_grad, x_grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(rng: &mut ChaCha8Rng) -> f32 {
        (rng.next_u32() >> 8) as f32 / (1u32 << 24) as f32 * 2.0 - 1.0
    }

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor {
        Tensor::new(c, h, w, (0..c * h * w).map(|_| uniform(rng)).collect()).unwrap()
    }

    fn random_weights(rng: &mut ChaCha8Rng, spec: &ConvSpec) -> WeightMatrix {
        let cols = spec.patch_len();
        WeightMatrix::new(spec.c_out, cols, (0..spec.c_out * cols).map(|_| uniform(rng)).collect())
            .unwrap()
    }

    fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize, density: f64) -> ConvMask {
        let grid = (0..h * w)
            .map(|_| ((rng.next_u32() as f64 / u32::MAX as f64) < density) as u8)
            .collect();
        ConvMask::new(h, w, grid).unwrap()
    }

    #[test]
    fn im2col_identity_1x1() {
        let input = Tensor::new(1, 1, 1, vec![5.0]).unwrap();
        let spec = ConvSpec { c_in: 1, c_out: 1, kernel: 1, stride: 1, padding: 0 };
        let m = im2col(&input, &spec).unwrap();
        assert_eq!((m.rows, m.cols), (1, 1));
        assert_eq!(m.data, vec![5.0]);
    }

    #[test]
    fn im2col_padded_ones() {
        let input = Tensor::new(1, 3, 3, vec![1.0; 9]).unwrap();
        let spec = ConvSpec { c_in: 1, c_out: 1, kernel: 3, stride: 1, padding: 1 };
        let m = im2col(&input, &spec).unwrap();
        assert_eq!((m.rows, m.cols), (9, 9));
        // center position sees the full 3x3 of ones
        assert!(m.row(4).iter().all(|&v| v == 1.0));
        // each corner position has four in-bounds taps
        for r in [0, 2, 6, 8] {
            let ones = m.row(r).iter().filter(|&&v| v == 1.0).count();
            assert_eq!(ones, 4, "row {r}");
        }
    }

    #[test]
    fn im2col_stride_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = random_tensor(&mut rng, 2, 7, 5);
        let spec = ConvSpec { c_in: 2, c_out: 1, kernel: 3, stride: 2, padding: 1 };
        let (h_out, w_out) = spec.out_dims(7, 5).unwrap();
        let m = im2col(&input, &spec).unwrap();
        assert_eq!(m.rows, h_out * w_out);
        assert_eq!((h_out, w_out), (4, 3));
    }

    #[test]
    fn dense_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = random_tensor(&mut rng, 1, 4, 4);
        let spec = ConvSpec { c_in: 1, c_out: 1, kernel: 1, stride: 1, padding: 0 };
        let weights = WeightMatrix::new(1, 1, vec![1.0]).unwrap();
        let out = dense_conv(&input, &weights, &spec).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn dense_box_filter_counts() {
        let input = Tensor::new(1, 5, 5, vec![1.0; 25]).unwrap();
        let spec = ConvSpec { c_in: 1, c_out: 1, kernel: 3, stride: 1, padding: 1 };
        let weights = WeightMatrix::new(1, 9, vec![1.0; 9]).unwrap();
        let out = dense_conv(&input, &weights, &spec).unwrap();
        assert_eq!(out.at(0, 2, 2), 9.0);
        assert_eq!(out.at(0, 0, 2), 6.0);
        assert_eq!(out.at(0, 2, 0), 6.0);
        assert_eq!(out.at(0, 0, 0), 4.0);
        assert_eq!(out.at(0, 4, 4), 4.0);
    }

    #[test]
    fn dense_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input = random_tensor(&mut rng, 2, 4, 4);
        let spec = ConvSpec { c_in: 2, c_out: 3, kernel: 3, stride: 1, padding: 1 };
        let out = dense_conv(&input, &WeightMatrix::zeros(3, 18), &spec).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn masked_full_mask_is_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = random_tensor(&mut rng, 3, 9, 8);
        let spec = ConvSpec { c_in: 3, c_out: 4, kernel: 3, stride: 2, padding: 1 };
        let weights = random_weights(&mut rng, &spec);
        let (h_out, w_out) = spec.out_dims(9, 8).unwrap();
        let dense = dense_conv(&input, &weights, &spec).unwrap();
        let masked =
            masked_conv(&input, &weights, &spec, &ConvMask::full(h_out, w_out)).unwrap();
        for (a, b) in dense.data().iter().zip(masked.data().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn masked_empty_mask_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let input = random_tensor(&mut rng, 2, 6, 6);
        let spec = ConvSpec { c_in: 2, c_out: 2, kernel: 3, stride: 1, padding: 1 };
        let weights = random_weights(&mut rng, &spec);
        let out = masked_conv(&input, &weights, &spec, &ConvMask::empty(6, 6)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn masked_matches_dense_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10 {
            let spec = ConvSpec { c_in: 2, c_out: 3, kernel: 3, stride: 1, padding: 1 };
            let input = random_tensor(&mut rng, 2, 8, 8);
            let weights = random_weights(&mut rng, &spec);
            let mask = random_mask(&mut rng, 8, 8, 0.4);
            let dense = dense_conv(&input, &weights, &spec).unwrap();
            let masked = masked_conv(&input, &weights, &spec, &mask).unwrap();
            for oc in 0..3 {
                for y in 0..8 {
                    for x in 0..8 {
                        if mask.is_active(y, x) {
                            assert_eq!(
                                dense.at(oc, y, x).to_bits(),
                                masked.at(oc, y, x).to_bits(),
                                "trial {trial} at ({oc},{y},{x})"
                            );
                        } else {
                            assert_eq!(masked.at(oc, y, x), 0.0);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn flop_examples() {
        let spec = ConvSpec { c_in: 8, c_out: 16, kernel: 3, stride: 1, padding: 1 };
        let full = flops(&spec, (64, 64), None);
        assert_eq!(full.dense, 4_718_592);
        assert_eq!(full.masked, full.dense);

        let mut mask = ConvMask::empty(64, 64);
        for y in 0..16 {
            for x in 0..64 {
                mask.set(y, x, true);
            }
        }
        let quarter = flops(&spec, (64, 64), Some(&mask));
        assert_eq!(quarter.masked, 1_179_648);
        assert_eq!(quarter.density(), 0.25);
        // integer identity: masked * total == active * dense
        assert_eq!(
            quarter.masked as u128 * quarter.total_cells as u128,
            quarter.active_cells as u128 * quarter.dense as u128
        );

        let none = flops(&spec, (64, 64), Some(&ConvMask::empty(64, 64)));
        assert_eq!(none.masked, 0);
    }

    #[test]
    fn backward_zero_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = ConvSpec { c_in: 2, c_out: 2, kernel: 3, stride: 1, padding: 1 };
        let input = random_tensor(&mut rng, 2, 4, 4);
        let weights = random_weights(&mut rng, &spec);
        let (wg, xg) =
            conv_backward(&input, &weights, &spec, &Tensor::zeros(2, 4, 4)).unwrap();
        assert!(wg.data().iter().all(|&v| v == 0.0));
        assert!(xg.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_scalar_chain_rule() {
        let spec = ConvSpec { c_in: 1, c_out: 1, kernel: 1, stride: 1, padding: 0 };
        let input = Tensor::new(1, 1, 1, vec![3.0]).unwrap();
        let weights = WeightMatrix::new(1, 1, vec![2.0]).unwrap();
        let grad = Tensor::new(1, 1, 1, vec![0.5]).unwrap();
        let (wg, xg) = conv_backward(&input, &weights, &spec, &grad).unwrap();
        assert_eq!(wg.data(), &[1.5]); // input * g
        assert_eq!(xg.data(), &[1.0]); // weight * g
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let spec = ConvSpec { c_in: 2, c_out: 3, kernel: 3, stride: 1, padding: 1 };
        let input = random_tensor(&mut rng, 2, 5, 5);
        let weights = random_weights(&mut rng, &spec);
        // Fixed cotangent defines the scalar L = sum(conv(x, w) . G).
        let cot = random_tensor(&mut rng, 3, 5, 5);
        let scalar = |inp: &Tensor, wts: &WeightMatrix| -> f64 {
            let out = dense_conv(inp, wts, &spec).unwrap();
            out.data()
                .iter()
                .zip(cot.data().iter())
                .map(|(&o, &g)| o as f64 * g as f64)
                .sum()
        };
        let (wg, xg) = conv_backward(&input, &weights, &spec, &cot).unwrap();

        let step = 1e-2f32;
        for i in 0..input.data().len() {
            let mut plus = input.clone();
            plus.data_mut()[i] += step;
            let mut minus = input.clone();
            minus.data_mut()[i] -= step;
            let h_eff = plus.data()[i] as f64 - minus.data()[i] as f64;
            let fd = (scalar(&plus, &weights) - scalar(&minus, &weights)) / h_eff;
            let a = xg.data()[i] as f64;
            approx::assert_relative_eq!(a, fd, max_relative = 1e-3, epsilon = 1e-4);
        }
        for i in 0..weights.data().len() {
            let mut plus = weights.clone();
            plus.data_mut()[i] += step;
            let mut minus = weights.clone();
            minus.data_mut()[i] -= step;
            let h_eff = plus.data()[i] as f64 - minus.data()[i] as f64;
            let fd = (scalar(&input, &plus) - scalar(&input, &minus)) / h_eff;
            let a = wg.data()[i] as f64;
            approx::assert_relative_eq!(a, fd, max_relative = 1e-3, epsilon = 1e-4);
        }
    }

    #[test]
    fn conv_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = ConvSpec { c_in: 2, c_out: 2, kernel: 3, stride: 1, padding: 1 };
        let weights = random_weights(&mut rng, &spec);
        for _ in 0..5 {
            let x = random_tensor(&mut rng, 2, 6, 6);
            let y = random_tensor(&mut rng, 2, 6, 6);
            let (a, b) = (0.7f32, -1.3f32);
            let combined = Tensor::new(
                2,
                6,
                6,
                x.data().iter().zip(y.data().iter()).map(|(&p, &q)| a * p + b * q).collect(),
            )
            .unwrap();
            let lhs = dense_conv(&combined, &weights, &spec).unwrap();
            let cx = dense_conv(&x, &weights, &spec).unwrap();
            let cy = dense_conv(&y, &weights, &spec).unwrap();
            for ((l, p), q) in lhs.data().iter().zip(cx.data()).zip(cy.data()) {
                let rhs = a * p + b * q;
                approx::assert_relative_eq!(*l, rhs, max_relative = 1e-5, epsilon = 1e-5);
            }
        }
    }
}
