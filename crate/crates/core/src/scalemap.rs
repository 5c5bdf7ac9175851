//! Logarithmic face-size bins and zoom targets.
//!
//! At the canonical image length `s_max` (1024), face sizes from 2^4 to 2^10
//! map uniformly onto 60 bins, ten per octave:
//!
//! ```text
//! b = 10 * (log2(x / l_max * s_max) - 4)
//! ```
//!
//! The inverse gives the nominal size of a bin, and the zoom target is the
//! resized long side that places a face of size `x` at the anchor center
//! 2^6.5.

use crate::error::{Error, Result};
use crate::math;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Tolerance for snapping a raw bin value onto an integer before `ceil`, so
/// exact octave boundaries survive float round-off of `log2(2^k)`.
const BIN_SNAP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ScaleMapConfig {
    /// Canonical long-side length the bin mapping is defined at.
    pub s_max: f64,
    /// Number of scale bins (m).
    pub num_bins: u32,
    /// Bins per size octave.
    pub bins_per_octave: u32,
    /// log2 of the smallest mapped face size at the canonical length.
    pub base_exponent: i32,
    /// log2 of the anchor center size the zoom aims for.
    pub anchor_log2: f64,
}

impl Default for ScaleMapConfig {
    fn default() -> Self {
        ScaleMapConfig {
            s_max: 1024.0,
            num_bins: 60,
            bins_per_octave: 10,
            base_exponent: 4,
            anchor_log2: 6.5,
        }
    }
}

impl ScaleMapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_max > 0.0) {
            return Err(Error::invalid("s_max must be positive"));
        }
        if self.num_bins == 0 || self.bins_per_octave == 0 {
            return Err(Error::invalid("num_bins and bins_per_octave must be positive"));
        }
        if self.num_bins % self.bins_per_octave != 0 {
            return Err(Error::invalid(
                "num_bins must be a whole number of octaves (divisible by bins_per_octave)",
            ));
        }
        if !(self.anchor_log2 >= 6.0 && self.anchor_log2 <= 7.0) {
            return Err(Error::invalid("anchor_log2 must lie in [6, 7]"));
        }
        Ok(())
    }

    /// log2 of the largest mapped face size at the canonical length.
    pub fn top_exponent(&self) -> i32 {
        self.base_exponent + (self.num_bins / self.bins_per_octave) as i32
    }

    /// Anchor center size in pixels (2^anchor_log2).
    pub fn anchor_size(&self) -> f64 {
        math::exp2(self.anchor_log2)
    }
}

/// 1-based scale bin index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ScaleBin(u32);

impl ScaleBin {
    pub fn new(b: u32, cfg: &ScaleMapConfig) -> Result<Self> {
        if b < 1 || b > cfg.num_bins {
            return Err(Error::invalid("scale bin out of range"));
        }
        Ok(ScaleBin(b))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// Zero-based channel index into attention maps.
    pub fn channel(self) -> usize {
        (self.0 - 1) as usize
    }
}

/// Map a face size to its scale bin. Returns the clamped bin together with
/// the raw (real-valued, unclamped) bin value for diagnostics; sizes outside
/// the mapped range show up as raw values outside (0, num_bins].
pub fn size_to_bin(x: f64, l_max: f64, cfg: &ScaleMapConfig) -> Result<(ScaleBin, f64)> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid("face size must be positive and finite"));
    }
    if !(l_max > 0.0) || !l_max.is_finite() {
        return Err(Error::invalid("image long side must be positive and finite"));
    }
    let raw = cfg.bins_per_octave as f64
        * (math::log2(x / l_max * cfg.s_max) - cfg.base_exponent as f64);
    let snapped = if math::abs(raw - math::round(raw)) <= BIN_SNAP_EPS {
        math::round(raw)
    } else {
        raw
    };
    let b = math::ceil(snapped).clamp(1.0, cfg.num_bins as f64) as u32;
    Ok((ScaleBin(b), raw))
}

/// Nominal face size of a bin: the upper edge of the size interval the bin
/// covers, `x = (l_max / s_max) * 2^(b / bins_per_octave + base_exponent)`.
pub fn bin_to_size(b: ScaleBin, l_max: f64, cfg: &ScaleMapConfig) -> Result<f64> {
    if b.get() > cfg.num_bins {
        return Err(Error::invalid("scale bin out of range"));
    }
    if !(l_max > 0.0) || !l_max.is_finite() {
        return Err(Error::invalid("image long side must be positive and finite"));
    }
    Ok(l_max / cfg.s_max
        * math::exp2(b.get() as f64 / cfg.bins_per_octave as f64 + cfg.base_exponent as f64))
}

/// Long side to resize the image to so a face of size `x` lands at the
/// anchor center size.
pub fn zoom_target_length(x: f64, l_max: f64, cfg: &ScaleMapConfig) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid("face size must be positive and finite"));
    }
    if !(l_max > 0.0) || !l_max.is_finite() {
        return Err(Error::invalid("image long side must be positive and finite"));
    }
    Ok(cfg.anchor_size() / x * l_max)
}
