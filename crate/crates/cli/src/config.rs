//! The global JSON configuration: every tunable of the pipeline in one
//! (fully defaulted) document. A config file only needs the fields it
//! overrides.

use crate::error::{CliError, Result};
use scalemask_core::geometry::{mean_shape_from_rows, MeanShape, DEFAULT_MEAN_SHAPE};
use scalemask_core::maskconv::ConvSpec;
use scalemask_core::scalemap::ScaleMapConfig;
use scalemask_core::toynet::{NetworkSpec, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    /// Centered moving-average window over the scale vector.
    pub smooth_window: usize,
    /// 1-D NMS suppression radius in bins.
    pub nms_radius: usize,
    /// Score threshold for scale proposals and location decoding.
    pub threshold: f32,
    /// Spatial-mask cell size in resized-image pixels. Must divide every
    /// cumulative detector stride.
    pub mask_stride: u32,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { smooth_window: 3, nms_radius: 4, threshold: 0.5, mask_stride: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Threshold sweep grid: start, stop (inclusive), step.
    pub grid_start: f32,
    pub grid_stop: f32,
    pub grid_step: f32,
    /// Recall level the operating threshold is selected at.
    pub target_recall: f64,
    /// Minimum IoU between a region box and a face box to count a match.
    pub iou_threshold: f64,
    /// Maximum |predicted bin - true bin| to count a match.
    pub bin_window: u32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            grid_start: 0.05,
            grid_stop: 0.95,
            grid_step: 0.05,
            target_recall: 0.98,
            iou_threshold: 0.5,
            bin_window: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub count: usize,
    /// Image dims [H, W] in pixels.
    pub dims: [u32; 2],
    /// Faces per scene, inclusive range.
    pub faces_min: u32,
    pub faces_max: u32,
    /// Face size range in pixels (geometric-mean side).
    pub size_min: f64,
    pub size_max: f64,
    /// When set, face sizes snap to the middle of these bins instead of the
    /// uniform range; spacing the ladder > nms_radius apart yields scenes
    /// the oracle decoder resolves exactly.
    pub bin_ladder: Option<Vec<u32>>,
    /// Minimum Chebyshev distance between face centers, in label cells.
    pub min_center_separation_cells: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            count: 20,
            dims: [1024, 1024],
            faces_min: 1,
            faces_max: 3,
            size_min: 48.0,
            size_max: 512.0,
            bin_ladder: None,
            min_center_separation_cells: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Conv stack standing in for the detector trunk the pipeline feeds.
    pub layers: Vec<ConvSpec>,
    /// Long side of the largest baseline pyramid level.
    pub baseline_long_side: f64,
    /// Number of baseline levels (halving each time).
    pub baseline_levels: u32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        let conv = |c_in, c_out, stride| ConvSpec { c_in, c_out, kernel: 3, stride, padding: 1 };
        DetectorConfig {
            layers: vec![conv(3, 16, 2), conv(16, 32, 2), conv(32, 64, 1)],
            baseline_long_side: 1414.0,
            baseline_levels: 6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub scalemap: ScaleMapConfig,
    /// 5x2 normalized landmark layout faces are generated and fitted with.
    pub mean_shape: Vec<[f64; 2]>,
    /// Attention-map stride of the scale/spatial estimator (oracle path).
    pub label_stride: u32,
    pub decode: DecodeConfig,
    pub eval: EvalConfig,
    pub scenes: SceneConfig,
    pub net: NetworkSpec,
    pub train: TrainConfig,
    pub detector: DetectorConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            scalemap: ScaleMapConfig::default(),
            mean_shape: DEFAULT_MEAN_SHAPE.to_vec(),
            label_stride: 16,
            decode: DecodeConfig::default(),
            eval: EvalConfig::default(),
            scenes: SceneConfig::default(),
            net: NetworkSpec::default_topology(60),
            train: TrainConfig::default(),
            detector: DetectorConfig::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Config> {
        match path {
            Some(p) => Config::load(p),
            None => {
                let cfg = Config::default();
                cfg.validate()?;
                Ok(cfg)
            }
        }
    }

    pub fn mean_shape(&self) -> Result<MeanShape> {
        mean_shape_from_rows(&self.mean_shape).map_err(CliError::Core)
    }

    pub fn validate(&self) -> Result<()> {
        self.scalemap.validate().map_err(CliError::Core)?;
        self.mean_shape()?;
        self.net
            .validate(self.scalemap.num_bins as usize)
            .map_err(CliError::Core)?;
        self.train.validate().map_err(CliError::Core)?;
        if self.label_stride == 0 {
            return Err(CliError::Config("label_stride must be positive".into()));
        }
        if self.decode.smooth_window % 2 == 0 {
            return Err(CliError::Config("decode.smooth_window must be odd".into()));
        }
        if !(self.eval.grid_step > 0.0) || self.eval.grid_stop < self.eval.grid_start {
            return Err(CliError::Config("eval grid must be increasing".into()));
        }
        if self.scenes.faces_min > self.scenes.faces_max || self.scenes.size_min > self.scenes.size_max
        {
            return Err(CliError::Config("scene ranges must be ordered".into()));
        }
        if self.detector.layers.is_empty() {
            return Err(CliError::Config("detector needs at least one layer".into()));
        }
        let mut c_in = self.detector.layers[0].c_in;
        let mut cumulative = 1u32;
        for (i, layer) in self.detector.layers.iter().enumerate() {
            layer.validate().map_err(CliError::Core)?;
            if layer.c_in != c_in {
                return Err(CliError::Config(format!(
                    "detector layer {i} input channels do not chain"
                )));
            }
            if !layer.is_same_padded() {
                return Err(CliError::Config(format!(
                    "detector layer {i} must be same-padded for the cost model"
                )));
            }
            cumulative *= layer.stride as u32;
            if cumulative % self.decode.mask_stride != 0 {
                return Err(CliError::Config(format!(
                    "decode.mask_stride must divide the cumulative detector stride {cumulative}"
                )));
            }
            c_in = layer.c_out;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = Config::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: Config = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.label_stride, cfg.label_stride);
        assert_eq!(back.decode.mask_stride, cfg.decode.mask_stride);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: Config = serde_json::from_str(r#"{"label_stride": 8}"#).unwrap();
        assert_eq!(cfg.label_stride, 8);
        assert_eq!(cfg.scalemap.num_bins, 60);
        cfg.validate().unwrap();
    }

    #[test]
    fn bad_mask_stride_is_rejected() {
        let mut cfg = Config::default();
        cfg.decode.mask_stride = 3;
        assert!(cfg.validate().is_err());
    }
}
