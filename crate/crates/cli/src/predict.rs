//! Attention-map predictors: the ground-truth oracle (boxes derived from
//! landmarks, rendered as labels) and the trained toy network.

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::scene::{render_scene_image, Scene};
use scalemask_core::labels::{render_labels, AttentionMaps};
use scalemask_core::toynet::{forward, NetworkSpec, Parameters};

pub enum Predictor {
    /// Render ground-truth labels straight from the scene's landmarks.
    Oracle,
    /// Run the trained network on the rendered scene image.
    Toynet { net: NetworkSpec, params: Parameters },
}

impl Predictor {
    pub fn name(&self) -> &'static str {
        match self {
            Predictor::Oracle => "oracle",
            Predictor::Toynet { .. } => "toynet",
        }
    }

    /// Stride of the maps this predictor produces.
    pub fn stride(&self, cfg: &Config) -> u32 {
        match self {
            Predictor::Oracle => cfg.label_stride,
            Predictor::Toynet { net, .. } => net.total_stride(),
        }
    }

    pub fn predict(&self, scene: &Scene, cfg: &Config) -> Result<AttentionMaps> {
        match self {
            Predictor::Oracle => {
                let mean = cfg.mean_shape()?;
                let boxes = scene.derived_boxes(&mean)?;
                render_labels(&boxes, scene.dims, cfg.label_stride, &cfg.scalemap)
                    .map_err(CliError::Core)
            }
            Predictor::Toynet { net, params } => {
                let image = render_scene_image(scene);
                let logits = forward(net, params, &image, None).map_err(CliError::Core)?;
                logits
                    .to_attention(scene.dims, net.total_stride())
                    .map_err(CliError::Core)
            }
        }
    }
}
