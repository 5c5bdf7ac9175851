//! Synthetic scenes: square faces with landmark annotations placed on a
//! noise background, deterministic for a fixed seed.
//!
//! Landmarks are the configured mean shape mapped into each face box, so the
//! geometry fit recovers the box exactly and the ground-truth bin of a face
//! is unambiguous. The rendered image draws one Gaussian blob per face whose
//! radius and color profile follow the face size, giving the toy network
//! a learnable cue for scale estimation.

use crate::config::SceneConfig;
use crate::error::{CliError, Result};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scalemask_core::geometry::{
    bbox_from_landmarks, face_size, landmarks_in_box, BBox, LandmarkSet, MeanShape,
};
use scalemask_core::maskconv::Tensor;
use scalemask_core::scalemap::{bin_to_size, size_to_bin, ScaleBin, ScaleMapConfig};

#[derive(Debug, Clone)]
pub struct Face {
    pub bbox: BBox,
    pub landmarks: LandmarkSet,
}

#[derive(Debug, Clone)]
pub struct Scene {
    /// Image dims (H, W) in pixels.
    pub dims: (u32, u32),
    pub faces: Vec<Face>,
    /// Per-scene seed; the rendered image is a pure function of the scene.
    pub seed: u64,
}

impl Scene {
    pub fn long_side(&self) -> f64 {
        u32::max(self.dims.0, self.dims.1) as f64
    }

    /// Ground-truth boxes derived from the landmarks through the similarity
    /// fit (not the stored boxes, which by construction coincide).
    pub fn derived_boxes(&self, mean_shape: &MeanShape) -> Result<Vec<BBox>> {
        self.faces
            .iter()
            .map(|f| bbox_from_landmarks(&f.landmarks, mean_shape).map_err(CliError::Core))
            .collect()
    }
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u32() >> 8) as f64 / (1u32 << 24) as f64
}

fn scene_seed(run_seed: u64, index: u64) -> u64 {
    // splitmix-style stream derivation
    let mut z = run_seed ^ index.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(0xA0761D6478BD642F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Draw a face size in pixels. With a bin ladder, sizes sit near the middle
/// of a ladder bin (raw value bin - 0.5 +- 0.2); otherwise uniform in the
/// configured range.
fn draw_size(
    rng: &mut ChaCha8Rng,
    cfg: &SceneConfig,
    scalemap: &ScaleMapConfig,
    l_max: f64,
) -> Result<f64> {
    match &cfg.bin_ladder {
        Some(ladder) if !ladder.is_empty() => {
            let pick = ladder[(uniform(rng) * ladder.len() as f64) as usize % ladder.len()];
            let bin = ScaleBin::new(pick, scalemap).map_err(CliError::Core)?;
            let upper = bin_to_size(bin, l_max, scalemap).map_err(CliError::Core)?;
            let offset = -0.5 + (uniform(rng) - 0.5) * 0.4;
            Ok(upper * 2f64.powf(offset / scalemap.bins_per_octave as f64))
        }
        _ => Ok(cfg.size_min + uniform(rng) * (cfg.size_max - cfg.size_min)),
    }
}

/// Generate `cfg.count` scenes. Faces are pairwise non-overlapping with a
/// minimum center separation; a scene that cannot be packed within the retry
/// budget is a generation error.
pub fn gen_scenes(
    cfg: &SceneConfig,
    mean_shape: &MeanShape,
    scalemap: &ScaleMapConfig,
    label_stride: u32,
    run_seed: u64,
) -> Result<Vec<Scene>> {
    let (h, w) = (cfg.dims[0], cfg.dims[1]);
    if h == 0 || w == 0 {
        return Err(CliError::Config("scene dims must be positive".into()));
    }
    let l_max = u32::max(h, w) as f64;
    let min_sep = (cfg.min_center_separation_cells * label_stride) as f64;

    let mut scenes = Vec::with_capacity(cfg.count);
    for index in 0..cfg.count {
        let seed = scene_seed(run_seed, index as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let span = (cfg.faces_max - cfg.faces_min + 1) as f64;
        let count = cfg.faces_min + (uniform(&mut rng) * span) as u32;
        let count = count.min(cfg.faces_max);

        let mut faces: Vec<Face> = Vec::new();
        let mut attempts = 0usize;
        while faces.len() < count as usize {
            attempts += 1;
            if attempts > 100 * count as usize {
                return Err(CliError::Generation(format!(
                    "could not place {count} faces in a {h}x{w} scene (seed {seed})"
                )));
            }
            let size = draw_size(&mut rng, cfg, scalemap, l_max)?;
            // validate the canonical-scale size against the mapped range
            let canonical = size * scalemap.s_max / l_max;
            let lo = 2f64.powi(scalemap.base_exponent);
            let hi = 2f64.powi(scalemap.top_exponent());
            if canonical < lo || canonical > hi {
                return Err(CliError::Generation(format!(
                    "face size {size} maps to canonical {canonical}, outside [{lo}, {hi}]"
                )));
            }
            if size >= w as f64 || size >= h as f64 {
                return Err(CliError::Generation(format!(
                    "face size {size} does not fit in a {h}x{w} scene"
                )));
            }
            let cx = size / 2.0 + uniform(&mut rng) * (w as f64 - size);
            let cy = size / 2.0 + uniform(&mut rng) * (h as f64 - size);
            let bbox = BBox::new(
                cx - size / 2.0,
                cy - size / 2.0,
                cx + size / 2.0,
                cy + size / 2.0,
            )
            .map_err(CliError::Core)?;

            let clear = faces.iter().all(|f| {
                let other = f.bbox.center();
                let sep = f64::max((other.x - cx).abs(), (other.y - cy).abs());
                bbox.intersect(&f.bbox).is_none() && sep >= min_sep
            });
            if !clear {
                continue;
            }
            let landmarks = landmarks_in_box(mean_shape, &bbox).map_err(CliError::Core)?;
            faces.push(Face { bbox, landmarks });
        }
        scenes.push(Scene { dims: (h, w), faces, seed });
    }
    Ok(scenes)
}

/// Render the scene image: uniform noise background plus one Gaussian blob
/// per face. Channel 0 carries the blob, channel 1 a wider halo, channel 2 a
/// tighter core, so the blob's radial profile encodes its size.
pub fn render_scene_image(scene: &Scene) -> Tensor {
    let (h, w) = (scene.dims.0 as usize, scene.dims.1 as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed ^ 0x1337_C0DE);
    let mut data = vec![0.0f32; 3 * h * w];
    for value in data.iter_mut() {
        *value = (uniform(&mut rng) * 0.15) as f32;
    }

    for face in &scene.faces {
        let center = face.bbox.center();
        let size = face_size(&face.bbox);
        let sigma = size / 4.0;
        let reach = (3.0 * sigma).ceil() as i64;
        let (cx, cy) = (center.x, center.y);
        let y0 = ((cy as i64) - reach).max(0) as usize;
        let y1 = (((cy as i64) + reach + 1).min(h as i64)) as usize;
        let x0 = ((cx as i64) - reach).max(0) as usize;
        let x1 = (((cx as i64) + reach + 1).min(w as i64)) as usize;
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                let d2 = dx * dx + dy * dy;
                let blob = (-d2 / (2.0 * sigma * sigma)).exp();
                let halo = (-d2 / (2.0 * (1.8 * sigma) * (1.8 * sigma))).exp();
                let core = (-d2 / (2.0 * (0.5 * sigma) * (0.5 * sigma))).exp();
                let idx = y * w + x;
                data[idx] = (data[idx] + blob as f32).min(1.0);
                data[h * w + idx] = (data[h * w + idx] + 0.8 * halo as f32).min(1.0);
                data[2 * h * w + idx] = (data[2 * h * w + idx] + core as f32).min(1.0);
            }
        }
    }
    Tensor::new(3, h, w, data).expect("rendered image is finite")
}

/// Ground-truth (box, bin) pairs for evaluation, derived via the landmark
/// fit.
pub fn ground_truth(
    scene: &Scene,
    mean_shape: &MeanShape,
    scalemap: &ScaleMapConfig,
) -> Result<Vec<(BBox, u32)>> {
    let l_max = scene.long_side();
    scene
        .derived_boxes(mean_shape)?
        .into_iter()
        .map(|bbox| {
            let (bin, _) =
                size_to_bin(face_size(&bbox), l_max, scalemap).map_err(CliError::Core)?;
            Ok((bbox, bin.get()))
        })
        .collect()
}
