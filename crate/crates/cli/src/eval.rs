//! Recall-vs-ratio evaluation and operating-threshold selection.
//!
//! A ground-truth face counts as recalled at a threshold when some decoded
//! region satisfies both |predicted bin - true bin| <= bin_window and
//! box IoU >= iou_threshold; matching is greedy one-to-one by descending
//! region score. The ratio axis is total decoded regions over total faces.
//! Scale-only and location-only recall are tracked alongside the
//! conjunction.

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::predict::Predictor;
use crate::scene::{ground_truth, Scene};
use scalemask_core::decode::{decode_locations, nms_1d, scale_vector, smooth, RegionProposal};
use scalemask_core::geometry::BBox;
use scalemask_core::labels::AttentionMaps;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub threshold: f32,
    /// Conjunction recall: bin window and IoU both satisfied.
    pub recall: f64,
    /// Decoded regions per ground-truth face.
    pub ratio: f64,
    /// Fraction of faces whose bin was proposed within the window.
    pub scale_recall: f64,
    /// Fraction of faces location-covered regardless of bin.
    pub loc_recall: f64,
}

/// Decode one scene's maps at one threshold into (bin, region) pairs.
pub fn decode_at(
    maps: &AttentionMaps,
    threshold: f32,
    cfg: &Config,
) -> Result<Vec<RegionProposal>> {
    let sv = smooth(&scale_vector(maps), cfg.decode.smooth_window).map_err(CliError::Core)?;
    let proposals = nms_1d(&sv, cfg.decode.nms_radius, threshold, &cfg.scalemap);
    let mut regions = Vec::new();
    for proposal in proposals {
        regions.extend(
            decode_locations(maps, proposal.bin, threshold, &cfg.scalemap)
                .map_err(CliError::Core)?,
        );
    }
    Ok(regions)
}

fn region_box(region: &RegionProposal) -> BBox {
    let half = region.side / 2.0;
    BBox::new(
        region.center.0 - half,
        region.center.1 - half,
        region.center.0 + half,
        region.center.1 + half,
    )
    .expect("region side is positive")
}

struct SceneEval {
    matched: usize,
    scale_hits: usize,
    loc_hits: usize,
    faces: usize,
    regions: usize,
}

fn eval_scene(
    maps: &AttentionMaps,
    gt: &[(BBox, u32)],
    threshold: f32,
    cfg: &Config,
) -> Result<SceneEval> {
    let mut regions = decode_at(maps, threshold, cfg)?;
    // greedy matching by descending score; stable sort keeps decode order on
    // ties, which is deterministic
    regions.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));

    let window = cfg.eval.bin_window;
    let iou_thr = cfg.eval.iou_threshold;
    let mut taken = vec![false; gt.len()];
    let mut matched = 0usize;
    for region in &regions {
        let rb = region_box(region);
        let mut best: Option<(usize, f64)> = None;
        for (i, (bbox, bin)) in gt.iter().enumerate() {
            if taken[i] || region.bin.get().abs_diff(*bin) > window {
                continue;
            }
            let iou = rb.iou(bbox);
            if iou >= iou_thr && best.map_or(true, |(_, b)| iou > b) {
                best = Some((i, iou));
            }
        }
        if let Some((i, _)) = best {
            taken[i] = true;
            matched += 1;
        }
    }

    // scale-only: any region's bin within the window of the face bin
    let scale_hits = gt
        .iter()
        .filter(|(_, bin)| regions.iter().any(|r| r.bin.get().abs_diff(*bin) <= window))
        .count();
    // location-only: any region boxes the face regardless of bin
    let loc_hits = gt
        .iter()
        .filter(|(bbox, _)| regions.iter().any(|r| region_box(r).iou(bbox) >= iou_thr))
        .count();

    Ok(SceneEval { matched, scale_hits, loc_hits, faces: gt.len(), regions: regions.len() })
}

/// Sweep the decode threshold over the configured grid. Maps are predicted
/// once per scene and reused across thresholds.
pub fn eval_recall_ratio(
    scenes: &[Scene],
    predictor: &Predictor,
    cfg: &Config,
) -> Result<Vec<EvalPoint>> {
    if scenes.is_empty() {
        return Err(CliError::Config("evaluation needs at least one scene".into()));
    }
    let mean = cfg.mean_shape()?;
    let mut prepared = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let maps = predictor.predict(scene, cfg)?;
        let gt = ground_truth(scene, &mean, &cfg.scalemap)?;
        prepared.push((maps, gt));
    }

    let mut grid = Vec::new();
    let mut t = cfg.eval.grid_start;
    while t <= cfg.eval.grid_stop + 1e-9 {
        grid.push(t);
        t += cfg.eval.grid_step;
    }

    let mut points = Vec::with_capacity(grid.len());
    for &threshold in &grid {
        let mut totals = SceneEval { matched: 0, scale_hits: 0, loc_hits: 0, faces: 0, regions: 0 };
        for (maps, gt) in &prepared {
            let e = eval_scene(maps, gt, threshold, cfg)?;
            totals.matched += e.matched;
            totals.scale_hits += e.scale_hits;
            totals.loc_hits += e.loc_hits;
            totals.faces += e.faces;
            totals.regions += e.regions;
        }
        let faces = totals.faces.max(1) as f64;
        points.push(EvalPoint {
            threshold,
            recall: totals.matched as f64 / faces,
            ratio: totals.regions as f64 / faces,
            scale_recall: totals.scale_hits as f64 / faces,
            loc_recall: totals.loc_hits as f64 / faces,
        });
    }
    Ok(points)
}

/// The largest threshold whose recall meets the target.
pub fn select_threshold(points: &[EvalPoint], target: f64) -> Result<f32> {
    let mut best_meeting: Option<&EvalPoint> = None;
    let mut best_overall: Option<&EvalPoint> = None;
    for p in points {
        if p.recall >= target
            && best_meeting.map_or(true, |b| p.threshold > b.threshold)
        {
            best_meeting = Some(p);
        }
        if best_overall.map_or(true, |b| p.recall > b.recall) {
            best_overall = Some(p);
        }
    }
    match best_meeting {
        Some(p) => Ok(p.threshold),
        None => Err(CliError::NotAchievable {
            target,
            best: *best_overall.ok_or_else(|| CliError::Config("empty sweep".into()))?,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::gen_scenes;

    fn oracle_setup(count: usize, run_seed: u64) -> (Config, Vec<Scene>) {
        let mut cfg = Config::default();
        cfg.scenes.count = count;
        cfg.scenes.bin_ladder = Some(vec![25, 30, 35, 40, 45]);
        cfg.decode.smooth_window = 1;
        let mean = cfg.mean_shape().unwrap();
        let scenes =
            gen_scenes(&cfg.scenes, &mean, &cfg.scalemap, cfg.label_stride, run_seed).unwrap();
        (cfg, scenes)
    }

    #[test]
    fn oracle_hits_full_recall_at_low_ratio() {
        let (cfg, scenes) = oracle_setup(20, 17);
        let points = eval_recall_ratio(&scenes, &Predictor::Oracle, &cfg).unwrap();
        let at_half = points
            .iter()
            .find(|p| (p.threshold - 0.5).abs() < 1e-6)
            .expect("0.5 on the grid");
        assert_eq!(at_half.recall, 1.0);
        assert!(at_half.ratio <= 1.2, "ratio {}", at_half.ratio);
        assert_eq!(at_half.scale_recall, 1.0);
        assert_eq!(at_half.loc_recall, 1.0);
    }

    #[test]
    fn threshold_above_peak_yields_nothing() {
        let (mut cfg, scenes) = oracle_setup(5, 23);
        cfg.eval.grid_start = 1.01;
        cfg.eval.grid_stop = 1.01;
        let points = eval_recall_ratio(&scenes, &Predictor::Oracle, &cfg).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].recall, 0.0);
        assert_eq!(points[0].ratio, 0.0);
    }

    #[test]
    fn recall_and_ratio_monotone_in_threshold() {
        let (cfg, scenes) = oracle_setup(10, 31);
        let points = eval_recall_ratio(&scenes, &Predictor::Oracle, &cfg).unwrap();
        for pair in points.windows(2) {
            assert!(pair[1].ratio <= pair[0].ratio + 1e-12);
            assert!(pair[1].recall <= pair[0].recall + 1e-12);
        }
    }

    #[test]
    fn select_threshold_behavior() {
        let points = vec![
            EvalPoint { threshold: 0.1, recall: 1.0, ratio: 2.0, scale_recall: 1.0, loc_recall: 1.0 },
            EvalPoint { threshold: 0.5, recall: 1.0, ratio: 1.0, scale_recall: 1.0, loc_recall: 1.0 },
            EvalPoint { threshold: 0.9, recall: 0.4, ratio: 0.5, scale_recall: 0.5, loc_recall: 0.6 },
        ];
        // target 0: the largest threshold qualifies
        assert_eq!(select_threshold(&points, 0.0).unwrap(), 0.9);
        assert_eq!(select_threshold(&points, 0.98).unwrap(), 0.5);
        match select_threshold(&points, 1.01) {
            Err(CliError::NotAchievable { best, .. }) => assert_eq!(best.threshold, 0.1),
            other => panic!("expected NotAchievable, got {other:?}"),
        }
    }
}
