//! End-to-end oracle decoding: ground-truth label maps fed through the
//! scale-spatial decoder must recover every face exactly once, and the
//! planned zoom must land each matched face inside the anchor's working
//! range.

use scalemask_core::decode::{decode_locations, nms_1d, scale_vector, smooth};
use scalemask_core::geometry::BBox;
use scalemask_core::labels::{attention_center, render_labels};
use scalemask_core::scalemap::{bin_to_size, zoom_target_length, ScaleMapConfig};

struct Face {
    bbox: BBox,
    bin: u32,
    cell: (usize, usize),
}

/// Deterministic multi-face scenes on a 1024x1024 canvas. Sizes come from a
/// bin ladder spaced more than the NMS radius apart; centers keep at least
/// three cells of separation so components stay disjoint.
fn make_scene(seed: u64, cfg: &ScaleMapConfig) -> Vec<Face> {
    let ladder = [25u32, 30, 35, 40, 45];
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(0xDEADBEEF);
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 33) as f64 / (1u64 << 31) as f64
    };
    let count = 1 + (next() * 3.0) as usize;
    let mut faces: Vec<Face> = Vec::new();
    let mut attempts = 0;
    while faces.len() < count && attempts < 200 {
        attempts += 1;
        let bin = ladder[(next() * ladder.len() as f64) as usize];
        // mid-bin size: stay clear of the quantization boundaries
        let upper = bin_to_size(
            scalemask_core::scalemap::ScaleBin::new(bin, cfg).unwrap(),
            1024.0,
            cfg,
        )
        .unwrap();
        let side = upper * 2f64.powf(-0.05); // half a bin below the upper edge
        let cx = side / 2.0 + next() * (1024.0 - side);
        let cy = side / 2.0 + next() * (1024.0 - side);
        let bbox =
            BBox::new(cx - side / 2.0, cy - side / 2.0, cx + side / 2.0, cy + side / 2.0).unwrap();
        let center = attention_center(&bbox, 16, (1024, 1024), cfg).unwrap();
        // enforce the scene conditions: bins equal or > 4 apart, centers
        // at least 3 cells apart
        let ok = faces.iter().all(|f| {
            let bin_ok = f.bin == bin || f.bin.abs_diff(bin) > 4;
            let far = f.cell.0.abs_diff(center.u) >= 3 || f.cell.1.abs_diff(center.v) >= 3;
            bin_ok && far
        });
        if ok {
            assert_eq!(center.bin.get(), bin, "ladder size must land in its own bin");
            faces.push(Face { bbox, bin, cell: (center.u, center.v) });
        }
    }
    faces
}

#[test]
fn oracle_decode_recovers_every_face() {
    let cfg = ScaleMapConfig::default();
    let mut total_faces = 0usize;
    let mut total_regions = 0usize;

    for seed in 0..50u64 {
        let faces = make_scene(seed, &cfg);
        if faces.is_empty() {
            continue;
        }
        let boxes: Vec<BBox> = faces.iter().map(|f| f.bbox).collect();
        let maps = render_labels(&boxes, (1024, 1024), 16, &cfg).unwrap();

        let sv = smooth(&scale_vector(&maps), 1).unwrap();
        let proposals = nms_1d(&sv, 4, 0.5, &cfg);

        let mut matched = vec![false; faces.len()];
        let mut regions_in_scene = 0usize;
        for proposal in &proposals {
            let regions = decode_locations(&maps, proposal.bin, 0.5, &cfg).unwrap();
            regions_in_scene += regions.len();
            for region in &regions {
                // find the face whose attention center cell this region hit
                let cell = (
                    (region.center.0 / 16.0).floor() as usize,
                    (region.center.1 / 16.0).floor() as usize,
                );
                for (i, face) in faces.iter().enumerate() {
                    let du = face.cell.0.abs_diff(cell.0);
                    let dv = face.cell.1.abs_diff(cell.1);
                    if du <= 1 && dv <= 1 && proposal.bin.get().abs_diff(face.bin) <= 4 {
                        assert!(
                            !matched[i] || faces.len() == 1,
                            "face matched twice in scene {seed}"
                        );
                        matched[i] = true;
                    }
                }
            }
        }
        assert!(
            matched.iter().all(|&m| m),
            "scene {seed}: not all faces recovered ({matched:?})"
        );
        total_faces += faces.len();
        total_regions += regions_in_scene;
    }

    assert!(total_faces >= 40, "scenes too small to be meaningful");
    let ratio = total_regions as f64 / total_faces as f64;
    assert!(ratio <= 1.2, "predicted/GT ratio {ratio} above 1.2");
}

#[test]
fn matched_faces_land_in_anchor_range_after_zoom() {
    let cfg = ScaleMapConfig::default();
    for seed in 100..130u64 {
        let faces = make_scene(seed, &cfg);
        if faces.is_empty() {
            continue;
        }
        let boxes: Vec<BBox> = faces.iter().map(|f| f.bbox).collect();
        let maps = render_labels(&boxes, (1024, 1024), 16, &cfg).unwrap();
        let proposals = nms_1d(&smooth(&scale_vector(&maps), 1).unwrap(), 4, 0.5, &cfg);

        for face in &faces {
            // the proposal that matches this face's bin
            let proposal = proposals
                .iter()
                .find(|p| p.bin.get().abs_diff(face.bin) <= 4)
                .expect("every face bin has a proposal within the window");
            let nominal = bin_to_size(proposal.bin, 1024.0, &cfg).unwrap();
            let target = zoom_target_length(nominal, 1024.0, &cfg).unwrap();
            let face_px = scalemask_core::geometry::face_size(&face.bbox);
            let zoomed = face_px * target / 1024.0;
            let lo = 2f64.powf(6.1) * 0.99;
            let hi = 2f64.powf(6.9) * 1.01;
            assert!(
                zoomed >= lo && zoomed <= hi,
                "seed {seed}: zoomed size {zoomed} outside anchor range"
            );
            assert!(zoomed >= 64.0 && zoomed <= 128.0);
        }
    }
}
