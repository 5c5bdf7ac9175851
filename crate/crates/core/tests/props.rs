//! Property tests for the geometry fit, the bin mapping, and label
//! rendering.

use proptest::prelude::*;
use scalemask_core::geometry::{
    bbox_from_landmarks, face_size, fit_similarity, landmarks_from_transform, LandmarkSet,
    MeanShape, Point, SimilarityTransform,
};
use scalemask_core::labels::render_labels;
use scalemask_core::scalemap::{size_to_bin, ScaleMapConfig};

fn wrap_angle(a: f64) -> f64 {
    let two_pi = core::f64::consts::TAU;
    let mut r = a % two_pi;
    if r > core::f64::consts::PI {
        r -= two_pi;
    }
    if r < -core::f64::consts::PI {
        r += two_pi;
    }
    r
}

proptest! {
    /// Fitting landmarks constructed as S^-1(mean shape) recovers S exactly
    /// (noiseless, 1e-9).
    #[test]
    fn similarity_round_trip(
        scale in 0.1f64..10.0,
        rotation in -3.1f64..3.1,
        tx in -1000.0f64..1000.0,
        ty in -1000.0f64..1000.0,
    ) {
        let mean = MeanShape::default();
        let wanted = SimilarityTransform { scale, rotation, tx, ty };
        let landmarks = landmarks_from_transform(&mean, &wanted).unwrap();
        let (got, residual) = fit_similarity(&landmarks, &mean).unwrap();
        prop_assert!((got.scale - scale).abs() <= 1e-9, "scale {} vs {}", got.scale, scale);
        prop_assert!(wrap_angle(got.rotation - rotation).abs() <= 1e-9);
        prop_assert!((got.tx - tx).abs() <= 1e-9 * (1.0 + tx.abs()));
        prop_assert!((got.ty - ty).abs() <= 1e-9 * (1.0 + ty.abs()));
        prop_assert!(residual <= 1e-12);
    }

    /// Translating landmarks translates the derived box; scaling them scales
    /// its sides.
    #[test]
    fn bbox_equivariance(
        dx in -500.0f64..500.0,
        dy in -500.0f64..500.0,
        s in 0.2f64..5.0,
    ) {
        let mean = MeanShape::default();
        let base = LandmarkSet::new(
            mean.points().map(|p| Point::new(100.0 * p.x + 50.0, 100.0 * p.y + 80.0)),
        ).unwrap();
        let bbox = bbox_from_landmarks(&base, &mean).unwrap();

        let shifted = LandmarkSet::new(
            base.points().map(|p| Point::new(p.x + dx, p.y + dy)),
        ).unwrap();
        let shifted_box = bbox_from_landmarks(&shifted, &mean).unwrap();
        prop_assert!((shifted_box.x_tl - bbox.x_tl - dx).abs() <= 1e-9 * (1.0 + dx.abs()));
        prop_assert!((shifted_box.y_tl - bbox.y_tl - dy).abs() <= 1e-9 * (1.0 + dy.abs()));
        prop_assert!((shifted_box.width() - bbox.width()).abs() <= 1e-9 * bbox.width());

        let scaled = LandmarkSet::new(
            base.points().map(|p| Point::new(s * p.x, s * p.y)),
        ).unwrap();
        let scaled_box = bbox_from_landmarks(&scaled, &mean).unwrap();
        prop_assert!((scaled_box.width() - s * bbox.width()).abs() <= 1e-9 * s * bbox.width());
        prop_assert!((scaled_box.height() - s * bbox.height()).abs() <= 1e-9 * s * bbox.height());
        // face size scales linearly too
        prop_assert!(
            (face_size(&scaled_box) - s * face_size(&bbox)).abs() <= 1e-9 * s * face_size(&bbox)
        );
    }

    /// The fit residual does not change when the whole landmark set is
    /// rotated rigidly.
    #[test]
    fn residual_rotation_invariant(angle in -3.1f64..3.1, noise_seed in 0u64..1000) {
        let mean = MeanShape::default();
        // perturb landmarks deterministically so the residual is nonzero
        let mut state = noise_seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut jitter = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64 - 1.0) * 0.05
        };
        let noisy = LandmarkSet::new(
            mean.points().map(|p| Point::new(p.x + jitter(), p.y + jitter())),
        ).unwrap();
        let (_, residual_base) = fit_similarity(&noisy, &mean).unwrap();

        let (sa, ca) = angle.sin_cos();
        let rotated = LandmarkSet::new(
            noisy.points().map(|p| Point::new(ca * p.x - sa * p.y, sa * p.x + ca * p.y)),
        ).unwrap();
        let (_, residual_rot) = fit_similarity(&rotated, &mean).unwrap();
        prop_assert!((residual_base - residual_rot).abs() <= 1e-9 * (1.0 + residual_base));
    }

    /// Bin index never decreases with face size, and doubling the size adds
    /// exactly one octave to the raw value.
    #[test]
    fn bin_monotone_and_octave(x in 1.0f64..2000.0, y in 1.0f64..2000.0) {
        let cfg = ScaleMapConfig::default();
        let (bx, raw_x) = size_to_bin(x, 1024.0, &cfg).unwrap();
        let (by, _) = size_to_bin(y, 1024.0, &cfg).unwrap();
        if x <= y {
            prop_assert!(bx.get() <= by.get());
        } else {
            prop_assert!(bx.get() >= by.get());
        }
        let (_, raw_2x) = size_to_bin(2.0 * x, 1024.0, &cfg).unwrap();
        prop_assert!((raw_2x - raw_x - 10.0).abs() <= 1e-9);
    }

    /// Rendered labels stay in [0,1], each box's center bin holds exactly 1,
    /// and rendering is independent of box order.
    #[test]
    fn render_bounds_and_permutation(
        seed in 0u64..500,
        count in 1usize..5,
    ) {
        let cfg = ScaleMapConfig::default();
        let mut state = seed.wrapping_mul(0x2545F4914F6CDD1D).wrapping_add(7);
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        let mut boxes = Vec::new();
        for _ in 0..count {
            let side = 20.0 + next() * 480.0;
            let cx = side / 2.0 + next() * (1024.0 - side);
            let cy = side / 2.0 + next() * (1024.0 - side);
            boxes.push(
                scalemask_core::geometry::BBox::new(
                    cx - side / 2.0,
                    cy - side / 2.0,
                    cx + side / 2.0,
                    cy + side / 2.0,
                )
                .unwrap(),
            );
        }
        let maps = render_labels(&boxes, (1024, 1024), 16, &cfg).unwrap();
        prop_assert!(maps.data().iter().all(|&v| (0.0..=1.0).contains(&v)));

        // each box's own center cell carries a full 1 in its bin
        for b in &boxes {
            let c = scalemask_core::labels::attention_center(b, 16, (1024, 1024), &cfg).unwrap();
            prop_assert_eq!(maps.at(c.bin.channel(), c.v, c.u), 1.0);
        }

        let reversed: Vec<_> = boxes.iter().rev().cloned().collect();
        let maps_rev = render_labels(&reversed, (1024, 1024), 16, &cfg).unwrap();
        prop_assert_eq!(maps.data(), maps_rev.data());
    }
}
