//! Scale-consistent bounding boxes from 5-point facial landmarks.
//!
//! Manual face boxes are noisy; the five landmark points (eye centers, nose,
//! mouth corners) are not. A box is therefore *derived*: fit the 4-DOF
//! similarity transform that carries the landmarks onto a canonical mean
//! shape, then map the unit square back through the inverse transform. Boxes
//! produced this way are consistent across annotators and scale linearly
//! with the face.

use crate::error::{Error, Result};
use crate::math;
use alloc::format;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

pub const NUM_LANDMARKS: usize = 5;

/// A 2-D point; the unit (pixels vs. normalized) depends on context.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Five ordered facial landmarks in image pixels: left eye center, right eye
/// center, nose tip, left mouth corner, right mouth corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkSet {
    points: [Point; NUM_LANDMARKS],
}

/// Landmarks expressed relative to a manual box: dimensionless, roughly in
/// the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedLandmarks {
    points: [Point; NUM_LANDMARKS],
}

/// The dataset-average normalized landmark layout the similarity fit aligns
/// against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanShape {
    points: [Point; NUM_LANDMARKS],
}

/// Nominal frontal-face layout used when no dataset mean is configured.
pub const DEFAULT_MEAN_SHAPE: [[f64; 2]; NUM_LANDMARKS] = [
    [0.30, 0.35],
    [0.70, 0.35],
    [0.50, 0.55],
    [0.32, 0.75],
    [0.68, 0.75],
];

fn all_finite(points: &[Point; NUM_LANDMARKS]) -> bool {
    points.iter().all(|p| p.x.is_finite() && p.y.is_finite())
}

/// True when the five points lie on (almost) one line, which leaves the
/// similarity fit without a usable box orientation.
fn is_collinear(points: &[Point; NUM_LANDMARKS]) -> bool {
    // Pick the point farthest from p0 as the reference direction, then test
    // every cross product against the squared span.
    let p0 = points[0];
    let mut span2 = 0.0;
    let mut dir = Point::new(0.0, 0.0);
    for p in &points[1..] {
        let dx = p.x - p0.x;
        let dy = p.y - p0.y;
        let d2 = dx * dx + dy * dy;
        if d2 > span2 {
            span2 = d2;
            dir = Point::new(dx, dy);
        }
    }
    if span2 <= 0.0 {
        return true;
    }
    let mut max_cross = 0.0;
    for p in &points[1..] {
        let cross = dir.x * (p.y - p0.y) - dir.y * (p.x - p0.x);
        max_cross = f64::max(max_cross, math::abs(cross));
    }
    max_cross <= 1e-12 * span2
}

impl LandmarkSet {
    pub fn new(points: [Point; NUM_LANDMARKS]) -> Result<Self> {
        if !all_finite(&points) {
            return Err(Error::invalid("landmark coordinates must be finite"));
        }
        Ok(LandmarkSet { points })
    }

    pub fn from_xy(coords: [[f64; 2]; NUM_LANDMARKS]) -> Result<Self> {
        Self::new(coords.map(|[x, y]| Point::new(x, y)))
    }

    pub fn points(&self) -> &[Point; NUM_LANDMARKS] {
        &self.points
    }
}

impl NormalizedLandmarks {
    pub fn new(points: [Point; NUM_LANDMARKS]) -> Result<Self> {
        if !all_finite(&points) {
            return Err(Error::invalid("normalized landmarks must be finite"));
        }
        Ok(NormalizedLandmarks { points })
    }

    pub fn points(&self) -> &[Point; NUM_LANDMARKS] {
        &self.points
    }
}

impl MeanShape {
    pub fn new(points: [Point; NUM_LANDMARKS]) -> Result<Self> {
        if !all_finite(&points) {
            return Err(Error::invalid("mean shape must be finite"));
        }
        if is_collinear(&points) {
            return Err(Error::invalid("mean shape points are collinear"));
        }
        Ok(MeanShape { points })
    }

    pub fn from_xy(coords: [[f64; 2]; NUM_LANDMARKS]) -> Result<Self> {
        Self::new(coords.map(|[x, y]| Point::new(x, y)))
    }

    pub fn points(&self) -> &[Point; NUM_LANDMARKS] {
        &self.points
    }
}

impl Default for MeanShape {
    fn default() -> Self {
        MeanShape::from_xy(DEFAULT_MEAN_SHAPE).expect("default mean shape is valid")
    }
}

/// Axis-aligned box with strictly positive extent, in image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BBox {
    pub x_tl: f64,
    pub y_tl: f64,
    pub x_dr: f64,
    pub y_dr: f64,
}

impl BBox {
    pub fn new(x_tl: f64, y_tl: f64, x_dr: f64, y_dr: f64) -> Result<Self> {
        if !(x_tl.is_finite() && y_tl.is_finite() && x_dr.is_finite() && y_dr.is_finite()) {
            return Err(Error::invalid("box corners must be finite"));
        }
        if x_dr <= x_tl || y_dr <= y_tl {
            return Err(Error::invalid(format!(
                "box must have positive extent, got ({x_tl},{y_tl})-({x_dr},{y_dr})"
            )));
        }
        Ok(BBox { x_tl, y_tl, x_dr, y_dr })
    }

    pub fn width(&self) -> f64 {
        self.x_dr - self.x_tl
    }

    pub fn height(&self) -> f64 {
        self.y_dr - self.y_tl
    }

    pub fn center(&self) -> Point {
        Point::new((self.x_tl + self.x_dr) * 0.5, (self.y_tl + self.y_dr) * 0.5)
    }

    /// Intersection with another box, or `None` when they are disjoint.
    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let x_tl = f64::max(self.x_tl, other.x_tl);
        let y_tl = f64::max(self.y_tl, other.y_tl);
        let x_dr = f64::min(self.x_dr, other.x_dr);
        let y_dr = f64::min(self.y_dr, other.y_dr);
        if x_dr > x_tl && y_dr > y_tl {
            Some(BBox { x_tl, y_tl, x_dr, y_dr })
        } else {
            None
        }
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        match self.intersect(other) {
            Some(i) => {
                let inter = i.area();
                inter / (self.area() + other.area() - inter)
            }
            None => 0.0,
        }
    }
}

/// Uniform scale + rotation + translation. Applied as
/// `p' = scale * R(rotation) * p + t`; the equivalent homogeneous matrix has
/// bottom row (0, 0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: f64,
    pub tx: f64,
    pub ty: f64,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform { scale: 1.0, rotation: 0.0, tx: 0.0, ty: 0.0 }
    }

    pub fn apply(&self, p: Point) -> Point {
        let (s, c) = (math::sin(self.rotation), math::cos(self.rotation));
        Point::new(
            self.scale * (c * p.x - s * p.y) + self.tx,
            self.scale * (s * p.x + c * p.y) + self.ty,
        )
    }

    pub fn inverse(&self) -> Result<SimilarityTransform> {
        if !(self.scale > 0.0) {
            return Err(Error::SingularFit);
        }
        let inv_scale = 1.0 / self.scale;
        let rot = -self.rotation;
        let (s, c) = (math::sin(rot), math::cos(rot));
        // inverse translation: -1/s * R(-theta) * t
        let tx = -inv_scale * (c * self.tx - s * self.ty);
        let ty = -inv_scale * (s * self.tx + c * self.ty);
        Ok(SimilarityTransform { scale: inv_scale, rotation: rot, tx, ty })
    }

    /// Row-major 3x3 homogeneous matrix.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let (s, c) = (math::sin(self.rotation), math::cos(self.rotation));
        [
            [self.scale * c, -self.scale * s, self.tx],
            [self.scale * s, self.scale * c, self.ty],
            [0.0, 0.0, 1.0],
        ]
    }
}

/// Express landmarks relative to a manual box: `p = (x - X1) / w`,
/// `q = (y - Y1) / h`.
pub fn normalize_landmarks(
    landmarks: &LandmarkSet,
    manual_box: &BBox,
) -> Result<NormalizedLandmarks> {
    let w = manual_box.width();
    let h = manual_box.height();
    if w <= 0.0 || h <= 0.0 {
        return Err(Error::invalid("manual box must have positive width and height"));
    }
    let points = landmarks
        .points
        .map(|p| Point::new((p.x - manual_box.x_tl) / w, (p.y - manual_box.y_tl) / h));
    NormalizedLandmarks::new(points)
}

/// Componentwise mean per landmark index, without shape validation.
pub fn average_landmarks(samples: &[NormalizedLandmarks]) -> Result<[Point; NUM_LANDMARKS]> {
    if samples.is_empty() {
        return Err(Error::invalid("mean shape requires at least one sample"));
    }
    let n = samples.len() as f64;
    let mut sums = [Point::new(0.0, 0.0); NUM_LANDMARKS];
    for sample in samples {
        for (acc, p) in sums.iter_mut().zip(sample.points.iter()) {
            acc.x += p.x;
            acc.y += p.y;
        }
    }
    Ok(sums.map(|p| Point::new(p.x / n, p.y / n)))
}

/// Componentwise mean of normalized landmark sets, validated as a usable
/// (non-collinear) mean shape.
pub fn compute_mean_shape(samples: &[NormalizedLandmarks]) -> Result<MeanShape> {
    MeanShape::new(average_landmarks(samples)?)
}

/// Least-squares 4-DOF similarity fit mapping `landmarks` onto `mean_shape`.
///
/// Closed form: with both point sets centered, the rotation is
/// `atan2(sum of cross products, sum of dot products)` and the scale is the
/// projection magnitude over the source spread. Reflections are excluded by
/// construction (the recovered linear part always has positive determinant).
/// Returns the transform together with the sum of squared residuals.
pub fn fit_similarity(
    landmarks: &LandmarkSet,
    mean_shape: &MeanShape,
) -> Result<(SimilarityTransform, f64)> {
    let src = &landmarks.points;
    let dst = &mean_shape.points;
    let n = NUM_LANDMARKS as f64;

    let mut src_c = Point::new(0.0, 0.0);
    let mut dst_c = Point::new(0.0, 0.0);
    for i in 0..NUM_LANDMARKS {
        src_c.x += src[i].x;
        src_c.y += src[i].y;
        dst_c.x += dst[i].x;
        dst_c.y += dst[i].y;
    }
    src_c = Point::new(src_c.x / n, src_c.y / n);
    dst_c = Point::new(dst_c.x / n, dst_c.y / n);

    let mut dot = 0.0; // sum a'_i . b'_i
    let mut cross = 0.0; // sum a'_i x b'_i
    let mut spread = 0.0; // sum |a'_i|^2
    for i in 0..NUM_LANDMARKS {
        let ax = src[i].x - src_c.x;
        let ay = src[i].y - src_c.y;
        let bx = dst[i].x - dst_c.x;
        let by = dst[i].y - dst_c.y;
        dot += ax * bx + ay * by;
        cross += ax * by - ay * bx;
        spread += ax * ax + ay * ay;
    }
    if spread <= 0.0 {
        return Err(Error::SingularFit);
    }

    let rotation = math::atan2(cross, dot);
    let scale = math::hypot(dot, cross) / spread;
    if !(scale > 0.0) {
        // All target points coincide; scale 0 is not a similarity.
        return Err(Error::SingularFit);
    }

    let (sr, cr) = (math::sin(rotation), math::cos(rotation));
    let tx = dst_c.x - scale * (cr * src_c.x - sr * src_c.y);
    let ty = dst_c.y - scale * (sr * src_c.x + cr * src_c.y);
    let transform = SimilarityTransform { scale, rotation, tx, ty };

    let mut residual = 0.0;
    for i in 0..NUM_LANDMARKS {
        let mapped = transform.apply(src[i]);
        let dx = mapped.x - dst[i].x;
        let dy = mapped.y - dst[i].y;
        residual += dx * dx + dy * dy;
    }
    Ok((transform, residual))
}

/// Consistent bounding box: the unit-square corners (0,0) and (1,1) carried
/// back to image space through the inverse of the fitted transform. Under
/// rotation the two mapped points need not be axis-aligned corners; the box
/// is their min/max envelope.
pub fn bbox_from_landmarks(landmarks: &LandmarkSet, mean_shape: &MeanShape) -> Result<BBox> {
    let (transform, _residual) = fit_similarity(landmarks, mean_shape)?;
    let inv = transform.inverse()?;
    let a = inv.apply(Point::new(0.0, 0.0));
    let b = inv.apply(Point::new(1.0, 1.0));
    BBox::new(
        f64::min(a.x, b.x),
        f64::min(a.y, b.y),
        f64::max(a.x, b.x),
        f64::max(a.y, b.y),
    )
}

/// Face size: geometric mean of box width and height.
pub fn face_size(bbox: &BBox) -> f64 {
    math::sqrt(bbox.width() * bbox.height())
}

/// Place a shape into a box with an axis-aligned similarity (no rotation):
/// the unit square maps onto the box. Fitting the result recovers exactly
/// that placement, so generated scenes round-trip through
/// [`bbox_from_landmarks`].
pub fn landmarks_in_box(mean_shape: &MeanShape, bbox: &BBox) -> Result<LandmarkSet> {
    let side_x = bbox.width();
    let side_y = bbox.height();
    let points = mean_shape
        .points
        .map(|p| Point::new(bbox.x_tl + side_x * p.x, bbox.y_tl + side_y * p.y));
    LandmarkSet::new(points)
}

/// Helper for tests and scene synthesis: landmarks produced by pushing the
/// mean shape through the inverse of `transform`, so that fitting them
/// recovers `transform`.
pub fn landmarks_from_transform(
    mean_shape: &MeanShape,
    transform: &SimilarityTransform,
) -> Result<LandmarkSet> {
    let inv = transform.inverse()?;
    LandmarkSet::new(mean_shape.points.map(|p| inv.apply(p)))
}

pub fn mean_shape_from_rows(rows: &[[f64; 2]]) -> Result<MeanShape> {
    let arr: [[f64; 2]; NUM_LANDMARKS] = rows
        .try_into()
        .map_err(|_| Error::invalid("mean shape must have exactly 5 points"))?;
    MeanShape::from_xy(arr)
}

/// Collect normalized landmarks for a batch of (landmarks, manual box)
/// pairs; convenience for building a dataset mean.
pub fn normalize_batch(pairs: &[(LandmarkSet, BBox)]) -> Result<Vec<NormalizedLandmarks>> {
    pairs
        .iter()
        .map(|(lm, bx)| normalize_landmarks(lm, bx))
        .collect()
}
