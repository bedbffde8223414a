//! Fixed-layout spatial and pose encodings of one human-object pair.

use std::f64::consts::PI;

use super::geometry::{iou, BoundingBox, Frame};
use crate::error::{Error, Result};

pub const SPATIAL_DIM: usize = 42;
pub const KEYPOINTS: usize = 17;
pub const KEYPOINT_DIM: usize = 16;
pub const POSE_DIM: usize = KEYPOINTS * KEYPOINT_DIM;
/// Keypoints with a confidence above this count as visible.
pub const VISIBILITY_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

fn box_block(b: &BoundingBox, f: &Frame, out: &mut Vec<f64>) {
    let (cx, cy) = b.center();
    out.extend([
        (b.x1 - f.x0) / f.width,
        (b.y1 - f.y0) / f.height,
        (b.x2 - f.x0) / f.width,
        (b.y2 - f.y0) / f.height,
        (cx - f.x0) / f.width,
        (cy - f.y0) / f.height,
        b.width() / f.width,
        b.height() / f.height,
    ]);
}

/// Centre offset and log size ratio of `b` relative to `reference`.
fn delta_block(b: &BoundingBox, reference: &BoundingBox, out: &mut Vec<f64>) {
    let (cx, cy) = b.center();
    let (rx, ry) = reference.center();
    out.extend([
        (cx - rx) / reference.width(),
        (cy - ry) / reference.height(),
        (b.width().max(1.0) / reference.width().max(1.0)).ln(),
        (b.height().max(1.0) / reference.height().max(1.0)).ln(),
    ]);
}

/// 42 values: three box blocks (human, object, union), two delta blocks,
/// overlap, area ratios and coarse geometry.
pub fn encode_spatial(h: &BoundingBox, o: &BoundingBox, frame: &Frame) -> Result<Vec<f64>> {
    frame.validate()?;
    h.validate()?;
    o.validate()?;
    let u = h.enclosing(o);
    let mut out = Vec::with_capacity(SPATIAL_DIM);
    box_block(h, frame, &mut out);
    box_block(o, frame, &mut out);
    box_block(&u, frame, &mut out);
    delta_block(o, h, &mut out);
    delta_block(h, o, &mut out);

    let inter = h.intersection_area(o);
    out.extend([iou(h, o), inter / h.area(), inter / o.area()]);
    out.extend([
        o.area() / h.area(),
        h.area() / u.area(),
        o.area() / u.area(),
    ]);

    let diag = frame.diagonal();
    let (hx, hy) = h.center();
    let (ox, oy) = o.center();
    let gap_x = (o.x1 - h.x2).max(h.x1 - o.x2).max(0.0);
    let gap_y = (o.y1 - h.y2).max(h.y1 - o.y2).max(0.0);
    out.extend([
        (ox - hx).hypot(oy - hy) / diag,
        h.width() / h.height(),
        o.width() / o.height(),
        gap_x.hypot(gap_y) / diag,
    ]);
    debug_assert_eq!(out.len(), SPATIAL_DIM);
    Ok(out)
}

/// 17 keypoints × 16 values, see [`KEYPOINT_DIM`].
pub fn encode_pose(
    keypoints: &[Keypoint],
    h: &BoundingBox,
    o: &BoundingBox,
    frame: &Frame,
) -> Result<Vec<f64>> {
    if keypoints.len() != KEYPOINTS {
        return Err(Error::invalid(format!(
            "pose needs {KEYPOINTS} keypoints, got {}",
            keypoints.len()
        )));
    }
    frame.validate()?;
    h.validate()?;
    o.validate()?;
    if let Some(k) = keypoints
        .iter()
        .find(|k| !(k.x.is_finite() && k.y.is_finite() && k.confidence.is_finite()))
    {
        return Err(Error::invalid(format!("non-finite keypoint {k:?}")));
    }
    let u = h.enclosing(o);
    let (hx, hy) = h.center();
    let (ox, oy) = o.center();
    let diag = frame.diagonal();
    let mut out = Vec::with_capacity(POSE_DIM);
    for k in keypoints {
        for b in [h, o, &u] {
            out.push((k.x - b.x1) / b.width());
            out.push((k.y - b.y1) / b.height());
        }
        out.extend([
            (k.x - hx) / h.width(),
            (k.y - hy) / h.height(),
            (k.x - ox) / o.width(),
            (k.y - oy) / o.height(),
            (k.x - frame.x0) / frame.width,
            (k.y - frame.y0) / frame.height,
            k.confidence,
            if k.confidence > VISIBILITY_THRESHOLD {
                1.0
            } else {
                0.0
            },
            (ox - k.x).hypot(oy - k.y) / diag,
        ]);
        let turn = ((oy - k.y).atan2(ox - k.x) + PI) / (2.0 * PI);
        out.push(if turn >= 1.0 { 0.0 } else { turn });
    }
    debug_assert_eq!(out.len(), POSE_DIM);
    Ok(out)
}
