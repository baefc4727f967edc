//! Detection-output geometry: default (anchor) boxes, box decoding and
//! non-maximum suppression.
//!
//! Boxes are `(cx, cy, w, h)` fractions of the image while being generated
//! and regressed, and corner-form `(x1, y1, x2, y2)` fractions after
//! decoding. Per feature map, one box set is centered on every cell at
//! `((j + 0.5) / side, (i + 0.5) / side)`; maps are concatenated in order,
//! cells row-major, box variants innermost.

use crate::error::{shape_err, Result};

/// Box-regression variances: offsets are divided by these during encoding.
pub const CENTER_VARIANCE: f64 = 0.1;
pub const SIZE_VARIANCE: f64 = 0.2;

/// Geometry of one detection feature map.
#[derive(Debug, Clone)]
pub struct MapGeometry {
    /// Cells per axis (square maps).
    pub side: usize,
    /// Default boxes per cell: 4 or 6.
    pub boxes_per_cell: usize,
    /// This map's base scale as a fraction of the image.
    pub scale: f64,
    /// The next map's scale (for the intermediate square box).
    pub next_scale: f64,
}

/// Full default-box configuration for a detector.
#[derive(Debug, Clone)]
pub struct DefaultBoxConfig {
    pub maps: Vec<MapGeometry>,
}

impl DefaultBoxConfig {
    /// Standard 300x300 six-map configuration: sides 38/19/10/5/3/1, box
    /// counts {4,6,6,6,4,4}, scales linear from 0.2 to 0.9 with a final
    /// virtual scale of 1.0.
    pub fn ssd300() -> Self {
        Self::from_sides_and_boxes(&[38, 19, 10, 5, 3, 1], &[4, 6, 6, 6, 4, 4])
    }

    /// Linear scale schedule over arbitrary map geometry.
    pub fn from_sides_and_boxes(sides: &[usize], boxes: &[usize]) -> Self {
        assert_eq!(sides.len(), boxes.len());
        let m = sides.len();
        let scale_at = |k: usize| -> f64 {
            if m == 1 {
                0.2
            } else if k >= m {
                1.0
            } else {
                0.2 + (0.9 - 0.2) * k as f64 / (m - 1) as f64
            }
        };
        let maps = sides
            .iter()
            .zip(boxes)
            .enumerate()
            .map(|(k, (&side, &boxes_per_cell))| MapGeometry {
                side,
                boxes_per_cell,
                scale: scale_at(k),
                next_scale: scale_at(k + 1),
            })
            .collect();
        Self { maps }
    }

    pub fn total_boxes(&self) -> usize {
        self.maps
            .iter()
            .map(|m| m.side * m.side * m.boxes_per_cell)
            .sum()
    }
}

/// A box in center form, as fractions of the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

/// A box in corner form, as fractions of the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl CornerBox {
    pub fn area(&self) -> f64 {
        (self.x2 - self.x1).max(0.0) * (self.y2 - self.y1).max(0.0)
    }
}

/// Intersection over union of two corner boxes.
pub fn iou(a: &CornerBox, b: &CornerBox) -> f64 {
    let ix = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let iy = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// The box variants of one cell given a map's scales: the base square, the
/// intermediate square `sqrt(s_k * s_{k+1})`, then aspect ratios 2 and 1/2
/// (and 3 and 1/3 on six-box maps). Sizes are clipped to [0, 1].
fn cell_boxes(map: &MapGeometry) -> Vec<(f64, f64)> {
    let s = map.scale;
    let extra = (map.scale * map.next_scale).sqrt();
    let mut sizes = vec![(s, s), (extra, extra)];
    let mut ratios = vec![2.0f64, 0.5];
    if map.boxes_per_cell == 6 {
        ratios.extend([3.0, 1.0 / 3.0]);
    } else {
        assert_eq!(map.boxes_per_cell, 4, "box count per cell must be 4 or 6");
    }
    for r in ratios {
        sizes.push((s * r.sqrt(), s / r.sqrt()));
    }
    sizes
        .into_iter()
        .map(|(w, h)| (w.min(1.0), h.min(1.0)))
        .collect()
}

/// All default boxes of the configuration, map-major, cells row-major,
/// box variants innermost. Centers and sizes are clipped to [0, 1].
pub fn generate_default_boxes(config: &DefaultBoxConfig) -> Vec<CenterBox> {
    let mut boxes = Vec::with_capacity(config.total_boxes());
    for map in &config.maps {
        let variants = cell_boxes(map);
        debug_assert_eq!(variants.len(), map.boxes_per_cell);
        for i in 0..map.side {
            for j in 0..map.side {
                let cy = (i as f64 + 0.5) / map.side as f64;
                let cx = (j as f64 + 0.5) / map.side as f64;
                for &(w, h) in &variants {
                    boxes.push(CenterBox { cx, cy, w, h });
                }
            }
        }
    }
    boxes
}

/// Applies predicted offsets to the default boxes:
/// `cx = d_cx + delta_cx * v_c * d_w`, `w = d_w * exp(delta_w * v_s)` (and
/// likewise for cy, h), then converts to corners clipped to [0, 1].
pub fn decode_boxes(deltas: &[[f64; 4]], defaults: &[CenterBox]) -> Result<Vec<CornerBox>> {
    if deltas.len() != defaults.len() {
        return shape_err(format!(
            "{} deltas for {} default boxes",
            deltas.len(),
            defaults.len()
        ));
    }
    Ok(deltas
        .iter()
        .zip(defaults)
        .map(|(d, def)| {
            let cx = def.cx + d[0] * CENTER_VARIANCE * def.w;
            let cy = def.cy + d[1] * CENTER_VARIANCE * def.h;
            let w = def.w * (d[2] * SIZE_VARIANCE).exp();
            let h = def.h * (d[3] * SIZE_VARIANCE).exp();
            CornerBox {
                x1: (cx - w / 2.0).clamp(0.0, 1.0),
                y1: (cy - h / 2.0).clamp(0.0, 1.0),
                x2: (cx + w / 2.0).clamp(0.0, 1.0),
                y2: (cy + h / 2.0).clamp(0.0, 1.0),
            }
        })
        .collect())
}

/// Inverse of [`decode_boxes`] for boxes with positive extents (used to
/// round-trip the regression targets).
pub fn encode_box(target: &CenterBox, default: &CenterBox) -> [f64; 4] {
    [
        (target.cx - default.cx) / (CENTER_VARIANCE * default.w),
        (target.cy - default.cy) / (CENTER_VARIANCE * default.h),
        (target.w / default.w).ln() / SIZE_VARIANCE,
        (target.h / default.h).ln() / SIZE_VARIANCE,
    ]
}

/// Greedy non-maximum suppression: keep boxes in descending score order
/// (ties break toward the lower index), dropping any box whose IoU with an
/// already-kept box exceeds the threshold. Returns at most `top_k` indices.
pub fn nms(
    boxes: &[CornerBox],
    scores: &[f64],
    iou_threshold: f64,
    top_k: usize,
) -> Result<Vec<usize>> {
    if boxes.len() != scores.len() {
        return shape_err(format!(
            "{} boxes but {} scores",
            boxes.len(),
            scores.len()
        ));
    }
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for &candidate in &order {
        if kept.len() >= top_k {
            break;
        }
        let suppressed = kept
            .iter()
            .any(|&k| iou(&boxes[k], &boxes[candidate]) > iou_threshold);
        if !suppressed {
            kept.push(candidate);
        }
    }
    Ok(kept)
}
