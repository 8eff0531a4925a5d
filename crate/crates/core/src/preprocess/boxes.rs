use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates, `x1`/`y1` exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f32; 4]", into = "[f32; 4]")]
pub struct BBox {
    pub x0: f32,
    pub y0: f32,
    pub x1: f32,
    pub y1: f32,
}

impl From<[f32; 4]> for BBox {
    fn from([x0, y0, x1, y1]: [f32; 4]) -> Self {
        BBox { x0, y0, x1, y1 }
    }
}

impl From<BBox> for [f32; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

impl BBox {
    pub fn new(x0: f32, y0: f32, x1: f32, y1: f32) -> Self {
        BBox { x0, y0, x1, y1 }
    }

    pub fn full(width: usize, height: usize) -> Self {
        BBox::new(0.0, 0.0, width as f32, height as f32)
    }

    pub fn width(&self) -> f32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f32 {
        self.y1 - self.y0
    }

    pub fn clamp_to(&self, width: usize, height: usize) -> Self {
        let (w, h) = (width as f32, height as f32);
        BBox::new(
            self.x0.clamp(0.0, w),
            self.y0.clamp(0.0, h),
            self.x1.clamp(0.0, w),
            self.y1.clamp(0.0, h),
        )
    }

    pub fn is_valid(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite()) && self.x0 < self.x1 && self.y0 < self.y1
    }

    pub fn within(&self, width: usize, height: usize) -> bool {
        self.x0 >= 0.0 && self.y0 >= 0.0 && self.x1 <= width as f32 && self.y1 <= height as f32
    }
}

/// Per-frame boxes of one person plus the frame bounds they live in.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxTrack {
    pub boxes: Vec<BBox>,
    pub width: usize,
    pub height: usize,
}

impl BoxTrack {
    pub fn new(boxes: Vec<BBox>, width: usize, height: usize) -> Self {
        BoxTrack { boxes, width, height }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

/// Centered moving average of each coordinate with edge replication, then
/// clamped to the frame.
pub fn smooth_boxes(track: &BoxTrack, window: usize) -> Result<BoxTrack> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::Preprocess(format!("smoothing window must be odd, got {window}")));
    }
    if track.is_empty() {
        return Err(Error::Preprocess("empty box track".into()));
    }
    let n = track.len() as isize;
    let r = (window / 2) as isize;
    let coords = |b: &BBox| [b.x0 as f64, b.y0 as f64, b.x1 as f64, b.y1 as f64];
    let boxes = (0..n)
        .map(|i| {
            let mut acc = [0f64; 4];
            for d in -r..=r {
                let j = (i + d).clamp(0, n - 1) as usize;
                for (a, v) in acc.iter_mut().zip(coords(&track.boxes[j])) {
                    *a += v;
                }
            }
            let m = acc.map(|a| (a / window as f64) as f32);
            BBox::from(m).clamp_to(track.width, track.height)
        })
        .collect();
    Ok(BoxTrack::new(boxes, track.width, track.height))
}

/// Tight box around the keypoints with confidence at least `min_conf`.
/// Keypoints are `(x, y, confidence)`; `None` when none qualify.
pub fn box_from_keypoints(keypoints: &[(f32, f32, f32)], min_conf: f32) -> Option<BBox> {
    let vis = keypoints.iter().filter(|k| k.2 >= min_conf && k.0.is_finite() && k.1.is_finite());
    let mut b: Option<BBox> = None;
    for &(x, y, _) in vis {
        b = Some(match b {
            None => BBox::new(x, y, x, y),
            Some(b) => BBox::new(b.x0.min(x), b.y0.min(y), b.x1.max(x), b.y1.max(y)),
        });
    }
    b
}
