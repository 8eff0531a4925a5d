use serde::{Deserialize, Serialize};

use super::boxes::BBox;
use super::io::Frame;
use crate::error::{Error, Result};
use crate::tensor::{Shape5, Tensor5};

pub const NORM_MEAN: [f32; 3] = [0.45, 0.45, 0.45];
pub const NORM_STD: [f32; 3] = [0.225, 0.225, 0.225];

/// How a non-square crop reaches the output size.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CropPolicy {
    /// Stretch the padded box directly to the output size.
    #[default]
    Warp,
    /// Grow the shorter side of the padded box to match the longer one first.
    Square,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CropOptions {
    /// Total growth of each box side: a side of length `s` becomes `s * (1 + pad_ratio)`.
    pub pad_ratio: f32,
    pub out_h: usize,
    pub out_w: usize,
    pub policy: CropPolicy,
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl CropOptions {
    pub fn new(out_h: usize, out_w: usize) -> Self {
        CropOptions {
            pad_ratio: 0.2,
            out_h,
            out_w,
            policy: CropPolicy::Warp,
            mean: NORM_MEAN,
            std: NORM_STD,
        }
    }
}

/// Integer pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelRegion {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

/// Expands `b` about its center, clamps it to the frame and snaps it
/// outward to whole pixels.
pub fn crop_region(
    b: &BBox,
    pad_ratio: f32,
    policy: CropPolicy,
    width: usize,
    height: usize,
    frame: usize,
) -> Result<PixelRegion> {
    if !(pad_ratio.is_finite() && pad_ratio >= 0.0) {
        return Err(Error::Preprocess(format!("pad_ratio must be >= 0, got {pad_ratio}")));
    }
    if !b.is_valid() {
        return Err(Error::Preprocess(format!("frame {frame}: invalid box {:?}", <[f32; 4]>::from(*b))));
    }
    let (cx, cy) = ((b.x0 + b.x1) / 2.0, (b.y0 + b.y1) / 2.0);
    let (mut bw, mut bh) = (b.width() * (1.0 + pad_ratio), b.height() * (1.0 + pad_ratio));
    if policy == CropPolicy::Square {
        bw = bw.max(bh);
        bh = bw;
    }
    let e = BBox::new(cx - bw / 2.0, cy - bh / 2.0, cx + bw / 2.0, cy + bh / 2.0).clamp_to(width, height);
    let r = PixelRegion {
        x0: e.x0.floor() as usize,
        y0: e.y0.floor() as usize,
        x1: (e.x1.ceil() as usize).min(width),
        y1: (e.y1.ceil() as usize).min(height),
    };
    if r.x1 <= r.x0 || r.y1 <= r.y0 {
        return Err(Error::Preprocess(format!(
            "frame {frame}: box {:?} is degenerate after clamping to {width}x{height}",
            <[f32; 4]>::from(*b)
        )));
    }
    Ok(r)
}

/// Half-pixel-center source coordinate and interpolation weight along one axis.
fn axis_taps(out: usize, start: usize, len: usize) -> Vec<(usize, usize, f32)> {
    let scale = len as f32 / out as f32;
    (0..out)
        .map(|o| {
            let s = ((o as f32 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f32);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            (start + lo, start + hi, s - lo as f32)
        })
        .collect()
}

/// Crops each frame to its padded box, resizes bilinearly, scales to
/// `[0, 1]` and normalizes. Output is `(1, 3, frames, out_h, out_w)`.
pub fn crop_resize(frames: &[&Frame], boxes: &[BBox], opts: &CropOptions) -> Result<Tensor5> {
    if frames.is_empty() {
        return Err(Error::Preprocess("no frames to crop".into()));
    }
    if frames.len() != boxes.len() {
        return Err(Error::Preprocess(format!("{} frames but {} boxes", frames.len(), boxes.len())));
    }
    if opts.out_h == 0 || opts.out_w == 0 {
        return Err(Error::Preprocess("output size must be positive".into()));
    }
    let t_len = frames.len();
    let (oh, ow) = (opts.out_h, opts.out_w);
    let mut out = Tensor5::zeros(Shape5::new(1, 3, t_len, oh, ow));
    for (t, (f, b)) in frames.iter().zip(boxes).enumerate() {
        let r = crop_region(b, opts.pad_ratio, opts.policy, f.width, f.height, t)?;
        let ys = axis_taps(oh, r.y0, r.y1 - r.y0);
        let xs = axis_taps(ow, r.x0, r.x1 - r.x0);
        for c in 0..3 {
            let src = f.plane(c);
            let (mean, std) = (opts.mean[c], opts.std[c]);
            let base = (c * t_len + t) * oh * ow;
            let dst = &mut out.data_mut()[base..base + oh * ow];
            for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                let (r0, r1) = (&src[y0 * f.width..], &src[y1 * f.width..]);
                for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let top = (1.0 - fx) * r0[x0] as f32 + fx * r0[x1] as f32;
                    let bot = (1.0 - fx) * r1[x0] as f32 + fx * r1[x1] as f32;
                    let v = (1.0 - fy) * top + fy * bot;
                    dst[oy * ow + ox] = (v / 255.0 - mean) / std;
                }
            }
        }
    }
    Ok(out)
}
