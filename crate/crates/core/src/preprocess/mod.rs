//! Clip preparation: uniform frame sampling, temporally smoothed person
//! boxes, padded crop and bilinear resize into a normalized `(1, 3, T, H, W)`
//! tensor.

mod boxes;
mod crop;
mod io;
mod sampling;

pub use boxes::{box_from_keypoints, smooth_boxes, BBox, BoxTrack};
pub use crop::{crop_region, crop_resize, CropOptions, CropPolicy, PixelRegion, NORM_MEAN, NORM_STD};
pub use io::{load_boxes, load_clip, load_ppm_dir, load_raw_clip, ClipSource, Frame, RawSidecar};
pub use sampling::uniform_sample;

use crate::error::{Error, Result};
use crate::tensor::Tensor5;

/// Settings for [`prepare_clip`].
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub frames: usize,
    pub smooth_window: usize,
    pub crop: CropOptions,
}

impl PipelineConfig {
    /// 16 frames, smoothing window 5, padding 0.2, `out_h x out_w` output.
    pub fn new(frames: usize, out_h: usize, out_w: usize) -> Self {
        PipelineConfig {
            frames,
            smooth_window: 5,
            crop: CropOptions::new(out_h, out_w),
        }
    }
}

/// Sample, smooth, crop and resize. Without boxes the whole frame is used.
pub fn prepare_clip(clip: &ClipSource, boxes: Option<&[BBox]>, cfg: &PipelineConfig) -> Result<Tensor5> {
    let indices = uniform_sample(clip.len(), cfg.frames)?;
    let (h, w) = (clip.height(), clip.width());
    let track = match boxes {
        Some(b) => {
            if b.len() != clip.len() {
                return Err(Error::Preprocess(format!(
                    "{} boxes for {} frames",
                    b.len(),
                    clip.len()
                )));
            }
            smooth_boxes(&BoxTrack::new(b.to_vec(), w, h), cfg.smooth_window)?
        }
        None => BoxTrack::new(vec![BBox::full(w, h); clip.len()], w, h),
    };
    let frames: Vec<&Frame> = indices.iter().map(|&i| &clip.frames[i]).collect();
    let picked: Vec<BBox> = indices.iter().map(|&i| track.boxes[i]).collect();
    crop_resize(&frames, &picked, &cfg.crop)
}
