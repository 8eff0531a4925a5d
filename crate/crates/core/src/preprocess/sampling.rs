use crate::error::{Error, Result};

/// `index_i = floor((i + 0.5) * total / target)`, clamped to the last frame.
pub fn uniform_sample(total_frames: usize, target: usize) -> Result<Vec<usize>> {
    if target == 0 {
        return Err(Error::Preprocess("sample target must be >= 1".into()));
    }
    if total_frames == 0 {
        return Err(Error::Preprocess("clip has no frames".into()));
    }
    Ok((0..target)
        .map(|i| (((2 * i + 1) * total_frames) / (2 * target)).min(total_frames - 1))
        .collect())
}
