use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageReader};
use serde::{Deserialize, Serialize};

use super::boxes::BBox;
use crate::error::{Error, Result};

/// One RGB frame stored planar: `data[(c * height + y) * width + x]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Preprocess(format!("empty frame {width}x{height}")));
        }
        if data.len() != 3 * width * height {
            return Err(Error::Preprocess(format!(
                "frame {width}x{height} needs {} bytes, got {}",
                3 * width * height,
                data.len()
            )));
        }
        Ok(Frame { width, height, data })
    }

    /// Converts interleaved `RGBRGB...` rows to planar storage.
    pub fn from_interleaved(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != 3 * width * height {
            return Err(Error::Preprocess(format!(
                "interleaved frame {width}x{height} needs {} bytes, got {}",
                3 * width * height,
                rgb.len()
            )));
        }
        let plane = width * height;
        let mut data = vec![0u8; 3 * plane];
        for (i, px) in rgb.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + i] = px[c];
            }
        }
        Frame::new(width, height, data)
    }

    pub fn plane(&self, c: usize) -> &[u8] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }
}

/// A decoded clip; every frame has the same size.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipSource {
    pub frames: Vec<Frame>,
}

impl ClipSource {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::Preprocess("clip has no frames".into()));
        };
        let (w, h) = (first.width, first.height);
        if let Some(i) = frames.iter().position(|f| f.width != w || f.height != h) {
            return Err(Error::Preprocess(format!(
                "frame {i} is {}x{}, expected {w}x{h}",
                frames[i].width, frames[i].height
            )));
        }
        Ok(ClipSource { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn frame(&self, i: usize) -> &Frame {
        &self.frames[i]
    }
}

fn frame_number(p: &Path) -> Option<u64> {
    let stem = p.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    digits.chars().rev().collect::<String>().parse().ok()
}

/// Loads every `*.ppm` in `dir`, ordered by the last number in the file name.
pub fn load_ppm_dir(dir: impl AsRef<Path>) -> Result<ClipSource> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("ppm")))
        .collect();
    if paths.is_empty() {
        return Err(Error::Preprocess(format!("no .ppm frames in {}", dir.display())));
    }
    paths.sort_by(|a, b| frame_number(a).cmp(&frame_number(b)).then_with(|| a.cmp(b)));
    let frames = paths
        .iter()
        .map(|p| {
            let img = ImageReader::open(p)?
                .with_guessed_format()?
                .decode()
                .map_err(|e| Error::Preprocess(format!("{}: {e}", p.display())))?;
            match img {
                DynamicImage::ImageRgb8(rgb) => {
                    let (w, h) = rgb.dimensions();
                    Frame::from_interleaved(w as usize, h as usize, rgb.as_raw())
                }
                other => Err(Error::Shape {
                    op: "load_ppm_dir",
                    detail: format!("{}: expected 8-bit RGB, got {:?}", p.display(), other.color()),
                }),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    ClipSource::new(frames)
}

/// Sidecar describing a raw planar clip: `frames x 3 x height x width` bytes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSidecar {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    #[serde(default)]
    pub channels: Option<usize>,
}

pub fn load_raw_clip(bin: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<ClipSource> {
    let meta: RawSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
    let channels = meta.channels.unwrap_or(3);
    if channels != 3 {
        return Err(Error::Shape {
            op: "load_raw_clip",
            detail: format!("channel dimension: expected 3, got {channels}"),
        });
    }
    let bytes = std::fs::read(bin)?;
    let per = 3 * meta.height * meta.width;
    if meta.frames == 0 || per == 0 {
        return Err(Error::Preprocess(format!("empty raw clip {meta:?}")));
    }
    if bytes.len() != meta.frames * per {
        return Err(Error::Preprocess(format!(
            "raw clip holds {} bytes, sidecar implies {}",
            bytes.len(),
            meta.frames * per
        )));
    }
    let frames = bytes
        .chunks_exact(per)
        .map(|c| Frame::new(meta.width, meta.height, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    ClipSource::new(frames)
}

/// A directory is read as PPM frames; a file as raw planar RGB whose
/// sidecar is `<file>.json` or, failing that, the file with a `.json`
/// extension.
pub fn load_clip(path: impl AsRef<Path>) -> Result<ClipSource> {
    let path = path.as_ref();
    if path.is_dir() {
        return load_ppm_dir(path);
    }
    let mut appended = path.as_os_str().to_owned();
    appended.push(".json");
    let appended = PathBuf::from(appended);
    let sidecar = if appended.exists() {
        appended
    } else {
        path.with_extension("json")
    };
    if !sidecar.exists() {
        return Err(Error::Preprocess(format!("no sidecar found for {}", path.display())));
    }
    load_raw_clip(path, sidecar)
}

/// JSON array of per-frame `[x0, y0, x1, y1]`.
pub fn load_boxes(path: impl AsRef<Path>) -> Result<Vec<BBox>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
