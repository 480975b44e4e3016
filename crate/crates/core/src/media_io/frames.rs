//! PNG frame sequences.

use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Rgb};

use crate::error::{Error, Result};
use crate::frame::{Frame, VideoVolume};

/// Matches a file name against a pattern with at most one `*` wildcard.
fn matches_pattern(name: &str, pattern: &str) -> bool {
    match pattern.split_once('*') {
        None => name == pattern,
        Some((prefix, suffix)) => {
            name.len() >= prefix.len() + suffix.len()
                && name.starts_with(prefix)
                && name.ends_with(suffix)
        }
    }
}

/// Numeric frame index: the last run of ASCII digits in the file stem.
fn frame_number(name: &str) -> Option<u64> {
    let stem = name.rsplit_once('.').map_or(name, |(s, _)| s);
    let bytes = stem.as_bytes();
    let end = bytes.iter().rposition(u8::is_ascii_digit)? + 1;
    let start = bytes[..end]
        .iter()
        .rposition(|b| !b.is_ascii_digit())
        .map_or(0, |i| i + 1);
    stem[start..end].parse().ok()
}

/// Lists the files in `dir` matching `pattern`, ordered by numeric index.
pub fn list_frames(dir: &Path, pattern: &str) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if !matches_pattern(&name, pattern) {
            continue;
        }
        let index = frame_number(&name).ok_or_else(|| Error::Malformed {
            what: "frame sequence",
            message: format!("no numeric index in {name:?}"),
        })?;
        found.push((index, name, entry.path()));
    }
    found.sort();
    Ok(found.into_iter().map(|(_, _, p)| p).collect())
}

pub fn load_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => img
            .into_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        DynamicImage::ImageRgb32F(_) | DynamicImage::ImageRgba32F(_) => img
            .into_rgb32f()
            .into_raw()
            .into_iter()
            .map(|v| (v as f64).clamp(0.0, 1.0))
            .collect(),
        _ => img
            .into_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
    };
    Frame::new(h, w, data)
}

pub fn load_frame_sequence(dir: impl AsRef<Path>, pattern: &str) -> Result<VideoVolume> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "frame directory not found"),
        ));
    }
    let paths = list_frames(dir, pattern)?;
    if paths.len() < 2 {
        return Err(Error::TooFewFrames {
            required: 2,
            found: paths.len(),
        });
    }
    let frames = paths
        .iter()
        .map(|p| load_frame(p))
        .collect::<Result<Vec<_>>>()?;
    VideoVolume::new(frames)
}

/// 16-bit value for an exported color (clamped).
#[inline]
pub fn to_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// The value a frame holds after a 16-bit PNG save/load round trip.
pub fn quantize_16bit(frame: &Frame) -> Frame {
    let data = frame
        .data()
        .iter()
        .map(|&v| to_u16(v) as f64 / 65535.0)
        .collect();
    Frame::new(frame.height(), frame.width(), data).expect("same shape")
}

pub fn save_frame_png16(path: &Path, frame: &Frame) -> Result<()> {
    let raw: Vec<u16> = frame.data().iter().map(|&v| to_u16(v)).collect();
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_raw(frame.width() as u32, frame.height() as u32, raw)
            .expect("buffer sized from frame");
    buf.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn save_frame_png8(path: &Path, frame: &Frame) -> Result<()> {
    let raw: Vec<u8> = frame
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_raw(frame.width() as u32, frame.height() as u32, raw)
            .expect("buffer sized from frame");
    buf.save(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes `dir/000000.png`, `dir/000001.png`, ... as 16-bit RGB.
pub fn save_frame_sequence(dir: &Path, video: &VideoVolume) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (t, frame) in video.frames().iter().enumerate() {
        save_frame_png16(&dir.join(format!("{t:06}.png")), frame)?;
    }
    Ok(())
}
