#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uvtc_core::frame::{Frame, VideoVolume};
use uvtc_core::media_io::{save_flow_set, save_frame_sequence, FlowDirection, FlowField, FlowSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_frame(h: usize, w: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Frame {
    Frame::from_fn(h, w, |_, _, _| rng.gen_range(lo..hi))
}

pub fn random_video(t: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> VideoVolume {
    VideoVolume::new((0..t).map(|_| random_frame(h, w, 0.0, 1.0, rng)).collect()).unwrap()
}

/// Smooth colored pattern with fine detail, values in [0.1, 0.75] so a
/// gain up to 1.3 never saturates.
pub fn scene(h: usize, w: usize, seed: u64) -> Frame {
    let mut r = rng(seed);
    let detail: Vec<f64> = (0..h * w * 3).map(|_| r.gen_range(-0.08..0.08)).collect();
    Frame::from_fn(h, w, |x, y, c| {
        let (fx, fy) = (x as f64, y as f64);
        let base = 0.5
            + 0.2 * (0.31 * fx + 0.9 * c as f64).sin() * (0.23 * fy + 0.4).cos()
            + 0.1 * (0.11 * (fx + fy) + c as f64).sin();
        let v = (base + detail[(y * w + x) * 3 + c]).clamp(0.0, 1.0);
        0.1 + 0.65 * v
    })
}

pub fn static_video(frame: &Frame, t: usize) -> VideoVolume {
    VideoVolume::new(vec![frame.clone(); t]).unwrap()
}

/// Texture translating right by exactly one pixel per frame: frame t at x
/// shows texture column `x - t + (T - 1)`.
pub fn translating_video(t: usize, h: usize, w: usize, seed: u64) -> VideoVolume {
    let tex = random_frame(h, w + t, 0.0, 1.0, &mut rng(seed));
    let frames = (0..t)
        .map(|k| Frame::from_fn(h, w, |x, y, c| tex.get(x + t - 1 - k, y, c)))
        .collect();
    VideoVolume::new(frames).unwrap()
}

pub fn random_flow(h: usize, w: usize, mag: f32, dir: FlowDirection, frame: usize, rng: &mut ChaCha8Rng) -> FlowField {
    let data = (0..h * w * 2).map(|_| rng.gen_range(-mag..mag)).collect();
    FlowField::new(h, w, data, dir, frame).unwrap()
}

/// Writes a pipeline fixture and returns the config text pointing at it.
pub fn write_pipeline_fixture(
    dir: &Path,
    source: &VideoVolume,
    relit: &VideoVolume,
    flows: &FlowSet,
) -> String {
    save_frame_sequence(&dir.join("source"), source).unwrap();
    save_frame_sequence(&dir.join("relit"), relit).unwrap();
    save_flow_set(&dir.join("flow_fwd"), &dir.join("flow_bwd"), flows).unwrap();
    "source_dir = \"source\"\n\
     relit_dir = \"relit\"\n\
     flow_fwd_dir = \"flow_fwd\"\n\
     flow_bwd_dir = \"flow_bwd\"\n\
     output_dir = \"out\"\n"
        .to_string()
}

/// Static scene with per-frame gains, the usual flicker fixture.
pub fn flicker_fixture(t: usize, h: usize, w: usize, seed: u64) -> (VideoVolume, VideoVolume, Vec<f64>) {
    let base = scene(h, w, seed);
    let mut r = rng(seed ^ 0x9e37);
    let gains: Vec<f64> = (0..t).map(|_| r.gen_range(0.7..1.3)).collect();
    let relit = VideoVolume::new(
        gains
            .iter()
            .map(|g| Frame::from_fn(h, w, |x, y, c| g * base.get(x, y, c)))
            .collect(),
    )
    .unwrap();
    (static_video(&base, t), relit, gains)
}

/// Largest change of mean brightness between consecutive frames.
pub fn max_adjacent_brightness_change(v: &VideoVolume) -> f64 {
    let means: Vec<f64> = v.frames().iter().map(Frame::mean).collect();
    means.windows(2).map(|p| (p[1] - p[0]).abs()).fold(0.0, f64::max)
}

pub fn mean_brightness_range(v: &VideoVolume) -> f64 {
    let means: Vec<f64> = v.frames().iter().map(Frame::mean).collect();
    let max = means.iter().cloned().fold(f64::MIN, f64::max);
    let min = means.iter().cloned().fold(f64::MAX, f64::min);
    max - min
}

/// Every file under `root` as (relative path, bytes), sorted.
pub fn read_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
