//! Temporal consistency and reconstruction metrics.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{check_dims, Error, Result};
use crate::frame::{BoolMap, VideoVolume};
use crate::media_io::FlowSet;
use crate::objectives::{ssim_map, weighted_l1};
use crate::warp::warp_backward;

/// PSNR reported for identical videos.
pub const PSNR_IDENTICAL: f64 = 99.0;

fn check_pairs(video: &VideoVolume, flows: &FlowSet, masks: &[BoolMap]) -> Result<()> {
    video.require_optimizable()?;
    flows.check_video(video.len(), video.dims())?;
    if masks.len() != video.len() - 1 {
        return Err(Error::invalid(format!(
            "need {} masks, got {}",
            video.len() - 1,
            masks.len()
        )));
    }
    for m in masks {
        check_dims(video.dims(), m.dims())?;
    }
    Ok(())
}

/// Mean over adjacent pairs of the SSIM between frame t and frame t+1
/// warped back to t, restricted to masked-in pixels with a valid warp
/// sample, as a percentage clamped to `[0, 100]`.
pub fn warp_ssim_metric(video: &VideoVolume, flows: &FlowSet, masks: &[BoolMap]) -> Result<f64> {
    check_pairs(video, flows, masks)?;
    let per_pair = (0..video.len() - 1)
        .into_par_iter()
        .map(|t| {
            let (warped, valid) = warp_backward(video.frame(t + 1), flows.forward(t))?;
            let map = ssim_map(video.frame(t), &warped)?;
            let mut sum = 0.0;
            let mut n = 0usize;
            for (i, &s) in map.data().iter().enumerate() {
                if valid.data()[i] && masks[t].data()[i] {
                    sum += s;
                    n += 1;
                }
            }
            Ok((n > 0).then(|| sum / n as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let scored: Vec<f64> = per_pair.into_iter().flatten().collect();
    if scored.is_empty() {
        return Ok(0.0);
    }
    let mean = scored.iter().sum::<f64>() / scored.len() as f64;
    Ok((100.0 * mean).clamp(0.0, 100.0))
}

/// Mean over adjacent pairs of the masked L1 between frame t and the
/// warped frame t+1.
pub fn warp_l1_metric(video: &VideoVolume, flows: &FlowSet, masks: &[BoolMap]) -> Result<f64> {
    check_pairs(video, flows, masks)?;
    let per_pair = (0..video.len() - 1)
        .into_par_iter()
        .map(|t| {
            let (warped, valid) = warp_backward(video.frame(t + 1), flows.forward(t))?;
            let weights: Vec<f64> = valid
                .data()
                .iter()
                .zip(masks[t].data())
                .map(|(&v, &m)| if v && m { 1.0 } else { 0.0 })
                .collect();
            Ok(weighted_l1(video.frame(t), &warped, Some(&weights))?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_pair.iter().sum::<f64>() / per_pair.len() as f64)
}

fn check_same(a: &VideoVolume, b: &VideoVolume) -> Result<()> {
    check_dims(a.dims(), b.dims())?;
    if a.len() != b.len() {
        return Err(Error::invalid("videos differ in length"));
    }
    Ok(())
}

/// PSNR over the whole video for peak value 1; identical videos give
/// [`PSNR_IDENTICAL`].
pub fn psnr(a: &VideoVolume, b: &VideoVolume) -> Result<f64> {
    check_same(a, b)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (fa, fb) in a.frames().iter().zip(b.frames()) {
        for (x, y) in fa.data().iter().zip(fb.data()) {
            sum += (x - y) * (x - y);
        }
        n += fa.data().len();
    }
    let mse = sum / n as f64;
    if mse == 0.0 {
        return Ok(PSNR_IDENTICAL);
    }
    Ok((10.0 * (1.0 / mse).log10()).clamp(0.0, PSNR_IDENTICAL))
}

/// Mean SSIM over frames.
pub fn video_ssim(a: &VideoVolume, b: &VideoVolume) -> Result<f64> {
    check_same(a, b)?;
    let per_frame = a
        .frames()
        .par_iter()
        .zip(b.frames())
        .map(|(fa, fb)| {
            let m = ssim_map(fa, fb)?;
            Ok(m.data().iter().sum::<f64>() / m.data().len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_frame.iter().sum::<f64>() / per_frame.len() as f64)
}

/// Ordered `(name, value)` metrics, written as a two-column CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    entries: Vec<(String, f64)>,
}

impl MetricsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.entries.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
        w.write_record(["metric", "value"]).map_err(err)?;
        for (name, value) in &self.entries {
            w.write_record([name.as_str(), &value.to_string()]).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

impl std::fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (name, value) in &self.entries {
            writeln!(f, "{name:<28} {value:.6}")?;
        }
        Ok(())
    }
}

/// Loss curves as `stage,epoch,loss` rows.
pub fn write_loss_curve(path: &Path, stage: &str, curve: &[f64]) -> Result<()> {
    let err = |e: csv::Error| Error::invalid(format!("csv: {e}"));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["stage", "epoch", "loss"]).map_err(err)?;
    for (epoch, loss) in curve.iter().enumerate() {
        w.write_record([stage, &epoch.to_string(), &loss.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Frame;

    fn textured(h: usize, w: usize, k: usize) -> Frame {
        Frame::from_fn(h, w, |x, y, c| (((x + k) * 7 + y * 5 + c * 3) % 13) as f64 / 12.0)
    }

    #[test]
    fn static_video_scores_full() {
        let f = textured(16, 16, 0);
        let v = VideoVolume::new(vec![f.clone(), f.clone(), f]).unwrap();
        let flows = FlowSet::zeros(3, 16, 16);
        let masks = vec![BoolMap::filled(16, 16, true); 2];
        let s = warp_ssim_metric(&v, &flows, &masks).unwrap();
        assert!((s - 100.0).abs() < 1e-9);
        assert_eq!(warp_l1_metric(&v, &flows, &masks).unwrap(), 0.0);
    }

    #[test]
    fn psnr_sentinel_and_value() {
        let a = VideoVolume::new(vec![Frame::filled(2, 2, 0.5); 2]).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_IDENTICAL);
        let b = VideoVolume::new(vec![Frame::filled(2, 2, 0.6); 2]).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn report_csv() {
        let mut r = MetricsReport::new();
        r.push("warp_ssim", 91.5);
        r.push("n", 3.0);
        assert_eq!(r.to_csv().unwrap(), "metric,value\nwarp_ssim,91.5\nn,3\n");
        assert_eq!(r.get("n"), Some(3.0));
    }
}
