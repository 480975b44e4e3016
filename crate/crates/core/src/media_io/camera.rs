//! Per-frame camera parameters.
//!
//! Text format: one record per non-empty, non-`#` line, 25 whitespace
//! separated numbers: the 3×3 intrinsics row-major, then the 4×4
//! camera-to-world extrinsics row-major.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CameraParams {
    pub intrinsics: [[f64; 3]; 3],
    pub extrinsics: [[f64; 4]; 4],
}

impl CameraParams {
    pub fn new(intrinsics: [[f64; 3]; 3], extrinsics: [[f64; 4]; 4]) -> Result<Self> {
        let k = &intrinsics;
        if k[1][0] != 0.0 || k[2][0] != 0.0 || k[2][1] != 0.0 {
            return Err(Error::invalid("intrinsics must be upper-triangular"));
        }
        if !(k[0][0] > 0.0 && k[1][1] > 0.0) {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        if extrinsics[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::invalid("extrinsics last row must be [0, 0, 0, 1]"));
        }
        let all = k.iter().flatten().chain(extrinsics.iter().flatten());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("camera parameters must be finite"));
        }
        Ok(CameraParams {
            intrinsics,
            extrinsics,
        })
    }

    /// Pinhole camera with identity pose.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let mut ext = [[0.0; 4]; 4];
        for (i, row) in ext.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self::new([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]], ext)
    }

    /// Back-projects pixel `(x, y)` at depth `d` into world coordinates.
    pub fn unproject(&self, x: f64, y: f64, d: f64) -> [f64; 3] {
        let k = &self.intrinsics;
        // K is upper triangular: solve K p = [x, y, 1] by back substitution
        let pz = 1.0 / k[2][2];
        let py = (y - k[1][2] * pz) / k[1][1];
        let px = (x - k[0][1] * py - k[0][2] * pz) / k[0][0];
        let cam = [px * d, py * d, pz * d];
        let e = &self.extrinsics;
        let mut world = [0.0; 3];
        for (i, w) in world.iter_mut().enumerate() {
            *w = e[i][0] * cam[0] + e[i][1] * cam[1] + e[i][2] * cam[2] + e[i][3];
        }
        world
    }
}

pub fn parse_cameras(text: &str) -> Result<Vec<CameraParams>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Malformed {
                what: "camera file",
                message: format!("line {}: {e}", lineno + 1),
            })?;
        if nums.len() != 25 {
            return Err(Error::Malformed {
                what: "camera file",
                message: format!("line {}: expected 25 numbers, found {}", lineno + 1, nums.len()),
            });
        }
        let mut k = [[0.0; 3]; 3];
        let mut e = [[0.0; 4]; 4];
        for i in 0..9 {
            k[i / 3][i % 3] = nums[i];
        }
        for i in 0..16 {
            e[i / 4][i % 4] = nums[9 + i];
        }
        out.push(CameraParams::new(k, e).map_err(|err| Error::Malformed {
            what: "camera file",
            message: format!("line {}: {err}", lineno + 1),
        })?);
    }
    Ok(out)
}

pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<CameraParams>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_cameras(&text)
}

pub fn format_cameras(cams: &[CameraParams]) -> String {
    let mut s = String::new();
    for cam in cams {
        let nums: Vec<String> = cam
            .intrinsics
            .iter()
            .flatten()
            .chain(cam.extrinsics.iter().flatten())
            .map(|v| v.to_string())
            .collect();
        s.push_str(&nums.join(" "));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let cam = CameraParams::new(
            [[500.0, 0.5, 320.0], [0.0, 510.0, 240.0], [0.0, 0.0, 1.0]],
            [
                [0.0, -1.0, 0.0, 1.5],
                [1.0, 0.0, 0.0, -2.0],
                [0.0, 0.0, 1.0, 0.25],
                [0.0, 0.0, 0.0, 1.0],
            ],
        )
        .unwrap();
        let text = format!("# header\n\n{}", format_cameras(&[cam.clone(), cam.clone()]));
        assert_eq!(parse_cameras(&text).unwrap(), vec![cam.clone(), cam]);
    }

    #[test]
    fn rejects_bad_records() {
        assert!(parse_cameras("1 2 3").is_err());
        let bad_row = "1 0 0 0 1 0 0 0 1  1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 2";
        assert!(parse_cameras(bad_row).is_err());
        let neg_focal = "-1 0 0 0 1 0 0 0 1  1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1";
        assert!(parse_cameras(neg_focal).is_err());
    }

    #[test]
    fn unproject_identity() {
        let cam = CameraParams::pinhole(2.0, 4.0, 1.0, 1.0).unwrap();
        let p = cam.unproject(3.0, 5.0, 2.0);
        assert_eq!(p, [2.0, 2.0, 2.0]);
    }
}
