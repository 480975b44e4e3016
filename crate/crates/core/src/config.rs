//! Flat TOML pipeline configuration with `key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exposure::StageOneConfig;
use crate::mask::{FlowErrorDirection, MaskConfig};
use crate::noise::GammaSchedule;
use crate::objectives::AdamConfig;
use crate::uvt::{KeyConfig, StageTwoConfig};

/// Every key is optional; missing keys take the defaults below. Relative
/// paths are resolved against the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub source_dir: Option<PathBuf>,
    pub relit_dir: Option<PathBuf>,
    pub flow_fwd_dir: Option<PathBuf>,
    pub flow_bwd_dir: Option<PathBuf>,
    pub depth_dir: Option<PathBuf>,
    pub cameras: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub frame_pattern: String,
    /// Stage II input; defaults to `output_dir/aligned`.
    pub aligned_dir: Option<PathBuf>,
    /// Video scored by `metrics`; defaults to `output_dir/final`.
    pub metrics_video_dir: Option<PathBuf>,

    pub seed: u64,

    pub mask_beta: f64,
    pub xi_flow: Option<f64>,
    pub xi_rgb: Option<f64>,
    pub xi_std_factor: f64,
    pub xi_flow_floor: f64,
    pub xi_rgb_floor: f64,
    pub flow_error_direction: FlowErrorDirection,

    pub lambda_e: f64,
    pub lambda_dssim: f64,
    pub stage1_epochs: usize,
    pub stage1_batch_size: usize,
    pub stage1_lr_start: f64,
    pub stage1_lr_end: f64,

    pub lambda_u: f64,
    pub lambda_tv: f64,
    pub stage2_epochs: usize,
    pub stage2_batch_size: usize,
    pub stage2_lr: f64,
    pub key_use_flow: bool,
    pub key_use_rgb: bool,
    pub voxel_size: Option<f64>,

    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,

    pub gamma_start: f64,
    pub gamma_end: f64,
    pub gamma_steps: usize,
    pub noise_step: usize,
    pub swap_weights: bool,
    pub noise_xy: Option<PathBuf>,
    pub noise_yt: Option<PathBuf>,
    pub noise_out: Option<PathBuf>,

    pub compute_metrics: bool,
    pub write_loss_curves: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mask = MaskConfig::default();
        let s1 = StageOneConfig::default();
        let s2 = StageTwoConfig::default();
        let adam = AdamConfig::default();
        let gamma = GammaSchedule::default();
        PipelineConfig {
            source_dir: None,
            relit_dir: None,
            flow_fwd_dir: None,
            flow_bwd_dir: None,
            depth_dir: None,
            cameras: None,
            output_dir: PathBuf::from("out"),
            frame_pattern: "*.png".into(),
            aligned_dir: None,
            metrics_video_dir: None,
            seed: 0,
            mask_beta: mask.beta,
            xi_flow: mask.xi_flow,
            xi_rgb: mask.xi_rgb,
            xi_std_factor: mask.xi_std_factor,
            xi_flow_floor: mask.xi_flow_floor,
            xi_rgb_floor: mask.xi_rgb_floor,
            flow_error_direction: mask.flow_error_direction,
            lambda_e: s1.lambda_e,
            lambda_dssim: s1.lambda_dssim,
            stage1_epochs: s1.epochs,
            stage1_batch_size: s1.batch_size,
            stage1_lr_start: s1.lr_start,
            stage1_lr_end: s1.lr_end,
            lambda_u: s2.lambda_u,
            lambda_tv: s2.lambda_tv,
            stage2_epochs: s2.epochs,
            stage2_batch_size: s2.batch_size,
            stage2_lr: s2.lr,
            key_use_flow: s2.keys.use_flow,
            key_use_rgb: s2.keys.use_rgb,
            voxel_size: s2.keys.voxel_size,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            gamma_start: gamma.gamma_start,
            gamma_end: gamma.gamma_end,
            gamma_steps: gamma.steps,
            noise_step: 0,
            swap_weights: false,
            noise_xy: None,
            noise_yt: None,
            noise_out: None,
            compute_metrics: true,
            write_loss_curves: true,
        }
    }
}

/// Parses the right side of an override as a TOML value, falling back to
/// a bare string so `--set source_dir=frames` works without quotes.
fn override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

impl PipelineConfig {
    /// Parses TOML text, applying `key=value` overrides before
    /// deserialization. Paths are left as written.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            table.insert(key.trim().to_string(), override_value(value.trim()));
        }
        let cfg: PipelineConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file and resolves relative paths against its
    /// directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text, overrides)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.source_dir,
            &mut self.relit_dir,
            &mut self.flow_fwd_dir,
            &mut self.flow_bwd_dir,
            &mut self.depth_dir,
            &mut self.cameras,
            &mut self.aligned_dir,
            &mut self.metrics_video_dir,
            &mut self.noise_xy,
            &mut self.noise_yt,
            &mut self.noise_out,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    /// Checks value ranges. Path existence is checked per command by
    /// [`PipelineConfig::require_dir`] and friends.
    pub fn validate(&self) -> Result<()> {
        if self.frame_pattern.matches('*').count() > 1 {
            return Err(Error::Config("frame_pattern allows at most one '*'".into()));
        }
        if self.depth_dir.is_some() != self.cameras.is_some() {
            return Err(Error::Config("depth_dir and cameras must be given together".into()));
        }
        if self.noise_step >= self.gamma_steps.max(1) {
            return Err(Error::Config(format!(
                "noise_step {} outside the {}-step schedule",
                self.noise_step, self.gamma_steps
            )));
        }
        self.stage1().validate()?;
        self.stage2().validate()?;
        self.gamma().validate()
    }

    pub fn mask(&self) -> MaskConfig {
        MaskConfig {
            beta: self.mask_beta,
            xi_flow: self.xi_flow,
            xi_rgb: self.xi_rgb,
            xi_std_factor: self.xi_std_factor,
            xi_flow_floor: self.xi_flow_floor,
            xi_rgb_floor: self.xi_rgb_floor,
            flow_error_direction: self.flow_error_direction,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn stage1(&self) -> StageOneConfig {
        StageOneConfig {
            lambda_e: self.lambda_e,
            lambda_dssim: self.lambda_dssim,
            epochs: self.stage1_epochs,
            batch_size: self.stage1_batch_size,
            lr_start: self.stage1_lr_start,
            lr_end: self.stage1_lr_end,
            mask: self.mask(),
            adam: self.adam(),
            seed: self.seed,
        }
    }

    pub fn stage2(&self) -> StageTwoConfig {
        StageTwoConfig {
            lambda_u: self.lambda_u,
            lambda_tv: self.lambda_tv,
            epochs: self.stage2_epochs,
            batch_size: self.stage2_batch_size,
            lr: self.stage2_lr,
            keys: KeyConfig {
                use_flow: self.key_use_flow,
                use_rgb: self.key_use_rgb,
                voxel_size: self.voxel_size,
            },
            adam: self.adam(),
            seed: self.seed,
        }
    }

    pub fn gamma(&self) -> GammaSchedule {
        GammaSchedule {
            gamma_start: self.gamma_start,
            gamma_end: self.gamma_end,
            steps: self.gamma_steps,
        }
    }

    pub fn aligned_dir(&self) -> PathBuf {
        self.aligned_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("aligned"))
    }

    pub fn final_dir(&self) -> PathBuf {
        self.output_dir.join("final")
    }

    /// Returns a configured directory, or a config error when it is unset
    /// or does not exist.
    pub fn require_dir(&self, key: &str, value: &Option<PathBuf>) -> Result<PathBuf> {
        let p = value
            .clone()
            .ok_or_else(|| Error::Config(format!("{key} is required")))?;
        if !p.is_dir() {
            return Err(Error::Config(format!("{key} {} is not a directory", p.display())));
        }
        Ok(p)
    }

    pub fn require_file(&self, key: &str, value: &Option<PathBuf>) -> Result<PathBuf> {
        let p = value
            .clone()
            .ok_or_else(|| Error::Config(format!("{key} is required")))?;
        if !p.is_file() {
            return Err(Error::Config(format!("{key} {} is not a file", p.display())));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let cfg = PipelineConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.stage1(), StageOneConfig::default());
        assert_eq!(cfg.stage2(), StageTwoConfig::default());
    }

    #[test]
    fn overrides_win() {
        let cfg = PipelineConfig::from_toml_str(
            "seed = 3\nlambda_u = 0.5\n",
            &["seed=9".into(), "source_dir=frames".into(), "flow_error_direction=\"forward\"".into()],
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.lambda_u, 0.5);
        assert_eq!(cfg.source_dir, Some(PathBuf::from("frames")));
        assert_eq!(cfg.flow_error_direction, FlowErrorDirection::Forward);
        assert_eq!(cfg.stage2().seed, 9);
    }

    #[test]
    fn unknown_key_is_config_error() {
        let e = PipelineConfig::from_toml_str("lamda_u = 0.5", &[]).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        let e = PipelineConfig::from_toml_str("lambda_u = 2.0", &[]).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = PipelineConfig {
            xi_flow: Some(0.7),
            source_dir: Some("a/b".into()),
            ..Default::default()
        };
        let back = PipelineConfig::from_toml_str(&cfg.to_toml_string(), &[]).unwrap();
        assert_eq!(back, cfg);
    }
}
