//! JSON application config shared by every command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::descmatch::DEFAULT_RATIO;
use crate::detectors::{DetectorProfile, ProfileName};
use crate::error::{invalid, Error, Result};
use crate::espnet::TrainConfig;
use crate::metrics::{EvalSettings, RepeatabilityMode, DEFAULT_EPS};

/// Field overrides applied on top of the built-in Normal and Low profiles.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileOverrides {
    pub normal: Map<String, Value>,
    pub low: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub ratio: f64,
    pub eps: f64,
    pub oriented: bool,
    pub repeatability_mode: RepeatabilityMode,
    /// RANSAC iterations and inlier distance when no ground truth is given.
    pub ransac_iters: usize,
    pub ransac_eps: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            ratio: DEFAULT_RATIO,
            eps: DEFAULT_EPS,
            oriented: false,
            repeatability_mode: RepeatabilityMode::Correspondence,
            ransac_iters: 1000,
            ransac_eps: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    /// PPM for color images, PGM for masks.
    #[default]
    Pnm,
    Png,
}

impl ImageFormat {
    pub fn image_extension(self) -> &'static str {
        match self {
            ImageFormat::Pnm => "ppm",
            ImageFormat::Png => "png",
        }
    }

    pub fn mask_extension(self) -> &'static str {
        match self {
            ImageFormat::Pnm => "pgm",
            ImageFormat::Png => "png",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    /// Format for masks and images written by the tools.
    pub image_format: ImageFormat,
    pub output_dir: PathBuf,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            image_format: ImageFormat::Pnm,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub profiles: ProfileOverrides,
    pub train: TrainConfig,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    pub io: IoConfig,
    pub seed: u64,
}

impl AppConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: AppConfig = serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        for name in [ProfileName::Normal, ProfileName::Low] {
            self.profile(name)?;
        }
        let m = &self.matching;
        if !(m.ratio > 0.0 && m.ratio <= 1.0) {
            return Err(invalid!("match.ratio must lie in (0, 1], got {}", m.ratio));
        }
        if !(m.eps > 0.0) || !(m.ransac_eps > 0.0) || m.ransac_iters == 0 {
            return Err(invalid!("match.eps, match.ransac_eps and match.ransac_iters must be positive"));
        }
        Ok(())
    }

    /// Built-in profile with this config's overrides applied and validated.
    pub fn profile(&self, name: ProfileName) -> Result<DetectorProfile> {
        let overrides = match name {
            ProfileName::Normal => &self.profiles.normal,
            ProfileName::Low => &self.profiles.low,
        };
        if overrides.contains_key("name") {
            return Err(invalid!("profiles.{name}.name cannot be overridden"));
        }
        let mut base = serde_json::to_value(DetectorProfile::named(name)).expect("profile serializes");
        let obj = base.as_object_mut().expect("profile is an object");
        for (k, v) in overrides {
            obj.insert(k.clone(), v.clone());
        }
        let profile: DetectorProfile =
            serde_json::from_value(base).map_err(|e| invalid!("profiles.{name}: {e}"))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            eps: self.matching.eps,
            ratio: self.matching.ratio,
            repeatability_mode: self.matching.repeatability_mode,
        }
    }
}
