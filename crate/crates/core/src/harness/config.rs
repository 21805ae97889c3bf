//! Fit configuration files (TOML, or JSON by extension).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{CvConfig, FitConfig};
use crate::spectral::{KernelFamily, DEFAULT_NUGGET};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub fit: FitConfig,
    pub nugget: f64,
    pub family: KernelFamily,
    /// When present, `lambda_i` and `lambda_o` are chosen by cross-validation.
    pub cv: Option<CvConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            nugget: DEFAULT_NUGGET,
            family: KernelFamily::Sped,
            cv: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json(&text),
            _ => Self::from_toml(&text),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.nugget >= 0.0) || !self.nugget.is_finite() {
            return Err(Error::Config(format!("nugget = {} must be finite and nonnegative", self.nugget)));
        }
        Ok(())
    }
}
