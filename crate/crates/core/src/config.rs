//! Preset file for the command line tool.
//!
//! ```text
//! [defaults]
//! exemplar = slides/exemplar.png
//! contrast = natural
//! x_scale = 0.3
//! tile_size = 256
//! threads = 8
//! seed = 7
//! ```
//!
//! Keys may also appear before any section header. Flags override them.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use crate::error::{QopsError, Result};
use crate::workflows::ContrastParams;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliConfig {
    pub exemplar: Option<PathBuf>,
    pub contrast: Option<String>,
    pub x_scale: Option<f64>,
    pub tile_size: Option<u32>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
}

const KEYS: [&str; 6] = ["exemplar", "contrast", "x_scale", "tile_size", "threads", "seed"];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| QopsError::InvalidParameter(format!("config key {key}: cannot parse {value:?}")))
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text).map_err(|e| QopsError::InvalidParameter(format!("{}: {e}", path.display())))
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| QopsError::InvalidParameter(e.to_string()))?;
        let mut cfg = Self::default();
        for (section, props) in ini.iter() {
            if !matches!(section, None | Some("defaults")) {
                return Err(QopsError::InvalidParameter(format!("unknown section [{}]", section.unwrap_or_default())));
            }
            for (key, value) in props.iter() {
                match key {
                    "exemplar" => cfg.exemplar = Some(PathBuf::from(value.trim())),
                    "contrast" => cfg.contrast = Some(value.trim().to_string()),
                    "x_scale" => cfg.x_scale = Some(parse(key, value)?),
                    "tile_size" => cfg.tile_size = Some(parse(key, value)?),
                    "threads" => cfg.threads = Some(parse(key, value)?),
                    "seed" => cfg.seed = Some(parse(key, value)?),
                    other => {
                        return Err(QopsError::InvalidParameter(format!(
                            "unknown key {other:?}, expected one of {}",
                            KEYS.join(", ")
                        )))
                    }
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(x) = self.x_scale {
            if !(x > 0.0 && x <= 1.0) {
                return Err(QopsError::InvalidParameter(format!("x_scale {x} is outside (0, 1]")));
            }
        }
        if self.tile_size == Some(0) {
            return Err(QopsError::InvalidParameter("tile_size must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(QopsError::InvalidParameter("threads must be at least 1".into()));
        }
        if let Some(c) = &self.contrast {
            c.parse::<ContrastParams>()?;
        }
        Ok(())
    }
}
