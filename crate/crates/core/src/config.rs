//! TOML configuration shared by the CLI and the sweep harness.
//!
//! ```toml
//! [model]
//! name = "sis"
//! delta = 0.2            # optional overrides
//! [model.params]
//! beta = 2.0
//! gamma = 1.0
//!
//! [run]
//! n_grid = [50, 100, 200]
//! tol = 1e-10
//! ```
//!
//! A model with an explicit `[[model.jumps]]` list is built from those
//! jumps instead of the registry; `bracket` and `delta` are then required.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Jump, ModelError, ModelSpec, RateFn, RateSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("parameter '{0}' is not of the form key=value with a numeric value")]
    BadParam(String),
    #[error("custom model '{name}' needs '{field}'")]
    MissingField { name: String, field: &'static str },
    #[error("n grid must be nonempty, positive and strictly increasing: {0:?}")]
    BadGrid(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpConfig {
    pub j: i64,
    pub envelope: f64,
    pub rate: RateSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub jumps: Vec<JumpConfig>,
}

impl ModelConfig {
    pub fn named(name: &str) -> Self {
        ModelConfig {
            name: name.to_string(),
            params: BTreeMap::new(),
            bracket: None,
            delta: None,
            alpha: None,
            jumps: Vec::new(),
        }
    }

    pub fn build(&self) -> Result<ModelSpec, ConfigError> {
        if self.jumps.is_empty() {
            let base = ModelSpec::builtin(&self.name, &self.params)?;
            if self.bracket.is_none() && self.delta.is_none() && self.alpha.is_none() {
                return Ok(base);
            }
            return Ok(ModelSpec::new(
                base.name.clone(),
                base.jumps().to_vec(),
                self.alpha.unwrap_or(base.alpha),
                self.bracket.unwrap_or(base.bracket),
                self.delta.unwrap_or(base.delta),
            )?);
        }
        let missing = |field| ConfigError::MissingField {
            name: self.name.clone(),
            field,
        };
        let jumps = self
            .jumps
            .iter()
            .map(|jc| Jump::new(jc.j, RateFn::from(&jc.rate), jc.envelope))
            .collect();
        Ok(ModelSpec::new(
            self.name.clone(),
            jumps,
            self.alpha.unwrap_or(1.0),
            self.bracket.ok_or_else(|| missing("bracket"))?,
            self.delta.ok_or_else(|| missing("delta"))?,
        )?)
    }
}

/// Settings for the run itself; every field can also come from a flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n: Option<u64>,
    pub n_grid: Option<Vec<u64>>,
    pub tol: Option<f64>,
    pub halfwidth: Option<u64>,
    pub reps: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileConfig {
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub run: RunConfig,
}

pub fn parse_config(text: &str) -> Result<FileConfig, ConfigError> {
    Ok(toml::from_str(text)?)
}

pub fn load_config(path: &Path) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// Parse `key=value`.
pub fn parse_param(s: &str) -> Result<(String, f64), ConfigError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ConfigError::BadParam(s.to_string()))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| ConfigError::BadParam(s.to_string()))?;
    Ok((k.trim().to_string(), v))
}

pub fn check_grid(grid: &[u64]) -> Result<(), ConfigError> {
    let ok = !grid.is_empty() && grid[0] > 0 && grid.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(ConfigError::BadGrid(grid.to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_with_params() {
        let cfg = parse_config(
            r#"
            [model]
            name = "sis"
            [model.params]
            beta = 4.0
            gamma = 1.0
            [run]
            n_grid = [10, 20, 40]
            "#,
        )
        .unwrap();
        let m = cfg.model.unwrap().build().unwrap();
        assert_eq!(m.rate(1, 0.5), 1.0);
        assert_eq!(cfg.run.n_grid, Some(vec![10, 20, 40]));
    }

    #[test]
    fn explicit_jumps() {
        let cfg = parse_config(
            r#"
            [model]
            name = "custom"
            bracket = [0.0, 5.0]
            delta = 0.5
            [[model.jumps]]
            j = 1
            envelope = 2.0
            rate = { kind = "const", value = 2.0 }
            [[model.jumps]]
            j = -1
            envelope = 1.0
            rate = { kind = "linear", intercept = 0.0, slope = 1.0 }
            "#,
        )
        .unwrap();
        let m = cfg.model.unwrap().build().unwrap();
        assert_eq!(m.drift(2.0), 0.0);
    }

    #[test]
    fn custom_model_needs_bracket() {
        let mut mc = ModelConfig::named("custom");
        mc.jumps.push(JumpConfig {
            j: 1,
            envelope: 1.0,
            rate: RateSpec::Const { value: 1.0 },
        });
        mc.delta = Some(0.1);
        assert!(matches!(
            mc.build(),
            Err(ConfigError::MissingField {
                field: "bracket",
                ..
            })
        ));
    }

    #[test]
    fn overrides_apply() {
        let mut mc = ModelConfig::named("immigration-death");
        mc.delta = Some(0.25);
        assert_eq!(mc.build().unwrap().delta, 0.25);
    }

    #[test]
    fn params_and_grids() {
        assert_eq!(parse_param("beta=2.5").unwrap(), ("beta".to_string(), 2.5));
        assert!(parse_param("beta").is_err());
        assert!(parse_param("beta=x").is_err());
        assert!(check_grid(&[1, 2, 3]).is_ok());
        assert!(check_grid(&[2, 2]).is_err());
        assert!(check_grid(&[]).is_err());
    }

    #[test]
    fn unknown_model() {
        assert!(matches!(
            ModelConfig::named("nope").build(),
            Err(ConfigError::Model(ModelError::UnknownModel(_)))
        ));
    }
}
