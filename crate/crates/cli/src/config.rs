//! JSON run configuration. Every field is optional; command-line flags win.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesConfig {
    pub kernel: Option<f64>,
    pub relation: Option<f64>,
    /// Largest accepted ratio of consecutive normalization-series terms.
    pub series_tail: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub radial: Option<usize>,
    pub angular: Option<usize>,
    pub max_radius: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// When present, must name the subcommand being run.
    pub command: Option<String>,
    pub model: Option<PathBuf>,
    pub theta1: Option<PathBuf>,
    pub x: Option<PathBuf>,
    pub fixture: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    pub truncation: Option<usize>,
    #[serde(default)]
    pub tolerances: TolerancesConfig,
    pub quadrature_nodes: Option<usize>,
    #[serde(default)]
    pub grid: GridConfig,
    pub order: Option<usize>,
    pub level: Option<String>,
    pub convention: Option<String>,
    pub symbol: Option<String>,
    pub interior: Option<usize>,
    pub pairs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub dim1: Option<usize>,
    pub dim2: Option<usize>,
    pub hermitian: Option<bool>,
}

impl RunConfig {
    /// Relative paths inside the file are taken relative to its directory.
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::Input(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.model,
            &mut cfg.theta1,
            &mut cfg.x,
            &mut cfg.out,
            &mut cfg.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn check_command(&self, name: &str) -> Result<(), Failure> {
        match &self.command {
            Some(c) if c != name => Err(Failure::Input(format!(
                "config is for command {c:?}, running {name:?}"
            ))),
            _ => Ok(()),
        }
    }

    /// Parameters as `name=value` strings.
    pub fn param_strings(&self) -> Result<Vec<(String, String)>, Failure> {
        self.params
            .iter()
            .map(|(k, v)| match v {
                serde_json::Value::Number(n) => Ok((k.clone(), n.to_string())),
                serde_json::Value::String(s) => Ok((k.clone(), s.clone())),
                other => Err(Failure::Input(format!(
                    "parameter {k}: expected a number or a complex string, got {other}"
                ))),
            })
            .collect()
    }
}
