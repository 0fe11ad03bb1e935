//! Run configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::LoadSpec;
use crate::decomp::{Decomposition, DecompositionSpec};
use crate::driver::{OptimizationConfig, DEFAULT_PIVOT_TOL};
use crate::phasefield::PhaseParams;

/// Either a path (relative to the config file) or the inline value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<T> {
    Path(PathBuf),
    Inline(T),
}

impl<T: serde::de::DeserializeOwned + Clone> Source<T> {
    fn load(&self, base: &Path) -> crate::Result<T> {
        match self {
            Source::Inline(v) => Ok(v.clone()),
            Source::Path(p) => {
                let path = if p.is_absolute() { p.clone() } else { base.join(p) };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| crate::Error::Config(format!("{}: {e}", path.display())))?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }
}

/// Phase parameters with every entry optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    pub beta: Option<f64>,
    pub eta: Option<f64>,
    /// Interface width; defaults to twice the smallest cell size.
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub decomposition: Source<DecompositionSpec>,
    pub loads: Source<LoadSpec>,
    /// Cells per subdomain side.
    pub resolution: usize,
    #[serde(default)]
    pub params: ParamOverrides,
    pub outer_max_iters: Option<usize>,
    pub stop_tol: Option<f64>,
    pub max_sweeps: Option<usize>,
    pub sweep_tol: Option<f64>,
    #[serde(default)]
    pub warm_start: bool,
    pub pivot_tol: Option<f64>,
    /// Directory holding relative paths; the config file's directory when read from disk.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> crate::Result<RunConfig> {
        let mut cfg: RunConfig = serde_json::from_str(text)?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> crate::Result<RunConfig> {
        let text =
            std::fs::read_to_string(path).map_err(|e| crate::Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig::from_json(&text, &base)
    }

    pub fn decomposition(&self) -> crate::Result<Decomposition> {
        Ok(self.decomposition.load(&self.base_dir)?.build()?)
    }

    pub fn load_spec(&self) -> crate::Result<LoadSpec> {
        let loads = self.loads.load(&self.base_dir)?;
        loads.validate()?;
        Ok(loads)
    }

    /// Loads the referenced files and fills in defaults.
    pub fn resolve(&self) -> crate::Result<(Decomposition, LoadSpec, OptimizationConfig)> {
        if self.resolution < 2 {
            return Err(crate::Error::Config(format!("resolution must be at least 2, got {}", self.resolution)));
        }
        let decomp = self.decomposition()?;
        let loads = self.load_spec()?;
        let mut opt = OptimizationConfig::with_defaults(&decomp, self.resolution);
        let p = &self.params;
        opt.params = PhaseParams {
            beta: p.beta.unwrap_or(opt.params.beta),
            eta: p.eta.unwrap_or(opt.params.eta),
            epsilon: p.epsilon.unwrap_or(opt.params.epsilon),
            delta: p.delta.unwrap_or(opt.params.delta),
        };
        opt.params.validate().map_err(crate::Error::Config)?;
        if let Some(k) = self.outer_max_iters {
            opt.outer_max_iters = k;
        }
        if let Some(t) = self.stop_tol {
            opt.stop_tol = t;
        }
        if let Some(k) = self.max_sweeps {
            opt.max_sweeps = k;
        }
        if let Some(t) = self.sweep_tol {
            opt.sweep_tol = t;
        }
        opt.warm_start = self.warm_start;
        opt.pivot_tol = self.pivot_tol.unwrap_or(DEFAULT_PIVOT_TOL);
        if !(opt.stop_tol > 0.0) {
            return Err(crate::Error::Config("stop_tol must be positive".into()));
        }
        Ok((decomp, loads, opt))
    }
}
