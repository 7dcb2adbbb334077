//! Run configuration: a TOML file with optional sections, overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vaereg::data::SyntheticSpec;
use vaereg::evaluation::Method;
use vaereg::model::ModelConfig;
use vaereg::training::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub synthetic: SyntheticSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub cv: CvSection,
    pub traverse: TraverseSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub target: String,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            path: None,
            target: "age".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvSection {
    pub folds: usize,
    pub inner_folds: usize,
    pub methods: Vec<Method>,
}

impl Default for CvSection {
    fn default() -> Self {
        let d = vaereg::evaluation::CvConfig::default();
        Self {
            folds: d.folds,
            inner_folds: d.inner_folds,
            methods: d.methods,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraverseSection {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for TraverseSection {
    fn default() -> Self {
        Self {
            lo: 18.0,
            hi: 86.0,
            points: 11,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    /// Applies the seed precedence (flag, then file) to every seeded section.
    pub fn resolve_seed(&mut self, flag: Option<u64>) {
        if let Some(s) = flag {
            self.seed = s;
        }
        self.train.seed = self.seed;
    }

    pub fn data_path(&self) -> Result<&Path> {
        match &self.data.path {
            Some(p) if p.is_file() => Ok(p),
            Some(p) => bail!("data file {} does not exist", p.display()),
            None => bail!("no data file given (use --data or [data] path)"),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("seed = 1\n[train]\nepochz = 3\n").is_err());
        assert!(toml::from_str::<RunConfig>("colour = 1\n").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg: RunConfig = toml::from_str("seed = 9\n[train]\nepochs = 3\nkl_mode = { kind = \"mc\", samples = 2 }\n").unwrap();
        cfg.resolve_seed(None);
        assert_eq!(cfg.train.seed, 9);
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        cfg.resolve_seed(Some(4));
        assert_eq!((cfg.seed, cfg.train.seed), (4, 4));
    }
}
