//! JSON run configuration and its merge with command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pxp_core::dynamics::TimeGrid;
use pxp_core::{ModelConfig, Scheme, StateTag, TermName};
use serde::{Deserialize, Serialize};

/// On-disk form of a run. Every key is optional; flags override it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<StateTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub terms: BTreeMap<TermName, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration {path}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    /// `other` wins wherever it is set; term maps are merged key by key.
    pub fn overlay(mut self, other: RunConfig) -> Self {
        self.sites = other.sites.or(self.sites);
        self.initial = other.initial.or(self.initial);
        self.scheme = other.scheme.or(self.scheme);
        self.terms.extend(other.terms);
        self.time = match (self.time, other.time) {
            (_, Some(t)) => Some(t),
            (t, None) => t,
        };
        self.threads = other.threads.or(self.threads);
        self.seed = other.seed.or(self.seed);
        self
    }

    /// Fills defaults and validates the model.
    ///
    /// Without `initial` the scheme's reference state is used, and without a
    /// scheme the natural one for the initial state. The z3exact scheme with
    /// no terms gets its fixed perturbation.
    pub fn resolve(&self, default_sites: Option<usize>) -> Result<Resolved, ConfigError> {
        let sites = self
            .sites
            .or(default_sites)
            .ok_or_else(|| ConfigError::Invalid("system size missing: pass --L or set \"L\"".into()))?;
        let initial = self.initial.or(self.scheme.map(Scheme::initial_tag)).unwrap_or(StateTag::Z2);
        let scheme = match self.scheme {
            Some(s) => Some(s),
            None => Scheme::for_initial(initial).ok(),
        };
        let model = if scheme == Some(Scheme::Z3Exact) && self.terms.is_empty() {
            ModelConfig::z3exact(sites)
        } else {
            ModelConfig { sites, initial, terms: self.terms.clone() }
        };
        model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let grid = self.time.unwrap_or_default();
        grid.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Resolved { model, scheme, grid, seed: self.seed.unwrap_or(0) })
    }
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: ModelConfig,
    pub scheme: Option<Scheme>,
    pub grid: TimeGrid,
    pub seed: u64,
}

impl Resolved {
    pub fn scheme(&self) -> Result<Scheme, ConfigError> {
        self.scheme.ok_or_else(|| {
            ConfigError::Invalid(format!("no ladder scheme for initial state {}: pass --scheme", self.model.initial))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = r#"{"L":14,"initial":"vacuum","scheme":"vacuum","terms":{"sigma3":0.31,"sigma5":0.28},"time":{"dt":0.05,"t_max":20.0},"threads":1,"seed":7}"#;
        let cfg: RunConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.sites, Some(14));
        assert_eq!(cfg.terms[&TermName::Sigma(5)], 0.28);
        let again: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(serde_json::to_string(&cfg).unwrap(), text);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"L":12,"lambda":0.1}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"time":{"dt":0.1,"t_max":1,"x":2}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"terms":{"sigma4":0.1}}"#).is_err());
    }

    #[test]
    fn overlay_prefers_flags() {
        let file = RunConfig { sites: Some(12), terms: [(TermName::Z2Pert, 0.1)].into(), ..Default::default() };
        let flags = RunConfig { sites: Some(14), terms: [(TermName::Z2Pert, 0.2)].into(), ..Default::default() };
        let merged = file.overlay(flags);
        assert_eq!(merged.sites, Some(14));
        assert_eq!(merged.terms[&TermName::Z2Pert], 0.2);
    }

    #[test]
    fn resolve_defaults() {
        let r = RunConfig { sites: Some(12), scheme: Some(Scheme::Z3Exact), ..Default::default() }.resolve(None).unwrap();
        assert_eq!(r.model, ModelConfig::z3exact(12));
        assert_eq!(r.model.initial, StateTag::Z3);
        let r = RunConfig { initial: Some(StateTag::Vacuum), ..Default::default() }.resolve(Some(10)).unwrap();
        assert_eq!(r.scheme, Some(Scheme::Vacuum));
        assert!(RunConfig::default().resolve(None).is_err());
        let bad = RunConfig { sites: Some(8), terms: [(TermName::Z3Pert1, 0.1)].into(), ..Default::default() };
        assert!(bad.resolve(None).is_err());
    }
}
