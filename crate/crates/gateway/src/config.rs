use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scatgate::classify::ClassifierSpec;
use scatgate::rounds::{LoopConfig, RoundTargets};

use crate::error::{GatewayError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    /// Holds one dataset directory per corpus, or is itself a dataset.
    pub data_root: PathBuf,
    /// Dataset the loop runs on; defaults to the first one found.
    pub dataset: Option<String>,
    pub thumb_side: usize,
    /// Shared secret expected as `Authorization: Bearer <token>`.
    pub auth_token: Option<String>,
    pub cors_allowlist: Vec<String>,
    /// Annotation UI build served at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_root: PathBuf::from("data"),
            dataset: None,
            thumb_side: 128,
            auth_token: None,
            cors_allowlist: Vec::new(),
            static_dir: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))
    }

    pub fn read_toml(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Checks the port and that the data root exists and is writable.
    pub fn validate(&self) -> Result<()> {
        if self.listen.port() == 0 {
            return Err(GatewayError::Config("listen port must be nonzero".into()));
        }
        if self.thumb_side == 0 {
            return Err(GatewayError::Config("thumb_side must be positive".into()));
        }
        if matches!(&self.auth_token, Some(t) if t.is_empty()) {
            return Err(GatewayError::Config("auth_token is empty".into()));
        }
        check_writable(&self.data_root)
    }
}

pub(crate) fn check_writable(dir: &Path) -> Result<()> {
    if !dir.is_dir() {
        return Err(GatewayError::Config(format!(
            "data root {} is not a directory",
            dir.display()
        )));
    }
    let probe = dir.join(".scatgate-write-probe");
    std::fs::write(&probe, b"")
        .and_then(|_| std::fs::remove_file(&probe))
        .map_err(|e| {
            GatewayError::Config(format!("data root {} is not writable: {e}", dir.display()))
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedClassifier {
    pub name: String,
    #[serde(flatten)]
    pub spec: ClassifierSpec,
}

/// Per-dataset loop settings, read from `loop.toml` in the dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopSettings {
    #[serde(rename = "loop")]
    pub config: LoopConfig,
    pub next_targets: RoundTargets,
    /// Cap on generated-frame labels imported from the dataset's
    /// `labels.jsonl` when the loop starts; experimental labels are always
    /// imported. `None` imports everything.
    pub prelabel_generated: Option<usize>,
    pub classifiers: Vec<NamedClassifier>,
}

impl Default for LoopSettings {
    fn default() -> Self {
        Self {
            config: LoopConfig::default(),
            next_targets: RoundTargets::NEXT,
            prelabel_generated: None,
            classifiers: scatgate::simulation::default_classifiers()
                .into_iter()
                .map(|(name, spec)| NamedClassifier { name, spec })
                .collect(),
        }
    }
}

impl LoopSettings {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let settings: Self =
            toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        settings.validate()?;
        Ok(settings)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classifiers.is_empty() {
            return Err(GatewayError::Config(
                "at least one classifier is required".into(),
            ));
        }
        let mut names: Vec<&str> = self.classifiers.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(GatewayError::Config(
                "classifier names must be unique".into(),
            ));
        }
        for c in &self.classifiers {
            c.spec.validate()?;
        }
        self.config.seed_targets.validate()?;
        self.config.validation_targets.validate()?;
        self.next_targets.validate()?;
        Ok(())
    }

    pub fn specs(&self) -> Vec<(String, ClassifierSpec)> {
        self.classifiers
            .iter()
            .map(|c| (c.name.clone(), c.spec.clone()))
            .collect()
    }
}
