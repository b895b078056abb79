//! Run configuration: a TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bridge::{BridgeClient, DEFAULT_TIMEOUT};
use crate::error::{Error, Result};
use crate::ga::GaConfig;
use crate::models::{Extractor, Generator, OracleKind, OracleSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    OrthonormalOracle,
    NonlinearOracle,
    Bridge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub seed: u64,
    /// Oracle feature dimension; defaults to the latent dimension.
    pub feature_dim: Option<usize>,
    /// Oracle image dimension; defaults to the latent dimension.
    pub image_dim: Option<usize>,
    /// Command line for `bridge` models, run through `sh -c`.
    pub command: Option<String>,
    pub timeout_secs: Option<u64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::OrthonormalOracle,
            seed: 1,
            feature_dim: None,
            image_dim: None,
            command: None,
            timeout_secs: None,
        }
    }
}

impl ModelConfig {
    pub fn oracle_spec(&self, latent_dim: usize) -> Option<OracleSpec> {
        let kind = match self.kind {
            ModelKind::OrthonormalOracle => OracleKind::Orthonormal,
            ModelKind::NonlinearOracle => OracleKind::Nonlinear,
            ModelKind::Bridge => return None,
        };
        Some(
            OracleSpec::new(
                kind,
                latent_dim,
                self.feature_dim.unwrap_or(latent_dim),
                self.seed,
            )
            .with_image_dim(self.image_dim.unwrap_or(latent_dim)),
        )
    }

    pub fn describe(&self, latent_dim: usize) -> String {
        match self.oracle_spec(latent_dim) {
            Some(s) => format!(
                "{}-oracle(L={},P={},D={},seed={})",
                match s.kind {
                    OracleKind::Orthonormal => "orthonormal",
                    OracleKind::Nonlinear => "nonlinear",
                },
                s.latent_dim,
                s.image_dim,
                s.feature_dim,
                s.seed
            ),
            None => format!("bridge({})", self.command.as_deref().unwrap_or("")),
        }
    }

    /// Instantiates the generator and extractor.
    pub fn build(&self, latent_dim: usize) -> Result<SystemModels> {
        match self.oracle_spec(latent_dim) {
            Some(spec) => {
                let (g, e) = spec.build()?;
                Ok(SystemModels {
                    generator: Box::new(g),
                    extractor: Box::new(e),
                    description: self.describe(latent_dim),
                })
            }
            None => {
                let command = self
                    .command
                    .as_deref()
                    .ok_or_else(|| Error::InvalidConfig("bridge model needs a command".into()))?;
                let timeout = self
                    .timeout_secs
                    .map(Duration::from_secs)
                    .unwrap_or(DEFAULT_TIMEOUT);
                let client = Arc::new(BridgeClient::spawn(command, timeout)?);
                Ok(SystemModels {
                    description: format!("bridge:{}", client.spec().model_name),
                    generator: Box::new(client.clone()),
                    extractor: Box::new(client),
                })
            }
        }
    }
}

pub struct SystemModels {
    pub generator: Box<dyn Generator>,
    pub extractor: Box<dyn Extractor>,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub users: usize,
    pub samples_per_user: usize,
    pub latent_dim: usize,
    pub sigma: f64,
    pub seed: u64,
    /// Load a saved world instead of generating one.
    pub file: Option<PathBuf>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            users: 10,
            samples_per_user: 2,
            latent_dim: 16,
            sigma: 0.1,
            seed: 0,
            file: None,
        }
    }
}

/// Pre-enrolled templates in the JSON-lines template format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateFiles {
    /// Templates leaked from the compromised system (sample 0 is inverted).
    pub compromised: PathBuf,
    /// Bona fide templates enrolled in the targeted system.
    pub bona_fide: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub max_imposter_pairs: usize,
    pub roc_points: usize,
    pub histogram_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            max_imposter_pairs: 100_000,
            roc_points: 25,
            histogram_bins: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub repeats: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self { repeats: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out: PathBuf,
    pub far: Vec<f64>,
    pub ga: GaConfig,
    pub world: WorldConfig,
    pub sys_c: ModelConfig,
    /// Targeted system; absent means it shares the compromised system's models.
    pub sys_t: Option<ModelConfig>,
    pub templates: Option<TemplateFiles>,
    pub eval: EvalConfig,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            far: vec![0.0, 0.001, 0.01, 0.1],
            ga: GaConfig::default(),
            world: WorldConfig::default(),
            sys_c: ModelConfig::default(),
            sys_t: None,
            templates: None,
            eval: EvalConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("reading config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Sorts and de-duplicates FAR targets and checks every section.
    pub fn normalize(&mut self) -> Result<()> {
        if let Some(f) = self.far.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::InvalidConfig(format!(
                "FAR target {f} outside [0,1]"
            )));
        }
        self.far.sort_by(f64::total_cmp);
        self.far.dedup();
        self.ga.validate()?;
        if self.eval.histogram_bins < 2 || self.eval.roc_points < 2 {
            return Err(Error::InvalidConfig(
                "need >= 2 histogram bins and ROC points".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
