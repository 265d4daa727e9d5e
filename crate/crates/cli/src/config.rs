use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use expsearch_core::embedding::{EmbeddingProvider, FileEmbedding, HashedEmbedding};
use expsearch_core::{SearchConfig, TransferConfig};
use serde::{Deserialize, Serialize};

/// Overrides `store_dir` from the config file.
pub const STORE_ENV: &str = "EXPSEARCH_STORE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Hashed,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: ProviderKind,
    pub file_path: Option<PathBuf>,
    pub dimension: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Hashed,
            file_path: None,
            dimension: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub store_dir: PathBuf,
    pub rng_seed: u64,
    pub search: SearchConfig,
    pub transfer: TransferConfig,
    pub embedding: EmbeddingConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            store_dir: PathBuf::from("expsearch-store"),
            rng_seed: 0,
            search: SearchConfig::default(),
            transfer: TransferConfig::default(),
            embedding: EmbeddingConfig::default(),
        }
    }
}

impl CliConfig {
    /// File values, then the store environment variable, then `--seed`.
    pub fn resolve(path: Option<&Path>, seed: Option<u64>, store_env: Option<PathBuf>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Self::default(),
        };
        if let Some(dir) = store_env {
            cfg.store_dir = dir;
        }
        if let Some(s) = seed {
            cfg.rng_seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding.dimension == 0 {
            bail!("invalid embedding.dimension: must be at least 1");
        }
        if self.embedding.provider == ProviderKind::File && self.embedding.file_path.is_none() {
            bail!("invalid embedding.file_path: required when provider is `file`");
        }
        self.effective_search().validate()?;
        Ok(())
    }

    /// Search settings with the top-level transfer block and seed applied.
    pub fn effective_search(&self) -> SearchConfig {
        SearchConfig {
            transfer: self.transfer,
            rng_seed: self.rng_seed,
            ..self.search.clone()
        }
    }

    pub fn provider(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self.embedding.provider {
            ProviderKind::Hashed => Box::new(HashedEmbedding::new(self.embedding.dimension)?),
            ProviderKind::File => {
                let path = self.embedding.file_path.as_ref().expect("validated");
                Box::new(FileEmbedding::load(path)?)
            }
        })
    }
}
