//! Pipeline configuration file (TOML).
//!
//! ```toml
//! seed = 20240101
//! output_dir = "runs/tacred"
//!
//! [data]
//! gold = "../data/fixtures/tacred_synth.json"
//! format = "tacred"
//! dataset = "tacred"
//!
//! [backend]
//! url = "http://127.0.0.1:8000/v1/chat/completions"
//! model = "llama-2-7b-chat"
//! auth_env = "RELGEN_API_KEY"
//!
//! [generation]
//! rounds = 8
//!
//! [dpo]
//! pairs_per_relation = 8
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.
//! The `seed` fields of `[generation]` and `[dpo]` are ignored: every random
//! stream is derived from the root `seed`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use relgen_core::corpus::{load_catalog, load_normalized, load_semeval, load_tacred};
use relgen_core::genloop::HttpSettings;
use relgen_core::seed::derive_seed;
use relgen_core::{DpoBuildConfig, GenerationConfig, ReSample, RelationCatalog};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldFormat {
    /// TACRED json array with inclusive end indices.
    Tacred,
    /// Normalized JSONL.
    Jsonl,
    /// Normalized JSONL converted from SemEval, validated against its 19 labels.
    Semeval,
}

impl std::str::FromStr for GoldFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tacred" => Ok(GoldFormat::Tacred),
            "jsonl" => Ok(GoldFormat::Jsonl),
            "semeval" => Ok(GoldFormat::Semeval),
            other => Err(format!("unknown gold format {other:?} (tacred, jsonl, semeval)")),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub gold: PathBuf,
    #[serde(default = "default_format")]
    pub format: GoldFormat,
    /// Bundled catalog when absent.
    pub catalog: Option<PathBuf>,
    #[serde(default = "default_dataset")]
    pub dataset: String,
}

fn default_format() -> GoldFormat {
    GoldFormat::Tacred
}

fn default_dataset() -> String {
    "tacred".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: Option<String>,
    #[serde(default = "yes")]
    pub sampling_extensions: bool,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_transport_retries: usize,
}

fn yes() -> bool {
    true
}

fn default_timeout() -> u64 {
    120
}

fn default_retries() -> usize {
    3
}

impl BackendConfig {
    pub fn settings(&self) -> Result<HttpSettings> {
        let mut settings = HttpSettings::new(&self.url, &self.model);
        settings.sampling_extensions = self.sampling_extensions;
        settings.timeout = Duration::from_secs(self.timeout_secs);
        settings.max_transport_retries = self.max_transport_retries;
        if let Some(var) = &self.auth_env {
            match std::env::var(var) {
                Ok(key) => settings.api_key = Some(key),
                Err(_) => log::warn!("{var} is not set; sending requests without a token"),
            }
        }
        Ok(settings)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub backend: Option<BackendConfig>,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub dpo: DpoBuildConfig,
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data.gold = resolve(base, &cfg.data.gold);
        cfg.data.catalog = cfg.data.catalog.as_deref().map(|p| resolve(base, p));
        cfg.output_dir = resolve(base, &cfg.output_dir);
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if !self.data.gold.is_file() {
            bail!("gold data {} does not exist", self.data.gold.display());
        }
        if let Some(catalog) = &self.data.catalog {
            if !catalog.is_file() {
                bail!("catalog {} does not exist", catalog.display());
            }
        }
        self.generation
            .validate()
            .map_err(|e| anyhow::anyhow!("[generation] {e}"))?;
        self.dpo.validate().context("[dpo]")?;
        Ok(())
    }

    pub fn catalog(&self) -> Result<RelationCatalog> {
        let full = match &self.data.catalog {
            Some(path) => load_catalog(path)?,
            None => RelationCatalog::bundled(),
        };
        Ok(full.for_dataset(&self.data.dataset)?)
    }

    pub fn gold(&self) -> Result<Vec<ReSample>> {
        let path = &self.data.gold;
        let samples = match self.data.format {
            GoldFormat::Tacred => load_tacred(path)?,
            GoldFormat::Jsonl => load_normalized(path)?,
            GoldFormat::Semeval => load_semeval(path)?,
        };
        Ok(samples)
    }

    /// Child seed of the root seed for one subsystem.
    pub fn seed_for(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }

    pub fn splitplan_path(&self) -> PathBuf {
        self.output_dir.join("splitplan.json")
    }
}
