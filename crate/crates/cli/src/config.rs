//! Engine configuration: one JSON document, overridden by flags.
//!
//! Precedence is flags, then the file, then defaults. The file comes from
//! `--config` or, failing that, `PROOFLOOM_CONFIG`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use proofloom::providers::cache::ResponseCache;
use proofloom::providers::mock::{MockBackend, OracleWorld};
use proofloom::providers::remote::{FramePayload, RemoteBackend, RemoteOptions};
use proofloom::providers::templates::TemplateSet;
use proofloom::providers::{Backend, ModelClient, RetryPolicy};
use proofloom::search::{Modality, SearchConfig, Thresholds, DEFAULT_BUDGET};
use proofloom::synthetic::WORLD_FILE;

pub const CONFIG_ENV: &str = "PROOFLOOM_CONFIG";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Remote endpoint URL.
    pub endpoint: Option<String>,
    /// Oracle world for the mock backend.
    pub world: Option<PathBuf>,
    pub frame_payload: FramePayload,
    pub max_in_flight: usize,
    pub timeout_s: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let remote = RemoteOptions::default();
        let retry = RetryPolicy::default();
        Self {
            kind: BackendKind::Mock,
            endpoint: None,
            world: None,
            frame_payload: remote.frame_payload,
            max_in_flight: remote.max_in_flight,
            timeout_s: remote.timeout_s,
            retries: retry.retries,
            backoff_ms: retry.backoff_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub max_depth: usize,
    pub budget: usize,
    pub modality: Modality,
    pub anonymize: bool,
}

impl Default for SearchSection {
    fn default() -> Self {
        let d = SearchConfig::default();
        Self {
            max_depth: d.max_depth,
            budget: DEFAULT_BUDGET,
            modality: d.modality,
            anonymize: d.anonymize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub backend: BackendConfig,
    pub search: SearchSection,
    pub thresholds: Thresholds,
    pub workers: usize,
    pub cache_dir: Option<PathBuf>,
    /// JSON document of template text overrides.
    pub templates: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            backend: BackendConfig::default(),
            search: SearchSection::default(),
            thresholds: Thresholds::default(),
            workers: 4,
            cache_dir: None,
            templates: None,
        }
    }
}

/// Flags shared by every command that talks to a backend.
#[derive(Debug, Clone, Default, Args)]
pub struct EngineArgs {
    /// Engine configuration file (JSON).
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub backend: Option<BackendKind>,
    /// Remote backend endpoint.
    #[arg(long, global = true)]
    pub endpoint: Option<String>,
    /// Oracle world for the mock backend.
    #[arg(long, global = true)]
    pub world: Option<PathBuf>,
    /// text, video or both.
    #[arg(long, global = true)]
    pub modality: Option<Modality>,
    #[arg(long, global = true)]
    pub max_depth: Option<usize>,
    /// Provider calls allowed per proof.
    #[arg(long, global = true)]
    pub budget: Option<usize>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
}

impl EngineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Defaults, then the config file if any, then flags.
    pub fn resolve(args: &EngineArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                Self::parse(&text).with_context(|| format!("config {}", path.display()))?
            }
            None => Self::default(),
        };
        if let Some(kind) = args.backend {
            cfg.backend.kind = kind;
        }
        if let Some(e) = &args.endpoint {
            cfg.backend.endpoint = Some(e.clone());
        }
        if let Some(w) = &args.world {
            cfg.backend.world = Some(w.clone());
        }
        if let Some(m) = args.modality {
            cfg.search.modality = m;
        }
        if let Some(d) = args.max_depth {
            cfg.search.max_depth = d;
        }
        if let Some(b) = args.budget {
            cfg.search.budget = b;
        }
        if let Some(w) = args.workers {
            cfg.workers = w;
        }
        if let Some(c) = &args.cache_dir {
            cfg.cache_dir = Some(c.clone());
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        self.search_config().check().map_err(|e| anyhow!(e))?;
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if self.backend.kind == BackendKind::Remote && self.backend.endpoint.is_none() {
            bail!("the remote backend needs an endpoint");
        }
        Ok(())
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            max_depth: self.search.max_depth,
            thresholds: self.thresholds,
            modality: self.search.modality,
            budget: self.search.budget,
            anonymize: self.search.anonymize,
        }
    }

    /// The mock world: the configured one, else `oracle_world.json` in the
    /// first of `near` (or its parent) that has one.
    pub fn world_path(&self, near: &Path) -> Result<PathBuf> {
        if let Some(w) = &self.backend.world {
            return Ok(w.clone());
        }
        near.ancestors()
            .take(2)
            .map(|d| d.join(WORLD_FILE))
            .find(|p| p.exists())
            .ok_or_else(|| {
                anyhow!(
                    "the mock backend needs a world: pass --world or put {WORLD_FILE} next to {}",
                    near.display()
                )
            })
    }

    /// A client over the configured backend. `near` locates the mock world.
    pub fn client(&self, near: &Path) -> Result<ModelClient> {
        let backend: Arc<dyn Backend> = match self.backend.kind {
            BackendKind::Mock => {
                let path = self.world_path(near)?;
                let world = OracleWorld::load(&path).map_err(|e| anyhow!(e))?;
                Arc::new(MockBackend::new(world))
            }
            BackendKind::Remote => Arc::new(RemoteBackend::new(
                self.backend.endpoint.clone().expect("checked"),
                RemoteOptions {
                    frame_payload: self.backend.frame_payload,
                    max_in_flight: self.backend.max_in_flight,
                    timeout_s: self.backend.timeout_s,
                },
            )),
        };
        let mut client = ModelClient::new(backend).with_retry(RetryPolicy {
            retries: self.backend.retries,
            backoff_ms: self.backend.backoff_ms,
        });
        if let Some(path) = &self.templates {
            let doc = std::fs::read_to_string(path)
                .with_context(|| format!("reading templates {}", path.display()))?;
            client = client.with_templates(TemplateSet::default().with_overrides(&doc).map_err(|e| anyhow!(e))?);
        }
        if let Some(dir) = &self.cache_dir {
            let cache = ResponseCache::on_disk(dir).with_context(|| format!("cache {}", dir.display()))?;
            client = client.with_cache(Arc::new(cache));
        }
        Ok(client)
    }
}
