use std::path::PathBuf;

use effort_core::{Error, Result};

pub const ENV_PREFIX: &str = "EFFORT_";

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Directory written by `effort ingest` (holds `dataset.json`).
    pub dataset: Option<PathBuf>,
    /// Label CSV; defaults to `labels.csv` next to the dataset directory.
    pub labels: Option<PathBuf>,
    /// Checkpoint manifest (`*.json`); requires `atlas`.
    pub checkpoint: Option<PathBuf>,
    pub atlas: Option<PathBuf>,
    /// Upper bound on `count` per generation request.
    pub max_generate: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8787,
            dataset: None,
            labels: None,
            checkpoint: None,
            atlas: None,
            max_generate: 64,
        }
    }
}

impl ServiceConfig {
    /// Reads `EFFORT_HOST`, `EFFORT_PORT`, `EFFORT_DATASET`, `EFFORT_LABELS`,
    /// `EFFORT_CHECKPOINT`, `EFFORT_ATLAS` and `EFFORT_MAX_GENERATE`.
    pub fn from_env() -> Result<Self> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let var = |name: &str| get(&format!("{ENV_PREFIX}{name}")).filter(|v| !v.is_empty());
        let parse_num = |name: &str, v: String| {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("{ENV_PREFIX}{name}={v:?} is not a number")))
        };
        let mut cfg = Self::default();
        if let Some(h) = var("HOST") {
            cfg.host = h;
        }
        if let Some(p) = var("PORT") {
            cfg.port = u16::try_from(parse_num("PORT", p.clone())?)
                .map_err(|_| Error::Config(format!("{ENV_PREFIX}PORT={p:?} is out of range")))?;
        }
        if let Some(n) = var("MAX_GENERATE") {
            cfg.max_generate = parse_num("MAX_GENERATE", n)?;
        }
        cfg.dataset = var("DATASET").map(PathBuf::from);
        cfg.labels = var("LABELS").map(PathBuf::from);
        cfg.checkpoint = var("CHECKPOINT").map(PathBuf::from);
        cfg.atlas = var("ATLAS").map(PathBuf::from);
        Ok(cfg)
    }

    pub fn labels_path(&self) -> Option<PathBuf> {
        self.labels.clone().or_else(|| {
            let dir = self.dataset.as_ref()?;
            Some(dir.parent().unwrap_or(dir).join("labels.csv"))
        })
    }
}
