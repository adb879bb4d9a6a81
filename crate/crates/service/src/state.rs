use std::collections::HashMap;
use std::fs;
use std::sync::{Arc, RwLock};
use std::thread;

use effort_core::generator::LatentAtlas;
use effort_core::labels::{ClassNames, InsertOutcome, LabelRecord, LabelStore, LabelTable};
use effort_core::model::Model;
use effort_core::motion::{DatasetCache, DatasetSummary, MotionClip};
use effort_core::diff::ParamSet;
use effort_core::trainer::{load_model, CheckpointManifest};
use effort_core::{Error, Result};
use tokio::sync::{mpsc, oneshot, Mutex};

use crate::config::ServiceConfig;

pub struct LoadedDataset {
    pub summary: DatasetSummary,
    pub names: ClassNames,
    clips: HashMap<String, MotionClip>,
}

impl LoadedDataset {
    pub fn clip(&self, id: &str) -> Option<&MotionClip> {
        self.clips.get(id)
    }
}

pub struct LoadedModel {
    pub model: Model,
    pub params: ParamSet,
    pub manifest: CheckpointManifest,
    pub atlas: LatentAtlas,
    pub atlas_sha256: String,
}

struct WriteRequest {
    record: LabelRecord,
    overwrite: bool,
    reply: oneshot::Sender<Result<(InsertOutcome, LabelRecord)>>,
}

/// Every label write goes through one thread that owns the CSV store; the
/// shared table is a read-only mirror updated after each durable append.
pub struct LabelWriter {
    tx: mpsc::UnboundedSender<WriteRequest>,
    table: Arc<RwLock<LabelTable>>,
}

impl LabelWriter {
    pub fn spawn(mut store: LabelStore) -> Self {
        let table = Arc::new(RwLock::new(store.table().clone()));
        let mirror = Arc::clone(&table);
        let (tx, mut rx) = mpsc::unbounded_channel::<WriteRequest>();
        thread::spawn(move || {
            while let Some(req) = rx.blocking_recv() {
                let key = req.record.key();
                let result = store.save(req.record, req.overwrite).map(|outcome| {
                    let stored = store.table().get(&key.0, key.1).cloned().expect("saved record is present");
                    if outcome != InsertOutcome::Unchanged {
                        let mut t = mirror.write().expect("label table lock");
                        *t = store.table().clone();
                    }
                    (outcome, stored)
                });
                let _ = req.reply.send(result);
            }
        });
        Self { tx, table }
    }

    pub async fn save(&self, record: LabelRecord, overwrite: bool) -> Result<(InsertOutcome, LabelRecord)> {
        let (reply, rx) = oneshot::channel();
        self.tx
            .send(WriteRequest { record, overwrite, reply })
            .map_err(|_| Error::Precondition("label writer stopped".into()))?;
        rx.await.map_err(|_| Error::Precondition("label writer stopped".into()))?
    }

    pub fn snapshot(&self) -> LabelTable {
        self.table.read().expect("label table lock").clone()
    }
}

/// Everything a request handler may touch. The dataset and model are
/// immutable once loaded.
pub struct SessionState {
    pub dataset: Option<LoadedDataset>,
    pub labels: Option<LabelWriter>,
    pub model: Option<Arc<LoadedModel>>,
    /// Generation requests queue here (FIFO) so one model evaluation runs
    /// at a time.
    pub generation: Mutex<()>,
    pub config: ServiceConfig,
}

impl SessionState {
    /// Loads whatever `config` points at; absent paths leave that part
    /// unloaded.
    pub fn open(config: ServiceConfig) -> Result<Self> {
        let dataset = match &config.dataset {
            Some(dir) => {
                let cache = DatasetCache::load(dir)?;
                let names = ClassNames(cache.summary.class_names.clone());
                Some(LoadedDataset {
                    clips: cache.clips.into_iter().map(|c| (c.id.clone(), c)).collect(),
                    summary: cache.summary,
                    names,
                })
            }
            None => None,
        };
        let labels = match (&dataset, config.labels_path()) {
            (Some(ds), Some(path)) => Some(LabelWriter::spawn(LabelStore::open(
                path,
                ds.summary.seq_len,
                ds.summary.classes,
            )?)),
            _ => None,
        };
        let model = match (&config.checkpoint, &config.atlas) {
            (Some(ck), Some(atlas_path)) => {
                let (model, params, manifest) = load_model(ck)?;
                let text = fs::read_to_string(atlas_path).map_err(|e| Error::io(atlas_path, e))?;
                let atlas = LatentAtlas::from_json(&text)?;
                check_model(&model, &atlas, dataset.as_ref())?;
                let atlas_sha256 = atlas.sha256()?;
                Some(Arc::new(LoadedModel {
                    model,
                    params,
                    manifest,
                    atlas,
                    atlas_sha256,
                }))
            }
            (Some(_), None) => return Err(Error::Config("a checkpoint needs an atlas file".into())),
            (None, _) => None,
        };
        Ok(Self {
            dataset,
            labels,
            model,
            generation: Mutex::new(()),
            config,
        })
    }

    pub fn class_names(&self) -> Option<ClassNames> {
        if let Some(ds) = &self.dataset {
            return Some(ds.names.clone());
        }
        self.model
            .as_ref()
            .map(|m| ClassNames::default_for(m.model.config().classes))
    }
}

fn check_model(model: &Model, atlas: &LatentAtlas, dataset: Option<&LoadedDataset>) -> Result<()> {
    let cfg = model.config();
    if atlas.latent_dim != cfg.latent_dim || atlas.class_count() != cfg.classes {
        return Err(Error::Config("atlas does not match the checkpoint's model".into()));
    }
    if let Some(ds) = dataset {
        let s = &ds.summary;
        if (s.seq_len, s.joints, s.classes) != (cfg.seq_len, cfg.joints, cfg.classes) {
            return Err(Error::Config(format!(
                "checkpoint expects T={} J={} k={}, dataset has T={} J={} k={}",
                cfg.seq_len, cfg.joints, cfg.classes, s.seq_len, s.joints, s.classes
            )));
        }
    }
    Ok(())
}
