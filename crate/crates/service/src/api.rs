use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use effort_core::diff::RngStream;
use effort_core::generator::{sample_conditional, GenerationManifest, SamplingMode};
use effort_core::labels::{ClassNames, EffortLabel, InsertOutcome, LabelRecord, LabelSource, LabelTable};
use effort_core::motion::{Pose, Sequence};
use effort_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::state::SessionState;

pub const SCHEMA_VERSION: u32 = 1;

type Shared = Arc<SessionState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/dataset/info", get(dataset_info))
        .route("/api/sequence", get(sequence))
        .route("/api/labels", get(labels))
        .route("/api/label", post(save_label))
        .route("/api/generate", post(generate))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not-found", "no such endpoint") })
        .with_state(state)
}

/// Serializes `body` (a JSON object) and stamps it with the schema version.
fn reply(status: StatusCode, body: impl Serialize) -> Response {
    let mut value = serde_json::to_value(body).expect("response bodies serialize");
    if let Value::Object(map) = &mut value {
        map.insert("schema_version".into(), SCHEMA_VERSION.into());
    }
    (status, Json(value)).into_response()
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    details: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }

    fn unavailable(message: &str) -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "unavailable", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "code": self.code, "message": self.message });
        if let Some(d) = self.details {
            error["details"] = d;
        }
        reply(self.status, json!({ "error": error }))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownClass(_) | Error::Config(_) | Error::Precondition(_) => StatusCode::BAD_REQUEST,
            Error::Conflict { .. } => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let code = match status {
            StatusCode::BAD_REQUEST => "bad-request",
            StatusCode::CONFLICT => "conflict",
            _ => "internal",
        };
        let mut err = ApiError::new(status, code, e.to_string());
        if let Error::Conflict { existing, new, .. } = e {
            err.details = Some(json!({ "existing": existing, "requested": new }));
        }
        err
    }
}

type ApiResult = Result<Response, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn parse_query_num(q: &HashMap<String, String>, key: &str) -> Result<Option<usize>, ApiError> {
    q.get(key)
        .map(|v| v.parse().map_err(|_| ApiError::bad_request(format!("{key} must be a non-negative integer"))))
        .transpose()
}

/// A label given as a class index or a class name.
fn parse_label(value: &Value, names: &ClassNames) -> Result<EffortLabel, ApiError> {
    let invalid = || ApiError::bad_request(format!("label must be an index in [0, {}) or one of {:?}", names.len(), names.0));
    match value {
        Value::Number(n) => {
            let i = n.as_u64().ok_or_else(invalid)?;
            EffortLabel::new(i as usize, names.len()).map_err(|_| invalid())
        }
        Value::String(s) => names.parse(s).map_err(|_| invalid()),
        _ => Err(invalid()),
    }
}

#[derive(Serialize)]
struct LabelStats {
    total: usize,
    counts: Vec<usize>,
    /// Absent for an empty table.
    fractions: Option<Vec<f64>>,
    by_source: BTreeMap<&'static str, usize>,
}

fn label_stats(table: &LabelTable) -> LabelStats {
    let h = table.histogram();
    LabelStats {
        total: h.total,
        counts: h.counts,
        fractions: h.fractions,
        by_source: [LabelSource::Manual, LabelSource::BetweenFill, LabelSource::Dilation]
            .into_iter()
            .map(|s| (s.as_str(), table.count_by_source(s)))
            .collect(),
    }
}

#[derive(Serialize)]
struct RecordView<'a> {
    clip: &'a str,
    start: usize,
    len: usize,
    label: usize,
    label_name: &'a str,
    source: &'static str,
    created_at: DateTime<Utc>,
}

fn record_view<'a>(r: &'a LabelRecord, names: &'a ClassNames) -> RecordView<'a> {
    RecordView {
        clip: &r.clip_id,
        start: r.start_frame,
        len: r.seq_len,
        label: r.label.value(),
        label_name: names.name(r.label),
        source: r.source.as_str(),
        created_at: r.created_at,
    }
}

/// `/api/sequence` payload: frames as `[frame][joint][xyz]`.
#[derive(Serialize)]
struct SequencePayload<'a> {
    clip: &'a str,
    start: usize,
    len: usize,
    joints: usize,
    fps: f64,
    frames: &'a [Pose],
    skeleton: &'a [(usize, usize)],
}

async fn health(State(s): State<Shared>) -> Response {
    reply(
        StatusCode::OK,
        json!({
            "status": "ok",
            "dataset_loaded": s.dataset.is_some(),
            "model_loaded": s.model.is_some(),
        }),
    )
}

async fn dataset_info(State(s): State<Shared>) -> ApiResult {
    let ds = s.dataset.as_ref().ok_or_else(|| ApiError::unavailable("no dataset loaded"))?;
    let sm = &ds.summary;
    let table = s.labels.as_ref().map(|l| l.snapshot()).unwrap_or_else(|| LabelTable::new(sm.seq_len, sm.classes));
    Ok(reply(
        StatusCode::OK,
        json!({
            "clips": sm.clips,
            "frames": sm.frames,
            "J": sm.joints,
            "fps": sm.fps,
            "T": sm.seq_len,
            "stride": sm.stride,
            "window_count": sm.window_count,
            "classes": sm.classes,
            "class_names": sm.class_names,
            "clip_list": sm.clip_list,
            "skeleton": sm.skeleton,
            "label_stats": label_stats(&table),
            "model_loaded": s.model.is_some(),
        }),
    ))
}

async fn sequence(State(s): State<Shared>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let ds = s.dataset.as_ref().ok_or_else(|| ApiError::unavailable("no dataset loaded"))?;
    let clip_id = q.get("clip").ok_or_else(|| ApiError::bad_request("clip is required"))?;
    let start = parse_query_num(&q, "start")?.unwrap_or(0);
    let len = parse_query_num(&q, "len")?.unwrap_or(ds.summary.seq_len);
    let clip = ds
        .clip(clip_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown-clip", format!("no clip {clip_id:?}")))?;
    if len == 0 || start.checked_add(len).is_none_or(|end| end > clip.len()) {
        return Err(ApiError::new(
            StatusCode::RANGE_NOT_SATISFIABLE,
            "out-of-range",
            format!("frames {start}..{} outside clip of {} frames", start.saturating_add(len), clip.len()),
        ));
    }
    Ok(reply(
        StatusCode::OK,
        SequencePayload {
            clip: clip_id,
            start,
            len,
            joints: clip.joint_count(),
            fps: clip.fps,
            frames: &clip.frames[start..start + len],
            skeleton: &ds.summary.skeleton,
        },
    ))
}

async fn labels(State(s): State<Shared>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let ds = s.dataset.as_ref().ok_or_else(|| ApiError::unavailable("no dataset loaded"))?;
    let writer = s.labels.as_ref().ok_or_else(|| ApiError::unavailable("no label store"))?;
    let table = writer.snapshot();
    let records: Vec<RecordView> = match q.get("clip") {
        Some(c) => table.records_in_clip(c).map(|r| record_view(r, &ds.names)).collect(),
        None => table.records().map(|r| record_view(r, &ds.names)).collect(),
    };
    Ok(reply(StatusCode::OK, json!({ "records": records, "label_stats": label_stats(&table) })))
}

#[derive(Deserialize)]
struct LabelRequest {
    clip: String,
    start: usize,
    len: Option<usize>,
    label: Value,
    #[serde(default)]
    overwrite: bool,
    /// Accepted and echoed; labels are not attributed yet.
    annotator: Option<String>,
}

async fn save_label(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let ds = s.dataset.as_ref().ok_or_else(|| ApiError::unavailable("no dataset loaded"))?;
    let writer = s.labels.as_ref().ok_or_else(|| ApiError::unavailable("no label store"))?;
    let req: LabelRequest = parse_body(&body)?;
    let sm = &ds.summary;
    let label = parse_label(&req.label, &ds.names)?;
    let clip = ds
        .clip(&req.clip)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown-clip", format!("no clip {:?}", req.clip)))?;
    let len = req.len.unwrap_or(sm.seq_len);
    if len != sm.seq_len {
        return Err(ApiError::bad_request(format!("labels cover whole windows of {} frames", sm.seq_len)));
    }
    if req.start + len > clip.len() {
        return Err(ApiError::new(StatusCode::RANGE_NOT_SATISFIABLE, "out-of-range", "window extends past the clip"));
    }
    if req.start % sm.stride != 0 {
        return Err(ApiError::bad_request(format!("start must be a multiple of the stride {}", sm.stride)));
    }
    let record = LabelRecord::manual(req.clip, req.start, sm.seq_len, label);
    let (outcome, stored) = writer.save(record, req.overwrite).await?;
    let (status, outcome) = match outcome {
        InsertOutcome::Inserted => (StatusCode::CREATED, "inserted"),
        InsertOutcome::Replaced => (StatusCode::OK, "replaced"),
        InsertOutcome::Unchanged => (StatusCode::OK, "unchanged"),
    };
    Ok(reply(
        status,
        json!({
            "record": record_view(&stored, &ds.names),
            "outcome": outcome,
            "annotator": req.annotator,
        }),
    ))
}

#[derive(Deserialize)]
struct GenerateRequest {
    label: Value,
    count: Option<usize>,
    seed: Option<u64>,
    #[serde(default)]
    sampling: SamplingMode,
}

#[derive(Serialize)]
struct GeneratedPayload {
    clip: String,
    start: usize,
    len: usize,
    joints: usize,
    fps: f64,
    frames: Vec<Pose>,
    skeleton: Vec<(usize, usize)>,
}

fn time_seed() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
}

async fn generate(State(s): State<Shared>, body: Bytes) -> ApiResult {
    let loaded = s.model.clone().ok_or_else(|| ApiError::unavailable("no model loaded"))?;
    let req: GenerateRequest = parse_body(&body)?;
    let names = s.class_names().expect("a loaded model implies class names");
    let label = parse_label(&req.label, &names)?;
    let count = req.count.unwrap_or(1);
    if count == 0 || count > s.config.max_generate {
        return Err(ApiError::bad_request(format!("count must be in 1..={}", s.config.max_generate)));
    }
    if let SamplingMode::Kde { bandwidth } = req.sampling {
        if !(bandwidth >= 0.0 && bandwidth.is_finite()) {
            return Err(ApiError::bad_request("bandwidth must be a finite non-negative number"));
        }
    }
    let seed = req.seed.unwrap_or_else(time_seed);

    let _turn = s.generation.lock().await;
    let model = Arc::clone(&loaded);
    let sequences: Vec<Sequence> = tokio::task::spawn_blocking(move || {
        let mut rng = RngStream::new(seed);
        sample_conditional(&model.model, &model.params, &model.atlas, label.value(), count, req.sampling, &mut rng)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;

    let (fps, skeleton) = match &s.dataset {
        Some(ds) => (ds.summary.fps, ds.summary.skeleton.clone()),
        None => (35.0, Vec::new()),
    };
    let joints = loaded.model.config().joints;
    let manifest = GenerationManifest {
        label: Some(label.value()),
        labels: vec![label.value(); count],
        seed,
        count,
        source: "conditional".into(),
        sampling: Some(req.sampling),
        atlas_sha256: Some(loaded.atlas_sha256.clone()),
        checkpoint_sha256: Some(loaded.manifest.tensors_sha256.clone()),
        files: Vec::new(),
    };
    let payload: Vec<GeneratedPayload> = sequences
        .into_iter()
        .map(|seq| GeneratedPayload {
            clip: seq.clip_id,
            start: seq.start_frame,
            len: seq.poses.len(),
            joints,
            fps,
            frames: seq.poses,
            skeleton: skeleton.clone(),
        })
        .collect();
    Ok(reply(
        StatusCode::OK,
        json!({
            "label": label.value(),
            "label_name": names.name(label),
            "count": count,
            "seed": seed,
            "sequences": payload,
            "manifest": manifest,
        }),
    ))
}
