//! Local HTTP service over one campaign.
//!
//! [`Service::handle`] maps an [`ApiRequest`] to an [`ApiResponse`] and
//! holds all routing and state logic, so it can be driven directly from
//! tests or scripts. [`serve`] binds it to a socket with axum.
//!
//! Every JSON response is an envelope: `{"ok":true,"data":...}` or
//! `{"ok":false,"error":{"code":...,"message":...}}`.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::campaign::{BoxOrigin, CampaignState, CampaignStore, ImageStatus};
use crate::error::{Error, Result};
use crate::events::{Operation, OperationEvent, StageTag};
use crate::split::Plan;
use crate::workload::TimingModel;

const REQUESTS_FILE: &str = "requests.log";
const DEFAULT_SESSION: &str = "api";
const DEFAULT_PAGE_SIZE: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct ApiRequest {
    pub method: String,
    /// Path with optional query string, e.g. `/api/images?fold=2`.
    pub path: String,
    pub body: Vec<u8>,
}

impl ApiRequest {
    pub fn get(path: impl Into<String>) -> Self {
        Self {
            method: "GET".into(),
            path: path.into(),
            body: Vec::new(),
        }
    }

    pub fn post(path: impl Into<String>, body: &Value) -> Self {
        Self {
            method: "POST".into(),
            path: path.into(),
            body: serde_json::to_vec(body).expect("json value serializes"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl ApiResponse {
    fn ok(data: Value) -> Self {
        Self::json(200, json!({ "ok": true, "data": data }))
    }

    fn fail(status: u16, code: &str, message: impl Into<String>) -> Self {
        Self::json(
            status,
            json!({ "ok": false, "error": { "code": code, "message": message.into() } }),
        )
    }

    fn json(status: u16, v: Value) -> Self {
        Self {
            status,
            content_type: "application/json".into(),
            body: serde_json::to_vec(&v).expect("json value serializes"),
        }
    }

    fn from_error(e: &Error) -> Self {
        let (status, code) = match e {
            Error::UnknownImage(_) => (404, "not_found"),
            Error::StaleReference { .. } => (409, "stale_reference"),
            Error::ImageDone(_) => (409, "image_done"),
            Error::WrongStage { .. } => (409, "wrong_stage"),
            Error::FoldViolation { .. } => (409, "fold_violation"),
            Error::LogIntegrity(_) => (409, "log_integrity"),
            Error::Incomplete { .. } => (409, "incomplete"),
            Error::Io { .. } => (500, "io"),
            _ => (400, "bad_request"),
        };
        Self::fail(status, code, e.to_string())
    }

    /// Parsed JSON body; `Value::Null` for non-JSON responses.
    pub fn json_body(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or(Value::Null)
    }
}

/// Source of server-side event timestamps.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> i64;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> i64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(0)
    }
}

/// Clock that always reads the same instant.
pub struct FixedClock(pub i64);

impl Clock for FixedClock {
    fn now_ms(&self) -> i64 {
        self.0
    }
}

/// An event as sent by a client. Fields the server can infer are optional.
#[derive(Debug, Clone, Deserialize)]
struct ClientEvent {
    #[serde(flatten)]
    op: Operation,
    #[serde(default)]
    ts_ms: Option<i64>,
    #[serde(default)]
    session_id: Option<String>,
    #[serde(default)]
    image_id: Option<u64>,
    #[serde(default)]
    stage_tag: Option<StageTag>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperationsBody {
    request_id: String,
    events: Vec<ClientEvent>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AcceptBody {
    #[serde(default)]
    request_id: Option<String>,
    #[serde(default)]
    ts_ms: Option<i64>,
    #[serde(default)]
    session_id: Option<String>,
}

struct Writer {
    state: CampaignState,
    store: Option<CampaignStore>,
    /// request id -> image id of every applied mutation
    seen: HashMap<String, u64>,
}

/// A campaign exposed over HTTP. Mutations go through one writer lock;
/// reads clone an `Arc` of the last committed state and never wait on a
/// mutation in progress.
pub struct Service {
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<CampaignState>>,
    timing: TimingModel,
    plan: Option<Plan>,
    ui_dir: Option<PathBuf>,
    clock: Box<dyn Clock>,
}

impl Service {
    /// In-memory service; nothing is persisted.
    pub fn new(state: CampaignState, timing: TimingModel) -> Self {
        Self {
            snapshot: RwLock::new(Arc::new(state.clone())),
            writer: Mutex::new(Writer {
                state,
                store: None,
                seen: HashMap::new(),
            }),
            timing,
            plan: None,
            ui_dir: None,
            clock: Box::new(SystemClock),
        }
    }

    /// Service backed by a campaign directory. Applied events are appended
    /// to its log and request ids to `requests.log`.
    pub fn open(store: CampaignStore) -> Result<Self> {
        let (manifest, state) = store.load()?;
        let mut svc = Self::new(state, manifest.timing);
        let path = store.dir().join(REQUESTS_FILE);
        let seen = match fs::read_to_string(&path) {
            Ok(text) => text
                .lines()
                .filter_map(|l| {
                    let (id, image) = l.rsplit_once('\t')?;
                    Some((id.to_string(), image.parse().ok()?))
                })
                .collect(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => HashMap::new(),
            Err(e) => return Err(Error::io(&path, e)),
        };
        let plan_path = store.dir().join("plan.json");
        if plan_path.exists() {
            let bytes = fs::read(&plan_path).map_err(|e| Error::io(&plan_path, e))?;
            svc.plan = Some(Plan::from_json(&bytes)?);
        }
        {
            let w = svc.writer.get_mut().expect("fresh lock");
            w.seen = seen;
            w.store = Some(store);
        }
        Ok(svc)
    }

    pub fn with_plan(mut self, plan: Plan) -> Self {
        self.plan = Some(plan);
        self
    }

    pub fn with_ui_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.ui_dir = Some(dir.into());
        self
    }

    pub fn with_clock(mut self, clock: impl Clock + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    /// Last committed state.
    pub fn state(&self) -> Arc<CampaignState> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn handle(&self, req: &ApiRequest) -> ApiResponse {
        let (path, query) = match req.path.split_once('?') {
            Some((p, q)) => (p, q),
            None => (req.path.as_str(), ""),
        };
        let segments: Vec<&str> = path.trim_matches('/').split('/').collect();
        match (req.method.as_str(), segments.as_slice()) {
            ("GET", ["api", "campaign"]) => self.campaign(),
            ("GET", ["api", "images"]) => self.list_images(query),
            ("GET", ["api", "images", id]) => match parse_id(id) {
                Some(id) => self.image_view(&self.state(), id),
                None => not_found(path),
            },
            ("POST", ["api", "images", id, "operations"]) => match parse_id(id) {
                Some(id) => self.post_operations(id, &req.body),
                None => not_found(path),
            },
            ("POST", ["api", "images", id, "accept"]) => match parse_id(id) {
                Some(id) => self.post_accept(id, &req.body),
                None => not_found(path),
            },
            ("GET", ["api", "workload"]) => self.workload(),
            ("GET", ["api", "plan"]) => match &self.plan {
                Some(plan) => ApiResponse::ok(serde_json::to_value(plan).expect("plan serializes")),
                None => ApiResponse::fail(404, "not_found", "no sweep has been run for this campaign"),
            },
            ("GET", [""]) | ("GET", ["ui"]) => self.static_asset("index.html"),
            ("GET", ["ui", rest @ ..]) => self.static_asset(&rest.join("/")),
            (_, ["api", ..]) if req.method != "GET" && req.method != "POST" => {
                ApiResponse::fail(405, "method_not_allowed", format!("{} not supported", req.method))
            }
            _ => not_found(path),
        }
    }

    fn campaign(&self) -> ApiResponse {
        let st = self.state();
        let stats = st.stats(&self.timing);
        ApiResponse::ok(json!({
            "stage": st.stage(),
            "split_fraction": st.split().fraction,
            "images": {
                "total": st.images().len(),
                "fold1": st.split().fold1_image_ids.len(),
                "fold2": st.split().fold2_image_ids.len(),
            },
            "categories": st.categories(),
            "progress": stats,
        }))
    }

    fn list_images(&self, query: &str) -> ApiResponse {
        let mut fold = None;
        let mut status = None;
        let mut page = 1usize;
        let mut per_page = DEFAULT_PAGE_SIZE;
        for pair in query.split('&').filter(|p| !p.is_empty()) {
            let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
            let bad = || ApiResponse::fail(400, "bad_request", format!("bad query parameter {pair:?}"));
            match k {
                "fold" => match v {
                    "1" => fold = Some(StageTag::Fold1),
                    "2" => fold = Some(StageTag::Fold2),
                    _ => return bad(),
                },
                "status" => match v {
                    "pending" => status = Some(ImageStatus::Pending),
                    "done" => status = Some(ImageStatus::Done),
                    _ => return bad(),
                },
                "page" => match v.parse() {
                    Ok(n) if n >= 1 => page = n,
                    _ => return bad(),
                },
                "per_page" => match v.parse() {
                    Ok(n) if (1..=1000).contains(&n) => per_page = n,
                    _ => return bad(),
                },
                _ => return bad(),
            }
        }
        let st = self.state();
        let matching: Vec<Value> = st
            .images()
            .iter()
            .filter(|im| fold.is_none_or(|f| st.fold_of(im.id) == Some(f)))
            .filter(|im| status.is_none_or(|s| st.status(im.id) == Some(s)))
            .map(|im| {
                json!({
                    "id": im.id,
                    "file_name": im.file_name,
                    "width": im.width,
                    "height": im.height,
                    "sequence_id": im.sequence_id,
                    "frame_index": im.frame_index,
                    "fold": fold_number(st.fold_of(im.id)),
                    "status": st.status(im.id),
                })
            })
            .collect();
        let total = matching.len();
        let items: Vec<Value> = matching.into_iter().skip((page - 1) * per_page).take(per_page).collect();
        ApiResponse::ok(json!({ "page": page, "per_page": per_page, "total": total, "items": items }))
    }

    fn image_view(&self, st: &CampaignState, id: u64) -> ApiResponse {
        let Some(im) = st.image(id) else {
            return ApiResponse::from_error(&Error::UnknownImage(id));
        };
        let boxes: Vec<Value> = st
            .working_set(id)
            .map(|w| {
                w.slots()
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| !s.removed)
                    .map(|(i, s)| {
                        json!({
                            "ref": i,
                            "box": s.label.bbox,
                            "category_id": s.label.category_id,
                            "score": s.label.score,
                            "proposal": matches!(s.origin, BoxOrigin::Proposal(_)),
                        })
                    })
                    .collect()
            })
            .unwrap_or_else(|| {
                st.fold1_annotations()
                    .boxes_for(id)
                    .iter()
                    .map(|b| json!({ "box": b.bbox, "category_id": b.category_id, "proposal": false }))
                    .collect()
            });
        ApiResponse::ok(json!({
            "image": im,
            "fold": fold_number(st.fold_of(id)),
            "status": st.status(id),
            "editable": st.active_fold().is_some() && st.active_fold() == st.fold_of(id)
                && st.status(id) == Some(ImageStatus::Pending),
            "boxes": boxes,
        }))
    }

    fn workload(&self) -> ApiResponse {
        let stats = self.state().stats(&self.timing);
        ApiResponse::ok(json!({
            "estimate": stats.performed,
            "projection": stats.projection,
            "manual_time_s": self.timing.manual_time(self.state().current_annotations().instance_count() as u64),
        }))
    }

    fn post_operations(&self, id: u64, body: &[u8]) -> ApiResponse {
        let body: OperationsBody = match serde_json::from_slice(body) {
            Ok(b) => b,
            Err(e) => return ApiResponse::fail(400, "bad_request", format!("malformed operations body: {e}")),
        };
        if body.request_id.is_empty() {
            return ApiResponse::fail(400, "bad_request", "request_id must not be empty");
        }
        if let Some(other) = body.events.iter().find_map(|e| e.image_id.filter(|&i| i != id)) {
            return ApiResponse::fail(400, "bad_request", format!("event for image {other} posted to image {id}"));
        }
        self.mutate(id, &body.request_id, |svc, st| {
            Ok(body
                .events
                .iter()
                .map(|e| svc.complete_event(st, id, e.op, e.ts_ms, e.session_id.as_deref(), e.stage_tag))
                .collect())
        })
    }

    fn post_accept(&self, id: u64, body: &[u8]) -> ApiResponse {
        let body: AcceptBody = if body.iter().all(|b| b.is_ascii_whitespace()) {
            AcceptBody::default()
        } else {
            match serde_json::from_slice(body) {
                Ok(b) => b,
                Err(e) => return ApiResponse::fail(400, "bad_request", format!("malformed accept body: {e}")),
            }
        };
        let request_id = body.request_id.clone().unwrap_or_default();
        self.mutate(id, &request_id, |svc, st| {
            Ok(vec![svc.complete_event(
                st,
                id,
                Operation::AcceptAll,
                body.ts_ms,
                body.session_id.as_deref(),
                None,
            )])
        })
    }

    /// Fills in server-side defaults. Server timestamps never run behind
    /// the session's last event.
    fn complete_event(
        &self,
        st: &CampaignState,
        image_id: u64,
        op: Operation,
        ts_ms: Option<i64>,
        session_id: Option<&str>,
        stage_tag: Option<StageTag>,
    ) -> OperationEvent {
        let session_id = session_id.unwrap_or(DEFAULT_SESSION).to_string();
        let ts_ms = ts_ms.unwrap_or_else(|| {
            let last = st
                .log()
                .iter()
                .rev()
                .find(|e| e.session_id == session_id)
                .map_or(i64::MIN, |e| e.ts_ms);
            self.clock.now_ms().max(last)
        });
        let stage_tag = stage_tag
            .or_else(|| st.active_fold())
            .or_else(|| st.fold_of(image_id))
            .unwrap_or(StageTag::Fold2);
        OperationEvent {
            ts_ms,
            session_id,
            image_id,
            op,
            stage_tag,
        }
    }

    fn mutate(
        &self,
        id: u64,
        request_id: &str,
        build: impl FnOnce(&Self, &CampaignState) -> Result<Vec<OperationEvent>>,
    ) -> ApiResponse {
        let mut w = self.writer.lock().expect("writer lock");
        if w.state.image(id).is_none() {
            return ApiResponse::from_error(&Error::UnknownImage(id));
        }
        if !request_id.is_empty() {
            match w.seen.get(request_id) {
                Some(&seen_image) if seen_image == id => return self.image_view(&w.state, id),
                Some(&seen_image) => {
                    return ApiResponse::fail(
                        409,
                        "request_reused",
                        format!("request id {request_id:?} was used for image {seen_image}"),
                    )
                }
                None => {}
            }
        }
        let events = match build(self, &w.state) {
            Ok(ev) => ev,
            Err(e) => return ApiResponse::from_error(&e),
        };
        let mut next = w.state.clone();
        if let Err(e) = next.apply_operations(&events) {
            return ApiResponse::from_error(&e);
        }
        if let Some(store) = &w.store {
            if let Err(e) = store.append(&events) {
                return ApiResponse::from_error(&e);
            }
            if !request_id.is_empty() {
                if let Err(e) = append_request(store.dir(), request_id, id) {
                    return ApiResponse::from_error(&e);
                }
            }
        }
        if !request_id.is_empty() {
            w.seen.insert(request_id.to_string(), id);
        }
        w.state = next;
        *self.snapshot.write().expect("snapshot lock") = Arc::new(w.state.clone());
        self.image_view(&w.state, id)
    }

    fn static_asset(&self, rel: &str) -> ApiResponse {
        let rel = if rel.is_empty() { "index.html" } else { rel };
        let Some(dir) = &self.ui_dir else {
            return if rel == "index.html" {
                ApiResponse {
                    status: 200,
                    content_type: "text/html; charset=utf-8".into(),
                    body: PLACEHOLDER_INDEX.as_bytes().to_vec(),
                }
            } else {
                not_found(rel)
            };
        };
        let rel_path = Path::new(rel);
        if rel_path.components().any(|c| !matches!(c, Component::Normal(_))) {
            return not_found(rel);
        }
        let path = dir.join(rel_path);
        match fs::read(&path) {
            Ok(body) => ApiResponse {
                status: 200,
                content_type: content_type(&path).into(),
                body,
            },
            Err(_) => not_found(rel),
        }
    }
}

const PLACEHOLDER_INDEX: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>twofold</title></head>\n<body><h1>twofold</h1><p>No UI bundle configured. The JSON API is under <code>/api/</code>.</p></body></html>\n";

fn append_request(dir: &Path, request_id: &str, image_id: u64) -> Result<()> {
    let path = dir.join(REQUESTS_FILE);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    writeln!(f, "{}\t{image_id}", request_id.replace(['\t', '\n'], " ")).map_err(|e| Error::io(&path, e))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("jpg") | Some("jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    }
}

fn parse_id(s: &str) -> Option<u64> {
    s.parse().ok()
}

fn fold_number(tag: Option<StageTag>) -> Option<u8> {
    tag.map(|t| match t {
        StageTag::Fold1 => 1,
        StageTag::Fold2 => 2,
    })
}

fn not_found(path: &str) -> ApiResponse {
    ApiResponse::fail(404, "not_found", format!("no route for {path}"))
}

/// Summary of a listening server, returned once it is bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Bound {
    pub addr: SocketAddr,
}

/// Serves `service` on `addr` until the process is stopped. `on_bound`
/// runs once the socket is listening.
pub async fn serve(service: Arc<Service>, addr: SocketAddr, on_bound: impl FnOnce(Bound)) -> Result<()> {
    use axum::body::{to_bytes, Body};
    use axum::http::{header, Request, Response, StatusCode};

    let app = axum::Router::new().fallback(move |req: Request<Body>| {
        let service = service.clone();
        async move {
            let method = req.method().to_string();
            let path = req
                .uri()
                .path_and_query()
                .map_or_else(|| req.uri().path().to_string(), |pq| pq.as_str().to_string());
            let body = match to_bytes(req.into_body(), 16 << 20).await {
                Ok(b) => b.to_vec(),
                Err(e) => {
                    let r = ApiResponse::fail(400, "bad_request", format!("unreadable body: {e}"));
                    return to_http(r);
                }
            };
            let resp = tokio::task::spawn_blocking(move || service.handle(&ApiRequest { method, path, body }))
                .await
                .unwrap_or_else(|e| ApiResponse::fail(500, "internal", e.to_string()));
            to_http(resp)
        }
    });

    fn to_http(r: ApiResponse) -> Response<Body> {
        Response::builder()
            .status(StatusCode::from_u16(r.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR))
            .header(header::CONTENT_TYPE, r.content_type)
            .body(Body::from(r.body))
            .expect("valid response parts")
    }

    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(PathBuf::from(addr.to_string()), e))?;
    let local = listener
        .local_addr()
        .map_err(|e| Error::io(PathBuf::from(addr.to_string()), e))?;
    log::info!("listening on http://{local}");
    on_bound(Bound { addr: local });
    axum::serve(listener, app)
        .await
        .map_err(|e| Error::io(PathBuf::from(local.to_string()), e))
}
