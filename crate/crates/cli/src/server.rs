//! Read-only HTTP service over one scene bundle.
//!
//! | route | reply |
//! |-------|-------|
//! | `GET /api/scene` | grid meta, class table, background, `[[i, j, k, class, instance], ...]` |
//! | `GET /api/render` | the bundle's `view.json`, byte for byte |
//! | `GET /api/instances` | `[{id, class, center, voxel_count, depth}, ...]` |
//! | `POST /api/ground` | `{pixels: [[u, v], ...], eps?, min_pts?, background?}` to a grounding report |
//!
//! Failures come back as 4xx/5xx with `{"error": "..."}`.

use std::net::{Ipv4Addr, SocketAddr};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use og_core::grounding::{GroundingReport, Mask2D};
use og_core::{BackgroundList, ClusterParams, GridMeta};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::bundle::{background, ground_report, SceneBundle};
use crate::commands::ServeArgs;
use crate::{CmdResult, Failure, EXIT_OK};

/// Everything the service answers from, computed once at startup.
pub struct AppState {
    bundle: SceneBundle,
    scene_json: String,
    instances_json: String,
    default_background: BackgroundList,
}

#[derive(Serialize)]
struct SceneInfo<'a> {
    meta: &'a GridMeta,
    classes: &'a [String],
    background: Vec<&'a str>,
    /// `[i, j, k, class, instance]` for every non-empty voxel.
    voxels: Vec<[u32; 5]>,
}

#[derive(Serialize)]
struct InstanceInfo<'a> {
    id: u32,
    class: &'a str,
    /// Voxel-index units.
    center: [f32; 3],
    voxel_count: u32,
    /// Meters from the camera to the nearest member voxel center.
    depth: f64,
}

/// Body of `POST /api/ground`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundRequest {
    pub pixels: Vec<[u32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_pts: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<Vec<String>>,
}

impl AppState {
    pub fn new(bundle: SceneBundle) -> Self {
        let sem = &bundle.sem;
        let meta = sem.meta();
        let table = sem.class_table();
        let default_background = BackgroundList::default_for(table);

        let voxels = sem
            .labels()
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l != 0)
            .map(|(lin, &l)| {
                let [i, j, k] = meta.unflatten(lin);
                [
                    i as u32,
                    j as u32,
                    k as u32,
                    u32::from(l),
                    bundle.instances.ids()[lin],
                ]
            })
            .collect();
        let info = SceneInfo {
            meta,
            classes: table.names(),
            background: default_background
                .ids()
                .filter_map(|id| table.name(id))
                .collect(),
            voxels,
        };
        let scene_json = serde_json::to_string(&info).expect("scene info is always serializable");

        let eye = bundle.camera.position();
        let instances: Vec<InstanceInfo> = bundle
            .instances
            .instances()
            .iter()
            .map(|rec| {
                let depth = bundle
                    .instances
                    .members(rec.id)
                    .into_iter()
                    .map(|v| (meta.voxel_to_world(v).expect("member lies in grid") - eye).norm())
                    .fold(f64::INFINITY, f64::min);
                InstanceInfo {
                    id: rec.id,
                    class: table.name(rec.class).unwrap_or("unknown"),
                    center: rec.center,
                    voxel_count: rec.voxel_count,
                    depth,
                }
            })
            .collect();
        let instances_json =
            serde_json::to_string(&instances).expect("instances are always serializable");

        Self {
            bundle,
            scene_json,
            instances_json,
            default_background,
        }
    }

    /// Answers a grounding request exactly as `og ground` would for the
    /// equivalent mask.
    pub fn ground(&self, req: &GroundRequest) -> CmdResult<GroundingReport> {
        let b = &self.bundle;
        let cam = &b.camera;
        let mask = Mask2D::from_pixels(cam.width(), cam.height(), &req.pixels)?;
        let defaults = ClusterParams::default();
        let params = ClusterParams::new(
            req.eps.unwrap_or(defaults.eps),
            req.min_pts.unwrap_or(defaults.min_pts),
        )?;
        let bg = match &req.background {
            None => self.default_background.clone(),
            Some(names) => background(Some(names), b.sem.class_table())?,
        };
        ground_report(&mask, cam, &b.sem, &b.affinity, &bg, &params)
    }
}

fn json(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    let body = serde_json::json!({ "error": message.into() }).to_string();
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn scene(State(s): State<Arc<AppState>>) -> Response {
    json(s.scene_json.clone())
}

async fn render(State(s): State<Arc<AppState>>) -> Response {
    json(s.bundle.view_json.clone())
}

async fn instances(State(s): State<Arc<AppState>>) -> Response {
    json(s.instances_json.clone())
}

async fn ground(State(s): State<Arc<AppState>>, body: Bytes) -> Response {
    let req: GroundRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    match tokio::task::spawn_blocking(move || s.ground(&req)).await {
        Ok(Ok(report)) => json(report.to_json_string()),
        Ok(Err(f)) => error(StatusCode::BAD_REQUEST, f.message),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn not_found() -> Response {
    error(StatusCode::NOT_FOUND, "no such endpoint")
}

/// True for `http(s)://localhost`, `127.0.0.1` or `[::1]`, any port.
fn is_local_origin(origin: &HeaderValue) -> bool {
    let Ok(origin) = origin.to_str() else {
        return false;
    };
    let Some(rest) = origin
        .strip_prefix("http://")
        .or_else(|| origin.strip_prefix("https://"))
    else {
        return false;
    };
    let host = if rest.starts_with('[') {
        rest.split_inclusive(']').next().unwrap_or(rest)
    } else {
        rest.split(':').next().unwrap_or(rest)
    };
    matches!(host, "localhost" | "127.0.0.1" | "[::1]")
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(|origin, _| is_local_origin(origin)))
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new()
        .route("/api/scene", get(scene))
        .route("/api/render", get(render))
        .route("/api/instances", get(instances))
        .route("/api/ground", post(ground))
        .fallback(not_found)
        .layer(cors)
        .with_state(state)
}

pub fn serve(a: &ServeArgs) -> CmdResult<u8> {
    let bundle = SceneBundle::load(&a.scene)?;
    let state = Arc::new(AppState::new(bundle));
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::io(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async move {
        let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, a.port));
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::io(format!("cannot bind {addr}: {e}")))?;
        let bound = listener.local_addr()?;
        println!("listening on http://{bound}");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(EXIT_OK)
    })
}
