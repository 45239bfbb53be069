//! HTTP routes and the request pipeline behind them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{RawQuery, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mlndash_core::ingestion::{
    filter_articles, latest_ticker, load_manifest, refresh, HttpFetcher, IngestError, RefreshReport,
};
use mlndash_core::mln::{run_analysis, AnalysisConfig, AnalysisInputs, MlnError, SUPPORTED_FEATURES};
use mlndash_core::viz::{
    canonical_key, generate_map_payload, generate_timeline_payload, CacheError, CacheStatus,
    VizCache, VizError, VizKind, VizRequest, MAX_TIMELINE_STATES,
};
use mlndash_core::{DateRange, Period, PeriodError};
use parking_lot::RwLock;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{info, warn};

use crate::config::ServiceConfig;
use crate::error::{ApiError, ApiResult};
use crate::snapshot::DataSnapshot;

pub const CACHE_HEADER: &str = "x-cache";
pub const DEFAULT_ARTICLES: usize = 10;

/// Called on the generating thread right before a visualization is built on
/// a cache miss. Used for instrumentation and tests.
pub type GenerationHook = Arc<dyn Fn(VizKind) + Send + Sync>;

/// Shared service state: configuration, the current data snapshot and the
/// visualization cache.
pub struct AppState {
    config: ServiceConfig,
    data: RwLock<Arc<DataSnapshot>>,
    cache: VizCache,
    refresh_lock: tokio::sync::Mutex<()>,
    hook: Option<GenerationHook>,
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("loading data: {0}")]
    Data(#[from] IngestError),
    #[error("opening cache: {0}")]
    Cache(#[from] CacheError),
}

/// Outcome of [`AppState::refresh_now`].
#[derive(Debug, Serialize)]
pub struct RefreshOutcome {
    /// The served data changed.
    pub reloaded: bool,
    pub data_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<RefreshReport>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Result<Self, StartupError> {
        config.validate()?;
        let data = DataSnapshot::load(&config.data_dir)?;
        let cache = VizCache::open(&config.cache_dir, config.cache_max_entries)?;
        Ok(Self {
            config,
            data: RwLock::new(Arc::new(data)),
            cache,
            refresh_lock: tokio::sync::Mutex::new(()),
            hook: None,
        })
    }

    pub fn with_generation_hook(mut self, hook: GenerationHook) -> Self {
        self.hook = Some(hook);
        self
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn cache(&self) -> &VizCache {
        &self.cache
    }

    pub fn snapshot(&self) -> Arc<DataSnapshot> {
        self.data.read().clone()
    }

    /// Re-reads `data_dir` and swaps in the new snapshot if its content
    /// differs. Readers holding the old snapshot keep using it.
    pub fn reload(&self) -> Result<bool, IngestError> {
        let fresh = DataSnapshot::load(&self.config.data_dir)?;
        let mut slot = self.data.write();
        if slot.digest == fresh.digest {
            return Ok(false);
        }
        *slot = Arc::new(fresh);
        Ok(true)
    }

    /// Runs the ingestion refresh if a source manifest is configured, then
    /// reloads the data. Blocking.
    pub fn refresh_now(&self) -> Result<RefreshOutcome, IngestError> {
        let report = match &self.config.sources {
            Some(manifest) => {
                let sources = load_manifest(manifest)?;
                Some(refresh(
                    &sources,
                    &self.config.raw_dir(),
                    &self.config.data_dir,
                    &HttpFetcher::default(),
                )?)
            }
            None => None,
        };
        let reloaded = self.reload()?;
        Ok(RefreshOutcome {
            reloaded,
            data_digest: self.snapshot().digest.clone(),
            report,
        })
    }

    /// [`AppState::refresh_now`] on the blocking pool, serialized with other
    /// refreshes.
    pub async fn refresh(self: &Arc<Self>) -> Result<RefreshOutcome, ApiError> {
        let _exclusive = self.refresh_lock.lock().await;
        let st = self.clone();
        tokio::task::spawn_blocking(move || st.refresh_now())
            .await
            .map_err(ApiError::internal)?
            .map_err(ApiError::internal)
    }

    fn before_generate(&self, kind: VizKind) {
        if let Some(hook) = &self.hook {
            hook(kind);
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/map", get(map))
        .route("/api/v1/timeline", get(timeline))
        .route("/api/v1/ticker", get(ticker))
        .route("/api/v1/articles", get(articles))
        .route("/admin/refresh", post(admin_refresh))
        .route("/admin/invalidate", post(admin_invalidate))
        .route("/healthz", get(healthz))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(state)
}

/// Periodically runs [`AppState::refresh`].
pub fn spawn_refresh_timer(state: Arc<AppState>) -> tokio::task::JoinHandle<()> {
    let every = state.config.refresh_interval;
    tokio::spawn(async move {
        let mut ticks = tokio::time::interval(every);
        ticks.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        ticks.tick().await;
        loop {
            ticks.tick().await;
            match state.refresh().await {
                Ok(o) => info!(reloaded = o.reloaded, digest = %o.data_digest, "scheduled refresh"),
                Err(e) => warn!("scheduled refresh failed: {}", e.detail),
            }
        }
    })
}

async fn not_found() -> ApiError {
    ApiError::not_found("no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError {
        status: StatusCode::METHOD_NOT_ALLOWED,
        code: "method_not_allowed",
        detail: "method not allowed for this route".into(),
    }
}

type Params = BTreeMap<String, String>;

/// Decodes a query string, rejecting unknown and repeated parameters.
fn parse_query(raw: Option<String>, allowed: &[&str]) -> ApiResult<Params> {
    let mut out = Params::new();
    for (name, value) in form_urlencoded::parse(raw.unwrap_or_default().as_bytes()) {
        if !allowed.contains(&name.as_ref()) {
            return Err(ApiError::bad_request(
                "unknown_parameter",
                format!("unknown parameter {name:?}; expected one of {}", allowed.join(", ")),
            ));
        }
        if out.insert(name.to_string(), value.into_owned()).is_some() {
            return Err(ApiError::bad_request(
                "invalid_parameter",
                format!("parameter {name:?} given more than once"),
            ));
        }
    }
    Ok(out)
}

fn required<'a>(params: &'a Params, name: &str) -> ApiResult<&'a str> {
    params
        .get(name)
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ApiError::bad_request("missing_parameter", format!("parameter {name:?} is required")))
}

fn parse_range(params: &Params, name: &str) -> ApiResult<DateRange> {
    required(params, name)?
        .parse()
        .map_err(|e: PeriodError| ApiError::bad_request("invalid_period", format!("{name}: {e}")))
}

fn parse_period(params: &Params, name: &str) -> ApiResult<Period> {
    Period::try_from(parse_range(params, name)?)
        .map_err(|e| ApiError::bad_request("invalid_period", format!("{name}: {e}")))
}

fn period_pair_error(e: PeriodError) -> ApiError {
    match e {
        PeriodError::Overlap => ApiError::bad_request("periods_overlap", "periods overlap"),
        PeriodError::Order => ApiError::bad_request("period_order", e.to_string()),
        other => ApiError::bad_request("invalid_period", other.to_string()),
    }
}

fn viz_error(e: &VizError) -> ApiError {
    let detail = e.to_string();
    match e {
        VizError::UnknownFeature(_) => ApiError::bad_request("unknown_feature", detail),
        VizError::UnknownState(_) => ApiError::bad_request("unknown_state", detail),
        VizError::TooManyStates(_) => ApiError::bad_request("too_many_states", detail),
        VizError::DuplicateState(_) => ApiError::bad_request("duplicate_state", detail),
        VizError::NoStates => ApiError::bad_request("missing_parameter", detail),
        VizError::BadParam { .. } | VizError::UnknownKind(_) | VizError::NotCanonical => {
            ApiError::bad_request("invalid_parameter", detail)
        }
        VizError::EmptyAllocation | VizError::DuplicateFips(_) => ApiError::internal(detail),
    }
}

fn cache_error(e: CacheError) -> ApiError {
    match &e {
        CacheError::Request(v) => viz_error(v),
        CacheError::Generation(g) => {
            if let Some(v) = g.inner().downcast_ref::<VizError>() {
                viz_error(v)
            } else if let Some(PipelineError::Viz(v)) = g.inner().downcast_ref::<PipelineError>() {
                viz_error(v)
            } else {
                ApiError::internal(e)
            }
        }
        _ => ApiError::internal(e),
    }
}

fn payload_response(bytes: Vec<u8>, status: CacheStatus) -> Response {
    let mut resp = (
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        bytes,
    )
        .into_response();
    resp.headers_mut()
        .insert(CACHE_HEADER, HeaderValue::from_static(status.as_str()));
    resp
}

/// Validated parameters of a map request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapQuery {
    pub feature: String,
    pub period_a: Period,
    pub period_b: Period,
}

impl MapQuery {
    pub fn new(feature: &str, period_a: Period, period_b: Period) -> ApiResult<Self> {
        let feature = feature.trim().to_lowercase();
        if !SUPPORTED_FEATURES.contains(&feature.as_str()) {
            return Err(ApiError::bad_request(
                "unknown_feature",
                format!("unknown feature {feature}; supported: {}", SUPPORTED_FEATURES.join(", ")),
            ));
        }
        period_a.check_pair(&period_b).map_err(period_pair_error)?;
        Ok(Self {
            feature,
            period_a,
            period_b,
        })
    }

    fn from_params(params: &Params) -> ApiResult<Self> {
        let (pa, pb) = (parse_period(params, "pa")?, parse_period(params, "pb")?);
        Self::new(required(params, "feature")?, pa, pb)
    }

    pub fn request(&self) -> Result<VizRequest, VizError> {
        VizRequest::map(&self.feature, self.period_a.range(), self.period_b.range())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Mln(#[from] MlnError),
    #[error(transparent)]
    Viz(#[from] VizError),
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
}

fn write_work_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let io = |e| PipelineError::Io(path.to_path_buf(), e);
    std::fs::create_dir_all(path.parent().expect("work files live in a directory")).map_err(io)?;
    std::fs::write(path, bytes).map_err(io)
}

/// Builds a map payload: writes the analysis configuration file, runs the
/// community analysis on `data`, keeps the allocation file and renders the
/// payload. Work files go under `work_dir`, named by the request key.
pub fn generate_map(
    data: &DataSnapshot,
    query: &MapQuery,
    seed: u64,
    work_dir: &Path,
) -> Result<Vec<u8>, PipelineError> {
    let key = canonical_key(&query.request()?)?;
    let stem = hex::encode(Sha256::digest(key.as_bytes()));
    let config = AnalysisConfig::new(
        &query.feature,
        query.period_a,
        query.period_b,
        AnalysisInputs {
            counties: data.data_dir.join(mlndash_core::ingestion::COUNTIES_FILE),
            census: data.data_dir.join(mlndash_core::ingestion::CENSUS_FILE),
        },
        seed,
    );
    write_work_file(
        &work_dir.join("analysis").join(format!("{stem}.json")),
        config.to_json().as_bytes(),
    )?;
    let output = run_analysis(&config, &data.counties, &data.census)?;
    write_work_file(
        &work_dir.join("communities").join(format!("{stem}.csv")),
        &output.allocation.to_csv_bytes(),
    )?;
    let title = format!(
        "Change in {} from {} to {}",
        query.feature.replace('_', " "),
        query.period_a,
        query.period_b
    );
    Ok(generate_map_payload(&output.allocation, &title)?.to_json())
}

async fn map(State(st): State<Arc<AppState>>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let params = parse_query(raw, &["feature", "pa", "pb"])?;
    let query = MapQuery::from_params(&params)?;
    let req = query.request().map_err(|e| viz_error(&e))?;
    let data = st.snapshot();
    let state = st.clone();
    let (bytes, status) = tokio::task::spawn_blocking(move || {
        state.cache.get_or_generate(&req, || {
            state.before_generate(VizKind::Map);
            generate_map(&data, &query, state.config.default_seed, &state.config.cache_dir)
        })
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(cache_error)?;
    Ok(payload_response(bytes, status))
}

/// Validated parameters of a timeline request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimelineQuery {
    /// Sorted and unique.
    pub states: Vec<String>,
    pub left: String,
    pub right: String,
    pub range: DateRange,
}

impl TimelineQuery {
    fn from_params(params: &Params) -> ApiResult<Self> {
        let states: Vec<String> = required(params, "states")?
            .split(',')
            .map(|s| s.trim().to_uppercase())
            .filter(|s| !s.is_empty())
            .collect();
        if states.len() > MAX_TIMELINE_STATES {
            return Err(viz_error(&VizError::TooManyStates(states.len())));
        }
        let mut sorted = states.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(viz_error(&VizError::DuplicateState(w[0].clone())));
        }
        Ok(Self {
            states: sorted,
            left: required(params, "left")?.to_lowercase(),
            right: required(params, "right")?.to_lowercase(),
            range: parse_range(params, "range")?,
        })
    }

    pub fn request(&self) -> Result<VizRequest, VizError> {
        VizRequest::timeline(&self.states, &self.left, &self.right, self.range)
    }
}

pub fn generate_timeline(data: &DataSnapshot, query: &TimelineQuery) -> Result<Vec<u8>, VizError> {
    generate_timeline_payload(&data.states, &query.states, &query.left, &query.right, query.range)
        .map(|p| p.to_json())
}

async fn timeline(State(st): State<Arc<AppState>>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let params = parse_query(raw, &["states", "left", "right", "range"])?;
    let query = TimelineQuery::from_params(&params)?;
    let req = query.request().map_err(|e| viz_error(&e))?;
    let data = st.snapshot();
    let state = st.clone();
    let (bytes, status) = tokio::task::spawn_blocking(move || {
        state.cache.get_or_generate(&req, || {
            state.before_generate(VizKind::Timeline);
            generate_timeline(&data, &query)
        })
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(cache_error)?;
    Ok(payload_response(bytes, status))
}

async fn ticker(State(st): State<Arc<AppState>>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let params = parse_query(raw, &["states"])?;
    let regions: Vec<String> = params
        .get("states")
        .map(|s| {
            s.split(',')
                .map(|r| r.trim().to_uppercase())
                .filter(|r| !r.is_empty())
                .collect()
        })
        .unwrap_or_default();
    let data = st.snapshot();
    match latest_ticker(&regions, &data.ticker_cases, &data.ticker_deaths) {
        Ok(rows) => Ok(Json(rows).into_response()),
        Err(e @ IngestError::UnknownRegion(_)) => Err(ApiError::bad_request("unknown_region", e.to_string())),
        Err(e) => Err(ApiError::internal(e)),
    }
}

async fn articles(State(st): State<Arc<AppState>>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let params = parse_query(raw, &["period", "pa", "pb", "k"])?;
    let period = if params.contains_key("period") {
        parse_range(&params, "period")?
    } else if params.contains_key("pa") || params.contains_key("pb") {
        let (a, b) = (parse_range(&params, "pa")?, parse_range(&params, "pb")?);
        if b.start() >= a.start() { b } else { a }
    } else {
        return Err(ApiError::bad_request(
            "missing_parameter",
            "give either \"period\" or both \"pa\" and \"pb\"",
        ));
    };
    let k = match params.get("k") {
        None => DEFAULT_ARTICLES,
        Some(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|k| *k >= 1)
            .ok_or_else(|| ApiError::bad_request("invalid_parameter", "k must be a positive integer"))?,
    };
    let data = st.snapshot();
    filter_articles(&data.articles, &period, &st.config.keyword_list, k)
        .map(|list| Json(list).into_response())
        .map_err(ApiError::internal)
}

async fn admin_refresh(State(st): State<Arc<AppState>>) -> ApiResult<Response> {
    let outcome = st.refresh().await?;
    Ok(Json(outcome).into_response())
}

async fn admin_invalidate(State(st): State<Arc<AppState>>, RawQuery(raw): RawQuery) -> ApiResult<Response> {
    let params = parse_query(raw, &["kind"])?;
    let kinds: Vec<VizKind> = match params.get("kind") {
        None => VizKind::ALL.to_vec(),
        Some(k) => vec![k
            .parse()
            .map_err(|e: VizError| ApiError::bad_request("invalid_parameter", e.to_string()))?],
    };
    let st2 = st.clone();
    let removed = tokio::task::spawn_blocking(move || {
        kinds
            .into_iter()
            .map(|k| st2.cache.invalidate(k).map(|n| (k.dir_name(), n)))
            .collect::<Result<BTreeMap<_, _>, _>>()
    })
    .await
    .map_err(ApiError::internal)?
    .map_err(ApiError::internal)?;
    Ok(Json(json!({ "removed": removed })).into_response())
}

async fn healthz(State(st): State<Arc<AppState>>) -> Response {
    let data = st.snapshot();
    Json(json!({
        "status": "ok",
        "data_digest": data.digest,
        "counties": data.counties.len(),
        "cached": {
            "map": st.cache.len(VizKind::Map),
            "timeline": st.cache.len(VizKind::Timeline),
        },
    }))
    .into_response()
}
