#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use mlndash::api::GenerationHook;
use mlndash::{router, AppState, ServiceConfig};
use mlndash_core::demo::{self, DemoLayout};

pub const SPRING: &str = "feature=new_cases&pa=2020-02-18:2020-03-02&pb=2020-03-20:2020-04-02";
pub const VACCINATION: &str = "feature=new_cases&pa=2021-01-20:2021-01-22&pb=2021-02-21:2021-02-23";

/// A demo data set in a temporary directory.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub layout: DemoLayout,
}

impl Fixture {
    pub fn new() -> Self {
        Self::with_size(demo::DEFAULT_COUNTIES_PER_STATE)
    }

    pub fn with_size(counties_per_state: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let layout = demo::generate(&dir.path().join("demo"), demo::DEFAULT_SEED, counties_per_state).unwrap();
        Self { dir, layout }
    }

    pub fn config(&self, cache_dir: PathBuf) -> ServiceConfig {
        ServiceConfig {
            sources: Some(self.layout.manifest.clone()),
            raw_dir: Some(self.layout.raw_dir.clone()),
            default_seed: 42,
            ..ServiceConfig::new(&self.layout.data_dir, cache_dir)
        }
    }

    pub fn cache_dir(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

pub struct Server {
    pub base: String,
    pub state: Arc<AppState>,
    pub client: reqwest::Client,
    handle: tokio::task::JoinHandle<()>,
}

impl Server {
    pub async fn start(config: ServiceConfig) -> Self {
        Self::start_with(config, None).await
    }

    pub async fn start_with(config: ServiceConfig, hook: Option<GenerationHook>) -> Self {
        let mut state = AppState::new(config).unwrap();
        if let Some(h) = hook {
            state = state.with_generation_hook(h);
        }
        let state = Arc::new(state);
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr: SocketAddr = listener.local_addr().unwrap();
        let app = router(state.clone());
        let handle = tokio::spawn(async move {
            axum::serve(listener, app).await.unwrap();
        });
        Self {
            base: format!("http://{addr}"),
            state,
            client: reqwest::Client::new(),
            handle,
        }
    }

    pub async fn get(&self, path: &str) -> Response {
        Response::from(self.client.get(format!("{}{path}", self.base)).send().await.unwrap()).await
    }

    pub async fn post(&self, path: &str) -> Response {
        Response::from(self.client.post(format!("{}{path}", self.base)).send().await.unwrap()).await
    }

    /// Stops serving and waits until the state is released, so the cache
    /// index is persisted.
    pub async fn stop(self) {
        let Server { state, client, handle, .. } = self;
        drop(client);
        handle.abort();
        let _ = handle.await;
        let mut state = state;
        for _ in 0..200 {
            match Arc::try_unwrap(state) {
                Ok(s) => {
                    drop(s);
                    return;
                }
                Err(s) => {
                    state = s;
                    tokio::time::sleep(std::time::Duration::from_millis(10)).await;
                }
            }
        }
        panic!("server state still shared after shutdown");
    }
}

pub struct Response {
    pub status: u16,
    pub cache: Option<String>,
    pub body: Vec<u8>,
}

impl Response {
    async fn from(r: reqwest::Response) -> Self {
        let status = r.status().as_u16();
        let cache = r
            .headers()
            .get("x-cache")
            .map(|v| v.to_str().unwrap().to_string());
        let body = r.bytes().await.unwrap().to_vec();
        Self { status, cache, body }
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap()
    }
}
