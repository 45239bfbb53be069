mod common;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Mutex};

use common::{Fixture, Server, SPRING, VACCINATION};
use mlndash::api::{generate_map, MapQuery};
use mlndash_core::mln::{AnalysisConfig, CommunityAllocation};
use serde_json::{json, Value};

fn assert_client_error(resp: &common::Response, status: u16, code: &str) -> String {
    assert_eq!(resp.status, status, "{}", String::from_utf8_lossy(&resp.body));
    let body = resp.json();
    let obj = body.as_object().unwrap();
    assert_eq!(obj.len(), 2, "{body}");
    assert_eq!(obj["error"], code);
    obj["detail"].as_str().unwrap().to_string()
}

#[tokio::test(flavor = "multi_thread")]
async fn ticker_lists_requested_states_then_aggregates() {
    let fx = Fixture::with_size(3);
    let srv = Server::start(fx.config(fx.cache_dir("cache"))).await;

    let rows = srv.get("/api/v1/ticker?states=TX").await.json();
    let regions: Vec<&str> = rows.as_array().unwrap().iter().map(|r| r["region"].as_str().unwrap()).collect();
    assert_eq!(regions, ["TX", "US", "WORLD"]);
    assert!(rows[0]["cases"].as_u64().unwrap() > 0);
    assert!(rows[1]["cases"].as_u64().unwrap() > rows[0]["cases"].as_u64().unwrap());

    let rows = srv.get("/api/v1/ticker").await.json();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    let resp = srv.get("/api/v1/ticker?states=").await;
    assert_eq!(resp.json().as_array().unwrap().len(), 2);

    let detail = assert_client_error(&srv.get("/api/v1/ticker?states=ZZ").await, 400, "unknown_region");
    assert_eq!(detail, "unknown region ZZ");
    assert!(srv.get("/api/v1/ticker?states=TX").await.cache.is_none());
}

#[tokio::test(flavor = "multi_thread")]
async fn articles_are_newest_first_and_capped() {
    let fx = Fixture::with_size(2);
    let srv = Server::start(fx.config(fx.cache_dir("cache"))).await;

    let list = srv.get("/api/v1/articles?period=2020-03-20:2020-04-02").await.json();
    let list = list.as_array().unwrap();
    assert_eq!(list.len(), 10);
    let stamps: Vec<&str> = list.iter().map(|a| a["published"].as_str().unwrap()).collect();
    assert!(stamps.windows(2).all(|w| w[0] >= w[1]));
    assert!(list[0].get("abstract").is_some());

    let all = srv.get("/api/v1/articles?period=2020-03-20:2020-04-02&k=50").await.json();
    assert!(all.as_array().unwrap().len() >= 15);

    let three = srv.get("/api/v1/articles?period=2020-09-20:2020-09-22").await.json();
    assert_eq!(three.as_array().unwrap().len(), 3);
    let later = srv
        .get("/api/v1/articles?pa=2020-03-20:2020-04-02&pb=2020-09-20:2020-09-22")
        .await
        .json();
    assert_eq!(later, three);

    let future = srv.get("/api/v1/articles?period=2030-01-01:2030-12-31").await;
    assert_eq!(future.status, 200);
    assert_eq!(future.json(), json!([]));

    assert_client_error(&srv.get("/api/v1/articles?period=2020-13-01:2020-13-02").await, 400, "invalid_period");
    assert_client_error(&srv.get("/api/v1/articles").await, 400, "missing_parameter");
    assert_client_error(&srv.get("/api/v1/articles?period=2020-03-20:2020-04-02&k=0").await, 400, "invalid_parameter");
}

#[tokio::test(flavor = "multi_thread")]
async fn map_requests_validate_and_memoize() {
    let fx = Fixture::new();
    let srv = Server::start(fx.config(fx.cache_dir("cache"))).await;

    let detail = assert_client_error(
        &srv.get("/api/v1/map?feature=new_cases&pa=2020-02-18:2020-03-02&pb=2020-03-01:2020-03-20").await,
        400,
        "periods_overlap",
    );
    assert_eq!(detail, "periods overlap");
    let detail = assert_client_error(
        &srv.get("/api/v1/map?feature=hospitalizations&pa=2020-02-18:2020-03-02&pb=2020-03-20:2020-04-02").await,
        400,
        "unknown_feature",
    );
    assert!(detail.contains("hospitalizations"));
    assert_client_error(&srv.get("/api/v1/map?feature=new_cases&pa=2020-02-18:2020-03-02").await, 400, "missing_parameter");
    assert_client_error(&srv.get(&format!("/api/v1/map?{SPRING}&extra=1")).await, 400, "unknown_parameter");
    assert_client_error(&srv.get(&format!("/api/v1/map?{SPRING}&feature=new_cases")).await, 400, "invalid_parameter");

    let first = srv.get(&format!("/api/v1/map?{SPRING}")).await;
    assert_eq!((first.status, first.cache.as_deref()), (200, Some("MISS")));
    // Equivalent spellings share one cache entry.
    let second = srv
        .get("/api/v1/map?pb=2020-03-20..2020-04-02&pa=2020-02-18..2020-03-02&feature=NEW_CASES")
        .await;
    assert_eq!(second.cache.as_deref(), Some("HIT"));
    assert_eq!(first.body, second.body);

    let payload = first.json();
    assert_eq!(payload["kind"], "map");
    let counties = payload["counties"].as_array().unwrap();
    assert_eq!(counties.len(), 60);
    assert!(counties[0]["hover"].as_str().unwrap().contains("population density"));
}

#[tokio::test(flavor = "multi_thread")]
async fn map_miss_hands_off_a_configuration_file() {
    let fx = Fixture::with_size(4);
    let cache_dir = fx.cache_dir("cache");
    let srv = Server::start(fx.config(cache_dir.clone())).await;
    assert_eq!(srv.get(&format!("/api/v1/map?{VACCINATION}")).await.status, 200);

    let configs: Vec<_> = std::fs::read_dir(cache_dir.join("analysis")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(configs.len(), 1);
    let config = AnalysisConfig::load(&configs[0]).unwrap();
    assert_eq!(config.expression, "communities(layer(feature, periodA, periodB))");
    assert_eq!(config.seed, 42);

    let out = fx.dir.path().join("alloc.csv");
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_mln"))
        .args(["analyze", "--config"])
        .arg(&configs[0])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let stem = configs[0].file_stem().unwrap().to_str().unwrap().to_string();
    let kept = cache_dir.join("communities").join(format!("{stem}.csv"));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&kept).unwrap());
    assert_eq!(CommunityAllocation::read_csv(&out).unwrap().len(), 24);
}

#[tokio::test(flavor = "multi_thread")]
async fn timeline_requests() {
    let fx = Fixture::with_size(2);
    let srv = Server::start(fx.config(fx.cache_dir("cache"))).await;

    let resp = srv
        .get("/api/v1/timeline?states=TX,CA&left=vaccinations&right=trips&range=2020-12-01:2021-02-28")
        .await;
    assert_eq!(resp.cache.as_deref(), Some("MISS"));
    let p = resp.json();
    assert_eq!(p["dates"].as_array().unwrap().len(), 90);
    for side in ["left", "right"] {
        let series = p[side]["series"].as_object().unwrap();
        assert_eq!(series.keys().collect::<Vec<_>>(), ["CA", "TX"]);
    }
    // Vaccinations start mid-December: earlier days are null.
    assert_eq!(p["left"]["series"]["CA"][0], Value::Null);
    assert!(p["left"]["series"]["CA"][89].as_f64().unwrap() > 0.0);

    let p = srv
        .get("/api/v1/timeline?states=WV&left=new_cases&right=new_tests&range=2020-03-01:2020-04-30")
        .await
        .json();
    assert_eq!(p["left"]["series"].as_object().unwrap().len(), 1);
    assert_eq!(p["right"]["feature"], "new_tests");

    let empty = srv
        .get("/api/v1/timeline?states=WV&left=new_cases&right=trips&range=2030-01-01:2030-01-03")
        .await
        .json();
    assert_eq!(empty["left"]["series"]["WV"], json!([null, null, null]));

    let detail = assert_client_error(
        &srv.get("/api/v1/timeline?states=CA,TX,NY,FL,WA,WV&left=new_cases&right=trips&range=2020-03-01:2020-03-02").await,
        400,
        "too_many_states",
    );
    assert!(detail.contains('6'));
    assert_client_error(
        &srv.get("/api/v1/timeline?states=XX&left=new_cases&right=trips&range=2020-03-01:2020-03-02").await,
        400,
        "unknown_state",
    );
    let detail = assert_client_error(
        &srv.get("/api/v1/timeline?states=TX&left=new_cases&right=hotel_stays&range=2020-03-01:2020-03-02").await,
        400,
        "unknown_feature",
    );
    assert!(detail.contains("hotel_stays"));
    assert_client_error(
        &srv.get("/api/v1/timeline?states=TX,tx&left=new_cases&right=trips&range=2020-03-01:2020-03-02").await,
        400,
        "duplicate_state",
    );
    let again = srv
        .get("/api/v1/timeline?states=CA,TX&left=vaccinations&right=trips&range=2020-12-01:2021-02-28")
        .await;
    assert_eq!(again.cache.as_deref(), Some("HIT"));
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_routes_and_methods_return_json() {
    let fx = Fixture::with_size(1);
    let srv = Server::start(fx.config(fx.cache_dir("cache"))).await;
    assert_client_error(&srv.get("/api/v2/map").await, 404, "not_found");
    assert_client_error(&srv.post("/api/v1/map").await, 405, "method_not_allowed");
    assert_client_error(&srv.post("/admin/invalidate?kind=graph").await, 400, "invalid_parameter");
    let health = srv.get("/healthz").await.json();
    assert_eq!(health["status"], "ok");
}

#[tokio::test(flavor = "multi_thread")]
async fn refresh_rebuilds_only_dependent_files() {
    let fx = Fixture::with_size(2);
    let srv = Server::start(fx.config(fx.cache_dir("cache"))).await;

    let noop = srv.post("/admin/refresh").await.json();
    assert_eq!(noop["reloaded"], false);
    let statuses = |v: &Value| -> Vec<(String, String)> {
        v["report"]["derived"]
            .as_array()
            .unwrap()
            .iter()
            .map(|d| (d["name"].as_str().unwrap().into(), d["status"].as_str().unwrap_or("failed").into()))
            .collect()
    };
    assert!(statuses(&noop).iter().all(|(_, s)| s == "unchanged"));

    let trips = fx.layout.sources_dir.join("D3.csv");
    let mut text = std::fs::read_to_string(&trips).unwrap();
    text.push_str("TX,2021-03-16,1234\n");
    std::fs::write(&trips, text).unwrap();
    let updated = srv.post("/admin/refresh").await.json();
    assert_eq!(updated["reloaded"], true);
    for (name, status) in statuses(&updated) {
        let expected = if name == "states.csv" { "updated" } else { "unchanged" };
        assert_eq!(status, expected, "{name}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn refresh_during_a_map_request_does_not_affect_it() {
    let fx = Fixture::with_size(4);
    let config = fx.config(fx.cache_dir("cache"));

    let (entered_tx, entered_rx) = mpsc::channel::<()>();
    let (release_tx, release_rx) = mpsc::channel::<()>();
    let entered_tx = Mutex::new(entered_tx);
    let release_rx = Mutex::new(release_rx);
    let armed = AtomicBool::new(true);
    let hook = Arc::new(move |_| {
        if armed.swap(false, Ordering::SeqCst) {
            entered_tx.lock().unwrap().send(()).unwrap();
            release_rx.lock().unwrap().recv().unwrap();
        }
    });
    let srv = Arc::new(Server::start_with(config.clone(), Some(hook)).await);

    let query = MapQuery::new("new_cases", "2020-02-18:2020-03-02".parse().unwrap(), "2020-03-20:2020-04-02".parse().unwrap()).unwrap();
    let scratch = tempfile::tempdir().unwrap();
    let before = generate_map(&srv.state.snapshot(), &query, config.default_seed, scratch.path()).unwrap();

    let s = srv.clone();
    let pending = tokio::spawn(async move { s.get(&format!("/api/v1/map?{SPRING}")).await });
    tokio::task::spawn_blocking(move || entered_rx.recv().unwrap()).await.unwrap();

    // Replace the county source with a different synthetic population.
    let other = tempfile::tempdir().unwrap();
    let other_layout = mlndash_core::demo::generate(other.path(), 99, 4).unwrap();
    std::fs::copy(other_layout.sources_dir.join("D6.csv"), fx.layout.sources_dir.join("D6.csv")).unwrap();
    let refreshed = srv.post("/admin/refresh").await.json();
    assert_eq!(refreshed["reloaded"], true);

    release_tx.send(()).unwrap();
    let resp = pending.await.unwrap();
    assert_eq!(resp.cache.as_deref(), Some("MISS"));
    assert_eq!(resp.body, before);

    // Cached results stay until invalidated.
    assert_eq!(srv.get(&format!("/api/v1/map?{SPRING}")).await.cache.as_deref(), Some("HIT"));
    let removed = srv.post("/admin/invalidate?kind=map").await.json();
    assert_eq!(removed["removed"]["map"], 1);
    let fresh = srv.get(&format!("/api/v1/map?{SPRING}")).await;
    assert_eq!(fresh.cache.as_deref(), Some("MISS"));
    let after = generate_map(&srv.state.snapshot(), &query, config.default_seed, scratch.path()).unwrap();
    assert_eq!(fresh.body, after);
    assert_ne!(fresh.body, before);
}
