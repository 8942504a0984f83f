mod common;

use mobiliscope::client::{Client, ClientError};
use mobiliscope::server::{serve, AppState};
use serde_json::Value;
use tokio::sync::oneshot;

use common::*;

/// Runs the router on an ephemeral port in a background runtime.
struct Running {
    url: String,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
    _dir: tempfile::TempDir,
}

impl Drop for Running {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            t.join().unwrap();
        }
    }
}

fn start(token: Option<&str>, corpus_traces: usize) -> Running {
    let dir = tempfile::tempdir().unwrap();
    let keys = fixed_keys();
    let svc = service(dir.path(), &keys);
    for e in suite("default", SEED).iter().take(corpus_traces) {
        svc.ingest_bytes(&seal(e, &keys)).unwrap();
    }
    let state = AppState {
        ingest: svc,
        zones: ["WEST", "CENTRE", "EAST"].map(String::from).to_vec(),
        token: token.map(str::to_owned),
    };
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        tokio::runtime::Runtime::new().unwrap().block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            addr_tx.send(listener.local_addr().unwrap()).unwrap();
            serve(listener, state, async {
                let _ = stop_rx.await;
            })
            .await
            .unwrap();
        })
    });
    let addr = addr_rx.recv().unwrap();
    Running { url: format!("http://{addr}"), stop: Some(stop_tx), thread: Some(thread), _dir: dir }
}

fn get(c: &Client, path: &str, pairs: &[(&str, &str)]) -> Result<Value, ClientError> {
    let params: Vec<(String, String)> = pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    c.get(path, &params).map(|b| serde_json::from_str(&b).unwrap())
}

fn status(r: Result<Value, ClientError>) -> (u16, Value) {
    match r {
        Err(ClientError::Http { status, body }) => (status, serde_json::from_str(&body).unwrap()),
        other => panic!("expected HTTP error, got {other:?}"),
    }
}

#[test]
fn records_paginate_with_cursor() {
    let srv = start(None, 12);
    let c = Client::new(&srv.url, None);
    let mut seen = Vec::new();
    let mut cursor: Option<String> = None;
    loop {
        let mut q = vec![("limit", "5")];
        if let Some(cur) = &cursor {
            q.push(("cursor", cur.as_str()));
        }
        let page = get(&c, "/v1/records", &q).unwrap();
        for r in page["items"].as_array().unwrap() {
            seen.push((r["date"].as_str().unwrap().to_owned(), r["pseudonym"].as_str().unwrap().to_owned()));
        }
        match page["next_cursor"].as_str() {
            Some(n) => cursor = Some(n.to_owned()),
            None => break,
        }
    }
    assert_eq!(seen.len(), 12);
    let mut sorted = seen.clone();
    sorted.sort();
    assert_eq!(seen, sorted);

    let day = get(&c, "/v1/records", &[("from", "2026-03-03"), ("to", "2026-03-03")]).unwrap();
    assert_eq!(day["items"].as_array().unwrap().len(), 2);

    let (code, body) = status(get(&c, "/v1/records", &[("cursor", "abc")]));
    assert_eq!((code, body["error"].as_str().unwrap()), (400, "bad_cursor"));
    let (code, _) = status(get(&c, "/v1/analytics/trips", &[("cursor", "-1")]));
    assert_eq!(code, 400);
}

#[test]
fn analytics_endpoints_answer_with_documented_fields() {
    let srv = start(None, 16);
    let c = Client::new(&srv.url, None);
    let split = get(&c, "/v1/analytics/modal-split", &[]).unwrap();
    for key in ["segment_count", "total_distance_m", "modes"] {
        assert!(split.get(key).is_some(), "{key}");
    }
    for key in ["segment_count", "total_distance_m", "share", "count_share"] {
        assert!(split["modes"]["WALK"].get(key).is_some(), "{key}");
    }
    let od = get(&c, "/v1/analytics/od", &[("zones", "EAST,WEST")]).unwrap();
    assert_eq!(od["zones"], serde_json::json!(["EAST", "WEST"]));
    assert_eq!(od["cells"].as_array().unwrap().len(), 2);
    let carbon = get(&c, "/v1/analytics/carbon", &[("modes", "BUS")]).unwrap();
    assert!(carbon["total_g"].as_f64().unwrap() > 0.0);
    assert_eq!(carbon["by_mode"].as_object().unwrap().keys().collect::<Vec<_>>(), ["BUS"]);
    let routes = get(&c, "/v1/analytics/routes", &[("min_support", "1")]).unwrap();
    assert!(!routes.as_array().unwrap().is_empty());

    let (code, body) = status(get(&c, "/v1/analytics/od", &[("zones", "MARS")]));
    assert_eq!(code, 400);
    assert!(body["message"].as_str().unwrap().contains("MARS"));
    let (code, _) = status(get(&c, "/v1/analytics/trips", &[("limit", "501")]));
    assert_eq!(code, 400);
    let (code, _) = status(get(&c, "/v1/analytics/carbon", &[("colour", "blue")]));
    assert_eq!(code, 400);
}

#[test]
fn trips_hide_pseudonyms_unless_requested() {
    let srv = start(None, 16);
    let c = Client::new(&srv.url, None);
    let raw = c.get("/v1/analytics/trips", &[("limit".into(), "500".into())]).unwrap();
    let all: Value = serde_json::from_str(&raw).unwrap();
    assert!(all["items"].as_array().unwrap().iter().all(|t| t.get("pseudonym").is_none()));
    let records = get(&c, "/v1/records", &[("limit", "1")]).unwrap();
    let p = records["items"][0]["pseudonym"].as_str().unwrap().to_owned();
    for path in ["/v1/analytics/modal-split", "/v1/analytics/od", "/v1/analytics/carbon", "/v1/analytics/routes"] {
        assert!(!c.get(path, &[]).unwrap().contains(&p), "{path}");
    }
    assert!(!raw.contains(&p));
    let mine = get(&c, "/v1/analytics/trips", &[("pseudonym", &p)]).unwrap();
    let items = mine["items"].as_array().unwrap();
    assert!(!items.is_empty());
    assert!(items.iter().all(|t| t["pseudonym"] == p.as_str()));
}

#[test]
fn upload_status_codes() {
    let srv = start(None, 0);
    let c = Client::new(&srv.url, None);
    let keys = fixed_keys();
    let e = &suite("default", SEED)[1];
    let env = seal(e, &keys);
    let ok: Value = serde_json::from_str(&c.upload(&env).unwrap()).unwrap();
    assert_eq!(ok["duplicate"], false);
    let again: Value = serde_json::from_str(&c.upload(&env).unwrap()).unwrap();
    assert_eq!(again["duplicate"], true);

    let status_of = |bytes: &[u8]| match c.upload(bytes) {
        Err(ClientError::Http { status, body }) => {
            (status, serde_json::from_str::<Value>(&body).unwrap()["error"].as_str().unwrap().to_owned())
        }
        other => panic!("{other:?}"),
    };
    assert_eq!(status_of(b"junk"), (400, "malformed_envelope".into()));
    let mut flipped = env.clone();
    flipped[30] ^= 1;
    assert_eq!(status_of(&flipped).0, 401);
    let other = mobiliscope::privacy::KeyRing::generate(9);
    let foreign = seal(e, &other);
    assert_eq!(status_of(&foreign), (401, "unknown_key".into()));
}

#[test]
fn token_guards_every_route() {
    let srv = start(Some("tok"), 0);
    let anon = Client::new(&srv.url, None);
    for path in ["/v1/records", "/v1/analytics/modal-split"] {
        let (code, _) = status(get(&anon, path, &[]));
        assert_eq!(code, 401);
    }
    assert!(matches!(anon.upload(b"x"), Err(ClientError::Http { status: 401, .. })));
    let wrong = Client::new(&srv.url, Some("nope".into()));
    assert!(matches!(get(&wrong, "/v1/records", &[]), Err(ClientError::Http { status: 401, .. })));
    let good = Client::new(&srv.url, Some("tok".into()));
    assert!(get(&good, "/v1/records", &[]).is_ok());
}
