use blimpswarm::service::{start, ServeOptions, ServiceHandle};
use blimpswarm::world::{Scenario, WorldSetup};
use blimpswarm::World;
use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use std::path::Path;
use std::time::Duration;
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn launch(state: &Path, speed: f64, record: Option<&Path>) -> ServiceHandle {
    let world = World::new(WorldSetup::new(2, 2, Scenario::Delivery, 3), Some(state)).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    start(world, listener, ServeOptions { speed, record: record.map(Path::to_path_buf) }).await.unwrap()
}

async fn connect(h: &ServiceHandle) -> Ws {
    tokio_tungstenite::connect_async(format!("ws://{}", h.addr)).await.unwrap().0
}

async fn next_json(ws: &mut Ws) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("message in time");
        match msg.expect("stream open").expect("frame") {
            Message::Text(t) => return serde_json::from_str(&t).unwrap(),
            Message::Close(_) => panic!("closed"),
            _ => {}
        }
    }
}

/// Reads until `pred` holds, skipping everything else.
async fn wait_for(ws: &mut Ws, mut pred: impl FnMut(&Value) -> bool) -> Value {
    for _ in 0..2000 {
        let v = next_json(ws).await;
        if pred(&v) {
            return v;
        }
    }
    panic!("condition never met");
}

async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::text(v.to_string())).await.unwrap();
}

fn blimp(snap: &Value, id: u64) -> &Value {
    snap["blimps"].as_array().unwrap().iter().find(|b| b["id"] == id).unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn snapshot_shape() {
    let dir = tempfile::tempdir().unwrap();
    let h = launch(dir.path(), 2.0, None).await;
    let mut ws = connect(&h).await;
    let snap = wait_for(&mut ws, |v| v.get("t").is_some()).await;
    for k in ["t", "blimps", "balloons", "hoops"] {
        assert!(snap.get(k).is_some(), "{k}");
    }
    let b = blimp(&snap, 1);
    for k in ["id", "r", "euler", "mode", "carrying", "last_detection"] {
        assert!(b.get(k).is_some(), "{k}");
    }
    for k in ["center", "size", "valid"] {
        assert!(b["last_detection"].get(k).is_some(), "{k}");
    }
    assert_eq!(snap["hoops"].as_array().unwrap().len(), 3);
    assert_eq!(snap["balloons"][0]["state"], "free");
    h.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn set_mode_shows_in_the_next_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let h = launch(dir.path(), 2.0, None).await;
    let mut ws = connect(&h).await;
    send(&mut ws, json!({"set_mode": {"id": 2, "mode": "Manual"}})).await;
    let q = wait_for(&mut ws, |v| v.get("queued").is_some()).await;
    assert_eq!(q["queued"]["command"], "set_mode");
    let snap = wait_for(&mut ws, |v| v.get("t").is_some() && blimp(v, 2)["mode"] == "Manual").await;
    assert_ne!(blimp(&snap, 1)["mode"], "Manual");

    // drive it forward and watch it move
    let start = blimp(&snap, 2)["r"].clone();
    for _ in 0..30 {
        send(&mut ws, json!({"manual": {"id": 2, "forward": 1.0, "yaw_rate": 0.0, "climb": 0.0}})).await;
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    let t0 = snap["t"].as_f64().unwrap();
    let later = wait_for(&mut ws, |v| v.get("t").is_some_and(|t| t.as_f64().unwrap() > t0 + 2.5)).await;
    let end = &blimp(&later, 2)["r"];
    let moved = ((end[0].as_f64().unwrap() - start[0].as_f64().unwrap()).powi(2)
        + (end[1].as_f64().unwrap() - start[1].as_f64().unwrap()).powi(2))
    .sqrt();
    assert!(moved > 0.2, "moved {moved}");
    h.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn param_set_is_acked_and_persisted() {
    let dir = tempfile::tempdir().unwrap();
    let h = launch(dir.path(), 2.0, None).await;
    let mut ws = connect(&h).await;
    send(&mut ws, json!({"param_set": {"id": 1, "key": "ctl.k", "value": 1.0}})).await;
    let ack = wait_for(&mut ws, |v| v.get("ack").is_some()).await;
    assert_eq!(ack["ack"]["id"], 1);
    assert_eq!(ack["ack"]["key"], "ctl.k");
    assert_eq!(ack["ack"]["status"], "Stored");
    let file: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("robot_1.json")).unwrap()).unwrap();
    assert!(file.to_string().contains("\"ctl.k\""), "{file}");

    send(&mut ws, json!({"telemetry_req": {"id": 1, "param": "ctl.k"}})).await;
    let t = wait_for(&mut ws, |v| v.get("telemetry").is_some()).await;
    assert_eq!(t["telemetry"]["telemetry"]["param"]["value"], 1.0);
    h.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn malformed_commands_get_an_error_and_the_session_survives() {
    let dir = tempfile::tempdir().unwrap();
    let h = launch(dir.path(), 2.0, None).await;
    let mut ws = connect(&h).await;
    ws.send(Message::text("{not json")).await.unwrap();
    let e = wait_for(&mut ws, |v| v.get("error").is_some()).await;
    assert!(e["error"]["message"].as_str().unwrap().contains("bad command"));
    send(&mut ws, json!({"launch_rockets": {}})).await;
    wait_for(&mut ws, |v| v.get("error").is_some()).await;
    send(&mut ws, json!({"telemetry_req": {"id": 9}})).await;
    let e = wait_for(&mut ws, |v| v.get("error").is_some()).await;
    assert!(e["error"]["message"].as_str().unwrap().contains("9"));
    send(&mut ws, json!({"telemetry_req": {"id": 2}})).await;
    wait_for(&mut ws, |v| v.get("telemetry").is_some()).await;
    h.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn second_operator_is_refused_until_the_first_leaves() {
    let dir = tempfile::tempdir().unwrap();
    let h = launch(dir.path(), 2.0, None).await;
    let mut first = connect(&h).await;
    wait_for(&mut first, |v| v.get("t").is_some()).await;
    let mut second = connect(&h).await;
    let e = next_json(&mut second).await;
    assert_eq!(e["error"]["message"], "another operator session is active");
    let end = tokio::time::timeout(Duration::from_secs(5), second.next()).await.unwrap();
    assert!(matches!(end, None | Some(Ok(Message::Close(_))) | Some(Err(_))));

    first.close(None).await.unwrap();
    drop(first);
    tokio::time::sleep(Duration::from_millis(300)).await;
    let mut third = connect(&h).await;
    wait_for(&mut third, |v| v.get("t").is_some()).await;
    h.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn stream_is_monotone_without_gaps_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("snapshots.jsonl");
    let h = launch(dir.path(), 1.0, Some(&rec)).await;
    let mut ws = connect(&h).await;
    let mut ts = Vec::new();
    while ts.len() < 25 {
        let v = next_json(&mut ws).await;
        if let Some(t) = v.get("t") {
            ts.push(t.as_f64().unwrap());
        }
    }
    for w in ts.windows(2) {
        let dt = w[1] - w[0];
        assert!(dt > 0.0 && dt <= 0.2 + 1e-9, "{ts:?}");
    }
    h.shutdown().await.unwrap();
    let lines: Vec<f64> = std::fs::read_to_string(&rec)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["t"].as_f64().unwrap())
        .collect();
    assert!(lines.len() >= 25);
    assert!(lines.windows(2).all(|w| w[1] > w[0]));
}
