//! Starts the WebSocket service on a local port, drives one blimp as an
//! operator would, and prints what comes back.

use blimpswarm::service::{start, ServeOptions};
use blimpswarm::world::{Scenario, WorldSetup};
use blimpswarm::World;
use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;

#[tokio::main]
async fn main() {
    let state = tempfile::tempdir().unwrap();
    let world = World::new(WorldSetup::new(2, 4, Scenario::Delivery, 1), Some(state.path())).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let handle = start(world, listener, ServeOptions { speed: 4.0, record: None }).await.unwrap();
    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{}", handle.addr)).await.unwrap();

    let commands = [
        json!({"set_mode": {"id": 1, "mode": "Manual"}}),
        json!({"manual": {"id": 1, "forward": 1.0, "yaw_rate": 0.0, "climb": 0.0}}),
        json!({"param_set": {"id": 1, "key": "ctl.k", "value": 0.8}}),
        json!({"telemetry_req": {"id": 1, "param": "ctl.k"}}),
    ];
    for c in &commands {
        ws.send(Message::text(c.to_string())).await.unwrap();
    }
    let mut snapshots = 0;
    while let Some(Ok(msg)) = ws.next().await {
        let Message::Text(text) = msg else { continue };
        let v: Value = serde_json::from_str(&text).unwrap();
        if v.get("t").is_some() {
            snapshots += 1;
            if snapshots % 10 == 0 {
                let b = &v["blimps"][0];
                println!("t = {:.1}: blimp 1 {} at {}", v["t"], b["mode"], b["r"]);
            }
            if snapshots == 40 {
                break;
            }
        } else {
            println!("reply: {v}");
        }
    }
    drop(ws);
    handle.shutdown().await.unwrap();
}
