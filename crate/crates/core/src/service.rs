//! The live operator endpoint.
//!
//! The world runs on its own thread at a fixed wall-clock cadence. Every
//! 100 ms it applies queued operator commands through the ground station, so
//! they reach the blimps over the simulated radio exactly like any other
//! traffic, advances `0.1 * speed` simulated seconds and publishes a snapshot.
//!
//! Wire format, one JSON object per WebSocket text message.
//!
//! Client to server:
//! ```json
//! {"set_mode": {"id": 2, "mode": "Manual"}}
//! {"manual": {"id": 2, "forward": 0.5, "yaw_rate": 0.0, "climb": 0.0}}
//! {"param_set": {"id": 2, "key": "ctl.k", "value": 1.0}}
//! {"telemetry_req": {"id": 2, "param": "ctl.k"}}
//! ```
//! `set_mode` without an `id` is broadcast to every blimp.
//!
//! Server to client: snapshots `{"t", "blimps", "balloons", "hoops"}`, and
//! tagged replies `{"queued": ..}`, `{"ack": ..}`, `{"telemetry": ..}`,
//! `{"param_timeout": ..}` and `{"error": {"message": ..}}`.

use crate::autonomy::Mode;
use crate::comms::{AckStatus, StationEvent, Telemetry};
use crate::control::ManualCommand;
use crate::world::{World, WorldError, DT};
use futures_util::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc};
use tokio_tungstenite::tungstenite::Message as WsMessage;

/// Snapshot period, simulated seconds at speed 1.
pub const PERIOD: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("speed must be positive and finite")]
    BadSpeed,
    #[error("simulation thread panicked")]
    Panicked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    SetMode {
        #[serde(default)]
        id: Option<u16>,
        mode: Mode,
    },
    Manual { id: u16, forward: f64, yaw_rate: f64, climb: f64 },
    ParamSet { id: u16, key: String, value: f32 },
    TelemetryReq {
        id: u16,
        #[serde(default)]
        param: Option<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SetMode { .. } => "set_mode",
            Command::Manual { .. } => "manual",
            Command::ParamSet { .. } => "param_set",
            Command::TelemetryReq { .. } => "telemetry_req",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reply {
    /// The command went out over the radio with this sequence number.
    Queued { command: String, seq: u32 },
    Ack { id: u16, seq: u32, key: String, value: f32, status: AckStatus },
    Telemetry { id: u16, seq: u32, telemetry: Telemetry },
    ParamTimeout { id: u16, seq: u32, key: String },
    Error(ErrorReply),
}

impl Reply {
    pub fn error(message: impl Into<String>) -> Self {
        Reply::Error(ErrorReply { message: message.into() })
    }

    fn json(&self) -> String {
        serde_json::to_string(self).expect("replies serialize")
    }
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Simulated seconds per wall second.
    pub speed: f64,
    /// JSONL file receiving every published snapshot.
    pub record: Option<PathBuf>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { speed: 1.0, record: None }
    }
}

type Queued = (Command, mpsc::UnboundedSender<String>);

/// A running service; dropping it leaves the threads running until
/// [`ServiceHandle::shutdown`].
pub struct ServiceHandle {
    pub addr: SocketAddr,
    stop: Arc<AtomicBool>,
    sim: std::thread::JoinHandle<Result<(), ServiceError>>,
    accept: tokio::task::JoinHandle<()>,
}

impl ServiceHandle {
    pub async fn shutdown(self) -> Result<(), ServiceError> {
        self.stop.store(true, Ordering::SeqCst);
        self.accept.abort();
        tokio::task::spawn_blocking(move || self.sim.join()).await.map_err(|_| ServiceError::Panicked)?.map_err(|_| ServiceError::Panicked)?
    }

    /// Waits until the simulation stops on its own, which only happens on a
    /// world error.
    pub async fn wait(self) -> Result<(), ServiceError> {
        let r = tokio::task::spawn_blocking(move || self.sim.join()).await.map_err(|_| ServiceError::Panicked)?;
        self.accept.abort();
        r.map_err(|_| ServiceError::Panicked)?
    }
}

/// Starts the simulation thread and the WebSocket listener.
pub async fn start(world: World, listener: TcpListener, opts: ServeOptions) -> Result<ServiceHandle, ServiceError> {
    if !(opts.speed.is_finite() && opts.speed > 0.0) {
        return Err(ServiceError::BadSpeed);
    }
    let addr = listener.local_addr()?;
    let record = match &opts.record {
        Some(p) => Some(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => None,
    };
    let (out_tx, _) = broadcast::channel::<Arc<str>>(256);
    let (cmd_tx, cmd_rx) = mpsc::unbounded_channel::<Queued>();
    let stop = Arc::new(AtomicBool::new(false));
    let sim = {
        let (out_tx, stop) = (out_tx.clone(), stop.clone());
        std::thread::Builder::new()
            .name("sim".into())
            .spawn(move || run_world(world, opts.speed, record, cmd_rx, out_tx, stop))?
    };
    let busy = Arc::new(AtomicBool::new(false));
    let accept = tokio::spawn(async move {
        loop {
            let Ok((stream, peer)) = listener.accept().await else {
                continue;
            };
            let (out_rx, cmd_tx, busy) = (out_tx.subscribe(), cmd_tx.clone(), busy.clone());
            tokio::spawn(async move {
                if let Err(e) = session(stream, out_rx, cmd_tx, busy).await {
                    log::debug!("session {peer} ended: {e}");
                }
            });
        }
    });
    Ok(ServiceHandle { addr, stop, sim, accept })
}

/// Binds `addr` and serves until the simulation fails.
pub async fn serve(world: World, addr: &str, opts: ServeOptions) -> Result<(), ServiceError> {
    let listener = TcpListener::bind(addr).await?;
    let handle = start(world, listener, opts).await?;
    log::info!("serving on ws://{}", handle.addr);
    handle.wait().await
}

struct Occupied(Arc<AtomicBool>);

impl Drop for Occupied {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

async fn session(
    stream: TcpStream,
    mut out_rx: broadcast::Receiver<Arc<str>>,
    cmd_tx: mpsc::UnboundedSender<Queued>,
    busy: Arc<AtomicBool>,
) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let mut ws = tokio_tungstenite::accept_async(stream).await?;
    if busy.swap(true, Ordering::SeqCst) {
        let msg = Reply::error("another operator session is active").json();
        ws.send(WsMessage::text(msg)).await?;
        return ws.close(None).await;
    }
    let _occupied = Occupied(busy);
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<String>();
    loop {
        tokio::select! {
            incoming = ws.next() => {
                let Some(incoming) = incoming else { return Ok(()) };
                match incoming? {
                    WsMessage::Text(text) => match serde_json::from_str::<Command>(&text) {
                        Ok(cmd) => {
                            if cmd_tx.send((cmd, reply_tx.clone())).is_err() {
                                ws.send(WsMessage::text(Reply::error("simulation stopped").json())).await?;
                                return ws.close(None).await;
                            }
                        }
                        Err(e) => ws.send(WsMessage::text(Reply::error(format!("bad command: {e}")).json())).await?,
                    },
                    WsMessage::Binary(_) => ws.send(WsMessage::text(Reply::error("expected a JSON text message").json())).await?,
                    WsMessage::Close(_) => return Ok(()),
                    _ => {}
                }
            }
            reply = reply_rx.recv() => {
                if let Some(r) = reply {
                    ws.send(WsMessage::text(r)).await?;
                }
            }
            out = out_rx.recv() => match out {
                Ok(text) => ws.send(WsMessage::text(text.to_string())).await?,
                Err(broadcast::error::RecvError::Lagged(_)) => {}
                Err(broadcast::error::RecvError::Closed) => return ws.close(None).await,
            },
        }
    }
}

/// Hands one operator command to the ground station.
pub fn apply_command(world: &mut World, cmd: &Command) -> Reply {
    let known = |world: &World, id: u16| world.blimp(id).is_some();
    let seq = match cmd {
        Command::SetMode { id: None, mode } => Ok(world.station.broadcast_mode(*mode)),
        Command::SetMode { id: Some(id), mode } if known(world, *id) => Ok(world.station.set_mode(*id, *mode)),
        Command::Manual { id, forward, yaw_rate, climb } if known(world, *id) => {
            let m = ManualCommand { forward: *forward, yaw_rate: *yaw_rate, climb: *climb };
            if [m.forward, m.yaw_rate, m.climb].iter().all(|v| v.is_finite()) {
                Ok(world.station.manual(*id, m))
            } else {
                Err("manual command values must be finite".to_string())
            }
        }
        Command::ParamSet { id, key, value } if known(world, *id) => {
            world.station.set_param(*id, key, *value).map_err(|e| e.to_string())
        }
        Command::TelemetryReq { id, param } if known(world, *id) => {
            world.station.request_telemetry(*id, param.as_deref()).map_err(|e| e.to_string())
        }
        Command::SetMode { id: Some(id), .. }
        | Command::Manual { id, .. }
        | Command::ParamSet { id, .. }
        | Command::TelemetryReq { id, .. } => Err(format!("no blimp with id {id}")),
    };
    match seq {
        Ok(seq) => Reply::Queued { command: cmd.name().to_string(), seq },
        Err(e) => Reply::error(e),
    }
}

fn event_reply(e: StationEvent) -> Reply {
    match e {
        StationEvent::Ack { robot_id, seq, key, value, status } => Reply::Ack { id: robot_id, seq, key, value, status },
        StationEvent::Telemetry { robot_id, seq, telemetry } => Reply::Telemetry { id: robot_id, seq, telemetry },
        StationEvent::ParamTimeout { robot_id, seq, key } => Reply::ParamTimeout { id: robot_id, seq, key },
    }
}

fn run_world(
    mut world: World,
    speed: f64,
    mut record: Option<std::io::BufWriter<std::fs::File>>,
    mut cmd_rx: mpsc::UnboundedReceiver<Queued>,
    out_tx: broadcast::Sender<Arc<str>>,
    stop: Arc<AtomicBool>,
) -> Result<(), ServiceError> {
    let start = Instant::now();
    let t0 = world.time();
    let mut period = 0u64;
    while !stop.load(Ordering::SeqCst) {
        while let Ok((cmd, reply)) = cmd_rx.try_recv() {
            let _ = reply.send(apply_command(&mut world, &cmd).json());
        }
        period += 1;
        let target = t0 + period as f64 * PERIOD * speed;
        while world.time() + 0.5 * DT < target {
            world.tick()?;
        }
        for e in world.station.take_events() {
            let _ = out_tx.send(Arc::from(event_reply(e).json()));
        }
        let snap = serde_json::to_string(&world.snapshot()).expect("snapshots serialize");
        if let Some(w) = record.as_mut() {
            writeln!(w, "{snap}")?;
            w.flush()?;
        }
        let _ = out_tx.send(Arc::from(snap));
        let due = start + Duration::from_secs_f64(period as f64 * PERIOD);
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Scenario, WorldSetup};

    #[test]
    fn command_shapes() {
        let c: Command = serde_json::from_str(r#"{"set_mode": {"id": 2, "mode": "Manual"}}"#).unwrap();
        assert_eq!(c, Command::SetMode { id: Some(2), mode: Mode::Manual });
        let c: Command = serde_json::from_str(r#"{"set_mode": {"mode": "RandomWalk"}}"#).unwrap();
        assert_eq!(c, Command::SetMode { id: None, mode: Mode::RandomWalk });
        let c: Command = serde_json::from_str(r#"{"manual": {"id": 1, "forward": 0.5, "yaw_rate": 0, "climb": -0.2}}"#).unwrap();
        assert_eq!(c, Command::Manual { id: 1, forward: 0.5, yaw_rate: 0.0, climb: -0.2 });
        let c: Command = serde_json::from_str(r#"{"param_set": {"id": 3, "key": "ctl.k", "value": 1.0}}"#).unwrap();
        assert_eq!(c, Command::ParamSet { id: 3, key: "ctl.k".into(), value: 1.0 });
        let c: Command = serde_json::from_str(r#"{"telemetry_req": {"id": 3}}"#).unwrap();
        assert_eq!(c, Command::TelemetryReq { id: 3, param: None });
        assert!(serde_json::from_str::<Command>(r#"{"launch": {"id": 3}}"#).is_err());
    }

    #[test]
    fn error_shape() {
        let v: serde_json::Value = serde_json::from_str(&Reply::error("nope").json()).unwrap();
        assert_eq!(v, serde_json::json!({"error": {"message": "nope"}}));
    }

    #[test]
    fn commands_for_missing_blimps_are_refused() {
        let mut w = World::new(WorldSetup::new(2, 0, Scenario::Pickup, 1), None).unwrap();
        assert!(matches!(apply_command(&mut w, &Command::TelemetryReq { id: 3, param: None }), Reply::Error(_)));
        assert!(matches!(apply_command(&mut w, &Command::TelemetryReq { id: 2, param: None }), Reply::Queued { .. }));
        let bad = Command::ParamSet { id: 1, key: "no spaces allowed".into(), value: 1.0 };
        assert!(matches!(apply_command(&mut w, &bad), Reply::Error(_)));
    }
}
