use super::codec::{valid_key, AckStatus, Message, Payload, Telemetry, BROADCAST};
use super::CommsError;
use crate::autonomy::Mode;
use crate::control::ManualCommand;
use std::collections::BTreeMap;

pub const MAX_TRIES: u32 = 5;
pub const RETRY_INTERVAL: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub enum StationEvent {
    Ack { robot_id: u16, seq: u32, key: String, value: f32, status: AckStatus },
    Telemetry { robot_id: u16, seq: u32, telemetry: Telemetry },
    /// A parameter write went unacknowledged after every retry.
    ParamTimeout { robot_id: u16, seq: u32, key: String },
}

#[derive(Debug, Clone)]
struct Pending {
    msg: Message,
    tries: u32,
    next_at: f64,
}

/// The central device. Commands are fire-and-forget except parameter
/// writes, which are resent until acknowledged.
#[derive(Debug, Clone, Default)]
pub struct GroundStation {
    next_seq: u32,
    outbox: Vec<Message>,
    pending: BTreeMap<u32, Pending>,
    events: Vec<StationEvent>,
}

impl GroundStation {
    pub fn new() -> Self {
        Self::default()
    }

    fn seq(&mut self) -> u32 {
        self.next_seq = self.next_seq.wrapping_add(1);
        self.next_seq
    }

    fn queue(&mut self, robot_id: u16, payload: Payload) -> u32 {
        let seq = self.seq();
        self.outbox.push(Message { robot_id, seq, payload });
        seq
    }

    pub fn set_param(&mut self, robot_id: u16, key: &str, value: f32) -> Result<u32, CommsError> {
        if !valid_key(key) {
            return Err(CommsError::InvalidKey(key.to_string()));
        }
        let seq = self.seq();
        let msg = Message { robot_id, seq, payload: Payload::ParamSet { key: key.to_string(), value } };
        self.pending.insert(seq, Pending { msg, tries: 0, next_at: f64::NEG_INFINITY });
        Ok(seq)
    }

    pub fn request_telemetry(&mut self, robot_id: u16, param: Option<&str>) -> Result<u32, CommsError> {
        if let Some(k) = param.filter(|k| !valid_key(k)) {
            return Err(CommsError::InvalidKey(k.to_string()));
        }
        Ok(self.queue(robot_id, Payload::TelemetryReq { param: param.map(str::to_string) }))
    }

    pub fn set_mode(&mut self, robot_id: u16, mode: Mode) -> u32 {
        self.queue(robot_id, Payload::ModeCmd(mode))
    }

    pub fn broadcast_mode(&mut self, mode: Mode) -> u32 {
        self.set_mode(BROADCAST, mode)
    }

    pub fn manual(&mut self, robot_id: u16, cmd: ManualCommand) -> u32 {
        let c = cmd.clamped();
        self.queue(
            robot_id,
            Payload::ManualCmd { forward: c.forward as f32, yaw_rate: c.yaw_rate as f32, climb: c.climb as f32 },
        )
    }

    /// Frames to put on the air now, including due retries.
    pub fn poll(&mut self, now: f64) -> Vec<Message> {
        let mut out = std::mem::take(&mut self.outbox);
        let mut expired = Vec::new();
        for (&seq, p) in self.pending.iter_mut() {
            if now + 1e-12 < p.next_at {
                continue;
            }
            if p.tries >= MAX_TRIES {
                expired.push(seq);
                continue;
            }
            p.tries += 1;
            p.next_at = now + RETRY_INTERVAL;
            out.push(p.msg.clone());
        }
        for seq in expired {
            let p = self.pending.remove(&seq).expect("listed above");
            if let Payload::ParamSet { key, .. } = p.msg.payload {
                self.events.push(StationEvent::ParamTimeout { robot_id: p.msg.robot_id, seq, key });
            }
        }
        out
    }

    pub fn receive(&mut self, msg: Message) {
        match msg.payload {
            Payload::ParamAck { key, value, status } => {
                if self.pending.remove(&msg.seq).is_some() {
                    self.events.push(StationEvent::Ack { robot_id: msg.robot_id, seq: msg.seq, key, value, status });
                }
            }
            Payload::TelemetryResp(telemetry) => {
                self.events.push(StationEvent::Telemetry { robot_id: msg.robot_id, seq: msg.seq, telemetry });
            }
            // requests are never addressed to the station
            _ => {}
        }
    }

    pub fn take_events(&mut self) -> Vec<StationEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn pending_writes(&self) -> usize {
        self.pending.len()
    }
}
