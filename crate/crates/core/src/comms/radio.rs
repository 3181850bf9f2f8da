use super::codec::{decode, Kind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Endpoint {
    Station,
    Blimp(u16),
}

/// Distance-dependent loss, fixed latency and a shared airtime budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct RadioModel {
    /// Loss starts rising here, m.
    pub loss_onset: f64,
    /// Loss reaches 1 here, m.
    pub max_range: f64,
    pub latency: f64,
    /// Aggregate channel rate, bit/s.
    pub bandwidth: f64,
    /// Frames are dropped when the channel is already booked this far ahead, s.
    pub max_backlog: f64,
}

impl Default for RadioModel {
    fn default() -> Self {
        Self { loss_onset: 100.0, max_range: 480.0, latency: 0.005, bandwidth: 512_000.0, max_backlog: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delivery {
    Delivered { at: f64 },
    Dropped,
}

impl RadioModel {
    pub fn validate(&self) -> Result<(), String> {
        let finite = [self.loss_onset, self.max_range, self.latency, self.bandwidth, self.max_backlog].iter().all(|v| v.is_finite());
        if !finite || self.loss_onset < 0.0 || self.max_range <= self.loss_onset || self.latency < 0.0 || self.bandwidth <= 0.0 || self.max_backlog < 0.0 {
            return Err("radio needs 0 <= loss_onset < max_range, latency >= 0, bandwidth > 0".into());
        }
        Ok(())
    }

    pub fn loss_probability(&self, distance: f64) -> f64 {
        ((distance - self.loss_onset) / (self.max_range - self.loss_onset)).clamp(0.0, 1.0)
    }

    /// One Bernoulli trial for a frame sent at `now` over `distance`.
    pub fn deliver<R: Rng>(&self, now: f64, distance: f64, rng: &mut R) -> Delivery {
        if rng.gen::<f64>() < self.loss_probability(distance) {
            Delivery::Dropped
        } else {
            Delivery::Delivered { at: now + self.latency }
        }
    }

    pub fn airtime(&self, bytes: usize) -> f64 {
        (bytes * 8) as f64 / self.bandwidth
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InFlight {
    pub arrive_at: f64,
    pub from: Endpoint,
    pub to: Endpoint,
    pub bytes: Vec<u8>,
}

/// The shared channel. Frames go out in the order they are sent; each one
/// occupies the channel for its airtime and arrives `latency` after it
/// starts transmitting.
#[derive(Debug, Clone)]
pub struct Radio {
    pub model: RadioModel,
    rng: ChaCha8Rng,
    busy_until: f64,
    queue: VecDeque<InFlight>,
    pub sent: u64,
    pub dropped: u64,
}

impl Radio {
    pub fn new(model: RadioModel, seed: u64) -> Self {
        Self { model, rng: ChaCha8Rng::seed_from_u64(seed), busy_until: f64::NEG_INFINITY, queue: VecDeque::new(), sent: 0, dropped: 0 }
    }

    pub fn send(&mut self, now: f64, from: Endpoint, to: Endpoint, bytes: Vec<u8>, distance: f64) -> Delivery {
        self.sent += 1;
        let start = now.max(self.busy_until);
        if start - now > self.model.max_backlog {
            self.dropped += 1;
            return Delivery::Dropped;
        }
        self.busy_until = start + self.model.airtime(bytes.len());
        let outcome = self.model.deliver(start, distance, &mut self.rng);
        match outcome {
            Delivery::Delivered { at } => self.queue.push_back(InFlight { arrive_at: at, from, to, bytes }),
            Delivery::Dropped => self.dropped += 1,
        }
        outcome
    }

    /// Frames due by `now`, in send order.
    pub fn drain(&mut self, now: f64) -> Vec<InFlight> {
        let mut out = Vec::new();
        while self.queue.front().is_some_and(|f| f.arrive_at <= now + 1e-12) {
            out.push(self.queue.pop_front().expect("front checked"));
        }
        out
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }
}

/// One observed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CapturedFrame {
    pub time: f64,
    pub from: Endpoint,
    pub to: Endpoint,
    pub bytes: Vec<u8>,
}

/// Watches the channel and flags any blimp transmission that is not a reply
/// to a request it received.
#[derive(Debug, Clone, Default)]
pub struct TrafficMonitor {
    requests: HashSet<(u16, u32, Kind)>,
    pub violations: Vec<String>,
    pub capture: Option<Vec<CapturedFrame>>,
    pub replies: u64,
}

impl TrafficMonitor {
    pub fn capturing() -> Self {
        Self { capture: Some(Vec::new()), ..Self::default() }
    }

    /// Called when a blimp receives a frame.
    pub fn on_receive(&mut self, blimp: u16, bytes: &[u8]) {
        if let Ok(m) = decode(bytes) {
            self.requests.insert((blimp, m.seq, m.kind()));
        }
    }

    /// Called for every transmission.
    pub fn on_send(&mut self, time: f64, from: Endpoint, to: Endpoint, bytes: &[u8]) {
        if let Some(c) = &mut self.capture {
            c.push(CapturedFrame { time, from, to, bytes: bytes.to_vec() });
        }
        let Endpoint::Blimp(id) = from else {
            return;
        };
        let m = match decode(bytes) {
            Ok(m) => m,
            Err(e) => {
                self.violations.push(format!("blimp {id} sent an undecodable frame: {e}"));
                return;
            }
        };
        let request = match m.kind() {
            Kind::ParamAck => Kind::ParamSet,
            Kind::TelemetryResp => Kind::TelemetryReq,
            k => {
                self.violations.push(format!("blimp {id} originated {k:?} seq {}", m.seq));
                return;
            }
        };
        if to != Endpoint::Station || !self.requests.contains(&(id, m.seq, request)) {
            self.violations.push(format!("blimp {id} sent unsolicited {:?} seq {}", m.kind(), m.seq));
        } else {
            self.replies += 1;
        }
    }
}
