//! Wire format.
//!
//! ```text
//! B1 1D | ver | kind | robot_id u16 | seq u32 | len u8 | payload[len] | crc32
//! ```
//!
//! Multi-byte fields are little-endian. The CRC (IEEE) covers everything
//! before it. Decoding accepts only canonical encodings, so any decodable
//! frame re-encodes to the same bytes.

use super::CommsError;
use crate::autonomy::Mode;
use serde::{Deserialize, Serialize};

pub const MAGIC: [u8; 2] = [0xB1, 0x1D];
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 11;
pub const CRC_LEN: usize = 4;
pub const MAX_FRAME: usize = 250;
pub const MAX_PAYLOAD: usize = MAX_FRAME - HEADER_LEN - CRC_LEN;
pub const MAX_KEY_LEN: usize = 16;
pub const BROADCAST: u16 = 0xFFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Kind {
    ParamSet = 1,
    ParamAck = 2,
    TelemetryReq = 3,
    TelemetryResp = 4,
    ModeCmd = 5,
    ManualCmd = 6,
}

impl Kind {
    fn from_u8(v: u8) -> Option<Kind> {
        Some(match v {
            1 => Kind::ParamSet,
            2 => Kind::ParamAck,
            3 => Kind::TelemetryReq,
            4 => Kind::TelemetryResp,
            5 => Kind::ModeCmd,
            6 => Kind::ManualCmd,
            _ => return None,
        })
    }

    /// Kinds a blimp may send.
    pub fn is_reply(self) -> bool {
        matches!(self, Kind::ParamAck | Kind::TelemetryResp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum AckStatus {
    Stored = 0,
    StorageFailure = 1,
    InvalidKey = 2,
    /// Known key, value outside its allowed range.
    InvalidValue = 3,
}

/// A parameter value echoed in a telemetry response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamReading {
    pub key: String,
    pub value: f32,
    pub found: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub h: f32,
    pub psi: f32,
    pub phi: f32,
    pub theta: f32,
    pub battery: f32,
    pub mode: Mode,
    pub det_center: [f32; 2],
    pub det_size: u16,
    pub det_valid: bool,
    pub param: Option<ParamReading>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    ParamSet { key: String, value: f32 },
    ParamAck { key: String, value: f32, status: AckStatus },
    /// Optionally asks for one parameter along with the state.
    TelemetryReq { param: Option<String> },
    TelemetryResp(Telemetry),
    ModeCmd(Mode),
    ManualCmd { forward: f32, yaw_rate: f32, climb: f32 },
}

impl Payload {
    pub fn kind(&self) -> Kind {
        match self {
            Payload::ParamSet { .. } => Kind::ParamSet,
            Payload::ParamAck { .. } => Kind::ParamAck,
            Payload::TelemetryReq { .. } => Kind::TelemetryReq,
            Payload::TelemetryResp(_) => Kind::TelemetryResp,
            Payload::ModeCmd(_) => Kind::ModeCmd,
            Payload::ManualCmd { .. } => Kind::ManualCmd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub robot_id: u16,
    pub seq: u32,
    pub payload: Payload,
}

impl Message {
    pub fn kind(&self) -> Kind {
        self.payload.kind()
    }
}

/// Keys are 1-16 printable ASCII characters, namespaced with dots.
pub fn valid_key(key: &str) -> bool {
    (1..=MAX_KEY_LEN).contains(&key.len())
        && key.bytes().all(|b| b.is_ascii_graphic())
        && key.contains('.')
        && !key.starts_with('.')
        && !key.ends_with('.')
}

fn put_key(out: &mut Vec<u8>, key: &str) -> Result<(), CommsError> {
    if !valid_key(key) {
        return Err(CommsError::InvalidKey(key.to_string()));
    }
    out.push(key.len() as u8);
    out.extend_from_slice(key.as_bytes());
    Ok(())
}

fn put_f32(out: &mut Vec<u8>, v: f32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn encode_payload(p: &Payload, out: &mut Vec<u8>) -> Result<(), CommsError> {
    match p {
        Payload::ParamSet { key, value } => {
            put_key(out, key)?;
            put_f32(out, *value);
        }
        Payload::ParamAck { key, value, status } => {
            put_key(out, key)?;
            put_f32(out, *value);
            out.push(*status as u8);
        }
        Payload::TelemetryReq { param } => {
            if let Some(k) = param {
                put_key(out, k)?;
            }
        }
        Payload::TelemetryResp(t) => {
            for v in [t.h, t.psi, t.phi, t.theta, t.battery] {
                put_f32(out, v);
            }
            out.push(t.mode.code());
            put_f32(out, t.det_center[0]);
            put_f32(out, t.det_center[1]);
            out.extend_from_slice(&t.det_size.to_le_bytes());
            out.push(t.det_valid as u8);
            if let Some(r) = &t.param {
                put_key(out, &r.key)?;
                put_f32(out, r.value);
                out.push(r.found as u8);
            }
        }
        Payload::ModeCmd(m) => out.push(m.code()),
        Payload::ManualCmd { forward, yaw_rate, climb } => {
            for v in [*forward, *yaw_rate, *climb] {
                put_f32(out, v);
            }
        }
    }
    Ok(())
}

pub fn encode(msg: &Message) -> Result<Vec<u8>, CommsError> {
    let mut payload = Vec::new();
    encode_payload(&msg.payload, &mut payload)?;
    if payload.len() > MAX_PAYLOAD {
        return Err(CommsError::FrameTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CRC_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(msg.kind() as u8);
    out.extend_from_slice(&msg.robot_id.to_le_bytes());
    out.extend_from_slice(&msg.seq.to_le_bytes());
    out.push(payload.len() as u8);
    out.extend_from_slice(&payload);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CommsError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(CommsError::MalformedFrame("payload truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CommsError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CommsError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("two bytes")))
    }

    fn f32(&mut self) -> Result<f32, CommsError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn flag(&mut self) -> Result<bool, CommsError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(CommsError::MalformedFrame("flag byte not 0 or 1")),
        }
    }

    fn key(&mut self) -> Result<String, CommsError> {
        let n = self.u8()? as usize;
        let raw = self.take(n)?;
        let key = std::str::from_utf8(raw).map_err(|_| CommsError::MalformedFrame("key not ASCII"))?;
        if !valid_key(key) {
            return Err(CommsError::MalformedFrame("bad parameter key"));
        }
        Ok(key.to_string())
    }

    fn mode(&mut self) -> Result<Mode, CommsError> {
        Mode::from_code(self.u8()?).ok_or(CommsError::MalformedFrame("unknown mode"))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn decode_payload(kind: Kind, bytes: &[u8]) -> Result<Payload, CommsError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let p = match kind {
        Kind::ParamSet => Payload::ParamSet { key: r.key()?, value: r.f32()? },
        Kind::ParamAck => {
            let key = r.key()?;
            let value = r.f32()?;
            let status = match r.u8()? {
                0 => AckStatus::Stored,
                1 => AckStatus::StorageFailure,
                2 => AckStatus::InvalidKey,
                3 => AckStatus::InvalidValue,
                _ => return Err(CommsError::MalformedFrame("unknown ack status")),
            };
            Payload::ParamAck { key, value, status }
        }
        Kind::TelemetryReq => Payload::TelemetryReq { param: if r.done() { None } else { Some(r.key()?) } },
        Kind::TelemetryResp => {
            let (h, psi, phi, theta, battery) = (r.f32()?, r.f32()?, r.f32()?, r.f32()?, r.f32()?);
            let mode = r.mode()?;
            let det_center = [r.f32()?, r.f32()?];
            let det_size = r.u16()?;
            let det_valid = r.flag()?;
            let param = if r.done() {
                None
            } else {
                Some(ParamReading { key: r.key()?, value: r.f32()?, found: r.flag()? })
            };
            Payload::TelemetryResp(Telemetry { h, psi, phi, theta, battery, mode, det_center, det_size, det_valid, param })
        }
        Kind::ModeCmd => Payload::ModeCmd(r.mode()?),
        Kind::ManualCmd => Payload::ManualCmd { forward: r.f32()?, yaw_rate: r.f32()?, climb: r.f32()? },
    };
    if !r.done() {
        return Err(CommsError::MalformedFrame("trailing payload bytes"));
    }
    Ok(p)
}

pub fn decode(bytes: &[u8]) -> Result<Message, CommsError> {
    if bytes.len() < HEADER_LEN + CRC_LEN || bytes.len() > MAX_FRAME {
        return Err(CommsError::MalformedFrame("bad frame length"));
    }
    if bytes[..2] != MAGIC {
        return Err(CommsError::MalformedFrame("bad magic"));
    }
    let len = bytes[10] as usize;
    if bytes.len() != HEADER_LEN + len + CRC_LEN {
        return Err(CommsError::MalformedFrame("length field disagrees with frame"));
    }
    let body = &bytes[..HEADER_LEN + len];
    let crc = u32::from_le_bytes(bytes[HEADER_LEN + len..].try_into().expect("four bytes"));
    if crc32fast::hash(body) != crc {
        return Err(CommsError::MalformedFrame("CRC mismatch"));
    }
    if bytes[2] != VERSION {
        return Err(CommsError::UnsupportedVersion(bytes[2]));
    }
    let kind = Kind::from_u8(bytes[3]).ok_or(CommsError::MalformedFrame("unknown kind"))?;
    let robot_id = u16::from_le_bytes([bytes[4], bytes[5]]);
    let seq = u32::from_le_bytes(bytes[6..10].try_into().expect("four bytes"));
    let payload = decode_payload(kind, &bytes[HEADER_LEN..HEADER_LEN + len])?;
    Ok(Message { robot_id, seq, payload })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_telemetry_request_is_fifteen_bytes() {
        let m = Message { robot_id: 3, seq: 0x0102_0304, payload: Payload::TelemetryReq { param: None } };
        let b = encode(&m).unwrap();
        assert_eq!(b.len(), 2 + 1 + 1 + 2 + 4 + 1 + 4);
        assert_eq!(&b[..11], &[0xB1, 0x1D, 1, 3, 3, 0, 4, 3, 2, 1, 0]);
        assert_eq!(decode(&b).unwrap(), m);
    }

    #[test]
    fn height_is_little_endian_f32() {
        let t = Telemetry {
            h: 10.5,
            psi: 0.0,
            phi: 0.0,
            theta: 0.0,
            battery: 1.0,
            mode: Mode::MoveToGoal,
            det_center: [0.0, 0.0],
            det_size: 0,
            det_valid: false,
            param: None,
        };
        let b = encode(&Message { robot_id: 1, seq: 9, payload: Payload::TelemetryResp(t) }).unwrap();
        assert_eq!(&b[HEADER_LEN..HEADER_LEN + 4], &[0x00, 0x00, 0x28, 0x41]);
        assert_eq!(b[10] as usize, 32);
    }

    #[test]
    fn rejects_bad_keys() {
        for key in ["", "nodot", ".lead", "trail.", "way.too.long.key.x", "sp ace.k"] {
            let m = Message { robot_id: 0, seq: 0, payload: Payload::ParamSet { key: key.into(), value: 1.0 } };
            assert!(matches!(encode(&m), Err(CommsError::InvalidKey(_))), "{key}");
        }
    }

    #[test]
    fn version_checked_after_crc() {
        let m = Message { robot_id: 1, seq: 1, payload: Payload::ModeCmd(Mode::Manual) };
        let mut b = encode(&m).unwrap();
        b[2] = 2;
        let n = b.len();
        let crc = crc32fast::hash(&b[..n - 4]);
        b[n - 4..].copy_from_slice(&crc.to_le_bytes());
        assert_eq!(decode(&b), Err(CommsError::UnsupportedVersion(2)));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let m = Message { robot_id: 1, seq: 1, payload: Payload::ModeCmd(Mode::Manual) };
        let b = encode(&m).unwrap();
        let mut body = b[..b.len() - 4].to_vec();
        body[10] += 1;
        body.push(0);
        let crc = crc32fast::hash(&body);
        body.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(decode(&body), Err(CommsError::MalformedFrame(_))));
    }
}
